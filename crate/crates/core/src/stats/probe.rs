use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::activations::ActivationSet;
use crate::error::{Error, Result};
use crate::nets::{accuracy, train, FeedforwardNet, LabeledDataset, Nonlinearity, TrainConfig};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeSplit {
    /// Accuracy on samples the probe was not trained on.
    HeldOut,
    /// Accuracy on the training samples.
    Train,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub train: TrainConfig,
    pub split: ProbeSplit,
    /// Fraction of samples held out when `split` is [`ProbeSplit::HeldOut`].
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig {
                epochs: 50,
                batch_size: 64,
                ..TrainConfig::default()
            },
            split: ProbeSplit::HeldOut,
            holdout_fraction: 0.25,
            seed: 0,
        }
    }
}

/// Deterministic `(train, held_out)` partition of `0..n`, both sorted.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Argument(format!(
            "holdout fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let held = ((n as f64) * fraction).round() as usize;
    if held == 0 || held == n {
        return Err(Error::Argument(format!(
            "cannot hold out {fraction} of {n} samples"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::rng(seed));
    let mut test = idx.split_off(n - held);
    idx.sort_unstable();
    test.sort_unstable();
    Ok((idx, test))
}

/// Accuracy of a bias-included linear classifier trained on the
/// position-mean-pooled activations.
pub fn linear_probe(acts: &ActivationSet, labels: &[usize], cfg: &ProbeConfig) -> Result<f64> {
    if labels.len() != acts.samples() {
        return Err(Error::Shape(format!(
            "{} labels for {} samples",
            labels.len(),
            acts.samples()
        )));
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::Degenerate(
            "probe labels contain a single class".into(),
        ));
    }
    let data = LabeledDataset::new(acts.pooled(), labels.to_vec(), num_classes)?;
    let (fit, eval) = match cfg.split {
        ProbeSplit::HeldOut => {
            let (tr, te) = holdout_split(
                data.len(),
                cfg.holdout_fraction,
                rng::derive_seed(cfg.seed, &[1]),
            )?;
            (data.subset(&tr), data.subset(&te))
        }
        ProbeSplit::Train => (data.clone(), data),
    };
    let mut probe = FeedforwardNet::init(
        &[fit.dim(), num_classes],
        Nonlinearity::Identity,
        rng::derive_seed(cfg.seed, &[0]),
    )?;
    let tcfg = TrainConfig {
        seed: rng::derive_seed(cfg.seed, &[2]),
        ..cfg.train.clone()
    };
    train(&mut probe, &fit, &tcfg)?;
    accuracy(&probe, &eval)
}
