//! Energy-based out-of-distribution scoring of layer representations.
//!
//! A detector is a classifier over (position-pooled) activations of one layer.
//! It is first trained on in-distribution activations with cross-entropy and
//! then fine-tuned with an added squared-hinge penalty that pushes ID energies
//! below `m_in` and auxiliary OOD energies above `m_out`. The energy of a
//! sample is the negative log-sum-exp of its logits.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::activations::ActivationSet;
use crate::error::{Error, Result};
use crate::nets::{
    apply_grads, block_sizes, read_checkpoint, softmax_cross_entropy, train, write_checkpoint,
    EpochStats, FeedforwardNet, LabeledDataset, Nonlinearity, Optimizer, TrainConfig, TrainLog,
};
use crate::numerics::Matrix;
use crate::rng;

/// Margins used for CIFAR-scale classifiers.
pub const CIFAR_M_IN: f64 = -25.0;
pub const CIFAR_M_OUT: f64 = -7.0;
/// Margins bracketing the energy range of the toy detectors.
pub const TOY_M_IN: f64 = -7.0;
pub const TOY_M_OUT: f64 = -3.0;
pub const DEFAULT_LAMBDA: f64 = 0.1;

/// `−log Σ_j exp(logit_j)`, max-shifted.
pub fn energy_score(logits: &[f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|v| (v - max).exp()).sum();
    -(max + sum.ln())
}

/// Mean over ID samples of `max(0, e − m_in)²` plus mean over OOD samples of
/// `max(0, m_out − e)²`.
pub fn energy_margin_loss(e_in: &[f64], e_out: &[f64], m_in: f64, m_out: f64) -> f64 {
    let mean = |v: &[f64], f: &dyn Fn(f64) -> f64| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().map(|&e| f(e)).sum::<f64>() / v.len() as f64
        }
    };
    mean(e_in, &|e| (e - m_in).max(0.0).powi(2)) + mean(e_out, &|e| (m_out - e).max(0.0).powi(2))
}

/// [`energy_margin_loss`] evaluated on logits, with its gradient with respect
/// to the ID and OOD logits.
pub fn energy_margin_loss_and_grad(
    logits_in: &Matrix,
    logits_out: &Matrix,
    m_in: f64,
    m_out: f64,
) -> (f64, Matrix, Matrix) {
    // d energy / d logits = −softmax(logits)
    let side = |logits: &Matrix, hinge: &dyn Fn(f64) -> (f64, f64)| {
        let n = logits.rows().max(1) as f64;
        let mut grad = Matrix::zeros(logits.rows(), logits.cols());
        let mut loss = 0.0;
        for r in 0..logits.rows() {
            let row = logits.row(r);
            let e = energy_score(row);
            let (l, dl_de) = hinge(e);
            loss += l;
            for (g, &z) in grad.row_mut(r).iter_mut().zip(row) {
                *g = dl_de * -((z + e).exp()) / n;
            }
        }
        (loss / n, grad)
    };
    let (l_in, g_in) = side(logits_in, &|e| {
        let h = (e - m_in).max(0.0);
        (h * h, 2.0 * h)
    });
    let (l_out, g_out) = side(logits_out, &|e| {
        let h = (m_out - e).max(0.0);
        (h * h, -2.0 * h)
    });
    (l_in + l_out, g_in, g_out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyDetector {
    pub net: FeedforwardNet,
    pub m_in: f64,
    pub m_out: f64,
    pub lambda: f64,
    /// Layer of the analysed network whose activations this detector reads.
    pub source_layer: Option<usize>,
    /// Per-channel standardization applied before `net`: `(x − center) / scale`.
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl EnergyDetector {
    pub fn new(net: FeedforwardNet, m_in: f64, m_out: f64, lambda: f64) -> Result<Self> {
        if !(m_in < m_out) {
            return Err(Error::Argument(format!(
                "energy margins need m_in < m_out, got {m_in} and {m_out}"
            )));
        }
        if !(lambda >= 0.0) {
            return Err(Error::Argument(format!(
                "lambda must be non-negative, got {lambda}"
            )));
        }
        let c = net.width(0);
        Ok(Self {
            net,
            m_in,
            m_out,
            lambda,
            source_layer: None,
            center: vec![0.0; c],
            scale: vec![1.0; c],
        })
    }

    /// Standardize with the mean and standard deviation of `reference`'s
    /// columns; constant columns keep scale 1.
    pub fn fit_standardization(&mut self, reference: &Matrix) -> Result<()> {
        if reference.cols() != self.net.width(0) || reference.rows() == 0 {
            return Err(Error::Shape(format!(
                "standardization reference is {:?}, detector reads {} channels",
                reference.shape(),
                self.net.width(0)
            )));
        }
        self.center = reference.column_means();
        self.scale = (0..reference.cols())
            .map(|j| {
                let mu = self.center[j];
                let var = reference
                    .column(j)
                    .iter()
                    .map(|x| (x - mu).powi(2))
                    .sum::<f64>()
                    / reference.rows() as f64;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(())
    }

    pub fn standardize(&self, pooled: &Matrix) -> Matrix {
        Matrix::from_fn(pooled.rows(), pooled.cols(), |i, j| {
            (pooled[(i, j)] - self.center[j]) / self.scale[j]
        })
    }

    /// Detector logits for position-pooled activations.
    pub fn logits(&self, pooled: &Matrix) -> Result<Matrix> {
        if pooled.cols() != self.center.len() {
            return Err(Error::Shape(format!(
                "detector reads {} channels, got {}",
                self.center.len(),
                pooled.cols()
            )));
        }
        self.net.forward(&self.standardize(pooled))
    }

    /// Energy of every sample after mean-pooling over positions.
    pub fn energies(&self, acts: &ActivationSet) -> Result<Vec<f64>> {
        let logits = self.logits(&acts.pooled())?;
        Ok((0..logits.rows())
            .map(|r| energy_score(logits.row(r)))
            .collect())
    }

    /// JSON sidecar stored next to the network checkpoint.
    pub fn sidecar(&self) -> DetectorSidecar {
        DetectorSidecar {
            m_in: self.m_in,
            m_out: self.m_out,
            lambda: self.lambda,
            source_layer: self.source_layer,
            center: self.center.clone(),
            scale: self.scale.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSidecar {
    pub m_in: f64,
    pub m_out: f64,
    pub lambda: f64,
    pub source_layer: Option<usize>,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Write `<stem>.rsnt` (network checkpoint) and `<stem>.json` (sidecar).
pub fn save_detector(det: &EnergyDetector, stem: &Path) -> Result<()> {
    let file = File::create(stem.with_extension("rsnt"))?;
    write_checkpoint(&det.net, BufWriter::new(file))?;
    let json = serde_json::to_string_pretty(&det.sidecar())?;
    std::fs::write(stem.with_extension("json"), json + "\n")?;
    Ok(())
}

pub fn load_detector(stem: &Path) -> Result<EnergyDetector> {
    let net = read_checkpoint(BufReader::new(File::open(stem.with_extension("rsnt"))?))?;
    let side: DetectorSidecar =
        serde_json::from_slice(&std::fs::read(stem.with_extension("json"))?)?;
    let mut det = EnergyDetector::new(net, side.m_in, side.m_out, side.lambda)?;
    det.source_layer = side.source_layer;
    if side.center.len() != det.center.len() || side.scale.len() != det.scale.len() {
        return Err(Error::Format(
            "detector sidecar standardization does not match the network".into(),
        ));
    }
    det.center = side.center;
    det.scale = side.scale;
    Ok(det)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub hidden: Vec<usize>,
    pub pretrain: TrainConfig,
    /// `batch_size` is split evenly between ID and OOD samples.
    pub finetune: TrainConfig,
    pub m_in: f64,
    pub m_out: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            pretrain: TrainConfig {
                epochs: 30,
                batch_size: 64,
                ..TrainConfig::default()
            },
            finetune: TrainConfig {
                epochs: 20,
                batch_size: 128,
                ..TrainConfig::default()
            },
            m_in: TOY_M_IN,
            m_out: TOY_M_OUT,
            lambda: DEFAULT_LAMBDA,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectorLog {
    pub pretrain: TrainLog,
    pub finetune: TrainLog,
}

/// Two-stage detector training: cross-entropy on ID activations, then
/// cross-entropy plus `λ·L_energy` on balanced ID/OOD minibatches. Both
/// stages see activations standardized with the ID channel statistics.
pub fn train_detector(
    id_acts: &ActivationSet,
    ood_acts: &ActivationSet,
    cfg: &DetectorConfig,
) -> Result<(EnergyDetector, DetectorLog)> {
    let labels = id_acts
        .labels()
        .ok_or_else(|| Error::Argument("ID activations need labels".into()))?
        .to_vec();
    if id_acts.channels() != ood_acts.channels() || id_acts.positions() != ood_acts.positions() {
        return Err(Error::Shape(format!(
            "ID activations {:?} and OOD activations {:?} differ in layer shape",
            id_acts.dims(),
            ood_acts.dims()
        )));
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
    let id = LabeledDataset::new(id_acts.pooled(), labels, num_classes)?;
    let ood = ood_acts.pooled();

    let mut widths = vec![id.dim()];
    widths.extend(&cfg.hidden);
    widths.push(num_classes);
    let net = FeedforwardNet::init(
        &widths,
        Nonlinearity::Relu,
        rng::derive_seed(cfg.seed, &[0]),
    )?;
    let mut det = EnergyDetector::new(net, cfg.m_in, cfg.m_out, cfg.lambda)?;
    det.fit_standardization(&id.inputs)?;
    let id = LabeledDataset::new(det.standardize(&id.inputs), id.labels, num_classes)?;
    let ood = det.standardize(&ood);

    let pre_cfg = TrainConfig {
        seed: rng::derive_seed(cfg.seed, &[1]),
        ..cfg.pretrain.clone()
    };
    let pretrain = train(&mut det.net, &id, &pre_cfg)?;
    let ft_cfg = TrainConfig {
        seed: rng::derive_seed(cfg.seed, &[2]),
        ..cfg.finetune.clone()
    };
    let finetune = finetune_energy(&mut det, &id, &ood, &ft_cfg)?;
    Ok((det, DetectorLog { pretrain, finetune }))
}

/// Stage-2 objective value on the full (pooled, unstandardized) ID and OOD
/// sets: mean cross-entropy + `λ·L_energy`.
pub fn finetune_objective(det: &EnergyDetector, id: &LabeledDataset, ood: &Matrix) -> Result<f64> {
    let logits_in = det.logits(&id.inputs)?;
    let logits_out = det.logits(ood)?;
    let (ce, _) = softmax_cross_entropy(&logits_in, &id.labels)?;
    let (le, _, _) = energy_margin_loss_and_grad(&logits_in, &logits_out, det.m_in, det.m_out);
    Ok(ce / id.len() as f64 + det.lambda * le)
}

fn finetune_energy(
    det: &mut EnergyDetector,
    id: &LabeledDataset,
    ood: &Matrix,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    if ood.rows() == 0 {
        return Err(Error::Argument("no OOD samples".into()));
    }
    let half = (cfg.batch_size / 2).max(1);
    let half_cfg = TrainConfig {
        batch_size: half,
        ..cfg.clone()
    };
    let mut rng = rng::rng(cfg.seed);
    let mut opt = Optimizer::new(
        cfg.optimizer,
        cfg.learning_rate,
        cfg.weight_decay,
        &block_sizes(&det.net),
    );
    let mut ood_order: Vec<usize> = (0..ood.rows()).collect();
    let mut ood_cursor = ood_order.len();
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut hits = 0;
        let batches = half_cfg.batches(id.len(), &mut rng);
        let n_batches = batches.len();
        for batch in batches {
            let mut ood_idx = Vec::with_capacity(batch.len());
            while ood_idx.len() < batch.len() {
                if ood_cursor == ood_order.len() {
                    ood_order.shuffle(&mut rng);
                    ood_cursor = 0;
                }
                ood_idx.push(ood_order[ood_cursor]);
                ood_cursor += 1;
            }
            let x_in = id.inputs.select_rows(&batch);
            let y_in: Vec<usize> = batch.iter().map(|&k| id.labels[k]).collect();
            let x_out = ood.select_rows(&ood_idx);
            let logits_in = det.net.forward(&x_in)?;
            let logits_out = det.net.forward(&x_out)?;
            hits += (0..logits_in.rows())
                .filter(|&r| crate::nets::argmax(logits_in.row(r)) == y_in[r])
                .count();

            let (ce, ce_grad) = softmax_cross_entropy(&logits_in, &y_in)?;
            let (le, e_grad_in, e_grad_out) =
                energy_margin_loss_and_grad(&logits_in, &logits_out, det.m_in, det.m_out);
            let loss = ce / batch.len() as f64 + det.lambda * le;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "fine-tuning loss at epoch {epoch} is {loss}"
                )));
            }
            loss_sum += loss;
            let grad_in = ce_grad
                .scale(1.0 / batch.len() as f64)
                .add(&e_grad_in.scale(det.lambda))?;
            let grad_out = e_grad_out.scale(det.lambda);
            let (mut grads, _) = det.net.backward_from(0, &x_in, &grad_in)?;
            let (grads_out, _) = det.net.backward_from(0, &x_out, &grad_out)?;
            for (g, o) in grads.iter_mut().zip(&grads_out) {
                g.weights = g.weights.add(&o.weights)?;
                g.bias.iter_mut().zip(&o.bias).for_each(|(a, b)| *a += b);
            }
            apply_grads(&mut det.net, &mut opt, &grads)?;
        }
        log.epochs.push(EpochStats {
            epoch,
            loss: loss_sum / n_batches.max(1) as f64,
            accuracy: hits as f64 / id.len() as f64,
        });
    }
    Ok(log)
}

/// Area under the ROC curve with `positive` as the positive class:
/// `P(pos > neg) + ½·P(pos = neg)`, computed from ranks.
pub fn auroc(negative: &[f64], positive: &[f64]) -> Result<f64> {
    if negative.is_empty() || positive.is_empty() {
        return Err(Error::Argument(
            "AUROC needs at least one score per class".into(),
        ));
    }
    if negative.iter().chain(positive).any(|v| v.is_nan()) {
        return Err(Error::Argument("AUROC scores contain NaN".into()));
    }
    let mut all: Vec<(f64, bool)> = negative
        .iter()
        .map(|&v| (v, false))
        .chain(positive.iter().map(|&v| (v, true)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Mann-Whitney U of the positives: for each positive, negatives strictly
    // below plus half the tied ones. Half-integers are exact in f64.
    let mut u = 0.0;
    let mut neg_below = 0usize;
    let mut k = 0;
    while k < all.len() {
        let mut end = k;
        while end < all.len() && all[end].0 == all[k].0 {
            end += 1;
        }
        let pos_in_group = all[k..end].iter().filter(|e| e.1).count();
        let neg_in_group = end - k - pos_in_group;
        u += pos_in_group as f64 * (neg_below as f64 + 0.5 * neg_in_group as f64);
        neg_below += neg_in_group;
        k = end;
    }
    // U and pairs − U are exact, and the two correctly rounded quotients sum
    // to exactly 1, so swapping the classes gives the exact complement.
    let pairs = negative.len() as f64 * positive.len() as f64;
    Ok(u / pairs)
}

/// AUROC of stitched-activation energies (positives) against target
/// activation energies (negatives). 0.5 means the detector cannot tell them
/// apart.
pub fn separability(
    det: &EnergyDetector,
    target: &ActivationSet,
    stitched: &ActivationSet,
) -> Result<f64> {
    if target.channels() != det.net.width(0) || stitched.channels() != det.net.width(0) {
        return Err(Error::Shape(format!(
            "detector reads {} channels, got {} and {}",
            det.net.width(0),
            target.channels(),
            stitched.channels()
        )));
    }
    auroc(&det.energies(target)?, &det.energies(stitched)?)
}
