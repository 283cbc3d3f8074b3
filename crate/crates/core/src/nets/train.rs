use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{FeedforwardNet, LabeledDataset, LayerGrad, Optimizer, OptimizerKind};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-3,
            weight_decay: 1e-5,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Argument("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Argument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Argument("weight_decay must be non-negative".into()));
        }
        Ok(())
    }

    /// Shuffled minibatch index lists for one epoch.
    pub(crate) fn batches(&self, n: usize, rng: &mut rng::SplitMix64) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        order
            .chunks(self.batch_size)
            .map(<[usize]>::to_vec)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training loss over the epoch's minibatches.
    pub loss: f64,
    /// Fraction of training samples classified correctly during the epoch.
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
}

impl TrainLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Summed softmax cross-entropy and its gradient `softmax − onehot` per row.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if logits.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} logit rows for {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    let k = logits.cols();
    let mut grad = Matrix::zeros(logits.rows(), k);
    let mut loss = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::Argument(format!("label {y} outside 0..{k}")));
        }
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - row[y];
        let g = grad.row_mut(r);
        for (gi, &v) in g.iter_mut().zip(row) {
            *gi = (v - lse).exp();
        }
        g[y] -= 1.0;
    }
    Ok((loss, grad))
}

pub fn accuracy(net: &FeedforwardNet, data: &LabeledDataset) -> Result<f64> {
    let pred = net.predict(&data.inputs)?;
    Ok(fraction_correct(&pred, &data.labels))
}

pub(crate) fn fraction_correct(pred: &[usize], labels: &[usize]) -> f64 {
    let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len().max(1) as f64
}

pub(crate) fn block_sizes(net: &FeedforwardNet) -> Vec<usize> {
    net.layers()
        .iter()
        .flat_map(|l| [l.weights.rows() * l.weights.cols(), l.bias.len()])
        .collect()
}

pub(crate) fn apply_grads(
    net: &mut FeedforwardNet,
    opt: &mut Optimizer,
    grads: &[LayerGrad],
) -> Result<()> {
    opt.begin_step();
    for (k, (layer, g)) in net.layers_mut()?.iter_mut().zip(grads).enumerate() {
        opt.update(2 * k, layer.weights.as_mut_slice(), g.weights.as_slice());
        opt.update(2 * k + 1, &mut layer.bias, &g.bias);
    }
    Ok(())
}

/// Minibatch training of all parameters on mean softmax cross-entropy.
///
/// Batches are reshuffled every epoch from a [`SplitMix64`](crate::rng::SplitMix64)
/// stream seeded with `cfg.seed`.
pub fn train(
    net: &mut FeedforwardNet,
    data: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    if data.dim() != net.width(0) {
        return Err(Error::Shape(format!(
            "dataset has {} features, network expects {}",
            data.dim(),
            net.width(0)
        )));
    }
    if data.num_classes > net.num_classes() {
        return Err(Error::Shape(format!(
            "dataset has {} classes, network outputs {}",
            data.num_classes,
            net.num_classes()
        )));
    }
    if net.is_frozen() {
        return Err(Error::Argument("cannot train a frozen network".into()));
    }
    let mut rng = rng::rng(cfg.seed);
    let mut opt = Optimizer::new(
        cfg.optimizer,
        cfg.learning_rate,
        cfg.weight_decay,
        &block_sizes(net),
    );
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        for batch in cfg.batches(data.len(), &mut rng) {
            let x = data.inputs.select_rows(&batch);
            let y: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
            let logits = net.forward(&x)?;
            hits += (0..logits.rows())
                .filter(|&r| super::argmax(logits.row(r)) == y[r])
                .count();
            let (loss, grad) = softmax_cross_entropy(&logits, &y)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {epoch} is {loss}"
                )));
            }
            loss_sum += loss;
            let grad = grad.scale(1.0 / batch.len() as f64);
            let (grads, _) = net.backward_from(0, &x, &grad)?;
            apply_grads(net, &mut opt, &grads)?;
        }
        log.epochs.push(EpochStats {
            epoch,
            loss: loss_sum / data.len() as f64,
            accuracy: hits as f64 / data.len() as f64,
        });
    }
    Ok(log)
}
