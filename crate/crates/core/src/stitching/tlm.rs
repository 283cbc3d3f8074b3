use super::AffineMap;
use crate::error::{Error, Result};
use crate::nets::EpochStats;
use crate::nets::{
    softmax_cross_entropy, FeedforwardNet, LabeledDataset, Optimizer, TrainConfig, TrainLog,
};
use crate::numerics::Matrix;
use crate::rng;

/// Mean cross-entropy of `g>j(source · W + b)` and its gradient with respect
/// to `W` and `b`. `g` is only read.
pub fn tlm_loss_and_grad(
    g: &FeedforwardNet,
    j: usize,
    map: &AffineMap,
    source: &Matrix,
    labels: &[usize],
) -> Result<(f64, Matrix, Vec<f64>, usize)> {
    let z = map.apply_rows(source)?;
    let logits = g.forward_from(j, &z)?;
    let hits = (0..logits.rows())
        .filter(|&r| crate::nets::argmax(logits.row(r)) == labels[r])
        .count();
    let (loss, grad_logits) = softmax_cross_entropy(&logits, labels)?;
    let (_, grad_z) = g.backward_from(j, &z, &grad_logits)?;
    let scale = 1.0 / source.rows() as f64;
    let grad_w = source.t_matmul(&grad_z)?.scale(scale);
    let grad_b = grad_z
        .column_sums()
        .into_iter()
        .map(|v| v * scale)
        .collect();
    Ok((loss * scale, grad_w, grad_b, hits))
}

/// Task loss matching: train only the stitcher on the composite's
/// cross-entropy, starting from `init`. Both networks stay untouched.
pub fn train_tlm(
    f: &FeedforwardNet,
    i: usize,
    g: &FeedforwardNet,
    j: usize,
    init: &AffineMap,
    data: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(AffineMap, TrainLog)> {
    cfg.validate()?;
    if i > f.depth() || j > g.depth() {
        return Err(Error::Argument(format!("layers ({i}, {j}) out of range")));
    }
    if init.in_width() != f.width(i) || init.out_width() != g.width(j) {
        return Err(Error::Shape(format!(
            "initial map is {}x{}, layers have widths {} and {}",
            init.in_width(),
            init.out_width(),
            f.width(i),
            g.width(j)
        )));
    }
    let source = f.forward_to(i, &data.inputs)?;
    let mut map = init.clone();
    let mut opt = Optimizer::new(
        cfg.optimizer,
        cfg.learning_rate,
        cfg.weight_decay,
        &[map.weights.rows() * map.weights.cols(), map.bias.len()],
    );
    let mut rng = rng::rng(cfg.seed);
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut hits = 0;
        for batch in cfg.batches(data.len(), &mut rng) {
            let xb = source.select_rows(&batch);
            let yb: Vec<usize> = batch.iter().map(|&k| data.labels[k]).collect();
            let (loss, gw, gb, h) = tlm_loss_and_grad(g, j, &map, &xb, &yb)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "stitching loss at epoch {epoch} is {loss}"
                )));
            }
            loss_sum += loss * batch.len() as f64;
            hits += h;
            opt.begin_step();
            opt.update(0, map.weights.as_mut_slice(), gw.as_slice());
            opt.update(1, &mut map.bias, &gb);
        }
        log.epochs.push(EpochStats {
            epoch,
            loss: loss_sum / data.len() as f64,
            accuracy: hits as f64 / data.len() as f64,
        });
    }
    Ok((map, log))
}
