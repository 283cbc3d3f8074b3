use serde::{Deserialize, Serialize};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// First-order optimizer over a fixed list of parameter blocks.
///
/// Weight decay is decoupled: every step subtracts
/// `lr · (update + weight_decay · p)` where `update` is the raw gradient for
/// SGD and the bias-corrected Adam direction for Adam.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    weight_decay: f64,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64, block_sizes: &[usize]) -> Self {
        let zeros = || {
            block_sizes
                .iter()
                .map(|&n| vec![0.0; n])
                .collect::<Vec<_>>()
        };
        Self {
            kind,
            lr,
            weight_decay,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    /// Advance the step counter; call once per minibatch before `update`.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    pub fn update(&mut self, block: usize, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), grads.len());
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= self.lr * (g + self.weight_decay * *p);
                }
            }
            OptimizerKind::Adam => {
                let c1 = 1.0 - ADAM_BETA1.powi(self.step);
                let c2 = 1.0 - ADAM_BETA2.powi(self.step);
                let m = &mut self.first[block];
                let v = &mut self.second[block];
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(m.iter_mut())
                    .zip(v.iter_mut())
                {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    let dir = (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                    *p -= self.lr * (dir + self.weight_decay * *p);
                }
            }
        }
    }
}
