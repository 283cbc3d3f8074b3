//! Small dense feedforward classifiers with hand-written backpropagation.
//!
//! Layer `k` (1-based) maps activations of layer `k − 1` to layer `k`; layer 0
//! is the input. [`FeedforwardNet::forward_to`] and
//! [`FeedforwardNet::forward_from`] split a network into its front half
//! (`f≤i`) and back half (`f>i`), which is what model stitching composes.

mod checkpoint;
mod optim;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use optim::{Optimizer, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use train::{
    accuracy, argmax, softmax_cross_entropy, train, EpochStats, TrainConfig, TrainLog,
};
pub(crate) use train::{apply_grads, block_sizes};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Relu,
    Identity,
}

impl Nonlinearity {
    fn code(self) -> u8 {
        match self {
            Nonlinearity::Relu => 1,
            Nonlinearity::Identity => 0,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Nonlinearity::Identity),
            1 => Ok(Nonlinearity::Relu),
            _ => Err(Error::Format(format!("unknown nonlinearity code {c}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `in x out`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub nonlinearity: Nonlinearity,
}

impl DenseLayer {
    fn forward(&self, x: &Matrix) -> Matrix {
        let mut z = x.matmul(&self.weights).expect("layer widths chain");
        for i in 0..z.rows() {
            for (v, b) in z.row_mut(i).iter_mut().zip(&self.bias) {
                *v += b;
                if self.nonlinearity == Nonlinearity::Relu && *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        z
    }

    pub fn in_width(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_width(&self) -> usize {
        self.weights.cols()
    }
}

/// Gradient for one dense layer.
#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedforwardNet {
    layers: Vec<DenseLayer>,
    frozen: bool,
}

impl FeedforwardNet {
    /// Hidden layers use `hidden`; the last layer is always linear (logits).
    /// Weights are uniform in `±sqrt(g / fan_in)` with `g = 6` for ReLU layers
    /// and `g = 3` for linear ones; biases start at zero.
    pub fn init(widths: &[usize], hidden: Nonlinearity, seed: u64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Argument(
                "a network needs at least input and output widths".into(),
            ));
        }
        if widths.contains(&0) {
            return Err(Error::Argument(format!("zero layer width in {widths:?}")));
        }
        let mut rng = rng::rng(seed);
        let m = widths.len() - 1;
        let layers = (0..m)
            .map(|k| {
                let nonlinearity = if k + 1 == m {
                    Nonlinearity::Identity
                } else {
                    hidden
                };
                let gain = if nonlinearity == Nonlinearity::Relu {
                    6.0
                } else {
                    3.0
                };
                let bound = (gain / widths[k] as f64).sqrt();
                let weights = Matrix::from_fn(widths[k], widths[k + 1], |_, _| {
                    rng.random_range(-bound..bound)
                });
                DenseLayer {
                    weights,
                    bias: vec![0.0; widths[k + 1]],
                    nonlinearity,
                }
            })
            .collect();
        Ok(Self {
            layers,
            frozen: false,
        })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Argument("a network needs at least one layer".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_width() != pair[1].in_width() {
                return Err(Error::Shape(format!(
                    "layer {} outputs {} but layer {} expects {}",
                    k + 1,
                    pair[0].out_width(),
                    k + 2,
                    pair[1].in_width()
                )));
            }
        }
        for l in &layers {
            if l.bias.len() != l.out_width() {
                return Err(Error::Shape("bias width does not match weights".into()));
            }
        }
        if layers.last().map(|l| l.nonlinearity) != Some(Nonlinearity::Identity) {
            return Err(Error::Argument("the output layer must be linear".into()));
        }
        Ok(Self {
            layers,
            frozen: false,
        })
    }

    /// Number of layers `m`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Width of layer `i`'s activations (`i = 0` is the input).
    pub fn width(&self, i: usize) -> usize {
        if i == 0 {
            self.layers[0].in_width()
        } else {
            self.layers[i - 1].out_width()
        }
    }

    pub fn widths(&self) -> Vec<usize> {
        (0..=self.depth()).map(|i| self.width(i)).collect()
    }

    pub fn num_classes(&self) -> usize {
        self.width(self.depth())
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> Result<&mut [DenseLayer]> {
        if self.frozen {
            return Err(Error::Argument("network is frozen".into()));
        }
        Ok(&mut self.layers)
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub(crate) fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    fn check_layer(&self, i: usize) -> Result<()> {
        if i > self.depth() {
            return Err(Error::Argument(format!(
                "layer {i} out of range 0..={}",
                self.depth()
            )));
        }
        Ok(())
    }

    fn check_width(&self, i: usize, x: &Matrix) -> Result<()> {
        if x.cols() != self.width(i) {
            return Err(Error::Shape(format!(
                "layer {i} has width {} but input has {} columns",
                self.width(i),
                x.cols()
            )));
        }
        Ok(())
    }

    /// `f≤i(x)`; `i = 0` returns the input.
    pub fn forward_to(&self, i: usize, x: &Matrix) -> Result<Matrix> {
        self.check_layer(i)?;
        self.check_width(0, x)?;
        Ok(self.layers[..i]
            .iter()
            .fold(x.clone(), |a, l| l.forward(&a)))
    }

    /// `f>i(a)`; `i = m` returns `a`.
    pub fn forward_from(&self, i: usize, a: &Matrix) -> Result<Matrix> {
        self.check_layer(i)?;
        self.check_width(i, a)?;
        Ok(self.layers[i..]
            .iter()
            .fold(a.clone(), |h, l| l.forward(&h)))
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.forward_from(0, x)
    }

    /// Backpropagate `grad_logits` through layers `i+1..=m` starting from
    /// layer-`i` activations `a`. Returns the parameter gradients of those
    /// layers (in order) and the gradient with respect to `a`.
    pub fn backward_from(
        &self,
        i: usize,
        a: &Matrix,
        grad_logits: &Matrix,
    ) -> Result<(Vec<LayerGrad>, Matrix)> {
        self.check_layer(i)?;
        self.check_width(i, a)?;
        if grad_logits.shape() != (a.rows(), self.num_classes()) {
            return Err(Error::Shape(format!(
                "logit gradient is {:?}, expected ({}, {})",
                grad_logits.shape(),
                a.rows(),
                self.num_classes()
            )));
        }
        let tail = &self.layers[i..];
        let mut inputs = Vec::with_capacity(tail.len());
        let mut h = a.clone();
        for l in tail {
            let next = l.forward(&h);
            inputs.push(h);
            h = next;
        }
        let logits = h;

        let mut grads = Vec::with_capacity(tail.len());
        let mut delta = grad_logits.clone();
        for (k, l) in tail.iter().enumerate().rev() {
            if l.nonlinearity == Nonlinearity::Relu {
                let out = if k + 1 < inputs.len() {
                    &inputs[k + 1]
                } else {
                    &logits
                };
                for (d, &o) in delta.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    if o <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &inputs[k];
            let gw = input.t_matmul(&delta)?;
            let gb = delta.column_sums();
            let next_delta = delta.matmul_t(&l.weights)?;
            grads.push(LayerGrad {
                weights: gw,
                bias: gb,
            });
            delta = next_delta;
        }
        grads.reverse();
        Ok((grads, delta))
    }

    /// Gradient of the summed softmax cross-entropy of `f>i(a)` with respect
    /// to the layer-`i` activations `a`. Parameters are not touched.
    pub fn grad_wrt_intermediate(
        &self,
        i: usize,
        a: &Matrix,
        labels: &[usize],
    ) -> Result<(f64, Matrix)> {
        let logits = self.forward_from(i, a)?;
        let (loss, grad_logits) = softmax_cross_entropy(&logits, labels)?;
        let (_, grad_a) = self.backward_from(i, a, &grad_logits)?;
        Ok((loss, grad_a))
    }

    /// Predicted class per row, ties to the lowest index.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        let logits = self.forward(x)?;
        Ok((0..logits.rows()).map(|r| argmax(logits.row(r))).collect())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.rows() * l.weights.cols() + l.bias.len())
            .sum()
    }
}

/// Inputs with integer class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl LabeledDataset {
    pub fn new(inputs: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.rows() == 0 {
            return Err(Error::Argument("dataset is empty".into()));
        }
        if inputs.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} inputs but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Argument(format!(
                "label {bad} outside 0..{num_classes}"
            )));
        }
        Ok(Self {
            inputs,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// The first `k` samples (or all, if fewer).
    pub fn head(&self, k: usize) -> Self {
        let idx: Vec<usize> = (0..k.min(self.len())).collect();
        self.subset(&idx)
    }
}
