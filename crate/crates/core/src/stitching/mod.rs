//! Model stitching: an affine map `T` between layer `i` of a source network
//! `f` and layer `j` of a target network `g`, evaluated as the composite
//! `g>j ∘ T ∘ f≤i`.
//!
//! `T` is fitted either by direct matching (least squares against the target
//! representation, no labels involved) or by task loss matching (gradient
//! descent on the composite's cross-entropy with both halves frozen).

mod grid;
mod tlm;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

pub use grid::{similarity_grid, StitchGrid, StitchGridConfig, StitchMethod};
pub use tlm::{tlm_loss_and_grad, train_tlm};

use crate::activations::ActivationSet;
use crate::error::{Error, Result};
use crate::nets::{accuracy, argmax, FeedforwardNet, LabeledDataset};
use crate::numerics::{affine_least_squares, Matrix};
use crate::rng;

/// Default number of samples used to fit a direct-matching stitcher.
pub const DEFAULT_DM_SAMPLES: usize = 100;

/// `x ↦ x·W + b`, applied identically at every position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    /// `c_in x c_out`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl AffineMap {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.cols() {
            return Err(Error::Shape(format!(
                "bias of width {} for {} outputs",
                bias.len(),
                weights.cols()
            )));
        }
        if !weights.is_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("affine map parameters".into()));
        }
        Ok(Self { weights, bias })
    }

    pub fn identity(c: usize) -> Self {
        Self {
            weights: Matrix::identity(c),
            bias: vec![0.0; c],
        }
    }

    pub fn zeros(c_in: usize, c_out: usize) -> Self {
        Self {
            weights: Matrix::zeros(c_in, c_out),
            bias: vec![0.0; c_out],
        }
    }

    pub fn in_width(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_width(&self) -> usize {
        self.weights.cols()
    }

    /// Map every row of `x`.
    pub fn apply_rows(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_width() {
            return Err(Error::Shape(format!(
                "map expects width {}, got {}",
                self.in_width(),
                x.cols()
            )));
        }
        let mut out = x.matmul(&self.weights)?;
        for r in 0..out.rows() {
            out.row_mut(r)
                .iter_mut()
                .zip(&self.bias)
                .for_each(|(v, b)| *v += b);
        }
        Ok(out)
    }
}

pub fn apply_map(map: &AffineMap, acts: &ActivationSet) -> Result<ActivationSet> {
    if acts.channels() != map.in_width() {
        return Err(Error::Shape(format!(
            "map expects {} channels, activations have {}",
            map.in_width(),
            acts.channels()
        )));
    }
    let mapped = map.apply_rows(&acts.position_rows())?;
    ActivationSet::from_position_rows(
        mapped,
        acts.positions(),
        acts.labels().map(<[usize]>::to_vec),
    )
}

#[derive(Debug, Clone)]
pub struct DirectFit {
    pub map: AffineMap,
    /// `‖apply_map(T, source) − target‖_F` over the fitted rows.
    pub residual: f64,
    /// Set when `[source | 1]` is rank deficient; the minimum-norm solution
    /// is returned.
    pub rank_deficient: bool,
}

/// Direct matching: the affine map minimizing `‖T(source) − target‖_F` over
/// all `n·s` rows, computed with the pseudoinverse. Labels are ignored.
pub fn fit_direct(source: &ActivationSet, target: &ActivationSet) -> Result<DirectFit> {
    if source.samples() != target.samples() || source.positions() != target.positions() {
        return Err(Error::Shape(format!(
            "source is {:?}, target is {:?}; samples and positions must match",
            source.dims(),
            target.dims()
        )));
    }
    let sol = affine_least_squares(&source.position_rows(), &target.position_rows())?;
    Ok(DirectFit {
        map: AffineMap {
            weights: sol.weights,
            bias: sol.bias,
        },
        residual: sol.residual,
        rank_deficient: sol.rank_deficient,
    })
}

/// Fit a direct-matching stitcher from layer `i` of `f` to layer `j` of `g`
/// on `k` samples of `data` drawn without replacement using `seed`.
pub fn fit_direct_between(
    f: &FeedforwardNet,
    i: usize,
    g: &FeedforwardNet,
    j: usize,
    data: &LabeledDataset,
    k: usize,
    seed: u64,
) -> Result<DirectFit> {
    let x = sample_inputs(data, k, seed);
    let src = ActivationSet::from_matrix(f.forward_to(i, &x)?, None)?;
    let tgt = ActivationSet::from_matrix(g.forward_to(j, &x)?, None)?;
    fit_direct(&src, &tgt)
}

pub(crate) fn sample_inputs(data: &LabeledDataset, k: usize, seed: u64) -> Matrix {
    if k >= data.len() {
        return data.inputs.clone();
    }
    let mut idx = sample(&mut rng::rng(seed), data.len(), k).into_vec();
    idx.sort_unstable();
    data.inputs.select_rows(&idx)
}

/// Which layers are joined and by what map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StitchSpec {
    pub source_net: String,
    pub source_layer: usize,
    pub target_net: String,
    pub target_layer: usize,
    pub map: AffineMap,
}

impl StitchSpec {
    pub fn validate(&self, f: &FeedforwardNet, g: &FeedforwardNet) -> Result<()> {
        if self.source_layer > f.depth() || self.target_layer > g.depth() {
            return Err(Error::Argument(format!(
                "layers ({}, {}) out of range for depths ({}, {})",
                self.source_layer,
                self.target_layer,
                f.depth(),
                g.depth()
            )));
        }
        if self.map.in_width() != f.width(self.source_layer)
            || self.map.out_width() != g.width(self.target_layer)
        {
            return Err(Error::Shape(format!(
                "map is {}x{} but layers have widths {} and {}",
                self.map.in_width(),
                self.map.out_width(),
                f.width(self.source_layer),
                g.width(self.target_layer)
            )));
        }
        Ok(())
    }
}

/// Logits of `g>j ∘ T ∘ f≤i` on `x`.
pub fn stitched_logits(
    f: &FeedforwardNet,
    g: &FeedforwardNet,
    spec: &StitchSpec,
    x: &Matrix,
) -> Result<Matrix> {
    spec.validate(f, g)?;
    let src = f.forward_to(spec.source_layer, x)?;
    g.forward_from(spec.target_layer, &spec.map.apply_rows(&src)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StitchEval {
    pub stitched_accuracy: f64,
    pub target_accuracy: f64,
    /// `stitched_accuracy / target_accuracy`.
    pub relative_accuracy: f64,
}

pub fn relative_accuracy(
    f: &FeedforwardNet,
    g: &FeedforwardNet,
    spec: &StitchSpec,
    data: &LabeledDataset,
) -> Result<StitchEval> {
    let target_accuracy = accuracy(g, data)?;
    if target_accuracy == 0.0 {
        return Err(Error::Degenerate("target network has zero accuracy".into()));
    }
    let logits = stitched_logits(f, g, spec, &data.inputs)?;
    let hits = (0..logits.rows())
        .filter(|&r| argmax(logits.row(r)) == data.labels[r])
        .count();
    let stitched_accuracy = hits as f64 / data.len() as f64;
    Ok(StitchEval {
        stitched_accuracy,
        target_accuracy,
        relative_accuracy: stitched_accuracy / target_accuracy,
    })
}
