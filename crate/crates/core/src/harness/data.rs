use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::activations::ActivationSet;
use crate::error::{Error, Result};
use crate::nets::{FeedforwardNet, LabeledDataset};
use crate::numerics::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    /// Isotropic Gaussian clusters, `separation·noise` apart.
    Blobs,
    /// Concentric circles of radius `1..=classes` with radial noise.
    Rings,
    /// Interleaved spiral arms with angular noise.
    Spiral,
    /// Uniform samples in `[−scale, scale]^dim`; labels carry no signal.
    UniformNoise,
}

impl Generator {
    pub fn name(self) -> &'static str {
        match self {
            Generator::Blobs => "blobs",
            Generator::Rings => "rings",
            Generator::Spiral => "spiral",
            Generator::UniformNoise => "uniform-noise",
        }
    }
}

fn default_classes() -> usize {
    3
}
fn default_noise() -> f64 {
    0.1
}
fn default_dim() -> usize {
    2
}
fn default_separation() -> f64 {
    10.0
}
fn default_scale() -> f64 {
    1.0
}
fn default_turns() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub generator: Generator,
    pub n: usize,
    #[serde(default = "default_classes")]
    pub classes: usize,
    /// Standard deviation of the generator's noise (radians for spirals).
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// Input dimension for blobs and uniform noise; rings and spirals are 2-D.
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Distance between blob centers in units of `noise`.
    #[serde(default = "default_separation")]
    pub separation: f64,
    /// Half-width of the uniform-noise cube.
    #[serde(default = "default_scale")]
    pub scale: f64,
    /// Full turns each spiral arm makes between the center and radius 1.
    #[serde(default = "default_turns")]
    pub turns: f64,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn new(generator: Generator, n: usize, classes: usize, seed: u64) -> Self {
        Self {
            generator,
            n,
            classes,
            noise: default_noise(),
            dim: default_dim(),
            separation: default_separation(),
            scale: default_scale(),
            turns: default_turns(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Validation("dataset needs n >= 1".into()));
        }
        if self.classes < 2 {
            return Err(Error::Validation(format!(
                "dataset needs at least 2 classes, got {}",
                self.classes
            )));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Validation(format!(
                "noise must be finite and non-negative, got {}",
                self.noise
            )));
        }
        if !(self.separation.is_finite()
            && self.scale.is_finite()
            && self.scale > 0.0
            && self.turns.is_finite()
            && self.turns > 0.0)
        {
            return Err(Error::Validation(
                "separation, scale and turns must be finite, scale and turns positive".into(),
            ));
        }
        let min_dim = match self.generator {
            Generator::Rings | Generator::Spiral => 2,
            Generator::Blobs | Generator::UniformNoise => 1,
        };
        if self.dim < min_dim
            || (matches!(self.generator, Generator::Rings | Generator::Spiral) && self.dim != 2)
        {
            return Err(Error::Validation(format!(
                "{} needs dim {min_dim}, got {}",
                self.generator.name(),
                self.dim
            )));
        }
        if self.generator == Generator::Blobs && self.dim < 2 && self.classes > 2 {
            return Err(Error::Validation(
                "blobs with more than 2 classes need dim >= 2".into(),
            ));
        }
        Ok(())
    }
}

fn blob_center(k: usize, classes: usize, dim: usize, spacing: f64) -> Vec<f64> {
    let mut c = vec![0.0; dim];
    if dim >= classes {
        // scaled one-hot vertices are pairwise `spacing` apart
        c[k] = spacing / 2f64.sqrt();
    } else if dim == 1 {
        c[0] = spacing * k as f64;
    } else {
        // regular polygon whose adjacent vertices are `spacing` apart
        let radius = spacing / (2.0 * (PI / classes as f64).sin());
        let angle = TAU * k as f64 / classes as f64;
        c[0] = radius * angle.cos();
        c[1] = radius * angle.sin();
    }
    c
}

/// Deterministic synthetic classification data. Sample `i` has label
/// `i mod classes`, so classes are balanced to within one sample.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = rng::rng(spec.seed);
    let k = spec.classes;
    let dim = match spec.generator {
        Generator::Rings | Generator::Spiral => 2,
        _ => spec.dim,
    };
    let mut data = Vec::with_capacity(spec.n * dim);
    let labels: Vec<usize> = (0..spec.n).map(|i| i % k).collect();
    for &label in &labels {
        match spec.generator {
            Generator::Blobs => {
                let center = blob_center(label, k, dim, spec.separation * spec.noise);
                for c in center {
                    data.push(c + spec.noise * rng.sample::<f64, _>(StandardNormal));
                }
            }
            Generator::Rings => {
                let r = (label + 1) as f64 + spec.noise * rng.sample::<f64, _>(StandardNormal);
                let theta = rng.random_range(0.0..TAU);
                data.extend([r * theta.cos(), r * theta.sin()]);
            }
            Generator::Spiral => {
                let t: f64 = rng.random_range(0.0..1.0);
                let theta = TAU * label as f64 / k as f64
                    + TAU * spec.turns * t
                    + spec.noise * rng.sample::<f64, _>(StandardNormal);
                data.extend([t * theta.sin(), t * theta.cos()]);
            }
            Generator::UniformNoise => {
                for _ in 0..dim {
                    data.push(rng.random_range(-spec.scale..=spec.scale));
                }
            }
        }
    }
    LabeledDataset::new(Matrix::from_vec(spec.n, dim, data)?, labels, k)
}

/// `n` points drawn uniformly from the bounding box of `reference`'s rows,
/// grown by `inflation` around its center. Zero-width sides get width
/// `inflation`.
pub fn inflated_box_noise(
    reference: &Matrix,
    n: usize,
    inflation: f64,
    seed: u64,
) -> Result<Matrix> {
    if reference.rows() == 0 {
        return Err(Error::Argument("empty reference data".into()));
    }
    if !(inflation.is_finite() && inflation > 0.0) {
        return Err(Error::Argument(format!(
            "inflation must be positive, got {inflation}"
        )));
    }
    reference.ensure_finite("reference data")?;
    let bounds: Vec<(f64, f64)> = (0..reference.cols())
        .map(|j| {
            let col = reference.column(j);
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let half = if hi > lo {
                0.5 * (hi - lo) * inflation
            } else {
                0.5 * inflation
            };
            (0.5 * (lo + hi) - half, 0.5 * (lo + hi) + half)
        })
        .collect();
    let mut rng = rng::rng(seed);
    Ok(Matrix::from_fn(n, reference.cols(), |_, j| {
        rng.random_range(bounds[j].0..=bounds[j].1)
    }))
}

/// Activations of `net` at `layer` for every input of `data`, labelled.
/// Layer 0 is the input itself; the last layer is the logits.
pub fn extract_activations(
    net: &FeedforwardNet,
    data: &LabeledDataset,
    layer: usize,
) -> Result<ActivationSet> {
    ActivationSet::from_matrix(
        net.forward_to(layer, &data.inputs)?,
        Some(data.labels.clone()),
    )
}
