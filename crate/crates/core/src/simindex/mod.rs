//! Structural similarity indices: linear CKA, PWCCA, orthogonal Procrustes
//! distance and the residual of direct (affine least-squares) matching.
//!
//! Each index consumes a [`PreprocessedPair`]. Two conventions exist:
//!
//! * LCKA flattens every sample into one row (`n x s·c`) and centers columns.
//! * PWCCA, OPD and the DM residual treat every position as a sample
//!   (`n·s x c`), center columns and scale each matrix to unit Frobenius norm.

mod cca;
mod lcka;
mod procrustes;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cca::{cca, pwcca, CcaResult, CCA_RANK_TOL};
pub use lcka::lcka;
pub use procrustes::{opd, procrustes_solve};

use crate::activations::ActivationSet;
use crate::error::{Error, Result};
use crate::grid::SimilarityGrid;
use crate::numerics::{affine_least_squares, center_columns, normalize_frobenius, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    LckaFlatten,
    PositionsAsSamples,
}

/// Two activation matrices over the same samples, preprocessed for an index.
#[derive(Debug, Clone)]
pub struct PreprocessedPair {
    pub a: Matrix,
    pub b: Matrix,
    pub convention: Convention,
}

impl PreprocessedPair {
    /// Center (and for [`Convention::PositionsAsSamples`] normalize) two raw
    /// matrices whose rows are already aligned.
    pub fn new(a: &Matrix, b: &Matrix, convention: Convention) -> Result<Self> {
        if a.rows() != b.rows() {
            return Err(Error::Shape(format!(
                "{} rows vs {} rows",
                a.rows(),
                b.rows()
            )));
        }
        let (a, b) = match convention {
            Convention::LckaFlatten => (center_columns(a), center_columns(b)),
            Convention::PositionsAsSamples => (
                normalize_frobenius(&center_columns(a))?,
                normalize_frobenius(&center_columns(b))?,
            ),
        };
        Ok(Self { a, b, convention })
    }

    pub fn swapped(&self) -> Self {
        Self {
            a: self.b.clone(),
            b: self.a.clone(),
            convention: self.convention,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Index {
    Lcka,
    Pwcca,
    Opd,
    DmStructural,
}

impl Index {
    pub const ALL: [Index; 4] = [Index::Lcka, Index::Pwcca, Index::Opd, Index::DmStructural];

    pub fn name(self) -> &'static str {
        match self {
            Index::Lcka => "lcka",
            Index::Pwcca => "pwcca",
            Index::Opd => "opd",
            Index::DmStructural => "dm-structural",
        }
    }

    pub fn convention(self) -> Convention {
        match self {
            Index::Lcka => Convention::LckaFlatten,
            _ => Convention::PositionsAsSamples,
        }
    }

    pub fn higher_is_similar(self) -> bool {
        matches!(self, Index::Lcka | Index::Pwcca)
    }

    pub fn evaluate(self, pair: &PreprocessedPair) -> Result<f64> {
        match self {
            Index::Lcka => lcka(pair),
            Index::Pwcca => pwcca(pair),
            Index::Opd => opd(pair),
            Index::DmStructural => dm_structural_distance(pair),
        }
    }

    /// Preprocess two activation sets and evaluate.
    pub fn compute(self, a: &ActivationSet, b: &ActivationSet) -> Result<f64> {
        self.evaluate(&preprocess(a, b, self)?)
    }

    /// Similarities become `1 − s`; distances pass through.
    pub fn dissimilarity(self, value: f64) -> f64 {
        if self.higher_is_similar() {
            1.0 - value
        } else {
            value
        }
    }
}

impl std::str::FromStr for Index {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Index::ALL
            .into_iter()
            .find(|i| i.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown index {s:?}")))
    }
}

pub fn preprocess(
    acts_a: &ActivationSet,
    acts_b: &ActivationSet,
    index: Index,
) -> Result<PreprocessedPair> {
    if acts_a.samples() != acts_b.samples() {
        return Err(Error::Shape(format!(
            "sample counts differ: {} vs {}",
            acts_a.samples(),
            acts_b.samples()
        )));
    }
    match index.convention() {
        Convention::LckaFlatten => PreprocessedPair::new(
            &acts_a.flattened(),
            &acts_b.flattened(),
            Convention::LckaFlatten,
        ),
        Convention::PositionsAsSamples => {
            if acts_a.positions() != acts_b.positions() {
                return Err(Error::Shape(format!(
                    "position counts differ: {} vs {}",
                    acts_a.positions(),
                    acts_b.positions()
                )));
            }
            PreprocessedPair::new(
                &acts_a.position_rows(),
                &acts_b.position_rows(),
                Convention::PositionsAsSamples,
            )
        }
    }
}

/// `min_{W,b} ‖A·W + 1·bᵀ − B‖_F`: how far `B` is from any affine image of `A`.
pub fn dm_structural_distance(pair: &PreprocessedPair) -> Result<f64> {
    Ok(affine_least_squares(&pair.a, &pair.b)?.residual)
}

/// Evaluate `index` for every (source layer, target layer) combination.
///
/// Cells that fail are recorded as NaN with a [`CellFailure`](crate::grid::CellFailure)
/// entry rather than aborting the grid.
pub fn structural_grid(
    sources: &[(usize, ActivationSet)],
    targets: &[(usize, ActivationSet)],
    index: Index,
) -> SimilarityGrid {
    let cells: Vec<(usize, usize)> = (0..sources.len())
        .flat_map(|i| (0..targets.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<Result<f64>> = cells
        .par_iter()
        .map(|&(i, j)| index.compute(&sources[i].1, &targets[j].1))
        .collect();
    let mut values = vec![vec![f64::NAN; targets.len()]; sources.len()];
    let mut failures = Vec::new();
    for (&(i, j), r) in cells.iter().zip(results) {
        match r {
            Ok(v) => values[i][j] = v,
            Err(e) => failures.push(crate::grid::CellFailure {
                source: sources[i].0,
                target: targets[j].0,
                message: e.to_string(),
            }),
        }
    }
    let mut grid = SimilarityGrid::new(
        index.name(),
        index.higher_is_similar(),
        sources.iter().map(|s| s.0).collect(),
        targets.iter().map(|t| t.0).collect(),
        values,
    )
    .expect("grid dimensions follow the inputs");
    grid.failures = failures;
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_activations_center_to_zero_for_lcka() {
        let a = ActivationSet::new(4, 1, 3, vec![2.5; 12], None).unwrap();
        let pair = preprocess(&a, &a, Index::Lcka).unwrap();
        assert_eq!(pair.a, Matrix::zeros(4, 3));
        assert!(matches!(lcka(&pair), Err(Error::Degenerate(_))));
    }

    #[test]
    fn positions_as_samples_shape() {
        let data: Vec<f64> = (0..12).map(|v| (v as f64).sin()).collect();
        let a = ActivationSet::new(2, 3, 2, data, None).unwrap();
        let pair = preprocess(&a, &a, Index::Opd).unwrap();
        assert_eq!(pair.a.shape(), (6, 2));
        assert!((pair.a.frobenius_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_counts_rejected() {
        let a = ActivationSet::new(2, 1, 2, vec![0.0, 1.0, 2.0, 3.0], None).unwrap();
        let b = ActivationSet::new(1, 2, 2, vec![0.0, 1.0, 2.0, 3.0], None).unwrap();
        let c = ActivationSet::new(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0], None).unwrap();
        assert!(matches!(
            preprocess(&a, &b, Index::Lcka),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            preprocess(&a, &c, Index::Pwcca),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn index_names_parse() {
        for i in Index::ALL {
            assert_eq!(i.name().parse::<Index>().unwrap(), i);
        }
    }
}
