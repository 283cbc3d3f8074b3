use super::PreprocessedPair;
use crate::error::{Error, Result};
use crate::numerics::{svd, Matrix};

/// Singular values at or below this fraction of the largest are dropped when
/// whitening a view.
pub const CCA_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct CcaResult {
    /// Canonical correlations, non-increasing, clamped to `[0, 1]`.
    pub coefficients: Vec<f64>,
    /// `p1 x k`; column `i` is `w_A^i`, so `A · w_A^i` has unit norm.
    pub weights_a: Matrix,
    /// `p2 x k`.
    pub weights_b: Matrix,
    /// `α_i = Σ_j |⟨A w_A^i, a_j⟩|` over the columns `a_j` of `A`.
    pub alphas: Vec<f64>,
}

struct Whitened {
    /// Orthonormal basis of the column space, `n x r`.
    basis: Matrix,
    /// Maps basis coordinates back to feature weights: `V_r · S_r⁻¹`, `p x r`.
    to_weights: Matrix,
}

fn whiten(m: &Matrix, view: &str) -> Result<Whitened> {
    let f = svd(m)?;
    let r = f.rank(CCA_RANK_TOL);
    if r == 0 {
        return Err(Error::Degenerate(format!("CCA view {view} has rank 0")));
    }
    let basis = f.u.leading_columns(r);
    let to_weights = Matrix::from_fn(m.cols(), r, |i, j| f.vt[(j, i)] / f.singular_values[j]);
    Ok(Whitened { basis, to_weights })
}

/// Canonical correlation analysis with within-view orthogonal canonical
/// variates. Rank-deficient views are truncated to their effective rank.
pub fn cca(pair: &PreprocessedPair) -> Result<CcaResult> {
    let wa = whiten(&pair.a, "A")?;
    let wb = whiten(&pair.b, "B")?;
    let cross = wa.basis.t_matmul(&wb.basis)?;
    let f = svd(&cross)?;
    let k = f.singular_values.len();
    let coefficients: Vec<f64> = f
        .singular_values
        .iter()
        .map(|&r| r.clamp(0.0, 1.0))
        .collect();
    let p = f.u.leading_columns(k);
    let q = Matrix::from_fn(f.vt.cols(), k, |i, j| f.vt[(j, i)]);
    let weights_a = wa.to_weights.matmul(&p)?;
    let weights_b = wb.to_weights.matmul(&q)?;

    // Canonical variates A·w_A = basis_A · P; α from their overlap with A's columns.
    let variates = wa.basis.matmul(&p)?;
    let overlap = pair.a.t_matmul(&variates)?;
    let alphas = (0..k)
        .map(|i| (0..overlap.rows()).map(|j| overlap[(j, i)].abs()).sum())
        .collect();
    Ok(CcaResult {
        coefficients,
        weights_a,
        weights_b,
        alphas,
    })
}

/// Projection-weighted CCA. The first matrix of the pair is the weighting view.
pub fn pwcca(pair: &PreprocessedPair) -> Result<f64> {
    let res = cca(pair)?;
    let total: f64 = res.alphas.iter().sum();
    if total == 0.0 || !total.is_finite() {
        return Err(Error::Degenerate(
            "all PWCCA projection weights are zero".into(),
        ));
    }
    let weighted: f64 = res
        .alphas
        .iter()
        .zip(&res.coefficients)
        .map(|(a, r)| a * r)
        .sum();
    Ok(weighted / total)
}
