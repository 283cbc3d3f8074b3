//! Dense matrix kernels: SVD, pseudoinverse, nuclear norm, low-rank
//! approximation and the centering/normalization used by the indices.

mod matrix;
mod svd;

pub use matrix::{dot, Matrix};
pub use svd::{svd, SvdFactors};

use crate::error::{Error, Result};

/// Default cutoff for [`pseudoinverse`]: machine epsilon times the larger
/// dimension.
pub fn default_rcond(m: &Matrix) -> f64 {
    f64::EPSILON * m.rows().max(m.cols()) as f64
}

/// Moore-Penrose pseudoinverse. Singular values `<= rcond · σ_max` are
/// treated as zero.
pub fn pseudoinverse(m: &Matrix, rcond: f64) -> Result<Matrix> {
    if !(rcond >= 0.0) {
        return Err(Error::Argument(format!(
            "rcond must be non-negative, got {rcond}"
        )));
    }
    let f = svd(m)?;
    let cutoff = rcond * f.max_singular_value();
    let k = f.singular_values.len();
    // A⁺ = V · S⁺ · Uᵀ
    let inv: Vec<f64> = f
        .singular_values
        .iter()
        .map(|&s| if s > cutoff && s > 0.0 { 1.0 / s } else { 0.0 })
        .collect();
    let vs = Matrix::from_fn(m.cols(), k, |i, j| f.vt[(j, i)] * inv[j]);
    vs.matmul_t(&f.u)
}

pub fn nuclear_norm(m: &Matrix) -> Result<f64> {
    Ok(svd(m)?.singular_values.iter().sum())
}

/// Best rank-`r` approximation in the Frobenius norm (truncated SVD).
pub fn low_rank_approx(m: &Matrix, r: usize) -> Result<Matrix> {
    let k = m.rows().min(m.cols());
    if r == 0 || r > k {
        return Err(Error::Argument(format!("rank {r} outside 1..={k}")));
    }
    let f = svd(m)?;
    let us = Matrix::from_fn(m.rows(), r, |i, j| f.u[(i, j)] * f.singular_values[j]);
    let vt = Matrix::from_fn(r, m.cols(), |i, j| f.vt[(i, j)]);
    us.matmul(&vt)
}

/// Least-squares affine fit `source · W + 1·bᵀ ≈ target`, solved through the
/// pseudoinverse of the bias-augmented design matrix `[source | 1]`.
#[derive(Debug, Clone)]
pub struct AffineSolution {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    /// `‖[source | 1]·θ − target‖_F`.
    pub residual: f64,
    /// Numerical rank of the design matrix.
    pub rank: usize,
    pub rank_deficient: bool,
}

pub fn affine_least_squares(source: &Matrix, target: &Matrix) -> Result<AffineSolution> {
    if source.rows() != target.rows() {
        return Err(Error::Shape(format!(
            "source has {} rows, target has {}",
            source.rows(),
            target.rows()
        )));
    }
    let design = source.with_ones_column();
    let rcond = default_rcond(&design);
    let f = svd(&design)?;
    let cutoff = rcond * f.max_singular_value();
    let rank = f
        .singular_values
        .iter()
        .filter(|&&s| s > cutoff && s > 0.0)
        .count();
    let k = f.singular_values.len();
    let inv: Vec<f64> = f
        .singular_values
        .iter()
        .map(|&s| if s > cutoff && s > 0.0 { 1.0 / s } else { 0.0 })
        .collect();
    // θ = V · S⁺ · (Uᵀ · target)
    let mut ut_y = f.u.t_matmul(target)?;
    for (i, &w) in inv.iter().enumerate() {
        ut_y.row_mut(i).iter_mut().for_each(|v| *v *= w);
    }
    let v = Matrix::from_fn(design.cols(), k, |i, j| f.vt[(j, i)]);
    let theta = v.matmul(&ut_y)?;
    let fitted = design.matmul(&theta)?;
    let residual = fitted.sub(target)?.frobenius_norm();
    let c_in = source.cols();
    let weights = Matrix::from_fn(c_in, target.cols(), |i, j| theta[(i, j)]);
    let bias = theta.row(c_in).to_vec();
    Ok(AffineSolution {
        weights,
        bias,
        residual,
        rank,
        rank_deficient: rank < design.cols(),
    })
}

/// Subtract each column's mean.
pub fn center_columns(m: &Matrix) -> Matrix {
    let means = m.column_means();
    let mut out = m.clone();
    for i in 0..out.rows() {
        for (v, mu) in out.row_mut(i).iter_mut().zip(&means) {
            *v -= mu;
        }
    }
    out
}

/// Scale to unit Frobenius norm.
pub fn normalize_frobenius(m: &Matrix) -> Result<Matrix> {
    let norm = m.frobenius_norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Degenerate(
            "cannot normalize a matrix with zero Frobenius norm".into(),
        ));
    }
    Ok(m.scale(1.0 / norm))
}
