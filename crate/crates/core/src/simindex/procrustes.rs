use super::PreprocessedPair;
use crate::error::Result;
use crate::numerics::{nuclear_norm, svd, Matrix};

/// Orthogonal `R*` minimizing `‖B − A·R‖_F`, from the SVD `AᵀB = U·S·Vᵀ`.
///
/// When the two views have different widths the narrower one is padded with
/// zero columns, so `R*` is square with side `max(p1, p2)`.
pub fn procrustes_solve(pair: &PreprocessedPair) -> Result<Matrix> {
    let p = pair.a.cols().max(pair.b.cols());
    let a = pair.a.pad_columns(p);
    let b = pair.b.pad_columns(p);
    let f = svd(&a.t_matmul(&b)?)?;
    f.u.matmul(&f.vt)
}

/// Orthogonal Procrustes distance `‖A‖_F² + ‖B‖_F² − 2‖BᵀA‖_*`, clamped at 0.
pub fn opd(pair: &PreprocessedPair) -> Result<f64> {
    let nuc = nuclear_norm(&pair.b.t_matmul(&pair.a)?)?;
    let d = pair.a.frobenius_norm_sq() + pair.b.frobenius_norm_sq() - 2.0 * nuc;
    Ok(d.max(0.0))
}
