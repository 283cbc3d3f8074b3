use super::PreprocessedPair;
use crate::error::{Error, Result};

/// Linear CKA in feature space: `‖BᵀA‖_F² / (‖AᵀA‖_F · ‖BᵀB‖_F)`.
pub fn lcka(pair: &PreprocessedPair) -> Result<f64> {
    let (a, b) = (&pair.a, &pair.b);
    let cross = b.t_matmul(a)?.frobenius_norm_sq();
    let denom = a.t_matmul(a)?.frobenius_norm() * b.t_matmul(b)?.frobenius_norm();
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::Degenerate(
            "LCKA of an all-zero representation".into(),
        ));
    }
    Ok(cross / denom)
}
