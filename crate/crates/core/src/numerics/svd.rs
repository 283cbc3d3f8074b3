//! Thin SVD by one-sided (Hestenes) Jacobi rotations.
//!
//! The columns of a working copy of the input are rotated pairwise until they
//! are mutually orthogonal; the column norms are then the singular values and
//! the accumulated rotations form `V`. Pair order is fixed (cyclic by row), so
//! the result is a deterministic function of the input bits. Wide inputs are
//! handled through their transpose.

use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// `m = u · diag(singular_values) · vt` with `k = min(rows, cols)`.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub vt: Matrix,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> Matrix {
        let k = self.singular_values.len();
        let us = Matrix::from_fn(self.u.rows(), k, |i, j| {
            self.u[(i, j)] * self.singular_values[j]
        });
        us.matmul(&self.vt)
            .expect("factor shapes agree by construction")
    }

    pub fn max_singular_value(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    /// Number of singular values strictly above `tol · σ_max`.
    pub fn rank(&self, tol: f64) -> usize {
        let cutoff = tol * self.max_singular_value();
        self.singular_values.iter().filter(|&&s| s > cutoff).count()
    }
}

pub fn svd(m: &Matrix) -> Result<SvdFactors> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::Shape("SVD of an empty matrix".into()));
    }
    m.ensure_finite("SVD input")?;
    if m.rows() >= m.cols() {
        let (u, s, v) = tall(m)?;
        Ok(SvdFactors {
            u,
            singular_values: s,
            vt: v.transpose(),
        })
    } else {
        // mᵀ = U' S V'ᵀ  =>  m = V' S U'ᵀ
        let (u, s, v) = tall(&m.transpose())?;
        Ok(SvdFactors {
            u: v,
            singular_values: s,
            vt: u.transpose(),
        })
    }
}

/// Tall inputs are first reduced to their square triangular factor so the
/// Jacobi sweeps run on an `n x n` problem.
fn tall(m: &Matrix) -> Result<(Matrix, Vec<f64>, Matrix)> {
    if m.rows() == m.cols() {
        return jacobi_tall(m);
    }
    let (q, r) = householder_qr(m);
    let (ur, s, v) = jacobi_tall(&r)?;
    Ok((q.matmul(&ur)?, s, v))
}

/// Thin Householder QR of a tall matrix: `m = q · r`, `q` is `rows x cols`
/// with orthonormal columns and `r` is `cols x cols` upper triangular.
fn householder_qr(m: &Matrix) -> (Matrix, Matrix) {
    let (rows, n) = m.shape();
    let mut a: Vec<Vec<f64>> = (0..n).map(|j| m.column(j)).collect();
    let mut reflectors: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
    for k in 0..n {
        let x = &a[k][k..];
        let norm = dot(x, x).sqrt();
        if norm == 0.0 {
            reflectors.push(None);
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vnorm = dot(&v, &v).sqrt();
        if vnorm == 0.0 {
            reflectors.push(None);
            continue;
        }
        v.iter_mut().for_each(|e| *e /= vnorm);
        for col in a.iter_mut().skip(k) {
            reflect(&mut col[k..], &v);
        }
        reflectors.push(Some(v));
    }
    let r = Matrix::from_fn(n, n, |i, j| if i <= j { a[j][i] } else { 0.0 });
    let mut q: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; rows];
            e[j] = 1.0;
            e
        })
        .collect();
    for (k, v) in reflectors.iter().enumerate().rev() {
        if let Some(v) = v {
            for col in q.iter_mut() {
                reflect(&mut col[k..], v);
            }
        }
    }
    (Matrix::from_fn(rows, n, |i, j| q[j][i]), r)
}

#[inline]
fn reflect(x: &mut [f64], v: &[f64]) {
    let proj = 2.0 * dot(x, v);
    x.iter_mut().zip(v).for_each(|(e, vi)| *e -= proj * vi);
}

/// Returns `(u, s, v)` for a matrix with `rows >= cols`.
fn jacobi_tall(m: &Matrix) -> Result<(Matrix, Vec<f64>, Matrix)> {
    let (rows, n) = m.shape();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| m.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let tol = f64::EPSILON * rows as f64;
    // Columns below eps·‖m‖_F end up in the null space anyway (see the
    // cutoff below); rotating them only chases subnormal round-off.
    let fro: f64 = cols.iter().map(|c| dot(c, c)).sum::<f64>().sqrt();
    let negligible = (f64::EPSILON * fro).powi(2);

    let mut converged = n < 2;
    let mut worst = 0.0;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        worst = 0.0_f64;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                if alpha <= negligible || beta <= negligible {
                    continue;
                }
                let gamma = dot(&cols[p], &cols[q]);
                let off = gamma.abs() / (alpha.sqrt() * beta.sqrt());
                worst = worst.max(off);
                if off <= tol {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = cols.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
                let (lo, hi) = v.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            sweeps: MAX_SWEEPS,
            residual: worst,
        });
    }

    let norms: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));

    let sigma_max = norms[order[0]];
    let null_cutoff = sigma_max * f64::EPSILON * rows as f64;
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut pending = Vec::new();
    let mut s = Vec::with_capacity(n);
    for (slot, &j) in order.iter().enumerate() {
        s.push(norms[j]);
        if norms[j] > null_cutoff && norms[j] > 0.0 {
            u_cols.push(cols[j].iter().map(|x| x / norms[j]).collect());
        } else {
            u_cols.push(Vec::new());
            pending.push(slot);
        }
    }
    // Directions for (numerically) zero singular values are arbitrary; fill
    // them with an orthonormal completion so U keeps orthonormal columns.
    for slot in pending {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for k in 0..rows {
            let mut e = vec![0.0; rows];
            e[k] = 1.0;
            for _ in 0..2 {
                for other in u_cols.iter().filter(|c| !c.is_empty()) {
                    let proj = dot(&e, other);
                    e.iter_mut().zip(other).for_each(|(x, o)| *x -= proj * o);
                }
            }
            let norm = dot(&e, &e).sqrt();
            if best.as_ref().is_none_or(|(b, _)| norm > *b) {
                best = Some((norm, e));
            }
            if norm > 0.5 {
                break;
            }
        }
        let (norm, mut e) = best.expect("rows >= cols leaves room for a completion");
        e.iter_mut().for_each(|x| *x /= norm);
        u_cols[slot] = e;
    }

    let u = Matrix::from_fn(rows, n, |i, j| u_cols[j][i]);
    let v = Matrix::from_fn(n, n, |i, j| v[order[j]][i]);
    Ok((u, s, v))
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_values_sorted() {
        let f = svd(&Matrix::from_diag(&[1.0, 3.0])).unwrap();
        assert_eq!(f.singular_values, vec![3.0, 1.0]);
    }

    #[test]
    fn zero_matrix_has_orthonormal_u() {
        let f = svd(&Matrix::zeros(3, 3)).unwrap();
        assert_eq!(f.singular_values, vec![0.0; 3]);
        let utu = f.u.t_matmul(&f.u).unwrap();
        assert!(utu.sub(&Matrix::identity(3)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn wide_input_goes_through_transpose() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let f = svd(&m).unwrap();
        assert_eq!(f.u.shape(), (2, 2));
        assert_eq!(f.vt.shape(), (2, 3));
        assert!(f.reconstruct().sub(&m).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let m = Matrix::from_rows(&[vec![1.0, f64::NAN]]).unwrap();
        assert!(matches!(svd(&m), Err(Error::NonFinite(_))));
    }
}
