//! Shared helpers and independent oracles for the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use repsim::numerics::Matrix;
use repsim::rng::SplitMix64;

pub fn gaussian(rng: &mut SplitMix64, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random orthogonal matrix from the QR factor of a Gaussian one.
pub fn orthogonal(rng: &mut SplitMix64, n: usize) -> Matrix {
    let q = to_na(&gaussian(rng, n, n)).qr().q();
    from_na(&q)
}

pub fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

pub fn from_na(m: &DMatrix<f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn centering(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64)
}

/// Linear CKA through centered Gram matrices: `HSIC(K, L) / sqrt(HSIC(K, K)·HSIC(L, L))`.
pub fn cka_gram_oracle(x: &Matrix, y: &Matrix) -> f64 {
    let (x, y) = (to_na(x), to_na(y));
    let h = centering(x.nrows());
    let k = &h * (&x * x.transpose()) * &h;
    let l = &h * (&y * y.transpose()) * &h;
    let hsic = |a: &DMatrix<f64>, b: &DMatrix<f64>| a.component_mul(b).sum();
    hsic(&k, &l) / (hsic(&k, &k) * hsic(&l, &l)).sqrt()
}

/// Residual of the affine least-squares fit solved with the normal equations.
pub fn affine_residual_oracle(a: &Matrix, b: &Matrix) -> f64 {
    let n = a.rows();
    let design = DMatrix::from_fn(
        n,
        a.cols() + 1,
        |i, j| {
            if j < a.cols() {
                a[(i, j)]
            } else {
                1.0
            }
        },
    );
    let target = to_na(b);
    let gram = design.transpose() * &design;
    let rhs = design.transpose() * &target;
    let beta = gram.cholesky().expect("full column rank").solve(&rhs);
    (design * beta - target).norm()
}

/// Canonical correlations as the singular values of `Q_aᵀ Q_b` (thin QR).
pub fn canonical_correlations_oracle(a: &Matrix, b: &Matrix) -> Vec<f64> {
    let qa = to_na(a).qr().q();
    let qb = to_na(b).qr().q();
    let mut s: Vec<f64> = (qa.transpose() * qb)
        .singular_values()
        .iter()
        .copied()
        .collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

fn sign(v: f64) -> i64 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Kendall tau-b straight from the pair definition.
pub fn kendall_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut s, mut tx, mut ty, mut pairs) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (sign(x[i] - x[j]), sign(y[i] - y[j]));
            s += a * b;
            pairs += 1;
            tx += i64::from(a == 0);
            ty += i64::from(b == 0);
        }
    }
    s as f64 / (((pairs - tx) as f64) * ((pairs - ty) as f64)).sqrt()
}

/// Average ranks (1-based) by counting, no sorting.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&a| {
            let below = v.iter().filter(|&&b| b < a).count() as f64;
            let equal = v.iter().filter(|&&b| b == a).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Spearman rho as the Pearson correlation of average ranks.
pub fn spearman_oracle(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// `P(pos > neg) + ½·P(pos = neg)` over all pairs.
pub fn auroc_oracle(neg: &[f64], pos: &[f64]) -> f64 {
    let mut u = 0.0;
    for &p in pos {
        for &n in neg {
            if p > n {
                u += 1.0;
            } else if p == n {
                u += 0.5;
            }
        }
    }
    u / (neg.len() as f64 * pos.len() as f64)
}

/// Small integer-valued sample so ties are common.
pub fn tied_sample(rng: &mut SplitMix64, n: usize, levels: i32) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0..levels) as f64).collect()
}

/// Central finite difference of `f` at `x` along coordinate `k`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], k: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[k] += h;
    xm[k] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

/// Relative error with a floor so near-zero gradients compare absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}
