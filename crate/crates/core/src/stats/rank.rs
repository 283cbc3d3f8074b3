use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Inputs up to this length get exact permutation p-values.
pub const EXACT_P_MAX_N: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationMethod {
    KendallTauB,
    SpearmanRho,
}

impl CorrelationMethod {
    pub fn name(self) -> &'static str {
        match self {
            CorrelationMethod::KendallTauB => "kendall-tau-b",
            CorrelationMethod::SpearmanRho => "spearman-rho",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankCorrelation {
    pub statistic: f64,
    /// Two-sided.
    pub p_value: f64,
    pub method: CorrelationMethod,
    pub n: usize,
}

fn check_inputs(x: &[f64], y: &[f64], min_len: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "rank correlation of lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < min_len {
        return Err(Error::Argument(format!(
            "rank correlation needs at least {min_len} points, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::Argument(
            "rank correlation input contains NaN".into(),
        ));
    }
    Ok(())
}

fn tied_pairs(sorted: &[f64]) -> i64 {
    let mut total = 0;
    let mut k = 0;
    while k < sorted.len() {
        let mut end = k + 1;
        while end < sorted.len() && sorted[end] == sorted[k] {
            end += 1;
        }
        let t = (end - k) as i64;
        total += t * (t - 1) / 2;
        k = end;
    }
    total
}

/// Count of pairs `i < j` with `v[i] > v[j]`, sorting `v` in the process.
fn count_inversions(v: &mut [f64], buf: &mut Vec<f64>) -> i64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = count_inversions(&mut v[..mid], buf) + count_inversions(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            inv += (mid - i) as i64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    inv
}

struct TauCounts {
    /// Concordant minus discordant pairs.
    s: i64,
    n0: i64,
    ties_x: i64,
    ties_y: i64,
}

// Knight's O(n log n) pair counting.
fn tau_counts(x: &[f64], y: &[f64]) -> TauCounts {
    let n = x.len();
    // `+ 0.0` folds −0.0 into 0.0 so that sorting and tie detection agree.
    let x: Vec<f64> = x.iter().map(|v| v + 0.0).collect();
    let y: Vec<f64> = y.iter().map(|v| v + 0.0).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));
    let xs: Vec<f64> = order.iter().map(|&k| x[k]).collect();
    let mut ys: Vec<f64> = order.iter().map(|&k| y[k]).collect();

    let ties_x = tied_pairs(&xs);
    let mut ties_xy = 0;
    let mut k = 0;
    while k < n {
        let mut end = k + 1;
        while end < n && xs[end] == xs[k] && ys[end] == ys[k] {
            end += 1;
        }
        let t = (end - k) as i64;
        ties_xy += t * (t - 1) / 2;
        k = end;
    }
    let swaps = count_inversions(&mut ys, &mut Vec::with_capacity(n));
    let ties_y = tied_pairs(&ys);
    let n0 = (n as i64) * (n as i64 - 1) / 2;
    TauCounts {
        s: n0 - ties_x - ties_y + ties_xy - 2 * swaps,
        n0,
        ties_x,
        ties_y,
    }
}

fn pairwise_s(x: &[f64], y: &[f64]) -> i64 {
    let mut s = 0;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let dx = x[i].partial_cmp(&x[j]).map_or(0, |o| o as i64);
            let dy = y[i].partial_cmp(&y[j]).map_or(0, |o| o as i64);
            s += dx * dy;
        }
    }
    s
}

/// Visits every permutation of `v` (Heap's algorithm), including the
/// identity.
fn for_each_permutation(v: &mut [f64], mut visit: impl FnMut(&[f64])) {
    let n = v.len();
    let mut c = vec![0usize; n];
    visit(v);
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                v.swap(0, i);
            } else {
                v.swap(c[i], i);
            }
            visit(v);
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

fn permutation_p(y: &[f64], extreme: impl Fn(&[f64]) -> bool) -> f64 {
    let mut perm = y.to_vec();
    let (mut hits, mut total) = (0u64, 0u64);
    for_each_permutation(&mut perm, |p| {
        total += 1;
        if extreme(p) {
            hits += 1;
        }
    });
    hits as f64 / total as f64
}

/// Kendall's tau-b with tie correction. The p-value is two-sided: exact over
/// all permutations of `y` for `n ≤ 8`, otherwise from the normal
/// approximation with variance `2(2n+5) / (9n(n−1))`.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<RankCorrelation> {
    check_inputs(x, y, 2)?;
    let c = tau_counts(x, y);
    if c.n0 == c.ties_x || c.n0 == c.ties_y {
        return Err(Error::Degenerate(
            "Kendall tau is undefined when one input is constant".into(),
        ));
    }
    let statistic = c.s as f64 / (((c.n0 - c.ties_x) as f64) * ((c.n0 - c.ties_y) as f64)).sqrt();
    let n = x.len();
    let p_value = if n <= EXACT_P_MAX_N {
        let observed = c.s.abs();
        permutation_p(y, |p| pairwise_s(x, p).abs() >= observed)
    } else {
        let nf = n as f64;
        let sd = (2.0 * (2.0 * nf + 5.0) / (9.0 * nf * (nf - 1.0))).sqrt();
        erfc((statistic / sd).abs() / std::f64::consts::SQRT_2)
    };
    Ok(RankCorrelation {
        statistic,
        p_value: p_value.clamp(0.0, 1.0),
        method: CorrelationMethod::KendallTauB,
        n,
    })
}

/// `2·rank − (n + 1)` with average ranks for ties; always an integer.
fn centered_double_ranks(v: &[f64]) -> Vec<i64> {
    let n = v.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| (v[a] + 0.0).total_cmp(&(v[b] + 0.0)));
    let mut out = vec![0i64; n];
    let mut k = 0;
    while k < n {
        let mut end = k + 1;
        while end < n && v[order[end]] == v[order[k]] {
            end += 1;
        }
        // twice the average rank of positions k+1..=end is k + 1 + end
        let centered = (k + end) as i64 - n as i64;
        for &i in &order[k..end] {
            out[i] = centered;
        }
        k = end;
    }
    out
}

fn rank_cross(cx: &[i64], cy: &[i64]) -> i64 {
    cx.iter().zip(cy).map(|(a, b)| a * b).sum()
}

/// Spearman's rho: Pearson correlation of average ranks. The p-value is
/// two-sided: exact over all permutations of `y` for `n ≤ 8`, otherwise from
/// the t approximation with `n − 2` degrees of freedom.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<RankCorrelation> {
    check_inputs(x, y, 3)?;
    let cx = centered_double_ranks(x);
    let cy = centered_double_ranks(y);
    let sxx = rank_cross(&cx, &cx);
    let syy = rank_cross(&cy, &cy);
    if sxx == 0 || syy == 0 {
        return Err(Error::Degenerate(
            "Spearman rho is undefined when one input is constant".into(),
        ));
    }
    let sxy = rank_cross(&cx, &cy);
    let statistic = sxy as f64 / ((sxx as f64) * (syy as f64)).sqrt();
    let n = x.len();
    let p_value = if n <= EXACT_P_MAX_N {
        let observed = sxy.abs();
        let cy_values: Vec<f64> = cy.iter().map(|&v| v as f64).collect();
        permutation_p(&cy_values, |p| {
            cx.iter()
                .zip(p)
                .map(|(&a, &b)| a * b as i64)
                .sum::<i64>()
                .abs()
                >= observed
        })
    } else if statistic.abs() >= 1.0 {
        0.0
    } else {
        let df = (n - 2) as f64;
        let t = statistic * (df / (1.0 - statistic * statistic)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
        2.0 * dist.sf(t.abs())
    };
    Ok(RankCorrelation {
        statistic,
        p_value: p_value.clamp(0.0, 1.0),
        method: CorrelationMethod::SpearmanRho,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_small_cases() {
        assert_eq!(
            kendall_tau(&[1., 2., 3., 4.], &[1., 2., 3., 4.])
                .unwrap()
                .statistic,
            1.0
        );
        assert_eq!(
            kendall_tau(&[1., 2., 3., 4.], &[4., 3., 2., 1.])
                .unwrap()
                .statistic,
            -1.0
        );
        let t = kendall_tau(&[1., 2., 3., 4.], &[1., 3., 2., 4.]).unwrap();
        assert!((t.statistic - 2.0 / 3.0).abs() < 1e-15);
        assert!(kendall_tau(&[1., 1., 1.], &[1., 2., 3.]).is_err());
    }

    #[test]
    fn tau_exact_p_for_perfect_order() {
        // Only the identity and the reversal reach |S| = 6 among 24 orders.
        let t = kendall_tau(&[1., 2., 3., 4.], &[1., 2., 3., 4.]).unwrap();
        assert!((t.p_value - 2.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn rho_small_cases() {
        assert_eq!(
            spearman_rho(&[1., 2., 3.], &[1., 2., 3.])
                .unwrap()
                .statistic,
            1.0
        );
        assert_eq!(
            spearman_rho(&[1., 2., 3.], &[1., 3., 2.])
                .unwrap()
                .statistic,
            0.5
        );
        let y = [0.3, -1.0, 2.5, 0.1, 4.0];
        let cubed: Vec<f64> = y.iter().map(|v: &f64| v.powi(3)).collect();
        let x = [1., 2., 3., 4., 5.];
        assert_eq!(
            spearman_rho(&x, &y).unwrap().statistic,
            spearman_rho(&x, &cubed).unwrap().statistic
        );
        assert!(spearman_rho(&[1., 2.], &[1., 2.]).is_err());
    }

    #[test]
    fn approximate_p_values_in_range() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let y: Vec<f64> = (0..30).map(|v| ((v * 7) % 30) as f64).collect();
        for r in [kendall_tau(&x, &y).unwrap(), spearman_rho(&x, &y).unwrap()] {
            assert!((0.0..=1.0).contains(&r.p_value));
        }
        assert_eq!(spearman_rho(&x, &x).unwrap().p_value, 0.0);
    }

    #[test]
    fn inversions_match_brute_force() {
        let v = [3.0, 1.0, 2.0, 2.0, 0.0, 5.0];
        let brute = (0..v.len())
            .flat_map(|i| (i + 1..v.len()).map(move |j| (i, j)))
            .filter(|&(i, j)| v[i] > v[j])
            .count() as i64;
        let mut w = v.to_vec();
        assert_eq!(count_inversions(&mut w, &mut Vec::new()), brute);
    }
}
