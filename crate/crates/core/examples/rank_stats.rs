//! Rank correlations with tie handling and AUROC with half-credited ties.
//!
//! cargo run --example rank_stats

use repsim::ood::auroc;
use repsim::stats::{kendall_tau, spearman_rho};

fn main() -> repsim::Result<()> {
    let x = [1.0, 2.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let y = [0.3, 0.1, 0.4, 0.4, 0.9, 0.8, 1.2];
    let k = kendall_tau(&x, &y)?;
    let s = spearman_rho(&x, &y)?;
    println!(
        "kendall tau-b {:+.4} p={:.4} (exact below 9 samples)",
        k.statistic, k.p_value
    );
    println!("spearman rho  {:+.4} p={:.4}", s.statistic, s.p_value);

    let inliers = [-9.1, -8.7, -8.7, -7.9, -6.5];
    let outliers = [-8.7, -5.0, -4.2, -3.3];
    println!("auroc {:.4}", auroc(&inliers, &outliers)?);
    Ok(())
}
