//! Sensitivity test: remove principal components from one layer and check
//! that each index's distance grows as the probe accuracy drops.
//!
//! cargo run --release --example sensitivity

use repsim::harness::{
    default_ranks, extract_activations, generate_dataset, DatasetSpec, Generator,
};
use repsim::nets::{train, FeedforwardNet, Nonlinearity, TrainConfig};
use repsim::stats::{sensitivity_test, NetTail, TestConfig, TestIndex};

fn main() -> repsim::Result<()> {
    let data = generate_dataset(&DatasetSpec::new(Generator::Spiral, 1500, 3, 1))?;
    let mut net = FeedforwardNet::init(&[2, 32, 32, 32, 32, 3], Nonlinearity::Relu, 2)?;
    train(
        &mut net,
        &data,
        &TrainConfig {
            epochs: 60,
            learning_rate: 3e-3,
            ..TrainConfig::default()
        },
    )?;

    let layer = 3;
    let acts = extract_activations(&net, &data, layer)?;
    let ranks = default_ranks(acts.channels());
    let tail = NetTail { net: &net, layer };
    for index in TestIndex::ALL {
        let report = sensitivity_test(&acts, &ranks, index, Some(tail), &TestConfig::default())?;
        let tau = report.kendall.map_or(f64::NAN, |k| k.statistic);
        let rho = report.spearman.map_or(f64::NAN, |s| s.statistic);
        println!(
            "{:<14} kendall {tau:+.3}  spearman {rho:+.3}  ({} ranks)",
            index.name(),
            report.rows.len()
        );
    }
    Ok(())
}
