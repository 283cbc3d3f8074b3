//! Specificity test: compare a layer of one instance with every layer of
//! other instances and correlate distances with probe-accuracy gaps.
//!
//! cargo run --release --example specificity

use repsim::harness::{generate_dataset, DatasetSpec, Generator};
use repsim::nets::{train, FeedforwardNet, Nonlinearity, TrainConfig};
use repsim::stats::{specificity_test, TestConfig, TestIndex};

fn main() -> repsim::Result<()> {
    let data = generate_dataset(&DatasetSpec::new(Generator::Spiral, 1500, 3, 1))?;
    let nets = (0..3)
        .map(|seed| {
            let mut net = FeedforwardNet::init(&[2, 24, 24, 24, 24, 3], Nonlinearity::Relu, seed)?;
            train(
                &mut net,
                &data,
                &TrainConfig {
                    epochs: 50,
                    learning_rate: 3e-3,
                    seed,
                    ..TrainConfig::default()
                },
            )?;
            Ok(net)
        })
        .collect::<repsim::Result<Vec<_>>>()?;

    let layers: Vec<usize> = (1..nets[0].depth()).collect();
    for index in [TestIndex::Lcka, TestIndex::Opd, TestIndex::DmFunctional] {
        let report = specificity_test(&nets, &layers, &data, index, &TestConfig::default())?;
        for row in report.summaries() {
            let k = row.kendall.map_or("n/a".into(), |k| {
                format!("{:+.3} (p={:.3})", k.statistic, k.p_value)
            });
            println!(
                "{:<14} {:<10} n={:<3} kendall {k}",
                index.name(),
                row.scope,
                row.n
            );
        }
    }
    Ok(())
}
