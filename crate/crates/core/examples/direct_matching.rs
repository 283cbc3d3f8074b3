//! Stitch layer 3 of one spiral MLP into layer 3 of another, first with the
//! closed-form affine fit and then refined on the task loss.
//!
//! cargo run --release --example direct_matching

use repsim::harness::{generate_dataset, DatasetSpec, Generator};
use repsim::nets::{accuracy, train, FeedforwardNet, LabeledDataset, Nonlinearity, TrainConfig};
use repsim::stitching::{fit_direct_between, relative_accuracy, train_tlm, StitchSpec};

fn trained(data: &LabeledDataset, seed: u64) -> repsim::Result<FeedforwardNet> {
    let mut net = FeedforwardNet::init(&[2, 32, 32, 32, 32, 3], Nonlinearity::Relu, seed)?;
    let cfg = TrainConfig {
        epochs: 60,
        learning_rate: 3e-3,
        seed,
        ..TrainConfig::default()
    };
    train(&mut net, data, &cfg)?;
    Ok(net)
}

fn main() -> repsim::Result<()> {
    let data = generate_dataset(&DatasetSpec::new(Generator::Spiral, 2000, 3, 1))?;
    let eval = generate_dataset(&DatasetSpec::new(Generator::Spiral, 1000, 3, 2))?;
    let f = trained(&data, 10)?;
    let g = trained(&data, 11)?;
    println!(
        "f accuracy {:.3}, g accuracy {:.3}",
        accuracy(&f, &eval)?,
        accuracy(&g, &eval)?
    );

    let (i, j) = (3, 3);
    let dm = fit_direct_between(&f, i, &g, j, &data, 200, 7)?;
    let spec = StitchSpec {
        source_net: "f".into(),
        source_layer: i,
        target_net: "g".into(),
        target_layer: j,
        map: dm.map.clone(),
    };
    let e = relative_accuracy(&f, &g, &spec, &eval)?;
    println!(
        "direct matching f{i} -> g{j}: residual {:.3}, stitched accuracy {:.3}, relative {:.3}",
        dm.residual, e.stitched_accuracy, e.relative_accuracy
    );

    let cfg = TrainConfig {
        epochs: 5,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    };
    let (map, _) = train_tlm(&f, i, &g, j, &dm.map, &data, &cfg)?;
    let e = relative_accuracy(&f, &g, &StitchSpec { map, ..spec }, &eval)?;
    println!(
        "task loss matching f{i} -> g{j}: stitched accuracy {:.3}, relative {:.3}",
        e.stitched_accuracy, e.relative_accuracy
    );
    Ok(())
}
