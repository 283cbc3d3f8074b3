//! Layer identification: for two instances of one architecture, does each
//! index rank the same-depth layer as the closest match?
//!
//! cargo run --release --example layer_identification

use repsim::harness::{extract_activations, generate_dataset, DatasetSpec, Generator};
use repsim::nets::{train, FeedforwardNet, Nonlinearity, TrainConfig};
use repsim::simindex::{structural_grid, Index};
use repsim::stats::{layer_identification, IdentificationMode};

fn main() -> repsim::Result<()> {
    let data = generate_dataset(&DatasetSpec::new(Generator::Spiral, 1500, 3, 1))?;
    let eval = generate_dataset(&DatasetSpec::new(Generator::Spiral, 500, 3, 2))?;
    let mut nets = Vec::new();
    for seed in 0..2 {
        let mut net =
            FeedforwardNet::init(&[2, 32, 32, 32, 32, 32, 32, 3], Nonlinearity::Relu, seed)?;
        train(
            &mut net,
            &data,
            &TrainConfig {
                epochs: 60,
                learning_rate: 3e-3,
                seed,
                ..TrainConfig::default()
            },
        )?;
        nets.push(net);
    }
    let acts = |net: &FeedforwardNet| -> repsim::Result<Vec<_>> {
        (1..net.depth())
            .map(|l| Ok((l, extract_activations(net, &eval, l)?)))
            .collect()
    };
    let (a, b) = (acts(&nets[0])?, acts(&nets[1])?);

    println!("{:<14} {:>6} {:>6}", "index", "intra", "inter");
    for index in Index::ALL {
        let intra =
            layer_identification(&structural_grid(&a, &a, index), IdentificationMode::Intra)?;
        let inter =
            layer_identification(&structural_grid(&a, &b, index), IdentificationMode::Inter)?;
        println!(
            "{:<14} {:>6.2} {:>6.2}",
            index.name(),
            intra.accuracy,
            inter.accuracy
        );
    }
    Ok(())
}
