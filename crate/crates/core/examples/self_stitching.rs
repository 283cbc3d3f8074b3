//! Direct-matching stitching grid of a network with itself, rendered as a
//! heatmap. The diagonal is the identity stitch.
//!
//! cargo run --release --example self_stitching [out_dir]

use std::path::PathBuf;

use repsim::harness::{emit_heatmap, generate_dataset, DatasetSpec, Generator};
use repsim::nets::{train, FeedforwardNet, Nonlinearity, TrainConfig};
use repsim::stitching::{similarity_grid, StitchGridConfig, StitchMethod};

fn main() -> repsim::Result<()> {
    let out = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "out/examples".into()),
    );
    std::fs::create_dir_all(&out)?;

    let data = generate_dataset(&DatasetSpec::new(Generator::Spiral, 2000, 3, 1))?;
    let eval = generate_dataset(&DatasetSpec::new(Generator::Spiral, 1000, 3, 2))?;
    let mut net = FeedforwardNet::init(&[2, 32, 32, 32, 32, 3], Nonlinearity::Relu, 5)?;
    let cfg = TrainConfig {
        epochs: 60,
        learning_rate: 3e-3,
        ..TrainConfig::default()
    };
    train(&mut net, &data, &cfg)?;

    let layers: Vec<usize> = (1..net.depth()).collect();
    let grid_cfg = StitchGridConfig::new(StitchMethod::DmFunctional, layers, 3);
    let grid = similarity_grid(&net, &net, &grid_cfg, &data, &eval);
    for (row, layer) in grid
        .relative
        .values
        .iter()
        .zip(&grid.relative.source_layers)
    {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
        println!("layer {layer}: {}", cells.join("  "));
    }
    let files = emit_heatmap(&grid.relative, &out.join("self-stitching"))?;
    println!("heatmap written to {}", files.svg.display());
    Ok(())
}
