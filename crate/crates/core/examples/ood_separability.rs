//! Train an energy detector on one layer's activations and score how well it
//! separates the layer from itself, from noise and from a shifted copy.
//!
//! cargo run --release --example ood_separability

use repsim::harness::{
    extract_activations, generate_dataset, inflated_box_noise, DatasetSpec, Generator,
};
use repsim::nets::{train, FeedforwardNet, Nonlinearity, TrainConfig};
use repsim::ood::{separability, train_detector, DetectorConfig};
use repsim::ActivationSet;

fn main() -> repsim::Result<()> {
    let spec = DatasetSpec {
        separation: 6.0,
        noise: 0.5,
        ..DatasetSpec::new(Generator::Blobs, 1500, 3, 5)
    };
    let data = generate_dataset(&spec)?;
    let mut net = FeedforwardNet::init(&[2, 16, 16, 16, 3], Nonlinearity::Relu, 1)?;
    train(
        &mut net,
        &data,
        &TrainConfig {
            epochs: 40,
            learning_rate: 3e-3,
            ..TrainConfig::default()
        },
    )?;

    let layer = 2;
    let id = extract_activations(&net, &data, layer)?;
    // auxiliary outliers: uniform inputs over an inflated bounding box
    let noise_inputs = inflated_box_noise(&data.inputs, 3000, 3.0, 9)?;
    let noise = ActivationSet::from_matrix(net.forward_to(layer, &noise_inputs)?, None)?;
    let (det, _) = train_detector(&id, &noise, &DetectorConfig::default())?;

    let pooled = id.pooled();
    let shift: Vec<f64> = (0..pooled.cols())
        .map(|j| {
            let col = pooled.column(j);
            let (lo, hi) = col
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                    (a.min(v), b.max(v))
                });
            hi - lo
        })
        .collect();
    let far = id.translated(&shift)?;

    println!(
        "separability(layer, layer)        {:.4}",
        separability(&det, &id, &id)?
    );
    println!(
        "separability(layer, input noise)  {:.4}",
        separability(&det, &id, &noise)?
    );
    println!(
        "separability(layer, shifted copy) {:.4}",
        separability(&det, &id, &far)?
    );
    Ok(())
}
