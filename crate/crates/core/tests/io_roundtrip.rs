//! File formats survive a write/read cycle.

mod common;

use common::*;
use rand::Rng;
use repsim::grid::SimilarityGrid;
use repsim::harness::{read_activations, write_activations, ExperimentConfig};
use repsim::nets::{read_checkpoint, write_checkpoint, FeedforwardNet, Nonlinearity};
use repsim::ood::{load_detector, save_detector, EnergyDetector};
use repsim::rng::rng;
use repsim::ActivationSet;

#[test]
fn activation_files_are_bit_exact() {
    let mut r = rng(1);
    for k in 0..100 {
        let (n, s, c) = (
            r.random_range(1..20),
            r.random_range(1..4),
            r.random_range(1..9),
        );
        let mut m = gaussian(&mut r, n * s, c);
        // awkward values must survive too
        if k % 10 == 0 {
            m.as_mut_slice()[0] = -0.0;
            *m.as_mut_slice().last_mut().unwrap() = f64::MIN_POSITIVE / 3.0;
        }
        let labels = (k % 2 == 0).then(|| (0..n).map(|_| r.random_range(0..5)).collect());
        let acts = ActivationSet::from_position_rows(m, s, labels).unwrap();
        let mut buf = Vec::new();
        write_activations(&acts, &mut buf).unwrap();
        let back = read_activations(buf.as_slice()).unwrap();
        assert_eq!(back.dims(), acts.dims());
        assert_eq!(back.labels(), acts.labels());
        let bits = |a: &ActivationSet| a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&acts));
    }
}

#[test]
fn truncated_activation_file_is_rejected() {
    let acts = ActivationSet::from_matrix(gaussian(&mut rng(2), 4, 3), None).unwrap();
    let mut buf = Vec::new();
    write_activations(&acts, &mut buf).unwrap();
    assert!(read_activations(&buf[..buf.len() - 1]).is_err());
    buf[0] = b'X';
    assert!(read_activations(buf.as_slice()).is_err());
}

#[test]
fn checkpoints_round_trip() {
    let net = FeedforwardNet::init(&[3, 7, 5, 2], Nonlinearity::Relu, 4).unwrap();
    let mut buf = Vec::new();
    write_checkpoint(&net, &mut buf).unwrap();
    assert_eq!(read_checkpoint(buf.as_slice()).unwrap(), net);
}

#[test]
fn detectors_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let net = FeedforwardNet::init(&[4, 6, 3], Nonlinearity::Relu, 5).unwrap();
    let mut det = EnergyDetector::new(net, -7.0, -3.0, 0.1).unwrap();
    det.fit_standardization(&gaussian(&mut rng(6), 50, 4))
        .unwrap();
    let stem = dir.path().join("det");
    save_detector(&det, &stem).unwrap();
    assert_eq!(load_detector(&stem).unwrap(), det);
}

#[test]
fn grid_csv_round_trips() {
    let mut r = rng(7);
    let values: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..3).map(|_| r.random_range(-1e3..1e3)).collect())
        .collect();
    let mut grid = SimilarityGrid::new(
        "lcka",
        true,
        vec![1, 2, 3, 4],
        vec![2, 4, 6],
        values.clone(),
    )
    .unwrap();
    grid.values[1][2] = f64::NAN;
    let back = SimilarityGrid::read_csv(grid.to_csv_string().unwrap().as_bytes()).unwrap();
    assert_eq!(back.index, grid.index);
    assert_eq!(back.higher_is_similar, grid.higher_is_similar);
    assert_eq!(
        (&back.source_layers, &back.target_layers),
        (&grid.source_layers, &grid.target_layers)
    );
    for (a, b) in back
        .values
        .iter()
        .flatten()
        .zip(grid.values.iter().flatten())
    {
        assert!(a.is_nan() && b.is_nan() || (a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
}

#[test]
fn shipped_configs_parse_and_round_trip() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap();
        let again = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(again, cfg, "{}", path.display());
        assert_eq!(again.hash(), cfg.hash());
    }
}

#[test]
fn unknown_config_fields_are_rejected() {
    let text = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/ood.json"),
    )
    .unwrap();
    let bad = text.replacen('{', "{\"colour\": 1,", 1);
    assert!(ExperimentConfig::from_json(&bad).is_err());
}
