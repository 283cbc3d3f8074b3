//! Run a JSON experiment config end to end, the library equivalent of the
//! `repsim` binary.
//!
//! cargo run --release --example run_config -- configs/ood.json [threads]

use std::path::PathBuf;

use repsim::harness::{run_experiment_with_threads, ExperimentConfig};

fn main() -> repsim::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = PathBuf::from(args.next().unwrap_or_else(|| "configs/ood.json".into()));
    let threads = args.next().and_then(|t| t.parse().ok());
    let cfg = ExperimentConfig::load(&path)?;
    let outcome = run_experiment_with_threads(&cfg, threads)?;
    for stage in &outcome.manifest.stages {
        println!(
            "{:<28} {:?} ({} artifacts)",
            stage.name,
            stage.status,
            stage.artifacts.len()
        );
    }
    println!("outputs in {}", outcome.output_dir.display());
    std::process::exit(outcome.exit_code());
}
