//! Command-line front end. Every verb except `heatmap` runs one experiment
//! kind from a JSON config; the verb decides the kind.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use repsim::harness::{
    heatmap_from_csv, run_experiment_with_threads, ExperimentConfig, ExperimentKind,
};
use repsim::Error;

#[derive(Parser)]
#[command(
    name = "repsim",
    version,
    about = "Representation similarity experiments on toy networks"
)]
struct Cli {
    /// JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; all cores when omitted. Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Train the model instances and write checkpoints.
    Train,
    /// Stitching grids only (TLM and DM-functional methods of the config).
    Stitch,
    /// Similarity grids for every configured method.
    Simgrid,
    /// Detector training and OOD separability grids.
    Ood,
    /// Sensitivity test over low-rank approximations.
    Sensitivity,
    /// Specificity test across instances and layers.
    Specificity,
    /// Layer identification table.
    Sanity,
    /// Render a grid CSV as PPM and SVG.
    Heatmap {
        /// Grid CSV written by an earlier run.
        grid: PathBuf,
    },
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Validation(_) => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    let kind = match cli.verb {
        Verb::Heatmap { grid } => {
            let out = cli.out.unwrap_or_else(|| {
                grid.parent()
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from("."))
            });
            let stem = heatmap_from_csv(&grid, &out)?;
            println!("wrote {}.{{csv,ppm,svg}}", stem.display());
            return Ok(0);
        }
        Verb::Train => ExperimentKind::TrainModels,
        Verb::Stitch | Verb::Simgrid => ExperimentKind::SimilarityGrid,
        Verb::Ood => ExperimentKind::OodGrid,
        Verb::Sensitivity => ExperimentKind::Sensitivity,
        Verb::Specificity => ExperimentKind::Specificity,
        Verb::Sanity => ExperimentKind::SanityCheck,
    };
    let path = cli
        .config
        .ok_or_else(|| Error::Validation("--config is required for this verb".into()))?;
    let mut cfg = ExperimentConfig::load(&path)?;
    cfg.kind = kind;
    if matches!(cli.verb, Verb::Stitch) {
        cfg.methods.retain(|m| m.stitch().is_some());
        if cfg.methods.is_empty() {
            return Err(Error::Validation(
                "stitch needs at least one stitching method (tlm, dm-functional)".into(),
            ));
        }
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    let outcome = run_experiment_with_threads(&cfg, cli.threads)?;
    for stage in &outcome.manifest.stages {
        eprintln!("{:<28} {:?}", stage.name, stage.status);
        for m in &stage.messages {
            eprintln!("    {m}");
        }
    }
    println!("{}", outcome.output_dir.join("manifest.json").display());
    Ok(outcome.exit_code() as u8)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
