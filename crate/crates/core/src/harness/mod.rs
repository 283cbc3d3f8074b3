//! Experiment plumbing: synthetic datasets, activation files, JSON experiment
//! configs, the stage runner and heatmap output.

mod actfile;
mod config;
mod data;
mod heatmap;
mod run;

pub use actfile::{
    load_activations, read_activations, save_activations, write_activations, ACTIVATION_MAGIC,
    ACTIVATION_VERSION,
};
pub use config::{
    default_ranks, ExperimentConfig, ExperimentKind, Method, ModelSpec, NoiseSpace, OodSettings,
    PairPolicy, StitchSettings, TestSettings, CONFIG_SCHEMA_VERSION,
};
pub use data::{extract_activations, generate_dataset, inflated_box_noise, DatasetSpec, Generator};
pub use heatmap::{emit_heatmap, ramp, svg_string, write_ppm, HeatmapFiles, CELL_PIXELS};
pub use run::{
    heatmap_from_csv, run_experiment, run_experiment_with_threads, Manifest, RunOutcome,
    SeedRecord, StageRecord, StageStatus, FULL_SCALE_TLM_CONTEXT,
};
