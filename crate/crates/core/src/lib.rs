pub mod activations;
pub mod error;
pub mod grid;
pub mod harness;
pub mod nets;
pub mod numerics;
pub mod ood;
pub mod rng;
pub mod simindex;
pub mod stats;
pub mod stitching;

pub use activations::ActivationSet;
pub use error::{Error, Result};
