use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    fit_direct_between, relative_accuracy, train_tlm, AffineMap, StitchEval, StitchSpec,
    DEFAULT_DM_SAMPLES,
};
use crate::error::Result;
use crate::grid::{CellFailure, SimilarityGrid};
use crate::nets::{FeedforwardNet, LabeledDataset, TrainConfig};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StitchMethod {
    /// Direct matching, scored by the stitched network's relative accuracy.
    DmFunctional,
    /// Task loss matching initialized from direct matching.
    Tlm,
}

impl StitchMethod {
    pub fn name(self) -> &'static str {
        match self {
            StitchMethod::DmFunctional => "dm-functional",
            StitchMethod::Tlm => "tlm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StitchGridConfig {
    pub method: StitchMethod,
    pub source_layers: Vec<usize>,
    pub target_layers: Vec<usize>,
    /// Samples used for the direct-matching fit (also the TLM initialization).
    pub dm_samples: usize,
    /// Only used by [`StitchMethod::Tlm`]; its seed is replaced per cell.
    pub tlm: TrainConfig,
    pub seed: u64,
}

impl StitchGridConfig {
    pub fn new(method: StitchMethod, layers: Vec<usize>, seed: u64) -> Self {
        Self {
            method,
            source_layers: layers.clone(),
            target_layers: layers,
            dm_samples: DEFAULT_DM_SAMPLES,
            tlm: TrainConfig::default(),
            seed,
        }
    }
}

/// Outcome of stitching every source layer into every target layer.
#[derive(Debug, Clone)]
pub struct StitchGrid {
    /// Relative accuracy per cell.
    pub relative: SimilarityGrid,
    /// Raw stitched accuracy per cell.
    pub stitched: SimilarityGrid,
    /// Fitted maps, `None` where the cell failed.
    pub maps: Vec<Vec<Option<AffineMap>>>,
}

fn stitch_cell(
    f: &FeedforwardNet,
    g: &FeedforwardNet,
    i: usize,
    j: usize,
    cfg: &StitchGridConfig,
    fit_data: &LabeledDataset,
    eval_data: &LabeledDataset,
) -> Result<(AffineMap, StitchEval)> {
    let cell_seed = derive_seed(cfg.seed, &[i as u64, j as u64]);
    let dm = fit_direct_between(f, i, g, j, fit_data, cfg.dm_samples, cell_seed)?;
    let map = match cfg.method {
        StitchMethod::DmFunctional => dm.map,
        StitchMethod::Tlm => {
            let tcfg = TrainConfig {
                seed: derive_seed(cell_seed, &[1]),
                ..cfg.tlm.clone()
            };
            train_tlm(f, i, g, j, &dm.map, fit_data, &tcfg)?.0
        }
    };
    let spec = StitchSpec {
        source_net: String::from("f"),
        source_layer: i,
        target_net: String::from("g"),
        target_layer: j,
        map,
    };
    let eval = relative_accuracy(f, g, &spec, eval_data)?;
    Ok((spec.map, eval))
}

/// Stitch every configured source layer of `f` into every target layer of
/// `g`. Pass the same network twice for self-stitching. Each cell uses its
/// own derived seed, so the result does not depend on evaluation order.
pub fn similarity_grid(
    f: &FeedforwardNet,
    g: &FeedforwardNet,
    cfg: &StitchGridConfig,
    fit_data: &LabeledDataset,
    eval_data: &LabeledDataset,
) -> StitchGrid {
    let (rows, cols) = (cfg.source_layers.len(), cfg.target_layers.len());
    let cells: Vec<(usize, usize)> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .collect();
    let results: Vec<Result<(AffineMap, StitchEval)>> = cells
        .par_iter()
        .map(|&(r, c)| {
            stitch_cell(
                f,
                g,
                cfg.source_layers[r],
                cfg.target_layers[c],
                cfg,
                fit_data,
                eval_data,
            )
        })
        .collect();

    let mut rel = vec![vec![f64::NAN; cols]; rows];
    let mut raw = vec![vec![f64::NAN; cols]; rows];
    let mut maps = vec![vec![None; cols]; rows];
    let mut failures = Vec::new();
    for (&(r, c), res) in cells.iter().zip(results) {
        match res {
            Ok((map, eval)) => {
                rel[r][c] = eval.relative_accuracy;
                raw[r][c] = eval.stitched_accuracy;
                maps[r][c] = Some(map);
            }
            Err(e) => failures.push(CellFailure {
                source: cfg.source_layers[r],
                target: cfg.target_layers[c],
                message: e.to_string(),
            }),
        }
    }
    let mk = |name: String, values| {
        let mut g = SimilarityGrid::new(
            name,
            true,
            cfg.source_layers.clone(),
            cfg.target_layers.clone(),
            values,
        )
        .expect("grid dimensions follow the layer lists");
        g.seeds = vec![cfg.seed];
        g.failures = failures.clone();
        g
    };
    StitchGrid {
        relative: mk(cfg.method.name().to_string(), rel),
        stitched: mk(format!("{}-stitched-accuracy", cfg.method.name()), raw),
        maps,
    }
}
