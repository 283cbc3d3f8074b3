use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SimilarityGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdentificationMode {
    /// A network against itself: the best match of a layer should be itself.
    Intra,
    /// Two instances of one architecture: the best match should be the
    /// layer with the same index.
    Inter,
}

impl IdentificationMode {
    pub fn name(self) -> &'static str {
        match self {
            IdentificationMode::Intra => "intra",
            IdentificationMode::Inter => "inter",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    /// `correct / evaluated`.
    pub accuracy: f64,
    pub correct: usize,
    /// Source layers with at least one finite score.
    pub evaluated: usize,
    /// Non-finite cells that were skipped.
    pub nan_cells: usize,
    /// Rows whose best score was shared by the corresponding layer and at
    /// least one other layer. Such rows count as correct.
    pub ties: usize,
}

/// Fraction of source layers whose most similar target layer (highest
/// similarity or lowest distance, per the grid direction) is the layer with
/// the same index.
pub fn layer_identification(
    grid: &SimilarityGrid,
    mode: IdentificationMode,
) -> Result<Identification> {
    if mode == IdentificationMode::Intra && grid.source_layers != grid.target_layers {
        return Err(Error::Argument(
            "intra-network identification needs the same source and target layers".into(),
        ));
    }
    let (rows, cols) = grid.shape();
    let (mut correct, mut evaluated, mut nan_cells, mut ties) = (0, 0, 0, 0);
    for r in 0..rows {
        let layer = grid.source_layers[r];
        let want = grid
            .target_layers
            .iter()
            .position(|&t| t == layer)
            .ok_or_else(|| {
                Error::Argument(format!(
                    "target layers have no counterpart for source layer {layer}"
                ))
            })?;
        // Orient so that larger is always more similar.
        let score = |c: usize| {
            let v = grid.get(r, c);
            if grid.higher_is_similar {
                v
            } else {
                -v
            }
        };
        let finite: Vec<usize> = (0..cols).filter(|&c| grid.get(r, c).is_finite()).collect();
        nan_cells += cols - finite.len();
        let Some(best) = finite.iter().map(|&c| score(c)).reduce(f64::max) else {
            continue;
        };
        evaluated += 1;
        let winners: Vec<usize> = finite
            .iter()
            .copied()
            .filter(|&c| score(c) == best)
            .collect();
        if winners.contains(&want) {
            correct += 1;
            if winners.len() > 1 {
                ties += 1;
            }
        }
    }
    let accuracy = if evaluated == 0 {
        f64::NAN
    } else {
        correct as f64 / evaluated as f64
    };
    Ok(Identification {
        accuracy,
        correct,
        evaluated,
        nan_cells,
        ties,
    })
}
