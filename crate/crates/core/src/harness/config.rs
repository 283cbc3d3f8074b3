use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::data::DatasetSpec;
use crate::error::{Error, Result};
use crate::nets::TrainConfig;
use crate::ood::DetectorConfig;
use crate::simindex::Index;
use crate::stats::{TestConfig, TestIndex, MIN_TEST_MEMBERS};
use crate::stitching::{StitchMethod, DEFAULT_DM_SAMPLES};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    TrainModels,
    SimilarityGrid,
    SanityCheck,
    OodGrid,
    Sensitivity,
    Specificity,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::TrainModels => "train-models",
            ExperimentKind::SimilarityGrid => "similarity-grid",
            ExperimentKind::SanityCheck => "sanity-check",
            ExperimentKind::OodGrid => "ood-grid",
            ExperimentKind::Sensitivity => "sensitivity",
            ExperimentKind::Specificity => "specificity",
        }
    }
}

/// Every way the toolkit can compare two layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Pwcca,
    Opd,
    Lcka,
    Tlm,
    DmStructural,
    DmFunctional,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Pwcca,
        Method::Opd,
        Method::Lcka,
        Method::Tlm,
        Method::DmStructural,
        Method::DmFunctional,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Pwcca => "pwcca",
            Method::Opd => "opd",
            Method::Lcka => "lcka",
            Method::Tlm => "tlm",
            Method::DmStructural => "dm-structural",
            Method::DmFunctional => "dm-functional",
        }
    }

    /// Row label in identification tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::Pwcca => "PWCCA",
            Method::Opd => "OPD",
            Method::Lcka => "LCKA",
            Method::Tlm => "TLM",
            Method::DmStructural => "DM-struct",
            Method::DmFunctional => "DM-func",
        }
    }

    pub fn structural(self) -> Option<Index> {
        match self {
            Method::Pwcca => Some(Index::Pwcca),
            Method::Opd => Some(Index::Opd),
            Method::Lcka => Some(Index::Lcka),
            Method::DmStructural => Some(Index::DmStructural),
            Method::Tlm | Method::DmFunctional => None,
        }
    }

    pub fn stitch(self) -> Option<StitchMethod> {
        match self {
            Method::Tlm => Some(StitchMethod::Tlm),
            Method::DmFunctional => Some(StitchMethod::DmFunctional),
            _ => None,
        }
    }

    pub fn test_index(self) -> Option<TestIndex> {
        match self {
            Method::Pwcca => Some(TestIndex::Pwcca),
            Method::Opd => Some(TestIndex::Opd),
            Method::Lcka => Some(TestIndex::Lcka),
            Method::DmStructural => Some(TestIndex::DmStructural),
            Method::DmFunctional => Some(TestIndex::DmFunctional),
            Method::Tlm => None,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    /// Hidden layer widths; the input width and class count come from the
    /// dataset.
    pub hidden: Vec<usize>,
    pub instances: usize,
    pub train: TrainConfig,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            hidden: vec![32; 6],
            instances: 5,
            train: TrainConfig {
                epochs: 100,
                batch_size: 64,
                learning_rate: 3e-3,
                ..TrainConfig::default()
            },
        }
    }
}

/// Which ordered pairs of distinct instances are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairPolicy {
    /// Every `(a, b)` with `a ≠ b`.
    All,
    /// `(k, k + 1 mod m)` only.
    Ring,
    /// No inter-network comparisons.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StitchSettings {
    /// Samples for direct-matching fits (also the TLM initialization).
    pub dm_samples: usize,
    /// Stitcher training; its seed is derived per cell.
    pub tlm: TrainConfig,
    /// Training samples used by TLM; all when unset.
    pub tlm_samples: Option<usize>,
    pub inter_pairs: PairPolicy,
}

impl Default for StitchSettings {
    fn default() -> Self {
        Self {
            dm_samples: DEFAULT_DM_SAMPLES,
            tlm: TrainConfig {
                epochs: 5,
                batch_size: 64,
                ..TrainConfig::default()
            },
            tlm_samples: Some(1000),
            inter_pairs: PairPolicy::All,
        }
    }
}

/// Where the detectors' auxiliary OOD noise is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseSpace {
    /// Uniform over the inflated box of the layer's ID activations.
    Activation,
    /// Uniform over the inflated box of the ID inputs, then pushed through
    /// the network up to the layer.
    Input,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OodSettings {
    /// Its seed is derived per detector.
    pub detector: DetectorConfig,
    /// Auxiliary noise samples per detector.
    pub noise_samples: usize,
    pub noise_space: NoiseSpace,
    /// Growth factor of the bounding box the noise is drawn from.
    pub inflation: f64,
    /// Shift of the far-translation check, in units of each channel's range
    /// over the ID activations.
    pub translation: f64,
}

impl Default for OodSettings {
    fn default() -> Self {
        Self {
            detector: DetectorConfig::default(),
            noise_samples: 3000,
            noise_space: NoiseSpace::Input,
            inflation: 3.0,
            translation: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestSettings {
    /// Its probe seed is derived from the experiment seed.
    pub config: TestConfig,
    /// Low-rank approximation ranks; defaults to `{w, w/2, w/4, 4, 2, 1}`
    /// for a layer of width `w`.
    pub ranks: Option<Vec<usize>>,
    /// Instances analysed by the sensitivity test.
    pub instances: Vec<usize>,
}

impl Default for TestSettings {
    fn default() -> Self {
        Self {
            config: TestConfig::default(),
            ranks: None,
            instances: vec![0],
        }
    }
}

/// Default sensitivity ranks for a layer of width `w`.
pub fn default_ranks(w: usize) -> Vec<usize> {
    let mut r: Vec<usize> = [w, w / 2, w / 4, 4, 2, 1]
        .into_iter()
        .filter(|&r| r >= 1 && r <= w)
        .collect();
    r.sort_unstable_by(|a, b| b.cmp(a));
    r.dedup();
    r
}

fn default_schema() -> u32 {
    CONFIG_SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub kind: ExperimentKind,
    /// Every stage seed is derived from this one.
    pub seed: u64,
    /// Training data. Evaluation data comes from the same generator with a
    /// derived seed.
    pub dataset: DatasetSpec,
    /// Size of the held-out evaluation set; `dataset.n` when unset.
    #[serde(default)]
    pub eval_n: Option<usize>,
    #[serde(default)]
    pub model: ModelSpec,
    /// Layers to compare (0 = input). All hidden layers when unset.
    #[serde(default)]
    pub layers: Option<Vec<usize>>,
    #[serde(default)]
    pub methods: Vec<Method>,
    pub output_dir: PathBuf,
    /// Load `net<k>.rsnt` checkpoints from here instead of training.
    #[serde(default)]
    pub models_dir: Option<PathBuf>,
    #[serde(default)]
    pub stitch: StitchSettings,
    #[serde(default)]
    pub ood: OodSettings,
    #[serde(default)]
    pub tests: TestSettings,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// SHA-256 of the canonical JSON form, ignoring the output location.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("output_dir");
        }
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    pub fn depth(&self) -> usize {
        self.model.hidden.len() + 1
    }

    pub fn layers(&self) -> Vec<usize> {
        self.layers
            .clone()
            .unwrap_or_else(|| (1..=self.model.hidden.len()).collect())
    }

    /// Width of layer `l` of the configured architecture.
    pub fn width(&self, l: usize) -> usize {
        match l {
            0 => self.dataset_dim(),
            l if l <= self.model.hidden.len() => self.model.hidden[l - 1],
            _ => self.dataset.classes,
        }
    }

    fn dataset_dim(&self) -> usize {
        use super::data::Generator;
        match self.dataset.generator {
            Generator::Rings | Generator::Spiral => 2,
            _ => self.dataset.dim,
        }
    }

    pub fn checkpoint_path(dir: &Path, instance: usize) -> PathBuf {
        dir.join(format!("net{instance}.rsnt"))
    }

    /// Everything checkable without computing.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(invalid(format!(
                "config schema version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.dataset.validate()?;
        if self.eval_n == Some(0) {
            return Err(invalid("eval_n must be positive"));
        }
        if self.model.hidden.is_empty() || self.model.hidden.contains(&0) {
            return Err(invalid("model.hidden needs at least one positive width"));
        }
        if self.model.instances == 0 {
            return Err(invalid("model.instances must be positive"));
        }
        self.model
            .train
            .validate()
            .map_err(|e| invalid(format!("model.train: {e}")))?;
        let layers = self.layers();
        if layers.is_empty() {
            return Err(invalid("layer list is empty"));
        }
        if let Some(l) = layers.iter().find(|&&l| l > self.depth()) {
            return Err(invalid(format!(
                "layer {l} exceeds network depth {}",
                self.depth()
            )));
        }
        let mut uniq = layers.clone();
        uniq.sort_unstable();
        uniq.dedup();
        if uniq.len() != layers.len() {
            return Err(invalid("layer list has duplicates"));
        }
        if let Some(dir) = &self.models_dir {
            for k in 0..self.model.instances {
                let p = Self::checkpoint_path(dir, k);
                if !p.is_file() {
                    return Err(invalid(format!("missing model checkpoint {}", p.display())));
                }
            }
        }
        self.validate_methods()
    }

    fn validate_methods(&self) -> Result<()> {
        let kind = self.kind;
        if kind == ExperimentKind::TrainModels {
            return Ok(());
        }
        if self.methods.is_empty() {
            return Err(invalid(format!(
                "{} needs at least one method",
                kind.name()
            )));
        }
        let mut uniq = self.methods.clone();
        uniq.sort_unstable();
        uniq.dedup();
        if uniq.len() != self.methods.len() {
            return Err(invalid("method list has duplicates"));
        }
        if self.methods.iter().any(|m| m.stitch().is_some()) {
            if self.stitch.dm_samples == 0 {
                return Err(invalid("stitch.dm_samples must be positive"));
            }
            self.stitch
                .tlm
                .validate()
                .map_err(|e| invalid(format!("stitch.tlm: {e}")))?;
        }
        match kind {
            ExperimentKind::OodGrid => {
                if let Some(m) = self.methods.iter().find(|m| m.stitch().is_none()) {
                    return Err(invalid(format!(
                        "ood-grid stitches layers; {} is not a stitching method",
                        m.name()
                    )));
                }
                let o = &self.ood;
                if !(o.detector.m_in < o.detector.m_out) {
                    return Err(invalid("ood.detector needs m_in < m_out"));
                }
                if !(o.detector.lambda >= 0.0) {
                    return Err(invalid("ood.detector.lambda must be non-negative"));
                }
                if !(o.inflation.is_finite() && o.inflation > 0.0) || !o.translation.is_finite() {
                    return Err(invalid(
                        "ood.inflation must be positive and ood.translation finite",
                    ));
                }
                if o.noise_samples == 0 {
                    return Err(invalid("ood.noise_samples must be positive"));
                }
                o.detector
                    .pretrain
                    .validate()
                    .map_err(|e| invalid(format!("ood.detector.pretrain: {e}")))?;
                o.detector
                    .finetune
                    .validate()
                    .map_err(|e| invalid(format!("ood.detector.finetune: {e}")))?;
            }
            ExperimentKind::Sensitivity | ExperimentKind::Specificity => {
                if self.methods.contains(&Method::Tlm) {
                    return Err(invalid(format!("{} does not evaluate tlm", kind.name())));
                }
                self.tests
                    .config
                    .probe
                    .train
                    .validate()
                    .map_err(|e| invalid(format!("tests.config.probe: {e}")))?;
                let f = self.tests.config.probe.holdout_fraction;
                if !(f > 0.0 && f < 1.0) {
                    return Err(invalid(
                        "tests.config.probe.holdout_fraction must lie in (0, 1)",
                    ));
                }
                if kind == ExperimentKind::Specificity && self.model.instances < 3 {
                    return Err(invalid("specificity needs at least 3 instances"));
                }
                if kind == ExperimentKind::Specificity
                    && (self.model.instances - 1) * self.layers().len() < MIN_TEST_MEMBERS
                {
                    return Err(invalid(format!(
                        "specificity needs at least {MIN_TEST_MEMBERS} comparisons per anchor"
                    )));
                }
                if kind == ExperimentKind::Sensitivity {
                    if let Some(k) = self
                        .tests
                        .instances
                        .iter()
                        .find(|&&k| k >= self.model.instances)
                    {
                        return Err(invalid(format!(
                            "tests.instances names instance {k}, only {} exist",
                            self.model.instances
                        )));
                    }
                    if self.tests.instances.is_empty() {
                        return Err(invalid("tests.instances is empty"));
                    }
                    for l in self.layers() {
                        let w = self.width(l);
                        let ranks = self.tests.ranks.clone().unwrap_or_else(|| default_ranks(w));
                        if ranks.len() < MIN_TEST_MEMBERS {
                            return Err(invalid(format!(
                                "layer {l} gets {} ranks, at least {MIN_TEST_MEMBERS} needed",
                                ranks.len()
                            )));
                        }
                        if ranks.iter().any(|&r| r == 0 || r > w) || !ranks.contains(&w) {
                            return Err(invalid(format!(
                                "ranks must lie in 1..={w} and include {w} for layer {l}"
                            )));
                        }
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{"kind": "sanity-check", "seed": 3, "methods": ["lcka"],
            "dataset": {"generator": "spiral", "n": 30, "seed": 1}, "output_dir": "out"}"#
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_json(minimal()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.layers(), vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(cfg.model.instances, 5);
        assert_eq!(
            ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap(),
            cfg
        );
    }

    #[test]
    fn seeds_are_mandatory() {
        let no_seed = minimal().replace(r#""seed": 3,"#, "");
        assert!(ExperimentConfig::from_json(&no_seed).is_err());
        let no_data_seed = minimal().replace(r#", "seed": 1}"#, "}");
        assert!(ExperimentConfig::from_json(&no_data_seed).is_err());
    }

    #[test]
    fn empty_methods_fail_validation() {
        let cfg = ExperimentConfig::from_json(&minimal().replace(r#"["lcka"]"#, "[]")).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = ExperimentConfig::from_json(minimal()).unwrap();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 4;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn default_ranks_for_width_32() {
        assert_eq!(default_ranks(32), vec![32, 16, 8, 4, 2, 1]);
        assert_eq!(default_ranks(4), vec![4, 2, 1]);
    }
}
