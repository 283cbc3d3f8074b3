use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{
    default_ranks, ExperimentConfig, ExperimentKind, Method, NoiseSpace, PairPolicy,
};
use super::data::{extract_activations, generate_dataset, inflated_box_noise};
use super::heatmap::emit_heatmap;
use crate::activations::ActivationSet;
use crate::error::{Error, Result};
use crate::grid::SimilarityGrid;
use crate::nets::{
    accuracy, read_checkpoint, train, write_checkpoint, FeedforwardNet, LabeledDataset,
    Nonlinearity, TrainLog,
};
use crate::ood::{save_detector, separability, train_detector, DetectorConfig, EnergyDetector};
use crate::rng::derive_seed;
use crate::simindex::structural_grid;
use crate::stats::{
    layer_identification, sensitivity_test, specificity_test, write_summary_csv, Identification,
    IdentificationMode, NetTail, SummaryRow, TestConfig,
};
use crate::stitching::{apply_map, similarity_grid, StitchGrid, StitchGridConfig};

const TAG_EVAL: u64 = 1;
const TAG_INSTANCE: u64 = 2;
const TAG_STITCH: u64 = 3;
const TAG_DETECTOR: u64 = 4;
const TAG_NOISE: u64 = 5;
const TAG_PROBE: u64 = 6;

/// Full-scale task-loss-matching identification rates quoted next to the
/// toy results.
pub const FULL_SCALE_TLM_CONTEXT: &str =
    "full-scale TLM intra-network identification: 63.75% (ResNet-18), 24.17% (ViT-Ti)";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub base: u64,
    pub dataset: u64,
    pub eval_dataset: u64,
    /// Initialization seed of each trained instance.
    pub instances: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageStatus {
    Ok,
    /// Finished, but some cells or reports failed.
    Partial,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub messages: Vec<String>,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
}

impl StageRecord {
    fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: StageStatus::Ok,
            messages: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    fn problem(&mut self, msg: impl Into<String>) {
        self.status = StageStatus::Partial;
        self.messages.push(msg.into());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub seeds: SeedRecord,
    /// What the reported accuracies are measured on.
    pub evaluation: String,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn failed_stages(&self) -> usize {
        self.stages
            .iter()
            .filter(|s| s.status != StageStatus::Ok)
            .count()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub output_dir: PathBuf,
}

impl RunOutcome {
    /// 0 when every stage succeeded, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.manifest.failed_stages() == 0 {
            0
        } else {
            3
        }
    }
}

/// JSON artifacts carry the config hash and seeds next to their payload.
#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config_hash: &'a str,
    seeds: &'a SeedRecord,
    #[serde(flatten)]
    data: &'a T,
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    out: PathBuf,
    hash: String,
    seeds: SeedRecord,
    train: LabeledDataset,
    eval: LabeledDataset,
    nets: Vec<FeedforwardNet>,
    stages: Vec<StageRecord>,
}

/// [`run_experiment`] on a dedicated pool of `threads` workers (all cores
/// when `None`). Outputs do not depend on the thread count.
pub fn run_experiment_with_threads(
    cfg: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::Validation("thread count must be positive".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
    pool.install(|| run_experiment(cfg))
}

/// Validate `cfg`, then run every stage of its experiment kind, writing
/// artifacts under `cfg.output_dir` and finishing with `manifest.json`.
///
/// Validation problems are returned as [`Error::Validation`] before any
/// computation. Failures inside a stage are recorded in the manifest and
/// later stages still run where they can.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out)?;
    let eval_spec = super::data::DatasetSpec {
        n: cfg.eval_n.unwrap_or(cfg.dataset.n),
        seed: derive_seed(cfg.dataset.seed, &[TAG_EVAL]),
        ..cfg.dataset.clone()
    };
    let seeds = SeedRecord {
        base: cfg.seed,
        dataset: cfg.dataset.seed,
        eval_dataset: eval_spec.seed,
        instances: (0..cfg.model.instances as u64)
            .map(|k| derive_seed(cfg.seed, &[TAG_INSTANCE, k]))
            .collect(),
    };
    let mut run = Run {
        cfg,
        out,
        hash: cfg.hash(),
        seeds,
        train: generate_dataset(&cfg.dataset)?,
        eval: generate_dataset(&eval_spec)?,
        nets: Vec::new(),
        stages: Vec::new(),
    };
    run.write_file("config.json", cfg.to_json()?.as_bytes())?;

    let models = run.stage("models", Run::models);
    if models {
        match cfg.kind {
            ExperimentKind::TrainModels => {}
            ExperimentKind::SimilarityGrid => {
                for &m in &cfg.methods {
                    run.stage(&format!("grid-{}", m.name()), |r| Ok(r.grids(m, false)?.0));
                }
            }
            ExperimentKind::SanityCheck => {
                let mut ids = Vec::new();
                for &m in &cfg.methods {
                    run.stage(&format!("grid-{}", m.name()), |r| {
                        let (rec, found) = r.grids(m, true)?;
                        ids.extend(found);
                        Ok(rec)
                    });
                }
                run.stage("identification", |r| r.identification_table(&ids));
            }
            ExperimentKind::OodGrid => {
                let mut detectors = Vec::new();
                if run.stage("detectors", |r| {
                    let (rec, d) = r.detectors()?;
                    detectors = d;
                    Ok(rec)
                }) {
                    for &m in &cfg.methods {
                        run.stage(&format!("ood-{}", m.name()), |r| r.ood_grids(m, &detectors));
                    }
                }
            }
            ExperimentKind::Sensitivity => {
                let mut summary = Vec::new();
                for &m in &cfg.methods {
                    run.stage(&format!("sensitivity-{}", m.name()), |r| {
                        r.sensitivity(m, &mut summary)
                    });
                }
                run.stage("sensitivity-summary", |r| {
                    r.summary("reports/sensitivity/summary.csv", &summary)
                });
            }
            ExperimentKind::Specificity => {
                let mut summary = Vec::new();
                for &m in &cfg.methods {
                    run.stage(&format!("specificity-{}", m.name()), |r| {
                        r.specificity(m, &mut summary)
                    });
                }
                run.stage("specificity-summary", |r| {
                    r.summary("reports/specificity/summary.csv", &summary)
                });
            }
        }
    }

    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        kind: cfg.kind,
        config_hash: run.hash.clone(),
        seeds: run.seeds.clone(),
        evaluation: format!(
            "held-out set of {} samples generated with seed {}",
            run.eval.len(),
            run.seeds.eval_dataset
        ),
        stages: run.stages,
    };
    fs::write(
        run.out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(RunOutcome {
        manifest,
        output_dir: run.out,
    })
}

/// One grid's identification result, kept for the summary table.
struct FoundId {
    method: Method,
    mode: IdentificationMode,
    source_net: usize,
    target_net: usize,
    id: Identification,
}

fn csv_field(v: f64) -> String {
    format!("{v}")
}

impl Run<'_> {
    /// Runs `f` as a named stage; returns whether it did not fail outright.
    fn stage(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<StageRecord>) -> bool {
        match f(self) {
            Ok(mut rec) => {
                rec.name = name.to_string();
                self.stages.push(rec);
                true
            }
            Err(e) => {
                let mut rec = StageRecord::new(name);
                rec.status = StageStatus::Failed;
                rec.messages.push(e.to_string());
                self.stages.push(rec);
                false
            }
        }
    }

    fn header(&self) -> String {
        format!(
            "# config={}\n# seeds={} {}\n",
            self.hash, self.seeds.base, self.seeds.dataset
        )
    }

    fn write_file(&self, rel: &str, bytes: &[u8]) -> Result<String> {
        let path = self.out.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, bytes)?;
        Ok(rel.to_string())
    }

    fn write_csv(
        &self,
        rel: &str,
        body: impl FnOnce(&mut Vec<u8>) -> Result<()>,
    ) -> Result<String> {
        let mut buf = self.header().into_bytes();
        body(&mut buf)?;
        self.write_file(rel, &buf)
    }

    fn write_json<T: Serialize>(&self, rel: &str, data: &T) -> Result<String> {
        let stamped = Stamped {
            config_hash: &self.hash,
            seeds: &self.seeds,
            data,
        };
        self.write_file(
            rel,
            (serde_json::to_string_pretty(&stamped)? + "\n").as_bytes(),
        )
    }

    fn stamp(&self, grid: &mut SimilarityGrid) {
        grid.config_hash = Some(self.hash.clone());
        grid.seeds = vec![self.seeds.base, self.seeds.dataset];
    }

    /// CSV plus PPM/SVG heatmap when every cell is finite.
    fn write_grid(
        &self,
        rel_stem: &str,
        grid: &SimilarityGrid,
        rec: &mut StageRecord,
    ) -> Result<()> {
        let stem = self.out.join(rel_stem);
        if let Some(parent) = stem.parent() {
            fs::create_dir_all(parent)?;
        }
        if grid.values.iter().flatten().all(|v| v.is_finite()) {
            emit_heatmap(grid, &stem)?;
            for ext in ["csv", "ppm", "svg"] {
                rec.artifacts.push(format!("{rel_stem}.{ext}"));
            }
        } else {
            fs::write(stem.with_extension("csv"), grid.to_csv_string()?)?;
            rec.artifacts.push(format!("{rel_stem}.csv"));
        }
        for f in &grid.failures {
            rec.problem(format!(
                "{} cell {}->{}: {}",
                rel_stem, f.source, f.target, f.message
            ));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.train.dim()];
        w.extend(&self.cfg.model.hidden);
        w.push(self.cfg.dataset.classes);
        w
    }

    fn models(&mut self) -> Result<StageRecord> {
        let mut rec = StageRecord::new("models");
        let widths = self.widths();
        let (nets, logs): (Vec<FeedforwardNet>, Vec<Option<TrainLog>>) = match &self.cfg.models_dir
        {
            Some(dir) => {
                let nets = (0..self.cfg.model.instances)
                    .map(|k| {
                        let path = ExperimentConfig::checkpoint_path(dir, k);
                        let net = read_checkpoint(BufReader::new(File::open(&path)?))?;
                        if net.widths() != widths {
                            return Err(Error::Validation(format!(
                                "{} has widths {:?}, config implies {:?}",
                                path.display(),
                                net.widths(),
                                widths
                            )));
                        }
                        Ok(net)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let n = nets.len();
                (nets, vec![None; n])
            }
            None => {
                let trained: Vec<(FeedforwardNet, TrainLog)> = self
                    .seeds
                    .instances
                    .par_iter()
                    .map(|&seed| {
                        let mut net = FeedforwardNet::init(&widths, Nonlinearity::Relu, seed)?;
                        let tcfg = crate::nets::TrainConfig {
                            seed: derive_seed(seed, &[1]),
                            ..self.cfg.model.train.clone()
                        };
                        let log = train(&mut net, &self.train, &tcfg)?;
                        Ok((net, log))
                    })
                    .collect::<Result<_>>()?;
                trained.into_iter().map(|(n, l)| (n, Some(l))).unzip()
            }
        };
        let mut log_csv = String::from("instance,epoch,loss,accuracy\n");
        let mut acc_csv = String::from("instance,train_accuracy,eval_accuracy\n");
        for (k, (net, log)) in nets.iter().zip(&logs).enumerate() {
            if let Some(log) = log {
                let mut ckpt = Vec::new();
                write_checkpoint(net, &mut ckpt)?;
                rec.artifacts
                    .push(self.write_file(&format!("models/net{k}.rsnt"), &ckpt)?);
                for e in &log.epochs {
                    let _ = writeln!(
                        log_csv,
                        "{k},{},{},{}",
                        e.epoch,
                        csv_field(e.loss),
                        csv_field(e.accuracy)
                    );
                }
            }
            let (tr, ev) = (accuracy(net, &self.train)?, accuracy(net, &self.eval)?);
            let _ = writeln!(acc_csv, "{k},{},{}", csv_field(tr), csv_field(ev));
        }
        if logs.iter().any(Option::is_some) {
            rec.artifacts
                .push(self.write_csv("models/train_log.csv", |b| {
                    b.extend(log_csv.as_bytes());
                    Ok(())
                })?);
        }
        rec.artifacts
            .push(self.write_csv("models/accuracy.csv", |b| {
                b.extend(acc_csv.as_bytes());
                Ok(())
            })?);
        self.nets = nets
            .into_iter()
            .map(|mut n| {
                n.freeze();
                n
            })
            .collect();
        Ok(rec)
    }

    /// `(source net, target net, mode)` triples: every instance against
    /// itself, then the inter-network pairs.
    fn pairs(&self) -> Vec<(usize, usize, IdentificationMode)> {
        let m = self.nets.len();
        let mut pairs: Vec<_> = (0..m).map(|k| (k, k, IdentificationMode::Intra)).collect();
        if m > 1 {
            match self.cfg.stitch.inter_pairs {
                PairPolicy::All => {
                    for a in 0..m {
                        for b in (0..m).filter(|&b| b != a) {
                            pairs.push((a, b, IdentificationMode::Inter));
                        }
                    }
                }
                PairPolicy::Ring => {
                    pairs.extend((0..m).map(|a| (a, (a + 1) % m, IdentificationMode::Inter)))
                }
                PairPolicy::None => {}
            }
        }
        pairs
    }

    fn layer_acts(&self, k: usize, data: &LabeledDataset) -> Result<Vec<(usize, ActivationSet)>> {
        self.cfg
            .layers()
            .into_iter()
            .map(|l| Ok((l, extract_activations(&self.nets[k], data, l)?)))
            .collect()
    }

    fn stitch_config(&self, method: Method, a: usize, b: usize) -> StitchGridConfig {
        let layers = self.cfg.layers();
        StitchGridConfig {
            method: method.stitch().expect("stitching method"),
            source_layers: layers.clone(),
            target_layers: layers,
            dm_samples: self.cfg.stitch.dm_samples,
            tlm: self.cfg.stitch.tlm.clone(),
            seed: derive_seed(self.cfg.seed, &[TAG_STITCH, a as u64, b as u64]),
        }
    }

    fn stitch_fit_data(&self, method: Method) -> LabeledDataset {
        match (method, self.cfg.stitch.tlm_samples) {
            (Method::Tlm, Some(n)) => self.train.head(n),
            _ => self.train.clone(),
        }
    }

    fn stitch_grid(&self, method: Method, a: usize, b: usize) -> StitchGrid {
        similarity_grid(
            &self.nets[a],
            &self.nets[b],
            &self.stitch_config(method, a, b),
            &self.stitch_fit_data(method),
            &self.eval,
        )
    }

    fn grids(&mut self, method: Method, identify: bool) -> Result<(StageRecord, Vec<FoundId>)> {
        let mut rec = StageRecord::new("");
        let mut found = Vec::new();
        let acts: Vec<Vec<(usize, ActivationSet)>> = if method.structural().is_some() {
            (0..self.nets.len())
                .map(|k| self.layer_acts(k, &self.eval))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        for (a, b, mode) in self.pairs() {
            let mut grid = match method.structural() {
                Some(index) => structural_grid(&acts[a], &acts[b], index),
                None => self.stitch_grid(method, a, b).relative,
            };
            self.stamp(&mut grid);
            let stem = format!("grids/{}/{}-net{a}-net{b}", method.name(), mode.name());
            self.write_grid(&stem, &grid, &mut rec)?;
            if identify {
                let id = layer_identification(&grid, mode)?;
                found.push(FoundId {
                    method,
                    mode,
                    source_net: a,
                    target_net: b,
                    id,
                });
            }
        }
        Ok((rec, found))
    }

    fn identification_table(&mut self, found: &[FoundId]) -> Result<StageRecord> {
        let mut rec = StageRecord::new("");
        let mut per_grid = String::from(
            "method,mode,source_net,target_net,accuracy,correct,evaluated,ties,nan_cells\n",
        );
        for f in found {
            let _ = writeln!(
                per_grid,
                "{},{},{},{},{},{},{},{},{}",
                f.method.label(),
                f.mode.name(),
                f.source_net,
                f.target_net,
                csv_field(f.id.accuracy),
                f.id.correct,
                f.id.evaluated,
                f.id.ties,
                f.id.nan_cells
            );
        }
        rec.artifacts
            .push(self.write_csv("identification.csv", |b| {
                b.extend(per_grid.as_bytes());
                Ok(())
            })?);

        let mut table = format!("# context: {FULL_SCALE_TLM_CONTEXT}\n");
        table.push_str("method,mode,accuracy,correct,evaluated,ties,nan_cells,grids\n");
        for m in Method::ALL
            .into_iter()
            .filter(|m| self.cfg.methods.contains(m))
        {
            for mode in [IdentificationMode::Intra, IdentificationMode::Inter] {
                let rows: Vec<&FoundId> = found
                    .iter()
                    .filter(|f| f.method == m && f.mode == mode)
                    .collect();
                if rows.is_empty() {
                    continue;
                }
                let correct: usize = rows.iter().map(|f| f.id.correct).sum();
                let evaluated: usize = rows.iter().map(|f| f.id.evaluated).sum();
                let ties: usize = rows.iter().map(|f| f.id.ties).sum();
                let nan: usize = rows.iter().map(|f| f.id.nan_cells).sum();
                let acc = if evaluated == 0 {
                    f64::NAN
                } else {
                    correct as f64 / evaluated as f64
                };
                let _ = writeln!(
                    table,
                    "{},{},{},{correct},{evaluated},{ties},{nan},{}",
                    m.label(),
                    mode.name(),
                    csv_field(acc),
                    rows.len()
                );
            }
        }
        rec.artifacts.push(self.write_csv("table1.csv", |b| {
            b.extend(table.as_bytes());
            Ok(())
        })?);
        Ok(rec)
    }

    /// Detector for every (target instance, layer), index `[k][layer index]`.
    fn detectors(&mut self) -> Result<(StageRecord, Vec<Vec<EnergyDetector>>)> {
        let mut rec = StageRecord::new("");
        let o = &self.cfg.ood;
        let layers = self.cfg.layers();
        // input-space noise is shared by every detector
        let input_noise = match o.noise_space {
            NoiseSpace::Input => Some((
                inflated_box_noise(
                    &self.train.inputs,
                    o.noise_samples,
                    o.inflation,
                    derive_seed(self.cfg.seed, &[TAG_NOISE, 0]),
                )?,
                inflated_box_noise(
                    &self.train.inputs,
                    self.eval.len(),
                    o.inflation,
                    derive_seed(self.cfg.seed, &[TAG_NOISE, 1]),
                )?,
            )),
            NoiseSpace::Activation => None,
        };
        let cells: Vec<(usize, usize)> = (0..self.nets.len())
            .flat_map(|k| layers.iter().map(move |&l| (k, l)))
            .collect();
        let trained: Vec<(EnergyDetector, String)> = cells
            .par_iter()
            .map(|&(k, l)| {
                let net = &self.nets[k];
                let id = extract_activations(net, &self.train, l)?;
                let (ood, noise_acts) = match &input_noise {
                    Some((fit, check)) => (
                        ActivationSet::from_matrix(net.forward_to(l, fit)?, None)?,
                        ActivationSet::from_matrix(net.forward_to(l, check)?, None)?,
                    ),
                    None => {
                        let pooled = id.pooled();
                        let draw = |n: usize, tag: u64| -> Result<ActivationSet> {
                            let seed =
                                derive_seed(self.cfg.seed, &[TAG_NOISE, tag, k as u64, l as u64]);
                            ActivationSet::from_matrix(
                                inflated_box_noise(&pooled, n, o.inflation, seed)?,
                                None,
                            )
                        };
                        (draw(o.noise_samples, 0)?, draw(self.eval.len(), 1)?)
                    }
                };
                let dcfg = DetectorConfig {
                    seed: derive_seed(self.cfg.seed, &[TAG_DETECTOR, k as u64, l as u64]),
                    ..o.detector.clone()
                };
                let (mut det, _) = train_detector(&id, &ood, &dcfg)?;
                det.source_layer = Some(l);

                // energy bookkeeping on held-out data
                let target = extract_activations(net, &self.eval, l)?;
                let pooled = id.pooled();
                let shift: Vec<f64> = (0..pooled.cols())
                    .map(|c| {
                        let col = pooled.column(c);
                        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        o.translation * if hi > lo { hi - lo } else { 1.0 }
                    })
                    .collect();
                let translated = target.translated(&shift)?;
                let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
                let line = format!(
                    "{k},{l},{},{},{},{},{},{}",
                    csv_field(mean(det.energies(&target)?)),
                    csv_field(mean(det.energies(&noise_acts)?)),
                    csv_field(mean(det.energies(&translated)?)),
                    csv_field(separability(&det, &target, &target)?),
                    csv_field(separability(&det, &target, &translated)?),
                    csv_field(separability(&det, &target, &noise_acts)?),
                );
                Ok((det, line))
            })
            .collect::<Result<_>>()?;
        let mut checks = String::from(
            "net,layer,mean_energy_id,mean_energy_noise,mean_energy_translated,self_separability,translated_separability,noise_separability\n",
        );
        let mut dets: Vec<Vec<EnergyDetector>> = vec![Vec::new(); self.nets.len()];
        for (&(k, l), (det, line)) in cells.iter().zip(trained) {
            checks.push_str(&line);
            checks.push('\n');
            let stem = self.out.join(format!("detectors/net{k}-layer{l}"));
            fs::create_dir_all(stem.parent().expect("has parent"))?;
            save_detector(&det, &stem)?;
            rec.artifacts
                .push(format!("detectors/net{k}-layer{l}.rsnt"));
            rec.artifacts
                .push(format!("detectors/net{k}-layer{l}.json"));
            dets[k].push(det);
        }
        rec.artifacts
            .push(self.write_csv("detectors/checks.csv", |b| {
                b.extend(checks.as_bytes());
                Ok(())
            })?);
        Ok((rec, dets))
    }

    fn ood_grids(
        &mut self,
        method: Method,
        detectors: &[Vec<EnergyDetector>],
    ) -> Result<StageRecord> {
        let mut rec = StageRecord::new("");
        let layers = self.cfg.layers();
        let acts: Vec<Vec<(usize, ActivationSet)>> = (0..self.nets.len())
            .map(|k| self.layer_acts(k, &self.eval))
            .collect::<Result<_>>()?;
        for (a, b, mode) in self.pairs() {
            let sg = self.stitch_grid(method, a, b);
            let cells: Vec<(usize, usize)> = (0..layers.len())
                .flat_map(|i| (0..layers.len()).map(move |j| (i, j)))
                .collect();
            let scores: Vec<Result<f64>> = cells
                .par_iter()
                .map(|&(i, j)| {
                    let map = sg.maps[i][j].as_ref().ok_or_else(|| {
                        Error::Degenerate("stitching failed for this cell".into())
                    })?;
                    let stitched = apply_map(map, &acts[a][i].1)?;
                    separability(&detectors[b][j], &acts[b][j].1, &stitched)
                })
                .collect();
            let mut values = vec![vec![f64::NAN; layers.len()]; layers.len()];
            let mut grid_failures = Vec::new();
            for (&(i, j), s) in cells.iter().zip(scores) {
                match s {
                    Ok(v) => values[i][j] = v,
                    Err(e) => grid_failures.push(crate::grid::CellFailure {
                        source: layers[i],
                        target: layers[j],
                        message: e.to_string(),
                    }),
                }
            }
            let mut grid = SimilarityGrid::new(
                format!("ood-{}", method.name()),
                false,
                layers.clone(),
                layers.clone(),
                values,
            )?;
            grid.failures = grid_failures;
            self.stamp(&mut grid);
            let stem = format!("ood/{}/{}-net{a}-net{b}", method.name(), mode.name());
            self.write_grid(&stem, &grid, &mut rec)?;
            let mut rel = sg.relative;
            self.stamp(&mut rel);
            self.write_grid(&format!("{stem}-relative"), &rel, &mut rec)?;
        }
        Ok(rec)
    }

    fn test_config(&self) -> TestConfig {
        let mut cfg = self.cfg.tests.config.clone();
        cfg.probe.seed = derive_seed(self.cfg.seed, &[TAG_PROBE]);
        cfg
    }

    fn sensitivity(
        &mut self,
        method: Method,
        summary: &mut Vec<SummaryRow>,
    ) -> Result<StageRecord> {
        let mut rec = StageRecord::new("");
        let index = method.test_index().expect("validated");
        let tcfg = self.test_config();
        for &k in &self.cfg.tests.instances {
            for l in self.cfg.layers() {
                let acts = extract_activations(&self.nets[k], &self.eval, l)?;
                let ranks = self
                    .cfg
                    .tests
                    .ranks
                    .clone()
                    .unwrap_or_else(|| default_ranks(acts.channels()));
                let tail = NetTail {
                    net: &self.nets[k],
                    layer: l,
                };
                let stem = format!("reports/sensitivity/{}/net{k}-layer{l}", method.name());
                match sensitivity_test(&acts, &ranks, index, Some(tail), &tcfg) {
                    Ok(report) => {
                        rec.artifacts
                            .push(self.write_json(&format!("{stem}.json"), &report)?);
                        rec.artifacts
                            .push(self.write_csv(&format!("{stem}.csv"), |b| report.write_csv(b))?);
                        if let Some(note) = &report.note {
                            rec.messages.push(format!("{stem}: {note}"));
                        }
                        summary.push(report.summary(format!("net{k}/layer{l}")));
                    }
                    Err(e) => rec.problem(format!("{stem}: {e}")),
                }
            }
        }
        Ok(rec)
    }

    fn specificity(
        &mut self,
        method: Method,
        summary: &mut Vec<SummaryRow>,
    ) -> Result<StageRecord> {
        let mut rec = StageRecord::new("");
        let index = method.test_index().expect("validated");
        let report = specificity_test(
            &self.nets,
            &self.cfg.layers(),
            &self.eval,
            index,
            &self.test_config(),
        )?;
        let dir = format!("reports/specificity/{}", method.name());
        for (r, l) in report.per_layer.iter().zip(self.cfg.layers()) {
            let stem = format!("{dir}/anchor-layer{l}");
            rec.artifacts
                .push(self.write_json(&format!("{stem}.json"), r)?);
            rec.artifacts
                .push(self.write_csv(&format!("{stem}.csv"), |b| r.write_csv(b))?);
        }
        rec.artifacts
            .push(self.write_json(&format!("{dir}/aggregate.json"), &report.aggregate)?);
        rec.artifacts
            .push(self.write_csv(&format!("{dir}/aggregate.csv"), |b| {
                report.aggregate.write_csv(b)
            })?);
        for r in report.per_layer.iter().chain([&report.aggregate]) {
            if let Some(note) = &r.note {
                rec.messages
                    .push(format!("{} {}: {note}", method.name(), r.reference));
            }
        }
        summary.extend(report.summaries());
        Ok(rec)
    }

    fn summary(&mut self, rel: &str, rows: &[SummaryRow]) -> Result<StageRecord> {
        let mut rec = StageRecord::new("");
        rec.artifacts
            .push(self.write_csv(rel, |b| write_summary_csv(rows, b))?);
        Ok(rec)
    }
}

/// Emit a heatmap for a grid CSV previously written by an experiment.
pub fn heatmap_from_csv(csv: &Path, out_dir: &Path) -> Result<PathBuf> {
    let grid = SimilarityGrid::read_csv(BufReader::new(File::open(csv)?))?;
    fs::create_dir_all(out_dir)?;
    let stem = out_dir.join(
        csv.file_stem()
            .ok_or_else(|| Error::Argument(format!("bad path {}", csv.display())))?,
    );
    emit_heatmap(&grid, &stem)?;
    Ok(stem)
}
