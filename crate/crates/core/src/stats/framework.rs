//! Sensitivity and specificity tests of a dissimilarity measure.
//!
//! Both tests build a set `S` of representations, score each with a linear
//! probe (`F`), pick a reference `A`, and rank-correlate the functional gap
//! `|F(A) − F(B)|` with the dissimilarity `d(A, B)` over `B ∈ S`. A measure
//! that tracks function yields strongly positive correlations.

use std::io::Write;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::probe::{holdout_split, linear_probe, ProbeConfig};
use super::rank::{kendall_tau, spearman_rho, RankCorrelation};
use crate::activations::ActivationSet;
use crate::error::{Error, Result};
use crate::nets::{argmax, FeedforwardNet, LabeledDataset};
use crate::numerics::low_rank_approx;
use crate::rng;
use crate::simindex::Index;
use crate::stitching::{apply_map, fit_direct, DEFAULT_DM_SAMPLES};

/// Fewest members of `S` for which correlations are reported.
pub const MIN_TEST_MEMBERS: usize = 5;

/// Dissimilarity measures the tests can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestIndex {
    Lcka,
    Pwcca,
    Opd,
    DmStructural,
    /// `1 −` relative accuracy of a direct-matching stitch into the
    /// reference layer's network.
    DmFunctional,
}

impl TestIndex {
    pub const ALL: [TestIndex; 5] = [
        TestIndex::Lcka,
        TestIndex::Pwcca,
        TestIndex::Opd,
        TestIndex::DmStructural,
        TestIndex::DmFunctional,
    ];

    pub fn name(self) -> &'static str {
        match self.structural() {
            Some(i) => i.name(),
            None => "dm-functional",
        }
    }

    pub fn structural(self) -> Option<Index> {
        match self {
            TestIndex::Lcka => Some(Index::Lcka),
            TestIndex::Pwcca => Some(Index::Pwcca),
            TestIndex::Opd => Some(Index::Opd),
            TestIndex::DmStructural => Some(Index::DmStructural),
            TestIndex::DmFunctional => None,
        }
    }

    pub fn needs_network(self) -> bool {
        self == TestIndex::DmFunctional
    }
}

impl std::str::FromStr for TestIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestIndex::ALL
            .into_iter()
            .find(|i| i.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown test index {s:?}")))
    }
}

/// The part of a network after the layer a representation belongs to; used
/// to score direct-matching stitches functionally.
#[derive(Debug, Clone, Copy)]
pub struct NetTail<'a> {
    pub net: &'a FeedforwardNet,
    pub layer: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestConfig {
    pub probe: ProbeConfig,
    /// Samples used to fit direct-matching stitchers, drawn from the probe's
    /// training split. Stitched accuracy is measured on the held-out split.
    pub dm_samples: usize,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            probe: ProbeConfig::default(),
            dm_samples: DEFAULT_DM_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    pub id: String,
    pub probe_accuracy: f64,
    /// `|F(A) − F(B)|`.
    pub gap: f64,
    /// `d(A, B)`; similarities are reported as `1 − s`.
    pub dissimilarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test: String,
    pub index: TestIndex,
    pub reference: String,
    /// Probe accuracy of the reference; absent for pooled reports.
    pub reference_accuracy: Option<f64>,
    pub rows: Vec<TestRow>,
    pub kendall: Option<RankCorrelation>,
    pub spearman: Option<RankCorrelation>,
    /// Why a correlation is missing, if one is.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

type Correlations = (
    Option<RankCorrelation>,
    Option<RankCorrelation>,
    Option<String>,
);

fn correlate(rows: &[TestRow]) -> Correlations {
    if rows.len() < MIN_TEST_MEMBERS {
        return (
            None,
            None,
            Some(format!(
                "{} members, at least {MIN_TEST_MEMBERS} needed",
                rows.len()
            )),
        );
    }
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    let ds: Vec<f64> = rows.iter().map(|r| r.dissimilarity).collect();
    let tau = kendall_tau(&gaps, &ds);
    let rho = spearman_rho(&gaps, &ds);
    let note = tau
        .as_ref()
        .err()
        .or(rho.as_ref().err())
        .map(ToString::to_string);
    (tau.ok(), rho.ok(), note)
}

impl TestReport {
    fn assemble(
        test: &str,
        index: TestIndex,
        reference: String,
        reference_accuracy: Option<f64>,
        rows: Vec<TestRow>,
    ) -> Self {
        let (kendall, spearman, note) = correlate(&rows);
        Self {
            test: test.into(),
            index,
            reference,
            reference_accuracy,
            rows,
            kendall,
            spearman,
            note,
        }
    }

    /// One row per member: `id,probe_accuracy,gap,dissimilarity`, preceded by
    /// `#` metadata lines.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# test={}", self.test)?;
        writeln!(out, "# index={}", self.index.name())?;
        writeln!(out, "# reference={}", self.reference)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["id", "probe_accuracy", "gap", "dissimilarity"])?;
        for r in &self.rows {
            w.write_record([
                r.id.clone(),
                format!("{}", r.probe_accuracy),
                format!("{}", r.gap),
                format!("{}", r.dissimilarity),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self, scope: impl Into<String>) -> SummaryRow {
        SummaryRow {
            test: self.test.clone(),
            scope: scope.into(),
            index: self.index.name().into(),
            n: self.rows.len(),
            kendall: self.kendall,
            spearman: self.spearman,
        }
    }
}

/// One line of a correlation summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub test: String,
    /// `layer-<i>`, `aggregate`, or a free-form label.
    pub scope: String,
    pub index: String,
    pub n: usize,
    pub kendall: Option<RankCorrelation>,
    pub spearman: Option<RankCorrelation>,
}

/// Columns `test,scope,index,n,kendall_tau,kendall_p,spearman_rho,spearman_p`;
/// missing correlations are left empty.
pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "test",
        "scope",
        "index",
        "n",
        "kendall_tau",
        "kendall_p",
        "spearman_rho",
        "spearman_p",
    ])?;
    let fmt = |c: Option<RankCorrelation>| match c {
        Some(c) => [format!("{}", c.statistic), format!("{}", c.p_value)],
        None => [String::new(), String::new()],
    };
    for r in rows {
        let [kt, kp] = fmt(r.kendall);
        let [sr, sp] = fmt(r.spearman);
        w.write_record([
            r.test.clone(),
            r.scope.clone(),
            r.index.clone(),
            r.n.to_string(),
            kt,
            kp,
            sr,
            sp,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Sample split shared by all direct-matching stitches of one test.
struct DmSplit {
    fit: Vec<usize>,
    eval: Vec<usize>,
}

impl DmSplit {
    fn new(n: usize, cfg: &TestConfig) -> Result<Self> {
        let (train, eval) = holdout_split(
            n,
            cfg.probe.holdout_fraction,
            rng::derive_seed(cfg.probe.seed, &[1]),
        )?;
        let fit = if cfg.dm_samples >= train.len() {
            train
        } else {
            let mut pick = sample(
                &mut rng::rng(rng::derive_seed(cfg.probe.seed, &[3])),
                train.len(),
                cfg.dm_samples,
            )
            .into_vec();
            pick.sort_unstable();
            pick.into_iter().map(|k| train[k]).collect()
        };
        Ok(Self { fit, eval })
    }
}

fn tail_accuracy(tail: NetTail<'_>, acts: &ActivationSet, labels: &[usize]) -> Result<f64> {
    let logits = tail.net.forward_from(tail.layer, &acts.position_rows())?;
    let hits = (0..logits.rows())
        .filter(|&r| argmax(logits.row(r)) == labels[r])
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// `d(reference, member)` with `member` as the source of any fitted map.
fn dissimilarity(
    index: TestIndex,
    reference: &ActivationSet,
    member: &ActivationSet,
    tail: Option<NetTail<'_>>,
    split: Option<&DmSplit>,
    labels: &[usize],
) -> Result<f64> {
    if let Some(i) = index.structural() {
        return Ok(i.dissimilarity(i.compute(member, reference)?));
    }
    let (tail, split) = match (tail, split) {
        (Some(t), Some(s)) => (t, s),
        _ => {
            return Err(Error::Argument(
                "dm-functional needs the reference network".into(),
            ))
        }
    };
    if reference.positions() != 1 {
        return Err(Error::Shape(
            "dm-functional stitches need one position per sample".into(),
        ));
    }
    let fit = fit_direct(&member.select(&split.fit)?, &reference.select(&split.fit)?)?;
    let eval_labels: Vec<usize> = split.eval.iter().map(|&k| labels[k]).collect();
    let target = tail_accuracy(tail, &reference.select(&split.eval)?, &eval_labels)?;
    if target == 0.0 {
        return Err(Error::Degenerate(
            "reference representation has zero accuracy through the network".into(),
        ));
    }
    let stitched = tail_accuracy(
        tail,
        &apply_map(&fit.map, &member.select(&split.eval)?)?,
        &eval_labels,
    )?;
    Ok(1.0 - stitched / target)
}

fn labels_of(acts: &ActivationSet) -> Result<&[usize]> {
    acts.labels()
        .ok_or_else(|| Error::Argument("test activations need labels".into()))
}

/// Sensitivity test over low-rank approximations of one layer.
///
/// `S` holds the rank-`r` SVD approximation of the layer's (positions as
/// rows) activation matrix for each `r` in `ranks`, which must include the
/// full rank and have at least [`MIN_TEST_MEMBERS`] entries. The reference is
/// the member with the highest probe accuracy. `tail` is required for
/// [`TestIndex::DmFunctional`].
pub fn sensitivity_test(
    acts: &ActivationSet,
    ranks: &[usize],
    index: TestIndex,
    tail: Option<NetTail<'_>>,
    cfg: &TestConfig,
) -> Result<TestReport> {
    let labels = labels_of(acts)?;
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != ranks.len() {
        return Err(Error::Argument("ranks contain duplicates".into()));
    }
    if ranks.len() < MIN_TEST_MEMBERS {
        return Err(Error::Argument(format!(
            "{} ranks given, at least {MIN_TEST_MEMBERS} needed",
            ranks.len()
        )));
    }
    let x = acts.position_rows();
    let full = x.rows().min(x.cols());
    if sorted[0] == 0 || *sorted.last().unwrap() > full {
        return Err(Error::Argument(format!("ranks must lie in 1..={full}")));
    }
    if !ranks.contains(&full) {
        return Err(Error::Argument(format!(
            "ranks must include the full rank {full}"
        )));
    }
    if index.needs_network() && tail.is_none() {
        return Err(Error::Argument(
            "dm-functional needs the network tail".into(),
        ));
    }

    let members: Vec<ActivationSet> = ranks
        .par_iter()
        .map(|&r| {
            ActivationSet::from_position_rows(
                low_rank_approx(&x, r)?,
                acts.positions(),
                Some(labels.to_vec()),
            )
        })
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = members
        .par_iter()
        .map(|m| linear_probe(m, labels, &cfg.probe))
        .collect::<Result<_>>()?;
    let reference = argmax(&scores);
    let split = if index.needs_network() {
        Some(DmSplit::new(acts.samples(), cfg)?)
    } else {
        None
    };
    let ds: Vec<f64> = members
        .par_iter()
        .map(|m| dissimilarity(index, &members[reference], m, tail, split.as_ref(), labels))
        .collect::<Result<_>>()?;
    let rows = ranks
        .iter()
        .zip(scores.iter().zip(ds))
        .map(|(r, (&f, d))| TestRow {
            id: format!("rank-{r}"),
            probe_accuracy: f,
            gap: (scores[reference] - f).abs(),
            dissimilarity: d,
        })
        .collect();
    Ok(TestReport::assemble(
        "sensitivity",
        index,
        format!("rank-{}", ranks[reference]),
        Some(scores[reference]),
        rows,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecificityReport {
    /// One report per anchor layer of the first instance.
    pub per_layer: Vec<TestReport>,
    /// Correlations over the rows of all anchors pooled together.
    pub aggregate: TestReport,
}

impl SpecificityReport {
    pub fn summaries(&self) -> Vec<SummaryRow> {
        let mut out: Vec<SummaryRow> = self
            .per_layer
            .iter()
            .map(|r| r.summary(r.reference.clone()))
            .collect();
        out.push(self.aggregate.summary("aggregate"));
        out
    }
}

/// Specificity test across independently trained instances.
///
/// For every layer `ℓ` in `layers`, the anchor is layer `ℓ` of `nets[0]` and
/// `S` holds every listed layer of every other instance, so the anchor never
/// compares with itself. Members are identified as `net<k>/layer<ℓ>`.
pub fn specificity_test(
    nets: &[FeedforwardNet],
    layers: &[usize],
    data: &LabeledDataset,
    index: TestIndex,
    cfg: &TestConfig,
) -> Result<SpecificityReport> {
    if nets.len() < 3 {
        return Err(Error::Argument(format!(
            "specificity needs at least 3 instances, got {}",
            nets.len()
        )));
    }
    if layers.is_empty() {
        return Err(Error::Argument("no layers given".into()));
    }
    if (nets.len() - 1) * layers.len() < MIN_TEST_MEMBERS {
        return Err(Error::Argument(format!(
            "{} instances x {} layers give fewer than {MIN_TEST_MEMBERS} comparisons",
            nets.len(),
            layers.len()
        )));
    }
    for (k, net) in nets.iter().enumerate() {
        if let Some(&l) = layers.iter().find(|&&l| l > net.depth()) {
            return Err(Error::Argument(format!(
                "layer {l} out of range for instance {k}"
            )));
        }
    }
    let cells: Vec<(usize, usize)> = (0..nets.len())
        .flat_map(|k| layers.iter().map(move |&l| (k, l)))
        .collect();
    let acts: Vec<ActivationSet> = cells
        .par_iter()
        .map(|&(k, l)| {
            ActivationSet::from_matrix(
                nets[k].forward_to(l, &data.inputs)?,
                Some(data.labels.clone()),
            )
        })
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = acts
        .par_iter()
        .map(|a| linear_probe(a, &data.labels, &cfg.probe))
        .collect::<Result<_>>()?;
    let id = |(k, l): (usize, usize)| format!("net{k}/layer{l}");
    let split = if index.needs_network() {
        Some(DmSplit::new(data.len(), cfg)?)
    } else {
        None
    };

    let members: Vec<usize> = (layers.len()..cells.len()).collect();
    let mut per_layer = Vec::with_capacity(layers.len());
    for (anchor, &layer) in layers.iter().enumerate() {
        let tail = NetTail {
            net: &nets[0],
            layer,
        };
        let ds: Vec<f64> = members
            .par_iter()
            .map(|&m| {
                dissimilarity(
                    index,
                    &acts[anchor],
                    &acts[m],
                    Some(tail),
                    split.as_ref(),
                    &data.labels,
                )
            })
            .collect::<Result<_>>()?;
        let rows = members
            .iter()
            .zip(ds)
            .map(|(&m, d)| TestRow {
                id: id(cells[m]),
                probe_accuracy: scores[m],
                gap: (scores[anchor] - scores[m]).abs(),
                dissimilarity: d,
            })
            .collect();
        per_layer.push(TestReport::assemble(
            "specificity",
            index,
            id(cells[anchor]),
            Some(scores[anchor]),
            rows,
        ));
    }
    let pooled: Vec<TestRow> = per_layer
        .iter()
        .flat_map(|r| {
            r.rows.iter().map(move |row| TestRow {
                id: format!("{}~{}", r.reference, row.id),
                ..row.clone()
            })
        })
        .collect();
    let aggregate = TestReport::assemble("specificity", index, "all-anchors".into(), None, pooled);
    Ok(SpecificityReport {
        per_layer,
        aggregate,
    })
}
