//! Rank correlations, linear probes, layer identification, and the
//! sensitivity/specificity tests built on them.

mod framework;
mod identify;
mod probe;
mod rank;

pub use framework::{
    sensitivity_test, specificity_test, write_summary_csv, NetTail, SpecificityReport, SummaryRow,
    TestConfig, TestIndex, TestReport, TestRow, MIN_TEST_MEMBERS,
};
pub use identify::{layer_identification, Identification, IdentificationMode};
pub use probe::{holdout_split, linear_probe, ProbeConfig, ProbeSplit};
pub use rank::{kendall_tau, spearman_rho, CorrelationMethod, RankCorrelation, EXACT_P_MAX_N};
