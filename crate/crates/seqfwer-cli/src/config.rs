//! JSON config schemas for the CLI subcommands. Unknown keys are rejected;
//! seeds are mandatory wherever randomness is involved.

use serde::Deserialize;

use seqfwer::model::StreamModel;
use seqfwer::statistics::SequentialStatistic;

/// Null or alternative path generator for calibration.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplerConfig {
    /// Distribution-free negated signed-rank p-value path.
    SignedRank,
    /// Arbitrary statistic over streams drawn from the given models.
    Statistic {
        statistic: SequentialStatistic,
        models: Vec<StreamModel>,
        #[serde(default)]
        equicorrelation: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrateKind {
    Single,
    Ladder,
    Dual,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    pub kind: CalibrateKind,
    #[serde(default = "one")]
    pub k: usize,
    pub alpha: f64,
    #[serde(default)]
    pub beta: Option<f64>,
    pub reps: usize,
    pub seed: u64,
    pub schedule: Vec<usize>,
    pub null: SamplerConfig,
    /// Alternative-path sampler; required for dual calibration.
    #[serde(default)]
    pub alt: Option<SamplerConfig>,
    /// Replicates for the fresh-seed validation pass (defaults to `reps`).
    #[serde(default)]
    pub validation_reps: Option<usize>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcedureKind {
    StepDown,
    Dual,
    InOrder,
    Closed,
}

/// Family constructors available to `run`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    /// k elementary hypotheses.
    Elementary { k: usize },
    /// Nested chain of intersections, tested global-first.
    Chain { k: usize },
    /// All nonempty intersections, tested in decreasing dimension.
    Closed { k: usize },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub procedure: ProcedureKind,
    pub family: FamilySpec,
    pub schedule: Vec<usize>,
    /// One statistic per family element.
    pub statistics: Vec<SequentialStatistic>,
    /// Step-down / dual: one ladder (k upper rungs) per element.
    #[serde(default)]
    pub ladders: Option<Vec<LadderSpec>>,
    /// In-order / closed: one threshold per element.
    #[serde(default)]
    pub thresholds: Option<Vec<f64>>,
    /// In-order over an elementary family: blocks of element indices.
    #[serde(default)]
    pub partition: Option<Vec<Vec<usize>>>,
    /// Record per-element statistic values on decision rounds.
    #[serde(default)]
    pub record_values: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSpec {
    pub upper: Vec<f64>,
    #[serde(default)]
    pub lower: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub alpha: f64,
    pub beta: f64,
    pub reps: usize,
    pub calibration_reps: usize,
    pub seed: u64,
}
