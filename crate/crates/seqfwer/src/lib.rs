//! Sequential multiple hypothesis testing with familywise error rate control.
//!
//! The crate is organized around a generic decision engine: a rejection rule
//! maps the current (rejected, accepted, sample size) state and the observed
//! data to the next set of hypotheses to reject, and the engine iterates it
//! over a fixed look schedule, re-scanning the current look after every
//! decision so that one rejection can trigger others before further sampling.
//! Four procedures instantiate the engine:
//!
//! - step-down testing with per-hypothesis critical-value ladders,
//! - a dual procedure adding mirror-image acceptance boundaries,
//! - testing hypotheses in order through an ordered partition, and
//! - closed testing of intersection families in decreasing dimension.
//!
//! Supporting modules provide exact sequential Wilcoxon signed-rank
//! statistics and two-sample t statistics, Monte Carlo critical-value
//! calibration with validation re-simulation, empirical checks of the
//! engine's correctness conditions (including an exact brute-force oracle
//! for tiny discrete instances), and two ready-made simulation studies.

pub mod calibration;
pub mod decision;
pub mod error;
pub mod experiments;
pub mod family;
pub mod ladder;
pub mod model;
pub mod procedures;
pub mod schedule;
pub mod statistics;
pub mod verify;

pub use decision::{DecisionState, DecisionTrace, TraceRecord};
pub use error::{Error, Result};
pub use family::{
    build_chain_family, build_closed_partition, CompositeHypothesis, HypothesisFamily,
    HypothesisId, OrderedPartition,
};
pub use ladder::{CriticalLadder, Standardizer};
pub use procedures::{
    run_closed, run_dual, run_in_order, run_rejection_loop, run_step_down, AcceptanceRule,
    ProcedureConfig, RejectionRule,
};
pub use schedule::SampleSchedule;
pub use statistics::{SequentialStatistic, SignedRankTable, StreamSet};
