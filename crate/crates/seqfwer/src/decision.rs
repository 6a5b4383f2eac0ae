//! Decision bookkeeping: the evolving rejected/accepted sets of a run and the
//! ordered trace of decision rounds it produces.

use std::collections::BTreeSet;

use serde::Serialize;

/// The state a procedure transforms: rejected set, accepted set, stage
/// counter, current per-stream sample size, and (for in-order procedures)
/// the index of the first block not yet fully rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DecisionState {
    pub rejected: BTreeSet<usize>,
    pub accepted: BTreeSet<usize>,
    pub stage: usize,
    pub sample_size: usize,
    pub block_cursor: Option<usize>,
}

impl DecisionState {
    pub fn start() -> Self {
        Self {
            rejected: BTreeSet::new(),
            accepted: BTreeSet::new(),
            stage: 0,
            sample_size: 0,
            block_cursor: None,
        }
    }

    /// State with given decisions, for evaluating rules at arbitrary points.
    pub fn with_sets(rejected: BTreeSet<usize>, accepted: BTreeSet<usize>) -> Self {
        Self {
            rejected,
            accepted,
            stage: 0,
            sample_size: 0,
            block_cursor: None,
        }
    }

    pub fn is_decided(&self, element: usize) -> bool {
        self.rejected.contains(&element) || self.accepted.contains(&element)
    }

    pub fn all_decided(&self, family_size: usize) -> bool {
        self.rejected.len() + self.accepted.len() == family_size
    }

    pub fn rejected_count(&self) -> usize {
        self.rejected.len()
    }

    pub fn accepted_count(&self) -> usize {
        self.accepted.len()
    }

    /// Undecided elements, in index order.
    pub fn active(&self, family_size: usize) -> impl Iterator<Item = usize> + '_ {
        (0..family_size).filter(move |e| !self.is_decided(*e))
    }
}

/// One decision round: the look at which it happened and what was newly
/// rejected or accepted there. `values`, when recorded, holds the per-element
/// statistic values at that look (None where a statistic was not evaluable).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub stage: usize,
    pub sample_size: usize,
    pub rejected: Vec<usize>,
    pub accepted: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Option<f64>>>,
}

/// Full output of a procedure run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionTrace {
    pub records: Vec<TraceRecord>,
    pub terminal: DecisionState,
}

impl DecisionTrace {
    pub fn rejected(&self) -> &BTreeSet<usize> {
        &self.terminal.rejected
    }

    pub fn accepted(&self) -> &BTreeSet<usize> {
        &self.terminal.accepted
    }

    /// The look at which an element was decided, if it was.
    pub fn decision_size(&self, element: usize) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.rejected.contains(&element) || r.accepted.contains(&element))
            .map(|r| r.sample_size)
    }

    /// Checks every structural invariant a trace must satisfy. Returns a
    /// description of the first violation found.
    pub fn validate(&self, family_size: usize) -> std::result::Result<(), String> {
        let mut seen: BTreeSet<usize> = BTreeSet::new();
        let mut rejected: BTreeSet<usize> = BTreeSet::new();
        let mut accepted: BTreeSet<usize> = BTreeSet::new();
        let mut last_n = 0usize;
        let mut rejection_rounds = 0usize;
        for (i, rec) in self.records.iter().enumerate() {
            if rec.sample_size < last_n {
                return Err(format!(
                    "record {i}: sample size {} decreased from {}",
                    rec.sample_size, last_n
                ));
            }
            last_n = rec.sample_size;
            if rec.rejected.is_empty() && rec.accepted.is_empty() {
                return Err(format!("record {i} decides nothing"));
            }
            if !rec.rejected.is_empty() {
                rejection_rounds += 1;
            }
            for &e in rec.rejected.iter().chain(rec.accepted.iter()) {
                if e >= family_size {
                    return Err(format!("record {i}: element {e} out of range"));
                }
                if !seen.insert(e) {
                    return Err(format!("record {i}: element {e} decided twice"));
                }
            }
            rejected.extend(rec.rejected.iter().copied());
            accepted.extend(rec.accepted.iter().copied());
        }
        if rejection_rounds > family_size {
            return Err(format!(
                "{rejection_rounds} nonempty rejection rounds exceed family size {family_size}"
            ));
        }
        if rejected != self.terminal.rejected {
            return Err("terminal rejected set disagrees with records".into());
        }
        if accepted != self.terminal.accepted {
            return Err("terminal accepted set disagrees with records".into());
        }
        if !rejected.is_disjoint(&accepted) {
            return Err("rejected and accepted sets overlap".into());
        }
        Ok(())
    }
}
