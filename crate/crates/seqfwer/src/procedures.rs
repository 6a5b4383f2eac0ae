//! The generic rejection-loop engine and the concrete procedures built on it:
//! step-down, dual rejection/acceptance, testing in order, and closed testing.
//!
//! A procedure is driven by a rejection rule (and optionally an acceptance
//! rule): starting from empty decision sets at sample size zero, the engine
//! finds the smallest scheduled look, at or after the current one, where a
//! rule fires, applies rejections then acceptances, and repeats. Re-scanning
//! from the same look lets one decision trigger cascades there before any
//! further sampling. The run ends when everything is decided, or at the last
//! look, where all remaining hypotheses are accepted.

use std::collections::BTreeSet;

use crate::decision::{DecisionState, DecisionTrace, TraceRecord};
use crate::error::{Error, Result};
use crate::family::{HypothesisFamily, OrderedPartition};
use crate::ladder::{CriticalLadder, Standardizer};
use crate::schedule::SampleSchedule;
use crate::statistics::{evaluate, SequentialStatistic, StreamSet};

/// Maps the current decision state and look to the set of additional
/// hypotheses to reject, reading data only through prefixes of length n.
pub trait RejectionRule: Sync {
    fn propose(&self, state: &DecisionState, n: usize, data: &StreamSet)
        -> Result<BTreeSet<usize>>;
}

/// The acceptance counterpart; the terminal accept-all-remaining policy is
/// applied by the engine regardless.
pub trait AcceptanceRule: Sync {
    fn propose(&self, state: &DecisionState, n: usize, data: &StreamSet)
        -> Result<BTreeSet<usize>>;
}

/// No mid-run acceptances; hypotheses are accepted only at termination.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoMidRunAcceptance;

impl AcceptanceRule for NoMidRunAcceptance {
    fn propose(&self, _: &DecisionState, _: usize, _: &StreamSet) -> Result<BTreeSet<usize>> {
        Ok(BTreeSet::new())
    }
}

/// Everything a procedure run needs: the family, the look schedule, one
/// statistic per family element, and the thresholds appropriate to the
/// procedure (ladders for step-down and dual, single thresholds plus a
/// partition for in-order and closed).
#[derive(Debug, Clone)]
pub struct ProcedureConfig {
    pub family: HypothesisFamily,
    pub schedule: SampleSchedule,
    pub statistics: Vec<SequentialStatistic>,
    pub ladders: Option<Vec<CriticalLadder>>,
    pub thresholds: Option<Vec<f64>>,
    pub partition: Option<OrderedPartition>,
    /// Record per-element statistic values on every decision round.
    pub record_values: bool,
}

impl ProcedureConfig {
    fn base(
        family: HypothesisFamily,
        schedule: SampleSchedule,
        statistics: Vec<SequentialStatistic>,
    ) -> Result<Self> {
        if statistics.len() != family.len() {
            return Err(Error::Config(format!(
                "{} statistics for {} family elements",
                statistics.len(),
                family.len()
            )));
        }
        for (i, s) in statistics.iter().enumerate() {
            if schedule.first() < s.n_min() {
                return Err(Error::Config(format!(
                    "first look {} is below the minimum sample size {} of statistic {i}",
                    schedule.first(),
                    s.n_min()
                )));
            }
        }
        Ok(Self {
            family,
            schedule,
            statistics,
            ladders: None,
            thresholds: None,
            partition: None,
            record_values: false,
        })
    }

    /// Step-down configuration: one k-rung upper ladder per element.
    pub fn step_down(
        family: HypothesisFamily,
        schedule: SampleSchedule,
        statistics: Vec<SequentialStatistic>,
        ladders: Vec<CriticalLadder>,
    ) -> Result<Self> {
        let mut cfg = Self::base(family, schedule, statistics)?;
        let k = cfg.family.len();
        if ladders.len() != k {
            return Err(Error::Config(format!(
                "{} ladders for {k} family elements",
                ladders.len()
            )));
        }
        if let Some(bad) = ladders.iter().position(|l| l.k() != k) {
            return Err(Error::Config(format!(
                "ladder {bad} has {} rungs, family size is {k}",
                ladders[bad].k()
            )));
        }
        cfg.ladders = Some(ladders);
        Ok(cfg)
    }

    /// Dual configuration: ladders must carry lower rungs as well.
    pub fn dual(
        family: HypothesisFamily,
        schedule: SampleSchedule,
        statistics: Vec<SequentialStatistic>,
        ladders: Vec<CriticalLadder>,
    ) -> Result<Self> {
        if let Some(bad) = ladders.iter().position(|l| !l.has_lower()) {
            return Err(Error::Config(format!("ladder {bad} has no lower rungs")));
        }
        Self::step_down(family, schedule, statistics, ladders)
    }

    /// Testing-in-order configuration: a single threshold per element and a
    /// valid ordered partition.
    pub fn in_order(
        family: HypothesisFamily,
        schedule: SampleSchedule,
        statistics: Vec<SequentialStatistic>,
        thresholds: Vec<f64>,
        partition: OrderedPartition,
    ) -> Result<Self> {
        let mut cfg = Self::base(family, schedule, statistics)?;
        if thresholds.len() != cfg.family.len() {
            return Err(Error::Config(format!(
                "{} thresholds for {} family elements",
                thresholds.len(),
                cfg.family.len()
            )));
        }
        partition
            .validate(&cfg.family)
            .map_err(|v| Error::Validation(format!("invalid partition: {v}")))?;
        cfg.thresholds = Some(thresholds);
        cfg.partition = Some(partition);
        Ok(cfg)
    }

    fn used_streams(&self) -> BTreeSet<usize> {
        self.statistics
            .iter()
            .flat_map(|s| s.streams_used())
            .collect()
    }

    fn check_data(&self, data: &StreamSet) -> Result<()> {
        let need = self.schedule.max();
        for s in self.used_streams() {
            let have = data.stream(s)?.len();
            if have < need {
                return Err(Error::DataExhausted {
                    stream: s,
                    have,
                    need,
                });
            }
        }
        Ok(())
    }
}

fn checked_proposal(
    proposal: BTreeSet<usize>,
    state: &DecisionState,
    n: usize,
) -> Result<BTreeSet<usize>> {
    if let Some(&e) = proposal.iter().find(|e| state.is_decided(**e)) {
        return Err(Error::ContractViolation { element: e, n });
    }
    Ok(proposal)
}

fn first_open_block(partition: &OrderedPartition, rejected: &BTreeSet<usize>) -> Option<usize> {
    partition
        .blocks()
        .iter()
        .position(|b| !b.iter().all(|e| rejected.contains(e)))
}

/// Runs the rejection recursion to completion and returns the full trace.
pub fn run_rejection_loop(
    rule: &dyn RejectionRule,
    acceptance: &dyn AcceptanceRule,
    config: &ProcedureConfig,
    data: &StreamSet,
) -> Result<DecisionTrace> {
    config.check_data(data)?;
    let m = config.family.len();
    let mut state = DecisionState::start();
    if let Some(p) = &config.partition {
        state.block_cursor = first_open_block(p, &state.rejected);
    }
    let mut records: Vec<TraceRecord> = Vec::new();

    while !state.all_decided(m) {
        // smallest look at or after the current sample size where a rule fires
        let mut hit: Option<(usize, BTreeSet<usize>)> = None;
        for n in config.schedule.looks_from(state.sample_size) {
            let rejections = checked_proposal(rule.propose(&state, n, data)?, &state, n)?;
            if !rejections.is_empty() {
                hit = Some((n, rejections));
                break;
            }
            let acceptances = checked_proposal(acceptance.propose(&state, n, data)?, &state, n)?;
            if !acceptances.is_empty() {
                hit = Some((n, BTreeSet::new()));
                break;
            }
        }
        match hit {
            None => {
                // nothing can fire at any remaining look: sampling runs out at
                // the last look and every remaining hypothesis is accepted
                let n_term = config.schedule.max();
                state.sample_size = n_term;
                state.stage += 1;
                let remaining: Vec<usize> = state.active(m).collect();
                state.accepted.extend(remaining.iter().copied());
                records.push(TraceRecord {
                    stage: state.stage,
                    sample_size: n_term,
                    rejected: Vec::new(),
                    accepted: remaining,
                    values: record_values(config, data, n_term),
                });
                break;
            }
            Some((n, rejections)) => {
                state.sample_size = n;
                state.stage += 1;
                state.rejected.extend(rejections.iter().copied());
                // acceptances are re-evaluated after this round's rejections
                let acceptances =
                    checked_proposal(acceptance.propose(&state, n, data)?, &state, n)?;
                state.accepted.extend(acceptances.iter().copied());
                if let Some(p) = &config.partition {
                    state.block_cursor = first_open_block(p, &state.rejected);
                }
                debug_assert!(
                    !(rejections.is_empty() && acceptances.is_empty()),
                    "engine stopped at a look where nothing fired"
                );
                records.push(TraceRecord {
                    stage: state.stage,
                    sample_size: n,
                    rejected: rejections.into_iter().collect(),
                    accepted: acceptances.into_iter().collect(),
                    values: record_values(config, data, n),
                });
            }
        }
    }

    Ok(DecisionTrace {
        records,
        terminal: state,
    })
}

fn record_values(config: &ProcedureConfig, data: &StreamSet, n: usize) -> Option<Vec<Option<f64>>> {
    if !config.record_values {
        return None;
    }
    Some(
        config
            .statistics
            .iter()
            .map(|s| evaluate(s, data, n).ok())
            .collect(),
    )
}

/// Step-down rejection rule: reject every active hypothesis whose
/// standardized statistic reaches `k - |rejected|`.
pub struct StepDownRule<'a> {
    standardizers: Vec<Standardizer>,
    statistics: &'a [SequentialStatistic],
}

impl<'a> StepDownRule<'a> {
    pub fn from_config(config: &'a ProcedureConfig) -> Result<Self> {
        let ladders = config
            .ladders
            .as_ref()
            .ok_or_else(|| Error::Config("step-down requires ladders".into()))?;
        Ok(Self {
            standardizers: ladders.iter().cloned().map(Standardizer::new).collect(),
            statistics: &config.statistics,
        })
    }

    pub fn standardizers(&self) -> &[Standardizer] {
        &self.standardizers
    }
}

impl RejectionRule for StepDownRule<'_> {
    fn propose(
        &self,
        state: &DecisionState,
        n: usize,
        data: &StreamSet,
    ) -> Result<BTreeSet<usize>> {
        let k = self.standardizers.len();
        let level = (k - state.rejected_count()) as f64;
        let mut out = BTreeSet::new();
        for j in state.active(k) {
            let t = evaluate(&self.statistics[j], data, n)?;
            if self.standardizers[j].upper(t) >= level {
                out.insert(j);
            }
        }
        Ok(out)
    }
}

/// Acceptance mirror of the step-down rule: accept every active hypothesis
/// whose lower-standardized statistic drops to `-(k - |accepted|)`.
pub struct DualAcceptanceRule<'a> {
    standardizers: Vec<Standardizer>,
    statistics: &'a [SequentialStatistic],
}

impl<'a> DualAcceptanceRule<'a> {
    pub fn from_config(config: &'a ProcedureConfig) -> Result<Self> {
        let ladders = config
            .ladders
            .as_ref()
            .ok_or_else(|| Error::Config("dual procedure requires ladders".into()))?;
        if let Some(bad) = ladders.iter().position(|l| !l.has_lower()) {
            return Err(Error::Config(format!("ladder {bad} has no lower rungs")));
        }
        Ok(Self {
            standardizers: ladders.iter().cloned().map(Standardizer::new).collect(),
            statistics: &config.statistics,
        })
    }
}

impl AcceptanceRule for DualAcceptanceRule<'_> {
    fn propose(
        &self,
        state: &DecisionState,
        n: usize,
        data: &StreamSet,
    ) -> Result<BTreeSet<usize>> {
        let k = self.standardizers.len();
        let level = -((k - state.accepted_count()) as f64);
        let mut out = BTreeSet::new();
        for j in state.active(k) {
            let t = evaluate(&self.statistics[j], data, n)?;
            if self.standardizers[j].lower(t)? <= level {
                out.insert(j);
            }
        }
        Ok(out)
    }
}

/// In-order rejection rule: reject an undecided hypothesis when its statistic
/// clears its single threshold and every earlier block is fully rejected.
pub struct InOrderRule<'a> {
    thresholds: &'a [f64],
    partition: &'a OrderedPartition,
    statistics: &'a [SequentialStatistic],
}

impl<'a> InOrderRule<'a> {
    pub fn from_config(config: &'a ProcedureConfig) -> Result<Self> {
        let thresholds = config
            .thresholds
            .as_deref()
            .ok_or_else(|| Error::Config("in-order procedure requires thresholds".into()))?;
        let partition = config
            .partition
            .as_ref()
            .ok_or_else(|| Error::Config("in-order procedure requires a partition".into()))?;
        Ok(Self {
            thresholds,
            partition,
            statistics: &config.statistics,
        })
    }
}

impl RejectionRule for InOrderRule<'_> {
    fn propose(
        &self,
        state: &DecisionState,
        n: usize,
        data: &StreamSet,
    ) -> Result<BTreeSet<usize>> {
        let m = self.statistics.len();
        let mut out = BTreeSet::new();
        for j in state.active(m) {
            let block = match self.partition.block_of(j) {
                Some(b) => b,
                None => continue,
            };
            let gate_open = self.partition.blocks()[..block]
                .iter()
                .all(|b| b.iter().all(|e| state.rejected.contains(e)));
            if !gate_open {
                continue;
            }
            let t = evaluate(&self.statistics[j], data, n)?;
            if t >= self.thresholds[j] {
                out.insert(j);
            }
        }
        Ok(out)
    }
}

/// Runs the step-down procedure with terminal-only acceptance.
pub fn run_step_down(config: &ProcedureConfig, data: &StreamSet) -> Result<DecisionTrace> {
    let rule = StepDownRule::from_config(config)?;
    run_rejection_loop(&rule, &NoMidRunAcceptance, config, data)
}

/// Runs the dual procedure: step-down rejections interleaved with mirror
/// acceptances. Within one look rejections take precedence and acceptances
/// re-evaluate against the enlarged rejected set.
pub fn run_dual(config: &ProcedureConfig, data: &StreamSet) -> Result<DecisionTrace> {
    let rule = StepDownRule::from_config(config)?;
    let acceptance = DualAcceptanceRule::from_config(config)?;
    run_rejection_loop(&rule, &acceptance, config, data)
}

/// Runs the testing-in-order procedure with terminal-only acceptance.
pub fn run_in_order(config: &ProcedureConfig, data: &StreamSet) -> Result<DecisionTrace> {
    let rule = InOrderRule::from_config(config)?;
    run_rejection_loop(&rule, &NoMidRunAcceptance, config, data)
}

/// Closed testing: in-order over a decreasing-dimension partition of a family
/// closed under intersection.
pub fn run_closed(config: &ProcedureConfig, data: &StreamSet) -> Result<DecisionTrace> {
    if !config.family.is_closed() {
        return Err(Error::Validation(
            "closed testing requires a family closed under intersection".into(),
        ));
    }
    let partition = config
        .partition
        .as_ref()
        .ok_or_else(|| Error::Config("closed testing requires a partition".into()))?;
    let mut last_dim = usize::MAX;
    for (bi, block) in partition.blocks().iter().enumerate() {
        let dims: BTreeSet<usize> = block
            .iter()
            .map(|&e| config.family.element(e).dimension())
            .collect();
        if dims.len() != 1 {
            return Err(Error::Validation(format!(
                "closed-testing block {bi} mixes dimensions {dims:?}"
            )));
        }
        let dim = *dims.iter().next().unwrap();
        if dim >= last_dim {
            return Err(Error::Validation(format!(
                "closed-testing blocks must have strictly decreasing dimension (block {bi})"
            )));
        }
        last_dim = dim;
    }
    run_in_order(config, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{build_chain_family, build_closed_partition};

    fn elementary(k: usize) -> HypothesisFamily {
        HypothesisFamily::elementary(k).unwrap()
    }

    fn path_stats(k: usize) -> Vec<SequentialStatistic> {
        (0..k)
            .map(|s| SequentialStatistic::Path { stream: s })
            .collect()
    }

    fn flat_ladders(k: usize, value: f64) -> Vec<CriticalLadder> {
        (0..k)
            .map(|_| CriticalLadder::new(vec![value; k]).unwrap())
            .collect()
    }

    #[test]
    fn empty_rule_accepts_everything_at_max_look() {
        struct Never;
        impl RejectionRule for Never {
            fn propose(
                &self,
                _: &DecisionState,
                _: usize,
                _: &StreamSet,
            ) -> Result<BTreeSet<usize>> {
                Ok(BTreeSet::new())
            }
        }
        let config = ProcedureConfig::step_down(
            elementary(2),
            SampleSchedule::new(vec![5, 10]).unwrap(),
            path_stats(2),
            flat_ladders(2, 100.0),
        )
        .unwrap();
        let data = StreamSet::new(vec![vec![0.0; 10], vec![0.0; 10]]);
        let trace = run_rejection_loop(&Never, &NoMidRunAcceptance, &config, &data).unwrap();
        assert!(trace.rejected().is_empty());
        assert_eq!(trace.accepted().len(), 2);
        assert_eq!(trace.terminal.sample_size, 10);
        assert_eq!(trace.records.len(), 1);
        trace.validate(2).unwrap();
    }

    #[test]
    fn single_hypothesis_rejects_at_first_crossing() {
        // threshold exceeded at n = 10 of {5, 10, 15}
        let config = ProcedureConfig::step_down(
            elementary(1),
            SampleSchedule::new(vec![5, 10, 15]).unwrap(),
            path_stats(1),
            vec![CriticalLadder::new(vec![1.0]).unwrap()],
        )
        .unwrap();
        let mut stream = vec![0.0; 15];
        stream[9] = 2.0;
        let data = StreamSet::new(vec![stream]);
        let trace = run_step_down(&config, &data).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.records[0].sample_size, 10);
        assert_eq!(trace.records[0].rejected, vec![0]);
        assert!(trace.accepted().is_empty());
        trace.validate(1).unwrap();
    }

    // Hand-simulated cascade: rejecting the first hypothesis lowers the
    // second's effective rung so both fall at the same look in two rounds.
    #[test]
    fn step_down_cascades_at_same_look() {
        let ladders = vec![
            CriticalLadder::new(vec![2.0, 1.0]).unwrap(),
            CriticalLadder::new(vec![2.0, 1.0]).unwrap(),
        ];
        let config = ProcedureConfig::step_down(
            elementary(2),
            SampleSchedule::new(vec![1]).unwrap(),
            path_stats(2),
            ladders,
        )
        .unwrap();
        let data = StreamSet::new(vec![vec![2.5], vec![1.5]]);
        let trace = run_step_down(&config, &data).unwrap();
        assert_eq!(trace.records.len(), 2);
        assert_eq!(trace.records[0].rejected, vec![0]);
        assert_eq!(trace.records[0].sample_size, 1);
        assert_eq!(trace.records[1].rejected, vec![1]);
        assert_eq!(trace.records[1].sample_size, 1);
        trace.validate(2).unwrap();
    }

    // Ladder (k, k-1, ..., 1) makes the standardizing map the identity, so
    // raw path values are the standardized values.
    fn identity_ladders(k: usize) -> Vec<CriticalLadder> {
        (0..k)
            .map(|_| CriticalLadder::new((1..=k).rev().map(|v| v as f64).collect()).unwrap())
            .collect()
    }

    #[test]
    fn step_down_rho_blocks_second_below_initial_rung() {
        let config = ProcedureConfig::step_down(
            elementary(2),
            SampleSchedule::new(vec![1]).unwrap(),
            path_stats(2),
            identity_ladders(2),
        )
        .unwrap();
        let rule = StepDownRule::from_config(&config).unwrap();
        // standardized values (2.3, 0.5) against level k - |R| = 2
        let data = StreamSet::new(vec![vec![2.3], vec![0.5]]);
        let state = DecisionState::start();
        let picked = rule.propose(&state, 1, &data).unwrap();
        assert_eq!(picked, BTreeSet::from([0]));
    }

    #[test]
    fn step_down_rho_relaxed_after_rejections() {
        // k = 3 with two rejected: level 1; standardized value 1.0 qualifies
        let config = ProcedureConfig::step_down(
            elementary(3),
            SampleSchedule::new(vec![1]).unwrap(),
            path_stats(3),
            identity_ladders(3),
        )
        .unwrap();
        let rule = StepDownRule::from_config(&config).unwrap();
        let data = StreamSet::new(vec![vec![0.0], vec![0.0], vec![1.0]]);
        let state = DecisionState::with_sets(BTreeSet::from([0, 1]), BTreeSet::new());
        let picked = rule.propose(&state, 1, &data).unwrap();
        assert_eq!(picked, BTreeSet::from([2]));
    }

    // Fixpoint equivalence with the sorted step-down count: iterating the
    // rule at fixed n equals taking the top m standardized values, where m is
    // the largest count with the (m+1)-th value below k - r - m.
    #[test]
    fn step_down_fixpoint_matches_count_rule() {
        use rand::Rng;
        let mut rng = crate::model::replicate_rng(77, 0);
        for k in 1..=6usize {
            for _ in 0..200 {
                let values: Vec<f64> = (0..k)
                    .map(|_| rng.gen_range(-1.0..(k as f64 + 1.0)))
                    .collect();
                // iterate the threshold rule to fixpoint
                let mut rejected: BTreeSet<usize> = BTreeSet::new();
                loop {
                    let level = (k - rejected.len()) as f64;
                    let add: Vec<usize> = (0..k)
                        .filter(|j| !rejected.contains(j) && values[*j] >= level)
                        .collect();
                    if add.is_empty() {
                        break;
                    }
                    rejected.extend(add);
                }
                // count rule on sorted values
                let mut sorted = values.clone();
                sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
                let mut m = 0usize;
                while m < k && sorted[m] >= (k - m) as f64 {
                    m += 1;
                }
                assert_eq!(rejected.len(), m, "values {values:?}");
                let mut top: Vec<usize> = (0..k).collect();
                top.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
                let top_set: BTreeSet<usize> = top[..m].iter().copied().collect();
                assert_eq!(rejected, top_set, "values {values:?}");
            }
        }
    }

    #[test]
    fn in_order_gate_blocks_later_blocks() {
        let family = elementary(3);
        let partition = OrderedPartition::new(vec![vec![0], vec![1], vec![2]]);
        let config = ProcedureConfig::in_order(
            family,
            SampleSchedule::new(vec![1, 2]).unwrap(),
            path_stats(3),
            vec![1.0, 1.0, 1.0],
            partition,
        )
        .unwrap();
        // block 1 never crosses; blocks 2 and 3 always would
        let data = StreamSet::new(vec![vec![0.0, 0.0], vec![5.0, 5.0], vec![5.0, 5.0]]);
        let trace = run_in_order(&config, &data).unwrap();
        assert!(trace.rejected().is_empty());
        assert_eq!(trace.accepted().len(), 3);
        assert_eq!(trace.terminal.sample_size, 2);
        assert_eq!(trace.terminal.block_cursor, Some(0));
        trace.validate(3).unwrap();
    }

    #[test]
    fn in_order_rejects_singleton_blocks_in_cascade() {
        let family = elementary(3);
        let partition = OrderedPartition::new(vec![vec![0], vec![1], vec![2]]);
        let config = ProcedureConfig::in_order(
            family,
            SampleSchedule::new(vec![1, 2]).unwrap(),
            path_stats(3),
            vec![1.0, 1.0, 1.0],
            partition,
        )
        .unwrap();
        let data = StreamSet::new(vec![vec![5.0, 5.0], vec![5.0, 5.0], vec![5.0, 5.0]]);
        let trace = run_in_order(&config, &data).unwrap();
        assert_eq!(trace.records.len(), 3);
        assert!(trace
            .records
            .iter()
            .all(|r| r.sample_size == 1 && r.rejected.len() == 1));
        assert_eq!(trace.terminal.block_cursor, None);
        trace.validate(3).unwrap();
    }

    #[test]
    fn dual_two_boundary_single_hypothesis() {
        let ladder = CriticalLadder::with_lower(vec![1.0], vec![-1.0]).unwrap();
        let config = ProcedureConfig::dual(
            elementary(1),
            SampleSchedule::new(vec![1, 2, 3]).unwrap(),
            path_stats(1),
            vec![ladder],
        )
        .unwrap();
        // crosses the lower boundary at look 2
        let data = StreamSet::new(vec![vec![0.0, -1.5, 5.0]]);
        let trace = run_dual(&config, &data).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.records[0].accepted, vec![0]);
        assert_eq!(trace.records[0].sample_size, 2);
        trace.validate(1).unwrap();
    }

    #[test]
    fn dual_all_negative_drift_accepts_everything() {
        let ladders = vec![
            CriticalLadder::with_lower(vec![2.0, 1.0], vec![-2.0, -1.0]).unwrap(),
            CriticalLadder::with_lower(vec![2.0, 1.0], vec![-2.0, -1.0]).unwrap(),
        ];
        let config = ProcedureConfig::dual(
            elementary(2),
            SampleSchedule::new(vec![1, 2]).unwrap(),
            path_stats(2),
            ladders,
        )
        .unwrap();
        let data = StreamSet::new(vec![vec![-3.0, -3.0], vec![-3.0, -3.0]]);
        let trace = run_dual(&config, &data).unwrap();
        assert!(trace.rejected().is_empty());
        assert_eq!(trace.accepted().len(), 2);
        assert_eq!(trace.terminal.sample_size, 1);
        trace.validate(2).unwrap();
    }

    // Hand-traced mixed fixture: one rejection and one acceptance at the
    // same look; the acceptance rung relaxes after the first acceptance,
    // mirroring how rejections relax rejection rungs.
    #[test]
    fn dual_interleaves_rejections_and_acceptances() {
        let ladders = vec![
            CriticalLadder::with_lower(vec![3.0, 2.0], vec![-3.0, -2.0]).unwrap(),
            CriticalLadder::with_lower(vec![3.0, 2.0], vec![-3.0, -2.0]).unwrap(),
        ];
        let config = ProcedureConfig::dual(
            elementary(2),
            SampleSchedule::new(vec![1]).unwrap(),
            path_stats(2),
            ladders,
        )
        .unwrap();
        // element 0 at +3.5 crosses the top rejection rung; element 1 at -2.5
        // does not reach the initial acceptance rung (level -2 needs
        // standardized <= -2, i.e. raw <= -3) until the set sizes change.
        // After rejecting element 0 the acceptance level is still -(2-0) = -2;
        // raw -2.5 standardizes to -1.5, so element 1 stays active at look 1
        // and is accepted terminally.
        let data = StreamSet::new(vec![vec![3.5], vec![-2.5]]);
        let trace = run_dual(&config, &data).unwrap();
        assert_eq!(trace.records[0].rejected, vec![0]);
        assert_eq!(trace.rejected().len(), 1);
        assert_eq!(trace.accepted().len(), 1);
        trace.validate(2).unwrap();

        // lower the raw value so it clears the initial rung at the same look
        let data2 = StreamSet::new(vec![vec![3.5], vec![-3.5]]);
        let trace2 = run_dual(&config, &data2).unwrap();
        assert_eq!(trace2.records.len(), 1);
        assert_eq!(trace2.records[0].rejected, vec![0]);
        assert_eq!(trace2.records[0].accepted, vec![1]);
        trace2.validate(2).unwrap();
    }

    #[test]
    fn closed_requires_closed_family_and_order() {
        let family = elementary(2); // not closed: {1} ∩ {2} = {1,2} missing
        let partition = OrderedPartition::new(vec![vec![0], vec![1]]);
        let config = ProcedureConfig::in_order(
            family,
            SampleSchedule::new(vec![1]).unwrap(),
            path_stats(2),
            vec![0.0, 0.0],
            partition,
        )
        .unwrap();
        let data = StreamSet::new(vec![vec![1.0], vec![1.0]]);
        assert!(matches!(
            run_closed(&config, &data),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn closed_chain_rejects_in_nested_order() {
        let (family, partition) = build_chain_family(3).unwrap();
        let config = ProcedureConfig::in_order(
            family,
            SampleSchedule::new(vec![1, 2]).unwrap(),
            path_stats(3),
            vec![1.0; 3],
            partition,
        )
        .unwrap();
        // element 0 (global) crosses at look 1, element 1 at look 2,
        // element 2 never
        let data = StreamSet::new(vec![vec![5.0, 5.0], vec![0.0, 5.0], vec![0.0, 0.0]]);
        let trace = run_closed(&config, &data).unwrap();
        assert_eq!(trace.records[0].rejected, vec![0]);
        assert_eq!(trace.records[0].sample_size, 1);
        assert_eq!(trace.records[1].rejected, vec![1]);
        assert_eq!(trace.records[1].sample_size, 2);
        assert_eq!(trace.rejected().len(), 2);
        assert!(trace.accepted().contains(&2));
        trace.validate(3).unwrap();
    }

    #[test]
    fn closed_full_family_gates_elementary_on_global() {
        let (family, partition) = build_closed_partition(2).unwrap();
        // elements: 0 = {1,2}, 1 = {1}, 2 = {2}
        let config = ProcedureConfig::in_order(
            family,
            SampleSchedule::new(vec![1]).unwrap(),
            path_stats(3),
            vec![1.0; 3],
            partition,
        )
        .unwrap();
        // global never crosses, elementary statistics scream
        let data = StreamSet::new(vec![vec![0.0], vec![9.0], vec![9.0]]);
        let trace = run_closed(&config, &data).unwrap();
        assert!(trace.rejected().is_empty());
        trace.validate(3).unwrap();
    }

    #[test]
    fn contract_violation_fails_loudly() {
        struct Rogue;
        impl RejectionRule for Rogue {
            fn propose(
                &self,
                _: &DecisionState,
                _: usize,
                _: &StreamSet,
            ) -> Result<BTreeSet<usize>> {
                Ok(BTreeSet::from([0])) // re-emits element 0 forever
            }
        }
        let config = ProcedureConfig::step_down(
            elementary(2),
            SampleSchedule::new(vec![1, 2]).unwrap(),
            path_stats(2),
            flat_ladders(2, 100.0),
        )
        .unwrap();
        let data = StreamSet::new(vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
        let err = run_rejection_loop(&Rogue, &NoMidRunAcceptance, &config, &data).unwrap_err();
        assert!(matches!(err, Error::ContractViolation { element: 0, .. }));
    }

    #[test]
    fn data_exhaustion_detected_before_running() {
        let config = ProcedureConfig::step_down(
            elementary(1),
            SampleSchedule::new(vec![5]).unwrap(),
            path_stats(1),
            flat_ladders(1, 0.0),
        )
        .unwrap();
        let data = StreamSet::new(vec![vec![1.0, 2.0]]);
        assert!(matches!(
            run_step_down(&config, &data),
            Err(Error::DataExhausted {
                stream: 0,
                have: 2,
                need: 5
            })
        ));
    }

    #[test]
    fn determinism_identical_runs() {
        let (family, partition) = build_chain_family(4).unwrap();
        let config = ProcedureConfig::in_order(
            family,
            SampleSchedule::new(vec![2, 4, 6]).unwrap(),
            path_stats(4),
            vec![0.5; 4],
            partition,
        )
        .unwrap();
        let data = StreamSet::new(vec![
            vec![0.9, 0.1, 0.0, 0.8, 0.2, 0.7],
            vec![0.0, 0.6, 0.0, 0.9, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.0, 0.9, 0.0],
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        ]);
        let a = run_closed(&config, &data).unwrap();
        let b = run_closed(&config, &data).unwrap();
        assert_eq!(a, b);
        a.validate(4).unwrap();
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // Arbitrary path data through all three runner kinds: every
            // produced trace satisfies the structural invariants, and the
            // chain rejections stay nested.
            #[test]
            fn traces_always_satisfy_invariants(
                k in 1usize..5,
                raw in prop::collection::vec(-2.0f64..4.0, 30),
                thresholds in prop::collection::vec(0.0f64..3.0, 4),
                looks in prop::collection::vec(1usize..8, 1..4),
            ) {
                let mut sizes: Vec<usize> = looks.clone();
                sizes.sort_unstable();
                sizes.dedup();
                let schedule = SampleSchedule::new(sizes).unwrap();
                let max_n = schedule.max();
                let data = StreamSet::new(
                    (0..k)
                        .map(|s| (0..max_n).map(|i| raw[(s * 7 + i) % raw.len()]).collect())
                        .collect(),
                );

                let sd_config = ProcedureConfig::step_down(
                    elementary(k),
                    schedule.clone(),
                    path_stats(k),
                    identity_ladders(k),
                )
                .unwrap();
                let trace = run_step_down(&sd_config, &data).unwrap();
                prop_assert!(trace.validate(k).is_ok());

                let (family, partition) = build_chain_family(k).unwrap();
                let chain_config = ProcedureConfig::in_order(
                    family,
                    schedule,
                    path_stats(k),
                    thresholds[..k].to_vec(),
                    partition,
                )
                .unwrap();
                let trace = run_closed(&chain_config, &data).unwrap();
                prop_assert!(trace.validate(k).is_ok());
                for &e in trace.rejected() {
                    prop_assert!(e == 0 || trace.rejected().contains(&(e - 1)));
                }
            }
        }
    }
}
