//! Empirical verification: the two rejection-principle conditions
//! (pathwise monotonicity in the rejected set, and single-step containment
//! of rejections in the false set), Monte Carlo familywise error estimators
//! for both error types, an exact small-instance oracle, and the
//! sequential-exclusivity check for ordered partitions.

pub mod suite;

use std::collections::BTreeSet;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::decision::{DecisionState, DecisionTrace};
use crate::error::{Error, Result};
use crate::family::OrderedPartition;
use crate::model::{draw_streams, replicate_rng, StreamModel};
use crate::procedures::RejectionRule;
use crate::schedule::SampleSchedule;
use crate::statistics::StreamSet;

/// A simulation truth: per-stream generative models, a truth flag per family
/// element, and (for dual-error scenarios) an alternative-membership flag per
/// element. `equicorrelation` injects shared noise across normal streams.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub models: Vec<StreamModel>,
    pub truth: Vec<bool>,
    pub alternative: Option<Vec<bool>>,
    pub equicorrelation: Option<f64>,
}

impl Scenario {
    pub fn new(models: Vec<StreamModel>, truth: Vec<bool>) -> Self {
        Self {
            models,
            truth,
            alternative: None,
            equicorrelation: None,
        }
    }

    pub fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<StreamSet> {
        draw_streams(&self.models, self.equicorrelation, n, rng)
    }

    /// Elements whose hypothesis is true under this scenario.
    pub fn true_set(&self) -> BTreeSet<usize> {
        self.truth
            .iter()
            .enumerate()
            .filter_map(|(i, &t)| t.then_some(i))
            .collect()
    }

    /// Elements whose hypothesis is false (complement of the true set).
    pub fn false_set(&self) -> BTreeSet<usize> {
        self.truth
            .iter()
            .enumerate()
            .filter_map(|(i, &t)| (!t).then_some(i))
            .collect()
    }

    /// False set under the alternative-membership definition used for
    /// type-II error accounting.
    pub fn false_set_dual(&self) -> Result<BTreeSet<usize>> {
        let alt = self
            .alternative
            .as_ref()
            .ok_or_else(|| Error::Config("scenario has no alternative flags".into()))?;
        Ok(alt
            .iter()
            .enumerate()
            .filter_map(|(i, &g)| g.then_some(i))
            .collect())
    }
}

/// A Monte Carlo estimate checked against a bound at three standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub estimate: f64,
    pub se: f64,
    pub reps: usize,
    pub seed: u64,
    pub bound: f64,
    pub pass: bool,
}

impl EstimateReport {
    pub fn from_hits(hits: usize, reps: usize, seed: u64, bound: f64) -> Self {
        let estimate = hits as f64 / reps as f64;
        let se = (estimate * (1.0 - estimate) / reps as f64).sqrt();
        Self {
            estimate,
            se,
            reps,
            seed,
            bound,
            pass: estimate <= bound + 3.0 * se,
        }
    }
}

/// A witness to a monotonicity failure: the rule rejected something under
/// (r, a) that it neither rejects under the larger set r' nor has in r'.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityViolation {
    pub r: Vec<usize>,
    pub r_prime: Vec<usize>,
    pub a: Vec<usize>,
    pub n: usize,
    pub offending: Vec<usize>,
}

fn check_triple(
    rule: &dyn RejectionRule,
    r: &BTreeSet<usize>,
    r_prime: &BTreeSet<usize>,
    a: &BTreeSet<usize>,
    n: usize,
    data: &StreamSet,
) -> Result<Option<MonotonicityViolation>> {
    let state = DecisionState::with_sets(r.clone(), a.clone());
    let state_prime = DecisionState::with_sets(r_prime.clone(), BTreeSet::new());
    let lhs = rule.propose(&state, n, data)?;
    let rhs = rule.propose(&state_prime, n, data)?;
    let offending: Vec<usize> = lhs
        .iter()
        .filter(|e| !rhs.contains(e) && !r_prime.contains(e))
        .copied()
        .collect();
    if offending.is_empty() {
        Ok(None)
    } else {
        Ok(Some(MonotonicityViolation {
            r: r.iter().copied().collect(),
            r_prime: r_prime.iter().copied().collect(),
            a: a.iter().copied().collect(),
            n,
            offending,
        }))
    }
}

/// Checks the containment `rho(R, A, n) ⊆ rho(R', ∅, n) ∪ R'` for nested
/// rejected sets on shared data. Exhaustive over all (R ⊆ R', A) triples for
/// small families (each element independently in R∩R', R' only, A, or
/// neither), sampled otherwise. Violations are findings, not errors.
pub fn check_monotonicity(
    rule: &dyn RejectionRule,
    family_size: usize,
    data: &StreamSet,
    schedule: &SampleSchedule,
    trials: usize,
    seed: u64,
) -> Result<Vec<MonotonicityViolation>> {
    let mut violations = Vec::new();
    // 5 states per element: in both, in R' only, in A, in A and R', in none.
    // Enumerating (both, r'-only, a, none) per element covers all structures
    // because A need only be disjoint from R.
    let exhaustive = 4f64.powi(family_size as i32) * schedule.len() as f64 <= 2_000_000.0;
    if exhaustive {
        let mut assignment = vec![0u8; family_size];
        loop {
            let mut r = BTreeSet::new();
            let mut r_prime = BTreeSet::new();
            let mut a = BTreeSet::new();
            for (e, &code) in assignment.iter().enumerate() {
                match code {
                    0 => {}
                    1 => {
                        r_prime.insert(e);
                    }
                    2 => {
                        r.insert(e);
                        r_prime.insert(e);
                    }
                    3 => {
                        a.insert(e);
                    }
                    _ => unreachable!(),
                }
            }
            for n in schedule.sizes() {
                if let Some(v) = check_triple(rule, &r, &r_prime, &a, *n, data)? {
                    violations.push(v);
                }
            }
            // advance the base-4 counter
            let mut pos = 0;
            loop {
                if pos == family_size {
                    return Ok(violations);
                }
                assignment[pos] += 1;
                if assignment[pos] < 4 {
                    break;
                }
                assignment[pos] = 0;
                pos += 1;
            }
        }
    }
    use rand::Rng;
    let mut rng = replicate_rng(seed, 0);
    for _ in 0..trials {
        let mut r = BTreeSet::new();
        let mut r_prime = BTreeSet::new();
        let mut a = BTreeSet::new();
        for e in 0..family_size {
            match rng.gen_range(0..4) {
                1 => {
                    r_prime.insert(e);
                }
                2 => {
                    r.insert(e);
                    r_prime.insert(e);
                }
                3 => {
                    a.insert(e);
                }
                _ => {}
            }
        }
        let n = schedule.sizes()[rng.gen_range(0..schedule.len())];
        if let Some(v) = check_triple(rule, &r, &r_prime, &a, n, data)? {
            violations.push(v);
        }
    }
    Ok(violations)
}

/// Monte Carlo estimate of the single-step condition's failure probability:
/// P(rho(F, ∅, n) ⊄ F for some scheduled n), checked against alpha.
pub fn estimate_single_step(
    rule: &dyn RejectionRule,
    scenario: &Scenario,
    schedule: &SampleSchedule,
    reps: usize,
    seed: u64,
    alpha: f64,
) -> Result<EstimateReport> {
    let false_set = scenario.false_set();
    let hits: Result<Vec<bool>> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(seed, i);
            let data = scenario.draw(schedule.max(), &mut rng)?;
            let state = DecisionState::with_sets(false_set.clone(), BTreeSet::new());
            for n in schedule.sizes() {
                let picked = rule.propose(&state, *n, &data)?;
                if !picked.is_subset(&false_set) {
                    return Ok(true);
                }
            }
            Ok(false)
        })
        .collect();
    let hits = hits?.into_iter().filter(|&h| h).count();
    Ok(EstimateReport::from_hits(hits, reps, seed, alpha))
}

/// Monte Carlo familywise error rate of a full procedure: the fraction of
/// replicates whose trace rejects any true hypothesis.
pub fn estimate_fwer<F>(
    runner: F,
    scenario: &Scenario,
    max_n: usize,
    reps: usize,
    seed: u64,
    alpha: f64,
) -> Result<EstimateReport>
where
    F: Fn(&StreamSet) -> Result<DecisionTrace> + Sync,
{
    let true_set = scenario.true_set();
    let hits: Result<Vec<bool>> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(seed, i);
            let data = scenario.draw(max_n, &mut rng)?;
            let trace = runner(&data)?;
            Ok(!trace.rejected().is_disjoint(&true_set))
        })
        .collect();
    let hits = hits?.into_iter().filter(|&h| h).count();
    Ok(EstimateReport::from_hits(hits, reps, seed, alpha))
}

/// Type-II familywise error rate: the fraction of replicates accepting any
/// hypothesis flagged as false under the alternative-membership definition.
pub fn estimate_fwer2<F>(
    runner: F,
    scenario: &Scenario,
    max_n: usize,
    reps: usize,
    seed: u64,
    beta: f64,
) -> Result<EstimateReport>
where
    F: Fn(&StreamSet) -> Result<DecisionTrace> + Sync,
{
    let false_dual = scenario.false_set_dual()?;
    let hits: Result<Vec<bool>> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(seed, i);
            let data = scenario.draw(max_n, &mut rng)?;
            let trace = runner(&data)?;
            Ok(!trace.accepted().is_disjoint(&false_dual))
        })
        .collect();
    let hits = hits?.into_iter().filter(|&h| h).count();
    Ok(EstimateReport::from_hits(hits, reps, seed, beta))
}

/// Exact familywise error rate of a procedure on a tiny discrete scenario,
/// by exhaustive enumeration of every outcome sequence with its probability.
pub fn brute_force_fwer<F>(runner: F, scenario: &Scenario, max_n: usize, cap: u128) -> Result<f64>
where
    F: Fn(&StreamSet) -> Result<DecisionTrace>,
{
    let supports: Vec<(&[f64], &[f64])> = scenario
        .models
        .iter()
        .map(|m| match m {
            StreamModel::Discrete { values, probs } => Ok((values.as_slice(), probs.as_slice())),
            _ => Err(Error::Validation(
                "brute-force enumeration requires discrete stream models".into(),
            )),
        })
        .collect::<Result<_>>()?;
    let cells = supports.len() * max_n;
    let mut size: u128 = 1;
    for (values, _) in &supports {
        for _ in 0..max_n {
            size = size.saturating_mul(values.len() as u128);
            if size > cap {
                return Err(Error::EnumerationCap { size, cap });
            }
        }
    }

    let true_set = scenario.true_set();
    // mixed-radix counter over all (stream, index) cells
    let mut digits = vec![0usize; cells];
    let mut total = 0.0f64;
    loop {
        let mut prob = 1.0f64;
        let mut streams: Vec<Vec<f64>> = Vec::with_capacity(supports.len());
        for (s, (values, probs)) in supports.iter().enumerate() {
            let mut stream = Vec::with_capacity(max_n);
            for i in 0..max_n {
                let d = digits[s * max_n + i];
                stream.push(values[d]);
                prob *= probs[d];
            }
            streams.push(stream);
        }
        if prob > 0.0 {
            let trace = runner(&StreamSet::new(streams))?;
            if !trace.rejected().is_disjoint(&true_set) {
                total += prob;
            }
        }
        // advance
        let mut pos = 0;
        loop {
            if pos == cells {
                return Ok(total);
            }
            digits[pos] += 1;
            if digits[pos] < supports[pos / max_n].0.len() {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}

/// A failed exclusivity check: the first block that can hold two true
/// hypotheses while everything before it is false.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExclusivityViolation {
    pub block: usize,
    pub pair: (usize, usize),
}

/// A partition is sequentially exclusive under the given truth assignment if
/// every block whose earlier blocks are entirely false contains at most one
/// true hypothesis.
pub fn check_sequential_exclusivity(
    partition: &OrderedPartition,
    truth: &[bool],
) -> std::result::Result<(), ExclusivityViolation> {
    for (bi, block) in partition.blocks().iter().enumerate() {
        let earlier_all_false = partition.blocks()[..bi]
            .iter()
            .all(|b| b.iter().all(|&e| !truth[e]));
        if !earlier_all_false {
            continue;
        }
        let true_elems: Vec<usize> = block.iter().copied().filter(|&e| truth[e]).collect();
        if true_elems.len() > 1 {
            return Err(ExclusivityViolation {
                block: bi,
                pair: (true_elems[0], true_elems[1]),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{build_chain_family, build_closed_partition, HypothesisFamily};
    use crate::ladder::CriticalLadder;
    use crate::procedures::{run_in_order, InOrderRule, ProcedureConfig, StepDownRule};
    use crate::statistics::SequentialStatistic;

    fn path_stats(k: usize) -> Vec<SequentialStatistic> {
        (0..k)
            .map(|s| SequentialStatistic::Path { stream: s })
            .collect()
    }

    fn identity_ladders(k: usize) -> Vec<CriticalLadder> {
        (0..k)
            .map(|_| CriticalLadder::new((1..=k).rev().map(|v| v as f64).collect()).unwrap())
            .collect()
    }

    fn random_data(streams: usize, n: usize, seed: u64) -> StreamSet {
        use rand::Rng;
        let mut rng = replicate_rng(seed, 0);
        StreamSet::new(
            (0..streams)
                .map(|_| (0..n).map(|_| rng.gen_range(-2.0..5.0)).collect())
                .collect(),
        )
    }

    #[test]
    fn step_down_rho_is_monotone_exhaustively() {
        let family = HypothesisFamily::elementary(3).unwrap();
        let schedule = SampleSchedule::new(vec![1, 2, 3]).unwrap();
        let config = ProcedureConfig::step_down(
            family,
            schedule.clone(),
            path_stats(3),
            identity_ladders(3),
        )
        .unwrap();
        let rule = StepDownRule::from_config(&config).unwrap();
        let data = random_data(3, 3, 41);
        let violations = check_monotonicity(&rule, 3, &data, &schedule, 0, 0).unwrap();
        assert!(violations.is_empty(), "{violations:?}");
    }

    #[test]
    fn in_order_rho_is_monotone_exhaustively() {
        let (family, partition) = build_closed_partition(2).unwrap();
        let m = family.len();
        let schedule = SampleSchedule::new(vec![1, 2]).unwrap();
        let config = ProcedureConfig::in_order(
            family,
            schedule.clone(),
            path_stats(m),
            vec![1.0; m],
            partition,
        )
        .unwrap();
        let rule = InOrderRule::from_config(&config).unwrap();
        let data = random_data(m, 2, 43);
        let violations = check_monotonicity(&rule, m, &data, &schedule, 0, 0).unwrap();
        assert!(violations.is_empty(), "{violations:?}");
    }

    #[test]
    fn adversarial_rule_is_caught_with_witness() {
        // rejects MORE when the rejected set is smaller
        struct Contrarian;
        impl RejectionRule for Contrarian {
            fn propose(
                &self,
                state: &DecisionState,
                _n: usize,
                _data: &StreamSet,
            ) -> Result<BTreeSet<usize>> {
                if state.rejected.is_empty() {
                    Ok(state.active(2).collect())
                } else {
                    Ok(BTreeSet::new())
                }
            }
        }
        let schedule = SampleSchedule::new(vec![1]).unwrap();
        let data = StreamSet::new(vec![vec![0.0], vec![0.0]]);
        let violations = check_monotonicity(&Contrarian, 2, &data, &schedule, 0, 0).unwrap();
        assert!(!violations.is_empty());
        let w = &violations[0];
        assert!(!w.offending.is_empty());
    }

    #[test]
    fn single_step_trivial_cases() {
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
        let schedule = SampleSchedule::new(vec![1, 2]).unwrap();
        let scenario = Scenario::new(
            vec![StreamModel::Normal { mean: 0.0, sd: 1.0 }; 2],
            vec![true, true],
        );
        let report = estimate_single_step(&Never, &scenario, &schedule, 2000, 5, 0.05).unwrap();
        assert_eq!(report.estimate, 0.0);
        assert!(report.pass);

        // all-false scenario: containment in F is trivial whatever fires
        struct Always;
        impl RejectionRule for Always {
            fn propose(
                &self,
                s: &DecisionState,
                _: usize,
                _: &StreamSet,
            ) -> Result<BTreeSet<usize>> {
                Ok(s.active(2).collect())
            }
        }
        let all_false = Scenario::new(
            vec![StreamModel::Normal { mean: 0.0, sd: 1.0 }; 2],
            vec![false, false],
        );
        let report = estimate_single_step(&Always, &all_false, &schedule, 2000, 5, 0.05).unwrap();
        assert_eq!(report.estimate, 0.0);
    }

    #[test]
    fn fwer_zero_when_nothing_true() {
        let (family, partition) = build_chain_family(2).unwrap();
        let schedule = SampleSchedule::new(vec![2, 4]).unwrap();
        let config =
            ProcedureConfig::in_order(family, schedule, path_stats(2), vec![0.0; 2], partition)
                .unwrap();
        let scenario = Scenario::new(
            vec![StreamModel::Normal { mean: 1.0, sd: 1.0 }; 2],
            vec![false, false],
        );
        let report = estimate_fwer(
            |data| run_in_order(&config, data),
            &scenario,
            4,
            500,
            3,
            0.05,
        )
        .unwrap();
        assert_eq!(report.estimate, 0.0);
    }

    #[test]
    fn brute_force_one_look_point_mass() {
        // k = 1, one look, reject iff X_1 = 1 which has probability 0.04
        let family = HypothesisFamily::elementary(1).unwrap();
        let schedule = SampleSchedule::new(vec![1]).unwrap();
        let config = ProcedureConfig::in_order(
            family,
            schedule,
            path_stats(1),
            vec![0.5],
            OrderedPartition::new(vec![vec![0]]),
        )
        .unwrap();
        let scenario = Scenario::new(
            vec![StreamModel::Discrete {
                values: vec![1.0, 0.0],
                probs: vec![0.04, 0.96],
            }],
            vec![true],
        );
        let exact = brute_force_fwer(|d| run_in_order(&config, d), &scenario, 1, 1 << 20).unwrap();
        assert!((exact - 0.04).abs() < 1e-12);
    }

    #[test]
    fn brute_force_never_rejecting_rule_is_zero() {
        let family = HypothesisFamily::elementary(1).unwrap();
        let schedule = SampleSchedule::new(vec![1, 2]).unwrap();
        let config = ProcedureConfig::in_order(
            family,
            schedule,
            path_stats(1),
            vec![f64::MAX],
            OrderedPartition::new(vec![vec![0]]),
        )
        .unwrap();
        let scenario = Scenario::new(
            vec![StreamModel::Discrete {
                values: vec![1.0, -1.0],
                probs: vec![0.5, 0.5],
            }],
            vec![true],
        );
        let exact = brute_force_fwer(|d| run_in_order(&config, d), &scenario, 2, 1 << 20).unwrap();
        assert_eq!(exact, 0.0);
    }

    #[test]
    fn brute_force_cap_enforced() {
        let family = HypothesisFamily::elementary(1).unwrap();
        let schedule = SampleSchedule::new(vec![1]).unwrap();
        let config = ProcedureConfig::in_order(
            family,
            schedule,
            path_stats(1),
            vec![0.5],
            OrderedPartition::new(vec![vec![0]]),
        )
        .unwrap();
        let scenario = Scenario::new(
            vec![StreamModel::Discrete {
                values: vec![0.0, 1.0, 2.0],
                probs: vec![0.3, 0.3, 0.4],
            }],
            vec![true],
        );
        let result = brute_force_fwer(|d| run_in_order(&config, d), &scenario, 20, 1000);
        assert!(matches!(result, Err(Error::EnumerationCap { .. })));
    }

    #[test]
    fn exclusivity_closed_partition_all_assignments() {
        // any truth assignment consistent with a closed family is exclusive:
        // composite truth is the conjunction of elementary truths
        let (family, partition) = build_closed_partition(3).unwrap();
        for mask in 0u32..8 {
            let elementary: Vec<bool> = (0..3).map(|j| mask & (1 << j) != 0).collect();
            let truth: Vec<bool> = family
                .elements()
                .iter()
                .map(|e| e.members().iter().all(|&j| elementary[j - 1]))
                .collect();
            assert!(
                check_sequential_exclusivity(&partition, &truth).is_ok(),
                "mask {mask}"
            );
        }
    }

    #[test]
    fn exclusivity_vacuous_when_gate_never_opens() {
        // two true hypotheses in block 2 are harmless while block 1 holds a
        // true hypothesis
        let partition = OrderedPartition::new(vec![vec![0], vec![1, 2]]);
        let truth = vec![true, true, true];
        assert!(check_sequential_exclusivity(&partition, &truth).is_ok());
    }

    #[test]
    fn exclusivity_violation_reported_with_pair() {
        let partition = OrderedPartition::new(vec![vec![0, 1], vec![2]]);
        let truth = vec![true, true, false];
        let err = check_sequential_exclusivity(&partition, &truth).unwrap_err();
        assert_eq!(err.block, 0);
        assert_eq!(err.pair, (0, 1));
    }

    #[test]
    fn fwer2_zero_when_no_alternative_members() {
        let (family, partition) = build_chain_family(2).unwrap();
        let schedule = SampleSchedule::new(vec![2, 4]).unwrap();
        let config = ProcedureConfig::in_order(
            family,
            schedule,
            path_stats(2),
            vec![100.0; 2], // nothing rejects, everything is accepted
            partition,
        )
        .unwrap();
        let mut scenario = Scenario::new(
            vec![StreamModel::Normal { mean: 0.0, sd: 1.0 }; 2],
            vec![true, true],
        );
        scenario.alternative = Some(vec![false, false]);
        let report =
            estimate_fwer2(|d| run_in_order(&config, d), &scenario, 4, 500, 3, 0.05).unwrap();
        assert_eq!(report.estimate, 0.0);
    }

    #[test]
    fn estimators_deterministic_given_seed() {
        let (family, partition) = build_chain_family(2).unwrap();
        let schedule = SampleSchedule::new(vec![2, 4]).unwrap();
        let config =
            ProcedureConfig::in_order(family, schedule, path_stats(2), vec![1.5; 2], partition)
                .unwrap();
        let scenario = Scenario::new(
            vec![StreamModel::Normal { mean: 0.5, sd: 1.0 }; 2],
            vec![true, false],
        );
        let a = estimate_fwer(|d| run_in_order(&config, d), &scenario, 4, 1000, 9, 0.05).unwrap();
        let b = estimate_fwer(|d| run_in_order(&config, d), &scenario, 4, 1000, 9, 0.05).unwrap();
        assert_eq!(a, b);
    }
}
