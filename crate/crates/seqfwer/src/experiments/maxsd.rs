//! Maximum-safe-dose study: closed testing of the nested dose chain with
//! sequential two-sample t statistics, evaluated on simulated normal response
//! groups against the one-look (fixed sample size) comparator.
//!
//! Dose levels are screened from the top down: the chain's first composite is
//! driven by the highest dose's t statistic, the next by the second-highest,
//! and so on; a composite is testable only after every earlier one has been
//! rejected. The estimated maximum safe dose is the highest dose whose
//! composite survived, so a run that rejects the whole chain estimates dose 0
//! and a run that rejects nothing estimates dose k.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate_single, ModelPathSampler};
use crate::decision::DecisionTrace;
use crate::error::{Error, Result};
use crate::family::build_chain_family;
use crate::model::{draw_streams, replicate_rng, StreamModel};
use crate::procedures::{run_closed, ProcedureConfig};
use crate::schedule::SampleSchedule;
use crate::statistics::SequentialStatistic;

/// Scenario parameters: k nonzero dose levels plus control, common normal
/// response standard deviation, safety threshold lambda, and the mean vector
/// `mu[0..=k]` (control first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxsdScenario {
    pub k: usize,
    pub lambda: f64,
    pub mu: Vec<f64>,
    pub sigma: f64,
    pub max_n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<usize>>,
    pub alpha: f64,
    pub reps: usize,
    pub calibration_reps: usize,
    pub seed: u64,
}

impl MaxsdScenario {
    /// The reference design: four doses, unit variance, means
    /// (0, 0, 0.5, 1.0, 2.0), fifty observations at most.
    pub fn reference(reps: usize, calibration_reps: usize, seed: u64) -> Self {
        Self {
            k: 4,
            lambda: 1.0,
            mu: vec![0.0, 0.0, 0.5, 1.0, 2.0],
            sigma: 1.0,
            max_n: 50,
            schedule: None,
            alpha: 0.05,
            reps,
            calibration_reps,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Validation("k must be at least 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::Validation(format!(
                "lambda {} outside (0, 1]",
                self.lambda
            )));
        }
        if self.mu.len() != self.k + 1 {
            return Err(Error::Validation(format!(
                "mu has {} entries, expected k + 1 = {}",
                self.mu.len(),
                self.k + 1
            )));
        }
        if self.sigma <= 0.0 {
            return Err(Error::Validation("sigma must be positive".into()));
        }
        if self.max_n < 2 {
            return Err(Error::Validation(
                "max_n must be at least 2 for the t statistic".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Validation(format!(
                "alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Fully sequential default: every size from 2 to max_n.
    pub fn sequential_schedule(&self) -> Result<SampleSchedule> {
        match &self.schedule {
            Some(sizes) => SampleSchedule::new(sizes.clone()),
            None => SampleSchedule::full(2, self.max_n),
        }
    }
}

/// Length of the rejected prefix of the chain: the largest m such that the
/// first m composites in testing order were all rejected.
pub fn rejected_prefix_len(trace: &DecisionTrace, chain_len: usize) -> usize {
    (0..chain_len)
        .take_while(|e| trace.rejected().contains(e))
        .count()
}

/// Per-dose operating characteristics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxsdDoseRow {
    pub level: usize,
    pub mu: f64,
    pub seq_avg_ss: f64,
    pub seq_p_maxsd: f64,
    pub fixed_avg_ss: f64,
    pub fixed_p_maxsd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxsdStudy {
    pub k: usize,
    pub lambda: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub max_n: usize,
    pub schedule: Vec<usize>,
    pub reps: usize,
    pub calibration_reps: usize,
    pub seed: u64,
    pub seq_threshold: f64,
    pub fixed_threshold: f64,
    pub rows: Vec<MaxsdDoseRow>,
    pub seq_weighted_maxsd: f64,
    pub fixed_weighted_maxsd: f64,
}

struct VariantResult {
    avg_ss: Vec<f64>,  // indexed by level 0..=k
    p_maxsd: Vec<f64>, // indexed by estimated maximum safe dose 0..=k
    weighted_maxsd: f64,
}

fn chain_config(
    scenario: &MaxsdScenario,
    schedule: SampleSchedule,
    b: f64,
) -> Result<ProcedureConfig> {
    let (family, partition) = build_chain_family(scenario.k)?;
    // chain position j is driven by dose k - j against the control stream
    let statistics: Vec<SequentialStatistic> = (0..scenario.k)
        .map(|j| SequentialStatistic::TwoSampleT {
            treatment: scenario.k - j,
            control: 0,
            lambda: scenario.lambda,
        })
        .collect();
    ProcedureConfig::in_order(family, schedule, statistics, vec![b; scenario.k], partition)
}

fn run_variant(
    scenario: &MaxsdScenario,
    config: &ProcedureConfig,
    models: &[StreamModel],
    seed: u64,
) -> Result<VariantResult> {
    let k = scenario.k;
    let max_n = scenario.max_n;
    let per_rep: Result<Vec<(Vec<usize>, usize)>> = (0..scenario.reps as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(seed, i);
            let data = draw_streams(models, None, max_n, &mut rng)?;
            let trace = run_closed(config, &data)?;
            debug_assert!(trace.validate(k).is_ok());
            let prefix = rejected_prefix_len(&trace, k);
            debug_assert_eq!(prefix, trace.rejected().len(), "gating must give a prefix");
            let maxsd_hat = k - prefix;
            // dose d's stream stops when its composite (position k - d) is
            // decided; the control stream runs until the procedure ends
            let terminal = trace.terminal.sample_size;
            let ss: Vec<usize> = std::iter::once(terminal)
                .chain((1..=k).map(|dose| trace.decision_size(k - dose).unwrap_or(terminal)))
                .collect();
            Ok((ss, maxsd_hat))
        })
        .collect();
    let per_rep = per_rep?;

    let reps = scenario.reps as f64;
    let mut avg_ss = vec![0.0; k + 1];
    let mut p_maxsd = vec![0.0; k + 1];
    let mut weighted = 0.0;
    for (ss, maxsd_hat) in &per_rep {
        for (d, &n) in ss.iter().enumerate() {
            avg_ss[d] += n as f64;
        }
        p_maxsd[*maxsd_hat] += 1.0;
        weighted += *maxsd_hat as f64;
    }
    for v in &mut avg_ss {
        *v /= reps;
    }
    for v in &mut p_maxsd {
        *v /= reps;
    }
    Ok(VariantResult {
        avg_ss,
        p_maxsd,
        weighted_maxsd: weighted / reps,
    })
}

/// Runs the full operating-characteristics study: calibrates the common
/// critical value at the boundary null (treatment mean `lambda * mu[0]`),
/// simulates the sequential procedure over the schedule, and repeats with
/// the one-look schedule `{max_n}` as the fixed-sample comparator.
pub fn run_maxsd_study(scenario: &MaxsdScenario) -> Result<MaxsdStudy> {
    scenario.validate()?;
    let seq_schedule = scenario.sequential_schedule()?;
    let fixed_schedule = SampleSchedule::new(vec![scenario.max_n])?;

    // boundary null: every marginal crossing probability is largest at
    // treatment mean lambda * mu_0
    let null_sampler = ModelPathSampler {
        statistic: SequentialStatistic::TwoSampleT {
            treatment: 1,
            control: 0,
            lambda: scenario.lambda,
        },
        models: vec![
            StreamModel::Normal {
                mean: scenario.mu[0],
                sd: scenario.sigma,
            },
            StreamModel::Normal {
                mean: scenario.lambda * scenario.mu[0],
                sd: scenario.sigma,
            },
        ],
        equicorrelation: None,
    };
    let b_seq = calibrate_single(
        &null_sampler,
        &seq_schedule,
        scenario.alpha,
        scenario.calibration_reps,
        scenario.seed.wrapping_add(1),
    )?;
    let b_fixed = calibrate_single(
        &null_sampler,
        &fixed_schedule,
        scenario.alpha,
        scenario.calibration_reps,
        scenario.seed.wrapping_add(2),
    )?;

    let models: Vec<StreamModel> = scenario
        .mu
        .iter()
        .map(|&mean| StreamModel::Normal {
            mean,
            sd: scenario.sigma,
        })
        .collect();

    let seq_config = chain_config(scenario, seq_schedule.clone(), b_seq)?;
    let fixed_config = chain_config(scenario, fixed_schedule, b_fixed)?;
    let seq = run_variant(
        scenario,
        &seq_config,
        &models,
        scenario.seed.wrapping_add(3),
    )?;
    let fixed = run_variant(
        scenario,
        &fixed_config,
        &models,
        scenario.seed.wrapping_add(3),
    )?;

    let rows = (0..=scenario.k)
        .map(|level| MaxsdDoseRow {
            level,
            mu: scenario.mu[level],
            seq_avg_ss: seq.avg_ss[level],
            seq_p_maxsd: seq.p_maxsd[level],
            fixed_avg_ss: fixed.avg_ss[level],
            fixed_p_maxsd: fixed.p_maxsd[level],
        })
        .collect();

    Ok(MaxsdStudy {
        k: scenario.k,
        lambda: scenario.lambda,
        sigma: scenario.sigma,
        alpha: scenario.alpha,
        max_n: scenario.max_n,
        schedule: seq_schedule.sizes().to_vec(),
        reps: scenario.reps,
        calibration_reps: scenario.calibration_reps,
        seed: scenario.seed,
        seq_threshold: b_seq,
        fixed_threshold: b_fixed,
        rows,
        seq_weighted_maxsd: seq.weighted_maxsd,
        fixed_weighted_maxsd: fixed.weighted_maxsd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::{DecisionState, TraceRecord};

    fn trace_with_rejections(rejected: &[usize], n: usize) -> DecisionTrace {
        let mut terminal = DecisionState::start();
        terminal.rejected = rejected.iter().copied().collect();
        terminal.sample_size = n;
        DecisionTrace {
            records: rejected
                .iter()
                .enumerate()
                .map(|(i, &e)| TraceRecord {
                    stage: i + 1,
                    sample_size: n,
                    rejected: vec![e],
                    accepted: vec![],
                    values: None,
                })
                .collect(),
            terminal,
        }
    }

    #[test]
    fn prefix_length_counts_leading_rejections() {
        assert_eq!(rejected_prefix_len(&trace_with_rejections(&[], 5), 4), 0);
        assert_eq!(
            rejected_prefix_len(&trace_with_rejections(&[0, 1], 5), 4),
            2
        );
        // a full rejection run covers the whole chain
        assert_eq!(
            rejected_prefix_len(&trace_with_rejections(&[0, 1, 2, 3], 5), 4),
            4
        );
        // gaps stop the prefix
        assert_eq!(
            rejected_prefix_len(&trace_with_rejections(&[0, 2], 5), 4),
            1
        );
    }

    #[test]
    fn scenario_validation() {
        let mut s = MaxsdScenario::reference(100, 2000, 1);
        assert!(s.validate().is_ok());
        s.lambda = 1.5;
        assert!(s.validate().is_err());
        s.lambda = 1.0;
        s.mu = vec![0.0; 3];
        assert!(s.validate().is_err());
    }

    #[test]
    fn study_smoke_fixed_always_uses_max_n() {
        let mut scenario = MaxsdScenario::reference(300, 2000, 7);
        scenario.schedule = Some(vec![10, 30, 50]);
        let study = run_maxsd_study(&scenario).unwrap();
        assert_eq!(study.rows.len(), 5);
        for row in &study.rows {
            assert!(
                (row.fixed_avg_ss - 50.0).abs() < 1e-12,
                "fixed comparator must sample max_n in every group"
            );
        }
        let seq_total: f64 = study.rows.iter().map(|r| r.seq_p_maxsd).sum();
        let fixed_total: f64 = study.rows.iter().map(|r| r.fixed_p_maxsd).sum();
        assert!((seq_total - 1.0).abs() < 1e-9);
        assert!((fixed_total - 1.0).abs() < 1e-9);
        // strong top doses are screened quickly: dose 4 needs fewer
        // observations than dose 2 on average
        let ss: Vec<f64> = study.rows.iter().map(|r| r.seq_avg_ss).collect();
        assert!(ss[4] <= ss[2] + 1e-9, "{ss:?}");
        assert!(ss[2] <= ss[1] + 1e-9, "{ss:?}");

        use crate::experiments::report::Render;
        let md = study.to_markdown();
        assert!(md.contains("Weighted average MAXSD"), "{md}");
        let csv = study.to_csv();
        assert_eq!(csv.lines().count(), 7); // header + 5 dose rows + weighted row
    }

    #[test]
    fn study_deterministic_given_seed() {
        let mut scenario = MaxsdScenario::reference(100, 2000, 11);
        scenario.schedule = Some(vec![25, 50]);
        let a = run_maxsd_study(&scenario).unwrap();
        let b = run_maxsd_study(&scenario).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_rejects_first_look_below_t_minimum() {
        let mut scenario = MaxsdScenario::reference(100, 2000, 1);
        scenario.schedule = Some(vec![1, 50]);
        assert!(run_maxsd_study(&scenario).is_err());
    }
}
