//! The standard verification bundle: calibrated fixtures for the four
//! procedures, checked for monotonicity, the single-step condition, and both
//! familywise error rates. Intended for CI runs; any failed bound fails the
//! whole suite.

use serde::Serialize;

use crate::calibration::{
    calibrate_dual, calibrate_ladder, calibrate_single, CalibrationSpec, ModelPathSampler,
};
use crate::error::Result;
use crate::family::{build_chain_family, HypothesisFamily, OrderedPartition};
use crate::ladder::CriticalLadder;
use crate::model::StreamModel;
use crate::procedures::{
    run_closed, run_dual, run_in_order, run_step_down, InOrderRule, ProcedureConfig, StepDownRule,
};
use crate::schedule::SampleSchedule;
use crate::statistics::SequentialStatistic;
use crate::verify::{
    check_monotonicity, check_sequential_exclusivity, estimate_fwer, estimate_fwer2,
    estimate_single_step, EstimateReport, Scenario,
};

#[derive(Debug, Clone, Serialize)]
pub struct SuiteCheck {
    pub name: String,
    pub report: EstimateReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub alpha: f64,
    pub beta: f64,
    pub reps: usize,
    pub calibration_reps: usize,
    pub seed: u64,
    pub monotonicity_violations: usize,
    pub checks: Vec<SuiteCheck>,
    pub pass: bool,
}

fn z_stats(k: usize) -> Vec<SequentialStatistic> {
    (0..k)
        .map(|s| SequentialStatistic::ZMean { stream: s })
        .collect()
}

fn z_null() -> ModelPathSampler {
    ModelPathSampler {
        statistic: SequentialStatistic::ZMean { stream: 0 },
        models: vec![StreamModel::Normal { mean: 0.0, sd: 1.0 }],
        equicorrelation: None,
    }
}

fn normal_models(means: &[f64]) -> Vec<StreamModel> {
    means
        .iter()
        .map(|&mean| StreamModel::Normal { mean, sd: 1.0 })
        .collect()
}

fn chain_truth_k3(stream_null: [bool; 3]) -> Vec<bool> {
    (0..3)
        .map(|j| stream_null[j..].iter().all(|&t| t))
        .collect()
}

/// Runs the whole bundle. `reps` drives the error-rate estimates,
/// `calibration_reps` the threshold calibration.
pub fn run_ci_suite(
    alpha: f64,
    beta: f64,
    reps: usize,
    calibration_reps: usize,
    seed: u64,
) -> Result<SuiteReport> {
    let schedule = SampleSchedule::new(vec![5, 10, 15, 20, 25])?;
    let max_n = schedule.max();
    let mut checks: Vec<SuiteCheck> = Vec::new();
    let mut monotonicity_violations = 0usize;

    // step-down fixture, k = 3
    let spec = CalibrationSpec {
        alpha,
        beta: None,
        reps: calibration_reps,
        seed: seed.wrapping_add(1),
        k: 3,
    };
    let rungs = calibrate_ladder(&z_null(), &schedule, &spec)?;
    let ladder = CriticalLadder::new(rungs)?;
    let sd_config = ProcedureConfig::step_down(
        HypothesisFamily::elementary(3)?,
        schedule.clone(),
        z_stats(3),
        vec![ladder.clone(), ladder.clone(), ladder],
    )?;

    // in-order fixture on the four-block partition of six hypotheses
    let b6 = calibrate_single(
        &z_null(),
        &schedule,
        alpha,
        calibration_reps,
        seed.wrapping_add(2),
    )?;
    let partition6 = OrderedPartition::new(vec![vec![0], vec![1, 2], vec![3, 4], vec![5]]);
    let io_config = ProcedureConfig::in_order(
        HypothesisFamily::elementary(6)?,
        schedule.clone(),
        z_stats(6),
        vec![b6; 6],
        partition6.clone(),
    )?;

    // closed chain fixture, k = 3
    let b3 = calibrate_single(
        &z_null(),
        &schedule,
        alpha,
        calibration_reps,
        seed.wrapping_add(3),
    )?;
    let (chain_family, chain_partition) = build_chain_family(3)?;
    let cl_config = ProcedureConfig::in_order(
        chain_family,
        schedule.clone(),
        z_stats(3),
        vec![b3; 3],
        chain_partition.clone(),
    )?;

    // monotonicity of both rules, exhaustive
    {
        use crate::model::replicate_rng;
        use rand::Rng;
        let mut rng = replicate_rng(seed.wrapping_add(4), 0);
        let data = crate::statistics::StreamSet::new(
            (0..6)
                .map(|_| (0..max_n).map(|_| rng.gen_range(-3.0..3.0)).collect())
                .collect(),
        );
        let rule = StepDownRule::from_config(&sd_config)?;
        monotonicity_violations += check_monotonicity(&rule, 3, &data, &schedule, 0, 0)?.len();
        let rule = InOrderRule::from_config(&io_config)?;
        monotonicity_violations +=
            check_monotonicity(&rule, 6, &data, &schedule, 2000, seed)?.len();
        let rule = InOrderRule::from_config(&cl_config)?;
        monotonicity_violations += check_monotonicity(&rule, 3, &data, &schedule, 0, 0)?.len();
    }

    // error-rate estimates
    let push = |name: &str, report: EstimateReport, checks: &mut Vec<SuiteCheck>| {
        checks.push(SuiteCheck {
            name: name.into(),
            report,
        });
    };

    let scen_null3 = Scenario::new(normal_models(&[0.0; 3]), vec![true; 3]);
    let mut scen_corr3 = scen_null3.clone();
    scen_corr3.equicorrelation = Some(0.8);
    let scen_mixed3 = Scenario::new(normal_models(&[0.0, 1.0, 0.0]), vec![true, false, true]);

    push(
        "step-down all-null fwer",
        estimate_fwer(
            |d| run_step_down(&sd_config, d),
            &scen_null3,
            max_n,
            reps,
            seed ^ 0x11,
            alpha,
        )?,
        &mut checks,
    );
    push(
        "step-down equicorrelated fwer",
        estimate_fwer(
            |d| run_step_down(&sd_config, d),
            &scen_corr3,
            max_n,
            reps,
            seed ^ 0x12,
            alpha,
        )?,
        &mut checks,
    );
    push(
        "step-down mixed fwer",
        estimate_fwer(
            |d| run_step_down(&sd_config, d),
            &scen_mixed3,
            max_n,
            reps,
            seed ^ 0x13,
            alpha,
        )?,
        &mut checks,
    );
    {
        let rule = StepDownRule::from_config(&sd_config)?;
        push(
            "step-down single-step",
            estimate_single_step(&rule, &scen_null3, &schedule, reps, seed ^ 0x14, alpha)?,
            &mut checks,
        );
    }

    let scen_null6 = Scenario::new(normal_models(&[0.0; 6]), vec![true; 6]);
    let mut scen_corr6 = scen_null6.clone();
    scen_corr6.equicorrelation = Some(0.8);
    let scen_mixed6 = Scenario::new(
        normal_models(&[1.2, 1.2, 0.0, 1.2, 0.0, 0.0]),
        vec![false, false, true, false, true, true],
    );
    debug_assert!(check_sequential_exclusivity(&partition6, &scen_mixed6.truth).is_ok());

    push(
        "in-order all-null fwer",
        estimate_fwer(
            |d| run_in_order(&io_config, d),
            &scen_null6,
            max_n,
            reps,
            seed ^ 0x21,
            alpha,
        )?,
        &mut checks,
    );
    push(
        "in-order equicorrelated fwer",
        estimate_fwer(
            |d| run_in_order(&io_config, d),
            &scen_corr6,
            max_n,
            reps,
            seed ^ 0x22,
            alpha,
        )?,
        &mut checks,
    );
    push(
        "in-order mixed fwer",
        estimate_fwer(
            |d| run_in_order(&io_config, d),
            &scen_mixed6,
            max_n,
            reps,
            seed ^ 0x23,
            alpha,
        )?,
        &mut checks,
    );
    {
        let rule = InOrderRule::from_config(&io_config)?;
        push(
            "in-order single-step",
            estimate_single_step(&rule, &scen_null6, &schedule, reps, seed ^ 0x24, alpha)?,
            &mut checks,
        );
    }

    let scen_chain_null = Scenario::new(normal_models(&[0.0; 3]), chain_truth_k3([true; 3]));
    let mut scen_chain_corr = scen_chain_null.clone();
    scen_chain_corr.equicorrelation = Some(0.8);
    let scen_chain_mixed = Scenario::new(
        normal_models(&[1.2, 0.0, 0.0]),
        chain_truth_k3([false, true, true]),
    );
    push(
        "closed chain all-null fwer",
        estimate_fwer(
            |d| run_closed(&cl_config, d),
            &scen_chain_null,
            max_n,
            reps,
            seed ^ 0x31,
            alpha,
        )?,
        &mut checks,
    );
    push(
        "closed chain equicorrelated fwer",
        estimate_fwer(
            |d| run_closed(&cl_config, d),
            &scen_chain_corr,
            max_n,
            reps,
            seed ^ 0x32,
            alpha,
        )?,
        &mut checks,
    );
    push(
        "closed chain mixed fwer",
        estimate_fwer(
            |d| run_closed(&cl_config, d),
            &scen_chain_mixed,
            max_n,
            reps,
            seed ^ 0x33,
            alpha,
        )?,
        &mut checks,
    );

    // dual fixture at separation 1.0
    let alt = ModelPathSampler {
        statistic: SequentialStatistic::ZMean { stream: 0 },
        models: vec![StreamModel::Normal { mean: 1.0, sd: 1.0 }],
        equicorrelation: None,
    };
    let spec = CalibrationSpec {
        alpha,
        beta: Some(beta),
        reps: calibration_reps,
        seed: seed.wrapping_add(5),
        k: 3,
    };
    let (lower, upper) = calibrate_dual(&z_null(), &alt, &schedule, &spec)?;
    let ladder = CriticalLadder::with_lower(upper, lower)?;
    let dual_config = ProcedureConfig::dual(
        HypothesisFamily::elementary(3)?,
        schedule.clone(),
        z_stats(3),
        vec![ladder.clone(), ladder.clone(), ladder],
    )?;
    push(
        "dual all-null type-I fwer",
        estimate_fwer(
            |d| run_dual(&dual_config, d),
            &scen_null3,
            max_n,
            reps,
            seed ^ 0x41,
            alpha,
        )?,
        &mut checks,
    );
    let mut scen_alt = Scenario::new(normal_models(&[1.0; 3]), vec![false; 3]);
    scen_alt.alternative = Some(vec![true; 3]);
    push(
        "dual all-alternative type-II fwer",
        estimate_fwer2(
            |d| run_dual(&dual_config, d),
            &scen_alt,
            max_n,
            reps,
            seed ^ 0x42,
            beta,
        )?,
        &mut checks,
    );

    let pass = monotonicity_violations == 0 && checks.iter().all(|c| c.report.pass);
    Ok(SuiteReport {
        alpha,
        beta,
        reps,
        calibration_reps,
        seed,
        monotonicity_violations,
        checks,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes_and_is_deterministic() {
        let a = run_ci_suite(0.05, 0.05, 2000, 5000, 97).unwrap();
        assert!(a.pass, "{a:?}");
        assert_eq!(a.checks.len(), 13);
        let b = run_ci_suite(0.05, 0.05, 2000, 5000, 97).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}
