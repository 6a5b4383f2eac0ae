//! Monte Carlo critical-value calibration.
//!
//! Thresholds are chosen so that the marginal crossing probability of one
//! statistic over the whole schedule stays within its error budget: the rung
//! at fraction `alpha / (k - s + 1)` is the smallest sampled max-path value
//! whose exceedance frequency on the calibration sample does not exceed that
//! fraction. Quantiles are always sample values (conservative side, never
//! interpolated); ties at the candidate order statistic push the threshold to
//! the next distinct value so the constraint holds exactly on the sample.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{draw_streams, replicate_rng, StreamModel};
use crate::schedule::SampleSchedule;
use crate::statistics::{evaluate, signed_rank_table_cached, SequentialStatistic};

/// One replicate of a full statistic path over the schedule, under a
/// designated (null or alternative) configuration.
pub trait PathSampler: Sync {
    fn sample_path(&self, schedule: &SampleSchedule, rng: &mut ChaCha8Rng) -> Result<Vec<f64>>;
}

/// Distribution-free null path of the negated one-sided signed-rank p-value:
/// magnitude ranks arrive in uniformly random order with independent fair
/// signs, and the p-value at each look is computed from the signed ranks
/// among the arrivals so far.
#[derive(Debug, Clone, Default)]
pub struct SignedRankNullSampler;

impl PathSampler for SignedRankNullSampler {
    fn sample_path(&self, schedule: &SampleSchedule, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        use rand::seq::SliceRandom;
        use rand::Rng;
        let max_n = schedule.max();
        let mut magnitudes: Vec<usize> = (1..=max_n).collect();
        magnitudes.shuffle(rng);
        let positive: Vec<bool> = (0..max_n).map(|_| rng.gen_bool(0.5)).collect();
        let mut path = Vec::with_capacity(schedule.len());
        for &n in schedule.sizes() {
            // rank of each arrival's magnitude among the first n arrivals
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by_key(|&i| magnitudes[i]);
            let mut w = 0usize;
            for (pos, &i) in idx.iter().enumerate() {
                if positive[i] {
                    w += pos + 1;
                }
            }
            let table = signed_rank_table_cached(n)?;
            path.push(-table.tail_at(w));
        }
        Ok(path)
    }
}

/// Path of an arbitrary statistic over streams drawn from the given models.
#[derive(Debug, Clone)]
pub struct ModelPathSampler {
    pub statistic: SequentialStatistic,
    pub models: Vec<StreamModel>,
    pub equicorrelation: Option<f64>,
}

impl PathSampler for ModelPathSampler {
    fn sample_path(&self, schedule: &SampleSchedule, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let data = draw_streams(&self.models, self.equicorrelation, schedule.max(), rng)?;
        schedule
            .sizes()
            .iter()
            .map(|&n| evaluate(&self.statistic, &data, n))
            .collect()
    }
}

/// Parameters of a calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSpec {
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub reps: usize,
    pub seed: u64,
    pub k: usize,
}

impl CalibrationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Validation(format!(
                "alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        if let Some(beta) = self.beta {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(Error::Validation(format!("beta {beta} outside (0, 1)")));
            }
        }
        if self.reps < 1000 {
            return Err(Error::Validation(format!(
                "calibration needs at least 1000 replicates, got {}",
                self.reps
            )));
        }
        if self.k == 0 {
            return Err(Error::Validation("k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Largest value of one sampled path: reduces "crosses B at some look" to a
/// comparison of the path maximum against B.
pub fn max_path(
    sampler: &dyn PathSampler,
    schedule: &SampleSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let path = sampler.sample_path(schedule, rng)?;
    Ok(path.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

fn collect_extremes(
    sampler: &dyn PathSampler,
    schedule: &SampleSchedule,
    reps: usize,
    seed: u64,
    minimum: bool,
) -> Result<Vec<f64>> {
    (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(seed, i);
            let path = sampler.sample_path(schedule, &mut rng)?;
            Ok(path.into_iter().fold(
                if minimum {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                },
                if minimum { f64::min } else { f64::max },
            ))
        })
        .collect()
}

/// Smallest sample value whose `>=`-exceedance count is at most `allowed`;
/// clamped to the sample maximum when no value qualifies (degenerate
/// point-mass samples).
fn upper_threshold(sorted: &[f64], allowed: usize) -> f64 {
    let n = sorted.len();
    if allowed >= n {
        return sorted[0];
    }
    let mut idx = n - allowed;
    if idx == 0 {
        return sorted[0];
    }
    while idx < n && sorted[idx] == sorted[idx - 1] {
        idx += 1;
    }
    if idx == n {
        sorted[n - 1]
    } else {
        sorted[idx]
    }
}

/// Mirror image: largest sample value whose `<=`-count is at most `allowed`.
fn lower_threshold(sorted: &[f64], allowed: usize) -> f64 {
    let n = sorted.len();
    if allowed >= n {
        return sorted[n - 1];
    }
    if allowed == 0 {
        return sorted[0];
    }
    let mut idx = allowed - 1;
    loop {
        if idx + 1 < n && sorted[idx + 1] == sorted[idx] {
            if idx == 0 {
                return sorted[0];
            }
            idx -= 1;
        } else {
            return sorted[idx];
        }
    }
}

fn check_resolution(reps: usize, q: f64) -> Result<usize> {
    let allowed = (reps as f64 * q).floor() as usize;
    if (reps as f64) * q < 10.0 {
        return Err(Error::Precision(format!(
            "{reps} replicates cannot resolve the {q:.6} quantile (need reps * q >= 10)"
        )));
    }
    Ok(allowed)
}

/// Calibrates the k-rung upper ladder of one hypothesis: rung s is the
/// empirical threshold at marginal level `alpha / (k - s + 1)` of the
/// max-path distribution. The output is nonincreasing by construction.
pub fn calibrate_ladder(
    sampler: &dyn PathSampler,
    schedule: &SampleSchedule,
    spec: &CalibrationSpec,
) -> Result<Vec<f64>> {
    spec.validate()?;
    check_resolution(spec.reps, spec.alpha / spec.k as f64)?;
    let mut maxes = collect_extremes(sampler, schedule, spec.reps, spec.seed, false)?;
    maxes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (1..=spec.k)
        .map(|s| {
            let q = spec.alpha / (spec.k - s + 1) as f64;
            let allowed = check_resolution(spec.reps, q)?;
            Ok(upper_threshold(&maxes, allowed))
        })
        .collect()
}

/// Single critical value at marginal level alpha over the schedule.
pub fn calibrate_single(
    sampler: &dyn PathSampler,
    schedule: &SampleSchedule,
    alpha: f64,
    reps: usize,
    seed: u64,
) -> Result<f64> {
    let spec = CalibrationSpec {
        alpha,
        beta: None,
        reps,
        seed,
        k: 1,
    };
    Ok(calibrate_ladder(sampler, schedule, &spec)?[0])
}

/// Calibrates dual boundaries: the upper ladder from null max-paths at the
/// alpha fractions, the lower ladder from alternative min-paths at the beta
/// fractions. Both sides ignore the opposing-boundary truncation, which is
/// conservative (the truncated crossing events are subsets of the plain
/// crossing events).
pub fn calibrate_dual(
    null_sampler: &dyn PathSampler,
    alt_sampler: &dyn PathSampler,
    schedule: &SampleSchedule,
    spec: &CalibrationSpec,
) -> Result<(Vec<f64>, Vec<f64>)> {
    spec.validate()?;
    let beta = spec
        .beta
        .ok_or_else(|| Error::Config("dual calibration requires beta".into()))?;
    let upper = calibrate_ladder(null_sampler, schedule, spec)?;

    check_resolution(spec.reps, beta / spec.k as f64)?;
    let mut mins = collect_extremes(
        alt_sampler,
        schedule,
        spec.reps,
        spec.seed ^ 0x0005_eed0_fa17,
        true,
    )?;
    mins.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lower: Vec<f64> = (1..=spec.k)
        .map(|s| {
            let q = beta / (spec.k - s + 1) as f64;
            let allowed = check_resolution(spec.reps, q)?;
            Ok(lower_threshold(&mins, allowed))
        })
        .collect::<Result<_>>()?;

    if lower[spec.k - 1] >= upper[spec.k - 1] {
        return Err(Error::Infeasible(format!(
            "A_k = {} >= B_k = {}; alpha, beta, and separation are incompatible at this schedule",
            lower[spec.k - 1],
            upper[spec.k - 1]
        )));
    }
    Ok((lower, upper))
}

/// Fresh-seed estimate of one rung's crossing probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RungEstimate {
    pub level: f64,
    pub threshold: f64,
    pub estimate: f64,
    pub se: f64,
    pub pass: bool,
}

/// Re-simulates with a fresh seed and checks every rung's crossing
/// probability against its level plus three standard errors.
pub fn validate_upper_ladder(
    sampler: &dyn PathSampler,
    schedule: &SampleSchedule,
    rungs: &[(f64, f64)], // (level, threshold)
    reps: usize,
    seed: u64,
) -> Result<Vec<RungEstimate>> {
    let maxes = collect_extremes(sampler, schedule, reps, seed, false)?;
    Ok(rungs
        .iter()
        .map(|&(level, threshold)| {
            let hits = maxes.iter().filter(|&&m| m >= threshold).count();
            let estimate = hits as f64 / reps as f64;
            let se = (level * (1.0 - level) / reps as f64).sqrt();
            RungEstimate {
                level,
                threshold,
                estimate,
                se,
                pass: estimate <= level + 3.0 * se,
            }
        })
        .collect())
}

/// Mirror check for lower boundaries: P(min path <= A_s) against its level.
pub fn validate_lower_ladder(
    sampler: &dyn PathSampler,
    schedule: &SampleSchedule,
    rungs: &[(f64, f64)],
    reps: usize,
    seed: u64,
) -> Result<Vec<RungEstimate>> {
    let mins = collect_extremes(sampler, schedule, reps, seed, true)?;
    Ok(rungs
        .iter()
        .map(|&(level, threshold)| {
            let hits = mins.iter().filter(|&&m| m <= threshold).count();
            let estimate = hits as f64 / reps as f64;
            let se = (level * (1.0 - level) / reps as f64).sqrt();
            RungEstimate {
                level,
                threshold,
                estimate,
                se,
                pass: estimate <= level + 3.0 * se,
            }
        })
        .collect())
}

/// Exportable calibration document.
#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub k: usize,
    pub schedule: Vec<usize>,
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub reps: usize,
    pub seed: u64,
    /// One upper ladder per hypothesis.
    pub upper: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<Vec<f64>>>,
    pub validation: Vec<RungEstimate>,
}
