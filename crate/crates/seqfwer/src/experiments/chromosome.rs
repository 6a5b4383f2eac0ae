//! Chromosome-aberration study: sequential Wilcoxon signed-rank tests of six
//! ordered hypotheses on matched (control, before, after) response triples,
//! evaluated by permuting the subject order many times and recording the
//! sample size needed to decide every hypothesis.
//!
//! The six hypotheses compare the after-treatment response against baseline
//! and control in decreasing logical strength, tested in the order
//! {H+}, {Hb, Hc}, {H*, H#}, {H0}: first that the after response exceeds the
//! average of the other two, then each of them separately, then that it
//! exceeds each by more than they differ from one another, and finally the
//! primary hypothesis H0, which follows logically once the rest are settled.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate_single, SignedRankNullSampler};
use crate::error::{Error, Result};
use crate::family::{HypothesisFamily, OrderedPartition};
use crate::model::replicate_rng;
use crate::procedures::{run_in_order, ProcedureConfig};
use crate::schedule::SampleSchedule;
use crate::statistics::{SequentialStatistic, StreamSet};

/// One subject's responses: control, before treatment, after treatment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub y_c: f64,
    pub y_b: f64,
    pub y_a: f64,
}

/// The bundled study data (36 subjects).
pub const MASJEDI_CSV: &str = include_str!("../../data/masjedi.csv");

/// Parses the bundled dataset; infallible by construction.
pub fn bundled_triples() -> Vec<Triple> {
    parse_triples(MASJEDI_CSV).expect("bundled dataset is well-formed")
}

/// Loads triples from a CSV file with header `y_c,y_b,y_a`.
pub fn load_triples(path: &std::path::Path) -> Result<Vec<Triple>> {
    parse_triples(&std::fs::read_to_string(path)?)
}

pub fn parse_triples(text: &str) -> Result<Vec<Triple>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "y_c,y_b,y_a" => {}
        Some((_, header)) => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header 'y_c,y_b,y_a', found '{}'", header.trim()),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty file".into(),
            })
        }
    }
    let mut triples = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("non-numeric field '{}'", s.trim()),
            })
        };
        let t = Triple {
            y_c: parse(fields[0])?,
            y_b: parse(fields[1])?,
            y_a: parse(fields[2])?,
        };
        if !(t.y_c.is_finite() && t.y_b.is_finite() && t.y_a.is_finite()) {
            return Err(Error::Parse {
                line: line_no,
                message: "non-finite value".into(),
            });
        }
        triples.push(t);
    }
    if triples.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    Ok(triples)
}

/// Sets aside subjects whose after-treatment response ties the baseline
/// (`y_a == y_b`), which zero out the paired Wilcoxon differences.
pub fn preprocess(triples: &[Triple]) -> Vec<Triple> {
    triples.iter().copied().filter(|t| t.y_a != t.y_b).collect()
}

/// Contrast weights on (y_a, y_b, y_c) for each tested hypothesis.
pub const CONTRAST_PLUS: [f64; 3] = [1.0, -0.5, -0.5];
pub const CONTRAST_B: [f64; 3] = [1.0, -1.0, 0.0];
pub const CONTRAST_C: [f64; 3] = [1.0, 0.0, -1.0];
pub const CONTRAST_STAR: [f64; 3] = [1.0, 1.0, -2.0];
pub const CONTRAST_SHARP: [f64; 3] = [1.0, -2.0, 1.0];

pub const HYPOTHESIS_NAMES: [&str; 6] = ["H+", "Hb", "Hc", "H*", "H#", "H0"];

/// The six-hypothesis family and its testing order.
pub fn chromosome_family() -> (HypothesisFamily, OrderedPartition) {
    let family = HypothesisFamily::elementary(6).unwrap();
    let partition = OrderedPartition::new(vec![vec![0], vec![1, 2], vec![3, 4], vec![5]]);
    (family, partition)
}

/// Study configuration. `alpha` is the familywise budget; per-stream critical
/// values use the two-sided convention (marginal level `alpha / 2`), which is
/// what the reference thresholds require. `h0_contrast`, when set, tests H0
/// with its own signed-rank statistic instead of deciding it logically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChromosomeConfig {
    pub schedules: Vec<Vec<usize>>,
    pub alpha: f64,
    pub permutations: usize,
    pub calibration_reps: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h0_contrast: Option<[f64; 3]>,
}

impl ChromosomeConfig {
    /// The five look schedules of the original design at alpha 0.05.
    pub fn default_design(permutations: usize, calibration_reps: usize, seed: u64) -> Self {
        Self {
            schedules: vec![
                (1..=31).collect(),
                vec![10, 15, 20, 25, 31],
                vec![10, 20, 25, 31],
                vec![10, 20, 31],
                vec![15, 31],
            ],
            alpha: 0.05,
            permutations,
            calibration_reps,
            seed,
            h0_contrast: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Validation(format!(
                "alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        if self.schedules.is_empty() {
            return Err(Error::Validation("no schedules given".into()));
        }
        if self.permutations == 0 {
            return Err(Error::Validation("permutations must be positive".into()));
        }
        Ok(())
    }
}

/// One schedule's results: the displayed p-value threshold and the average
/// sample size needed to decide all hypotheses over the permutations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChromosomeRow {
    pub schedule: Vec<usize>,
    pub p_threshold: f64,
    pub avg_sample_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChromosomeStudy {
    pub alpha: f64,
    pub permutations: usize,
    pub calibration_reps: usize,
    pub seed: u64,
    pub subjects: usize,
    pub rows: Vec<ChromosomeRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn statistics(h0_contrast: Option<[f64; 3]>) -> Vec<SequentialStatistic> {
    // streams: 0 = y_a, 1 = y_b, 2 = y_c
    let contrast = |w: [f64; 3]| SequentialStatistic::SignedRankNegP {
        streams: vec![0, 1, 2],
        weights: w.to_vec(),
    };
    let h0 = match h0_contrast {
        Some(w) => contrast(w),
        None => SequentialStatistic::Constant {
            value: f64::INFINITY,
        },
    };
    vec![
        contrast(CONTRAST_PLUS),
        contrast(CONTRAST_B),
        contrast(CONTRAST_C),
        contrast(CONTRAST_STAR),
        contrast(CONTRAST_SHARP),
        h0,
    ]
}

fn streams_for(order: &[usize], triples: &[Triple]) -> StreamSet {
    let mut y_a = Vec::with_capacity(order.len());
    let mut y_b = Vec::with_capacity(order.len());
    let mut y_c = Vec::with_capacity(order.len());
    for &i in order {
        y_a.push(triples[i].y_a);
        y_b.push(triples[i].y_b);
        y_c.push(triples[i].y_c);
    }
    StreamSet::new(vec![y_a, y_b, y_c])
}

/// Runs the permutation study on preprocessed triples: calibrates the common
/// critical value per schedule, then replays the in-order procedure over
/// random subject orderings and averages the terminal sample size.
pub fn run_chromosome_study(
    config: &ChromosomeConfig,
    triples: &[Triple],
) -> Result<ChromosomeStudy> {
    config.validate()?;
    let kept = preprocess(triples);
    let n_subjects = kept.len();
    let mut warnings = Vec::new();
    let (family, partition) = chromosome_family();
    let stats = statistics(config.h0_contrast);

    let mut rows = Vec::with_capacity(config.schedules.len());
    for (row_idx, sizes) in config.schedules.iter().enumerate() {
        let schedule = SampleSchedule::new(sizes.clone())?;
        if schedule.max() != n_subjects {
            warnings.push(format!(
                "schedule {:?} has maximum {} but the data holds {} subjects",
                sizes,
                schedule.max(),
                n_subjects
            ));
        }
        if schedule.max() > n_subjects {
            return Err(Error::DataExhausted {
                stream: 0,
                have: n_subjects,
                need: schedule.max(),
            });
        }
        let calib_seed = config
            .seed
            .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(row_idx as u64 + 1));
        // two-sided calibration convention: marginal level alpha / 2
        let b = calibrate_single(
            &SignedRankNullSampler,
            &schedule,
            config.alpha / 2.0,
            config.calibration_reps,
            calib_seed,
        )?;

        let proc_config = ProcedureConfig::in_order(
            family.clone(),
            schedule.clone(),
            stats.clone(),
            vec![b; 6],
            partition.clone(),
        )?;

        let perm_seed = calib_seed ^ 0x0b5e_55ed;
        let sizes_sum: Result<Vec<usize>> = (0..config.permutations as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = replicate_rng(perm_seed, i);
                let mut order: Vec<usize> = (0..n_subjects).collect();
                order.shuffle(&mut rng);
                let data = streams_for(&order, &kept);
                let trace = run_in_order(&proc_config, &data)?;
                debug_assert!(trace.validate(6).is_ok());
                Ok(trace.terminal.sample_size)
            })
            .collect();
        let sizes_sum = sizes_sum?;
        let avg = sizes_sum.iter().sum::<usize>() as f64 / config.permutations as f64;
        rows.push(ChromosomeRow {
            schedule: sizes.clone(),
            p_threshold: -b,
            avg_sample_size: avg,
        });
    }

    Ok(ChromosomeStudy {
        alpha: config.alpha,
        permutations: config.permutations,
        calibration_reps: config.calibration_reps,
        seed: config.seed,
        subjects: n_subjects,
        rows,
        warnings,
    })
}
