//! Critical-value ladders and the standardizing function.
//!
//! A ladder holds the k thresholds of one hypothesis, ordered
//! `B_1 >= B_2 >= ... >= B_k`, optionally paired with lower thresholds
//! `A_1 <= A_2 <= ... <= A_k` (with `A_k < B_k`) for two-boundary tests.
//!
//! The standardizing function is the increasing piecewise-linear map sending
//! `B_s` to `k - s + 1` (and `A_s` to `-(k - s + 1)`), which puts statistics on
//! different scales into a common rank scale: `T >= B_s` iff
//! `standardized(T) >= k - s + 1`. When adjacent rungs share a value the map
//! jumps there, taking the level of the smallest rung index attaining the
//! value, which preserves the threshold equivalence for every rung.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-hypothesis critical values: k upper rungs and optional k lower rungs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalLadder {
    upper: Vec<f64>,
    lower: Option<Vec<f64>>,
}

impl CriticalLadder {
    pub fn new(upper: Vec<f64>) -> Result<Self> {
        Self::build(upper, None)
    }

    pub fn with_lower(upper: Vec<f64>, lower: Vec<f64>) -> Result<Self> {
        Self::build(upper, Some(lower))
    }

    fn build(upper: Vec<f64>, lower: Option<Vec<f64>>) -> Result<Self> {
        if upper.is_empty() {
            return Err(Error::Validation(
                "ladder must have at least one rung".into(),
            ));
        }
        if upper.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("ladder rungs must be finite".into()));
        }
        for (i, w) in upper.windows(2).enumerate() {
            if w[0] < w[1] {
                return Err(Error::Validation(format!(
                    "upper rungs must be nonincreasing; rung {} < rung {}",
                    i + 1,
                    i + 2
                )));
            }
        }
        if let Some(lo) = &lower {
            if lo.len() != upper.len() {
                return Err(Error::Validation(format!(
                    "lower ladder has {} rungs, upper has {}",
                    lo.len(),
                    upper.len()
                )));
            }
            if lo.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation("ladder rungs must be finite".into()));
            }
            for (i, w) in lo.windows(2).enumerate() {
                if w[0] > w[1] {
                    return Err(Error::Validation(format!(
                        "lower rungs must be nondecreasing; rung {} > rung {}",
                        i + 1,
                        i + 2
                    )));
                }
            }
            let k = upper.len();
            if lo[k - 1] >= upper[k - 1] {
                return Err(Error::Validation(format!(
                    "lower rung A_k = {} must be below upper rung B_k = {}",
                    lo[k - 1],
                    upper[k - 1]
                )));
            }
        }
        Ok(Self { upper, lower })
    }

    pub fn k(&self) -> usize {
        self.upper.len()
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn lower(&self) -> Option<&[f64]> {
        self.lower.as_deref()
    }

    pub fn has_lower(&self) -> bool {
        self.lower.is_some()
    }
}

/// The standardizing map built from one hypothesis's ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    ladder: CriticalLadder,
}

impl Standardizer {
    pub fn new(ladder: CriticalLadder) -> Self {
        Self { ladder }
    }

    pub fn ladder(&self) -> &CriticalLadder {
        &self.ladder
    }

    pub fn k(&self) -> usize {
        self.ladder.k()
    }

    /// Standardizes against the upper rungs: maps `B_s` to `k - s + 1`.
    pub fn upper(&self, x: f64) -> f64 {
        let b = &self.ladder.upper;
        let k = b.len();
        if x >= b[0] {
            return x - b[0] + k as f64;
        }
        if x < b[k - 1] {
            return x - b[k - 1] + 1.0;
        }
        // b[k-1] <= x < b[0]: the first rung at or below x carries the level;
        // its predecessor is strictly above x, so the segment has positive
        // width. Shared rung values land on the smallest attaining index.
        let i = b.iter().position(|&v| v <= x).unwrap();
        (x - b[i]) / (b[i - 1] - b[i]) + (k - i) as f64
    }

    /// Standardizes against the lower rungs: maps `A_s` to `-(k - s + 1)`.
    pub fn lower(&self, x: f64) -> Result<f64> {
        let a = self
            .ladder
            .lower
            .as_deref()
            .ok_or_else(|| Error::Config("standardizer has no lower ladder".into()))?;
        let k = a.len();
        if x <= a[0] {
            return Ok(x - a[0] - k as f64);
        }
        if x > a[k - 1] {
            return Ok(x - a[k - 1] - 1.0);
        }
        let i = a.iter().position(|&v| v >= x).unwrap();
        Ok((x - a[i]) / (a[i] - a[i - 1]) - (k - i) as f64)
    }

    /// Joint two-boundary map: the lower map below `A_k`, the upper map above
    /// `B_k`, and a linear bridge from -1 to +1 in between.
    pub fn joint(&self, x: f64) -> Result<f64> {
        let a = self
            .ladder
            .lower
            .as_deref()
            .ok_or_else(|| Error::Config("standardizer has no lower ladder".into()))?;
        let k = self.ladder.k();
        let a_k = a[k - 1];
        let b_k = self.ladder.upper[k - 1];
        if x >= b_k {
            Ok(self.upper(x))
        } else if x <= a_k {
            self.lower(x)
        } else {
            Ok(-1.0 + 2.0 * (x - a_k) / (b_k - a_k))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn std3() -> Standardizer {
        Standardizer::new(CriticalLadder::new(vec![5.0, 3.0, 1.0]).unwrap())
    }

    #[test]
    fn upper_branches_match_worked_values() {
        let s = std3();
        assert_eq!(s.upper(3.0), 2.0);
        assert_eq!(s.upper(0.0), 0.0);
        assert_eq!(s.upper(4.0), 2.5);
        assert_eq!(s.upper(7.0), 5.0);
    }

    #[test]
    fn upper_hits_rungs_exactly() {
        let s = std3();
        for (i, &b) in s.ladder().upper().iter().enumerate() {
            let level = (3 - i) as f64; // k - s + 1 with s = i + 1
            assert_eq!(s.upper(b), level);
        }
    }

    #[test]
    fn degenerate_rungs_jump_to_smallest_index_level() {
        let s = Standardizer::new(CriticalLadder::new(vec![5.0, 3.0, 3.0]).unwrap());
        // shared value 3 carries the level of rung 2 (the smaller index)
        assert_eq!(s.upper(3.0), 2.0);
        assert!(s.upper(2.999) < 1.0);

        let all = Standardizer::new(CriticalLadder::new(vec![2.0, 2.0, 2.0]).unwrap());
        assert_eq!(all.upper(2.0), 3.0);
        assert!(all.upper(1.999) < 1.0);
    }

    #[test]
    fn lower_matches_worked_values() {
        let s = Standardizer::new(
            CriticalLadder::with_lower(vec![4.0, 2.0], vec![-4.0, -2.0]).unwrap(),
        );
        assert_eq!(s.lower(-4.0).unwrap(), -2.0);
        assert_eq!(s.lower(-2.0).unwrap(), -1.0);
        assert_eq!(s.lower(-3.0).unwrap(), -1.5);
    }

    #[test]
    fn lower_requires_lower_ladder() {
        let s = std3();
        assert!(s.lower(0.0).is_err());
        assert!(s.joint(0.0).is_err());
    }

    #[test]
    fn joint_bridges_minus_one_to_one() {
        let s = Standardizer::new(
            CriticalLadder::with_lower(vec![4.0, 2.0], vec![-4.0, -2.0]).unwrap(),
        );
        assert_eq!(s.joint(-2.0).unwrap(), -1.0);
        assert_eq!(s.joint(2.0).unwrap(), 1.0);
        assert_eq!(s.joint(0.0).unwrap(), 0.0);
        // outside the bridge it agrees with the one-sided maps
        assert_eq!(s.joint(4.0).unwrap(), s.upper(4.0));
        assert_eq!(s.joint(-4.0).unwrap(), s.lower(-4.0).unwrap());
    }

    #[test]
    fn ladder_validation() {
        assert!(CriticalLadder::new(vec![]).is_err());
        assert!(CriticalLadder::new(vec![1.0, 2.0]).is_err());
        assert!(CriticalLadder::with_lower(vec![2.0, 1.0], vec![0.0, -1.0]).is_err());
        assert!(CriticalLadder::with_lower(vec![2.0, 1.0], vec![-1.0, 1.5]).is_err());
        assert!(CriticalLadder::with_lower(vec![2.0, 1.0], vec![-2.0, -1.0]).is_ok());
    }

    proptest! {
        // Random nonincreasing ladders (duplicates allowed), checked for
        // monotonicity and the threshold equivalence at every rung.
        #[test]
        fn upper_is_monotone_and_threshold_equivalent(
            raw in prop::collection::vec(-10.0f64..10.0, 1..7),
            xs in prop::collection::vec(-15.0f64..15.0, 1..40),
            dup_mask in prop::collection::vec(any::<bool>(), 7),
        ) {
            let mut rungs = raw.clone();
            rungs.sort_by(|a, b| b.partial_cmp(a).unwrap());
            // inject duplicates
            for i in 1..rungs.len() {
                if dup_mask[i % dup_mask.len()] {
                    rungs[i] = rungs[i - 1];
                }
            }
            let k = rungs.len();
            let s = Standardizer::new(CriticalLadder::new(rungs.clone()).unwrap());

            let mut points: Vec<f64> = xs.clone();
            points.extend_from_slice(&rungs);
            points.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for w in points.windows(2) {
                prop_assert!(s.upper(w[0]) <= s.upper(w[1]) + 1e-12);
            }
            for x in points {
                let phi = s.upper(x);
                for (i, &b) in rungs.iter().enumerate() {
                    let level = (k - i) as f64;
                    prop_assert_eq!(x >= b, phi >= level,
                        "x={} b={} phi={} level={}", x, b, phi, level);
                }
            }
        }
    }
}
