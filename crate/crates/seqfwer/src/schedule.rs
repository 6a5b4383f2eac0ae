//! Sample-size schedules: the finite set of per-stream sample sizes at which
//! statistics are evaluated and decisions may be made.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A strictly increasing list of positive look sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct SampleSchedule {
    sizes: Vec<usize>,
}

impl SampleSchedule {
    /// Validates and wraps a list of look sizes.
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Validation("schedule must be nonempty".into()));
        }
        for (i, &n) in sizes.iter().enumerate() {
            if n == 0 {
                return Err(Error::Validation(format!(
                    "schedule entry {i} must be positive"
                )));
            }
            if i > 0 && sizes[i - 1] >= n {
                return Err(Error::Validation(format!(
                    "schedule not strictly increasing at index {i}: {} >= {}",
                    sizes[i - 1],
                    n
                )));
            }
        }
        Ok(Self { sizes })
    }

    /// Fully sequential schedule `{from, from+1, ..., to}`.
    pub fn full(from: usize, to: usize) -> Result<Self> {
        Self::new((from..=to).collect())
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> usize {
        self.sizes[0]
    }

    /// Largest look; sampling never continues past this point.
    pub fn max(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn contains(&self, n: usize) -> bool {
        self.sizes.binary_search(&n).is_ok()
    }

    /// Looks at or after sample size `n`, in increasing order.
    pub fn looks_from(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        let start = self.sizes.partition_point(|&m| m < n);
        self.sizes[start..].iter().copied()
    }
}

impl TryFrom<Vec<usize>> for SampleSchedule {
    type Error = Error;
    fn try_from(sizes: Vec<usize>) -> Result<Self> {
        Self::new(sizes)
    }
}

impl From<SampleSchedule> for Vec<usize> {
    fn from(s: SampleSchedule) -> Vec<usize> {
        s.sizes
    }
}
