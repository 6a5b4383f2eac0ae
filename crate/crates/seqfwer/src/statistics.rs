//! Sequential test statistics behind a common evaluation contract: a
//! statistic is a deterministic rule mapping stream prefixes of length n to a
//! scalar value, defined for every n at or above a kind-specific minimum.
//!
//! The workhorse kinds are the exact one-sided Wilcoxon signed-rank p-value
//! (returned negated, so that "reject when the statistic clears an upper
//! threshold" matches "reject when the p-value drops below a level") and the
//! pooled-variance two-sample t statistic with a safety-threshold scaling of
//! the control mean.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A bundle of data streams addressed by index; stream s holds the
/// observations X_1, X_2, ... of that source in arrival order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSet {
    streams: Vec<Vec<f64>>,
}

impl StreamSet {
    pub fn new(streams: Vec<Vec<f64>>) -> Self {
        Self { streams }
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }

    pub fn stream(&self, s: usize) -> Result<&[f64]> {
        self.streams
            .get(s)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::Validation(format!("no stream with index {s}")))
    }

    /// First `n` observations of stream `s`.
    pub fn prefix(&self, s: usize, n: usize) -> Result<&[f64]> {
        let stream = self.stream(s)?;
        if stream.len() < n {
            return Err(Error::DataExhausted {
                stream: s,
                have: stream.len(),
                need: n,
            });
        }
        Ok(&stream[..n])
    }
}

/// A deterministic sequential test statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SequentialStatistic {
    /// Negated one-sided signed-rank p-value of the per-subject contrast
    /// `sum_c weights[c] * streams[c][i]`.
    SignedRankNegP {
        streams: Vec<usize>,
        weights: Vec<f64>,
    },
    /// Pooled-variance t for testing mean(treatment) <= lambda * mean(control).
    TwoSampleT {
        treatment: usize,
        control: usize,
        lambda: f64,
    },
    /// Standardized running mean `sqrt(n) * mean(X_1..X_n)`.
    ZMean { stream: usize },
    /// The stream itself holds the statistic path: value at n is X_n.
    Path { stream: usize },
    /// Constant value at every look; used for logically-decided hypotheses.
    Constant { value: f64 },
}

impl SequentialStatistic {
    /// Smallest sample size at which the statistic is defined.
    pub fn n_min(&self) -> usize {
        match self {
            Self::TwoSampleT { .. } => 2,
            Self::Constant { .. } => 0,
            _ => 1,
        }
    }

    /// Stream indices the statistic reads.
    pub fn streams_used(&self) -> Vec<usize> {
        match self {
            Self::SignedRankNegP { streams, .. } => streams.clone(),
            Self::TwoSampleT {
                treatment, control, ..
            } => vec![*treatment, *control],
            Self::ZMean { stream } | Self::Path { stream } => vec![*stream],
            Self::Constant { .. } => vec![],
        }
    }

    pub fn validate(&self, stream_count: usize) -> Result<()> {
        if let Self::SignedRankNegP { streams, weights } = self {
            if streams.is_empty() || streams.len() != weights.len() {
                return Err(Error::Validation(format!(
                    "contrast arity mismatch: {} streams, {} weights",
                    streams.len(),
                    weights.len()
                )));
            }
            if weights.iter().all(|&w| w == 0.0) {
                return Err(Error::Validation("contrast weights are all zero".into()));
            }
        }
        if let Self::TwoSampleT { lambda, .. } = self {
            if !(*lambda > 0.0 && *lambda <= 1.0) {
                return Err(Error::Validation(format!("lambda {lambda} outside (0, 1]")));
            }
        }
        if let Some(&s) = self.streams_used().iter().find(|&&s| s >= stream_count) {
            return Err(Error::Validation(format!(
                "statistic references stream {s}, only {stream_count} available"
            )));
        }
        Ok(())
    }
}

/// Exact null distribution of the signed-rank sum W for sample size n, stored
/// as tail probabilities P(W >= w) for w = 0 ..= n(n+1)/2.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedRankTable {
    n: usize,
    tail: Vec<f64>,
}

impl SignedRankTable {
    pub fn n(&self) -> usize {
        self.n
    }

    /// P(W >= w) for integer w; 1 for w <= 0, 0 past the maximum sum.
    pub fn tail_at(&self, w: usize) -> f64 {
        self.tail.get(w).copied().unwrap_or(0.0)
    }

    /// P(W >= w) for possibly fractional w (midranks produce half-integers);
    /// the null support is integer, so this is the tail at the ceiling.
    pub fn tail(&self, w: f64) -> f64 {
        if w <= 0.0 {
            return 1.0;
        }
        let idx = w.ceil() as usize;
        self.tail_at(idx)
    }

    pub fn max_sum(&self) -> usize {
        self.tail.len() - 1
    }
}

/// Builds the exact table by the convolution recurrence over ranks 1..=n:
/// each rank contributes its value to the sum independently with
/// probability 1/2.
pub fn signed_rank_table(n: usize) -> Result<SignedRankTable> {
    if n == 0 || n > 200 {
        return Err(Error::Validation(format!(
            "signed-rank table size {n} outside 1..=200"
        )));
    }
    let max_sum = n * (n + 1) / 2;
    // counts[w] = number of sign patterns of ranks processed so far summing to w
    let mut counts = vec![0.0f64; max_sum + 1];
    counts[0] = 1.0;
    let mut top = 0usize;
    for r in 1..=n {
        top += r;
        for w in (r..=top).rev() {
            counts[w] += counts[w - r];
        }
    }
    let scale = 2f64.powi(n as i32);
    let mut tail = vec![0.0f64; max_sum + 1];
    let mut acc = 0.0;
    for w in (0..=max_sum).rev() {
        acc += counts[w];
        tail[w] = acc / scale;
    }
    Ok(SignedRankTable { n, tail })
}

/// Process-wide cache of exact tables; paths re-rank the same sizes
/// thousands of times during calibration.
pub fn signed_rank_table_cached(n: usize) -> Result<Arc<SignedRankTable>> {
    static CACHE: OnceLock<RwLock<HashMap<usize, Arc<SignedRankTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
    if let Some(t) = cache.read().unwrap().get(&n) {
        return Ok(Arc::clone(t));
    }
    let table = Arc::new(signed_rank_table(n)?);
    cache.write().unwrap().insert(n, Arc::clone(&table));
    Ok(table)
}

/// Midranks of the absolute values: tied magnitudes share the average of the
/// rank positions they occupy.
pub fn midranks_abs(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].abs().partial_cmp(&values[b].abs()).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]].abs() == values[order[i]].abs() {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0; // average of 1-based positions i+1 ..= j+1
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// One-sided exact signed-rank p-value: P(W >= w_obs) where w_obs sums the
/// midranks of |d_i| over the positive differences. Zero differences must be
/// removed by the caller beforehand.
pub fn signed_rank_p(differences: &[f64]) -> Result<f64> {
    let n = differences.len();
    if n == 0 {
        return Err(Error::Validation(
            "signed-rank test needs at least one difference".into(),
        ));
    }
    if differences.contains(&0.0) {
        return Err(Error::Validation(
            "zero difference present; remove tied observations before testing".into(),
        ));
    }
    let ranks = midranks_abs(differences);
    let w: f64 = differences
        .iter()
        .zip(&ranks)
        .filter(|(&d, _)| d > 0.0)
        .map(|(_, &r)| r)
        .sum();
    let table = signed_rank_table_cached(n)?;
    Ok(table.tail(w))
}

/// Pooled-variance two-sample t for mean(treatment) <= lambda * mean(control):
/// `t = (mean_t - lambda * mean_c) / (s_p * sqrt(1/n_t + lambda^2/n_c))`.
pub fn two_sample_t(treatment: &[f64], control: &[f64], lambda: f64) -> Result<f64> {
    let (nt, nc) = (treatment.len(), control.len());
    if nt < 2 || nc < 2 {
        return Err(Error::Validation(format!(
            "two-sample t needs at least 2 observations per group (got {nt} and {nc})"
        )));
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::Validation(format!("lambda {lambda} outside (0, 1]")));
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let (mt, mc) = (mean(treatment), mean(control));
    let ss = |xs: &[f64], m: f64| xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    let s2 = (ss(treatment, mt) + ss(control, mc)) / (nt + nc - 2) as f64;
    if s2 <= 0.0 {
        return Err(Error::Degenerate(
            "pooled variance is zero; t statistic undefined".into(),
        ));
    }
    let se = (s2 * (1.0 / nt as f64 + lambda * lambda / nc as f64)).sqrt();
    Ok((mt - lambda * mc) / se)
}

/// Per-subject contrast over the first n entries of the given streams.
pub fn contrast_differences(
    data: &StreamSet,
    streams: &[usize],
    weights: &[f64],
    n: usize,
) -> Result<Vec<f64>> {
    if streams.len() != weights.len() {
        return Err(Error::Validation(format!(
            "contrast arity mismatch: {} streams, {} weights",
            streams.len(),
            weights.len()
        )));
    }
    let prefixes: Vec<&[f64]> = streams
        .iter()
        .map(|&s| data.prefix(s, n))
        .collect::<Result<_>>()?;
    Ok((0..n)
        .map(|i| {
            prefixes
                .iter()
                .zip(weights)
                .map(|(p, &w)| w * p[i])
                .sum::<f64>()
        })
        .collect())
}

/// Evaluates a statistic on prefixes truncated to length n.
pub fn evaluate(statistic: &SequentialStatistic, data: &StreamSet, n: usize) -> Result<f64> {
    if n < statistic.n_min() {
        return Err(Error::Validation(format!(
            "sample size {n} below statistic minimum {}",
            statistic.n_min()
        )));
    }
    match statistic {
        SequentialStatistic::SignedRankNegP { streams, weights } => {
            let d = contrast_differences(data, streams, weights, n)?;
            Ok(-signed_rank_p(&d)?)
        }
        SequentialStatistic::TwoSampleT {
            treatment,
            control,
            lambda,
        } => two_sample_t(
            data.prefix(*treatment, n)?,
            data.prefix(*control, n)?,
            *lambda,
        ),
        SequentialStatistic::ZMean { stream } => {
            let prefix = data.prefix(*stream, n)?;
            Ok(prefix.iter().sum::<f64>() / (n as f64).sqrt())
        }
        SequentialStatistic::Path { stream } => {
            let prefix = data.prefix(*stream, n)?;
            Ok(prefix[n - 1])
        }
        SequentialStatistic::Constant { value } => Ok(*value),
    }
}
