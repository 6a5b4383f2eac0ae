//! Generative stream models for Monte Carlo calibration, error-rate
//! estimation, and exact small-instance enumeration.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statistics::StreamSet;

/// Per-stream observation model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StreamModel {
    Normal {
        mean: f64,
        sd: f64,
    },
    /// Finite support with explicit probabilities; the enumerable case.
    Discrete {
        values: Vec<f64>,
        probs: Vec<f64>,
    },
}

impl StreamModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Normal { sd, .. } => {
                if *sd <= 0.0 {
                    return Err(Error::Validation("normal sd must be positive".into()));
                }
            }
            Self::Discrete { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return Err(Error::Validation(
                        "discrete model needs matching nonempty values and probs".into(),
                    ));
                }
                if probs.iter().any(|&p| p < 0.0) {
                    return Err(Error::Validation(
                        "discrete probabilities must be nonnegative".into(),
                    ));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::Validation(format!(
                        "discrete probabilities sum to {total}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Self::Normal { mean, sd } => Normal::new(*mean, *sd).unwrap().sample(rng),
            Self::Discrete { values, probs } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().unwrap()
            }
        }
    }
}

/// Draws `n` observations from every stream model. When `equicorrelation`
/// is set (normal models only), observations at the same index share a
/// common noise component with the given cross-stream correlation.
pub fn draw_streams(
    models: &[StreamModel],
    equicorrelation: Option<f64>,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<StreamSet> {
    for m in models {
        m.validate()?;
    }
    let mut streams = vec![Vec::with_capacity(n); models.len()];
    match equicorrelation {
        None => {
            for _ in 0..n {
                for (s, m) in models.iter().enumerate() {
                    streams[s].push(m.draw(rng));
                }
            }
        }
        Some(rho) => {
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::Validation(format!(
                    "equicorrelation {rho} outside [0, 1)"
                )));
            }
            let std = Normal::new(0.0, 1.0).unwrap();
            for m in models {
                if !matches!(m, StreamModel::Normal { .. }) {
                    return Err(Error::Validation(
                        "equicorrelation requires normal stream models".into(),
                    ));
                }
            }
            for _ in 0..n {
                let shared: f64 = std.sample(rng);
                for (s, m) in models.iter().enumerate() {
                    if let StreamModel::Normal { mean, sd } = m {
                        let own: f64 = std.sample(rng);
                        let z = rho.sqrt() * shared + (1.0 - rho).sqrt() * own;
                        streams[s].push(mean + sd * z);
                    }
                }
            }
        }
    }
    Ok(StreamSet::new(streams))
}

/// Replicate-indexed generator: same seed and index give the same stream,
/// regardless of execution order across replicates.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}
