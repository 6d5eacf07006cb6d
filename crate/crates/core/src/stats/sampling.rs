use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Seed plus stream index. Each pair selects an independent ChaCha8 stream,
/// so Monte Carlo replications can be generated in any order or in parallel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngSeed {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn with_stream(self, stream_id: u64) -> Self {
        Self { stream_id, ..self }
    }

    pub fn stream(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Outcome of a single IFM run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Detection {
    Reference,
    Sample,
    Lost,
}

impl Detection {
    pub fn index(self) -> usize {
        match self {
            Detection::Reference => 0,
            Detection::Sample => 1,
            Detection::Lost => 2,
        }
    }
}

const NORMALIZATION_TOLERANCE: f64 = 1e-9;

pub fn sample_bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> Result<bool> {
    crate::error::check_unit("p", p)?;
    Ok(rng.random::<f64>() < p)
}

/// Draws one of reference / sample / lost with probabilities `probs`.
pub fn sample_categorical3<R: Rng + ?Sized>(rng: &mut R, probs: [f64; 3]) -> Result<Detection> {
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(invalid("probs", format!("{probs:?} has entries outside [0, 1]")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::Unnormalized { sum });
    }
    const ORDER: [Detection; 3] = [Detection::Reference, Detection::Sample, Detection::Lost];
    let u = rng.random::<f64>();
    let mut cumulative = 0.0;
    for (outcome, &p) in ORDER.iter().zip(&probs) {
        cumulative += p;
        if u < cumulative {
            return Ok(*outcome);
        }
    }
    // rounding left u above the cumulative sum: take the last possible outcome
    let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    Ok(ORDER[last])
}

pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> Result<u64> {
    if !(mean >= 0.0) || !mean.is_finite() {
        return Err(invalid("mean", format!("{mean} must be finite and non-negative")));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean).map_err(|e| invalid("mean", e.to_string()))?;
    Ok(dist.sample(rng) as u64)
}
