//! Null distributions and counter-based random streams.
//!
//! Every draw is a pure function of `(master seed, sample index, null id,
//! attempt)`, so the same valuation is produced no matter in which order or
//! on which worker samples are taken.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::model::{ModelError, NullId};

/// A continuous distribution attached to a marked null.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Distribution {
    Normal {
        mu: f64,
        sigma: f64,
    },
    Uniform {
        #[serde(rename = "l", alias = "lo")]
        lo: f64,
        #[serde(rename = "u", alias = "hi")]
        hi: f64,
    },
    Exponential {
        lambda: f64,
    },
}

impl Distribution {
    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = match *self {
            Distribution::Normal { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma > 0.0,
            Distribution::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            Distribution::Exponential { lambda } => lambda.is_finite() && lambda > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(ModelError::InvalidDistribution(format!("{self:?}")))
        }
    }

    /// `P(X ≤ x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Distribution::Normal { mu, sigma } => normal(mu, sigma).cdf(x),
            Distribution::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            Distribution::Exponential { lambda } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-lambda * x).exp_m1()
                }
            }
        }
    }

    /// Inverse CDF for `p ∈ [0, 1]`; unbounded supports return `±∞` at the ends.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match *self {
            Distribution::Normal { mu, sigma } => normal(mu, sigma).inverse_cdf(p),
            Distribution::Uniform { lo, hi } => lo + (hi - lo) * p,
            Distribution::Exponential { lambda } => -(-p).ln_1p() / lambda,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Distribution::Normal { mu, .. } => mu,
            Distribution::Uniform { lo, hi } => 0.5 * (lo + hi),
            Distribution::Exponential { lambda } => 1.0 / lambda,
        }
    }
}

fn normal(mu: f64, sigma: f64) -> Normal {
    Normal::new(mu, sigma).expect("validated normal parameters")
}

/// Domain tag mixed into every stream key so that streams of this crate do
/// not coincide with plain `seed_from_u64` generators.
const STREAM_TAG: u64 = 0x6970_6462_5f76_616c;

/// A single-owner generator positioned at one point of the counter space.
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    /// The stream for null `null` in sample `sample` under `seed`.
    pub fn for_draw(seed: u64, sample: u64, null: NullId) -> Self {
        Self::keyed(seed, sample, null.0, 0)
    }

    /// Like [`RandomStream::for_draw`], for the `attempt`-th redraw of a
    /// rejected sample.
    pub fn for_attempt(seed: u64, sample: u64, null: NullId, attempt: u64) -> Self {
        Self::keyed(seed, sample, null.0, attempt)
    }

    fn keyed(seed: u64, sample: u64, lane: u64, attempt: u64) -> Self {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&sample.to_le_bytes());
        key[16..24].copy_from_slice(&lane.to_le_bytes());
        key[24..32].copy_from_slice(&(STREAM_TAG ^ attempt.rotate_left(32)).to_le_bytes());
        RandomStream {
            rng: ChaCha8Rng::from_seed(key),
        }
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

/// Draws one value from `d`.
pub fn dist_sample(d: &Distribution, stream: &mut RandomStream) -> f64 {
    match *d {
        Distribution::Normal { mu, sigma } => {
            let z: f64 = StandardNormal.sample(&mut stream.rng);
            mu + sigma * z
        }
        Distribution::Uniform { lo, hi } => lo + (hi - lo) * stream.unit(),
        // inverse transform on 1 - U ∈ (0, 1]
        Distribution::Exponential { lambda } => -(1.0 - stream.unit()).ln() / lambda,
    }
}

pub fn dist_cdf(d: &Distribution, x: f64) -> f64 {
    d.cdf(x)
}
