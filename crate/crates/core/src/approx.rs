//! Sampling-based likelihood estimation.
//!
//! [`like_apx`] draws `γ = ⌈ε⁻²⌉` valuations, evaluates the query on each
//! instantiated database and reports the fraction of samples whose
//! consistency count satisfies the comparison. With probability at least
//! 0.75 the result is within `ε` of the true likelihood.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{count_consistent, eval, EvalError, Mode};
use crate::model::{apply_valuation, IncompleteDatabase, NullId, Valuation};
use crate::query::{arity::arity_of, desugar, IntervalTuple, Query, TypeError};
use crate::random::{dist_sample, RandomStream};

/// The comparison `∘` applied to the consistency count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparator {
    Lt,
    Eq,
    Gt,
}

impl Comparator {
    pub fn holds(self, count: u64, k: u64) -> bool {
        match self {
            Comparator::Lt => count < k,
            Comparator::Eq => count == k,
            Comparator::Gt => count > k,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Eq => "=",
            Comparator::Gt => ">",
        }
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Comparator::Lt => "lt",
            Comparator::Eq => "eq",
            Comparator::Gt => "gt",
        })
    }
}

impl FromStr for Comparator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lt" | "<" => Ok(Comparator::Lt),
            "eq" | "=" => Ok(Comparator::Eq),
            "gt" | ">" => Ok(Comparator::Gt),
            _ => Err(format!("unknown comparator `{s}` (expected lt, eq or gt)")),
        }
    }
}

/// `Likelihood[q, ∘, k]` on the interval tuple `ā`.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodQuery {
    pub query: Query,
    pub cmp: Comparator,
    pub k: u64,
    pub intervals: IntervalTuple,
}

impl LikelihoodQuery {
    pub fn new(query: Query, cmp: Comparator, k: u64, intervals: IntervalTuple) -> Self {
        LikelihoodQuery {
            query,
            cmp,
            k,
            intervals,
        }
    }

    /// `(<, 0)` can never hold.
    pub fn is_trivial(&self) -> bool {
        self.cmp == Comparator::Lt && self.k == 0
    }

    /// Checks the query against the schema of `db` and the interval tuple
    /// against the query's arity, returning the desugared query.
    pub fn prepare(&self, db: &IncompleteDatabase) -> Result<Query, ApproxError> {
        let schema = db.schema();
        let arity = arity_of(&self.query, &schema)?;
        if arity != self.intervals.len() {
            return Err(ApproxError::IntervalArity {
                expected: arity,
                found: self.intervals.len(),
            });
        }
        if let Some(id) = self
            .intervals
            .iter()
            .flat_map(|spec| spec.endpoints().flat_map(|e| e.nulls()).collect::<Vec<_>>())
            .find(|id| db.distribution(*id).is_none())
        {
            return Err(ApproxError::UnknownNull(id));
        }
        if let Some(i) = self
            .intervals
            .iter()
            .flat_map(|spec| spec.endpoints().flat_map(|e| e.attrs()).collect::<Vec<_>>())
            .next()
        {
            return Err(ApproxError::AttributeInInterval(i));
        }
        Ok(desugar(&self.query, &schema)?)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApproxError {
    #[error("epsilon must lie in (0, 1], got {0}")]
    InvalidEpsilon(f64),
    #[error("gamma must be positive")]
    InvalidGamma,
    #[error("delta must lie in [0, 1], got {0}")]
    InvalidDelta(f64),
    #[error("threshold with (<, 0) is trivially false")]
    TrivialThreshold,
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error("interval tuple has {found} entries but the query has arity {expected}")]
    IntervalArity { expected: usize, found: usize },
    #[error("interval endpoint mentions null {0}, which does not occur in the database")]
    UnknownNull(NullId),
    #[error("interval endpoint mentions attribute ${0}")]
    AttributeInInterval(usize),
    #[error("sample {index} failed: {source}")]
    Sample {
        index: u64,
        #[source]
        source: EvalError,
    },
    #[error("every sample failed")]
    AllSamplesFailed,
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

/// Run parameters of the estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxConfig {
    pub epsilon: f64,
    pub gamma: Option<u64>,
    pub seed: u64,
    /// Count failing samples instead of aborting; they leave the denominator.
    pub skip_bad_samples: bool,
    /// Worker count; `None` or 1 samples serially.
    pub threads: Option<usize>,
    /// Median over this many independent runs; `None` is a single run.
    pub median_of: Option<u32>,
}

impl ApproxConfig {
    pub fn new(epsilon: f64, seed: u64) -> Self {
        ApproxConfig {
            epsilon,
            gamma: None,
            seed,
            skip_bad_samples: false,
            threads: None,
            median_of: None,
        }
    }

    pub fn with_gamma(mut self, gamma: u64) -> Self {
        self.gamma = Some(gamma);
        self
    }

    /// Validated sample count.
    pub fn gamma(&self) -> Result<u64, ApproxError> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(ApproxError::InvalidEpsilon(self.epsilon));
        }
        match self.gamma {
            Some(0) => Err(ApproxError::InvalidGamma),
            Some(g) => Ok(g),
            None => Ok(gamma_for(self.epsilon)),
        }
    }
}

/// `⌈ε⁻²⌉`, ignoring rounding noise in `ε²`.
pub fn gamma_for(epsilon: f64) -> u64 {
    let x = 1.0 / (epsilon * epsilon);
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as u64
    } else {
        x.ceil() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub epsilon: f64,
    pub gamma: u64,
    pub seed: u64,
    pub failures: u64,
}

/// A valuation of `Null(D)` for sample `sample`: every null drawn from its
/// own distribution on its own stream.
pub fn val_sampler(db: &IncompleteDatabase, seed: u64, sample: u64) -> Valuation {
    db.annotations()
        .iter()
        .map(|(id, dist)| {
            let mut stream = RandomStream::for_draw(seed, sample, *id);
            (*id, dist_sample(dist, &mut stream))
        })
        .collect()
}

/// `#(v(ā), q(v(D)))` for one sample.
pub fn sample_count(
    l: &LikelihoodQuery,
    core: &Query,
    db: &IncompleteDatabase,
    v: &Valuation,
) -> Result<u64, EvalError> {
    let world = apply_valuation(v, db)?;
    let answer = eval(core, &world, Mode::Complete)?;
    count_consistent(&l.intervals, v, &answer)
}

/// Consistency counts of samples `first .. first + gamma`; `None` marks a
/// failed sample when failures are skipped.
pub fn sample_counts(
    l: &LikelihoodQuery,
    db: &IncompleteDatabase,
    cfg: &ApproxConfig,
    first: u64,
    gamma: u64,
) -> Result<Vec<Option<u64>>, ApproxError> {
    let core = l.prepare(db)?;
    let one = |j: u64| {
        let v = val_sampler(db, cfg.seed, j);
        sample_count(l, &core, db, &v)
    };
    let raw: Vec<Result<u64, EvalError>> = match cfg.threads {
        Some(n) if n > 1 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| ApproxError::Pool(e.to_string()))?;
            pool.install(|| (first..first + gamma).into_par_iter().map(one).collect())
        }
        _ => (first..first + gamma).map(one).collect(),
    };
    raw.into_iter()
        .zip(first..)
        .map(|(r, index)| match r {
            Ok(c) => Ok(Some(c)),
            Err(_) if cfg.skip_bad_samples => Ok(None),
            Err(source) => Err(ApproxError::Sample { index, source }),
        })
        .collect()
}

fn estimate_run(
    l: &LikelihoodQuery,
    db: &IncompleteDatabase,
    cfg: &ApproxConfig,
    first: u64,
    gamma: u64,
) -> Result<(f64, u64), ApproxError> {
    let counts = sample_counts(l, db, cfg, first, gamma)?;
    let failures = counts.iter().filter(|c| c.is_none()).count() as u64;
    let hits = counts
        .iter()
        .flatten()
        .filter(|&&c| l.cmp.holds(c, l.k))
        .count() as u64;
    let used = gamma - failures;
    if used == 0 {
        return Err(ApproxError::AllSamplesFailed);
    }
    Ok((hits as f64 / used as f64, failures))
}

/// LikeApx: the additive-error estimate of `Likelihood[q, ∘, k](D, ā)`.
pub fn like_apx(
    l: &LikelihoodQuery,
    db: &IncompleteDatabase,
    cfg: &ApproxConfig,
) -> Result<Estimate, ApproxError> {
    let gamma = cfg.gamma()?;
    let (value, failures) = match cfg.median_of {
        None | Some(0) | Some(1) => estimate_run(l, db, cfg, 0, gamma)?,
        Some(runs) => {
            let mut values = Vec::with_capacity(runs as usize);
            let mut failures = 0;
            for r in 0..u64::from(runs) {
                let (value, f) = estimate_run(l, db, cfg, r * gamma, gamma)?;
                values.push(value);
                failures += f;
            }
            values.sort_by(f64::total_cmp);
            (values[values.len() / 2], failures)
        }
    };
    Ok(Estimate {
        value,
        epsilon: cfg.epsilon,
        gamma,
        seed: cfg.seed,
        failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    AboveThreshold,
    NotAbove,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdOutcome {
    pub decision: Decision,
    pub delta: f64,
    pub estimate: Estimate,
}

/// Decides `Likelihood > δ` only when the estimate is at least `ε` away
/// from `δ`.
pub fn threshold(
    l: &LikelihoodQuery,
    delta: f64,
    db: &IncompleteDatabase,
    cfg: &ApproxConfig,
) -> Result<ThresholdOutcome, ApproxError> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(ApproxError::InvalidDelta(delta));
    }
    if l.is_trivial() {
        return Err(ApproxError::TrivialThreshold);
    }
    let estimate = like_apx(l, db, cfg)?;
    let decision = if estimate.value - cfg.epsilon > delta {
        Decision::AboveThreshold
    } else if estimate.value + cfg.epsilon <= delta {
        Decision::NotAbove
    } else {
        Decision::Inconclusive
    };
    Ok(ThresholdOutcome {
        decision,
        delta,
        estimate,
    })
}
