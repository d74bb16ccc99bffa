//! Monte-Carlo estimators and per-realization lemma checks.
//!
//! Realization `i` of a run always draws its potential from
//! `(master_seed, i)`, so results do not depend on how work is scheduled.
//! Verdicts compare confidence-interval endpoints, never point estimates.

mod desk;
mod estimators;
mod lemmas;
mod recursion;
pub mod stats;

pub use desk::{DeskScale, NextScale, INITIAL_GROWTH};
pub use estimators::{
    efc_scaling_probe, estimate_cnr_failure, estimate_singular_prob, estimate_wegner, CnrEstimate, EfcCurve,
    EfcPoint, SingularProbe, WegnerCurve, WegnerPoint,
};
pub use lemmas::{
    check_appendix_chain, check_dominated_decay, gri_suite, AppendixReport, GriSuite, GriTriple, LemmaCheck,
    PropertyTally,
};
pub use recursion::{check_recursion_empirically, RecursionReport, Verdict};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::afs::AfsError;
use crate::geometry::GeometryError;
use crate::operator::OperatorError;

pub const CONFIDENCE: f64 = 0.95;

#[derive(Debug, Error)]
pub enum McError {
    #[error("at least one sample is required")]
    NoSamples,
    #[error("incompatible estimates: {0}")]
    Mismatch(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Engine(#[from] AfsError),
}

/// Frequency of an event over independent realizations, with a two-sided
/// Clopper-Pearson interval at [`CONFIDENCE`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub event: String,
    pub n_samples: u64,
    pub successes: u64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub master_seed: u64,
    /// Side of the cube the event refers to.
    pub size: Option<u64>,
    pub energy: Option<f64>,
}

impl EstimatorResult {
    pub fn from_counts(event: impl Into<String>, successes: u64, n: u64, master_seed: u64) -> Result<Self, McError> {
        if n == 0 {
            return Err(McError::NoSamples);
        }
        let (lo, hi) = stats::clopper_pearson(successes, n, CONFIDENCE);
        Ok(EstimatorResult {
            event: event.into(),
            n_samples: n,
            successes,
            estimate: successes as f64 / n as f64,
            ci_low: lo,
            ci_high: hi,
            master_seed,
            size: None,
            energy: None,
        })
    }

    pub fn at(mut self, size: u64, energy: f64) -> Self {
        self.size = Some(size);
        self.energy = Some(energy);
        self
    }
}

/// How many realizations to draw, from which seed, on how many threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunPlan {
    pub n: u64,
    pub master_seed: u64,
    pub workers: usize,
}

impl RunPlan {
    pub fn new(n: u64, master_seed: u64, workers: usize) -> Result<Self, McError> {
        if n == 0 {
            return Err(McError::NoSamples);
        }
        Ok(RunPlan { n, master_seed, workers })
    }
}

/// One realization's outcome, emitted as a JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub index: u64,
    pub event: bool,
    pub value: f64,
}

/// `f(0), ..., f(n-1)` on a pool of `workers` threads, in index order.
pub fn run_indexed<T, F>(n: u64, workers: usize, f: F) -> Result<Vec<T>, McError>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| McError::Pool(e.to_string()))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(&f).collect()))
}

/// As [`run_indexed`] for fallible work; the first error in index order wins.
pub fn try_run_indexed<T, F>(n: u64, workers: usize, f: F) -> Result<Vec<T>, McError>
where
    T: Send,
    F: Fn(u64) -> Result<T, McError> + Sync + Send,
{
    run_indexed(n, workers, f)?.into_iter().collect()
}
