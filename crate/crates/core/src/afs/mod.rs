//! Adaptive feedback scaling: base parameters, the scale recursion, and a
//! certificate of every inequality the induction relies on.
//!
//! Sizes (`Y_k`, `S_k`, `L_k`, ...) are exact integers and `b_k`, `s_k` exact
//! rationals up to a configurable scale. Past it they become interval
//! enclosures. Transcendental quantities are always intervals.

mod base;
mod certificate;
mod scale;

pub use base::{derive_base, l0_threshold, BaseInput, BaseParams, L0Choice, L0Threshold, ThresholdCandidate};
pub use certificate::{certify, certify_records, BaseRow, Certificate, CheckOutcome, EslRow, RecordRow, Regime, RegimeLabel, ThresholdRow, ESL_GAP_RATIO};
pub use scale::{advance_scale, build_records, esl_exponents, initial_record, Count, EslExponents, Factor, Ratio, ScaleRecord};

use rug::Rational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::IntervalError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AfsError {
    #[error("dimension must be at least 1")]
    InvalidDimension,
    #[error("beta must lie in (0, 1], got {0}")]
    InvalidBeta(Rational),
    #[error("b0 = {b0} must exceed d/beta = {bound}")]
    InvalidB0 { b0: Rational, bound: Rational },
    #[error("p0 = {p0} violates p0 < 23^(-2d) = {bound}")]
    ThresholdViolated { p0: Rational, bound: Rational },
    #[error("p0 must be positive")]
    NonPositiveP0,
    #[error("L0 must be at least 2")]
    InvalidL0,
    #[error("theta0 does not land in (0, 1/3)")]
    ThetaOutOfRange,
    #[error("could not decide the switch scale at {bits} bits")]
    AmbiguousSwitch { bits: u32 },
    #[error("precision {0} bits is below the 167-bit floor")]
    PrecisionTooLow(u32),
    #[error(transparent)]
    Interval(#[from] IntervalError),
}

/// Where the fixed-growth regime hands over to the adaptive one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GrowthIndexing {
    /// `B_{k+1} = D_{k+1} = (2/3)(S_k + 1)` past the switch: the factor uses
    /// the budget of the scale being left.
    #[default]
    Delayed,
    /// `B_{k+1} = D_{k+1} = (2/3)(S_{k+1} + 1)` past the switch.
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineSettings {
    pub precision: u32,
    /// Last scale whose sizes are kept as exact integers.
    pub exact_max_k: u32,
    pub indexing: GrowthIndexing,
}

impl Default for EngineSettings {
    fn default() -> Self {
        EngineSettings {
            precision: crate::interval::DEFAULT_PRECISION,
            exact_max_k: 120,
            indexing: GrowthIndexing::Delayed,
        }
    }
}
