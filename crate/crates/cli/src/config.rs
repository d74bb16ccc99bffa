//! Declarative run configuration, read from TOML.
//!
//! Every section is optional at parse time; a subcommand fails with a
//! configuration error when the section it needs is missing. Exact parameters
//! of the engine (`beta`, `b0`, `p0`, `L0`) are strings so that `23^-4` or
//! `11^256` stay exact.

use std::path::Path;

use afs_lab::afs::{BaseInput, EngineSettings, GrowthIndexing, L0Choice};
use afs_lab::disorder::DisorderSpec;
use afs_lab::interval::DEFAULT_PRECISION;
use afs_lab::operator::{CommutatorMode, SolverSettings, DEFAULT_DENSE_CAP, DEFAULT_NEAR_SINGULAR_TOL};
use afs_lab::spectral::DlSetup;
use rug::ops::Pow;
use rug::{Integer, Rational};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub disorder: Option<DisorderSpec>,
    pub base: Option<BaseSection>,
    pub desk: Option<DeskSection>,
    pub wegner: Option<WegnerSection>,
    pub gri: Option<GriSection>,
    pub sweep: Option<SweepSection>,
    pub efc: Option<EfcSection>,
    pub esl_curve: Option<EslCurveSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Realizations per estimator.
    #[serde(default = "default_n")]
    pub n: u64,
    #[serde(default)]
    pub seed: u64,
    /// Not part of the digest: results do not depend on it.
    #[serde(default = "default_workers", skip_serializing)]
    pub workers: usize,
}

fn default_n() -> u64 {
    1000
}

fn default_workers() -> usize {
    1
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            n: default_n(),
            seed: 0,
            workers: default_workers(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_cap")]
    pub dense_cap: usize,
    #[serde(default = "default_tol")]
    pub near_singular_tol: f64,
    #[serde(default)]
    pub commutator: CommutatorMode,
}

fn default_cap() -> usize {
    DEFAULT_DENSE_CAP
}

fn default_tol() -> f64 {
    DEFAULT_NEAR_SINGULAR_TOL
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            dense_cap: default_cap(),
            near_singular_tol: default_tol(),
            commutator: CommutatorMode::default(),
        }
    }
}

impl SolverSection {
    pub fn settings(&self) -> SolverSettings {
        SolverSettings {
            dense_cap: self.dense_cap,
            near_singular_tol: self.near_singular_tol,
            commutator: self.commutator,
        }
    }
}

/// Base parameters of the scale recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseSection {
    pub d: u32,
    pub beta: String,
    pub b0: String,
    pub p0: String,
    /// An integer expression or `"auto"` for the smallest admissible value.
    pub l0: String,
    #[serde(default = "default_provenance")]
    pub p0_provenance: String,
    #[serde(default = "default_k_max")]
    pub k_max: u32,
    #[serde(default = "default_precision")]
    pub precision: u32,
    #[serde(default = "default_exact_max_k")]
    pub exact_max_k: u32,
    #[serde(default)]
    pub indexing: GrowthIndexing,
}

fn default_provenance() -> String {
    "config".into()
}

fn default_k_max() -> u32 {
    60
}

fn default_precision() -> u32 {
    DEFAULT_PRECISION
}

fn default_exact_max_k() -> u32 {
    EngineSettings::default().exact_max_k
}

impl BaseSection {
    pub fn input(&self) -> Result<BaseInput, CliError> {
        let l0 = if self.l0.trim() == "auto" {
            L0Choice::AutoThreshold
        } else {
            let v = parse_rational(&self.l0)?;
            if !v.is_integer() {
                return Err(CliError::Config(format!("l0 = {} is not an integer", self.l0)));
            }
            L0Choice::Value(v.numer().clone())
        };
        Ok(BaseInput {
            d: self.d,
            beta: parse_rational(&self.beta)?,
            b0: parse_rational(&self.b0)?,
            p0: parse_rational(&self.p0)?,
            l0,
            p0_provenance: self.p0_provenance.clone(),
        })
    }

    pub fn engine_settings(&self) -> EngineSettings {
        EngineSettings {
            precision: self.precision,
            exact_max_k: self.exact_max_k,
            indexing: self.indexing,
        }
    }
}

/// Desk-scale experiments at scale `k` of a small base, usually `L0 = 3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeskSection {
    #[serde(flatten)]
    pub base: BaseSection,
    #[serde(default)]
    pub k: u32,
    pub energy: f64,
    /// Center of the scale-`(k+1)` cube in the lemma checks.
    #[serde(default)]
    pub center: Option<Vec<i64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WegnerSection {
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub sizes: Vec<u64>,
    pub energy: f64,
    pub eps: Vec<f64>,
    /// Expected log-log slope and its tolerance; no slope check when absent.
    pub slope: Option<(f64, f64)>,
}

fn default_dim() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GriSection {
    #[serde(default = "default_dim")]
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub size: u64,
    pub interval: (f64, f64),
    pub grid_step: f64,
    pub a: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EfcSection {
    /// Side of the cube of the correlator checks.
    pub size: u64,
    pub x: Vec<i64>,
    pub y: Vec<i64>,
    /// Realizations of the correlator checks; the localization bound uses `run.n`.
    pub instances: u64,
    /// Random sign functions per realization.
    pub functions: u64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    pub dl: DlSetup,
}

fn default_rel_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EslCurveSection {
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub sizes: Vec<u64>,
    pub window: Option<(f64, f64)>,
    pub min_spearman: f64,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(d) = &cfg.disorder {
            d.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// SHA-256 of the canonical JSON form, seed included, workers excluded.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn disorder(&self) -> Result<&DisorderSpec, CliError> {
        self.disorder.as_ref().ok_or_else(|| missing("disorder"))
    }
}

pub fn missing(section: &str) -> CliError {
    CliError::Config(format!("missing [{section}] section"))
}

/// `p/q`, `n`, `n^e` with `e` possibly negative, and `p^e/q^f`.
pub fn parse_rational(text: &str) -> Result<Rational, CliError> {
    let bad = || CliError::Config(format!("cannot parse exact number {text:?}"));
    let power = |t: &str| -> Result<Rational, CliError> {
        let (base, exp) = match t.split_once('^') {
            Some((b, e)) => (b.trim(), e.trim().parse::<i32>().map_err(|_| bad())?),
            None => (t.trim(), 1),
        };
        let base: Integer = base.parse().map_err(|_| bad())?;
        if base == 0 && exp < 0 {
            return Err(bad());
        }
        let magnitude = Rational::from(base.pow(exp.unsigned_abs()));
        Ok(if exp < 0 { magnitude.recip() } else { magnitude })
    };
    match text.split_once('/') {
        Some((num, den)) => {
            let den = power(den)?;
            if den == 0 {
                return Err(bad());
            }
            Ok(power(num)? / den)
        }
        None => power(text),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_numbers() {
        assert_eq!(parse_rational("23^-4").unwrap(), Rational::from((1, 279_841)));
        assert_eq!(parse_rational("1/279841").unwrap(), Rational::from((1, 279_841)));
        assert_eq!(parse_rational(" 5 ").unwrap(), Rational::from(5));
        assert_eq!(parse_rational("11^256").unwrap(), Rational::from(Integer::from(11).pow(256)));
        assert!(parse_rational("0^-1").is_err());
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
    }

    #[test]
    fn digest_ignores_workers_only() {
        let text = "[run]\nn = 10\nseed = 3\nworkers = 1\n";
        let a = Config::from_toml(text).unwrap();
        let b = Config::from_toml(&text.replace("workers = 1", "workers = 8")).unwrap();
        let c = Config::from_toml(&text.replace("seed = 3", "seed = 4")).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::from_toml("[run]\nsamples = 3\n").is_err());
        assert!(Config::from_toml("[disorder]\nfamily = \"uniform\"\na = 1.0\nb = 0.0\namplitude = 1.0\n").is_err());
    }
}
