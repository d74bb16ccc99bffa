//! Seeded IID potentials.
//!
//! A site value depends only on `(master_seed, realization_index, site)`:
//! the ChaCha key holds the seed and index, the stream id is a hash of the
//! coordinates. Evaluation order and thread schedule never matter.

use std::collections::BTreeMap;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::LatticePoint;

const BISECTION_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DisorderError {
    #[error("invalid disorder spec: {0}")]
    InvalidSpec(String),
    #[error("modulus argument {0} outside (0, 1/2)")]
    EpsilonOutOfRange(f64),
}

/// Law of the base variable before scaling by the amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    Uniform { a: f64, b: f64 },
    Holder { beta: f64 },
    AlmostZeroOrder { c: f64, c_prime: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisorderSpec {
    #[serde(flatten)]
    pub family: Family,
    pub amplitude: f64,
}

/// Start of the linear segment in the almost-zero-order construction.
fn azo_knee() -> f64 {
    (-std::f64::consts::E.powi(2)).exp()
}

fn azo_curve(c: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let u = -t.ln();
    (-c * u / u.ln()).exp()
}

impl DisorderSpec {
    pub fn new(family: Family, amplitude: f64) -> Result<Self, DisorderError> {
        let spec = DisorderSpec { family, amplitude };
        spec.validate()?;
        Ok(spec)
    }

    pub fn uniform(a: f64, b: f64, amplitude: f64) -> Result<Self, DisorderError> {
        Self::new(Family::Uniform { a, b }, amplitude)
    }

    pub fn holder(beta: f64, amplitude: f64) -> Result<Self, DisorderError> {
        Self::new(Family::Holder { beta }, amplitude)
    }

    pub fn almost_zero_order(c: f64, c_prime: f64, amplitude: f64) -> Result<Self, DisorderError> {
        Self::new(Family::AlmostZeroOrder { c, c_prime }, amplitude)
    }

    pub fn validate(&self) -> Result<(), DisorderError> {
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(DisorderError::InvalidSpec(format!(
                "amplitude must be finite and non-negative, got {}",
                self.amplitude
            )));
        }
        match self.family {
            Family::Uniform { a, b } => {
                if !(a.is_finite() && b.is_finite() && a <= b) {
                    return Err(DisorderError::InvalidSpec(format!(
                        "uniform bounds must satisfy a <= b, got ({a}, {b})"
                    )));
                }
            }
            Family::Holder { beta } => {
                if !(beta > 0.0 && beta <= 1.0) {
                    return Err(DisorderError::InvalidSpec(format!(
                        "holder order must lie in (0, 1], got {beta}"
                    )));
                }
            }
            Family::AlmostZeroOrder { c, c_prime } => {
                if !(c > 0.0 && c_prime > 0.0 && c.is_finite() && c_prime.is_finite()) {
                    return Err(DisorderError::InvalidSpec(format!(
                        "almost-zero-order constants must be positive, got C={c}, C'={c_prime}"
                    )));
                }
                // concave construction: left slope at the knee dominates the linear part
                let knee = azo_knee();
                let f_knee = azo_curve(c, knee);
                let left_slope = f_knee * c / (4.0 * knee);
                let linear_slope = (1.0 - f_knee) / (1.0 - knee);
                if left_slope < linear_slope {
                    return Err(DisorderError::InvalidSpec(format!(
                        "C={c} makes the almost-zero-order law non-concave at its knee"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Distribution function of the base variable.
    pub fn base_cdf(&self, t: f64) -> f64 {
        match self.family {
            Family::Uniform { .. } => t.clamp(0.0, 1.0),
            Family::Holder { beta } => t.clamp(0.0, 1.0).powf(beta),
            Family::AlmostZeroOrder { c, .. } => {
                let knee = azo_knee();
                if t <= 0.0 {
                    0.0
                } else if t <= knee {
                    azo_curve(c, t)
                } else if t < 1.0 {
                    let f_knee = azo_curve(c, knee);
                    f_knee + (1.0 - f_knee) * (t - knee) / (1.0 - knee)
                } else {
                    1.0
                }
            }
        }
    }

    /// Distribution function of the site potential.
    pub fn cdf(&self, v: f64) -> f64 {
        let lambda = self.amplitude;
        match self.family {
            Family::Uniform { a, b } => {
                let lo = lambda * a;
                let hi = lambda * b;
                if v < lo {
                    0.0
                } else if v >= hi {
                    1.0
                } else {
                    (v - lo) / (hi - lo)
                }
            }
            _ if lambda == 0.0 => {
                if v >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            _ => self.base_cdf(v / lambda),
        }
    }

    /// Maps a uniform variate on [0,1) to a potential value.
    pub fn quantile(&self, u: f64) -> f64 {
        let lambda = self.amplitude;
        match self.family {
            Family::Uniform { a, b } => lambda * (a + (b - a) * u),
            Family::Holder { beta: 1.0 } => lambda * u,
            Family::Holder { beta } => lambda * u.powf(1.0 / beta),
            Family::AlmostZeroOrder { .. } => {
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                while hi - lo > BISECTION_TOL {
                    let mid = 0.5 * (lo + hi);
                    if self.base_cdf(mid) < u {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lambda * 0.5 * (lo + hi)
            }
        }
    }

    /// Upper bound on `sup_t [F(t+eps) - F(t)]` for the site potential.
    pub fn continuity_modulus(&self, eps: f64) -> Result<f64, DisorderError> {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(DisorderError::EpsilonOutOfRange(eps));
        }
        let lambda = self.amplitude;
        let value = match self.family {
            Family::Uniform { a, b } => {
                let width = lambda * (b - a);
                if width > 0.0 {
                    eps / width
                } else {
                    1.0
                }
            }
            _ if lambda == 0.0 => 1.0,
            Family::Holder { beta } => (eps / lambda).powf(beta),
            // concave with F(0) = 0, so increments peak at the origin
            Family::AlmostZeroOrder { .. } => self.base_cdf(eps / lambda),
        };
        Ok(value.min(1.0))
    }

    /// `C' eps^{C / ln|ln eps|}`, the prescribed envelope of the modulus.
    pub fn modulus_envelope(&self, eps: f64) -> Option<f64> {
        match self.family {
            Family::AlmostZeroOrder { c, c_prime } => {
                Some(c_prime * eps.powf(c / eps.ln().abs().ln()))
            }
            _ => None,
        }
    }

    /// Lipschitz constant of the law, when it has a bounded density.
    pub fn density_sup(&self) -> Option<f64> {
        match self.family {
            Family::Uniform { a, b } if self.amplitude * (b - a) > 0.0 => {
                Some(1.0 / (self.amplitude * (b - a)))
            }
            Family::Holder { beta } if beta == 1.0 && self.amplitude > 0.0 => {
                Some(1.0 / self.amplitude)
            }
            _ => None,
        }
    }

    pub fn realization(&self, master_seed: u64, index: u64) -> DisorderRealization {
        DisorderRealization {
            spec: *self,
            master_seed,
            index,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream id of a site; dimension is folded in so `(0)` and `(0,0)` differ.
pub fn site_stream(x: &[i64]) -> u64 {
    x.iter().fold(splitmix64(x.len() as u64), |h, &c| {
        splitmix64(h ^ (c as u64))
    })
}

/// Uniform variate in [0,1) with 53 random bits.
pub fn uniform_at(master_seed: u64, index: u64, x: &[i64]) -> f64 {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(site_stream(x));
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Site potential as a function of position.
pub trait Potential: Sync {
    fn value(&self, x: &[i64]) -> Option<f64>;
}

/// One disorder sample, evaluated lazily at any site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisorderRealization {
    spec: DisorderSpec,
    master_seed: u64,
    index: u64,
}

impl DisorderRealization {
    pub fn spec(&self) -> &DisorderSpec {
        &self.spec
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn at(&self, x: &[i64]) -> f64 {
        self.spec
            .quantile(uniform_at(self.master_seed, self.index, x))
    }

    pub fn sample(&self, sites: &[LatticePoint]) -> Vec<f64> {
        sites.iter().map(|s| self.at(&s.0)).collect()
    }
}

impl Potential for DisorderRealization {
    fn value(&self, x: &[i64]) -> Option<f64> {
        Some(self.at(x))
    }
}

/// The same value everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPotential(pub f64);

impl Potential for ConstantPotential {
    fn value(&self, _x: &[i64]) -> Option<f64> {
        Some(self.0)
    }
}

/// Explicit finite table; sites outside are missing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TabulatedPotential(pub BTreeMap<LatticePoint, f64>);

impl Potential for TabulatedPotential {
    fn value(&self, x: &[i64]) -> Option<f64> {
        self.0.get(&LatticePoint(x.to_vec())).copied()
    }
}

impl<F: Fn(&[i64]) -> f64 + Sync> Potential for F {
    fn value(&self, x: &[i64]) -> Option<f64> {
        Some(self(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ks_statistic(spec: &DisorderSpec, samples: &mut [f64]) -> f64 {
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = samples.len() as f64;
        samples
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let f = spec.cdf(v);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    fn draws(spec: &DisorderSpec, seed: u64, n: usize) -> Vec<f64> {
        (0..n as u64)
            .map(|i| spec.realization(seed, i).at(&[0]))
            .collect()
    }

    #[test]
    fn quantile_examples() {
        let u = DisorderSpec::uniform(0.0, 1.0, 3.0).unwrap();
        assert_eq!(u.quantile(0.5), 1.5);
        let h = DisorderSpec::holder(0.5, 2.0).unwrap();
        assert_eq!(h.quantile(0.25), 2.0 * 0.0625);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(DisorderSpec::holder(0.0, 1.0).is_err());
        assert!(DisorderSpec::holder(1.5, 1.0).is_err());
        assert!(DisorderSpec::uniform(1.0, 0.0, 1.0).is_err());
        assert!(DisorderSpec::uniform(0.0, 1.0, -1.0).is_err());
        assert!(DisorderSpec::almost_zero_order(2.0, 1.0, 1.0).is_err());
        assert!(DisorderSpec::almost_zero_order(1.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn values_are_deterministic_and_site_keyed() {
        let spec = DisorderSpec::uniform(0.0, 1.0, 1.0).unwrap();
        let r = spec.realization(42, 7);
        assert_eq!(r.at(&[3, -2]).to_bits(), r.at(&[3, -2]).to_bits());
        assert_ne!(r.at(&[3, -2]), r.at(&[-2, 3]));
        assert_ne!(r.at(&[0]), r.at(&[0, 0]));
        assert_ne!(r.at(&[0]), spec.realization(42, 8).at(&[0]));
        assert_ne!(r.at(&[0]), spec.realization(43, 7).at(&[0]));
    }

    #[test]
    fn holder_one_is_uniform() {
        let u = DisorderSpec::uniform(0.0, 1.0, 2.5).unwrap();
        let h = DisorderSpec::holder(1.0, 2.5).unwrap();
        for i in 0..1000 {
            let x = [i as i64, 1 - i as i64];
            assert_eq!(
                u.realization(5, i).at(&x).to_bits(),
                h.realization(5, i).at(&x).to_bits()
            );
        }
    }

    #[test]
    fn modulus_examples() {
        let u = DisorderSpec::uniform(0.0, 1.0, 1.0).unwrap();
        assert!((u.continuity_modulus(0.01).unwrap() - 0.01).abs() < 1e-15);
        let h = DisorderSpec::holder(0.5, 1.0).unwrap();
        assert!((h.continuity_modulus(0.01).unwrap() - 0.1).abs() < 1e-15);
        let a = DisorderSpec::almost_zero_order(1.0, 1.0, 1.0).unwrap();
        let m = a.continuity_modulus(1e-6).unwrap();
        // oracle: 10^{-6 / ln ln 10^6} evaluated in extended precision
        assert!((m.log10() - (-2.285_024_935_495_442)).abs() < 1e-9, "{}", m.log10());
        assert!(m <= a.modulus_envelope(1e-6).unwrap() * (1.0 + 1e-12));
        assert!(u.continuity_modulus(0.5).is_err());
        assert!(u.continuity_modulus(0.0).is_err());
    }

    #[test]
    fn empirical_laws_match_within_ks_tolerance() {
        let specs = [
            DisorderSpec::uniform(0.0, 1.0, 1.0).unwrap(),
            DisorderSpec::uniform(-0.5, 0.5, 4.0).unwrap(),
            DisorderSpec::holder(0.5, 1.0).unwrap(),
            DisorderSpec::holder(0.25, 3.0).unwrap(),
            DisorderSpec::almost_zero_order(1.0, 1.0, 1.0).unwrap(),
        ];
        for (k, spec) in specs.iter().enumerate() {
            let mut s = draws(spec, 1000 + k as u64, 100_000);
            let d = ks_statistic(spec, &mut s);
            assert!(d < 0.01, "{spec:?}: KS {d}");
        }
    }

    #[test]
    fn almost_zero_order_level_sets_stay_below_modulus() {
        let spec = DisorderSpec::almost_zero_order(1.0, 1.0, 1.0).unwrap();
        let mut s = draws(&spec, 77, 100_000);
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = s.len();
        let slack = 0.01;
        for eps in [1e-2, 1e-3] {
            let mut worst = 0usize;
            let mut j = 0;
            for i in 0..n {
                while j < n && s[j] <= s[i] + eps {
                    j += 1;
                }
                worst = worst.max(j - i);
            }
            let frac = worst as f64 / n as f64;
            let bound = 2.0 * spec.continuity_modulus(eps).unwrap() + slack;
            assert!(frac <= bound, "eps={eps}: {frac} > {bound}");
        }
    }

    #[test]
    fn almost_zero_order_cdf_is_monotone_and_continuous() {
        let spec = DisorderSpec::almost_zero_order(1.5, 1.0, 1.0).unwrap();
        let mut prev = 0.0;
        for i in 1..=100_000 {
            let t = i as f64 / 100_000.0;
            let f = spec.base_cdf(t);
            assert!(f >= prev);
            prev = f;
        }
        let k = azo_knee();
        assert!((spec.base_cdf(k * (1.0 - 1e-12)) - spec.base_cdf(k * (1.0 + 1e-12))).abs() < 1e-9);
        let u = 0.3;
        let v = spec.quantile(u);
        assert!((spec.base_cdf(v) - u).abs() < 1e-12);
    }
}
