//! Closed intervals of MPFR floats with outward rounding.
//!
//! Every operation rounds the lower endpoint down and the upper endpoint up,
//! so the true value of any composed expression stays enclosed.

use std::cmp::Ordering;
use std::fmt;

use rug::float::Round;
use rug::{Float, Integer, Rational};
use thiserror::Error;

/// 50 decimal digits need 167 bits; the default leaves ample headroom.
pub const DEFAULT_PRECISION: u32 = 256;
pub const MIN_PRECISION: u32 = 167;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IntervalError {
    #[error("{op} undefined on [{lo}, {hi}]")]
    Domain { op: &'static str, lo: String, hi: String },
}

#[derive(Clone, PartialEq)]
pub struct Interval {
    lo: Float,
    hi: Float,
}

fn down<T>(prec: u32, v: T) -> Float
where
    Float: rug::ops::AssignRound<T, Round = Round, Ordering = Ordering>,
{
    Float::with_val_round(prec, v, Round::Down).0
}

fn up<T>(prec: u32, v: T) -> Float
where
    Float: rug::ops::AssignRound<T, Round = Round, Ordering = Ordering>,
{
    Float::with_val_round(prec, v, Round::Up).0
}

impl Interval {
    pub fn from_bounds(lo: Float, hi: Float) -> Self {
        debug_assert!(lo <= hi);
        Interval { lo, hi }
    }

    pub fn integer(n: &Integer, prec: u32) -> Self {
        Interval {
            lo: down(prec, n),
            hi: up(prec, n),
        }
    }

    pub fn int(n: i64, prec: u32) -> Self {
        Self::integer(&Integer::from(n), prec)
    }

    pub fn rational(q: &Rational, prec: u32) -> Self {
        Interval {
            lo: down(prec, q),
            hi: up(prec, q),
        }
    }

    pub fn ratio(num: i64, den: i64, prec: u32) -> Self {
        Self::rational(&Rational::from((num, den)), prec)
    }

    pub fn prec(&self) -> u32 {
        self.lo.prec().max(self.hi.prec())
    }

    pub fn lo(&self) -> &Float {
        &self.lo
    }

    pub fn hi(&self) -> &Float {
        &self.hi
    }

    pub fn lo_f64(&self) -> f64 {
        self.lo.to_f64_round(Round::Down)
    }

    pub fn hi_f64(&self) -> f64 {
        self.hi.to_f64_round(Round::Up)
    }

    pub fn mid_f64(&self) -> f64 {
        let p = self.prec();
        Float::with_val(p, &self.lo + &self.hi).to_f64() / 2.0
    }

    pub fn width(&self) -> Float {
        up(self.prec(), &self.hi - &self.lo)
    }

    /// Width relative to the larger endpoint magnitude.
    pub fn rel_width(&self) -> f64 {
        let scale = self.lo.clone().abs().max(&self.hi.clone().abs());
        if scale.is_zero() {
            return 0.0;
        }
        (self.width() / scale).to_f64()
    }

    pub fn add(&self, o: &Interval) -> Interval {
        let p = self.prec().max(o.prec());
        Interval {
            lo: down(p, &self.lo + &o.lo),
            hi: up(p, &self.hi + &o.hi),
        }
    }

    pub fn sub(&self, o: &Interval) -> Interval {
        let p = self.prec().max(o.prec());
        Interval {
            lo: down(p, &self.lo - &o.hi),
            hi: up(p, &self.hi - &o.lo),
        }
    }

    pub fn neg(&self) -> Interval {
        Interval {
            lo: -self.hi.clone(),
            hi: -self.lo.clone(),
        }
    }

    pub fn mul(&self, o: &Interval) -> Interval {
        let p = self.prec().max(o.prec());
        let pairs = [
            (&self.lo, &o.lo),
            (&self.lo, &o.hi),
            (&self.hi, &o.lo),
            (&self.hi, &o.hi),
        ];
        let lo = pairs
            .iter()
            .map(|(a, b)| down(p, *a * *b))
            .reduce(|a, b| a.min(&b))
            .unwrap();
        let hi = pairs
            .iter()
            .map(|(a, b)| up(p, *a * *b))
            .reduce(|a, b| a.max(&b))
            .unwrap();
        Interval { lo, hi }
    }

    pub fn div(&self, o: &Interval) -> Result<Interval, IntervalError> {
        if o.contains_zero() {
            return Err(self.domain("division", o));
        }
        let p = self.prec().max(o.prec());
        let recip = Interval {
            lo: down(p, 1 / &o.hi),
            hi: up(p, 1 / &o.lo),
        };
        Ok(self.mul(&recip))
    }

    pub fn scale_int(&self, n: i64) -> Interval {
        self.mul(&Interval::int(n, self.prec()))
    }

    pub fn scale_rational(&self, q: &Rational) -> Interval {
        self.mul(&Interval::rational(q, self.prec()))
    }

    pub fn ln(&self) -> Result<Interval, IntervalError> {
        if self.lo <= 0 {
            return Err(self.domain("ln", self));
        }
        let mut lo = self.lo.clone();
        let mut hi = self.hi.clone();
        lo.ln_round(Round::Down);
        hi.ln_round(Round::Up);
        Ok(Interval { lo, hi })
    }

    pub fn exp(&self) -> Interval {
        let mut lo = self.lo.clone();
        let mut hi = self.hi.clone();
        lo.exp_round(Round::Down);
        hi.exp_round(Round::Up);
        Interval { lo, hi }
    }

    /// `ln(e^a + e^b)`, monotone in both arguments.
    pub fn log_sum_exp(&self, o: &Interval) -> Interval {
        let p = self.prec().max(o.prec());
        let lse = |a: &Float, b: &Float, r: Round| -> Float {
            let (m, s) = if a >= b { (a, b) } else { (b, a) };
            let mut t = Float::with_val_round(p, s - m, r).0;
            t.exp_round(r);
            t.ln_1p_round(r);
            Float::with_val_round(p, m + &t, r).0
        };
        Interval {
            lo: lse(&self.lo, &o.lo, Round::Down),
            hi: lse(&self.hi, &o.hi, Round::Up),
        }
    }

    /// `floor(x)`, enclosed: exact when both endpoints share a floor.
    pub fn floor(&self) -> Interval {
        let mut lo = self.lo.clone();
        let mut hi = self.hi.clone();
        lo.floor_mut();
        hi.floor_mut();
        Interval { lo, hi }
    }

    pub fn max(&self, o: &Interval) -> Interval {
        Interval {
            lo: self.lo.clone().max(&o.lo),
            hi: self.hi.clone().max(&o.hi),
        }
    }

    pub fn min(&self, o: &Interval) -> Interval {
        Interval {
            lo: self.lo.clone().min(&o.lo),
            hi: self.hi.clone().min(&o.hi),
        }
    }

    pub fn contains_zero(&self) -> bool {
        self.lo <= 0 && self.hi >= 0
    }

    pub fn contains(&self, x: &Float) -> bool {
        &self.lo <= x && x <= &self.hi
    }

    pub fn is_positive(&self) -> bool {
        self.lo > 0
    }

    /// Every point of `self` is strictly below every point of `o`.
    pub fn certainly_lt(&self, o: &Interval) -> bool {
        self.hi < o.lo
    }

    pub fn certainly_le(&self, o: &Interval) -> bool {
        self.hi <= o.lo
    }

    pub fn certainly_gt(&self, o: &Interval) -> bool {
        o.certainly_lt(self)
    }

    pub fn certainly_ge(&self, o: &Interval) -> bool {
        o.certainly_le(self)
    }

    /// Decimal rendering of both endpoints with `digits` significant digits.
    pub fn bounds_string(&self, digits: usize) -> (String, String) {
        (
            self.lo.to_string_radix_round(10, Some(digits), Round::Down),
            self.hi.to_string_radix_round(10, Some(digits), Round::Up),
        )
    }

    fn domain(&self, op: &'static str, at: &Interval) -> IntervalError {
        let _ = self;
        let (lo, hi) = at.bounds_string(12);
        IntervalError::Domain { op, lo, hi }
    }
}

impl fmt::Debug for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (lo, hi) = self.bounds_string(20);
        write!(f, "[{lo}, {hi}]")
    }
}
