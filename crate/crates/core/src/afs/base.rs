use rug::float::Round;
use rug::ops::Pow;
use rug::{Integer, Rational};

use super::{AfsError, EngineSettings};
use crate::interval::{Interval, MIN_PRECISION};

/// Growth factor of the first scales; fixes `a_1 = (3*9 - 4)^d = 23^d`.
pub const INITIAL_GROWTH: u32 = 9;

/// Exact powers with exponents above this are only enclosed.
const MAX_EXACT_EXPONENT: u32 = 1_000_000;

const SWITCH_RETRIES: u32 = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum L0Choice {
    Value(Integer),
    AutoThreshold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseInput {
    pub d: u32,
    pub beta: Rational,
    pub b0: Rational,
    pub p0: Rational,
    pub l0: L0Choice,
    /// Free-form note on where `p0` came from.
    pub p0_provenance: String,
}

#[derive(Debug, Clone)]
pub struct BaseParams {
    pub d: u32,
    pub beta: Rational,
    pub b0: Rational,
    pub p0: Rational,
    pub p0_provenance: String,
    pub l0: Integer,
    pub l0_auto: bool,
    pub eta: Rational,
    pub s0: Rational,
    pub tau: Rational,
    pub a1: Integer,
    pub rho1: Rational,
    pub ln_p0_inv: Interval,
    pub ln_l0: Interval,
    pub theta0: Interval,
    pub sigma0: Interval,
    pub tau0: Interval,
    /// Last scale of the fixed-growth regime.
    pub switch_scale: u32,
    pub precision: u32,
}

#[derive(Debug, Clone)]
pub struct ThresholdCandidate {
    pub name: &'static str,
    pub exponent: Rational,
    pub exact: Option<Integer>,
    pub ln: Interval,
}

#[derive(Debug, Clone)]
pub struct L0Threshold {
    pub candidates: Vec<ThresholdCandidate>,
    pub max_index: usize,
    /// The maximum dominates every other candidate with certainty.
    pub max_certain: bool,
    /// Smallest integer certified to be at least the maximum.
    pub auto_value: Integer,
}

impl L0Threshold {
    pub fn max(&self) -> &ThresholdCandidate {
        &self.candidates[self.max_index]
    }

    pub fn max_log2(&self) -> Interval {
        let p = self.max().ln.prec();
        self.max()
            .ln
            .div(&Interval::int(2, p).ln().expect("ln 2"))
            .expect("ln 2 is positive")
    }

    /// Certifies `l0 >= every candidate`.
    pub fn admits(&self, l0: &Integer) -> bool {
        let p = self.max().ln.prec();
        let ln_l0 = Interval::integer(l0, p).ln();
        self.candidates.iter().all(|c| match (&c.exact, &ln_l0) {
            (Some(n), _) => l0 >= n,
            (None, Ok(ln)) => ln.certainly_ge(&c.ln),
            (None, Err(_)) => false,
        })
    }
}

fn check_prec(prec: u32) -> Result<(), AfsError> {
    if prec < MIN_PRECISION {
        return Err(AfsError::PrecisionTooLow(prec));
    }
    Ok(())
}

fn validate_core(d: u32, beta: &Rational, b0: &Rational, p0: &Rational) -> Result<Rational, AfsError> {
    if d == 0 {
        return Err(AfsError::InvalidDimension);
    }
    if *beta <= 0 || *beta > 1 {
        return Err(AfsError::InvalidBeta(beta.clone()));
    }
    let bound = Rational::from(d) / beta.clone();
    if *b0 <= bound {
        return Err(AfsError::InvalidB0 {
            b0: b0.clone(),
            bound,
        });
    }
    if *p0 <= 0 {
        return Err(AfsError::NonPositiveP0);
    }
    let limit = Rational::from((1, Integer::from(23).pow(2 * d)));
    if *p0 >= limit {
        return Err(AfsError::ThresholdViolated {
            p0: p0.clone(),
            bound: limit,
        });
    }
    Ok((beta.clone() * b0.clone() - d) / 2)
}

fn power_candidate(
    name: &'static str,
    base: &Rational,
    exponent: Rational,
    prec: u32,
) -> Result<ThresholdCandidate, AfsError> {
    let integral_exponent = exponent
        .is_integer()
        .then(|| exponent.numer().to_u32())
        .flatten()
        .filter(|&e| e <= MAX_EXACT_EXPONENT);
    let exact = match integral_exponent {
        Some(e) if base.is_integer() => Some(base.numer().clone().pow(e)),
        _ => None,
    };
    let ln = match &exact {
        Some(n) => Interval::integer(n, prec).ln()?,
        None => Interval::rational(base, prec)
            .ln()?
            .mul(&Interval::rational(&exponent, prec)),
    };
    Ok(ThresholdCandidate {
        name,
        exponent,
        exact,
        ln,
    })
}

/// The four lower bounds on `L0` and their maximum.
pub fn l0_threshold(d: u32, beta: &Rational, b0: &Rational, p0: &Rational, prec: u32) -> Result<L0Threshold, AfsError> {
    check_prec(prec)?;
    let eta = validate_core(d, beta, b0, p0)?;
    let p0_inv = Rational::from(p0.recip_ref());
    let d_r = Rational::from(d);
    let candidates = vec![
        power_candidate(
            "11^(1/tau^2)",
            &Rational::from(11),
            Rational::from(256 * d * d),
            prec,
        )?,
        power_candidate(
            "9^(4(6d+eta)/eta)",
            &Rational::from(9),
            Rational::from(4) * (Rational::from(6) * d_r + eta.clone()) / eta.clone(),
            prec,
        )?,
        power_candidate(
            "p0^(-8/(3eta))",
            &p0_inv,
            Rational::from(8) / (Rational::from(3) * eta.clone()),
            prec,
        )?,
        power_candidate("p0^(-8/b0)", &p0_inv, Rational::from(8) / b0.clone(), prec)?,
    ];
    let max_index = (0..candidates.len())
        .max_by(|&i, &j| candidates[i].ln.hi().partial_cmp(candidates[j].ln.hi()).unwrap())
        .expect("non-empty");
    let top = &candidates[max_index];
    let max_certain = candidates.iter().enumerate().all(|(i, c)| {
        i == max_index
            || top.ln.certainly_ge(&c.ln)
            || matches!((&top.exact, &c.exact), (Some(a), Some(b)) if a >= b)
    });
    let auto_value = match &top.exact {
        Some(n) if max_certain => n.clone(),
        _ => {
            // ceil(exp(max over all upper ends)) dominates every candidate
            let hi = candidates
                .iter()
                .map(|c| c.ln.hi().clone())
                .reduce(|a, b| a.max(&b))
                .unwrap();
            let mut e = rug::Float::with_val(prec, hi);
            e.exp_round(Round::Up);
            e.to_integer_round(Round::Up).expect("finite").0
        }
    };
    Ok(L0Threshold {
        candidates,
        max_index,
        max_certain,
        auto_value,
    })
}

/// Derived constants of the recursion.
pub fn derive_base(input: &BaseInput, settings: &EngineSettings) -> Result<BaseParams, AfsError> {
    check_prec(settings.precision)?;
    let eta = validate_core(input.d, &input.beta, &input.b0, &input.p0)?;
    let (l0, l0_auto) = match &input.l0 {
        L0Choice::Value(n) => (n.clone(), false),
        L0Choice::AutoThreshold => (
            l0_threshold(input.d, &input.beta, &input.b0, &input.p0, settings.precision)?.auto_value,
            true,
        ),
    };
    if l0 < 2 {
        return Err(AfsError::InvalidL0);
    }
    let mut prec = settings.precision;
    for _ in 0..SWITCH_RETRIES {
        if let Some(base) = try_derive(input, &eta, &l0, l0_auto, prec)? {
            return Ok(base);
        }
        prec *= 2;
    }
    Err(AfsError::AmbiguousSwitch { bits: prec / 2 })
}

fn try_derive(
    input: &BaseInput,
    eta: &Rational,
    l0: &Integer,
    l0_auto: bool,
    prec: u32,
) -> Result<Option<BaseParams>, AfsError> {
    let d = input.d;
    let a1 = Integer::from(3 * INITIAL_GROWTH - 4).pow(d);
    let p0_inv = Rational::from(input.p0.recip_ref());
    let ln_p0_inv = Interval::rational(&p0_inv, prec).ln()?;
    let ln_a1 = Interval::integer(&a1, prec).ln()?;
    let ln_l0 = Interval::integer(l0, prec).ln()?;
    let one = Interval::int(1, prec);

    // 1 - ln a1 / ln p0^{-1} = (1 + 3 theta0) / 2
    let theta0 = one
        .sub(&ln_a1.div(&ln_p0_inv)?.scale_int(2))
        .div(&Interval::int(3, prec))?;
    if !(theta0.is_positive() && theta0.certainly_lt(&Interval::ratio(1, 3, prec))) {
        return Err(AfsError::ThetaOutOfRange);
    }
    let sigma0 = ln_p0_inv.div(&ln_l0)?;

    // least k >= 1 with k ln(1 + theta0) >= ln(2d / sigma0)
    let step = one.add(&theta0).ln()?;
    let target = Interval::int(2 * d as i64, prec).div(&sigma0)?.ln()?;
    let mut k = 1u32;
    let switch_scale = loop {
        let lhs = step.scale_int(k as i64);
        if lhs.certainly_ge(&target) {
            break k;
        }
        if !lhs.certainly_lt(&target) {
            return Ok(None);
        }
        k += 1;
    };

    let tau = Rational::from((1, 16 * d));
    let three_theta = theta0.scale_int(3);
    let tau0 = Interval::int(INITIAL_GROWTH as i64, prec)
        .ln()?
        .div(&ln_l0)?
        .min(&three_theta.div(&one.add(&three_theta))?)
        .min(&Interval::rational(&tau, prec));

    let s0 = input.b0.clone() - eta.clone() / input.beta.clone();
    Ok(Some(BaseParams {
        d,
        beta: input.beta.clone(),
        b0: input.b0.clone(),
        p0: input.p0.clone(),
        p0_provenance: input.p0_provenance.clone(),
        l0: l0.clone(),
        l0_auto,
        eta: eta.clone(),
        s0,
        tau,
        a1,
        rho1: eta.clone() / 2,
        ln_p0_inv,
        ln_l0,
        theta0,
        sigma0,
        tau0,
        switch_scale,
        precision: prec,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rug::Float;

    const P: u32 = 256;

    pub(crate) fn reference_input() -> BaseInput {
        BaseInput {
            d: 1,
            beta: Rational::from(1),
            b0: Rational::from(5),
            p0: Rational::from((1, Integer::from(23).pow(4))),
            l0: L0Choice::Value(Integer::from(11).pow(256)),
            p0_provenance: "exact".into(),
        }
    }

    #[test]
    fn reference_constants() {
        let base = derive_base(&reference_input(), &EngineSettings::default()).unwrap();
        assert_eq!(base.eta, 2);
        assert_eq!(base.s0, 3);
        assert_eq!(base.rho1, 1);
        assert_eq!(base.a1, 23);
        assert_eq!(base.tau, Rational::from((1, 16)));
        let sixth = Float::with_val(P, Rational::from((1, 6)));
        assert!(base.theta0.contains(&sixth));
        assert!(base.theta0.rel_width() < 1e-70);
        // 4 ln 23 / (256 ln 11), extended-precision oracle
        let sigma0 = Float::with_val(P, Float::parse("0.0204312914244660234").unwrap());
        assert!((Float::with_val(P, base.sigma0.lo() - &sigma0)).abs() < 1e-19);
        assert_eq!(base.switch_scale, 30);
    }

    #[test]
    fn input_validation() {
        let s = EngineSettings::default();
        let mut bad = reference_input();
        bad.p0 = Rational::from((1, 23));
        assert!(matches!(derive_base(&bad, &s), Err(AfsError::ThresholdViolated { .. })));
        bad.p0 = Rational::from((1, 529));
        assert!(matches!(derive_base(&bad, &s), Err(AfsError::ThresholdViolated { .. })));
        let mut bad = reference_input();
        bad.b0 = Rational::from(1);
        assert!(matches!(derive_base(&bad, &s), Err(AfsError::InvalidB0 { .. })));
        let mut bad = reference_input();
        bad.beta = Rational::from(0);
        assert!(matches!(derive_base(&bad, &s), Err(AfsError::InvalidBeta(_))));
        let mut bad = reference_input();
        bad.l0 = L0Choice::Value(Integer::from(1));
        assert!(matches!(derive_base(&bad, &s), Err(AfsError::InvalidL0)));
        let low = EngineSettings {
            precision: 100,
            ..s
        };
        assert!(matches!(
            derive_base(&reference_input(), &low),
            Err(AfsError::PrecisionTooLow(100))
        ));
    }

    #[test]
    fn reference_threshold_candidates() {
        let i = reference_input();
        let t = l0_threshold(1, &i.beta, &i.b0, &i.p0, P).unwrap();
        assert_eq!(t.candidates[0].exact, Some(Integer::from(11).pow(256)));
        assert_eq!(t.candidates[1].exact, Some(Integer::from(9).pow(16)));
        assert_eq!(t.candidates[2].exponent, Rational::from((4, 3)));
        assert_eq!(t.candidates[2].exact, None);
        assert_eq!(t.candidates[3].exponent, Rational::from((8, 5)));
        // 23^{16/3} and 23^{32/5}
        let ln23 = Interval::int(23, P).ln().unwrap();
        assert!(t.candidates[2].ln.sub(&ln23.scale_rational(&Rational::from((16, 3)))).contains_zero());
        assert!(t.candidates[3].ln.sub(&ln23.scale_rational(&Rational::from((32, 5)))).contains_zero());
        assert_eq!(t.max_index, 0);
        assert!(t.max_certain);
        assert_eq!(t.auto_value, Integer::from(11).pow(256));
        assert!(t.admits(&Integer::from(11).pow(256)));
        assert!(!t.admits(&(Integer::from(11).pow(256) - 1u32)));
        for c in &t.candidates {
            assert!(t.max().ln.certainly_ge(&c.ln) || c.name == t.max().name);
        }
        let log2 = t.max_log2();
        assert!((log2.mid_f64() - 256.0 * 11f64.log2()).abs() < 1e-9);
    }

    #[test]
    fn auto_threshold_covers_non_integral_maximum() {
        // tiny p0 makes p0^{-8/b0} dominate; 8/5 is not integral
        let p0 = Rational::from((1, Integer::from(10).pow(4000)));
        let t = l0_threshold(1, &Rational::from(1), &Rational::from(5), &p0, P).unwrap();
        assert_eq!(t.max().name, "p0^(-8/b0)");
        assert!(t.max().exact.is_none());
        assert!(t.admits(&t.auto_value));
        let mut input = reference_input();
        input.p0 = p0;
        input.l0 = L0Choice::AutoThreshold;
        let base = derive_base(&input, &EngineSettings::default()).unwrap();
        assert!(base.l0_auto);
        assert_eq!(base.l0, t.auto_value);
    }
}
