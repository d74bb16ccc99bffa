use rug::ops::Pow;
use rug::{Float, Integer, Rational};

use super::base::{BaseParams, INITIAL_GROWTH};
use super::{AfsError, EngineSettings, GrowthIndexing};
use crate::interval::Interval;

/// A size: exact big integer, or an enclosure once past the exact range.
#[derive(Debug, Clone)]
pub enum Count {
    Exact(Integer),
    Enclosed(Interval),
}

/// A rational quantity, exact or enclosed.
#[derive(Debug, Clone)]
pub enum Ratio {
    Exact(Rational),
    Enclosed(Interval),
}

/// Multiplicative update of sigma or rho. `1 + theta0` is always enclosed.
pub type Factor = Ratio;

fn render_float(x: &Float) -> String {
    x.to_string_radix(10, Some(20))
}

impl Count {
    pub fn exact(&self) -> Option<&Integer> {
        match self {
            Count::Exact(n) => Some(n),
            Count::Enclosed(_) => None,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Count::Exact(_))
    }

    pub fn interval(&self, prec: u32) -> Interval {
        match self {
            Count::Exact(n) => Interval::integer(n, prec),
            Count::Enclosed(i) => i.clone(),
        }
    }

    pub fn ln(&self, prec: u32) -> Result<Interval, AfsError> {
        Ok(self.interval(prec).ln()?)
    }

    /// Full digits when short, otherwise a 20-digit float (or interval).
    pub fn render(&self) -> String {
        match self {
            Count::Exact(n) if n.significant_bits() <= 200 => n.to_string(),
            Count::Exact(n) => render_float(&Float::with_val(128, n)),
            Count::Enclosed(i) => format!("{i:?}"),
        }
    }

    fn add_int(&self, k: i64, prec: u32) -> Count {
        match self {
            Count::Exact(n) => Count::Exact(n.clone() + k),
            Count::Enclosed(i) => Count::Enclosed(i.add(&Interval::int(k, prec))),
        }
    }
}

impl Ratio {
    pub fn exact(&self) -> Option<&Rational> {
        match self {
            Ratio::Exact(q) => Some(q),
            Ratio::Enclosed(_) => None,
        }
    }

    pub fn interval(&self, prec: u32) -> Interval {
        match self {
            Ratio::Exact(q) => Interval::rational(q, prec),
            Ratio::Enclosed(i) => i.clone(),
        }
    }

    pub fn render(&self) -> String {
        match self {
            Ratio::Exact(q) if q.numer().significant_bits() + q.denom().significant_bits() <= 200 => q.to_string(),
            Ratio::Exact(q) => render_float(&Float::with_val(128, q)),
            Ratio::Enclosed(i) => format!("{i:?}"),
        }
    }

    /// `self * q * n`, exact when both factors are.
    fn times(&self, q: &Rational, n: &Count, prec: u32) -> Ratio {
        match (self, n) {
            (Ratio::Exact(a), Count::Exact(m)) => Ratio::Exact(a.clone() * q.clone() * m.clone()),
            _ => Ratio::Enclosed(self.interval(prec).scale_rational(q).mul(&n.interval(prec))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScaleRecord {
    pub k: u32,
    /// `Y_k`; absent at `k = 0`, like every per-step quantity below.
    pub growth: Option<Count>,
    /// `S_k`, the number of singular sub-cubes tolerated.
    pub budget: Option<Count>,
    /// `N_k = Y_k - 5 S_k - 1`.
    pub good: Option<Count>,
    /// `L_k`.
    pub size: Count,
    pub ln_size: Interval,
    /// `a_k = (3 Y_k - 4)^d`.
    pub cells: Option<Count>,
    pub b: Ratio,
    pub s: Ratio,
    /// `A_k = (4/5)^k N_1 ... N_k`.
    pub amplification: Ratio,
    pub sigma_factor: Option<Factor>,
    pub rho_factor: Option<Factor>,
    pub sigma: Interval,
    pub rho: Option<Interval>,
    /// `ln q_k = ln 2 - rho_k ln L_k`.
    pub ln_q: Option<Interval>,
}

impl ScaleRecord {
    pub fn is_exact(&self) -> bool {
        self.size.is_exact()
    }
}

pub fn initial_record(base: &BaseParams) -> ScaleRecord {
    ScaleRecord {
        k: 0,
        growth: None,
        budget: None,
        good: None,
        size: Count::Exact(base.l0.clone()),
        ln_size: base.ln_l0.clone(),
        cells: None,
        b: Ratio::Exact(base.b0.clone()),
        s: Ratio::Exact(base.s0.clone()),
        amplification: Ratio::Exact(Rational::from(1)),
        sigma_factor: None,
        rho_factor: None,
        sigma: base.sigma0.clone(),
        rho: None,
        ln_q: None,
    }
}

fn enclosed_growth(prev: &ScaleRecord, base: &BaseParams) -> Result<(Count, Count, Count), AfsError> {
    let p = base.precision;
    let y = prev.ln_size.scale_rational(&base.tau).exp().floor();
    let s = y.div(&Interval::int(INITIAL_GROWTH as i64, p))?.floor();
    let naive = y.sub(&s.scale_int(5)).sub(&Interval::int(1, p));
    // floor(Y/9) in [Y/9 - 8/9, Y/9] gives N in [4Y/9 - 1, 4Y/9 + 31/9]
    let four_ninths = Rational::from((4, 9));
    let lo = y.scale_rational(&four_ninths).sub(&Interval::int(1, p));
    let hi = y.scale_rational(&four_ninths).add(&Interval::int(4, p));
    let n = Interval::from_bounds(naive.lo().clone().max(lo.lo()), naive.hi().clone().min(hi.hi()));
    Ok((Count::Enclosed(y), Count::Enclosed(s), Count::Enclosed(n)))
}

fn adaptive_factor(budget: &Count, prec: u32) -> Factor {
    let two_thirds = Rational::from((2, 3));
    match budget {
        Count::Exact(s) => Ratio::Exact(two_thirds * (s.clone() + 1u32)),
        Count::Enclosed(i) => Ratio::Enclosed(i.add(&Interval::int(1, prec)).scale_rational(&two_thirds)),
    }
}

/// One step of the recursion, scale `k` to `k + 1`.
pub fn advance_scale(prev: &ScaleRecord, base: &BaseParams, settings: &EngineSettings) -> Result<ScaleRecord, AfsError> {
    let p = base.precision;
    let j = prev.k + 1;
    let switch = base.switch_scale;
    let exact_mode = j <= settings.exact_max_k && prev.size.is_exact();

    let (growth, budget, good) = if j <= switch {
        (Count::Exact(Integer::from(INITIAL_GROWTH)), Count::Exact(Integer::from(1)), Count::Exact(Integer::from(3)))
    } else if let (true, Count::Exact(l)) = (exact_mode, &prev.size) {
        let y = l.clone().root(16 * base.d);
        let s = Integer::from(&y / INITIAL_GROWTH);
        let n = y.clone() - Integer::from(5u32 * &s) - 1u32;
        (Count::Exact(y), Count::Exact(s), Count::Exact(n))
    } else {
        enclosed_growth(prev, base)?
    };

    let (size, ln_size) = match (&growth, &prev.size) {
        (Count::Exact(y), Count::Exact(l)) if exact_mode => {
            let size = Integer::from(y * l);
            let ln = Interval::integer(&size, p).ln()?;
            (Count::Exact(size), ln)
        }
        _ => {
            let ln = prev.ln_size.add(&growth.ln(p)?);
            (Count::Enclosed(ln.exp()), ln)
        }
    };

    let cells = match &growth {
        Count::Exact(y) => Count::Exact((Integer::from(3u32 * y) - 4u32).pow(base.d)),
        Count::Enclosed(y) => {
            let side = y.scale_int(3).sub(&Interval::int(4, p));
            Count::Enclosed((1..base.d).fold(side.clone(), |acc, _| acc.mul(&side)))
        }
    };

    let four_fifths = Rational::from((4, 5));
    let amplification = prev.amplification.times(&four_fifths, &good, p);
    let b = prev.b.times(&four_fifths, &good, p);
    let s = match &b {
        Ratio::Exact(q) => Ratio::Exact(Rational::from((5, 6)) * q.clone()),
        Ratio::Enclosed(i) => Ratio::Enclosed(i.scale_rational(&Rational::from((5, 6)))),
    };

    let adaptive_budget = match settings.indexing {
        GrowthIndexing::Delayed => prev.budget.as_ref(),
        GrowthIndexing::Table => Some(&budget),
    };
    let (sigma_factor, rho_factor) = if j <= switch + 1 {
        let rho_factor = (j >= 2).then(|| Ratio::Exact(Rational::from((4, 3))));
        (Ratio::Enclosed(Interval::int(1, p).add(&base.theta0)), rho_factor)
    } else {
        let f = adaptive_factor(adaptive_budget.expect("budget exists past the first scale"), p);
        (f.clone(), Some(f))
    };

    let sigma = prev.sigma.mul(&sigma_factor.interval(p));
    let rho = match (&prev.rho, &rho_factor) {
        (Some(r), Some(f)) => r.mul(&f.interval(p)),
        _ => Interval::rational(&base.rho1, p),
    };
    let ln_2 = Interval::int(2, p).ln()?;
    let ln_q = ln_2.sub(&rho.mul(&ln_size));

    Ok(ScaleRecord {
        k: j,
        growth: Some(growth),
        budget: Some(budget),
        good: Some(good),
        size,
        ln_size,
        cells: Some(cells),
        b,
        s,
        amplification,
        sigma_factor: Some(sigma_factor),
        rho_factor,
        sigma,
        rho: Some(rho),
        ln_q: Some(ln_q),
    })
}

/// Records for scales `0..=k_max`.
pub fn build_records(base: &BaseParams, k_max: u32, settings: &EngineSettings) -> Result<Vec<ScaleRecord>, AfsError> {
    let mut records = Vec::with_capacity(k_max as usize + 1);
    records.push(initial_record(base));
    for _ in 0..k_max {
        let next = advance_scale(records.last().unwrap(), base, settings)?;
        records.push(next);
    }
    Ok(records)
}

/// `L^{-b} = exp(-L^delta)` and `L^{-sigma} = exp(-L^kappa)`.
#[derive(Debug, Clone)]
pub struct EslExponents {
    pub delta: Interval,
    pub kappa: Interval,
    /// `(ln(S + 1) - ln(3/2)) / ln Y`, from scale 1 on.
    pub delta_lower: Option<Interval>,
    /// `b ln L > 1` with certainty; otherwise `delta <= 0` may hold.
    pub defined: bool,
}

pub fn esl_exponents(record: &ScaleRecord, prec: u32) -> Result<EslExponents, AfsError> {
    let ln_l = &record.ln_size;
    let b_ln = record.b.interval(prec).mul(ln_l);
    let defined = b_ln.certainly_gt(&Interval::int(1, prec));
    let delta = b_ln.ln()?.div(ln_l)?;
    let kappa = record.sigma.mul(ln_l).ln()?.div(ln_l)?;
    let delta_lower = match (&record.budget, &record.growth) {
        (Some(s), Some(y)) => {
            let num = s.add_int(1, prec).ln(prec)?.sub(&Interval::ratio(3, 2, prec).ln()?);
            Some(num.div(&y.ln(prec)?)?)
        }
        _ => None,
    };
    Ok(EslExponents {
        delta,
        kappa,
        delta_lower,
        defined,
    })
}

#[cfg(test)]
mod tests {
    use super::super::base::{derive_base, BaseInput, L0Choice};
    use super::*;

    fn reference(settings: &EngineSettings) -> BaseParams {
        let input = BaseInput {
            d: 1,
            beta: Rational::from(1),
            b0: Rational::from(5),
            p0: Rational::from((1, Integer::from(23).pow(4))),
            l0: L0Choice::Value(Integer::from(11).pow(256)),
            p0_provenance: "exact".into(),
        };
        derive_base(&input, settings).unwrap()
    }

    fn bisection_root(n: u64, k: u32) -> u64 {
        let (mut lo, mut hi) = (0u64, 1u64);
        while (hi as u128).pow(k) <= n as u128 {
            hi *= 2;
        }
        while hi - lo > 1 {
            let m = (lo + hi) / 2;
            if (m as u128).pow(k) <= n as u128 {
                lo = m;
            } else {
                hi = m;
            }
        }
        lo
    }

    #[test]
    fn first_step() {
        let s = EngineSettings::default();
        let base = reference(&s);
        let r = build_records(&base, 2, &s).unwrap();
        let one = &r[1];
        assert_eq!(one.growth.as_ref().unwrap().exact().unwrap(), &9);
        assert_eq!(one.good.as_ref().unwrap().exact().unwrap(), &3);
        assert_eq!(one.b.exact().unwrap(), &12);
        assert_eq!(one.s.exact().unwrap(), &10);
        assert!(one.rho_factor.is_none());
        assert!(one.rho.as_ref().unwrap().contains(&Float::with_val(256, 1)));
        // rho_2 = (4/3) rho_1 = 2 eta / 3
        let rho2 = r[2].rho.as_ref().unwrap();
        assert!(rho2.sub(&Interval::ratio(4, 3, 256)).contains_zero());
        assert_eq!(r[2].size.exact().unwrap(), &(Integer::from(11).pow(256) * 81u32));
    }

    #[test]
    fn root_after_switch_matches_bisection() {
        let s = EngineSettings::default();
        let base = reference(&s);
        let r = build_records(&base, 31, &s).unwrap();
        let l30 = Integer::from(11).pow(256) * Integer::from(9).pow(30);
        assert_eq!(r[30].size.exact().unwrap(), &l30);
        let y = r[31].growth.as_ref().unwrap().exact().unwrap().clone();
        assert!(Integer::from((&y).pow(16u32)) <= l30);
        assert!(Integer::from(&y + 1u32).pow(16) > l30);
        // leading digits from the bisection oracle
        assert_eq!(y.to_string().len(), 19);
        assert_eq!(r[31].budget.as_ref().unwrap().exact().unwrap(), &Integer::from(&y / 9u32));
    }

    #[test]
    fn integer_root_exhaustive_small() {
        for k in [16u32, 32, 48] {
            for n in 1..=1_000_000u64 {
                let r = Integer::from(n).root(k);
                assert_eq!(r, bisection_root(n, k), "n={n} k={k}");
            }
        }
    }

    #[test]
    fn closed_form_matches_recursion() {
        let s = EngineSettings::default();
        let base = reference(&s);
        let r = build_records(&base, 60, &s).unwrap();
        for rec in &r {
            let closed = rec.amplification.exact().unwrap().clone() * base.b0.clone();
            assert_eq!(&closed, rec.b.exact().unwrap());
        }
        // b_30 = (12/5)^30 * 5
        assert_eq!(r[30].b.exact().unwrap(), &(Rational::from((12, 5)).pow(30) * 5u32));
    }

    #[test]
    fn enclosed_mode_tracks_exact_mode() {
        let exact = EngineSettings::default();
        let mixed = EngineSettings {
            exact_max_k: 32,
            ..exact
        };
        let base = reference(&exact);
        let a = build_records(&base, 45, &exact).unwrap();
        let b = build_records(&base, 45, &mixed).unwrap();
        assert!(b[32].is_exact() && !b[33].is_exact());
        for k in 33..=45 {
            let exact_y = Float::with_val(256, a[k].growth.as_ref().unwrap().exact().unwrap());
            assert!(b[k].growth.as_ref().unwrap().interval(256).contains(&exact_y), "Y at {k}");
            let exact_b = Float::with_val(256, a[k].b.exact().unwrap());
            assert!(b[k].b.interval(256).contains(&exact_b), "b at {k}");
            assert!(!b[k].sigma.certainly_lt(&a[k].sigma) && !b[k].sigma.certainly_gt(&a[k].sigma));
        }
    }

    #[test]
    fn esl_defined_flag() {
        let s = EngineSettings::default();
        let base = reference(&s);
        let r = build_records(&base, 1, &s).unwrap();
        let e = esl_exponents(&r[1], 256).unwrap();
        assert!(e.defined);
        assert!(e.delta_lower.is_some());
        assert!(esl_exponents(&r[0], 256).unwrap().delta_lower.is_none());
        // b ln L = L exactly gives delta = 1
        let mut synthetic = r[0].clone();
        synthetic.size = Count::Exact(Integer::from(1000));
        synthetic.ln_size = Interval::int(1000, 256).ln().unwrap();
        synthetic.b = Ratio::Enclosed(Interval::int(1000, 256).div(&synthetic.ln_size).unwrap());
        let e = esl_exponents(&synthetic, 256).unwrap();
        assert!(e.delta.contains(&Float::with_val(256, 1)));
    }
}
