use rug::ops::Pow;
use rug::{Integer, Rational};
use serde::Serialize;

use super::base::{l0_threshold, BaseParams};
use super::scale::{build_records, esl_exponents, Count, EslExponents, ScaleRecord};
use super::{AfsError, EngineSettings};
use crate::interval::Interval;

const DIGITS: usize = 25;

/// Stop ratio for the geometric decay of `1 - delta_k`.
pub const ESL_GAP_RATIO: (i64, i64) = (97, 100);

/// Which summand of the probability closure dominates, and whether the step
/// leaves the fixed-growth regime (`B`) or not (`A`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    A1,
    A2,
    B1,
    B2,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    /// Target scale of the step; `None` for base checks.
    pub scale: Option<u32>,
    pub passed: bool,
    pub lhs: Option<[String; 2]>,
    pub rhs: Option<[String; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn bounds(i: &Interval) -> [String; 2] {
    let (lo, hi) = i.bounds_string(DIGITS);
    [lo, hi]
}

/// `lhs <= rhs` with certainty.
fn le(name: &'static str, scale: Option<u32>, lhs: &Interval, rhs: &Interval) -> CheckOutcome {
    CheckOutcome {
        name,
        scale,
        passed: lhs.certainly_le(rhs),
        lhs: Some(bounds(lhs)),
        rhs: Some(bounds(rhs)),
        note: None,
    }
}

fn flag(name: &'static str, scale: Option<u32>, passed: bool, note: String) -> CheckOutcome {
    CheckOutcome {
        name,
        scale,
        passed,
        lhs: None,
        rhs: None,
        note: Some(note),
    }
}

/// `lhs <= rhs` between counts: exact when both are, certain otherwise.
fn count_le(name: &'static str, scale: u32, lhs: &Count, rhs: &Count, prec: u32) -> CheckOutcome {
    match (lhs, rhs) {
        (Count::Exact(a), Count::Exact(b)) => flag(name, Some(scale), a <= b, format!("{a} <= {b}")),
        _ => le(name, Some(scale), &lhs.interval(prec), &rhs.interval(prec)),
    }
}

fn count_lt(name: &'static str, scale: u32, lhs: &Count, rhs: &Count, prec: u32) -> CheckOutcome {
    match (lhs, rhs) {
        (Count::Exact(a), Count::Exact(b)) => flag(name, Some(scale), a < b, format!("{} < {}", lhs.render(), rhs.render())),
        _ => {
            let (l, r) = (lhs.interval(prec), rhs.interval(prec));
            let mut out = le(name, Some(scale), &l, &r);
            out.passed = l.certainly_lt(&r);
            out
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdRow {
    pub name: &'static str,
    pub exponent: String,
    pub exact: bool,
    pub log2: [String; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct BaseRow {
    pub d: u32,
    pub beta: String,
    pub b0: String,
    pub p0: String,
    pub p0_provenance: String,
    pub l0: String,
    pub l0_log2: f64,
    pub l0_auto: bool,
    pub eta: String,
    pub s0: String,
    pub tau: String,
    pub a1: String,
    pub rho1: String,
    pub theta0: [String; 2],
    pub sigma0: [String; 2],
    pub tau0: [String; 2],
    pub switch_scale: u32,
    pub precision: u32,
    pub l0_candidates: Vec<ThresholdRow>,
    pub l0_threshold_max: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct RecordRow {
    pub k: u32,
    pub exact: bool,
    pub growth: Option<String>,
    pub budget: Option<String>,
    pub good: Option<String>,
    pub size: String,
    pub log10_size: f64,
    pub cells: Option<String>,
    pub b: String,
    pub s: String,
    pub amplification: String,
    pub sigma_factor: Option<String>,
    pub rho_factor: Option<String>,
    pub sigma: [String; 2],
    pub rho: Option<[String; 2]>,
    pub ln_q: Option<[String; 2]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EslRow {
    pub k: u32,
    pub delta: [String; 2],
    pub kappa: [String; 2],
    pub delta_lower: Option<[String; 2]>,
    pub defined: bool,
    pub delta_approx: f64,
    pub kappa_approx: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegimeLabel {
    pub scale: u32,
    pub regime: Regime,
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub base: BaseRow,
    pub settings: EngineSettings,
    pub records: Vec<RecordRow>,
    pub checks: Vec<CheckOutcome>,
    pub regimes: Vec<RegimeLabel>,
    pub esl: Vec<EslRow>,
    /// Convergence of the exponents; reported, not part of `overall_pass`.
    pub esl_checks: Vec<CheckOutcome>,
    pub overall_pass: bool,
    #[serde(skip)]
    pub scale_records: Vec<ScaleRecord>,
    #[serde(skip)]
    pub exponents: Vec<EslExponents>,
}

impl Certificate {
    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str, scale: Option<u32>) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name && c.scale == scale)
    }

    pub fn esl_check(&self, name: &str, scale: u32) -> Option<&CheckOutcome> {
        self.esl_checks.iter().find(|c| c.name == name && c.scale == Some(scale))
    }

    pub fn regime(&self, scale: u32) -> Option<Regime> {
        self.regimes.iter().find(|r| r.scale == scale).map(|r| r.regime)
    }
}

fn base_row(base: &BaseParams) -> Result<BaseRow, AfsError> {
    let p = base.precision;
    let thr = l0_threshold(base.d, &base.beta, &base.b0, &base.p0, p)?;
    let ln2 = Interval::int(2, p).ln()?;
    let l0_candidates = thr
        .candidates
        .iter()
        .map(|c| {
            Ok(ThresholdRow {
                name: c.name,
                exponent: c.exponent.to_string(),
                exact: c.exact.is_some(),
                log2: bounds(&c.ln.div(&ln2)?),
            })
        })
        .collect::<Result<Vec<_>, AfsError>>()?;
    Ok(BaseRow {
        d: base.d,
        beta: base.beta.to_string(),
        b0: base.b0.to_string(),
        p0: base.p0.to_string(),
        p0_provenance: base.p0_provenance.clone(),
        l0: Count::Exact(base.l0.clone()).render(),
        l0_log2: base.ln_l0.div(&ln2)?.mid_f64(),
        l0_auto: base.l0_auto,
        eta: base.eta.to_string(),
        s0: base.s0.to_string(),
        tau: base.tau.to_string(),
        a1: base.a1.to_string(),
        rho1: base.rho1.to_string(),
        theta0: bounds(&base.theta0),
        sigma0: bounds(&base.sigma0),
        tau0: bounds(&base.tau0),
        switch_scale: base.switch_scale,
        precision: p,
        l0_candidates,
        l0_threshold_max: thr.max().name,
    })
}

fn record_row(r: &ScaleRecord) -> RecordRow {
    let ln10 = (10f64).ln();
    RecordRow {
        k: r.k,
        exact: r.is_exact(),
        growth: r.growth.as_ref().map(Count::render),
        budget: r.budget.as_ref().map(Count::render),
        good: r.good.as_ref().map(Count::render),
        size: r.size.render(),
        log10_size: r.ln_size.mid_f64() / ln10,
        cells: r.cells.as_ref().map(Count::render),
        b: r.b.render(),
        s: r.s.render(),
        amplification: r.amplification.render(),
        sigma_factor: r.sigma_factor.as_ref().map(|f| f.render()),
        rho_factor: r.rho_factor.as_ref().map(|f| f.render()),
        sigma: bounds(&r.sigma),
        rho: r.rho.as_ref().map(bounds),
        ln_q: r.ln_q.as_ref().map(bounds),
    }
}

fn base_checks(base: &BaseParams) -> Result<Vec<CheckOutcome>, AfsError> {
    let p = base.precision;
    let limit = Rational::from((1, Integer::from(23).pow(2 * base.d)));
    let thr = l0_threshold(base.d, &base.beta, &base.b0, &base.p0, p)?;
    let theta_ok = base.theta0.is_positive() && base.theta0.certainly_lt(&Interval::ratio(1, 3, p));
    Ok(vec![
        flag("p0-threshold", None, base.p0 < limit, format!("p0 < {limit}")),
        CheckOutcome {
            name: "theta0-range",
            scale: None,
            passed: theta_ok,
            lhs: Some(bounds(&base.theta0)),
            rhs: None,
            note: Some("0 < theta0 < 1/3".into()),
        },
        flag(
            "L0-threshold",
            None,
            thr.admits(&base.l0),
            format!("L0 at least every candidate; largest is {}", thr.max().name),
        ),
    ])
}

/// Checks of the step `prev.k -> cur.k`.
fn step_checks(
    prev: &ScaleRecord,
    cur: &ScaleRecord,
    base: &BaseParams,
) -> Result<(Vec<CheckOutcome>, Regime), AfsError> {
    let p = base.precision;
    let j = cur.k;
    let at = Some(j);
    let switch = base.switch_scale;
    let y = cur.growth.as_ref().expect("step record");
    let s = cur.budget.as_ref().expect("step record");
    let n = cur.good.as_ref().expect("step record");
    let rho = cur.rho.as_ref().expect("step record");
    let mut out = Vec::new();

    out.push(count_le("N-at-least-3", j, &Count::Exact(Integer::from(3)), n, p));

    if j > switch {
        if let (Some(yv), Some(l)) = (y.exact(), prev.size.exact()) {
            let root_deg = 16 * base.d;
            let ok = Integer::from(yv.pow(root_deg)) <= *l && Integer::from(yv + 1u32).pow(root_deg) > *l;
            out.push(flag("integer-root", at, ok, format!("Y^{root_deg} <= L < (Y+1)^{root_deg}")));
        }
        let sandwich = match (y, s) {
            (Count::Exact(yv), Count::Exact(sv)) => {
                let ok = Integer::from(10u32 * sv) >= *yv && Integer::from(9u32 * sv) <= *yv;
                flag("growth-sandwich", at, ok, "Y/10 <= S <= Y/9".into())
            }
            // S = floor(Y/9) by construction; Y/10 <= S follows from Y >= 80
            _ => {
                let mut c = le("growth-sandwich", at, &Interval::int(90, p), &y.interval(p));
                c.note = Some("enclosed sizes: Y >= 90 implies Y/10 <= floor(Y/9)".into());
                c
            }
        };
        out.push(sandwich);
        let prev_y = prev.growth.as_ref().expect("scale past switch has a predecessor step");
        let prev_s = prev.budget.as_ref().expect("scale past switch has a predecessor step");
        out.push(count_lt("Y-increasing", j, prev_y, y, p));
        out.push(count_lt("S-increasing", j, prev_s, s, p));
        if j == switch + 1 {
            let tenfold = match prev_y {
                Count::Exact(v) => Count::Exact(Integer::from(10u32 * v)),
                Count::Enclosed(i) => Count::Enclosed(i.scale_int(10)),
            };
            out.push(count_le("Y-jump", j, &tenfold, y, p));
        }
    }

    out.push(le("sigma-le-rho", at, &cur.sigma, rho));

    if j >= 2 {
        let bf = cur.sigma_factor.as_ref().expect("step record");
        let df = cur.rho_factor.as_ref().expect("step record from scale 2");
        let c = match (bf.exact(), df.exact()) {
            (Some(b), Some(d)) => flag("B-le-D", at, b <= d, format!("{b} <= {d}")),
            _ => {
                let (bi, di) = (bf.interval(p), df.interval(p));
                let mut c = le("B-le-D", at, &bi, &di);
                // past the switch both factors are the same expression of S
                if j > switch + 1 && bi == di {
                    c.passed = true;
                    c.note = Some("identical enclosures of one expression".into());
                }
                c
            }
        };
        out.push(c);
    }

    let ln2 = Interval::int(2, p).ln()?;
    let d_i = Interval::int(base.d as i64, p);
    let beta = Interval::rational(&base.beta, p);

    // (Y - 1) L^d L^{-beta s_prev} <= 2 L^{-rho}
    let y_minus = match y {
        Count::Exact(v) => Interval::integer(&Integer::from(v - 1u32), p),
        Count::Enclosed(i) => i.sub(&Interval::int(1, p)),
    };
    let wegner_lhs = y_minus
        .ln()?
        .add(&d_i.sub(&beta.mul(&prev.s.interval(p))).mul(&cur.ln_size));
    let wegner_rhs = ln2.sub(&rho.mul(&cur.ln_size));
    out.push(le("wegner-closure", at, &wegner_lhs, &wegner_rhs));

    if j >= 2 {
        let exponent = beta.mul(&prev.b.interval(p)).scale_rational(&Rational::from((1, 8)));
        out.push(le("rho-le-wegner-exponent", at, rho, &exponent));
    }

    // (1/2)(a L_prev^{-sigma_prev})^{S+1} + (1/2) q <= L^{-sigma}
    let cells = cur.cells.as_ref().expect("step record");
    let s_plus = s.interval(p).add(&Interval::int(1, p));
    let singular = ln2
        .neg()
        .add(&s_plus.mul(&cells.ln(p)?.sub(&prev.sigma.mul(&prev.ln_size))));
    let wegner_part = rho.mul(&cur.ln_size).neg();
    let prob_lhs = singular.log_sum_exp(&wegner_part);
    let prob_rhs = cur.sigma.mul(&cur.ln_size).neg();
    out.push(le("probability-closure", at, &prob_lhs, &prob_rhs));

    let closed = match (cur.amplification.exact(), cur.b.exact()) {
        (Some(a), Some(b)) => flag("closed-form-b", at, a.clone() * base.b0.clone() == *b, "A b0 = b".into()),
        _ => {
            let a = cur.amplification.interval(p).mul(&Interval::rational(&base.b0, p));
            let b = cur.b.interval(p);
            let overlap = !a.certainly_lt(&b) && !a.certainly_gt(&b);
            flag("closed-form-b", at, overlap, "enclosures of A b0 and b overlap".into())
        }
    };
    out.push(closed);

    let singular_dominates = singular.mid_f64() >= wegner_part.mid_f64();
    let regime = match (j - 1 < switch, singular_dominates) {
        (true, true) => Regime::A1,
        (true, false) => Regime::A2,
        (false, true) => Regime::B1,
        (false, false) => Regime::B2,
    };
    Ok((out, regime))
}

fn esl_row(k: u32, e: &EslExponents) -> EslRow {
    EslRow {
        k,
        delta: bounds(&e.delta),
        kappa: bounds(&e.kappa),
        delta_lower: e.delta_lower.as_ref().map(bounds),
        defined: e.defined,
        delta_approx: e.delta.mid_f64(),
        kappa_approx: e.kappa.mid_f64(),
    }
}

fn esl_checks(exps: &[EslExponents], switch: u32, prec: u32) -> Vec<CheckOutcome> {
    let one = Interval::int(1, prec);
    let ratio = Interval::ratio(ESL_GAP_RATIO.0, ESL_GAP_RATIO.1, prec);
    let mut out = Vec::new();
    for k in (switch as usize + 2)..exps.len().saturating_sub(1) {
        let (a, b) = (&exps[k], &exps[k + 1]);
        let at = Some(k as u32 + 1);
        let mut inc = le("delta-increasing", at, &a.delta, &b.delta);
        inc.passed = a.delta.certainly_lt(&b.delta);
        out.push(inc);
        let mut inc = le("kappa-increasing", at, &a.kappa, &b.kappa);
        inc.passed = a.kappa.certainly_lt(&b.kappa);
        out.push(inc);
        match one.sub(&b.delta).div(&one.sub(&a.delta)) {
            Ok(gap) => out.push(le("delta-gap-ratio", at, &gap, &ratio)),
            Err(_) => out.push(flag("delta-gap-ratio", at, false, "1 - delta encloses zero".into())),
        }
    }
    out
}

/// Builds scales `0..=k_max` and checks every inequality of the induction.
pub fn certify(base: &BaseParams, k_max: u32, settings: &EngineSettings) -> Result<Certificate, AfsError> {
    let mut cert = certify_records(base, &build_records(base, k_max, settings)?)?;
    cert.settings = *settings;
    Ok(cert)
}

/// Checks an already built (possibly patched) chain of records.
pub fn certify_records(base: &BaseParams, records: &[ScaleRecord]) -> Result<Certificate, AfsError> {
    let p = base.precision;
    let settings = EngineSettings {
        precision: p,
        exact_max_k: records.iter().rposition(|r| r.is_exact()).unwrap_or(0) as u32,
        ..EngineSettings::default()
    };
    let mut checks = base_checks(base)?;
    let mut regimes = Vec::new();
    for w in records.windows(2) {
        match step_checks(&w[0], &w[1], base) {
            Ok((c, regime)) => {
                checks.extend(c);
                regimes.push(RegimeLabel { scale: w[1].k, regime });
            }
            // degenerate sizes (Y = 1, N = 0) leave logarithms undefined
            Err(e) => {
                checks.push(flag("step-defined", Some(w[1].k), false, e.to_string()));
                break;
            }
        }
    }
    let exponents: Vec<_> = records.iter().map_while(|r| esl_exponents(r, p).ok()).collect();
    let esl = exponents.iter().enumerate().map(|(k, e)| esl_row(k as u32, e)).collect();
    let esl_checks = esl_checks(&exponents, base.switch_scale, p);
    let overall_pass = checks.iter().all(|c| c.passed);
    Ok(Certificate {
        base: base_row(base)?,
        settings,
        records: records.iter().map(record_row).collect(),
        checks,
        regimes,
        esl,
        esl_checks,
        overall_pass,
        scale_records: records.to_vec(),
        exponents,
    })
}
