//! One function per subcommand. Each reads its config section, runs the
//! matching lab operation, writes data files and returns a verdict.

use afs_lab::afs::{build_records, certify, derive_base, AfsError, CheckOutcome};
use afs_lab::geometry::LatticePoint;
use afs_lab::mc::{
    check_appendix_chain, check_dominated_decay, check_recursion_empirically, efc_scaling_probe,
    estimate_cnr_failure, estimate_singular_prob, estimate_wegner, gri_suite, try_run_indexed, DeskScale,
    EstimatorResult, PropertyTally, RunPlan, Verdict,
};
use afs_lab::spectral::{correlator_suite, dl_bound_check, sweep_suite};
use serde::Serialize;

use crate::config::{missing, Config, DeskSection};
use crate::output::{AggregateRow, MetricRow, OutputDir, Row};
use crate::plot::{emit_plot_data, PlotData};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Certify,
    EstimateP0,
    Wegner,
    Cnr,
    DominatedDecay,
    AppendixChain,
    Recursion,
    Gri,
    Sweep,
    Efc,
    EslCurve,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Certify => "certify",
            Command::EstimateP0 => "estimate-p0",
            Command::Wegner => "wegner",
            Command::Cnr => "cnr",
            Command::DominatedDecay => "dominated-decay",
            Command::AppendixChain => "appendix-chain",
            Command::Recursion => "recursion",
            Command::Gri => "gri",
            Command::Sweep => "sweep",
            Command::Efc => "efc",
            Command::EslCurve => "esl-curve",
        }
    }
}

/// Verdict of a subcommand plus human-readable summary lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub summary: Vec<String>,
}

impl Outcome {
    fn new(passed: bool) -> Self {
        Outcome {
            passed,
            summary: Vec::new(),
        }
    }

    fn note(&mut self, line: impl Into<String>) {
        self.summary.push(line.into());
    }
}

pub fn run_command(cmd: Command, cfg: &Config, out: &mut OutputDir) -> Result<Outcome, CliError> {
    match cmd {
        Command::Certify => run_certify(cfg, out),
        Command::EstimateP0 => run_estimate_p0(cfg, out),
        Command::Wegner => run_wegner(cfg, out),
        Command::Cnr => run_cnr(cfg, out),
        Command::DominatedDecay => run_dominated_decay(cfg, out),
        Command::AppendixChain => run_appendix_chain(cfg, out),
        Command::Recursion => run_recursion(cfg, out),
        Command::Gri => run_gri(cfg, out),
        Command::Sweep => run_sweep(cfg, out),
        Command::Efc => run_efc(cfg, out),
        Command::EslCurve => run_esl_curve(cfg, out),
    }
}

fn plan(cfg: &Config, n: u64) -> Result<RunPlan, CliError> {
    Ok(RunPlan::new(n, cfg.run.seed, cfg.run.workers)?)
}

fn metric(out: &OutputDir, name: &str, value: f64, bound: Option<f64>, passed: Option<bool>) -> MetricRow {
    MetricRow {
        config_digest: out.digest().to_owned(),
        metric: name.to_owned(),
        value,
        bound,
        passed,
    }
}

/// Upper end below the bound passes, lower end above fails.
fn judge(r: &EstimatorResult, bound: f64) -> Verdict {
    if r.ci_high <= bound {
        Verdict::Pass
    } else if r.ci_low > bound {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Debug, Serialize)]
struct CheckRow {
    config_digest: String,
    name: &'static str,
    scale: Option<u32>,
    passed: bool,
    lhs_low: Option<String>,
    lhs_high: Option<String>,
    rhs_low: Option<String>,
    rhs_high: Option<String>,
    note: Option<String>,
}

impl Row for CheckRow {
    const HEADERS: &'static [&'static str] = &[
        "config_digest",
        "name",
        "scale",
        "passed",
        "lhs_low",
        "lhs_high",
        "rhs_low",
        "rhs_high",
        "note",
    ];
}

fn check_row(digest: &str, c: &CheckOutcome) -> CheckRow {
    let split = |b: &Option<[String; 2]>| match b {
        Some([lo, hi]) => (Some(lo.clone()), Some(hi.clone())),
        None => (None, None),
    };
    let (lhs_low, lhs_high) = split(&c.lhs);
    let (rhs_low, rhs_high) = split(&c.rhs);
    CheckRow {
        config_digest: digest.to_owned(),
        name: c.name,
        scale: c.scale,
        passed: c.passed,
        lhs_low,
        lhs_high,
        rhs_low,
        rhs_high,
        note: c.note.clone(),
    }
}

#[derive(Debug, Serialize)]
struct RejectedBase {
    overall_pass: bool,
    failed_check: &'static str,
    detail: String,
}

fn run_certify(cfg: &Config, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let section = cfg.base.as_ref().ok_or_else(|| missing("base"))?;
    let settings = section.engine_settings();
    let base = match derive_base(&section.input()?, &settings) {
        Ok(b) => b,
        Err(e @ AfsError::ThresholdViolated { .. }) => {
            out.write_json(
                "certificate.json",
                &RejectedBase {
                    overall_pass: false,
                    failed_check: "threshold-violated",
                    detail: e.to_string(),
                },
            )?;
            let mut o = Outcome::new(false);
            o.note(format!("FAIL threshold-violated: {e}"));
            return Ok(o);
        }
        Err(e) => return Err(e.into()),
    };
    let cert = certify(&base, section.k_max, &settings)?;
    out.write_json("certificate.json", &cert)?;
    let digest = out.digest().to_owned();
    let rows: Vec<CheckRow> = cert.checks.iter().chain(&cert.esl_checks).map(|c| check_row(&digest, c)).collect();
    out.write_csv("certify.checks.csv", &rows)?;
    emit_plot_data(out, "certify.esl.csv", PlotData::Engine(&cert))?;
    let mut o = Outcome::new(cert.overall_pass);
    o.note(format!(
        "{} checks over scales 0..={}, {} failed",
        cert.checks.len(),
        section.k_max,
        cert.failures().count()
    ));
    for f in cert.failures() {
        o.note(format!("FAIL {} at scale {:?}", f.name, f.scale));
    }
    let esl_failed = cert.esl_checks.iter().filter(|c| !c.passed).count();
    o.note(format!("{} convergence checks reported, {esl_failed} failed", cert.esl_checks.len()));
    Ok(o)
}

/// Scale `k` of the desk base, and scale `k + 1` when `with_next`.
fn desk_scales(desk: &DeskSection, with_next: bool) -> Result<Vec<DeskScale>, CliError> {
    let settings = desk.base.engine_settings();
    let base = derive_base(&desk.base.input()?, &settings)?;
    let last = desk.k + 1 + u32::from(with_next);
    let records = build_records(&base, last, &settings)?;
    let count = 1 + u32::from(with_next);
    (desk.k..desk.k + count)
        .map(|k| Ok(DeskScale::from_records(desk.base.d as usize, &records, k)?))
        .collect()
}

fn desk(cfg: &Config) -> Result<&DeskSection, CliError> {
    cfg.desk.as_ref().ok_or_else(|| missing("desk"))
}

fn center(desk: &DeskSection) -> LatticePoint {
    desk.center
        .clone()
        .map_or_else(|| LatticePoint::origin(desk.base.d as usize), LatticePoint)
}

fn run_estimate_p0(cfg: &Config, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let desk = desk(cfg)?;
    let scale = &desk_scales(desk, false)?[0];
    let probe = estimate_singular_prob(scale, desk.energy, cfg.disorder()?, &plan(cfg, cfg.run.n)?, &cfg.solver.settings())?;
    out.write_samples("estimate-p0.jsonl", [(probe.result.event.as_str(), probe.samples.as_slice())])?;
    // the base hypothesis p_0 < (3 Y_1 - 4)^{-2d}
    let hypothesis = 529f64.powi(-(desk.base.d as i32));
    let verdict = judge(&probe.result, hypothesis);
    out.write_csv("estimate-p0.csv", &[AggregateRow::new(out.digest(), &probe.result).judged(hypothesis, verdict)])?;
    let mut o = Outcome::new(true);
    o.note(format!(
        "p_{} = {} [{:.3e}, {:.3e}] at L = {}, threshold {:.3e}; base hypothesis: {verdict:?}",
        desk.k, probe.result.estimate, probe.result.ci_low, probe.result.ci_high, scale.size, probe.threshold
    ));
    Ok(o)
}

fn run_wegner(cfg: &Config, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let w = cfg.wegner.as_ref().ok_or_else(|| missing("wegner"))?;
    let plan = plan(cfg, cfg.run.n)?;
    let mut rows = Vec::new();
    let mut metrics = Vec::new();
    let mut curves = Vec::new();
    let mut o = Outcome::new(true);
    for &size in &w.sizes {
        let curve = estimate_wegner(w.dim, size, w.energy, &w.eps, cfg.disorder()?, &plan, &cfg.solver.settings())?;
        for p in &curve.points {
            let mut row = AggregateRow::new(out.digest(), &p.result);
            if let Some(b) = p.bound {
                let verdict = judge(&p.result, b);
                if verdict != Verdict::Pass {
                    o.passed = false;
                    o.note(format!("L = {size}, eps = {:e}: upper {:.3e} vs bound {b:.3e}", p.eps, p.result.ci_high));
                }
                row = row.judged(b, verdict);
            }
            rows.push(row);
        }
        let slope_ok = match (w.slope, curve.slope) {
            (Some((target, tol)), Some(s)) => Some((s - target).abs() <= tol),
            (Some(_), None) => Some(false),
            (None, _) => None,
        };
        if slope_ok == Some(false) {
            o.passed = false;
        }
        o.note(format!("L = {size}: log-log slope {:?}", curve.slope));
        metrics.push(metric(
            out,
            &format!("slope-L{size}"),
            curve.slope.unwrap_or(f64::NAN),
            w.slope.map(|s| s.0),
            slope_ok,
        ));
        curves.push((format!("distance-L{size}"), curve));
    }
    out.write_samples("wegner.jsonl", curves.iter().map(|(n, c)| (n.as_str(), c.samples.as_slice())))?;
    out.write_csv("wegner.csv", &rows)?;
    out.write_csv("wegner.metrics.csv", &metrics)?;
    Ok(o)
}

fn run_cnr(cfg: &Config, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let desk = desk(cfg)?;
    let scale = &desk_scales(desk, false)?[0];
    let est = estimate_cnr_failure(scale, desk.energy, cfg.disorder()?, &plan(cfg, cfg.run.n)?, &cfg.solver.settings())?;
    out.write_samples("cnr.jsonl", [(est.failure.event.as_str(), est.samples.as_slice())])?;
    let mut rows = vec![AggregateRow::new(out.digest(), &est.failure)];
    rows.extend(est.per_radius.iter().map(|r| AggregateRow::new(out.digest(), r)));
    out.write_csv("cnr.csv", &rows)?;
    let mut o = Outcome::new(est.union_bound_ok);
    o.note(format!(
        "w_{} = {} [{:.3e}, {:.3e}] at threshold {:.3e}",
        desk.k + 1,
        est.failure.estimate,
        est.failure.ci_low,
        est.failure.ci_high,
        est.threshold
    ));
    Ok(o)
}

fn run_dominated_decay(cfg: &Config, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let desk = desk(cfg)?;
    let scale = desk_scales(desk, false)?[0];
    let disorder = cfg.disorder()?;
    let settings = cfg.solver.settings();
    let u = center(desk);
    let checks = try_run_indexed(cfg.run.n, cfg.run.workers, |i| {
        let pot = disorder.realization(cfg.run.seed, i);
        check_dominated_decay(&scale, &pot, i, &u, desk.energy, &settings)
    })?;
    out.write_jsonl("dominated-decay.jsonl", &checks)?;
    let qualifying = checks.iter().filter(|c| c.hypotheses_hold).count() as f64;
    let violations = checks.iter().filter(|c| c.is_violation()).count() as f64;
    out.write_csv(
        "dominated-decay.csv",
        &[
            metric(out, "realizations", checks.len() as f64, None, None),
            metric(out, "qualifying", qualifying, None, None),
            metric(out, "violations", violations, Some(0.0), Some(violations == 0.0)),
        ],
    )?;
    let mut o = Outcome::new(violations == 0.0);
    o.note(format!("{qualifying} qualifying of {}, {violations} violations", checks.len()));
    Ok(o)
}

fn run_appendix_chain(cfg: &Config, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let desk = desk(cfg)?;
    let scale = desk_scales(desk, false)?[0];
    let disorder = cfg.disorder()?;
    let settings = cfg.solver.settings();
    let u = center(desk);
    let reports = try_run_indexed(cfg.run.n, cfg.run.workers, |i| {
        let pot = disorder.realization(cfg.run.seed, i);
        check_appendix_chain(&scale, &pot, i, &u, desk.energy, &settings)
    })?;
    out.write_jsonl("appendix-chain.jsonl", &reports)?;
    let mut tallies = [PropertyTally::default(); 3];
    for r in reports.iter().filter(|r| r.qualifying) {
        for (t, p) in tallies.iter_mut().zip([&r.a, &r.b, &r.c]) {
            t.merge(p);
        }
    }
    let qualifying = reports.iter().filter(|r| r.qualifying).count();
    let mut rows = vec![metric(out, "qualifying", qualifying as f64, None, None)];
    let mut o = Outcome::new(true);
    for (name, t) in ["A", "B", "C"].iter().zip(&tallies) {
        rows.push(metric(out, &format!("{name}-instances"), t.instances as f64, None, None));
        rows.push(metric(out, &format!("{name}-violations"), t.violations as f64, Some(0.0), Some(t.violations == 0)));
        rows.push(metric(out, &format!("{name}-worst-ratio"), t.worst_ratio, Some(1.0), None));
        o.passed &= t.violations == 0;
        o.note(format!(
            "({name}) {} instances, {} violations, worst lhs/rhs {:.8}",
            t.instances, t.violations, t.worst_ratio
        ));
    }
    out.write_csv("appendix-chain.csv", &rows)?;
    o.note(format!("{qualifying} qualifying of {}", reports.len()));
    Ok(o)
}

fn run_recursion(cfg: &Config, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let desk = desk(cfg)?;
    let scales = desk_scales(desk, true)?;
    let disorder = cfg.disorder()?;
    let settings = cfg.solver.settings();
    let plan = plan(cfg, cfg.run.n)?;
    let p_k = estimate_singular_prob(&scales[0], desk.energy, disorder, &plan, &settings)?;
    let p_next = estimate_singular_prob(&scales[1], desk.energy, disorder, &plan, &settings)?;
    let w_next = estimate_cnr_failure(&scales[0], desk.energy, disorder, &plan, &settings)?;
    let report = check_recursion_empirically(&scales[0], &p_k.result, &p_next.result, &w_next.failure)?;
    out.write_samples(
        "recursion.jsonl",
        [
            ("p_k", p_k.samples.as_slice()),
            ("p_k+1", p_next.samples.as_slice()),
            ("w_k+1", w_next.samples.as_slice()),
        ],
    )?;
    out.write_csv(
        "recursion.csv",
        &[
            AggregateRow::new(out.digest(), &p_k.result),
            AggregateRow::new(out.digest(), &p_next.result).judged(report.rhs_upper, report.verdict),
            AggregateRow::new(out.digest(), &w_next.failure),
        ],
    )?;
    let mut o = Outcome::new(report.verdict != Verdict::Fail);
    o.note(format!(
        "p_{} in [{:.3e}, {:.3e}] against {:.3e}: {:?}",
        desk.k + 1,
        report.lhs_low,
        report.lhs_high,
        report.rhs_upper,
        report.verdict
    ));
    Ok(o)
}

fn run_gri(cfg: &Config, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let g = cfg.gri.as_ref().ok_or_else(|| missing("gri"))?;
    let suite = gri_suite(g.dim, cfg.disorder()?, &plan(cfg, cfg.run.n)?, &cfg.solver.settings())?;
    out.write_jsonl("gri.jsonl", &suite.triples)?;
    out.write_csv(
        "gri.csv",
        &[
            metric(out, "evaluated", suite.evaluated as f64, None, None),
            metric(out, "skipped", suite.skipped as f64, None, None),
            metric(out, "violations", suite.violations as f64, Some(0.0), Some(suite.violations == 0)),
            metric(out, "worst-ratio", suite.worst_ratio, Some(1.0), None),
        ],
    )?;
    let mut o = Outcome::new(suite.violations == 0);
    o.note(format!(
        "d = {}: {} evaluated, {} skipped, {} violations, worst lhs/rhs {:.6}",
        suite.dim, suite.evaluated, suite.skipped, suite.violations, suite.worst_ratio
    ));
    Ok(o)
}

fn run_sweep(cfg: &Config, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let s = cfg.sweep.as_ref().ok_or_else(|| missing("sweep"))?;
    let suite = sweep_suite(
        s.dim,
        s.size,
        s.interval,
        s.grid_step,
        s.a,
        s.c,
        cfg.disorder()?,
        &plan(cfg, cfg.run.n)?,
        &cfg.solver.settings(),
    )?;
    out.write_samples("sweep.jsonl", [(suite.violations.event.as_str(), suite.samples.as_slice())])?;
    out.write_csv(
        "sweep.csv",
        &[
            AggregateRow::new(out.digest(), &suite.violations).judged(suite.budget, suite.verdict),
            AggregateRow::new(out.digest(), &suite.tail),
        ],
    )?;
    let cap_ok = suite.max_interval_count as u64 <= suite.interval_cap;
    out.write_csv(
        "sweep.metrics.csv",
        &[
            metric(out, "max-interval-count", suite.max_interval_count as f64, Some(suite.interval_cap as f64), Some(cap_ok)),
            metric(out, "implication", f64::from(u8::from(suite.implication_holds)), Some(1.0), Some(suite.implication_holds)),
            metric(out, "b", suite.b, None, None),
        ],
    )?;
    let mut o = Outcome::new(suite.verdict != Verdict::Fail && cap_ok && suite.implication_holds);
    o.note(format!(
        "uncovered fraction upper {:.3e} against budget {:.3e}: {:?}; intervals {} of cap {}",
        suite.violations.ci_high, suite.budget, suite.verdict, suite.max_interval_count, suite.interval_cap
    ));
    Ok(o)
}

fn run_efc(cfg: &Config, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let e = cfg.efc.as_ref().ok_or_else(|| missing("efc"))?;
    let disorder = cfg.disorder()?;
    let settings = cfg.solver.settings();
    let sanity = correlator_suite(
        e.size,
        &LatticePoint(e.x.clone()),
        &LatticePoint(e.y.clone()),
        e.functions,
        e.rel_tol,
        disorder,
        &plan(cfg, e.instances)?,
        &settings,
    )?;
    let dl = dl_bound_check(&e.dl, disorder, &plan(cfg, cfg.run.n)?, &settings)?;
    out.write_samples(
        "efc.jsonl",
        [
            ("correlator", sanity.samples.as_slice()),
            (dl.h.event.as_str(), dl.samples.as_slice()),
        ],
    )?;
    let diag_ok = sanity.diagonal_error <= e.rel_tol;
    let dominance_ok = sanity.dominance_violations == 0;
    let matched_ok = sanity.matched_gap <= e.rel_tol;
    out.write_csv(
        "efc.metrics.csv",
        &[
            metric(out, "diagonal-error", sanity.diagonal_error, Some(e.rel_tol), Some(diag_ok)),
            metric(out, "dominance-violations", sanity.dominance_violations as f64, Some(0.0), Some(dominance_ok)),
            metric(out, "matched-gap", sanity.matched_gap, Some(e.rel_tol), Some(matched_ok)),
            metric(out, "mean-efc", dl.mean_efc, None, None),
            metric(out, "mean-efc-upper", dl.mean_efc_upper, Some(dl.bound), Some(dl.verdict == Verdict::Pass)),
        ],
    )?;
    out.write_csv("efc.csv", &[AggregateRow::new(out.digest(), &dl.h)])?;
    let mut o = Outcome::new(diag_ok && dominance_ok && matched_ok && dl.verdict != Verdict::Fail);
    o.note(format!(
        "{} instances: diagonal error {:.2e}, {} dominance violations, matched gap {:.2e}",
        sanity.instances, sanity.diagonal_error, sanity.dominance_violations, sanity.matched_gap
    ));
    o.note(format!(
        "mean EFC upper {:.3e} against 4 eps + h = {:.3e}: {:?}",
        dl.mean_efc_upper, dl.bound, dl.verdict
    ));
    Ok(o)
}

fn run_esl_curve(cfg: &Config, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let c = cfg.esl_curve.as_ref().ok_or_else(|| missing("esl_curve"))?;
    let curve = efc_scaling_probe(c.dim, &c.sizes, c.window, cfg.disorder()?, &plan(cfg, cfg.run.n)?, &cfg.solver.settings())?;
    let names: Vec<String> = c.sizes.iter().map(|l| format!("ln-efc-L{l}")).collect();
    out.write_samples("esl-curve.jsonl", names.iter().map(String::as_str).zip(curve.samples.iter().map(Vec::as_slice)))?;
    emit_plot_data(out, "esl-curve.csv", PlotData::Decay(&curve.points))?;
    let passed = curve.spearman.is_some_and(|s| s >= c.min_spearman);
    out.write_csv(
        "esl-curve.metrics.csv",
        &[metric(out, "spearman", curve.spearman.unwrap_or(f64::NAN), Some(c.min_spearman), Some(passed))],
    )?;
    let mut o = Outcome::new(passed);
    o.note(format!("Spearman {:?} against {}", curve.spearman, c.min_spearman));
    Ok(o)
}
