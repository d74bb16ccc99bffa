//! Fixed-energy to variable-energy reduction and eigenfunction correlators.
//!
//! The reduction bounds the probability that the boundary Green function of
//! a cube exceeds a threshold anywhere in an energy interval, given a
//! fixed-energy tail `q` and a two-cube level-spacing bound `f`. The
//! correlator part computes `sup_{|φ| ≤ 1} |<1_x, φ(H) 1_y>|` exactly in
//! finite volume and compares its disorder mean with the localization bound
//! `4ε + h`.

use nalgebra::DMatrix;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::disorder::{DisorderSpec, Potential};
use crate::geometry::{CubeSpec, GeometryError, LatticePoint};
use crate::mc::{self, EstimatorResult, McError, RunPlan, Verdict, CONFIDENCE};
use crate::operator::{
    commutator_norm, spectral_norm, Eigensystem, LocalHamiltonian, OperatorError, SolverSettings,
};

/// Relative gap below which eigenvalues share one spectral projector.
pub const DEGENERACY_GAP: f64 = 1e-10;
/// Rounding slack accepted by the `b ≤ min(a c², c)` check.
const CONSTRAINT_SLACK: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mc(#[from] McError),
}

fn invalid(msg: impl Into<String>) -> SpectralError {
    SpectralError::InvalidParams(msg.into())
}

/// Monotone bound `ε ↦ f(ε)` on the probability that two cubes have
/// eigenvalues within `ε` of each other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundFunction {
    /// `slope · ε`.
    Linear { slope: f64 },
    /// `coefficient · ε^exponent`.
    Power { coefficient: f64, exponent: f64 },
    /// Step envelope of an empirical curve: the value at the smallest
    /// tabulated `ε' ≥ ε`, and 1 past the table.
    Tabulated { points: Vec<(f64, f64)> },
}

impl BoundFunction {
    /// `2ρ L^{2d} ε` for a potential with density at most `ρ`.
    pub fn two_cube_lipschitz(density_sup: f64, size: u64, dim: usize) -> Self {
        BoundFunction::Linear {
            slope: 2.0 * density_sup * (size as f64).powi(2 * dim as i32),
        }
    }

    pub fn validate(&self) -> Result<(), SpectralError> {
        match self {
            BoundFunction::Linear { slope } if !(*slope >= 0.0 && slope.is_finite()) => {
                Err(invalid(format!("slope must be finite and non-negative, got {slope}")))
            }
            BoundFunction::Power { coefficient, exponent }
                if !(*coefficient >= 0.0 && *exponent > 0.0 && coefficient.is_finite()) =>
            {
                Err(invalid("power bound needs a non-negative coefficient and a positive exponent"))
            }
            BoundFunction::Tabulated { points } => {
                let sorted = points.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1);
                let finite = points.iter().all(|(e, v)| *e > 0.0 && v.is_finite() && *v >= 0.0);
                if points.is_empty() || !sorted || !finite {
                    return Err(invalid("tabulated bound must be non-empty, increasing in ε and non-decreasing"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, eps: f64) -> f64 {
        match self {
            BoundFunction::Linear { slope } => slope * eps,
            BoundFunction::Power { coefficient, exponent } => coefficient * eps.powf(*exponent),
            BoundFunction::Tabulated { points } => points
                .iter()
                .find(|(e, _)| *e >= eps)
                .map_or(1.0, |&(_, v)| v),
        }
    }
}

/// Inputs of the reduction; the constructor enforces `b ≤ min(a c², c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionParams {
    a: f64,
    b: f64,
    c: f64,
    q: f64,
    interval: (f64, f64),
    f: BoundFunction,
}

impl ReductionParams {
    pub fn new(a: f64, b: f64, c: f64, q: f64, interval: (f64, f64), f: BoundFunction) -> Result<Self, SpectralError> {
        if !(a > 0.0 && b > 0.0 && c > 0.0 && q >= 0.0) || ![a, b, c, q].iter().all(|x| x.is_finite()) {
            return Err(invalid("a, b, c must be positive and q non-negative"));
        }
        if !(interval.0 < interval.1 && interval.0.is_finite() && interval.1.is_finite()) {
            return Err(invalid(format!("interval [{}, {}] is empty or unbounded", interval.0, interval.1)));
        }
        let cap = (a * c * c).min(c);
        if b > cap * (1.0 + CONSTRAINT_SLACK) {
            return Err(invalid(format!("b = {b:e} exceeds min(a c², c) = {cap:e}")));
        }
        f.validate()?;
        Ok(ReductionParams { a, b, c, q, interval, f })
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn c(&self) -> f64 {
        self.c
    }
    pub fn q(&self) -> f64 {
        self.q
    }
    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }
    pub fn interval_len(&self) -> f64 {
        self.interval.1 - self.interval.0
    }
    pub fn bound(&self) -> &BoundFunction {
        &self.f
    }
}

/// `|I| q / b + f(2c)`.
pub fn etv_tail_bound(params: &ReductionParams) -> f64 {
    params.interval_len() * params.q / params.b + params.f.eval(2.0 * params.c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorollaryBound {
    pub threshold: f64,
    pub tail: f64,
}

fn check_unit(a: f64, q: f64) -> Result<(), SpectralError> {
    if !(a > 0.0 && a <= 1.0 && q > 0.0 && q <= 1.0) {
        return Err(invalid(format!("a = {a} and q = {q} must lie in (0, 1]")));
    }
    Ok(())
}

/// Threshold `max(a, q^{1/2})` and tail `|I| q^{1/4} + f(2 q^{1/4})`.
///
/// The tail is [`etv_tail_bound`] of [`corollary_params`]. Those parameters
/// carry the threshold `max(a, q^{1/4})`, which is the returned threshold
/// only when `a ≥ q^{1/4}`.
pub fn corollary_bound(a: f64, q: f64, interval_len: f64, f: &BoundFunction) -> Result<CorollaryBound, SpectralError> {
    check_unit(a, q)?;
    if !(interval_len > 0.0 && interval_len.is_finite()) {
        return Err(invalid("interval length must be positive"));
    }
    f.validate()?;
    let c = q.powf(0.25);
    Ok(CorollaryBound {
        threshold: a.max(q.sqrt()),
        tail: interval_len * c + f.eval(2.0 * c),
    })
}

/// `c = q^{1/4}`, `b = q^{3/4}` and threshold `max(a, q^{1/4})`, the smallest
/// threshold for which this `b` meets `b ≤ a c²`.
pub fn corollary_params(
    a: f64,
    q: f64,
    interval: (f64, f64),
    f: BoundFunction,
) -> Result<ReductionParams, SpectralError> {
    check_unit(a, q)?;
    let c = q.powf(0.25);
    ReductionParams::new(a.max(c), q.powf(0.75), c, q, interval, f)
}

/// Spectral projector groups: consecutive eigenvalues closer than
/// [`DEGENERACY_GAP`] relative to their magnitude.
pub fn projector_groups(values: &[f64]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for j in 1..=values.len() {
        let split = j == values.len() || values[j] - values[j - 1] > DEGENERACY_GAP * values[j].abs().max(1.0);
        if split {
            out.push(start..j);
            start = j;
        }
    }
    out
}

/// `Σ_P |<1_x, P 1_y>|` over spectral projectors with eigenvalue in
/// `window` (all of them when `None`), for site indices `x`, `y`.
pub fn efc_from_eigen(eig: &Eigensystem, x: usize, y: usize, window: Option<(f64, f64)>) -> f64 {
    projector_groups(&eig.values)
        .into_iter()
        .filter(|g| window.is_none_or(|(lo, hi)| (lo..=hi).contains(&eig.values[g.start])))
        .map(|g| {
            g.map(|j| eig.vectors[(x, j)] * eig.vectors[(y, j)])
                .sum::<f64>()
                .abs()
        })
        .sum()
}

/// Eigenfunction correlator between `x` and `y` in the finite domain of `h`.
pub fn efc_pair(
    h: &LocalHamiltonian,
    x: &LatticePoint,
    y: &LatticePoint,
    window: Option<(f64, f64)>,
    settings: &SolverSettings,
) -> Result<f64, SpectralError> {
    let idx = h.indices_of(&[x.clone(), y.clone()])?;
    let eig = h.eigen(settings.dense_cap)?;
    Ok(efc_from_eigen(&eig, idx[0], idx[1], window))
}

/// `ln` of the endpoint correlator of a chain with unit hopping, from its
/// eigenvalues: `|ψ_j(first) ψ_j(last)| = Π_{k≠j} |λ_j - λ_k|^{-1}`.
///
/// Stays accurate where eigenvector entries underflow double precision.
pub fn ln_efc_chain_endpoints(values: &[f64], window: Option<(f64, f64)>) -> f64 {
    let terms: Vec<f64> = values
        .iter()
        .enumerate()
        .filter(|(_, l)| window.is_none_or(|(lo, hi)| (lo..=hi).contains(*l)))
        .map(|(j, lj)| {
            -values
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, lk)| (lj - lk).abs().ln())
                .sum::<f64>()
        })
        .collect();
    log_sum_exp(&terms)
}

/// `ln Σ exp(t)`, `-inf` for an empty sum.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Decay functional of one cube at many energies through its eigenbasis.
#[derive(Debug, Clone)]
pub struct CubeResolvent {
    values: Vec<f64>,
    annulus: DMatrix<f64>,
    core: DMatrix<f64>,
    decay_constant: f64,
    tol: f64,
}

impl CubeResolvent {
    pub fn new(
        cube: &CubeSpec,
        potential: &dyn Potential,
        growth: u64,
        settings: &SolverSettings,
    ) -> Result<Self, SpectralError> {
        let h = LocalHamiltonian::on_cube(cube, potential)?;
        let eig = h.eigen(settings.dense_cap)?;
        let (core, _) = cube.core_shell()?;
        let rows = h.indices_of(&cube.outer_layers(2))?;
        let cols = h.indices_of(&core.sites())?;
        let n = eig.values.len();
        let decay_constant = (growth as f64).powi(cube.dim() as i32) * commutator_norm(cube, settings.commutator);
        Ok(CubeResolvent {
            annulus: DMatrix::from_fn(rows.len(), n, |r, j| eig.vectors[(rows[r], j)]),
            core: DMatrix::from_fn(cols.len(), n, |r, j| eig.vectors[(cols[r], j)]),
            values: eig.values,
            decay_constant,
            tol: settings.near_singular_tol,
        })
    }

    /// `+inf` within tolerance of the spectrum.
    pub fn dnorm(&self, energy: f64) -> f64 {
        let inv: Vec<f64> = self.values.iter().map(|l| 1.0 / (l - energy)).collect();
        if inv.iter().any(|v| !(v.abs() < 1.0 / self.tol)) {
            return f64::INFINITY;
        }
        let mut scaled = self.core.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= inv[j];
        }
        self.decay_constant * spectral_norm(&(&self.annulus * scaled.transpose()))
    }
}

/// Boundary Green function sweep of one cube over an energy grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub grid_points: usize,
    /// Grid points within the near-singular tolerance of an eigenvalue.
    pub skipped: usize,
    /// Points with `F > 2a`.
    pub exceedances: usize,
    /// Exceedance points farther than `2c` from every eigenvalue.
    pub uncovered: usize,
    pub covered: bool,
    /// Eigenvalues whose `2c`-interval is needed to cover the exceedances.
    pub interval_count: usize,
    pub interval_cap: u64,
    /// Grid measure of `{F ≥ a}`.
    pub exceedance_measure: f64,
    /// Per-point indicator of `F > a`, for the fixed-energy tail estimate.
    #[serde(skip)]
    pub above_a: Vec<bool>,
}

/// Energy grid `lo, lo + step, ...` up to `hi`.
pub fn energy_grid(interval: (f64, f64), step: f64) -> Result<Vec<f64>, SpectralError> {
    if !(step > 0.0 && interval.0 <= interval.1) {
        return Err(invalid("grid step must be positive and the interval non-empty"));
    }
    let n = ((interval.1 - interval.0) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| interval.0 + i as f64 * step).collect())
}

/// Where `F(E) = max_{y on the inner boundary} |G(z, y; E)|` exceeds `2a`
/// on the grid, and whether those energies sit within `2c` of the spectrum.
#[allow(clippy::too_many_arguments)]
pub fn energy_sweep_structure(
    potential: &dyn Potential,
    z: &LatticePoint,
    size: u64,
    interval: (f64, f64),
    grid_step: f64,
    a: f64,
    c: f64,
    settings: &SolverSettings,
) -> Result<SweepReport, SpectralError> {
    if !(a > 0.0 && c > 0.0) {
        return Err(invalid("a and c must be positive"));
    }
    let grid = energy_grid(interval, grid_step)?;
    let cube = CubeSpec::new(z.clone(), size)?;
    let h = LocalHamiltonian::on_cube(&cube, potential)?;
    let eig = h.eigen(settings.dense_cap)?;
    let zi = h.indices_of(std::slice::from_ref(z))?[0];
    let ys = h.indices_of(&cube.inner_boundary())?;
    let weights: Vec<Vec<f64>> = ys
        .iter()
        .map(|&y| (0..eig.values.len()).map(|j| eig.vectors[(zi, j)] * eig.vectors[(y, j)]).collect())
        .collect();

    let mut skipped = 0;
    let mut exceedances = 0;
    let mut uncovered = 0;
    let mut above_a = Vec::with_capacity(grid.len());
    let mut at_least_a = 0usize;
    let mut used = std::collections::BTreeSet::new();
    for &e in &grid {
        let nearest = eig
            .values
            .iter()
            .enumerate()
            .map(|(j, l)| (j, (l - e).abs()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .expect("non-empty spectrum");
        if nearest.1 <= settings.near_singular_tol {
            skipped += 1;
            above_a.push(true);
            at_least_a += 1;
            continue;
        }
        let f = weights
            .iter()
            .map(|w| {
                w.iter()
                    .zip(&eig.values)
                    .map(|(wj, l)| wj / (l - e))
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max);
        above_a.push(f > a);
        if f >= a {
            at_least_a += 1;
        }
        if f > 2.0 * a {
            exceedances += 1;
            if nearest.1 <= 2.0 * c {
                used.insert(nearest.0);
            } else {
                uncovered += 1;
            }
        }
    }
    Ok(SweepReport {
        grid_points: grid.len(),
        skipped,
        exceedances,
        uncovered,
        covered: uncovered == 0,
        interval_count: used.len(),
        interval_cap: (3 * size).pow(cube.dim() as u32),
        exceedance_measure: at_least_a as f64 * grid_step,
        above_a,
    })
}

/// Monte-Carlo run of [`energy_sweep_structure`] against its probability budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSuite {
    pub size: u64,
    pub interval: (f64, f64),
    pub grid_step: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Realizations with an uncovered exceedance.
    pub violations: EstimatorResult,
    /// `P{F(E) > a}` at the grid energy where it is largest.
    pub tail: EstimatorResult,
    /// `|I| q / b` with `q` the upper end of `tail`.
    pub budget: f64,
    pub verdict: Verdict,
    pub max_interval_count: usize,
    pub interval_cap: u64,
    /// Every violating realization had `mes{F ≥ a} > b` on the grid.
    pub implication_holds: bool,
    /// Per realization: uncovered exceedance, and its grid measure.
    pub samples: Vec<mc::Sample>,
}

#[allow(clippy::too_many_arguments)]
pub fn sweep_suite(
    dim: usize,
    size: u64,
    interval: (f64, f64),
    grid_step: f64,
    a: f64,
    c: f64,
    disorder: &DisorderSpec,
    plan: &RunPlan,
    settings: &SolverSettings,
) -> Result<SweepSuite, SpectralError> {
    let b = (a * c * c).min(c);
    let z = LatticePoint::origin(dim);
    let reports = mc::try_run_indexed(plan.n, plan.workers, |i| {
        let pot = disorder.realization(plan.master_seed, i);
        energy_sweep_structure(&pot, &z, size, interval, grid_step, a, c, settings)
            .map_err(|e| McError::InvalidParams(e.to_string()))
    })?;
    let violating = reports.iter().filter(|r| !r.covered).count() as u64;
    let implication_holds = reports
        .iter()
        .all(|r| r.covered || r.exceedance_measure > b);
    let points = reports[0].above_a.len();
    let worst = (0..points)
        .map(|p| reports.iter().filter(|r| r.above_a[p]).count() as u64)
        .max()
        .unwrap_or(0);
    let violations = EstimatorResult::from_counts("uncovered-exceedance", violating, plan.n, plan.master_seed)?;
    let tail = EstimatorResult::from_counts("boundary-green-above-a", worst, plan.n, plan.master_seed)?;
    let budget = (interval.1 - interval.0) * tail.ci_high / b;
    let verdict = if violations.ci_high <= budget {
        Verdict::Pass
    } else if violations.ci_low > budget {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    };
    Ok(SweepSuite {
        size,
        interval,
        grid_step,
        a,
        b,
        c,
        violations,
        tail,
        budget,
        verdict,
        max_interval_count: reports.iter().map(|r| r.interval_count).max().unwrap_or(0),
        interval_cap: reports[0].interval_cap,
        implication_holds,
        samples: reports
            .iter()
            .enumerate()
            .map(|(i, r)| mc::Sample {
                index: i as u64,
                event: !r.covered,
                value: r.exceedance_measure,
            })
            .collect(),
    })
}

/// Geometry and thresholds of the localization-bound comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlSetup {
    pub size: u64,
    pub x: LatticePoint,
    pub y: LatticePoint,
    pub ambient: u64,
    pub eps: f64,
    pub interval: (f64, f64),
    pub grid_step: f64,
    /// Growth factor entering the decay constant of the two cubes.
    pub growth: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlReport {
    pub setup: DlSetup,
    pub mean_efc: f64,
    pub mean_efc_upper: f64,
    pub mean_efc_lower: f64,
    /// Both cubes `(E, ε)`-singular at a common grid energy.
    pub h: EstimatorResult,
    /// `4ε + h` at the upper end of its interval.
    pub bound: f64,
    pub verdict: Verdict,
    /// Per realization: both cubes singular, and the correlator.
    pub samples: Vec<mc::Sample>,
}

/// Mean correlator between `x` and `y` in the ambient cube against `4ε + h`.
pub fn dl_bound_check(
    setup: &DlSetup,
    disorder: &DisorderSpec,
    plan: &RunPlan,
    settings: &SolverSettings,
) -> Result<DlReport, SpectralError> {
    let dim = setup.x.dim();
    let ambient = CubeSpec::centered(dim, setup.ambient)?;
    let cx = CubeSpec::new(setup.x.clone(), setup.size)?;
    let cy = CubeSpec::new(setup.y.clone(), setup.size)?;
    let fits = |c: &LatticePoint| {
        CubeSpec::new(c.clone(), setup.size + 2).map(|b| ambient.contains_cube(&b))
    };
    if !(fits(&setup.x)? && fits(&setup.y)?) {
        return Err(GeometryError::InvalidCube("both enlarged cubes must lie in the ambient cube".into()).into());
    }
    if setup.x.max_dist(&setup.y) < setup.size {
        return Err(GeometryError::InvalidCube("the two cubes must be disjoint".into()).into());
    }
    let grid = energy_grid(setup.interval, setup.grid_step)?;
    let samples = mc::try_run_indexed(plan.n, plan.workers, |i| {
        let run = || -> Result<(f64, bool), SpectralError> {
            let pot = disorder.realization(plan.master_seed, i);
            let h = LocalHamiltonian::on_cube(&ambient, &pot)?;
            let efc = efc_pair(&h, &setup.x, &setup.y, Some(setup.interval), settings)?;
            let rx = CubeResolvent::new(&cx, &pot, setup.growth, settings)?;
            let ry = CubeResolvent::new(&cy, &pot, setup.growth, settings)?;
            let singular = |r: &CubeResolvent, e: f64| !crate::operator::classify_ns(r.dnorm(e), setup.eps);
            let both = grid.iter().any(|&e| singular(&rx, e) && singular(&ry, e));
            Ok((efc.min(1.0), both))
        };
        run().map_err(|e| McError::InvalidParams(e.to_string()))
    })?;
    let mean_efc = samples.iter().map(|s| s.0).sum::<f64>() / plan.n as f64;
    let half = mc::stats::hoeffding_halfwidth(plan.n, CONFIDENCE);
    let hits = samples.iter().filter(|s| s.1).count() as u64;
    let h = EstimatorResult::from_counts("both-cubes-singular", hits, plan.n, plan.master_seed)?;
    let bound = 4.0 * setup.eps + h.ci_high;
    let (upper, lower) = ((mean_efc + half).min(1.0), (mean_efc - half).max(0.0));
    let verdict = if upper <= bound {
        Verdict::Pass
    } else if lower > bound {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    };
    Ok(DlReport {
        setup: setup.clone(),
        mean_efc,
        mean_efc_upper: upper,
        mean_efc_lower: lower,
        h,
        bound,
        verdict,
        samples: samples
            .iter()
            .enumerate()
            .map(|(i, &(value, event))| mc::Sample {
                index: i as u64,
                event,
                value,
            })
            .collect(),
    })
}

/// Checks of the correlator against explicit spectral functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorSuite {
    pub size: u64,
    pub instances: u64,
    pub functions_per_instance: u64,
    /// Largest `|EFC(x, x) - 1|`.
    pub diagonal_error: f64,
    /// Random `±1` functions `φ` with `|<1_x, φ(H) 1_y>| > EFC(x, y)`.
    pub dominance_violations: u64,
    /// Largest `EFC(x, y) - |<1_x, φ(H) 1_y>|` at the matched sign pattern.
    pub matched_gap: f64,
    /// Per instance: dominance held, and `EFC(x, y)`.
    pub samples: Vec<mc::Sample>,
}

/// For each realization of `H` on `B_size(0)`: `EFC(x, x) = 1`, and
/// `EFC(x, y)` dominates `functions` random sign functions of the spectrum,
/// with equality at the sign pattern of the projector entries.
#[allow(clippy::too_many_arguments)]
pub fn correlator_suite(
    size: u64,
    x: &LatticePoint,
    y: &LatticePoint,
    functions: u64,
    rel_tol: f64,
    disorder: &DisorderSpec,
    plan: &RunPlan,
    settings: &SolverSettings,
) -> Result<CorrelatorSuite, SpectralError> {
    let cube = CubeSpec::centered(x.dim(), size)?;
    let per_instance = mc::try_run_indexed(plan.n, plan.workers, |i| {
        let run = || -> Result<(f64, u64, f64, f64), SpectralError> {
            let pot = disorder.realization(plan.master_seed, i);
            let h = LocalHamiltonian::on_cube(&cube, &pot)?;
            let idx = h.indices_of(&[x.clone(), y.clone()])?;
            let eig = h.eigen(settings.dense_cap)?;
            let diagonal = (efc_from_eigen(&eig, idx[0], idx[0], None) - 1.0).abs();
            let efc = efc_from_eigen(&eig, idx[0], idx[1], None);
            let entries: Vec<f64> = projector_groups(&eig.values)
                .into_iter()
                .map(|g| g.map(|j| eig.vectors[(idx[0], j)] * eig.vectors[(idx[1], j)]).sum())
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(plan.master_seed);
            rng.set_stream(i);
            let mut violations = 0;
            for _ in 0..functions {
                let value: f64 = entries
                    .iter()
                    .map(|p| if rng.next_u32() & 1 == 0 { *p } else { -*p })
                    .sum();
                if value.abs() > efc * (1.0 + rel_tol) {
                    violations += 1;
                }
            }
            let matched: f64 = entries.iter().map(|p| p.signum() * p).sum();
            Ok((diagonal, violations, efc - matched.abs(), efc))
        };
        run().map_err(|e| McError::InvalidParams(e.to_string()))
    })?;
    Ok(CorrelatorSuite {
        size,
        instances: plan.n,
        functions_per_instance: functions,
        diagonal_error: per_instance.iter().map(|r| r.0).fold(0.0, f64::max),
        dominance_violations: per_instance.iter().map(|r| r.1).sum(),
        matched_gap: per_instance.iter().map(|r| r.2.abs()).fold(0.0, f64::max),
        samples: per_instance
            .iter()
            .enumerate()
            .map(|(i, r)| mc::Sample {
                index: i as u64,
                event: r.1 == 0,
                value: r.3,
            })
            .collect(),
    })
}
