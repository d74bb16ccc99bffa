use serde::{Deserialize, Serialize};

use crate::disorder::{DisorderSpec, Family};
use crate::geometry::{cnr_radii, CubeSpec, LatticePoint};
use crate::operator::{classify_cnr, classify_ns, dnorm, spectral_distance, LocalHamiltonian, SolverSettings};
use crate::spectral::{efc_pair, ln_efc_chain_endpoints, log_sum_exp};

use super::{stats, try_run_indexed, DeskScale, EstimatorResult, McError, RunPlan, Sample};

/// Frequency of `(E, L_k^{-b_k})`-singular cubes `B_{L_k}(0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularProbe {
    pub result: EstimatorResult,
    pub threshold: f64,
    /// Per realization: singular or not, and the decay functional.
    pub samples: Vec<Sample>,
}

pub fn estimate_singular_prob(
    scale: &DeskScale,
    energy: f64,
    disorder: &DisorderSpec,
    plan: &RunPlan,
    settings: &SolverSettings,
) -> Result<SingularProbe, McError> {
    let cube = CubeSpec::centered(scale.dim, scale.size)?;
    if cube.volume() > settings.dense_cap {
        return Err(crate::operator::OperatorError::TooLarge {
            size: cube.volume(),
            cap: settings.dense_cap,
        }
        .into());
    }
    let threshold = scale.ns_threshold();
    let samples = try_run_indexed(plan.n, plan.workers, |i| {
        let pot = disorder.realization(plan.master_seed, i);
        let (value, _) = dnorm(&cube, energy, &pot, scale.growth, settings)?;
        Ok(Sample {
            index: i,
            event: !classify_ns(value, threshold),
            value,
        })
    })?;
    let hits = samples.iter().filter(|s| s.event).count() as u64;
    let result = EstimatorResult::from_counts(format!("singular-L{}", scale.size), hits, plan.n, plan.master_seed)?
        .at(scale.size, energy);
    Ok(SingularProbe {
        result,
        threshold,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WegnerPoint {
    pub eps: f64,
    pub result: EstimatorResult,
    /// `2ρ L^d ε` when the law has a bounded density `ρ`.
    pub bound: Option<f64>,
    /// Upper confidence end below the bound.
    pub within_bound: Option<bool>,
}

/// Empirical `ε ↦ P{dist(Σ(H_{B_L}), E) < ε}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WegnerCurve {
    pub size: u64,
    pub energy: f64,
    pub points: Vec<WegnerPoint>,
    /// Log-log slope over points with at least one hit.
    pub slope: Option<f64>,
    /// Per realization: the spectral distance.
    pub samples: Vec<Sample>,
}

pub fn estimate_wegner(
    dim: usize,
    size: u64,
    energy: f64,
    eps_grid: &[f64],
    disorder: &DisorderSpec,
    plan: &RunPlan,
    settings: &SolverSettings,
) -> Result<WegnerCurve, McError> {
    if eps_grid.iter().any(|e| !(*e > 0.0)) {
        return Err(McError::InvalidParams("every ε must be positive".into()));
    }
    let cube = CubeSpec::centered(dim, size)?;
    let distances = try_run_indexed(plan.n, plan.workers, |i| {
        let pot = disorder.realization(plan.master_seed, i);
        let h = LocalHamiltonian::on_cube(&cube, &pot)?;
        Ok(spectral_distance(&h.spectrum(settings.dense_cap)?, energy))
    })?;
    // the constant is only explicit for the uniform law
    let density = match disorder.family {
        Family::Uniform { .. } => disorder.density_sup(),
        _ => None,
    };
    let volume = cube.volume() as f64;
    let mut points = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let hits = distances.iter().filter(|&&d| d < eps).count() as u64;
        let result = EstimatorResult::from_counts(format!("not-NR-eps{eps:e}"), hits, plan.n, plan.master_seed)?
            .at(size, energy);
        let bound = density.map(|rho| 2.0 * rho * volume * eps);
        let within_bound = bound.map(|b| result.ci_high <= b);
        points.push(WegnerPoint {
            eps,
            result,
            bound,
            within_bound,
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|p| p.result.successes > 0)
        .map(|p| (p.eps.ln(), p.result.estimate.ln()))
        .unzip();
    let samples = distances
        .iter()
        .enumerate()
        .map(|(i, &d)| Sample {
            index: i as u64,
            event: eps_grid.iter().any(|&e| d < e),
            value: d,
        })
        .collect();
    Ok(WegnerCurve {
        size,
        energy,
        points,
        slope: stats::slope(&xs, &ys),
        samples,
    })
}

/// Failure of complete non-resonance of `B_{L_{k+1}}(0)` at `L_{k+1}^{-s_k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnrEstimate {
    pub failure: EstimatorResult,
    pub threshold: f64,
    /// Resonance of each concentric cube, innermost first.
    pub per_radius: Vec<EstimatorResult>,
    /// Failures never exceed the summed per-radius failures.
    pub union_bound_ok: bool,
    pub samples: Vec<Sample>,
}

pub fn estimate_cnr_failure(
    scale: &DeskScale,
    energy: f64,
    disorder: &DisorderSpec,
    plan: &RunPlan,
    settings: &SolverSettings,
) -> Result<CnrEstimate, McError> {
    let next = scale.next()?;
    let threshold = scale.cnr_threshold()?;
    let center = LatticePoint::origin(scale.dim);
    let big = CubeSpec::new(center.clone(), next.size)?;
    if big.volume() > settings.dense_cap {
        return Err(crate::operator::OperatorError::TooLarge {
            size: big.volume(),
            cap: settings.dense_cap,
        }
        .into());
    }
    let details = try_run_indexed(plan.n, plan.workers, |i| {
        let pot = disorder.realization(plan.master_seed, i);
        Ok(classify_cnr(&center, scale.cell(), next.growth, energy, threshold, &pot, settings)?)
    })?;
    let fails = details.iter().filter(|d| !d.0).count() as u64;
    let radii: Vec<u64> = cnr_radii(next.growth).collect();
    let mut per_radius = Vec::with_capacity(radii.len());
    let mut summed = 0;
    for (j, r) in radii.iter().enumerate() {
        let hits = details.iter().filter(|d| !d.1[j]).count() as u64;
        summed += hits;
        per_radius.push(
            EstimatorResult::from_counts(format!("not-NR-radius{r}"), hits, plan.n, plan.master_seed)?
                .at((2 * r + 1) * scale.cell(), energy),
        );
    }
    let failure = EstimatorResult::from_counts(format!("not-CNR-L{}", next.size), fails, plan.n, plan.master_seed)?
        .at(next.size, energy);
    let samples = details
        .iter()
        .enumerate()
        .map(|(i, d)| Sample {
            index: i as u64,
            event: !d.0,
            value: d.1.iter().filter(|b| !**b).count() as f64,
        })
        .collect();
    Ok(CnrEstimate {
        failure,
        threshold,
        per_radius,
        union_bound_ok: fails <= summed,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfcPoint {
    pub size: u64,
    pub mean_efc: f64,
    pub ln_mean_efc: f64,
    /// `ln ln(1/EFC) / ln L`, undefined once the mean reaches 1.
    pub diagnostic: Option<f64>,
}

/// Disorder-averaged correlator between the two ends of `B_L(0)` along the
/// first axis, `|x - y| = L - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfcCurve {
    pub points: Vec<EfcPoint>,
    pub spearman: Option<f64>,
    /// Per size, per realization: `ln EFC`.
    pub samples: Vec<Vec<Sample>>,
}

/// Chains use the log-determinant endpoint route; higher dimensions use
/// dense eigenvectors, which bottom out near machine precision.
pub fn efc_scaling_probe(
    dim: usize,
    sizes: &[u64],
    window: Option<(f64, f64)>,
    disorder: &DisorderSpec,
    plan: &RunPlan,
    settings: &SolverSettings,
) -> Result<EfcCurve, McError> {
    let mut points = Vec::with_capacity(sizes.len());
    let mut samples = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let cube = CubeSpec::centered(dim, size)?;
        let r = cube.radius() as i64;
        let mut x = vec![0; dim];
        let mut y = vec![0; dim];
        x[0] = -r;
        y[0] = r;
        let (x, y) = (LatticePoint(x), LatticePoint(y));
        let ln_efc = try_run_indexed(plan.n, plan.workers, |i| {
            let pot = disorder.realization(plan.master_seed, i);
            let h = LocalHamiltonian::on_cube(&cube, &pot)?;
            if dim == 1 {
                Ok(ln_efc_chain_endpoints(&h.spectrum(settings.dense_cap)?, window).min(0.0))
            } else {
                let e = efc_pair(&h, &x, &y, window, settings).map_err(|e| McError::InvalidParams(e.to_string()))?;
                Ok(e.min(1.0).ln())
            }
        })?;
        let ln_mean = log_sum_exp(&ln_efc) - (plan.n as f64).ln();
        let diagnostic = (ln_mean < 0.0).then(|| (-ln_mean).ln() / (size as f64).ln());
        points.push(EfcPoint {
            size,
            mean_efc: ln_mean.exp(),
            ln_mean_efc: ln_mean,
            diagnostic,
        });
        samples.push(
            ln_efc
                .iter()
                .enumerate()
                .map(|(i, &v)| Sample {
                    index: i as u64,
                    event: false,
                    value: v,
                })
                .collect(),
        );
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter_map(|p| p.diagnostic.map(|d| (p.size as f64, d)))
        .unzip();
    let spearman = if xs.len() == points.len() {
        stats::spearman(&xs, &ys)
    } else {
        None
    };
    Ok(EfcCurve {
        points,
        spearman,
        samples,
    })
}
