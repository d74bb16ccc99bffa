//! Finite-volume Hamiltonians, Green blocks, the decay functional and the
//! resonance classifiers.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::disorder::Potential;
use crate::geometry::{cnr_radii, CubeSpec, GeometryError, LatticePoint};

pub const DEFAULT_DENSE_CAP: usize = 8192;
pub const DEFAULT_NEAR_SINGULAR_TOL: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("empty domain")]
    EmptyDomain,
    #[error("no potential value at site {0:?}")]
    MissingPotential(Vec<i64>),
    #[error("domain of {size} sites exceeds the dense cap {cap}")]
    TooLarge { size: usize, cap: usize },
    #[error("energy within {distance:e} of the spectrum")]
    NearSingular { distance: f64 },
    #[error("block solve residual {residual:e} above tolerance")]
    InaccurateSolve { residual: f64 },
    #[error("site {0:?} is not in the domain")]
    SiteOutside(Vec<i64>),
    #[error("invalid geometry: {0}")]
    Geometry(#[from] GeometryError),
}

/// How the commutator norm entering the decay functional is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CommutatorMode {
    /// The a priori bound `8d`.
    #[default]
    Bound,
    /// Spectral norm of the assembled commutator.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub dense_cap: usize,
    pub near_singular_tol: f64,
    pub commutator: CommutatorMode,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            dense_cap: DEFAULT_DENSE_CAP,
            near_singular_tol: DEFAULT_NEAR_SINGULAR_TOL,
            commutator: CommutatorMode::Bound,
        }
    }
}

/// `1_Λ H 1_Λ` in canonical site order.
#[derive(Debug, Clone)]
pub struct LocalHamiltonian {
    sites: Vec<LatticePoint>,
    index: HashMap<LatticePoint, usize>,
    matrix: DMatrix<f64>,
}

impl LocalHamiltonian {
    pub fn assemble(sites: &[LatticePoint], potential: &dyn Potential) -> Result<Self, OperatorError> {
        if sites.is_empty() {
            return Err(OperatorError::EmptyDomain);
        }
        let d = sites[0].dim();
        let n = sites.len();
        let index: HashMap<LatticePoint, usize> =
            sites.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        let mut matrix = DMatrix::zeros(n, n);
        let mut probe = vec![0i64; d];
        for (i, x) in sites.iter().enumerate() {
            let v = potential
                .value(&x.0)
                .ok_or_else(|| OperatorError::MissingPotential(x.0.clone()))?;
            matrix[(i, i)] = 2.0 * d as f64 + v;
            for axis in 0..d {
                probe.copy_from_slice(&x.0);
                probe[axis] += 1;
                if let Some(&j) = index.get(&LatticePoint(probe.clone())) {
                    matrix[(i, j)] = -1.0;
                    matrix[(j, i)] = -1.0;
                }
            }
        }
        Ok(LocalHamiltonian {
            sites: sites.to_vec(),
            index,
            matrix,
        })
    }

    pub fn on_cube(cube: &CubeSpec, potential: &dyn Potential) -> Result<Self, OperatorError> {
        Self::assemble(&cube.sites(), potential)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn sites(&self) -> &[LatticePoint] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn index_of(&self, x: &LatticePoint) -> Option<usize> {
        self.index.get(x).copied()
    }

    pub fn indices_of(&self, xs: &[LatticePoint]) -> Result<Vec<usize>, OperatorError> {
        xs.iter()
            .map(|x| {
                self.index_of(x)
                    .ok_or_else(|| OperatorError::SiteOutside(x.0.clone()))
            })
            .collect()
    }

    fn check_cap(&self, cap: usize) -> Result<(), OperatorError> {
        if self.len() > cap {
            return Err(OperatorError::TooLarge {
                size: self.len(),
                cap,
            });
        }
        Ok(())
    }

    /// Eigenvalues in ascending order, with multiplicity.
    pub fn spectrum(&self, cap: usize) -> Result<Vec<f64>, OperatorError> {
        self.check_cap(cap)?;
        let mut ev: Vec<f64> = self.matrix.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        Ok(ev)
    }

    /// Eigenpairs with ascending eigenvalues; eigenvectors are columns.
    pub fn eigen(&self, cap: usize) -> Result<Eigensystem, OperatorError> {
        self.check_cap(cap)?;
        let SymmetricEigen {
            eigenvalues,
            eigenvectors,
        } = self.matrix.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eigenvalues[a].total_cmp(&eigenvalues[b]));
        let values = order.iter().map(|&i| eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(self.len(), self.len(), |r, c| eigenvectors[(r, order[c])]);
        Ok(Eigensystem { values, vectors })
    }

    /// Block `rows x cols` of `(H - E)^{-1}` by one LU solve per column.
    ///
    /// The caller certifies `E` is off the spectrum; see [`spectral_distance`].
    pub fn green_block(&self, energy: f64, rows: &[usize], cols: &[usize]) -> Result<DMatrix<f64>, OperatorError> {
        let n = self.len();
        let mut shifted = self.matrix.clone();
        for i in 0..n {
            shifted[(i, i)] -= energy;
        }
        let lu = shifted.clone().lu();
        let mut rhs = DMatrix::zeros(n, cols.len());
        for (c, &j) in cols.iter().enumerate() {
            rhs[(j, c)] = 1.0;
        }
        let sol = lu
            .solve(&rhs)
            .ok_or(OperatorError::NearSingular { distance: 0.0 })?;
        let residual = (&shifted * &sol - &rhs)
            .column_iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        if !(residual <= RESIDUAL_TOL) {
            return Err(OperatorError::InaccurateSolve { residual });
        }
        Ok(DMatrix::from_fn(rows.len(), cols.len(), |r, c| sol[(rows[r], c)]))
    }

    /// Green block after certifying `dist(E, spectrum) > tol`.
    pub fn checked_green_block(
        &self,
        energy: f64,
        rows: &[usize],
        cols: &[usize],
        settings: &SolverSettings,
    ) -> Result<DMatrix<f64>, OperatorError> {
        let distance = spectral_distance(&self.spectrum(settings.dense_cap)?, energy);
        if distance <= settings.near_singular_tol {
            return Err(OperatorError::NearSingular { distance });
        }
        self.green_block(energy, rows, cols)
    }
}

/// Eigenvalues ascending; `vectors.column(j)` belongs to `values[j]`.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl Eigensystem {
    /// `G(x, y; E)` from the spectral representation.
    pub fn green_entry(&self, x: usize, y: usize, energy: f64) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(j, &l)| self.vectors[(x, j)] * self.vectors[(y, j)] / (l - energy))
            .sum()
    }
}

pub fn spectral_distance(spectrum: &[f64], energy: f64) -> f64 {
    spectrum
        .iter()
        .map(|l| (l - energy).abs())
        .fold(f64::INFINITY, f64::min)
}

/// Largest singular value, computed on a rescaled copy to keep tiny blocks
/// away from underflow.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax();
    if scale == 0.0 || m.is_empty() {
        return 0.0;
    }
    let scaled = m / scale;
    let sv = scaled.svd(false, false).singular_values;
    scale * sv.max()
}

/// `[Φ, Δ]` on `ambient`, with Φ the indicator of the cube shrunk by one layer.
pub fn commutator_matrix(cube: &CubeSpec, ambient: &[LatticePoint]) -> DMatrix<f64> {
    let inner_radius = cube.radius() as i64 - 1;
    let phi = |x: &LatticePoint| -> f64 {
        if inner_radius >= 0 && cube.depth_of(&x.0) as i64 <= inner_radius {
            1.0
        } else {
            0.0
        }
    };
    let n = ambient.len();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if ambient[i].l1_dist(&ambient[j]) == 1 {
                // Δ_{xy} = -1 off the diagonal; diagonal terms commute with Φ
                w[(i, j)] = -(phi(&ambient[i]) - phi(&ambient[j]));
            }
        }
    }
    w
}

pub fn commutator_norm(cube: &CubeSpec, mode: CommutatorMode) -> f64 {
    match mode {
        CommutatorMode::Bound => 8.0 * cube.dim() as f64,
        CommutatorMode::Exact => spectral_norm(&commutator_matrix(cube, &cube.sites())),
    }
}

/// `C_W = Y^d ‖W‖`.
pub fn decay_constant(cube: &CubeSpec, growth: u64, mode: CommutatorMode) -> f64 {
    (growth as f64).powi(cube.dim() as i32) * commutator_norm(cube, mode)
}

/// Outcome of one Green-function probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub cube: CubeSpec,
    pub energy: f64,
    /// `+inf` when the energy is within tolerance of the spectrum.
    pub dnorm: f64,
    pub spectral_distance: f64,
    pub is_ns: bool,
    pub is_nr: bool,
    pub cnr_detail: Vec<bool>,
}

/// The decay functional `C_W ‖1_Γ G χ_core‖` on a cube of size divisible by 3.
///
/// Γ is the two outermost layers; for sizes below 5 that is the whole cube.
pub fn dnorm(
    cube: &CubeSpec,
    energy: f64,
    potential: &dyn Potential,
    growth: u64,
    settings: &SolverSettings,
) -> Result<(f64, f64), OperatorError> {
    let h = LocalHamiltonian::on_cube(cube, potential)?;
    dnorm_of(&h, cube, energy, growth, settings)
}

/// As [`dnorm`], returning `(dnorm, spectral distance)` for a prebuilt operator.
pub fn dnorm_of(
    h: &LocalHamiltonian,
    cube: &CubeSpec,
    energy: f64,
    growth: u64,
    settings: &SolverSettings,
) -> Result<(f64, f64), OperatorError> {
    let distance = spectral_distance(&h.spectrum(settings.dense_cap)?, energy);
    if distance <= settings.near_singular_tol {
        return Ok((f64::INFINITY, distance));
    }
    let (core, _) = cube.core_shell()?;
    let rows = h.indices_of(&cube.outer_layers(2))?;
    let cols = h.indices_of(&core.sites())?;
    let block = h.green_block(energy, &rows, &cols)?;
    let c_w = decay_constant(cube, growth, settings.commutator);
    Ok((c_w * spectral_norm(&block), distance))
}

pub fn classify_ns(dnorm: f64, threshold: f64) -> bool {
    dnorm.is_finite() && dnorm <= threshold
}

pub fn classify_nr(spectral_distance: f64, threshold: f64) -> bool {
    spectral_distance >= threshold
}

/// Full probe of one cube: decay functional plus both classifications.
pub fn probe(
    cube: &CubeSpec,
    energy: f64,
    potential: &dyn Potential,
    growth: u64,
    ns_threshold: f64,
    nr_threshold: f64,
    settings: &SolverSettings,
) -> Result<ProbeResult, OperatorError> {
    let (value, distance) = dnorm(cube, energy, potential, growth, settings)?;
    Ok(ProbeResult {
        cube: cube.clone(),
        energy,
        dnorm: value,
        spectral_distance: distance,
        is_ns: classify_ns(value, ns_threshold),
        is_nr: classify_nr(distance, nr_threshold),
        cnr_detail: Vec::new(),
    })
}

/// Non-resonance of every concentric cube `(2r+1) cell` around `center`,
/// `r` over [`cnr_radii`] of the next growth factor.
pub fn classify_cnr(
    center: &LatticePoint,
    cell: u64,
    growth_next: u64,
    energy: f64,
    threshold: f64,
    potential: &dyn Potential,
    settings: &SolverSettings,
) -> Result<(bool, Vec<bool>), OperatorError> {
    let mut detail = Vec::new();
    for r in cnr_radii(growth_next) {
        let cube = CubeSpec::new(center.clone(), (2 * r + 1) * cell)?;
        let h = LocalHamiltonian::on_cube(&cube, potential)?;
        let d = spectral_distance(&h.spectrum(settings.dense_cap)?, energy);
        detail.push(classify_nr(d, threshold));
    }
    Ok((detail.iter().all(|&b| b), detail))
}

/// Both sides of the geometric resolvent inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GriResidual {
    pub lhs: f64,
    pub rhs: f64,
    pub commutator_norm: f64,
    pub inner_distance: f64,
    pub outer_distance: f64,
}

impl GriResidual {
    pub fn holds(&self, rel_tol: f64) -> bool {
        self.lhs <= self.rhs * (1.0 + rel_tol)
    }
}

/// `‖1_A G_{B'} χ‖` against `‖W‖ ‖1_A G_{B'} Γ_B‖ ‖Γ_B G_B χ‖`, with χ the core
/// of `inner` and `W` the exact commutator of `inner`.
pub fn gri_residual(
    inner: &CubeSpec,
    outer: &CubeSpec,
    energy: f64,
    exterior: &[LatticePoint],
    potential: &dyn Potential,
    settings: &SolverSettings,
) -> Result<GriResidual, OperatorError> {
    if !outer.contains_cube(inner) || inner.size() < 5 {
        return Err(GeometryError::InvalidCube(
            "inner cube must have size >= 5 and lie inside the outer cube".into(),
        )
        .into());
    }
    if exterior
        .iter()
        .any(|a| inner.contains(&a.0) || !outer.contains(&a.0))
    {
        return Err(GeometryError::InvalidCube("exterior set must lie in B' minus B".into()).into());
    }
    let (core, _) = inner.core_shell()?;
    let chi = core.sites();
    let gamma = inner.boundary_annulus()?;

    let h_in = LocalHamiltonian::on_cube(inner, potential)?;
    let h_out = LocalHamiltonian::on_cube(outer, potential)?;
    let inner_distance = spectral_distance(&h_in.spectrum(settings.dense_cap)?, energy);
    let outer_distance = spectral_distance(&h_out.spectrum(settings.dense_cap)?, energy);
    let distance = inner_distance.min(outer_distance);
    if distance <= settings.near_singular_tol {
        return Err(OperatorError::NearSingular { distance });
    }

    let a_out = h_out.indices_of(exterior)?;
    let chi_out = h_out.indices_of(&chi)?;
    let gamma_out = h_out.indices_of(&gamma)?;
    let mut cols = chi_out.clone();
    cols.extend_from_slice(&gamma_out);
    let g_out = h_out.green_block(energy, &a_out, &cols)?;
    let lhs = spectral_norm(&g_out.columns(0, chi_out.len()).into_owned());
    let through = spectral_norm(&g_out.columns(chi_out.len(), gamma_out.len()).into_owned());

    let g_in = h_in.green_block(energy, &h_in.indices_of(&gamma)?, &h_in.indices_of(&chi)?)?;
    let w = commutator_norm(inner, CommutatorMode::Exact);
    Ok(GriResidual {
        lhs,
        rhs: w * through * spectral_norm(&g_in),
        commutator_norm: w,
        inner_distance,
        outer_distance,
    })
}

/// `max_{y on the interior boundary} |G_{B_L(x)}(x, y; E)|`, `+inf` on the spectrum.
pub fn boundary_max_green(
    center: &LatticePoint,
    size: u64,
    energy: f64,
    potential: &dyn Potential,
    settings: &SolverSettings,
) -> Result<f64, OperatorError> {
    let cube = CubeSpec::new(center.clone(), size)?;
    let h = LocalHamiltonian::on_cube(&cube, potential)?;
    let distance = spectral_distance(&h.spectrum(settings.dense_cap)?, energy);
    if distance <= settings.near_singular_tol {
        return Ok(f64::INFINITY);
    }
    let rows = h.indices_of(&cube.inner_boundary())?;
    let col = h.indices_of(std::slice::from_ref(center))?;
    let block = h.green_block(energy, &rows, &col)?;
    Ok(block.amax())
}
