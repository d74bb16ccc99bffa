//! Scale parameters for desk-size experiments, imported from engine records.

use serde::{Deserialize, Serialize};

use crate::afs::ScaleRecord;
use crate::operator::CommutatorMode;

use super::McError;

/// Growth factor standing in for `Y_0`, which the recursion leaves undefined.
pub const INITIAL_GROWTH: u64 = 9;

/// The next scale as seen from scale `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NextScale {
    pub size: u64,
    pub growth: u64,
    pub budget: u64,
    pub good: u64,
    /// `a_{k+1} = (3 Y_{k+1} - 4)^d`.
    pub cells: u64,
}

/// Scale `k` in machine numbers. Desk sizes violate the engine's `L_0`
/// threshold; the harness checks implications, not hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeskScale {
    pub dim: usize,
    pub k: u32,
    pub size: u64,
    pub growth: u64,
    pub b: f64,
    pub s: f64,
    pub next: Option<NextScale>,
}

fn small(c: &crate::afs::Count, what: &str) -> Result<u64, McError> {
    c.exact()
        .and_then(|n| n.to_u64())
        .ok_or_else(|| McError::InvalidParams(format!("{what} is not a desk-size integer")))
}

impl DeskScale {
    /// Scale `k` of `records`, with its successor when present and small
    /// enough for machine integers.
    pub fn from_records(dim: usize, records: &[ScaleRecord], k: u32) -> Result<Self, McError> {
        let rec = records
            .get(k as usize)
            .ok_or_else(|| McError::InvalidParams(format!("no record for scale {k}")))?;
        let growth = match &rec.growth {
            Some(y) => small(y, "Y_k")?,
            None => INITIAL_GROWTH,
        };
        let ratio = |r: &crate::afs::Ratio, what: &str| {
            r.exact()
                .map(|q| q.to_f64())
                .ok_or_else(|| McError::InvalidParams(format!("{what} is not exact")))
        };
        let next = match records.get(k as usize + 1) {
            Some(n) => {
                let field = |c: &Option<crate::afs::Count>, what: &str| {
                    c.as_ref()
                        .ok_or_else(|| McError::InvalidParams(format!("{what} missing")))
                        .and_then(|c| small(c, what))
                };
                let build = || -> Result<NextScale, McError> {
                    Ok(NextScale {
                        size: small(&n.size, "L_{k+1}")?,
                        growth: field(&n.growth, "Y_{k+1}")?,
                        budget: field(&n.budget, "S_{k+1}")?,
                        good: field(&n.good, "N_{k+1}")?,
                        cells: field(&n.cells, "a_{k+1}")?,
                    })
                };
                build().ok()
            }
            None => None,
        };
        Ok(DeskScale {
            dim,
            k,
            size: small(&rec.size, "L_k")?,
            growth,
            b: ratio(&rec.b, "b_k")?,
            s: ratio(&rec.s, "s_k")?,
            next,
        })
    }

    pub fn next(&self) -> Result<&NextScale, McError> {
        self.next
            .as_ref()
            .ok_or_else(|| McError::InvalidParams(format!("scale {} has no successor", self.k)))
    }

    /// Skeleton cell side `L_k / 3`.
    pub fn cell(&self) -> u64 {
        self.size / 3
    }

    /// `L_k^{-b_k}`.
    pub fn ns_threshold(&self) -> f64 {
        (self.size as f64).powf(-self.b)
    }

    /// `C_{W,k} = Y_k^d ‖W‖`.
    pub fn decay_constant(&self, mode: CommutatorMode) -> Result<f64, McError> {
        let cube = crate::geometry::CubeSpec::centered(self.dim, self.size)?;
        Ok(crate::operator::decay_constant(&cube, self.growth, mode))
    }

    /// `L_{k+1}^{-s_k}`.
    pub fn cnr_threshold(&self) -> Result<f64, McError> {
        Ok((self.next()?.size as f64).powf(-self.s))
    }

    /// `L_k^{d/8} L_k^{-b_k N_{k+1}}`.
    pub fn conclusion_bound(&self) -> Result<f64, McError> {
        let l = self.size as f64;
        Ok(l.powf(self.dim as f64 / 8.0 - self.b * self.next()?.good as f64))
    }
}
