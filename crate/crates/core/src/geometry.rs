//! Cubes, cells, annuli and skeleton graphs on the integer lattice.
//!
//! Sites are always enumerated lexicographically (first coordinate most
//! significant). Every matrix in the crate is assembled in that order.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dimensions supported by the lab.
pub const MAX_DIM: usize = 3;

/// Above this many flagged centers the disjoint count falls back to greedy.
pub const EXACT_DISJOINT_LIMIT: usize = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeometryError {
    #[error("invalid cube: {0}")]
    InvalidCube(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("invalid annulus: size {0} is below 5")]
    InvalidAnnulus(u64),
    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatticePoint(pub Vec<i64>);

impl LatticePoint {
    pub fn origin(dim: usize) -> Self {
        LatticePoint(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    /// Max-norm distance.
    pub fn max_dist(&self, other: &LatticePoint) -> u64 {
        max_dist(&self.0, &other.0)
    }

    pub fn l1_dist(&self, other: &LatticePoint) -> u64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.abs_diff(*b))
            .sum()
    }
}

impl From<Vec<i64>> for LatticePoint {
    fn from(v: Vec<i64>) -> Self {
        LatticePoint(v)
    }
}

pub fn max_dist(a: &[i64], b: &[i64]) -> u64 {
    a.iter().zip(b).map(|(x, y)| x.abs_diff(*y)).max().unwrap_or(0)
}

/// The cube `{y : |y - center| <= (size-1)/2}` in max-norm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubeSpec {
    center: LatticePoint,
    size: u64,
    scale: Option<u32>,
}

impl CubeSpec {
    pub fn new(center: LatticePoint, size: u64) -> Result<Self, GeometryError> {
        if size == 0 || size.is_multiple_of(2) {
            return Err(GeometryError::InvalidCube(format!(
                "size must be odd and positive, got {size}"
            )));
        }
        if center.dim() == 0 || center.dim() > MAX_DIM {
            return Err(GeometryError::InvalidCube(format!(
                "dimension must be in 1..={MAX_DIM}, got {}",
                center.dim()
            )));
        }
        Ok(CubeSpec {
            center,
            size,
            scale: None,
        })
    }

    pub fn centered(dim: usize, size: u64) -> Result<Self, GeometryError> {
        Self::new(LatticePoint::origin(dim), size)
    }

    pub fn with_scale(mut self, k: u32) -> Self {
        self.scale = Some(k);
        self
    }

    pub fn scale(&self) -> Option<u32> {
        self.scale
    }

    pub fn center(&self) -> &LatticePoint {
        &self.center
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn radius(&self) -> u64 {
        (self.size - 1) / 2
    }

    pub fn volume(&self) -> usize {
        (self.size as usize).pow(self.dim() as u32)
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        x.len() == self.dim() && max_dist(x, &self.center.0) <= self.radius()
    }

    /// Contains every site of `other`.
    pub fn contains_cube(&self, other: &CubeSpec) -> bool {
        other.dim() == self.dim()
            && self.center.max_dist(&other.center) + other.radius() <= self.radius()
    }

    /// Max-norm distance of a site from the center.
    pub fn depth_of(&self, x: &[i64]) -> u64 {
        max_dist(x, &self.center.0)
    }

    /// Lexicographic position of `x`, if inside.
    pub fn index_of(&self, x: &[i64]) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let r = self.radius() as i64;
        let l = self.size as usize;
        let mut idx = 0usize;
        for (xi, ci) in x.iter().zip(&self.center.0) {
            idx = idx * l + (xi - ci + r) as usize;
        }
        Some(idx)
    }

    pub fn site_at(&self, mut idx: usize) -> LatticePoint {
        let l = self.size as usize;
        let r = self.radius() as i64;
        let d = self.dim();
        let mut coords = vec![0i64; d];
        for i in (0..d).rev() {
            coords[i] = self.center.0[i] - r + (idx % l) as i64;
            idx /= l;
        }
        LatticePoint(coords)
    }

    /// All sites in canonical order.
    pub fn sites(&self) -> Vec<LatticePoint> {
        (0..self.volume()).map(|i| self.site_at(i)).collect()
    }

    /// Sites at max-distance greater than `R - width` from the center.
    pub fn outer_layers(&self, width: u64) -> Vec<LatticePoint> {
        let r = self.radius();
        self.sites()
            .into_iter()
            .filter(|x| self.depth_of(&x.0) + width > r)
            .collect()
    }

    /// The width-2 boundary annulus, only defined for proper annuli.
    pub fn boundary_annulus(&self) -> Result<Vec<LatticePoint>, GeometryError> {
        if self.size < 5 {
            return Err(GeometryError::InvalidAnnulus(self.size));
        }
        Ok(self.outer_layers(2))
    }

    /// Interior boundary: sites at max-distance exactly R.
    pub fn inner_boundary(&self) -> Vec<LatticePoint> {
        self.outer_layers(1)
    }

    /// Central cell of side `size/3` and the remaining sites.
    pub fn core_shell(&self) -> Result<(CubeSpec, Vec<LatticePoint>), GeometryError> {
        if !self.size.is_multiple_of(3) {
            return Err(GeometryError::InvalidPartition(format!(
                "size {} is not divisible by 3",
                self.size
            )));
        }
        let core = CubeSpec::new(self.center.clone(), self.size / 3)?;
        let shell = self
            .sites()
            .into_iter()
            .filter(|x| !core.contains(&x.0))
            .collect();
        Ok((core, shell))
    }

    /// Admissible cell centers of side `cell` inside this cube.
    pub fn cell_centers(&self, cell: u64) -> Result<Vec<LatticePoint>, GeometryError> {
        let per_axis = self.cells_per_axis(cell)?;
        let grid = CubeSpec::new(LatticePoint::origin(self.dim()), per_axis)?;
        let c = cell as i64;
        Ok(grid
            .sites()
            .into_iter()
            .map(|j| {
                LatticePoint(
                    j.0.iter()
                        .zip(&self.center.0)
                        .map(|(ji, ci)| ci + c * ji)
                        .collect(),
                )
            })
            .collect())
    }

    fn cells_per_axis(&self, cell: u64) -> Result<u64, GeometryError> {
        if cell == 0 || cell.is_multiple_of(2) || !self.size.is_multiple_of(cell) || (self.size / cell).is_multiple_of(2) {
            return Err(GeometryError::InvalidPartition(format!(
                "cube of size {} does not split into an odd number of cells of size {cell}",
                self.size
            )));
        }
        if self.center.0.iter().any(|c| c.rem_euclid(cell as i64) != 0) {
            return Err(GeometryError::InvalidPartition(format!(
                "center {:?} is not admissible for cell size {cell}",
                self.center.0
            )));
        }
        Ok(self.size / cell)
    }
}

/// Admissible center of the cell of side `cell` containing `x`.
pub fn cell_center_of(x: &[i64], cell: u64) -> LatticePoint {
    let c = cell as i64;
    let h = (c - 1) / 2;
    LatticePoint(x.iter().map(|xi| c * (xi + h).div_euclid(c)).collect())
}

/// Admissible centers whose cells meet `sites`, sorted.
pub fn covering_centers(sites: &[LatticePoint], cell: u64) -> Vec<LatticePoint> {
    let set: BTreeSet<LatticePoint> = sites.iter().map(|x| cell_center_of(&x.0, cell)).collect();
    set.into_iter().collect()
}

/// Cells of a cube arranged by graph distance from the central cell.
#[derive(Debug, Clone)]
pub struct SkeletonGraph {
    center: LatticePoint,
    cell_size: u64,
    layers: Vec<Vec<LatticePoint>>,
}

impl SkeletonGraph {
    pub fn build(cube: &CubeSpec, cell: u64) -> Result<Self, GeometryError> {
        let per_axis = cube
            .cells_per_axis(cell)
            .map_err(|e| GeometryError::InvalidSkeleton(e.to_string()))?;
        let radius = (per_axis - 1) / 2;
        let mut layers = vec![Vec::new(); radius as usize + 1];
        for v in cube.cell_centers(cell)? {
            let r = v.max_dist(cube.center()) / cell;
            layers[r as usize].push(v);
        }
        Ok(SkeletonGraph {
            center: cube.center().clone(),
            cell_size: cell,
            layers,
        })
    }

    pub fn radius(&self) -> u64 {
        self.layers.len() as u64 - 1
    }

    pub fn cell_size(&self) -> u64 {
        self.cell_size
    }

    pub fn center(&self) -> &LatticePoint {
        &self.center
    }

    pub fn layer(&self, r: u64) -> &[LatticePoint] {
        &self.layers[r as usize]
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    /// Vertices within graph distance `r`.
    pub fn ball(&self, r: u64) -> Vec<LatticePoint> {
        self.layers
            .iter()
            .take(r as usize + 1)
            .flatten()
            .cloned()
            .collect()
    }

    pub fn vertices(&self) -> Vec<LatticePoint> {
        self.ball(self.radius())
    }

    pub fn layer_of(&self, v: &LatticePoint) -> u64 {
        v.max_dist(&self.center) / self.cell_size
    }

    /// Pairs of vertex indices (into `vertices()`) at max-distance one cell.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let vs = self.vertices();
        let mut out = Vec::new();
        for i in 0..vs.len() {
            for j in i + 1..vs.len() {
                if vs[i].max_dist(&vs[j]) == self.cell_size {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// The cube formed by all cells within graph distance `r`.
    pub fn ball_cube(&self, r: u64) -> CubeSpec {
        CubeSpec::new(self.center.clone(), (2 * r + 1) * self.cell_size)
            .expect("odd multiple of an odd cell size")
    }
}

/// Radii of the concentric cubes tested for complete non-resonance when the
/// next scale has growth factor `y_next = 2K+1`: `K..=3K-1`.
pub fn cnr_radii(y_next: u64) -> std::ops::RangeInclusive<u64> {
    let k = (y_next - 1) / 2;
    k..=(3 * k).saturating_sub(1)
}

/// Size of a disjoint family and whether it is provably maximal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisjointCount {
    pub count: usize,
    pub exact: bool,
}

/// Largest family of pairwise disjoint cubes of side `side` centered at `centers`.
pub fn max_disjoint_count(centers: &[LatticePoint], side: u64) -> DisjointCount {
    let mut sorted: Vec<&LatticePoint> = centers.iter().collect();
    sorted.sort();
    sorted.dedup();
    if sorted.len() <= EXACT_DISJOINT_LIMIT {
        let n = sorted.len();
        let conflicts: Vec<u32> = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i && sorted[i].max_dist(sorted[j]) < side)
                    .fold(0u32, |m, j| m | (1 << j))
            })
            .collect();
        let full = if n == 0 { 0 } else { u32::MAX >> (32 - n) };
        DisjointCount {
            count: max_independent(full, &conflicts, 0, 0),
            exact: true,
        }
    } else {
        let mut taken: Vec<&LatticePoint> = Vec::new();
        for c in sorted {
            if taken.iter().all(|t| t.max_dist(c) >= side) {
                taken.push(c);
            }
        }
        DisjointCount {
            count: taken.len(),
            exact: false,
        }
    }
}

fn max_independent(candidates: u32, conflicts: &[u32], size: usize, best: usize) -> usize {
    if candidates == 0 {
        return size.max(best);
    }
    if size + candidates.count_ones() as usize <= best {
        return best;
    }
    let v = candidates.trailing_zeros() as usize;
    let rest = candidates & !(1 << v);
    let best = max_independent(rest & !conflicts[v], conflicts, size + 1, best);
    max_independent(rest, conflicts, size, best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(v: &[i64]) -> LatticePoint {
        LatticePoint(v.to_vec())
    }

    fn firsts(sites: &[LatticePoint]) -> Vec<i64> {
        sites.iter().map(|s| s.0[0]).collect()
    }

    #[test]
    fn cube_sites_are_lexicographic() {
        let c = CubeSpec::centered(1, 9).unwrap();
        assert_eq!(firsts(&c.sites()), (-4..=4).collect::<Vec<_>>());
        let c2 = CubeSpec::centered(2, 9).unwrap();
        let s = c2.sites();
        assert_eq!(s.len(), 81);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(CubeSpec::centered(3, 1).unwrap().sites(), vec![pt(&[0, 0, 0])]);
    }

    #[test]
    fn even_or_zero_sizes_are_rejected() {
        assert!(CubeSpec::centered(1, 4).is_err());
        assert!(CubeSpec::centered(1, 0).is_err());
        assert!(CubeSpec::centered(4, 3).is_err());
    }

    #[test]
    fn index_round_trips() {
        let c = CubeSpec::new(pt(&[3, -6]), 7).unwrap();
        for (i, s) in c.sites().iter().enumerate() {
            assert_eq!(c.index_of(&s.0), Some(i));
        }
        assert_eq!(c.index_of(&[100, 0]), None);
    }

    #[test]
    fn core_and_shell() {
        let (core, shell) = CubeSpec::centered(1, 9).unwrap().core_shell().unwrap();
        assert_eq!(firsts(&core.sites()), vec![-1, 0, 1]);
        assert_eq!(firsts(&shell), vec![-4, -3, -2, 2, 3, 4]);
        let (core, shell) = CubeSpec::centered(2, 27).unwrap().core_shell().unwrap();
        assert_eq!((core.volume(), shell.len()), (81, 648));
        let (core, shell) = CubeSpec::centered(1, 3).unwrap().core_shell().unwrap();
        assert_eq!((firsts(&core.sites()), firsts(&shell)), (vec![0], vec![-1, 1]));
        assert!(CubeSpec::centered(1, 7).unwrap().core_shell().is_err());
    }

    #[test]
    fn annulus_layers() {
        let a = CubeSpec::centered(1, 9).unwrap().boundary_annulus().unwrap();
        assert_eq!(firsts(&a), vec![-4, -3, 3, 4]);
        assert_eq!(CubeSpec::centered(2, 9).unwrap().boundary_annulus().unwrap().len(), 56);
        let a = CubeSpec::centered(1, 5).unwrap().boundary_annulus().unwrap();
        assert_eq!(firsts(&a), vec![-2, -1, 1, 2]);
        assert_eq!(
            CubeSpec::centered(1, 3).unwrap().boundary_annulus(),
            Err(GeometryError::InvalidAnnulus(3))
        );
    }

    #[test]
    fn covering_centers_examples() {
        assert_eq!(covering_centers(&[pt(&[0])], 3), vec![pt(&[0])]);
        let all = CubeSpec::centered(1, 9).unwrap().sites();
        assert_eq!(covering_centers(&all, 3), vec![pt(&[-3]), pt(&[0]), pt(&[3])]);
        let ann = CubeSpec::centered(1, 9).unwrap().boundary_annulus().unwrap();
        assert_eq!(covering_centers(&ann, 3), vec![pt(&[-3]), pt(&[3])]);
    }

    #[test]
    fn skeleton_examples() {
        let s = SkeletonGraph::build(&CubeSpec::centered(1, 27).unwrap(), 3).unwrap();
        assert_eq!(s.radius(), 4);
        assert_eq!(firsts(&s.vertices()).len(), 9);
        let mut v = firsts(&s.vertices());
        v.sort();
        assert_eq!(v, (-4..=4).map(|j| 3 * j).collect::<Vec<_>>());
        // growth factor 3 between 9 and 27: K = 1, R = 3K + 1
        assert_eq!(s.radius(), 3 + 1);

        let one = SkeletonGraph::build(&CubeSpec::centered(2, 5).unwrap(), 5).unwrap();
        assert_eq!((one.radius(), one.vertices().len()), (0, 1));

        let s2 = SkeletonGraph::build(&CubeSpec::centered(2, 27).unwrap(), 3).unwrap();
        assert_eq!(s2.vertices().len(), 81);
        assert_eq!(s2.layer_sizes(), vec![1, 8, 16, 24, 32]);
        assert!(SkeletonGraph::build(&CubeSpec::centered(1, 27).unwrap(), 9 * 3).is_ok());
        assert!(SkeletonGraph::build(&CubeSpec::centered(1, 27).unwrap(), 5).is_err());
    }

    #[test]
    fn skeleton_edges_are_unit_cell_steps() {
        let s = SkeletonGraph::build(&CubeSpec::centered(2, 9).unwrap(), 3).unwrap();
        // 3x3 king graph: 12 axial + 8 diagonal edges
        assert_eq!(s.edges().len(), 20);
    }

    #[test]
    fn cnr_radius_count_is_growth_minus_one() {
        for y in [3u64, 9, 11, 27] {
            assert_eq!(cnr_radii(y).count() as u64, y - 1);
        }
        assert_eq!(cnr_radii(9), 4..=11);
    }

    #[test]
    fn disjoint_count_examples() {
        assert_eq!(max_disjoint_count(&[], 9), DisjointCount { count: 0, exact: true });
        assert_eq!(max_disjoint_count(&[pt(&[0])], 9).count, 1);
        let c = [pt(&[0]), pt(&[3]), pt(&[9])];
        assert_eq!(max_disjoint_count(&c, 9), DisjointCount { count: 2, exact: true });
    }

    #[test]
    fn subcube_annulus_in_two_dims_can_exceed_y_squared_cells() {
        // growth factor 9, cells of side 3: the concentric sub-cube of radius
        // 12 cells has its annulus in the 96 cells of layer 12
        let sub = CubeSpec::centered(2, 25 * 3).unwrap();
        let gamma = sub.boundary_annulus().unwrap();
        let cells = covering_centers(&gamma, 3).len();
        assert_eq!(cells, 96);
        assert!(cells > 9 * 9);
    }

    fn brute_force(centers: &[LatticePoint], side: u64) -> usize {
        let n = centers.len();
        (0u32..1 << n)
            .filter(|mask| {
                (0..n).all(|i| {
                    (0..n).all(|j| {
                        i == j
                            || mask & (1 << i) == 0
                            || mask & (1 << j) == 0
                            || centers[i].max_dist(&centers[j]) >= side
                    })
                })
            })
            .map(|m| m.count_ones() as usize)
            .max()
            .unwrap_or(0)
    }

    fn centers_strategy(max: usize) -> impl Strategy<Value = Vec<LatticePoint>> {
        prop::collection::btree_set((-6i64..=6, -6i64..=6), 0..max).prop_map(|s| {
            s.into_iter()
                .map(|(a, b)| LatticePoint(vec![3 * a, 3 * b]))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn core_shell_partition(d in 1usize..=3, m in 0u64..3, cx in -4i64..4) {
            let size = 3 * (2 * m + 1);
            let mut center = vec![0i64; d];
            center[0] = cx;
            let cube = CubeSpec::new(LatticePoint(center), size).unwrap();
            let (core, shell) = cube.core_shell().unwrap();
            prop_assert_eq!(core.volume() + shell.len(), cube.volume());
            prop_assert_eq!(core.volume(), ((size / 3) as usize).pow(d as u32));
            prop_assert!(shell.iter().all(|s| !core.contains(&s.0) && cube.contains(&s.0)));
        }

        #[test]
        fn exact_disjoint_matches_brute_force(c in centers_strategy(12), side in 1u64..12) {
            prop_assert_eq!(max_disjoint_count(&c, side).count, brute_force(&c, side));
        }

        #[test]
        fn disjoint_count_monotone(c in centers_strategy(30), extra in (-6i64..=6, -6i64..=6)) {
            let mut more = c.clone();
            more.push(LatticePoint(vec![3 * extra.0, 3 * extra.1]));
            let a = max_disjoint_count(&c, 9);
            let b = max_disjoint_count(&more, 9);
            if a.exact && b.exact {
                prop_assert!(b.count >= a.count);
            }
            if c.len() <= EXACT_DISJOINT_LIMIT {
                let mut greedy = Vec::<&LatticePoint>::new();
                let mut sorted = c.clone();
                sorted.sort();
                for p in &sorted {
                    if greedy.iter().all(|t| t.max_dist(p) >= 9) { greedy.push(p); }
                }
                prop_assert!(a.count >= greedy.len());
            }
        }

        #[test]
        fn subcube_annulus_in_one_dim_meets_fewer_than_y_cells(
            y_half in 2u64..6, h in 0u64..1000, o in 0i64..1000,
        ) {
            let y = 2 * y_half + 1;
            let cell = 3u64;
            let big = CubeSpec::centered(1, 3 * y * cell).unwrap();
            let half = 2 + h % (big.radius() - 2);
            let room = (big.radius() - half) as i64;
            let off = o % (2 * room + 1) - room;
            let sub = CubeSpec::new(LatticePoint(vec![off]), 2 * half + 1).unwrap();
            prop_assert!(sub.size() < big.size() && big.contains_cube(&sub));
            let gamma = sub.boundary_annulus().unwrap();
            prop_assert!(covering_centers(&gamma, cell).len() < y as usize);
        }

        #[test]
        fn skeleton_layers_partition_vertices(half in 0u64..5, d in 1usize..=2) {
            let per_axis = 2 * half + 1;
            let cube = CubeSpec::centered(d, per_axis * 3).unwrap();
            let s = SkeletonGraph::build(&cube, 3).unwrap();
            let total: usize = s.layer_sizes().iter().sum();
            prop_assert_eq!(total, (per_axis as usize).pow(d as u32));
            for r in 0..s.radius() {
                prop_assert!(s.ball(r).len() < s.ball(r + 1).len());
                prop_assert!(s.ball(r).iter().all(|v| s.ball(r + 1).contains(v)));
            }
        }
    }
}
