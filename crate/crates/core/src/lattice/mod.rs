//! Cubic lattices and MERW step matrices.
//!
//! Sites are linearized row-major: the last coordinate runs fastest, so the
//! site with multi-index `(n_1, .., n_D)` sits at `Σ n_d · E^(D-d)` where `E`
//! is the number of sites along one axis. Hard walls are kept in the index
//! space as structurally zero rows and columns.

mod potential;

pub use potential::{
    Constant, Cosine, GaussianBump, Harmonic, Linear, Potential, ScalarField, SoftCoulomb, Zero,
};

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MerwError, Result};

/// Below this many sites a matrix-vector product is run on one thread.
const PARALLEL_MATVEC_THRESHOLD: usize = 32_768;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Infinite walls: the outermost layer of sites carries no weight.
    HardWall,
    /// Wraparound in every dimension.
    Periodic,
}

/// Geometry of a D-dimensional cubic lattice.
///
/// `sites_per_dim` is `N`: a hard-wall lattice has `N + 1` sites per axis
/// (`n = 0..=N`, walls at `0` and `N`), a periodic one has `N`. Coordinates are
/// `(n - N/2) · spacing`, in units of the reduced Compton wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    dims: usize,
    sites_per_dim: usize,
    spacing: f64,
    boundary: Boundary,
}

impl LatticeSpec {
    pub fn new(dims: usize, sites_per_dim: usize, spacing: f64, boundary: Boundary) -> Result<Self> {
        if dims == 0 {
            return Err(MerwError::InvalidLattice("dims must be positive".into()));
        }
        if sites_per_dim == 0 {
            return Err(MerwError::InvalidLattice("N must be positive".into()));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(MerwError::InvalidLattice(format!(
                "spacing must be positive and finite, got {spacing}"
            )));
        }
        let spec = Self {
            dims,
            sites_per_dim,
            spacing,
            boundary,
        };
        let total = spec
            .extent()
            .checked_pow(dims as u32)
            .ok_or_else(|| MerwError::InvalidLattice("site count overflows".into()))?;
        if total == 0 {
            return Err(MerwError::InvalidLattice("lattice has no sites".into()));
        }
        Ok(spec)
    }

    pub fn hard_wall(dims: usize, sites_per_dim: usize, spacing: f64) -> Result<Self> {
        Self::new(dims, sites_per_dim, spacing, Boundary::HardWall)
    }

    pub fn periodic(dims: usize, sites_per_dim: usize, spacing: f64) -> Result<Self> {
        Self::new(dims, sites_per_dim, spacing, Boundary::Periodic)
    }

    /// Hard-wall box in the natural-unit gauge: one step covers one reduced
    /// Compton wavelength of variance per coordinate, so `spacing = sqrt(D)`.
    pub fn natural_box(dims: usize, sites_per_dim: usize) -> Result<Self> {
        Self::hard_wall(dims, sites_per_dim, (dims as f64).sqrt())
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn sites_per_dim(&self) -> usize {
        self.sites_per_dim
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Box length `L = N δ`.
    pub fn length(&self) -> f64 {
        self.sites_per_dim as f64 * self.spacing
    }

    /// Number of sites along one axis.
    pub fn extent(&self) -> usize {
        match self.boundary {
            Boundary::HardWall => self.sites_per_dim + 1,
            Boundary::Periodic => self.sites_per_dim,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.extent().pow(self.dims as u32)
    }

    pub fn multi_index(&self, site: usize) -> Result<Vec<usize>> {
        let n_sites = self.n_sites();
        if site >= n_sites {
            return Err(MerwError::SiteOutOfRange {
                index: site,
                n_sites,
            });
        }
        let extent = self.extent();
        let mut idx = vec![0; self.dims];
        let mut rest = site;
        for d in (0..self.dims).rev() {
            idx[d] = rest % extent;
            rest /= extent;
        }
        Ok(idx)
    }

    pub fn linear_index(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.dims {
            return Err(MerwError::DimensionMismatch {
                expected: self.dims,
                got: idx.len(),
            });
        }
        let extent = self.extent();
        let mut site = 0;
        for &n in idx {
            if n >= extent {
                return Err(MerwError::SiteOutOfRange {
                    index: n,
                    n_sites: extent,
                });
            }
            site = site * extent + n;
        }
        Ok(site)
    }

    /// Coordinate of the `n`-th layer along any axis.
    pub fn coordinate(&self, n: usize) -> f64 {
        (n as f64 - self.sites_per_dim as f64 / 2.0) * self.spacing
    }

    /// Position of a site, `x_d = (n_d - N/2) δ`.
    pub fn site_coords(&self, site: usize) -> Result<Vec<f64>> {
        Ok(self
            .multi_index(site)?
            .into_iter()
            .map(|n| self.coordinate(n))
            .collect())
    }

    /// Site closest to the origin (exactly at it for even `N`).
    pub fn center_site(&self) -> usize {
        let mid = self.sites_per_dim / 2;
        let idx = vec![mid; self.dims];
        self.linear_index(&idx).expect("center inside lattice")
    }

    pub fn is_boundary(&self, site: usize) -> bool {
        match self.boundary {
            Boundary::Periodic => false,
            Boundary::HardWall => self
                .multi_index(site)
                .map(|idx| idx.iter().any(|&n| n == 0 || n == self.sites_per_dim))
                .unwrap_or(false),
        }
    }

    /// Neighbour one step forward along `axis`, if the lattice has one.
    pub fn forward_neighbour(&self, site: usize, axis: usize) -> Option<usize> {
        let mut idx = self.multi_index(site).ok()?;
        let extent = self.extent();
        match self.boundary {
            Boundary::HardWall => {
                if idx[axis] + 1 >= extent {
                    return None;
                }
                idx[axis] += 1;
            }
            Boundary::Periodic => idx[axis] = (idx[axis] + 1) % extent,
        }
        self.linear_index(&idx).ok()
    }

    /// Neighbour one step backward along `axis`, if the lattice has one.
    pub fn backward_neighbour(&self, site: usize, axis: usize) -> Option<usize> {
        let mut idx = self.multi_index(site).ok()?;
        let extent = self.extent();
        match self.boundary {
            Boundary::HardWall => {
                if idx[axis] == 0 {
                    return None;
                }
                idx[axis] -= 1;
            }
            Boundary::Periodic => idx[axis] = (idx[axis] + extent - 1) % extent,
        }
        self.linear_index(&idx).ok()
    }

    fn check_buildable(&self) -> Result<()> {
        match self.boundary {
            Boundary::HardWall if self.sites_per_dim < 2 => Err(MerwError::InvalidLattice(
                "hard-wall box needs N >= 2 to have interior sites".into(),
            )),
            // A two-site ring would join the same pair twice.
            Boundary::Periodic if self.sites_per_dim < 3 => Err(MerwError::InvalidLattice(
                "periodic lattice needs N >= 3".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Symmetric, non-negative nearest-neighbour operator stored row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMatrix {
    lattice: LatticeSpec,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
}

/// Free-particle step matrix: weight 1 between neighbouring interior sites.
pub fn build_box_step_matrix(spec: &LatticeSpec) -> Result<StepMatrix> {
    StepMatrix::from_edge_weights(spec, |_, _, _| Ok(1.0))
}

/// Step matrix in a potential with the mid-point rule,
/// `M(x, x + d δ) = exp(-V(x + d δ / 2))`, `V` in units of `mc²`.
pub fn build_potential_step_matrix(spec: &LatticeSpec, pot: &Potential) -> Result<StepMatrix> {
    let half = spec.spacing() / 2.0;
    StepMatrix::from_edge_weights(spec, |site, axis, x| {
        let mut mid = x.to_vec();
        mid[axis] += half;
        let v = pot.value(&mid);
        let w = (-v).exp();
        if !v.is_finite() || !w.is_finite() {
            return Err(MerwError::NonFinitePotential {
                label: pot.label().to_string(),
                site,
                axis,
                point: mid,
            });
        }
        Ok(w)
    })
}

impl StepMatrix {
    /// Builds a step matrix from a weight for every forward edge `(x, x + d)`.
    /// Each weight is computed once and stored in both orientations, so the
    /// result is symmetric bit for bit.
    fn from_edge_weights<F>(spec: &LatticeSpec, mut weight: F) -> Result<Self>
    where
        F: FnMut(usize, usize, &[f64]) -> Result<f64>,
    {
        spec.check_buildable()?;
        let n = spec.n_sites();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for site in 0..n {
            if spec.is_boundary(site) {
                continue;
            }
            let x = spec.site_coords(site)?;
            for axis in 0..spec.dims() {
                let Some(other) = spec.forward_neighbour(site, axis) else {
                    continue;
                };
                if spec.is_boundary(other) {
                    continue;
                }
                let w = weight(site, axis, &x)?;
                if w > 0.0 {
                    rows[site].push((other, w));
                    rows[other].push((site, w));
                }
            }
        }
        Ok(Self::from_rows(*spec, rows))
    }

    fn from_rows(lattice: LatticeSpec, mut rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_by_key(|&(j, _)| j);
            for &(j, w) in row.iter() {
                cols.push(j);
                weights.push(w);
            }
            row_ptr.push(cols.len());
        }
        Self {
            lattice,
            row_ptr,
            cols,
            weights,
        }
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn n_sites(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// Number of stored (nonzero) entries, counting both orientations.
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Nonzero entries `(column, weight)` of row `i`, sorted by column.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[range.clone()].binary_search(&j) {
            Ok(pos) => self.weights[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, w)| w).sum()
    }

    /// Largest absolute row sum, an upper bound on the spectral radius.
    pub fn max_row_sum(&self) -> f64 {
        (0..self.n_sites())
            .map(|i| self.row(i).map(|(_, w)| w.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Sites with at least one nonzero entry.
    pub fn support(&self) -> Vec<usize> {
        (0..self.n_sites()).filter(|&i| self.degree(i) > 0).collect()
    }

    pub fn support_mask(&self) -> Vec<bool> {
        (0..self.n_sites()).map(|i| self.degree(i) > 0).collect()
    }

    /// Connected components of the support graph, each sorted by site.
    pub fn support_components(&self) -> Vec<Vec<usize>> {
        let n = self.n_sites();
        let mut label = vec![usize::MAX; n];
        let mut components = Vec::new();
        for start in 0..n {
            if self.degree(start) == 0 || label[start] != usize::MAX {
                continue;
            }
            let id = components.len();
            let mut members = vec![start];
            label[start] = id;
            let mut head = 0;
            while head < members.len() {
                let x = members[head];
                head += 1;
                for (y, _) in self.row(x) {
                    if label[y] == usize::MAX {
                        label[y] = id;
                        members.push(y);
                    }
                }
            }
            members.sort_unstable();
            components.push(members);
        }
        components
    }

    /// `out = M v`. Each row is summed in column order, so the result does
    /// not depend on the number of threads.
    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.n_sites());
        assert_eq!(out.len(), self.n_sites());
        let row_value = |i: usize| -> f64 {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.weights[k] * v[self.cols[k]];
            }
            acc
        };
        if self.n_sites() >= PARALLEL_MATVEC_THRESHOLD {
            out.par_iter_mut()
                .enumerate()
                .for_each(|(i, o)| *o = row_value(i));
        } else {
            for (i, o) in out.iter_mut().enumerate() {
                *o = row_value(i);
            }
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_sites()];
        self.apply_into(v, &mut out);
        out
    }

    /// Copy with the given sites cut out (their rows and columns zeroed).
    pub fn with_blocked_sites(&self, blocked: &[usize]) -> Self {
        let mut mask = vec![false; self.n_sites()];
        for &b in blocked {
            if b < mask.len() {
                mask[b] = true;
            }
        }
        self.restricted(|i| !mask[i])
    }

    /// Copy keeping only entries whose endpoints both satisfy `keep`.
    pub fn restricted<F: Fn(usize) -> bool>(&self, keep: F) -> Self {
        let rows = (0..self.n_sites())
            .map(|i| {
                if !keep(i) {
                    return Vec::new();
                }
                self.row(i).filter(|&(j, _)| keep(j)).collect()
            })
            .collect();
        Self::from_rows(self.lattice, rows)
    }

    /// Largest `|M(x,y) - M(y,x)|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n_sites() {
            for (j, w) in self.row(i) {
                worst = worst.max((w - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Stored entries as `(i, j, w)` triples sorted by `(i, j)`.
    pub fn triples(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n_sites())
            .flat_map(|i| self.row(i).map(move |(j, w)| (i, j, w)))
            .collect()
    }

    /// Writes `i j w` lines, sorted by `(i, j)`, weights with 17 significant digits.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, j, w) in self.triples() {
            writeln!(out, "{i} {j} {w:.16e}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box1d(n: usize) -> StepMatrix {
        build_box_step_matrix(&LatticeSpec::hard_wall(1, n, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn coordinates_are_centered() {
        let spec = LatticeSpec::hard_wall(1, 32, 1.0).unwrap();
        assert_eq!(spec.site_coords(16).unwrap(), vec![0.0]);
        assert_eq!(spec.site_coords(0).unwrap(), vec![-16.0]);
        let spec2 = LatticeSpec::hard_wall(2, 4, 0.5).unwrap();
        let site = spec2.linear_index(&[1, 3]).unwrap();
        assert_eq!(site, 8);
        assert_eq!(spec2.site_coords(site).unwrap(), vec![-0.5, 0.5]);
    }

    #[test]
    fn out_of_range_site_is_an_error() {
        let spec = LatticeSpec::hard_wall(1, 4, 1.0).unwrap();
        assert!(matches!(
            spec.site_coords(5),
            Err(MerwError::SiteOutOfRange { index: 5, n_sites: 5 })
        ));
    }

    #[test]
    fn site_counts() {
        assert_eq!(LatticeSpec::hard_wall(3, 4, 1.0).unwrap().n_sites(), 125);
        assert_eq!(LatticeSpec::periodic(2, 8, 1.0).unwrap().n_sites(), 64);
        assert!(LatticeSpec::hard_wall(1, 4, 0.0).is_err());
        assert!(LatticeSpec::hard_wall(0, 4, 1.0).is_err());
    }

    #[test]
    fn box_n4_is_tridiagonal_on_interior() {
        let m = box1d(4);
        assert_eq!(
            m.triples(),
            vec![(1, 2, 1.0), (2, 1, 1.0), (2, 3, 1.0), (3, 2, 1.0)]
        );
        assert_eq!(m.degree(0), 0);
        assert_eq!(m.degree(4), 0);
    }

    #[test]
    fn ring_has_two_unit_entries_per_row() {
        let m = build_box_step_matrix(&LatticeSpec::periodic(1, 8, 1.0).unwrap()).unwrap();
        for i in 0..8 {
            assert_eq!(m.degree(i), 2);
            assert_eq!(m.row_sum(i), 2.0);
        }
        assert_eq!(m.get(0, 7), 1.0);
    }

    #[test]
    fn interior_site_in_2d_has_four_neighbours() {
        let spec = LatticeSpec::hard_wall(2, 4, 1.0).unwrap();
        let m = build_box_step_matrix(&spec).unwrap();
        let c = spec.linear_index(&[2, 2]).unwrap();
        assert_eq!(m.degree(c), 4);
        assert!(m.row(c).all(|(_, w)| w == 1.0));
        for site in 0..spec.n_sites() {
            if spec.is_boundary(site) {
                assert_eq!(m.row_sum(site), 0.0);
            }
        }
    }

    #[test]
    fn too_small_lattices_are_rejected() {
        assert!(build_box_step_matrix(&LatticeSpec::hard_wall(1, 1, 1.0).unwrap()).is_err());
        assert!(build_box_step_matrix(&LatticeSpec::periodic(1, 2, 1.0).unwrap()).is_err());
    }

    #[test]
    fn zero_potential_matches_box_bitwise() {
        for spec in [
            LatticeSpec::hard_wall(2, 6, 0.7).unwrap(),
            LatticeSpec::periodic(3, 4, 1.0).unwrap(),
        ] {
            let a = build_box_step_matrix(&spec).unwrap();
            let b = build_potential_step_matrix(&spec, &Potential::zero()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn constant_potential_scales_weights() {
        let spec = LatticeSpec::hard_wall(1, 8, 1.0).unwrap();
        let m = build_potential_step_matrix(&spec, &Potential::constant(0.3)).unwrap();
        for (_, _, w) in m.triples() {
            assert_eq!(w, (-0.3f64).exp());
        }
    }

    #[test]
    fn harmonic_midpoint_weight() {
        let spec = LatticeSpec::hard_wall(1, 256, 1.0).unwrap();
        let m = build_potential_step_matrix(&spec, &Potential::harmonic(0.02)).unwrap();
        let origin = spec.center_site();
        // Mid-point between x = 0 and x = 1 is x = 0.5.
        let expected = (-0.5f64 * 0.0004 * 0.25).exp();
        assert_eq!(m.get(origin, origin + 1), expected);
        assert!((expected - (-5e-5f64).exp()).abs() < 1e-18);
        assert_eq!(m.max_asymmetry(), 0.0);
    }

    #[test]
    fn non_finite_potential_names_the_site() {
        let spec = LatticeSpec::hard_wall(1, 4, 1.0).unwrap();
        let pot = Potential::from_fn("blowup", |x: &[f64]| if x[0] > 0.0 { f64::INFINITY } else { 0.0 });
        match build_potential_step_matrix(&spec, &pot) {
            Err(MerwError::NonFinitePotential { site, .. }) => assert_eq!(site, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dump_format() {
        let m = box1d(3);
        let mut buf = Vec::new();
        m.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "1 2 1.0000000000000000e0\n2 1 1.0000000000000000e0\n"
        );
    }

    #[test]
    fn blocked_sites_split_the_support() {
        let m = box1d(8).with_blocked_sites(&[4]);
        assert_eq!(m.support_components().len(), 2);
        assert_eq!(m.degree(4), 0);
        assert_eq!(m.get(3, 4), 0.0);
    }

    #[test]
    fn matvec_counts_paths() {
        let m = box1d(8);
        let mut v = vec![0.0; 9];
        v[4] = 1.0;
        let w = m.apply(&v);
        assert_eq!(w, vec![0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }
}
