//! Eigenpairs of symmetric step matrices.
//!
//! The iterative solver runs power iteration on `M + sI`, where `s` is the
//! largest absolute row sum. Averaging an iterate with its image in this way
//! makes the shifted operator positive semi-definite, which removes the
//! `-λ₀` mode that stalls plain power iteration on bipartite lattices, and
//! keeps the algebraic ordering of the spectrum. Excited states are found by
//! deflation against the pairs already converged.
//!
//! Eigenvectors are rays, so every vector is put in a canonical form: the
//! first component whose magnitude is within a relative `1e-6` of the largest
//! is made positive. Inside a degenerate cluster the basis is rebuilt by
//! projecting unit vectors `e_j` onto the cluster in increasing site order and
//! orthonormalizing, which makes both solvers return the same vectors.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{MerwError, Result};
use crate::lattice::StepMatrix;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;
/// Largest lattice the dense oracle accepts.
pub const DENSE_SITE_LIMIT: usize = 10_000;

const SIGN_TIE: f64 = 1e-6;
const CLUSTER_ACCEPT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPair {
    /// Position in descending eigenvalue order, `0` for the dominant pair.
    pub index: usize,
    pub eigenvalue: f64,
    /// Unit-norm eigenvector over all lattice sites.
    pub eigenvector: Vec<f64>,
    /// `‖M ψ - λ ψ‖∞` at return.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    /// Pairs with `λ₀ ≥ λ₁ ≥ …`.
    pub pairs: Vec<SpectralPair>,
    /// Some returned eigenvalues coincide within the degeneracy tolerance.
    pub degenerate: bool,
    /// A degenerate cluster straddles the requested cut.
    pub cluster_split_at_cut: bool,
}

impl SpectralBasis {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.eigenvalue).collect()
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.pairs[i].eigenvector
    }

    /// `max |⟨i|j⟩ - δ_ij|`.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.pairs.iter().enumerate() {
            for (j, b) in self.pairs.iter().enumerate().skip(i) {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(&a.eigenvector, &b.eigenvector) - target).abs());
            }
        }
        worst
    }

    /// `max |Σ_i ψ_i(x) ψ_i(y) - δ_xy|` over the given sites.
    pub fn completeness_error(&self, sites: &[usize]) -> f64 {
        let mut worst: f64 = 0.0;
        for &x in sites {
            for &y in sites {
                let sum: f64 = self
                    .pairs
                    .iter()
                    .map(|p| p.eigenvector[x] * p.eigenvector[y])
                    .sum();
                let target = if x == y { 1.0 } else { 0.0 };
                worst = worst.max((sum - target).abs());
            }
        }
        worst
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn scale(a: &mut [f64], f: f64) {
    a.iter_mut().for_each(|v| *v *= f);
}

fn orthogonalize(v: &mut [f64], against: &[SpectralPair]) {
    // Two passes of modified Gram-Schmidt.
    for _ in 0..2 {
        for p in against {
            let c = dot(v, &p.eigenvector);
            for (x, e) in v.iter_mut().zip(&p.eigenvector) {
                *x -= c * e;
            }
        }
    }
}

fn residual_inf(m: &StepMatrix, v: &[f64], lambda: f64) -> f64 {
    m.apply(v)
        .iter()
        .zip(v)
        .map(|(mv, x)| (mv - lambda * x).abs())
        .fold(0.0, f64::max)
}

/// Flips `v` so that its first near-maximal component is positive.
pub fn canonical_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if max == 0.0 {
        return;
    }
    if let Some(first) = v.iter().find(|x| x.abs() >= (1.0 - SIGN_TIE) * max) {
        if *first < 0.0 {
            scale(v, -1.0);
        }
    }
}

fn degeneracy_threshold(tol: f64, n: usize, lambda0: f64) -> f64 {
    tol.max(16.0 * n as f64 * f64::EPSILON) * lambda0.abs()
}

/// Groups consecutive pairs whose eigenvalues differ by less than `threshold`.
fn clusters(pairs: &[SpectralPair], threshold: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=pairs.len() {
        if i == pairs.len() || (pairs[i - 1].eigenvalue - pairs[i].eigenvalue).abs() >= threshold {
            out.push(start..i);
            start = i;
        }
    }
    out
}

/// Replaces the basis of every degenerate cluster with the canonical one.
fn canonicalize(m: &StepMatrix, pairs: &mut [SpectralPair], threshold: f64) {
    for range in clusters(pairs, threshold) {
        if range.len() < 2 {
            continue;
        }
        let members: Vec<Vec<f64>> = pairs[range.clone()]
            .iter()
            .map(|p| p.eigenvector.clone())
            .collect();
        let n = members[0].len();
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(members.len());
        for site in 0..n {
            if basis.len() == members.len() {
                break;
            }
            // Projection of e_site onto the cluster.
            let mut u = vec![0.0; n];
            for v in &members {
                let c = v[site];
                if c != 0.0 {
                    u.iter_mut().zip(v).for_each(|(a, b)| *a += c * b);
                }
            }
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(&u, b);
                    u.iter_mut().zip(b).for_each(|(a, e)| *a -= c * e);
                }
            }
            let len = norm(&u);
            if len > CLUSTER_ACCEPT {
                scale(&mut u, 1.0 / len);
                basis.push(u);
            }
        }
        for (pair, mut v) in pairs[range].iter_mut().zip(basis) {
            canonical_sign(&mut v);
            let mv = m.apply(&v);
            pair.eigenvalue = dot(&v, &mv);
            pair.residual = mv
                .iter()
                .zip(&v)
                .map(|(a, x)| (a - pair.eigenvalue * x).abs())
                .fold(0.0, f64::max);
            pair.eigenvector = v;
        }
    }
}

fn check_solvable(m: &StepMatrix, tol: f64) -> Result<Vec<usize>> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(MerwError::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if m.nnz() == 0 {
        return Err(MerwError::EmptyMatrix);
    }
    let components = m.support_components();
    if components.len() > 1 {
        return Err(MerwError::Disconnected {
            components: components.len(),
        });
    }
    Ok(m.support())
}

fn start_vector(n: usize, support: &[usize], index: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    if index == 0 {
        for &s in support {
            v[s] = 1.0;
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x6d65_7277 ^ index as u64);
        for &s in support {
            v[s] = rng.random_range(-1.0..1.0);
        }
    }
    v
}

/// Converges one eigenpair orthogonal to `found`.
fn iterate_pair(
    m: &StepMatrix,
    support: &[usize],
    found: &[SpectralPair],
    shift: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SpectralPair> {
    let n = m.n_sites();
    let index = found.len();
    let mut x = start_vector(n, support, index);
    orthogonalize(&mut x, found);
    let len = norm(&x);
    if len == 0.0 {
        return Err(MerwError::InvalidArgument("start vector lies in the deflated space".into()));
    }
    scale(&mut x, 1.0 / len);

    let scale_ref = found.first().map(|p| p.eigenvalue.abs());
    let mut mx = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iter {
        m.apply_into(&x, &mut mx);
        let lambda = dot(&x, &mx);
        // Residual of the deflated operator P M P; contamination left in the
        // earlier pairs is removed by the Rayleigh-Ritz pass afterwards.
        let mut pmx = mx.clone();
        for p in found {
            let c = dot(&pmx, &p.eigenvector);
            pmx.iter_mut().zip(&p.eigenvector).for_each(|(a, e)| *a -= c * e);
        }
        residual = pmx
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - lambda * b).abs())
            .fold(0.0, f64::max);
        let reference = scale_ref.unwrap_or(lambda.abs()).max(f64::MIN_POSITIVE);
        if residual <= tol * reference {
            let mut v = x;
            canonical_sign(&mut v);
            return Ok(SpectralPair {
                index,
                eigenvalue: lambda,
                eigenvector: v,
                residual,
                iterations: iter,
            });
        }
        for (a, b) in mx.iter_mut().zip(&x) {
            *a += shift * b;
        }
        orthogonalize(&mut mx, found);
        let len = norm(&mx);
        if !(len > 0.0 && len.is_finite()) {
            break;
        }
        scale(&mut mx, 1.0 / len);
        std::mem::swap(&mut x, &mut mx);
    }
    Err(MerwError::NotConverged {
        iterations: max_iter,
        residual,
    })
}

/// Rotates the pairs to the Ritz vectors of their span and recomputes
/// eigenvalues and true residuals.
fn rayleigh_ritz(m: &StepMatrix, pairs: &mut [SpectralPair]) {
    let k = pairs.len();
    if k == 0 {
        return;
    }
    let images: Vec<Vec<f64>> = pairs.iter().map(|p| m.apply(&p.eigenvector)).collect();
    let projected = DMatrix::<f64>::from_fn(k, k, |i, j| {
        0.5 * (dot(&pairs[i].eigenvector, &images[j]) + dot(&pairs[j].eigenvector, &images[i]))
    });
    let eig = SymmetricEigen::new(projected);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let n = m.n_sites();
    let rotated: Vec<Vec<f64>> = order
        .iter()
        .map(|&col| {
            let mut v = vec![0.0; n];
            for (i, p) in pairs.iter().enumerate() {
                let c = eig.eigenvectors[(i, col)];
                v.iter_mut().zip(&p.eigenvector).for_each(|(a, e)| *a += c * e);
            }
            let len = norm(&v);
            scale(&mut v, 1.0 / len);
            canonical_sign(&mut v);
            v
        })
        .collect();
    for (pair, v) in pairs.iter_mut().zip(rotated) {
        let mv = m.apply(&v);
        pair.eigenvalue = dot(&v, &mv);
        pair.residual = mv
            .iter()
            .zip(&v)
            .map(|(a, x)| (a - pair.eigenvalue * x).abs())
            .fold(0.0, f64::max);
        pair.eigenvector = v;
    }
}

/// Dominant (Perron-Frobenius) pair of a step matrix with a connected support.
///
/// The eigenvector is non-negative, has unit norm, and is exactly zero off
/// the support.
pub fn dominant_eigenpair(m: &StepMatrix, tol: f64, max_iter: usize) -> Result<SpectralPair> {
    let support = check_solvable(m, tol)?;
    let shift = m.max_row_sum();
    // M + sI is entrywise non-negative and the start vector is positive on
    // the support, so no iterate ever picks up a negative component.
    iterate_pair(m, &support, &[], shift, tol, max_iter)
}

/// The `k` largest eigenpairs in descending order, with the default iteration cap.
pub fn top_k_eigenpairs(m: &StepMatrix, k: usize, tol: f64) -> Result<SpectralBasis> {
    top_k_eigenpairs_with(m, k, tol, DEFAULT_MAX_ITER)
}

pub fn top_k_eigenpairs_with(m: &StepMatrix, k: usize, tol: f64, max_iter: usize) -> Result<SpectralBasis> {
    let support = check_solvable(m, tol)?;
    if k > support.len() {
        return Err(MerwError::TooManyPairs {
            requested: k,
            available: support.len(),
        });
    }
    let shift = m.max_row_sum();
    let mut pairs: Vec<SpectralPair> = Vec::with_capacity(k + 1);
    let mut threshold = 0.0;
    while pairs.len() < support.len() {
        let pair = iterate_pair(m, &support, &pairs, shift, tol, max_iter)?;
        if pairs.is_empty() {
            threshold = degeneracy_threshold(tol, support.len(), pair.eigenvalue);
        }
        let extends_cut = pairs.len() >= k
            && (pairs[pairs.len() - 1].eigenvalue - pair.eigenvalue).abs() < threshold;
        if pairs.len() >= k && !extends_cut {
            break;
        }
        pairs.push(pair);
    }
    let split = pairs.len() > k;
    rayleigh_ritz(m, &mut pairs);
    canonicalize(m, &mut pairs, threshold);
    pairs.truncate(k);
    let degenerate = split || clusters(&pairs, threshold).iter().any(|r| r.len() > 1);
    Ok(SpectralBasis {
        pairs,
        degenerate,
        cluster_split_at_cut: split,
    })
}

/// Full spectrum of the support by a dense symmetric eigensolve.
pub fn dense_oracle(m: &StepMatrix) -> Result<SpectralBasis> {
    let n = m.n_sites();
    if n > DENSE_SITE_LIMIT {
        return Err(MerwError::TooLargeForDense {
            sites: n,
            limit: DENSE_SITE_LIMIT,
        });
    }
    let support = m.support();
    if support.is_empty() {
        return Err(MerwError::EmptyMatrix);
    }
    let mut position = vec![usize::MAX; n];
    for (k, &s) in support.iter().enumerate() {
        position[s] = k;
    }
    let dim = support.len();
    let mut dense = DMatrix::<f64>::zeros(dim, dim);
    for (a, &s) in support.iter().enumerate() {
        for (t, w) in m.row(s) {
            dense[(a, position[t])] = w;
        }
    }
    let eig = SymmetricEigen::new(dense);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut pairs: Vec<SpectralPair> = order
        .iter()
        .enumerate()
        .map(|(index, &col)| {
            let mut v = vec![0.0; n];
            for (a, &s) in support.iter().enumerate() {
                v[s] = eig.eigenvectors[(a, col)];
            }
            canonical_sign(&mut v);
            let eigenvalue = eig.eigenvalues[col];
            let residual = residual_inf(m, &v, eigenvalue);
            SpectralPair {
                index,
                eigenvalue,
                eigenvector: v,
                residual,
                iterations: 0,
            }
        })
        .collect();
    let threshold = degeneracy_threshold(DEFAULT_TOL, dim, pairs[0].eigenvalue);
    canonicalize(m, &mut pairs, threshold);
    let degenerate = clusters(&pairs, threshold).iter().any(|r| r.len() > 1);
    Ok(SpectralBasis {
        pairs,
        degenerate,
        cluster_split_at_cut: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_box_step_matrix, build_potential_step_matrix, LatticeSpec, Potential};
    use std::f64::consts::PI;

    fn box1d(n: usize) -> StepMatrix {
        build_box_step_matrix(&LatticeSpec::hard_wall(1, n, 1.0).unwrap()).unwrap()
    }

    fn ring(n: usize) -> StepMatrix {
        build_box_step_matrix(&LatticeSpec::periodic(1, n, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn ring_dominant_is_uniform() {
        let p = dominant_eigenpair(&ring(8), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!((p.eigenvalue - 2.0).abs() < 1e-12);
        for v in &p.eigenvector {
            assert!((v - 1.0 / 8f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn box_dominant_matches_sine_profile() {
        let p = dominant_eigenpair(&box1d(32), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!((p.eigenvalue - 2.0 * (PI / 32.0).cos()).abs() < 1e-12);
        let norm: f64 = (1..32).map(|j| (PI * j as f64 / 32.0).sin().powi(2)).sum::<f64>().sqrt();
        for j in 0..=32 {
            let expected = (PI * j as f64 / 32.0).sin() / norm;
            let expected = if j == 0 || j == 32 { 0.0 } else { expected };
            assert!((p.eigenvector[j] - expected).abs() < 1e-10, "site {j}");
        }
        assert_eq!(p.eigenvector[0], 0.0);
        assert_eq!(p.eigenvector[32], 0.0);
    }

    #[test]
    fn excited_states_of_the_box() {
        let basis = top_k_eigenpairs(&box1d(32), 3, DEFAULT_TOL).unwrap();
        for (i, p) in basis.pairs.iter().enumerate() {
            let exact = 2.0 * (PI * (i + 1) as f64 / 32.0).cos();
            assert!((p.eigenvalue - exact).abs() < 1e-12, "λ_{i}");
            let interior = &p.eigenvector[1..32];
            let sign_changes = interior
                .windows(2)
                .filter(|w| w[0] * w[1] < 0.0 || (w[0] != 0.0 && w[1] == 0.0))
                .count();
            // The antisymmetric state has its node on a site.
            let on_site_nodes = interior.iter().filter(|v| v.abs() < 1e-10).count();
            assert_eq!(sign_changes.max(on_site_nodes), i, "nodes of state {i}");
        }
        assert!(!basis.degenerate);
        assert!(basis.orthonormality_error() < 1e-10);
    }

    #[test]
    fn ring_cluster_is_flagged_and_canonical() {
        let m = ring(8);
        let basis = top_k_eigenpairs(&m, 3, DEFAULT_TOL).unwrap();
        let c = 2.0 * (2.0 * PI / 8.0).cos();
        assert!((basis.pairs[1].eigenvalue - c).abs() < 1e-12);
        assert!((basis.pairs[2].eigenvalue - c).abs() < 1e-12);
        assert!(basis.degenerate);
        assert!(!basis.cluster_split_at_cut);
        let dense = dense_oracle(&m).unwrap();
        for i in 0..3 {
            let align = dot(basis.vector(i), dense.vector(i));
            assert!(align > 1.0 - 1e-10, "pair {i}: {align}");
        }
        // The canonical first cluster vector is the projection of e_0.
        assert!(basis.vector(1)[0] > 0.0);
    }

    #[test]
    fn cut_through_a_cluster_is_reported() {
        let basis = top_k_eigenpairs(&ring(8), 2, DEFAULT_TOL).unwrap();
        assert_eq!(basis.len(), 2);
        assert!(basis.cluster_split_at_cut);
        assert!(basis.degenerate);
    }

    #[test]
    fn k1_equals_dominant() {
        let m = box1d(16);
        let a = dominant_eigenpair(&m, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let b = top_k_eigenpairs(&m, 1, DEFAULT_TOL).unwrap();
        assert_eq!(a.eigenvalue, b.pairs[0].eigenvalue);
        assert_eq!(a.eigenvector, b.pairs[0].eigenvector);
    }

    #[test]
    fn dense_small_box() {
        let basis = dense_oracle(&box1d(4)).unwrap();
        let l = basis.eigenvalues();
        assert_eq!(l.len(), 3);
        assert!((l[0] - 2f64.sqrt()).abs() < 1e-14);
        assert!(l[1].abs() < 1e-14);
        assert!((l[2] + 2f64.sqrt()).abs() < 1e-14);
        assert!(basis.completeness_error(&[1, 2, 3]) < 1e-14);
    }

    #[test]
    fn dense_constant_potential_scales_spectrum() {
        let spec = LatticeSpec::hard_wall(1, 10, 1.0).unwrap();
        let free = dense_oracle(&build_box_step_matrix(&spec).unwrap()).unwrap();
        let shifted =
            dense_oracle(&build_potential_step_matrix(&spec, &Potential::constant(0.4)).unwrap()).unwrap();
        for (a, b) in free.eigenvalues().iter().zip(shifted.eigenvalues()) {
            assert!((a * (-0.4f64).exp() - b).abs() < 1e-14);
        }
    }

    #[test]
    fn errors() {
        let spec = LatticeSpec::hard_wall(1, 8, 1.0).unwrap();
        let m = build_box_step_matrix(&spec).unwrap();
        assert!(matches!(
            dominant_eigenpair(&m.with_blocked_sites(&[4]), 1e-12, 1000),
            Err(MerwError::Disconnected { components: 2 })
        ));
        assert!(matches!(
            dominant_eigenpair(&m.with_blocked_sites(&(0..9).collect::<Vec<_>>()), 1e-12, 1000),
            Err(MerwError::EmptyMatrix)
        ));
        assert!(matches!(
            dominant_eigenpair(&box1d(64), 1e-12, 3),
            Err(MerwError::NotConverged { iterations: 3, .. })
        ));
        assert!(matches!(
            top_k_eigenpairs(&m, 8, 1e-12),
            Err(MerwError::TooManyPairs { requested: 8, available: 7 })
        ));
        let big = build_box_step_matrix(&LatticeSpec::hard_wall(2, 100, 1.0).unwrap()).unwrap();
        assert!(matches!(dense_oracle(&big), Err(MerwError::TooLargeForDense { .. })));
    }

    #[test]
    fn sign_canon_breaks_ties_by_index() {
        let mut v = vec![0.0, -1.0, 0.5, 1.0];
        canonical_sign(&mut v);
        assert_eq!(v, vec![0.0, 1.0, -0.5, -1.0]);
    }
}
