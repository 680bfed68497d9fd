//! Shannon entropy production of walks, in bits.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{MerwError, Result};
use crate::lattice::{LatticeSpec, StepMatrix};
use crate::spectral::SpectralBasis;
use crate::walk::{evolve, mixture_state, parity_merged, transition_from_amplitude, AmplitudeField, MixtureScheme, ProbabilityField, StochasticMatrix};

/// Upper bound on the number of paths `k_step_entropy` will enumerate.
pub const PATH_LIMIT: u128 = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyReport {
    /// Bits per step.
    pub h_bits: f64,
    pub k: usize,
    /// Bits over `k` steps.
    pub h_k_bits: f64,
    /// Sites whose transition row is undefined.
    pub excluded_sites: usize,
}

impl EntropyReport {
    fn single(h: f64, excluded: usize) -> Self {
        Self {
            h_bits: h,
            k: 1,
            h_k_bits: h,
            excluded_sites: excluded,
        }
    }
}

/// `Σ_y p lb(1/p)` with `0 lb(1/0) = 0`.
fn row_entropy(row: &[(usize, f64)]) -> f64 {
    row.iter()
        .map(|&(_, p)| if p > 0.0 { -p * p.log2() } else { 0.0 })
        .sum()
}

/// `H = Σ_x ρ_x Σ_y S_xy lb(1/S_xy)`.
pub fn step_entropy(rho: &ProbabilityField, s: &StochasticMatrix) -> Result<EntropyReport> {
    if rho.values.len() != s.n_sites() {
        return Err(MerwError::DimensionMismatch {
            expected: s.n_sites(),
            got: rho.values.len(),
        });
    }
    let mut h = 0.0;
    for (x, &r) in rho.values.iter().enumerate() {
        match s.row(x) {
            Some(row) => h += r * row_entropy(row),
            None if r != 0.0 => return Err(MerwError::MassOnUndefinedRow { site: x, mass: r }),
            None => {}
        }
    }
    Ok(EntropyReport::single(h, s.undefined_count()))
}

/// Weighted entropy of the walk `s_xy = M(x,y)ψ(y)/(Mψ)(x)` with site
/// weights `ψ(x)(Mψ)(x)`, restricted to pairs accepted by `link`.
/// Returns `(Σ weight, Σ weight · row entropy)`.
fn amplitude_entropy<F: Fn(usize, usize) -> bool>(m: &StepMatrix, psi: &[f64], link: F) -> (f64, f64) {
    let mut total = 0.0;
    let mut acc = 0.0;
    let mut row: Vec<(usize, f64)> = Vec::new();
    for x in 0..m.n_sites() {
        if psi[x] <= 0.0 {
            continue;
        }
        row.clear();
        row.extend(
            m.row(x)
                .filter(|&(y, w)| w > 0.0 && psi[y] > 0.0 && link(x, y))
                .map(|(y, w)| (y, w * psi[y])),
        );
        let out: f64 = row.iter().map(|(_, v)| v).sum();
        if out <= 0.0 {
            continue;
        }
        row.iter_mut().for_each(|(_, v)| *v /= out);
        let weight = psi[x] * out;
        total += weight;
        acc += weight * row_entropy(&row);
    }
    (total, acc)
}

/// Entropy of the instantaneous walk defined by a non-negative amplitude.
///
/// Transitions follow `s_xy = M(x,y)ψ(y)/(Mψ)(x)`; sites are weighted by
/// `ρ_x ∝ ψ(x)(Mψ)(x)`, the stationary density of that chain when `ψ` is an
/// eigenvector, so `ψ = ψ₀` reproduces the stationary entropy. A field
/// supported on one sublattice of a bipartite lattice has no weight anywhere
/// and must be passed through [`parity_merged`] first.
pub fn transient_entropy(m: &StepMatrix, psi: &[f64]) -> Result<EntropyReport> {
    if psi.len() != m.n_sites() {
        return Err(MerwError::DimensionMismatch {
            expected: m.n_sites(),
            got: psi.len(),
        });
    }
    if let Some(site) = psi.iter().position(|v| !v.is_finite()) {
        return Err(MerwError::NonFiniteAmplitude(site));
    }
    if let Some((site, &value)) = psi.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(MerwError::NegativeAmplitude { site, value });
    }
    let (total, acc) = amplitude_entropy(m, psi, |_, _| true);
    if total <= 0.0 {
        return Err(MerwError::NoDefinedWeight);
    }
    let excluded = transition_from_amplitude(m, psi).undefined_count();
    Ok(EntropyReport::single(acc / total, excluded))
}

/// Entropy of the `k`-step path ensemble, `Σ_x ρ_x Σ_paths P lb(1/P)`,
/// summed over every path explicitly. For stationary `ρ` this equals `k H`.
pub fn k_step_entropy(rho: &ProbabilityField, s: &StochasticMatrix, k: usize) -> Result<EntropyReport> {
    if k == 0 {
        return Err(MerwError::InvalidArgument("k must be at least 1".into()));
    }
    let one = step_entropy(rho, s)?;
    let n = s.n_sites();

    let mut count = vec![1u128; n];
    for _ in 0..k {
        count = (0..n)
            .map(|x| {
                s.row(x).map_or(0, |r| {
                    r.iter().fold(0u128, |a, &(y, _)| a.saturating_add(count[y]))
                })
            })
            .collect();
    }
    let paths = (0..n)
        .filter(|&x| rho.values[x] > 0.0)
        .fold(0u128, |a, x| a.saturating_add(count[x]));
    if paths > PATH_LIMIT {
        return Err(MerwError::MemoryGuard { paths, limit: PATH_LIMIT });
    }

    fn descend(s: &StochasticMatrix, x: usize, depth: usize, p: f64, acc: &mut f64) -> Result<()> {
        if depth == 0 {
            if p > 0.0 {
                *acc -= p * p.log2();
            }
            return Ok(());
        }
        let row = s.row(x).ok_or(MerwError::MassOnUndefinedRow { site: x, mass: p })?;
        for &(y, q) in row {
            descend(s, y, depth - 1, p * q, acc)?;
        }
        Ok(())
    }

    let mut h_k = 0.0;
    for (x, &r) in rho.values.iter().enumerate() {
        if r > 0.0 {
            let mut acc = 0.0;
            descend(s, x, k, 1.0, &mut acc)?;
            h_k += r * acc;
        }
    }
    Ok(EntropyReport {
        h_bits: one.h_bits,
        k,
        h_k_bits: h_k,
        excluded_sites: one.excluded_sites,
    })
}

/// Nodal sites of a signed field: every site with `|ψ| < eps ‖ψ‖∞`, plus
/// the smaller-magnitude end of every edge across which `ψ` changes sign.
pub fn nodal_sites(m: &StepMatrix, psi: &[f64], eps: f64) -> Vec<bool> {
    let max = psi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut blocked: Vec<bool> = psi.iter().map(|v| v.abs() < eps * max).collect();
    for x in 0..m.n_sites() {
        for (y, w) in m.row(x) {
            if w > 0.0 && psi[x] * psi[y] < 0.0 {
                if psi[x].abs() <= psi[y].abs() {
                    blocked[x] = true;
                } else {
                    blocked[y] = true;
                }
            }
        }
    }
    blocked
}

/// Same-sign connected components of the unblocked sites.
pub fn nodal_domains(m: &StepMatrix, psi: &[f64], blocked: &[bool]) -> Vec<Vec<usize>> {
    let n = m.n_sites();
    let mut seen = vec![false; n];
    let mut domains = Vec::new();
    for start in 0..n {
        if blocked[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let positive = psi[start] > 0.0;
        let mut stack = vec![start];
        let mut domain = Vec::new();
        while let Some(x) = stack.pop() {
            domain.push(x);
            for (y, w) in m.row(x) {
                if w > 0.0 && !blocked[y] && !seen[y] && (psi[y] > 0.0) == positive {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        domain.sort_unstable();
        domains.push(domain);
    }
    domains
}

/// Entropy of a signed state with its nodes turned into walls.
///
/// Each nodal domain carries the walk built from `|ψ|` restricted to it;
/// domains are weighted by `Σ|ψ|²` over their sites. Domains too small to
/// carry a walk are skipped.
pub fn blocked_entropy(m: &StepMatrix, psi: &[f64], eps: f64) -> Result<EntropyReport> {
    if psi.len() != m.n_sites() {
        return Err(MerwError::DimensionMismatch {
            expected: m.n_sites(),
            got: psi.len(),
        });
    }
    if let Some(site) = psi.iter().position(|v| !v.is_finite()) {
        return Err(MerwError::NonFiniteAmplitude(site));
    }
    let blocked = nodal_sites(m, psi, eps);
    let domains = nodal_domains(m, psi, &blocked);
    let mut label = vec![usize::MAX; m.n_sites()];
    for (d, sites) in domains.iter().enumerate() {
        for &x in sites {
            label[x] = d;
        }
    }
    let magnitude: Vec<f64> = psi.iter().map(|v| v.abs()).collect();

    let mut weight_sum = 0.0;
    let mut h = 0.0;
    let mut excluded = 0;
    for sites in &domains {
        let d = label[sites[0]];
        let mut local = vec![0.0; m.n_sites()];
        for &x in sites {
            local[x] = magnitude[x];
        }
        let (total, acc) = amplitude_entropy(m, &local, |x, y| label[x] == d && label[y] == d);
        if total <= 0.0 {
            excluded += sites.len();
            continue;
        }
        let weight: f64 = sites.iter().map(|&x| psi[x] * psi[x]).sum();
        weight_sum += weight;
        h += weight * acc / total;
    }
    if weight_sum <= 0.0 {
        return Err(MerwError::EmptyDomain);
    }
    excluded += blocked.iter().filter(|&&b| b).count();
    Ok(EntropyReport::single(h / weight_sum, excluded))
}

/// Transient entropy of a point-started walk after `k` steps, for each `k`.
///
/// The field after `k` steps is parity-merged with its successor so both
/// sublattices carry weight.
pub fn transient_growth(m: &StepMatrix, start: &AmplitudeField, steps: &[usize]) -> Result<Vec<(usize, f64)>> {
    let mut sorted = steps.to_vec();
    sorted.sort_unstable();
    let mut out = Vec::with_capacity(steps.len());
    let mut field = start.clone();
    for k in sorted {
        field = evolve(m, &field, k - field.time().min(k))?;
        let merged = parity_merged(m, field.values());
        out.push((k, transient_entropy(m, &merged)?.h_bits));
    }
    Ok(out)
}

pub fn write_growth_csv<W: Write>(mut out: W, rows: &[(usize, f64)]) -> std::io::Result<()> {
    writeln!(out, "k,H")?;
    for (k, h) in rows {
        writeln!(out, "{k},{h:.16e}")?;
    }
    Ok(())
}

/// Entropy sampled over a square grid of mixture coefficients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LandscapeGrid {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// `h[i * beta.len() + j]` at `(alpha[i], beta[j])`; `None` where masked.
    pub h: Vec<Option<f64>>,
}

impl LandscapeGrid {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.h[i * self.beta.len() + j]
    }

    pub fn valid_count(&self) -> usize {
        self.h.iter().filter(|v| v.is_some()).count()
    }

    /// Grid indices of the largest valid value.
    pub fn argmax(&self) -> Option<(usize, usize)> {
        let nb = self.beta.len();
        self.h
            .iter()
            .enumerate()
            .filter_map(|(k, v)| v.map(|h| (k, h)))
            .fold(None, |best: Option<(usize, f64)>, (k, h)| match best {
                Some((_, b)) if b >= h => best,
                _ => Some((k, h)),
            })
            .map(|(k, _)| (k / nb, k % nb))
    }

    pub fn center(&self) -> (usize, usize) {
        (self.alpha.len() / 2, self.beta.len() / 2)
    }

    /// Second differences through the centre along each axis, using the
    /// outermost valid points symmetric about it: `(Δ²_α H, Δ²_β H)`.
    pub fn axis_second_differences(&self) -> Option<(f64, f64)> {
        let (ci, cj) = self.center();
        let h0 = self.get(ci, cj)?;
        let along = |len: usize, at: &dyn Fn(usize) -> Option<f64>, c: usize| -> Option<f64> {
            (1..=c.min(len - 1 - c))
                .rev()
                .find_map(|s| Some(at(c + s)? + at(c - s)? - 2.0 * h0))
        };
        let da = along(self.alpha.len(), &|i| self.get(i, cj), ci)?;
        let db = along(self.beta.len(), &|j| self.get(ci, j), cj)?;
        Some((da, db))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "alpha,beta,H,valid")?;
        for (i, a) in self.alpha.iter().enumerate() {
            for (j, b) in self.beta.iter().enumerate() {
                match self.get(i, j) {
                    Some(h) => writeln!(out, "{a:.16e},{b:.16e},{h:.16e},1")?,
                    None => writeln!(out, "{a:.16e},{b:.16e},,0")?,
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LandscapeOptions {
    pub scheme: MixtureScheme,
    /// Largest `α² + β²` sampled.
    pub radius2: f64,
    /// Samples per axis.
    pub points: usize,
    /// Block nodes instead of masking points whose mixture changes sign.
    pub block_nodes: bool,
    pub node_eps: f64,
}

/// Entropy of the mixtures of the three lowest states over the `(α, β)` disc.
pub fn entropy_landscape(
    lattice: &LatticeSpec,
    m: &StepMatrix,
    basis: &SpectralBasis,
    opts: &LandscapeOptions,
) -> Result<LandscapeGrid> {
    if opts.points == 0 {
        return Err(MerwError::InvalidArgument("landscape needs at least one point per axis".into()));
    }
    if !(opts.radius2 >= 0.0) {
        return Err(MerwError::InvalidArgument("radius² must be non-negative".into()));
    }
    let r = opts.radius2.sqrt();
    let axis: Vec<f64> = if opts.points == 1 {
        vec![0.0]
    } else {
        let step = 2.0 * r / (opts.points - 1) as f64;
        (0..opts.points).map(|i| -r + step * i as f64).collect()
    };
    let support = m.support_mask();
    let n = axis.len();
    let h = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (a, b) = (axis[k / n], axis[k % n]);
            if a * a + b * b > opts.radius2 * (1.0 + 1e-12) + 1e-300 {
                return None;
            }
            let state = mixture_state(lattice, basis, a, b, opts.scheme).ok()?;
            let psi = state.values();
            if opts.block_nodes {
                return blocked_entropy(m, psi, opts.node_eps).ok().map(|r| r.h_bits);
            }
            let signed = psi.iter().zip(&support).any(|(v, &s)| s && *v <= 0.0);
            if signed {
                return None;
            }
            transient_entropy(m, psi).ok().map(|r| r.h_bits)
        })
        .collect();
    Ok(LandscapeGrid {
        alpha: axis.clone(),
        beta: axis,
        h,
    })
}
