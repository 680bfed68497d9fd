//! Amplitude evolution, Born-rule densities and stochastic matrices.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{MerwError, Result};
use crate::lattice::{Boundary, LatticeSpec, StepMatrix};
use crate::spectral::{SpectralBasis, SpectralPair};

/// Relative size below which a site with a sign change across it is a node.
pub const DEFAULT_NODE_EPS: f64 = 1e-8;

/// Path-count amplitudes over the lattice sites.
///
/// Long evolutions are rescaled by powers of two after every step; the true
/// amplitudes are `values · 2^log2_scale`, so the rescaling is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeField {
    lattice: LatticeSpec,
    values: Vec<f64>,
    log2_scale: i64,
    time: usize,
}

impl AmplitudeField {
    pub fn new(lattice: LatticeSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.n_sites() {
            return Err(MerwError::DimensionMismatch {
                expected: lattice.n_sites(),
                got: values.len(),
            });
        }
        if let Some(site) = values.iter().position(|v| !v.is_finite()) {
            return Err(MerwError::NonFiniteAmplitude(site));
        }
        Ok(Self {
            lattice,
            values,
            log2_scale: 0,
            time: 0,
        })
    }

    /// Unit amplitude on a single site.
    pub fn point(lattice: LatticeSpec, site: usize) -> Result<Self> {
        let n = lattice.n_sites();
        if site >= n {
            return Err(MerwError::SiteOutOfRange { index: site, n_sites: n });
        }
        let mut values = vec![0.0; n];
        values[site] = 1.0;
        Self::new(lattice, values)
    }

    pub fn from_pair(lattice: LatticeSpec, pair: &SpectralPair) -> Result<Self> {
        Self::new(lattice, pair.eigenvector.clone())
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    /// Rescaled values; multiply by `2^log2_scale` for the path counts.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn log2_scale(&self) -> i64 {
        self.log2_scale
    }

    pub fn time(&self) -> usize {
        self.time
    }

    /// Path counts with the accumulated scale restored.
    pub fn unscaled(&self) -> Vec<f64> {
        let f = pow2(self.log2_scale);
        self.values.iter().map(|v| v * f).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `ψ / ψ(site)`.
    pub fn relative_to(&self, site: usize) -> Vec<f64> {
        let r = self.values[site];
        self.values.iter().map(|v| v / r).collect()
    }

    pub fn l2_normalized(&self) -> Vec<f64> {
        let n = self.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.values.iter().map(|v| v / n).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_site_csv(out, &self.lattice, &self.values)
    }
}

fn pow2(e: i64) -> f64 {
    2f64.powi(e.clamp(i32::MIN as i64, i32::MAX as i64) as i32)
}

/// Writes `site_index, x1..xD, value` rows with 17 significant digits.
pub fn write_site_csv<W: Write>(mut out: W, lattice: &LatticeSpec, values: &[f64]) -> std::io::Result<()> {
    let coords: Vec<String> = (1..=lattice.dims()).map(|d| format!("x{d}")).collect();
    writeln!(out, "site_index,{},value", coords.join(","))?;
    for (site, v) in values.iter().enumerate() {
        let x = lattice.site_coords(site).expect("site in range");
        let x: Vec<String> = x.iter().map(|c| format!("{c:.16e}")).collect();
        writeln!(out, "{site},{},{v:.16e}", x.join(","))?;
    }
    Ok(())
}

/// `M^τ ψ̊` by `τ` successive products.
pub fn evolve(m: &StepMatrix, initial: &AmplitudeField, steps: usize) -> Result<AmplitudeField> {
    if initial.values.len() != m.n_sites() {
        return Err(MerwError::DimensionMismatch {
            expected: m.n_sites(),
            got: initial.values.len(),
        });
    }
    if let Some(site) = initial.values.iter().position(|v| !v.is_finite()) {
        return Err(MerwError::NonFiniteAmplitude(site));
    }
    let mut field = initial.clone();
    let mut next = vec![0.0; m.n_sites()];
    for _ in 0..steps {
        m.apply_into(&field.values, &mut next);
        std::mem::swap(&mut field.values, &mut next);
        field.time += 1;
        let max = field.max_abs();
        if max > 0.0 {
            let e = max.log2().floor() as i64;
            if e != 0 {
                let f = pow2(-e);
                field.values.iter_mut().for_each(|v| *v *= f);
                field.log2_scale += e;
            }
        }
    }
    Ok(field)
}

/// `ψ + Mψ · ‖ψ‖/‖Mψ‖`: joins a field living on one sublattice of a
/// bipartite lattice with its next step so both sublattices carry weight.
pub fn parity_merged(m: &StepMatrix, psi: &[f64]) -> Vec<f64> {
    let mpsi = m.apply(psi);
    let a = psi.iter().map(|v| v * v).sum::<f64>().sqrt();
    let b = mpsi.iter().map(|v| v * v).sum::<f64>().sqrt();
    if b == 0.0 {
        return psi.to_vec();
    }
    psi.iter().zip(&mpsi).map(|(p, q)| p + q * (a / b)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianFit {
    /// Empirical variance per coordinate, `Σ ψ (x_d - μ_d)² / Σ ψ`.
    pub sigma2_fit: Vec<f64>,
    /// Predicted variance per coordinate, `τ δ² / D`.
    pub sigma2_expected: f64,
    /// `max |ψ(x)/ψ(μ) - g(x)|` with `g(μ) = 1`, over compared sites.
    pub max_rel_dev: f64,
    pub compared_sites: usize,
}

fn occupied(lattice: &LatticeSpec, site: usize, center: &[usize], steps: usize) -> bool {
    let bipartite = lattice.boundary() == Boundary::HardWall || lattice.sites_per_dim().is_multiple_of(2);
    if !bipartite {
        return true;
    }
    let idx = lattice.multi_index(site).expect("site in range");
    let dist: usize = idx.iter().zip(center).map(|(a, b)| a.abs_diff(*b)).sum();
    dist % 2 == steps % 2
}

/// Compares a point-started field after `steps` steps with the diffusion
/// Gaussian `exp(-|x-μ|² / (2 τ δ² / D))` on the occupied sublattice.
pub fn gaussian_transient_check(psi: &AmplitudeField, center: usize, steps: usize) -> Result<GaussianFit> {
    if steps == 0 {
        return Err(MerwError::InvalidArgument("need at least one step".into()));
    }
    let lattice = psi.lattice();
    let values = psi.values();
    let peak = values[center];
    if !(peak > 0.0) {
        return Err(MerwError::InvalidArgument("field has no positive amplitude at the start site (odd step counts leave it empty)".into()));
    }
    if lattice.boundary() == Boundary::HardWall {
        let n = lattice.sites_per_dim();
        let mut near_wall: f64 = 0.0;
        for (site, v) in values.iter().enumerate() {
            let idx = lattice.multi_index(site)?;
            if idx.iter().all(|&k| k >= 1 && k < n) && idx.iter().any(|&k| k == 1 || k + 1 == n) {
                near_wall = near_wall.max(v.abs());
            }
        }
        let ratio = near_wall / peak;
        if ratio >= 1e-8 {
            return Err(MerwError::WallContact { ratio });
        }
    }

    let dims = lattice.dims();
    let mu = lattice.site_coords(center)?;
    let mu_idx = lattice.multi_index(center)?;
    let dsigma2 = lattice.spacing().powi(2) / dims as f64;
    let variance = steps as f64 * dsigma2;

    let mut weight = 0.0;
    let mut moments = vec![0.0; dims];
    let mut max_dev: f64 = 0.0;
    let mut compared = 0;
    for (site, &v) in values.iter().enumerate() {
        let x = lattice.site_coords(site)?;
        let r2: f64 = x.iter().zip(&mu).map(|(a, b)| (a - b).powi(2)).sum();
        weight += v;
        for d in 0..dims {
            moments[d] += v * (x[d] - mu[d]).powi(2);
        }
        if v.abs() >= 1e-3 * peak && occupied(lattice, site, &mu_idx, steps) {
            let g = (-r2 / (2.0 * variance)).exp();
            max_dev = max_dev.max((v / peak - g).abs());
            compared += 1;
        }
    }
    Ok(GaussianFit {
        sigma2_fit: moments.iter().map(|m| m / weight).collect(),
        sigma2_expected: variance,
        max_rel_dev: max_dev,
        compared_sites: compared,
    })
}

/// Probability distribution over sites.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityField {
    pub values: Vec<f64>,
}

impl ProbabilityField {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Born rule: `ρ_x = ψ₀(x)² / Σ ψ₀²`.
pub fn stationary_density(ground: &SpectralPair) -> Result<ProbabilityField> {
    let v = &ground.eigenvector;
    if let Some(site) = v.iter().position(|x| !x.is_finite()) {
        return Err(MerwError::NonFiniteAmplitude(site));
    }
    let norm: f64 = v.iter().map(|x| x * x).sum();
    if norm == 0.0 {
        return Err(MerwError::InvalidArgument("ground state is the zero vector".into()));
    }
    Ok(ProbabilityField {
        values: v.iter().map(|x| x * x / norm).collect(),
    })
}

/// Row-stochastic transition matrix; rows without outgoing paths are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    rows: Vec<Option<Vec<(usize, f64)>>>,
}

impl StochasticMatrix {
    pub fn from_rows(rows: Vec<Option<Vec<(usize, f64)>>>) -> Self {
        Self { rows }
    }

    pub fn n_sites(&self) -> usize {
        self.rows.len()
    }

    /// Outgoing probabilities of `x`, or `None` when the row is undefined.
    pub fn row(&self, x: usize) -> Option<&[(usize, f64)]> {
        self.rows[x].as_deref()
    }

    pub fn is_defined(&self, x: usize) -> bool {
        self.rows[x].is_some()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.row(x)
            .and_then(|r| r.iter().find(|(j, _)| *j == y).map(|&(_, p)| p))
            .unwrap_or(0.0)
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.rows.len()).filter(|&x| self.is_defined(x)).collect()
    }

    pub fn undefined_count(&self) -> usize {
        self.rows.iter().filter(|r| r.is_none()).count()
    }

    /// `(ρ S)_y = Σ_x ρ_x S_xy` over defined rows.
    pub fn apply_left(&self, rho: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows.len()];
        for (x, row) in self.rows.iter().enumerate() {
            if let Some(row) = row {
                for &(y, p) in row {
                    out[y] += rho[x] * p;
                }
            }
        }
        out
    }

    /// `(S v)_x = Σ_y S_xy v_y`; undefined rows give 0.
    pub fn apply_right(&self, v: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.as_ref().map_or(0.0, |r| r.iter().map(|&(y, p)| p * v[y]).sum()))
            .collect()
    }

    /// `Σ_y (S^k)_xy` for every defined row `x`.
    pub fn iterated_row_sums(&self, k: usize) -> Vec<(usize, f64)> {
        let mut v = vec![1.0; self.rows.len()];
        for _ in 0..k {
            v = self.apply_right(&v);
        }
        self.support().into_iter().map(|x| (x, v[x])).collect()
    }

    /// `max |ρ_x S_xy - ρ_y S_yx|`.
    pub fn detailed_balance_error(&self, rho: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (x, row) in self.rows.iter().enumerate() {
            if let Some(row) = row {
                for &(y, p) in row {
                    worst = worst.max((rho[x] * p - rho[y] * self.get(y, x)).abs());
                }
            }
        }
        worst
    }
}

/// MERW transition probabilities `S_xy = M(x,y) ψ₀(y) / (λ₀ ψ₀(x))`.
///
/// The denominator is taken as `(M ψ₀)(x)`, equal to `λ₀ ψ₀(x)` for an exact
/// eigenvector, so rows stay stochastic to rounding even for a converged but
/// inexact `ψ₀`. Rows where `ψ₀(x) = 0` are undefined.
pub fn merw_stochastic_matrix(m: &StepMatrix, ground: &SpectralPair) -> Result<StochasticMatrix> {
    if ground.eigenvector.len() != m.n_sites() {
        return Err(MerwError::DimensionMismatch {
            expected: m.n_sites(),
            got: ground.eigenvector.len(),
        });
    }
    if !(ground.eigenvalue > 0.0) {
        return Err(MerwError::InvalidArgument(format!(
            "dominant eigenvalue must be positive, got {}",
            ground.eigenvalue
        )));
    }
    Ok(transition_from_amplitude(m, &ground.eigenvector))
}

/// `s_xy = M(x,y) ψ(y) / (Mψ)(x)` for a non-negative `ψ`, undefined where
/// no path arrives.
pub(crate) fn transition_from_amplitude(m: &StepMatrix, psi: &[f64]) -> StochasticMatrix {
    let rows = (0..m.n_sites())
        .map(|x| {
            if psi[x] <= 0.0 && m.row(x).all(|(y, _)| psi[y] <= 0.0) {
                return None;
            }
            let entries: Vec<(usize, f64)> = m
                .row(x)
                .filter(|&(y, w)| w > 0.0 && psi[y] > 0.0)
                .map(|(y, w)| (y, w * psi[y]))
                .collect();
            let total: f64 = entries.iter().map(|(_, v)| v).sum();
            if total <= 0.0 {
                return None;
            }
            Some(entries.into_iter().map(|(y, v)| (y, v / total)).collect())
        })
        .collect();
    StochasticMatrix { rows }
}

/// Generic random walk: equal probability to every neighbour with `M > 0`.
pub fn grw_stochastic_matrix(m: &StepMatrix) -> StochasticMatrix {
    let rows = (0..m.n_sites())
        .map(|x| {
            let neighbours: Vec<usize> = m.row(x).filter(|&(_, w)| w > 0.0).map(|(y, _)| y).collect();
            if neighbours.is_empty() {
                return None;
            }
            let p = 1.0 / neighbours.len() as f64;
            Some(neighbours.into_iter().map(|y| (y, p)).collect())
        })
        .collect();
    StochasticMatrix { rows }
}

/// Stationary density of the generic random walk, proportional to the degree.
pub fn grw_stationary_density(m: &StepMatrix) -> ProbabilityField {
    let degrees: Vec<f64> = (0..m.n_sites())
        .map(|x| m.row(x).filter(|&(_, w)| w > 0.0).count() as f64)
        .collect();
    let total: f64 = degrees.iter().sum();
    ProbabilityField {
        values: degrees.iter().map(|d| d / total).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureScheme {
    /// `√(1-α²-β²)|0⟩ + α|1⟩ + β|2⟩`.
    AroundGround,
    /// `α|0⟩ + √(1-α²-β²)|1⟩ + β|2⟩`.
    AroundFirst,
}

impl std::str::FromStr for MixtureScheme {
    type Err = MerwError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "around_ground" => Ok(Self::AroundGround),
            "around_first" => Ok(Self::AroundFirst),
            other => Err(MerwError::Config(format!("unknown mixture scheme `{other}`"))),
        }
    }
}

/// Unit-norm superposition of the three lowest states.
pub fn mixture_state(
    lattice: &LatticeSpec,
    basis: &SpectralBasis,
    alpha: f64,
    beta: f64,
    scheme: MixtureScheme,
) -> Result<AmplitudeField> {
    if basis.len() < 3 {
        return Err(MerwError::InvalidArgument(format!(
            "mixtures need three basis states, got {}",
            basis.len()
        )));
    }
    let mut rest = 1.0 - alpha * alpha - beta * beta;
    // Points on the unit circle may land a rounding error below zero.
    if rest < 0.0 && rest > -1e-12 {
        rest = 0.0;
    }
    if !(rest >= 0.0) {
        return Err(MerwError::NormalizationImpossible(rest));
    }
    let root = rest.sqrt();
    let coeffs = match scheme {
        MixtureScheme::AroundGround => [root, alpha, beta],
        MixtureScheme::AroundFirst => [alpha, root, beta],
    };
    let n = lattice.n_sites();
    let mut values = vec![0.0; n];
    for (c, pair) in coeffs.iter().zip(&basis.pairs) {
        for (v, e) in values.iter_mut().zip(&pair.eigenvector) {
            *v += c * e;
        }
    }
    AmplitudeField::new(*lattice, values)
}

/// Sites where `|ψ| < eps ‖ψ‖∞` and the amplitude changes sign across them.
pub fn pinned_nodes(m: &StepMatrix, psi: &[f64], eps: f64) -> Vec<usize> {
    let max = psi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    (0..m.n_sites())
        .filter(|&x| {
            if psi[x].abs() >= eps * max {
                return false;
            }
            let pos = m.row(x).any(|(y, _)| psi[y] > 0.0);
            let neg = m.row(x).any(|(y, _)| psi[y] < 0.0);
            pos && neg
        })
        .collect()
}
