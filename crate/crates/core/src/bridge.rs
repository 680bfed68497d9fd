//! From step-matrix spectra to Schrödinger energies and correction terms.
//!
//! Natural units throughout: `ħ = m = c = 1`, energies in `mc²`, lengths in
//! reduced Compton wavelengths.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{MerwError, Result};
use crate::lattice::{Boundary, LatticeSpec, Potential, ScalarField, StepMatrix};
use crate::spectral::{SpectralBasis, DENSE_SITE_LIMIT};
use crate::walk::AmplitudeField;

/// Electron rest energy in eV.
pub const ELECTRON_REST_ENERGY_EV: f64 = 510_998.950_69;

/// Mass within this many spacings of a singular point triggers an error.
const SINGULAR_RADIUS_SITES: f64 = 2.0;
const SINGULAR_MASS_LIMIT: f64 = 1e-6;

/// `E = 1 - λ / (2D)`.
///
/// # Panics
/// If `dims` is zero.
pub fn energy_from_eigenvalue(lambda: f64, dims: usize) -> f64 {
    assert!(dims >= 1, "dimension must be at least 1");
    1.0 - lambda / (2.0 * dims as f64)
}

/// Renders an energy in units of the rest energy as eV.
pub fn energy_in_ev(energy: f64, rest_energy_ev: f64) -> f64 {
    energy * rest_energy_ev
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergySpectrum {
    pub dims: usize,
    pub eigenvalues: Vec<f64>,
    /// Ascending, since the eigenvalues come in descending order.
    pub levels: Vec<f64>,
}

impl EnergySpectrum {
    pub fn from_eigenvalues(eigenvalues: &[f64], dims: usize) -> Self {
        Self {
            dims,
            eigenvalues: eigenvalues.to_vec(),
            levels: eigenvalues.iter().map(|&l| energy_from_eigenvalue(l, dims)).collect(),
        }
    }

    pub fn from_basis(basis: &SpectralBasis, dims: usize) -> Self {
        Self::from_eigenvalues(&basis.eigenvalues(), dims)
    }
}

/// Continuum ground energy of a hard-wall box of side `L`, `D π² / (2 L²)`.
pub fn box_continuum_energy(lattice: &LatticeSpec) -> f64 {
    let l = lattice.length();
    lattice.dims() as f64 * PI * PI / (2.0 * l * l)
}

/// `Π_d cos(π x_d / L)` sampled on the sites, zero on the walls, unit norm.
pub fn box_ground_reference(lattice: &LatticeSpec) -> Result<AmplitudeField> {
    if lattice.boundary() != Boundary::HardWall {
        return Err(MerwError::InvalidArgument("cosine reference needs a hard-wall box".into()));
    }
    let k = PI / lattice.length();
    let mut values = Vec::with_capacity(lattice.n_sites());
    for site in 0..lattice.n_sites() {
        if lattice.is_boundary(site) {
            values.push(0.0);
        } else {
            let x = lattice.site_coords(site)?;
            values.push(x.iter().map(|v| (k * v).cos()).product());
        }
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    values.iter_mut().for_each(|v| *v /= norm);
    AmplitudeField::new(*lattice, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiffusionCalibration {
    /// Time step in reduced Compton times.
    pub dt: f64,
    /// Variance per step in reduced Compton wavelengths squared.
    pub dsigma2: f64,
    /// Diffusion constant `δσ² / 2`.
    pub diffusion: f64,
}

impl DiffusionCalibration {
    /// `δσ² / δt`, which equals `ħ/m = 1` for every `n`.
    pub fn ratio(&self) -> f64 {
        self.dsigma2 / self.dt
    }
}

/// A walk moving `n` Compton wavelengths in `n²` Compton times.
pub fn diffusion_calibration(n: f64) -> DiffusionCalibration {
    let dt = n * n;
    let dsigma2 = n * n;
    DiffusionCalibration {
        dt,
        dsigma2,
        diffusion: dsigma2 / 2.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionReport {
    pub deltas: Vec<f64>,
    /// `max |LHS - RHS₂|` over the sample points, per spacing.
    pub residuals: Vec<f64>,
    /// Least-squares slope of `ln residual` against `ln δ`.
    pub slope: f64,
}

/// Grid of `points` samples per axis over `[-extent, extent]^dims`.
pub fn sample_points(dims: usize, points: usize, extent: f64) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = if points == 1 {
        vec![0.0]
    } else {
        (0..points)
            .map(|i| -extent + 2.0 * extent * i as f64 / (points - 1) as f64)
            .collect()
    };
    let total = points.pow(dims as u32);
    (0..total)
        .map(|mut k| {
            let mut x = vec![0.0; dims];
            for d in (0..dims).rev() {
                x[d] = axis[k % points];
                k /= points;
            }
            x
        })
        .collect()
}

/// Compares the exact weighted neighbour sum with its second-order expansion
/// `2Dψ + δ²[Δ - ∇V·∇ - ΔV/4 + |∇V|²/4]ψ` for each spacing.
pub fn expansion_residual(
    pot: &Potential,
    field: &dyn ScalarField,
    points: &[Vec<f64>],
    deltas: &[f64],
) -> Result<ExpansionReport> {
    if deltas.len() < 2 {
        return Err(MerwError::InvalidArgument("need at least two spacings".into()));
    }
    if deltas.windows(2).any(|w| !(w[1] < w[0])) || deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(MerwError::InvalidArgument("spacings must be positive and decreasing".into()));
    }
    if points.is_empty() {
        return Err(MerwError::InvalidArgument("no sample points".into()));
    }
    let v = pot.field();
    let non_smooth = |what: &str| MerwError::NonSmooth(what.to_string());

    let mut rhs_terms = Vec::with_capacity(points.len());
    for x in points {
        let psi = field.value(x);
        let grad_psi = field.gradient(x).ok_or_else(|| non_smooth("test field"))?;
        let lap_psi = field.laplacian(x).ok_or_else(|| non_smooth("test field"))?;
        let grad_v = v.gradient(x).ok_or_else(|| non_smooth(pot.label()))?;
        let lap_v = v.laplacian(x).ok_or_else(|| non_smooth(pot.label()))?;
        let gv_gpsi: f64 = grad_v.iter().zip(&grad_psi).map(|(a, b)| a * b).sum();
        let gv2: f64 = grad_v.iter().map(|a| a * a).sum();
        let bracket = lap_psi - gv_gpsi - 0.25 * lap_v * psi + 0.25 * gv2 * psi;
        rhs_terms.push((psi, bracket));
    }

    let mut residuals = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let mut worst: f64 = 0.0;
        for (x, &(psi, bracket)) in points.iter().zip(&rhs_terms) {
            let dims = x.len();
            let vx = v.value(x);
            let mut lhs = 0.0;
            for d in 0..dims {
                for sign in [1.0, -1.0] {
                    let mut far = x.clone();
                    let mut mid = x.clone();
                    far[d] += sign * delta;
                    mid[d] += sign * delta / 2.0;
                    lhs += field.value(&far) * (vx - v.value(&mid)).exp();
                }
            }
            let rhs = 2.0 * dims as f64 * psi + delta * delta * bracket;
            worst = worst.max((lhs - rhs).abs());
        }
        residuals.push(worst);
    }

    let slope = if residuals.contains(&0.0) {
        f64::INFINITY
    } else {
        let xs: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
        let ys: Vec<f64> = residuals.iter().map(|r| r.ln()).collect();
        fit_slope(&xs, &ys)
    };
    Ok(ExpansionReport {
        deltas: deltas.to_vec(),
        residuals,
        slope,
    })
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Expectations of the fourth-order correction terms in a normalized state.
///
/// The terms enter the corrected Hamiltonian as
/// `-V²/2 + (1/2) V Δ + (1/2) ∇V·∇ + (1/8) ΔV`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrectionBreakdown {
    /// `⟨V²/2⟩`.
    pub v_squared: f64,
    /// `⟨ψ|(1/2) V Δ|ψ⟩`, with `Δ` acting on `ψ` only.
    pub v_laplacian: f64,
    /// `⟨ψ|(1/2) ∇V·∇|ψ⟩`.
    pub grad_v_grad: f64,
    /// `⟨(1/8) ΔV⟩`.
    pub darwin: f64,
    /// `⟨ΔV⟩`.
    pub mean_laplacian_v: f64,
    /// `-v_squared + v_laplacian + grad_v_grad + darwin`.
    pub total: f64,
}

/// First derivative and second difference of `values` along `axis` at
/// `site`: central where both neighbours exist, second-order one-sided
/// otherwise.
fn axis_derivatives(lattice: &LatticeSpec, values: &[f64], site: usize, axis: usize) -> (f64, f64) {
    let h = lattice.spacing();
    let f = values[site];
    let fwd = lattice.forward_neighbour(site, axis);
    let bwd = lattice.backward_neighbour(site, axis);
    match (fwd, bwd) {
        (Some(p), Some(m)) => ((values[p] - values[m]) / (2.0 * h), (values[p] + values[m] - 2.0 * f) / (h * h)),
        (Some(p1), None) | (None, Some(p1)) => {
            let towards_forward = fwd.is_some();
            let next = |s: usize| {
                if towards_forward {
                    lattice.forward_neighbour(s, axis)
                } else {
                    lattice.backward_neighbour(s, axis)
                }
            };
            let sign = if towards_forward { 1.0 } else { -1.0 };
            match next(p1).and_then(|p2| next(p2).map(|p3| (p2, p3))) {
                Some((p2, p3)) => {
                    let (f1, f2, f3) = (values[p1], values[p2], values[p3]);
                    let d1 = sign * (-3.0 * f + 4.0 * f1 - f2) / (2.0 * h);
                    let d2 = (2.0 * f - 5.0 * f1 + 4.0 * f2 - f3) / (h * h);
                    (d1, d2)
                }
                None => (sign * (values[p1] - f) / h, 0.0),
            }
        }
        (None, None) => (0.0, 0.0),
    }
}

/// Evaluates each correction term as an expectation in `state`, with
/// finite differences for `∇ψ` on the lattice and for `∇V`, `ΔV` at the
/// sites.
pub fn correction_expectations(state: &AmplitudeField, pot: &Potential) -> Result<CorrectionBreakdown> {
    let lattice = state.lattice();
    let psi = state.values();
    let h = lattice.spacing();
    let dims = lattice.dims();

    let mass: f64 = psi.iter().map(|v| v * v).sum();
    if !(mass > 0.0) {
        return Err(MerwError::InvalidArgument("state has zero norm".into()));
    }
    let singular = pot.field().singular_points(dims);
    if !singular.is_empty() {
        let mut near = 0.0;
        for (site, p) in psi.iter().enumerate() {
            let x = lattice.site_coords(site)?;
            let close = singular.iter().any(|s| {
                let r2: f64 = x.iter().zip(s).map(|(a, b)| (a - b).powi(2)).sum();
                r2.sqrt() <= SINGULAR_RADIUS_SITES * h
            });
            if close {
                near += p * p;
            }
        }
        if near / mass > SINGULAR_MASS_LIMIT {
            return Err(MerwError::NearSingularity { mass: near / mass });
        }
    }

    let mut v2 = 0.0;
    let mut vlap = 0.0;
    let mut grad = 0.0;
    let mut lap_v_mean = 0.0;
    for (site, &p) in psi.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let x = lattice.site_coords(site)?;
        let v = pot.value(&x);
        let mut lap_psi = 0.0;
        let mut gv_gpsi = 0.0;
        let mut lap_v = 0.0;
        for d in 0..dims {
            let (d1, d2) = axis_derivatives(lattice, psi, site, d);
            lap_psi += d2;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[d] += h;
            xm[d] -= h;
            let (vp, vm) = (pot.value(&xp), pot.value(&xm));
            gv_gpsi += (vp - vm) / (2.0 * h) * d1;
            lap_v += (vp + vm - 2.0 * v) / (h * h);
        }
        v2 += p * p * v * v;
        vlap += p * v * lap_psi;
        grad += p * gv_gpsi;
        lap_v_mean += p * p * lap_v;
    }
    let v_squared = 0.5 * v2 / mass;
    let v_laplacian = 0.5 * vlap / mass;
    let grad_v_grad = 0.5 * grad / mass;
    let mean_laplacian_v = lap_v_mean / mass;
    let darwin = mean_laplacian_v / 8.0;
    Ok(CorrectionBreakdown {
        v_squared,
        v_laplacian,
        grad_v_grad,
        darwin,
        mean_laplacian_v,
        total: -v_squared + v_laplacian + grad_v_grad + darwin,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaComparison {
    /// `1 - λ_i / (2D)` from the step matrix.
    pub merw: Vec<f64>,
    /// Eigenvalues of `-Δ/2 + V` on the same sites.
    pub schrodinger: Vec<f64>,
    /// `max |V|` over the support.
    pub max_potential: f64,
    pub warnings: Vec<String>,
}

impl AlphaComparison {
    /// `max_i |E_i(MERW) - E_i(Schrödinger)| / |E_i(Schrödinger)|`.
    pub fn max_relative_gap(&self) -> f64 {
        self.merw
            .iter()
            .zip(&self.schrodinger)
            .map(|(a, b)| (a - b).abs() / b.abs())
            .fold(0.0, f64::max)
    }
}

/// Lowest `k` eigenvalues of `-Δ/2 + V` on the support of `m`, using the
/// standard nearest-neighbour Laplacian and `V` at the sites.
pub fn schrodinger_levels(m: &StepMatrix, pot: &Potential, k: usize) -> Result<Vec<f64>> {
    let lattice = m.lattice();
    let support = m.support();
    let n = support.len();
    if n > DENSE_SITE_LIMIT {
        return Err(MerwError::TooLargeForDense {
            sites: n,
            limit: DENSE_SITE_LIMIT,
        });
    }
    if k > n {
        return Err(MerwError::TooManyPairs {
            requested: k,
            available: n,
        });
    }
    let mut pos = vec![usize::MAX; m.n_sites()];
    for (i, &s) in support.iter().enumerate() {
        pos[s] = i;
    }
    let h2 = lattice.spacing() * lattice.spacing();
    let dims = lattice.dims() as f64;
    let mut h = DMatrix::<f64>::zeros(n, n);
    for (i, &s) in support.iter().enumerate() {
        let x = lattice.site_coords(s)?;
        h[(i, i)] = dims / h2 + pot.value(&x);
        for (t, _) in m.row(s) {
            let j = pos[t];
            if j != usize::MAX {
                h[(i, j)] -= 0.5 / h2;
            }
        }
    }
    let mut levels: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    levels.sort_by(f64::total_cmp);
    levels.truncate(k);
    Ok(levels)
}

/// Step-matrix energies against a conventional Schrödinger solve.
pub fn order_alpha2_check(m: &StepMatrix, pot: &Potential, basis: &SpectralBasis) -> Result<AlphaComparison> {
    let lattice = m.lattice();
    let spectrum = EnergySpectrum::from_basis(basis, lattice.dims());
    let schrodinger = schrodinger_levels(m, pot, basis.len())?;
    let mut max_potential: f64 = 0.0;
    for s in m.support() {
        max_potential = max_potential.max(pot.value(&lattice.site_coords(s)?).abs());
    }
    let mut warnings = Vec::new();
    if max_potential > 0.1 {
        warnings.push(format!(
            "potential reaches {max_potential:.3} mc², beyond the small-potential regime"
        ));
    }
    Ok(AlphaComparison {
        merw: spectrum.levels,
        schrodinger,
        max_potential,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_box_step_matrix, build_potential_step_matrix, GaussianBump, Zero};
    use crate::spectral::{dominant_eigenpair, DEFAULT_MAX_ITER, DEFAULT_TOL};

    #[test]
    fn energies() {
        assert_eq!(energy_from_eigenvalue(2.0, 1), 0.0);
        assert_eq!(energy_from_eigenvalue(6.0, 3), 0.0);
        let e0 = energy_from_eigenvalue(2.0 * (PI / 32.0).cos(), 1);
        assert!((e0 - 4.8153e-3).abs() < 1e-7);
        let spec = LatticeSpec::hard_wall(1, 32, 1.0).unwrap();
        let cont = box_continuum_energy(&spec);
        assert!((cont - PI * PI / 2048.0).abs() < 1e-18);
        let s = EnergySpectrum::from_eigenvalues(&[1.9, 1.5, -0.3], 1);
        assert!(s.levels.windows(2).all(|w| w[0] < w[1]));
        assert!((energy_in_ev(1.0, ELECTRON_REST_ENERGY_EV) - 510_998.950_69).abs() < 1e-9);
    }

    #[test]
    fn cosine_reference() {
        let spec = LatticeSpec::hard_wall(1, 32, 1.0).unwrap();
        let r = box_ground_reference(&spec).unwrap();
        let v = r.values();
        assert_eq!(v[0], 0.0);
        assert_eq!(v[32], 0.0);
        let max = v.iter().cloned().fold(0.0, f64::max);
        assert_eq!(v[16], max);
        let m = build_box_step_matrix(&spec).unwrap();
        let g = dominant_eigenpair(&m, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let gap = v.iter().zip(&g.eigenvector).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap <= 5e-3, "{gap}");
        assert!(box_ground_reference(&LatticeSpec::periodic(1, 8, 1.0).unwrap()).is_err());
    }

    #[test]
    fn calibration() {
        let c = diffusion_calibration(1.0);
        assert_eq!((c.dt, c.dsigma2, c.diffusion), (1.0, 1.0, 0.5));
        let c = diffusion_calibration(137.036);
        assert!((c.ratio() - 1.0).abs() < 1e-15);
        assert!((c.diffusion - c.dt / 2.0).abs() < 1e-9);
    }

    fn bump() -> GaussianBump {
        GaussianBump {
            amplitude: 1.0,
            center: vec![0.1],
            width: 0.7,
        }
    }

    #[test]
    fn free_expansion_is_fourth_order() {
        let pts = sample_points(1, 9, 1.0);
        let r = expansion_residual(&Potential::zero(), &bump(), &pts, &[0.2, 0.1, 0.05, 0.025]).unwrap();
        assert!((r.slope - 4.0).abs() < 0.1, "{}", r.slope);
        let c = expansion_residual(&Potential::constant(0.3), &bump(), &pts, &[0.2, 0.1]).unwrap();
        let z = expansion_residual(&Potential::zero(), &bump(), &pts, &[0.2, 0.1]).unwrap();
        assert_eq!(c.residuals, z.residuals);
    }

    #[test]
    fn rough_inputs_are_rejected() {
        let pts = sample_points(1, 3, 1.0);
        let coulomb = Potential::soft_coulomb(0.2, 0.5);
        assert!(matches!(
            expansion_residual(&coulomb, &bump(), &pts, &[0.2, 0.1]),
            Err(MerwError::NonSmooth(_))
        ));
        assert!(expansion_residual(&Potential::zero(), &bump(), &pts, &[0.1, 0.2]).is_err());
    }

    #[test]
    fn sample_grid() {
        let p = sample_points(2, 3, 1.0);
        assert_eq!(p.len(), 9);
        assert_eq!(p[0], vec![-1.0, -1.0]);
        assert_eq!(p[5], vec![0.0, 1.0]);
    }

    #[test]
    fn zero_potential_has_no_corrections() {
        let spec = LatticeSpec::hard_wall(1, 32, 1.0).unwrap();
        let state = box_ground_reference(&spec).unwrap();
        let c = correction_expectations(&state, &Potential::new("zero", Zero)).unwrap();
        assert_eq!(
            (c.v_squared, c.v_laplacian, c.grad_v_grad, c.darwin, c.total),
            (0.0, 0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn harmonic_darwin_term() {
        let w = 0.05;
        let spec = LatticeSpec::hard_wall(1, 128, 1.0).unwrap();
        let pot = Potential::harmonic(w);
        let m = build_potential_step_matrix(&spec, &pot).unwrap();
        let g = dominant_eigenpair(&m, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let state = AmplitudeField::from_pair(spec, &g).unwrap();
        let c = correction_expectations(&state, &pot).unwrap();
        assert!((c.darwin - w * w / 8.0).abs() < 1e-10);
        assert!((c.darwin - c.mean_laplacian_v / 8.0).abs() < 1e-12);
    }

    #[test]
    fn singular_potential_is_rejected() {
        let spec = LatticeSpec::hard_wall(3, 8, 1.0).unwrap();
        let state = box_ground_reference(&spec).unwrap();
        let bare = Potential::soft_coulomb(0.2, 0.0);
        assert!(matches!(
            correction_expectations(&state, &bare),
            Err(MerwError::NearSingularity { .. })
        ));
    }

    #[test]
    fn one_sided_edges() {
        let spec = LatticeSpec::hard_wall(1, 8, 0.5).unwrap();
        let values: Vec<f64> = (0..9).map(|i| {
            let x = spec.coordinate(i);
            x * x
        }).collect();
        let (d1, d2) = axis_derivatives(&spec, &values, 0, 0);
        assert!((d1 - 2.0 * spec.coordinate(0)).abs() < 1e-12);
        assert!((d2 - 2.0).abs() < 1e-12);
        let (d1, d2) = axis_derivatives(&spec, &values, 8, 0);
        assert!((d1 - 2.0 * spec.coordinate(8)).abs() < 1e-12);
        assert!((d2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn free_box_against_schrodinger() {
        let spec = LatticeSpec::hard_wall(1, 32, 1.0).unwrap();
        let m = build_box_step_matrix(&spec).unwrap();
        let levels = schrodinger_levels(&m, &Potential::zero(), 2).unwrap();
        // Both discretizations coincide for a free particle with δ = 1.
        assert!((levels[0] - (1.0 - (PI / 32.0).cos())).abs() < 1e-13);
    }
}
