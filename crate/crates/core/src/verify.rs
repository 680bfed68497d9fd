//! The acceptance suite: every criterion as a function returning measured
//! values side by side with their tolerances.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use serde::Serialize;

use crate::bridge::{
    box_continuum_energy, box_ground_reference, correction_expectations, energy_from_eigenvalue, expansion_residual,
    fit_slope, order_alpha2_check, sample_points,
};
use crate::entropy::{entropy_landscape, k_step_entropy, step_entropy, transient_growth, LandscapeOptions};
use crate::error::Result;
use crate::lattice::{build_box_step_matrix, build_potential_step_matrix, GaussianBump, LatticeSpec, Potential, StepMatrix};
use crate::spectral::{dense_oracle, dominant_eigenpair, top_k_eigenpairs, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::walk::{
    evolve, gaussian_transient_check, merw_stochastic_matrix, pinned_nodes, stationary_density, AmplitudeField,
    MixtureScheme, DEFAULT_NODE_EPS,
};

/// One measured quantity against its bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub label: String,
    pub measured: f64,
    pub tolerance: f64,
    /// `measured <= tolerance` unless stated otherwise in the label.
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    pub id: u32,
    pub name: String,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub seconds: f64,
    /// Set when the criterion could not be evaluated.
    pub error: Option<String>,
}

impl CriterionReport {
    /// One-line summary: `PASS [id] name: label = measured (tol ...); ...`.
    pub fn summary_line(&self) -> String {
        let status = if self.pass { "PASS" } else { "FAIL" };
        let body = match &self.error {
            Some(e) => format!("error: {e}"),
            None => self
                .checks
                .iter()
                .map(|c| format!("{} = {:.6e} (tol {:.3e}{})", c.label, c.measured, c.tolerance, if c.pass { "" } else { ", failed" }))
                .collect::<Vec<_>>()
                .join("; "),
        };
        format!("{status} [{:>2}] {} ({:.2} s): {body}", self.id, self.name, self.seconds)
    }
}

/// Tolerance overrides keyed by check label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyOptions {
    pub tolerances: BTreeMap<String, f64>,
}

impl VerifyOptions {
    fn tol(&self, label: &str, default: f64) -> f64 {
        self.tolerances.get(label).copied().unwrap_or(default)
    }

    fn at_most(&self, label: &str, measured: f64, default: f64) -> Check {
        let tolerance = self.tol(label, default);
        Check {
            label: label.to_string(),
            measured,
            tolerance,
            pass: measured <= tolerance,
        }
    }

    fn at_least(&self, label: &str, measured: f64, default: f64) -> Check {
        let tolerance = self.tol(label, default);
        Check {
            label: format!("{label} (at least)"),
            measured,
            tolerance,
            pass: measured >= tolerance,
        }
    }
}

pub const CRITERIA: [(u32, &str); 14] = [
    (1, "Gaussian transient"),
    (2, "cosine ground state"),
    (3, "spectral correctness"),
    (4, "Born rule and stationarity"),
    (5, "entropy rate identity"),
    (6, "entropy telescoping"),
    (7, "transient entropy growth"),
    (8, "entropy landscapes"),
    (9, "energy mapping"),
    (10, "harmonic potential"),
    (11, "expansion order"),
    (12, "Darwin coefficient"),
    (13, "virial cancellation"),
    (14, "node non-crossing"),
];

pub fn criterion_name(id: u32) -> Option<&'static str> {
    CRITERIA.iter().find(|(i, _)| *i == id).map(|(_, n)| *n)
}

/// Runs one criterion; errors are folded into a failing report.
pub fn run_criterion(id: u32, opts: &VerifyOptions) -> Option<CriterionReport> {
    let name = criterion_name(id)?;
    let start = Instant::now();
    let result = match id {
        1 => gaussian_transient(opts),
        2 => cosine_ground_state(opts),
        3 => spectral_correctness(opts),
        4 => born_rule(opts),
        5 => entropy_rate(opts),
        6 => entropy_telescoping(opts),
        7 => entropy_growth(opts),
        8 => entropy_landscapes(opts),
        9 => energy_mapping(opts),
        10 => harmonic_potential(opts),
        11 => expansion_order(opts),
        12 => darwin_coefficient(opts),
        13 => virial_cancellation(opts),
        14 => node_non_crossing(opts),
        _ => return None,
    };
    let seconds = start.elapsed().as_secs_f64();
    Some(match result {
        Ok(checks) => CriterionReport {
            id,
            name: name.to_string(),
            pass: !checks.is_empty() && checks.iter().all(|c| c.pass),
            checks,
            seconds,
            error: None,
        },
        Err(e) => CriterionReport {
            id,
            name: name.to_string(),
            checks: Vec::new(),
            pass: false,
            seconds,
            error: Some(e.to_string()),
        },
    })
}

pub fn verify_all(opts: &VerifyOptions) -> Vec<CriterionReport> {
    CRITERIA
        .iter()
        .filter_map(|(id, _)| run_criterion(*id, opts))
        .collect()
}

/// The 33-site unit box of the diffusion figure.
fn unit_box() -> Result<(LatticeSpec, StepMatrix)> {
    let spec = LatticeSpec::hard_wall(1, 32, 1.0 / 32.0)?;
    let m = build_box_step_matrix(&spec)?;
    Ok((spec, m))
}

fn box_matrix(dims: usize, n: usize) -> Result<StepMatrix> {
    build_box_step_matrix(&LatticeSpec::hard_wall(dims, n, 1.0)?)
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn gaussian_transient(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let (spec, m) = unit_box()?;
    let c = spec.center_site();
    let f = evolve(&m, &AmplitudeField::point(spec, c)?, 16)?;
    let fit = gaussian_transient_check(&f, c, 16)?;
    Ok(vec![opts.at_most("max relative deviation", fit.max_rel_dev, 0.05)])
}

pub fn cosine_ground_state(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let (spec, m) = unit_box()?;
    let c = spec.center_site();
    let f = evolve(&m, &AmplitudeField::point(spec, c)?, 256)?;
    let ground = dominant_eigenpair(&m, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let profile = f.relative_to(c);
    let g0 = ground.eigenvector[c];
    // Even sites are the ones a centred walk occupies after an even number of steps.
    let gap = (0..spec.n_sites())
        .filter(|s| (s + c) % 2 == 0)
        .map(|s| (profile[s] - ground.eigenvector[s] / g0).abs())
        .fold(0.0, f64::max);
    let reference = box_ground_reference(&spec)?;
    let cos_gap = linf(reference.values(), &ground.eigenvector);
    Ok(vec![
        opts.at_most("walk profile vs ground state", gap, 1e-2),
        opts.at_most("ground state vs cos(pi x)", cos_gap, 5e-3),
    ])
}

pub fn spectral_correctness(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut dl: f64 = 0.0;
    let mut misalign: f64 = 0.0;
    let mut min_interior = f64::INFINITY;
    for (dims, n) in [(1, 32), (1, 64), (2, 16)] {
        let m = box_matrix(dims, n)?;
        let iterative = top_k_eigenpairs(&m, 3, DEFAULT_TOL)?;
        let dense = dense_oracle(&m)?;
        let l0 = dense.pairs[0].eigenvalue;
        for i in 0..3 {
            dl = dl.max((iterative.pairs[i].eigenvalue - dense.pairs[i].eigenvalue).abs() / l0);
            let dot: f64 = iterative.vector(i).iter().zip(dense.vector(i)).map(|(a, b)| a * b).sum();
            misalign = misalign.max(1.0 - dot.abs());
        }
        for s in m.support() {
            min_interior = min_interior.min(iterative.vector(0)[s]);
        }
    }
    Ok(vec![
        opts.at_most("|dlambda| / lambda0", dl, 1e-8),
        opts.at_most("1 - alignment", misalign, 1e-8),
        Check {
            label: "min ground amplitude on interior (must be > 0)".into(),
            measured: min_interior,
            tolerance: 0.0,
            pass: min_interior > 0.0,
        },
    ])
}

pub fn born_rule(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut norm: f64 = 0.0;
    let mut stat: f64 = 0.0;
    let mut rows: f64 = 0.0;
    let mut balance: f64 = 0.0;
    for (dims, n) in [(1, 32), (2, 16)] {
        let m = box_matrix(dims, n)?;
        let g = dominant_eigenpair(&m, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
        let rho = stationary_density(&g)?;
        let s = merw_stochastic_matrix(&m, &g)?;
        norm = norm.max((rho.total() - 1.0).abs());
        stat = stat.max(linf(&s.apply_left(&rho.values), &rho.values));
        let mut v = vec![1.0; m.n_sites()];
        for _ in 0..64 {
            v = s.apply_right(&v);
            for x in s.support() {
                rows = rows.max((v[x] - 1.0).abs());
            }
        }
        balance = balance.max(s.detailed_balance_error(&rho.values));
    }
    Ok(vec![
        opts.at_most("|sum rho - 1|", norm, 1e-12),
        opts.at_most("|rho S - rho|", stat, 1e-10),
        opts.at_most("|row sums of S^k - 1|, k <= 64", rows, 1e-10),
        opts.at_most("detailed balance", balance, 1e-12),
    ])
}

fn stationary_entropy(m: &StepMatrix) -> Result<(f64, f64)> {
    let g = dominant_eigenpair(m, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let rho = stationary_density(&g)?;
    let s = merw_stochastic_matrix(m, &g)?;
    Ok((step_entropy(&rho, &s)?.h_bits, g.eigenvalue))
}

pub fn entropy_rate(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let ring = build_box_step_matrix(&LatticeSpec::periodic(1, 8, 1.0)?)?;
    let (h_ring, _) = stationary_entropy(&ring)?;
    let (h_box, l_box) = stationary_entropy(&box_matrix(1, 32)?)?;
    let (h_2d, l_2d) = stationary_entropy(&box_matrix(2, 16)?)?;
    let exact = (2.0 * (PI / 32.0).cos()).log2();
    Ok(vec![
        opts.at_most("ring N=8: |H - 1|", (h_ring - 1.0).abs(), 1e-10),
        opts.at_most("1D box N=32: |H - lb lambda0|", (h_box - l_box.log2()).abs(), 1e-10),
        opts.at_most("1D box N=32: |H - lb(2 cos(pi/32))|", (h_box - exact).abs(), 1e-10),
        opts.at_most("2D box N=16: |H - lb lambda0|", (h_2d - l_2d.log2()).abs(), 1e-10),
    ])
}

pub fn entropy_telescoping(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let m = box_matrix(1, 32)?;
    let g = dominant_eigenpair(&m, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let rho = stationary_density(&g)?;
    let s = merw_stochastic_matrix(&m, &g)?;
    let mut worst: f64 = 0.0;
    for k in 1..=8 {
        let r = k_step_entropy(&rho, &s, k)?;
        worst = worst.max((r.h_k_bits - k as f64 * r.h_bits).abs());
    }
    Ok(vec![opts.at_most("max |H(k) - k H|, k <= 8", worst, 1e-9)])
}

/// `H` after `2^n` steps of a centred walk on the unit box, `n = 0..=8`.
pub fn growth_curve() -> Result<(Vec<(usize, f64)>, f64)> {
    let (spec, m) = unit_box()?;
    let start = AmplitudeField::point(spec, spec.center_site())?;
    let steps: Vec<usize> = (0..=8).map(|n| 1usize << n).collect();
    let curve = transient_growth(&m, &start, &steps)?;
    let (h, _) = stationary_entropy(&m)?;
    Ok((curve, h))
}

pub fn entropy_growth(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let (curve, h) = growth_curve()?;
    let worst_drop = curve.windows(2).map(|w| w[0].1 - w[1].1).fold(f64::NEG_INFINITY, f64::max);
    let last = curve.last().map(|p| p.1).unwrap_or(f64::NAN);
    Ok(vec![
        opts.at_most("largest decrease between successive k", worst_drop.max(0.0), 0.0),
        opts.at_most("|H(256) - H stationary|", (last - h).abs(), 1e-3),
    ])
}

/// 65-site box on `[-0.5, 0.5]` with its three lowest states.
pub fn landscape_setup() -> Result<(LatticeSpec, StepMatrix, crate::spectral::SpectralBasis)> {
    let spec = LatticeSpec::hard_wall(1, 64, 1.0 / 64.0)?;
    let m = build_box_step_matrix(&spec)?;
    let basis = top_k_eigenpairs(&m, 3, DEFAULT_TOL)?;
    Ok((spec, m, basis))
}

/// Default landscape options per scheme: masking on the small disc around
/// `|0⟩`, node blocking on the full disc around `|1⟩`.
pub fn default_landscape(scheme: MixtureScheme) -> LandscapeOptions {
    match scheme {
        MixtureScheme::AroundGround => LandscapeOptions {
            scheme,
            radius2: 0.06,
            points: 41,
            block_nodes: false,
            node_eps: DEFAULT_NODE_EPS,
        },
        MixtureScheme::AroundFirst => LandscapeOptions {
            scheme,
            radius2: 1.0,
            points: 41,
            block_nodes: true,
            node_eps: DEFAULT_NODE_EPS,
        },
    }
}

pub fn entropy_landscapes(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let (spec, m, basis) = landscape_setup()?;
    let ground = entropy_landscape(&spec, &m, &basis, &default_landscape(MixtureScheme::AroundGround))?;
    let center = ground.center();
    let argmax = ground.argmax();
    let offset = argmax
        .map(|(i, j)| i.abs_diff(center.0).max(j.abs_diff(center.1)) as f64)
        .unwrap_or(f64::INFINITY);
    let first = entropy_landscape(&spec, &m, &basis, &default_landscape(MixtureScheme::AroundFirst))?;
    let (da, db) = first.axis_second_differences().unwrap_or((f64::NAN, f64::NAN));
    Ok(vec![
        opts.at_most("around_ground: argmax offset from centre (grid steps)", offset, 0.0),
        opts.at_least("around_first: second difference toward |0>", da, 0.0),
        opts.at_most("around_first: second difference toward |2>", db, 0.0),
    ])
}

pub fn energy_mapping(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut gap32 = f64::NAN;
    for n in [16usize, 32, 64, 128] {
        let spec = LatticeSpec::hard_wall(1, n, 1.0)?;
        let m = build_box_step_matrix(&spec)?;
        let g = dominant_eigenpair(&m, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
        let e0 = energy_from_eigenvalue(g.eigenvalue, 1);
        let cont = box_continuum_energy(&spec);
        let gap = (e0 - cont).abs() / cont;
        if n == 32 {
            gap32 = gap;
        }
        xs.push((n as f64).ln());
        ys.push(gap.ln());
    }
    let slope = fit_slope(&xs, &ys);
    Ok(vec![
        opts.at_most("N=32: |E0 - E_cont| / E_cont", gap32, 1e-3),
        opts.at_most("|slope + 2| over N = 16..128", (slope + 2.0).abs(), 0.1),
    ])
}

pub fn harmonic_potential(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let omega = 0.02;
    let spec = LatticeSpec::hard_wall(1, 512, 1.0)?;
    let pot = Potential::harmonic(omega);
    let m = build_potential_step_matrix(&spec, &pot)?;
    let basis = top_k_eigenpairs(&m, 2, DEFAULT_TOL)?;
    let e0 = energy_from_eigenvalue(basis.pairs[0].eigenvalue, 1);
    let e1 = energy_from_eigenvalue(basis.pairs[1].eigenvalue, 1);
    let comparison = order_alpha2_check(&m, &pot, &basis)?;
    Ok(vec![
        opts.at_most("|E0 - w/2| / (w/2)", (e0 - omega / 2.0).abs() / (omega / 2.0), 0.02),
        opts.at_most("|E1 - E0 - w| / w", (e1 - e0 - omega).abs() / omega, 0.02),
        opts.at_most("max |E_MERW - E_Schrodinger| / E_Schrodinger", comparison.max_relative_gap(), 0.02),
    ])
}

pub fn expansion_order(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let deltas = [0.2, 0.1, 0.05, 0.025];
    let points = sample_points(2, 5, 1.0);
    let field = GaussianBump {
        amplitude: 1.0,
        center: vec![0.1, -0.2],
        width: 0.7,
    };
    let linear = expansion_residual(&Potential::linear(vec![0.3, -0.2]), &field, &points, &deltas)?;
    let harmonic = expansion_residual(&Potential::harmonic(0.8), &field, &points, &deltas)?;
    Ok(vec![
        opts.at_least("V linear: log-log slope", linear.slope, 2.9),
        opts.at_least("V harmonic: log-log slope", harmonic.slope, 2.9),
    ])
}

pub fn darwin_coefficient(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let omega = 0.02;
    let spec = LatticeSpec::hard_wall(1, 512, 1.0)?;
    let pot = Potential::harmonic(omega);
    let m = build_potential_step_matrix(&spec, &pot)?;
    let g = dominant_eigenpair(&m, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let c = correction_expectations(&AmplitudeField::from_pair(spec, &g)?, &pot)?;
    Ok(vec![
        opts.at_most("|<H_D> - <dV>/8|", (c.darwin - c.mean_laplacian_v / 8.0).abs(), 1e-12),
        opts.at_most("|<H_D> - w^2/8|", (c.darwin - omega * omega / 8.0).abs(), 1e-10),
    ])
}

/// Softened Coulomb well on the natural 3D lattice with `N = 48`.
pub fn virial_terms(n: usize) -> Result<crate::bridge::CorrectionBreakdown> {
    let spec = LatticeSpec::natural_box(3, n)?;
    let pot = Potential::soft_coulomb(0.2, 2.0 * spec.spacing());
    let m = build_potential_step_matrix(&spec, &pot)?;
    let g = dominant_eigenpair(&m, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    correction_expectations(&AmplitudeField::from_pair(spec, &g)?, &pot)
}

pub fn virial_cancellation(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let c = virial_terms(48)?;
    let gap = (c.v_squared - c.v_laplacian).abs() / c.v_squared.abs();
    Ok(vec![opts.at_most("|<V^2/2> - <V lap/2>| / <V^2/2>", gap, 0.05)])
}

pub fn node_non_crossing(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let spec = LatticeSpec::hard_wall(1, 32, 1.0)?;
    let m = build_box_step_matrix(&spec)?;
    let basis = top_k_eigenpairs(&m, 2, DEFAULT_TOL)?;
    let nodes = pinned_nodes(&m, basis.vector(1), DEFAULT_NODE_EPS);
    let mut node_ratio: f64 = if nodes.len() == 1 { 0.0 } else { f64::INFINITY };
    let mut sign_flips = 0.0;
    let initial = AmplitudeField::from_pair(spec, &basis.pairs[1])?;
    let mut field = initial.clone();
    for _ in 0..100 {
        field = evolve(&m, &field, 1)?;
        let v = field.values();
        if let Some(&node) = nodes.first() {
            node_ratio = node_ratio.max(v[node].abs() / field.max_abs());
            if pinned_nodes(&m, v, DEFAULT_NODE_EPS) != nodes {
                sign_flips += 1.0;
            }
        }
    }

    let c = spec.center_site();
    let mut values = vec![0.0; spec.n_sites()];
    for (s, value) in values.iter_mut().enumerate().take(spec.sites_per_dim()).skip(1) {
        let x = spec.coordinate(s);
        *value = (-(x - 6.0).powi(2) / 4.0).exp() - (-(x + 6.0).powi(2) / 4.0).exp();
    }
    let mut pair = AmplitudeField::new(spec, values)?;
    let mut cancel: f64 = 0.0;
    for _ in 0..100 {
        pair = evolve(&m, &pair, 1)?;
        cancel = cancel.max(pair.values()[c].abs() / pair.max_abs());
    }
    Ok(vec![
        opts.at_most("|psi(node)| / max|psi| over 100 steps", node_ratio, DEFAULT_NODE_EPS),
        opts.at_most("steps where the nodal set changed", sign_flips, 0.0),
        opts.at_most("mirrored bumps: |psi(centre)| / max|psi|", cancel, 1e-12),
    ])
}
