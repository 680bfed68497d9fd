//! Library results against closed forms and independent computations.

use std::f64::consts::PI;

use merw::bridge::{energy_from_eigenvalue, expansion_residual, sample_points};
use merw::entropy::{blocked_entropy, k_step_entropy, step_entropy};
use merw::lattice::{build_box_step_matrix, GaussianBump, LatticeSpec, Potential, ScalarField};
use merw::spectral::{dense_oracle, dominant_eigenpair, top_k_eigenpairs, DEFAULT_MAX_ITER, DEFAULT_TOL};
use merw::walk::{
    evolve, gaussian_transient_check, merw_stochastic_matrix, stationary_density, AmplitudeField, DEFAULT_NODE_EPS,
};

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

#[test]
fn one_dimensional_counts_are_binomial() {
    let spec = LatticeSpec::hard_wall(1, 128, 1.0).unwrap();
    let m = build_box_step_matrix(&spec).unwrap();
    let c = spec.center_site();
    let tau = 40u64;
    let f = evolve(&m, &AmplitudeField::point(spec, c).unwrap(), tau as usize).unwrap();
    let counts = f.unscaled();
    for offset in -(tau as i64)..=(tau as i64) {
        let site = (c as i64 + offset) as usize;
        let expected = if (offset + tau as i64) % 2 == 0 {
            binomial(tau, ((tau as i64 + offset) / 2) as u64) as f64
        } else {
            0.0
        };
        assert_eq!(counts[site], expected, "offset {offset}");
    }
}

#[test]
fn two_dimensional_counts_factorize() {
    // Rotating by 45° splits a 2D nearest-neighbour walk into two
    // independent 1D walks: paths to (a, b) = C(τ, (τ+a+b)/2) C(τ, (τ+a-b)/2).
    let spec = LatticeSpec::hard_wall(2, 48, 1.0).unwrap();
    let m = build_box_step_matrix(&spec).unwrap();
    let c = spec.center_site();
    let tau = 16i64;
    let f = evolve(&m, &AmplitudeField::point(spec, c).unwrap(), tau as usize).unwrap();
    let counts = f.unscaled();
    for a in -tau..=tau {
        for b in -tau..=tau {
            let site = spec.linear_index(&[(24 + a) as usize, (24 + b) as usize]).unwrap();
            let (u, v) = (tau + a + b, tau + a - b);
            let expected = if u % 2 == 0 && (0..=2 * tau).contains(&u) && (0..=2 * tau).contains(&v) {
                (binomial(tau as u64, (u / 2) as u64) * binomial(tau as u64, (v / 2) as u64)) as f64
            } else {
                0.0
            };
            assert_eq!(counts[site], expected, "({a}, {b})");
        }
    }
    let fit = gaussian_transient_check(&f, c, tau as usize).unwrap();
    for s in &fit.sigma2_fit {
        assert!((s - 8.0).abs() < 1e-12, "{s}");
    }
    assert_eq!(fit.sigma2_expected, 8.0);
}

#[test]
fn box_spectrum_is_analytic() {
    for n in [8usize, 32, 64] {
        let m = build_box_step_matrix(&LatticeSpec::hard_wall(1, n, 1.0).unwrap()).unwrap();
        let basis = top_k_eigenpairs(&m, 3, DEFAULT_TOL).unwrap();
        for (i, p) in basis.pairs.iter().enumerate() {
            let expected = 2.0 * (PI * (i + 1) as f64 / n as f64).cos();
            assert!((p.eigenvalue - expected).abs() < 1e-12, "N={n} i={i}");
            let norm: f64 = (1..n).map(|j| (PI * ((i + 1) * j) as f64 / n as f64).sin().powi(2)).sum::<f64>().sqrt();
            let dot: f64 = (1..n)
                .map(|j| p.eigenvector[j] * (PI * ((i + 1) * j) as f64 / n as f64).sin() / norm)
                .sum();
            assert!((dot.abs() - 1.0).abs() < 1e-10, "N={n} i={i}");
        }
    }
}

#[test]
fn square_box_is_a_kronecker_sum() {
    let m1 = build_box_step_matrix(&LatticeSpec::hard_wall(1, 16, 1.0).unwrap()).unwrap();
    let m2 = build_box_step_matrix(&LatticeSpec::hard_wall(2, 16, 1.0).unwrap()).unwrap();
    let l1 = dominant_eigenpair(&m1, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let l2 = dominant_eigenpair(&m2, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert!((l2.eigenvalue - 2.0 * l1.eigenvalue).abs() < 1e-12);
    // Ground state of the square is the outer product of the 1D ground state.
    let spec = LatticeSpec::hard_wall(2, 16, 1.0).unwrap();
    for site in 0..spec.n_sites() {
        let idx = spec.multi_index(site).unwrap();
        let expected = l1.eigenvector[idx[0]] * l1.eigenvector[idx[1]];
        assert!((l2.eigenvector[site] - expected).abs() < 1e-10);
    }
}

#[test]
fn ring_spectrum() {
    let m = build_box_step_matrix(&LatticeSpec::periodic(1, 12, 1.0).unwrap()).unwrap();
    let dense = dense_oracle(&m).unwrap();
    let mut expected: Vec<f64> = (0..12).map(|k| 2.0 * (2.0 * PI * k as f64 / 12.0).cos()).collect();
    expected.sort_by(|a, b| b.total_cmp(a));
    for (p, e) in dense.pairs.iter().zip(&expected) {
        assert!((p.eigenvalue - e).abs() < 1e-12);
    }
}

#[test]
fn harmonic_iterative_matches_dense() {
    let spec = LatticeSpec::hard_wall(1, 200, 1.0).unwrap();
    let m = merw::build_potential_step_matrix(&spec, &Potential::harmonic(0.05)).unwrap();
    let it = top_k_eigenpairs(&m, 4, DEFAULT_TOL).unwrap();
    let dense = dense_oracle(&m).unwrap();
    for i in 0..4 {
        assert!((it.pairs[i].eigenvalue - dense.pairs[i].eigenvalue).abs() < 1e-10);
        let dot: f64 = it.vector(i).iter().zip(dense.vector(i)).map(|(a, b)| a * b).sum();
        assert!((dot - 1.0).abs() < 1e-8, "state {i}: {dot}");
    }
}

#[test]
fn box_energy_example() {
    let e0 = energy_from_eigenvalue(2.0 * (PI / 32.0).cos(), 1);
    let cont = PI * PI / (2.0 * 32.0 * 32.0);
    assert!((e0 - 4.8153e-3).abs() < 5e-8);
    assert!((cont - 4.8191e-3).abs() < 5e-8);
    assert!(((e0 - cont) / cont).abs() < 1e-3);
}

/// Stationary entropy summed with the analytic sine eigenvector.
#[test]
fn box_entropy_by_direct_summation() {
    let n = 32usize;
    let lambda = 2.0 * (PI / n as f64).cos();
    let psi: Vec<f64> = (0..=n).map(|j| (PI * j as f64 / n as f64).sin().max(0.0)).collect();
    let norm: f64 = psi[1..n].iter().map(|v| v * v).sum();
    let mut direct = 0.0;
    for x in 1..n {
        let rho = psi[x] * psi[x] / norm;
        for y in [x - 1, x + 1] {
            if (1..n).contains(&y) {
                let s = psi[y] / (lambda * psi[x]);
                direct -= rho * s * s.log2();
            }
        }
    }
    let m = build_box_step_matrix(&LatticeSpec::hard_wall(1, n, 1.0).unwrap()).unwrap();
    let g = dominant_eigenpair(&m, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let h = step_entropy(&stationary_density(&g).unwrap(), &merw_stochastic_matrix(&m, &g).unwrap()).unwrap();
    assert!((h.h_bits - direct).abs() < 1e-10);
    assert!((h.h_bits - 0.99304).abs() < 5e-6);
}

#[test]
fn telescoping_in_two_dimensions() {
    let m = build_box_step_matrix(&LatticeSpec::hard_wall(2, 6, 1.0).unwrap()).unwrap();
    let g = dominant_eigenpair(&m, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let rho = stationary_density(&g).unwrap();
    let s = merw_stochastic_matrix(&m, &g).unwrap();
    for k in 1..=5 {
        let r = k_step_entropy(&rho, &s, k).unwrap();
        assert!((r.h_k_bits - k as f64 * r.h_bits).abs() < 1e-9, "k={k}");
    }
}

#[test]
fn excited_state_has_less_entropy() {
    let m = build_box_step_matrix(&LatticeSpec::hard_wall(1, 64, 1.0).unwrap()).unwrap();
    let basis = top_k_eigenpairs(&m, 2, DEFAULT_TOL).unwrap();
    let h0 = blocked_entropy(&m, basis.vector(0), DEFAULT_NODE_EPS).unwrap().h_bits;
    let h1 = blocked_entropy(&m, basis.vector(1), DEFAULT_NODE_EPS).unwrap().h_bits;
    assert!(h1 < h0);
    // Each half of |1⟩ is the ground state of a box half as wide.
    let half = build_box_step_matrix(&LatticeSpec::hard_wall(1, 32, 1.0).unwrap()).unwrap();
    let lh = dominant_eigenpair(&half, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap().eigenvalue;
    assert!((h1 - lh.log2()).abs() < 1e-10);
}

/// `ψ(x+δ) + ψ(x-δ) - 2ψ - δ²ψ''` starts at `δ⁴ψ''''/12` for `V = 0`.
#[test]
fn free_residual_matches_taylor_remainder() {
    let bump = GaussianBump {
        amplitude: 1.0,
        center: vec![0.0],
        width: 0.5,
    };
    let points = sample_points(1, 41, 1.5);
    let w2: f64 = 0.25;
    let fourth = |x: f64| {
        let u = x * x / w2;
        (u * u - 6.0 * u + 3.0) / (w2 * w2) * bump.value(&[x])
    };
    let leading = points.iter().map(|p| fourth(p[0]).abs() / 12.0).fold(0.0, f64::max);
    let delta = 1e-2;
    let r = expansion_residual(&Potential::zero(), &bump, &points, &[2.0 * delta, delta]).unwrap();
    let ratio = r.residuals[1] / delta.powi(4);
    assert!((ratio / leading - 1.0).abs() < 1e-3, "{ratio} vs {leading}");
}
