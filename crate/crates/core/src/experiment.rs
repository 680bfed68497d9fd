//! Config-driven experiments writing CSV data, a JSON report and a manifest.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bridge::{correction_expectations, expansion_residual, order_alpha2_check, sample_points, EnergySpectrum};
use crate::entropy::{entropy_landscape, step_entropy, transient_growth, write_growth_csv, LandscapeOptions};
use crate::error::{MerwError, Result};
use crate::lattice::{build_potential_step_matrix, Boundary, GaussianBump, LatticeSpec, Potential, StepMatrix};
use crate::spectral::{dominant_eigenpair, top_k_eigenpairs, DEFAULT_MAX_ITER, DEFAULT_TOL, DENSE_SITE_LIMIT};
use crate::verify::Check;
use crate::walk::{
    evolve, gaussian_transient_check, merw_stochastic_matrix, stationary_density, write_site_csv, AmplitudeField,
    MixtureScheme, DEFAULT_NODE_EPS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    BoxDiffusion,
    EntropyGrowth,
    EntropyLandscape,
    PotentialSolve,
    ExpansionCheck,
    Corrections,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::BoxDiffusion => "box-diffusion",
            Self::EntropyGrowth => "entropy-growth",
            Self::EntropyLandscape => "entropy-landscape",
            Self::PotentialSolve => "potential-solve",
            Self::ExpansionCheck => "expansion-check",
            Self::Corrections => "corrections",
        }
    }
}

/// Experiment parameters. Unset fields take per-experiment defaults; the
/// manifest records the resolved values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub dims: Option<usize>,
    /// Sites per axis including both walls, `N + 1`.
    #[serde(default)]
    pub sites: Option<usize>,
    #[serde(default)]
    pub spacing: Option<f64>,
    #[serde(default)]
    pub boundary: Option<Boundary>,
    /// `zero`, `harmonic:ω`, `linear:g`, `coulomb:α[:r_cut]`.
    #[serde(default)]
    pub potential: Option<String>,
    #[serde(default)]
    pub steps: Option<Vec<usize>>,
    /// Inclusive exponent range `[a, b]` for `k = 2^a ..= 2^b`.
    #[serde(default)]
    pub steps_pow2: Option<[u32; 2]>,
    #[serde(default)]
    pub scheme: Option<MixtureScheme>,
    #[serde(default)]
    pub radius2: Option<f64>,
    /// Landscape samples per axis.
    #[serde(default)]
    pub grid: Option<usize>,
    #[serde(default)]
    pub block_nodes: Option<bool>,
    /// Number of eigenpairs to compute.
    #[serde(default)]
    pub states: Option<usize>,
    #[serde(default)]
    pub deltas: Option<Vec<f64>>,
    /// Overrides of check tolerances, keyed by check label.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Reserved; every experiment is deterministic.
    #[serde(default)]
    pub seed: u64,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            dims: None,
            sites: None,
            spacing: None,
            boundary: None,
            potential: None,
            steps: None,
            steps_pow2: None,
            scheme: None,
            radius2: None,
            grid: None,
            block_nodes: None,
            states: None,
            deltas: None,
            tolerances: BTreeMap::new(),
            out: default_out(),
            seed: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| MerwError::Config(e.to_string()))
    }

    /// Fills every field the experiment reads and validates the result.
    pub fn resolve(&self) -> Result<Self> {
        use ExperimentKind::*;
        let mut c = self.clone();
        let kind = c.experiment;
        let dims = *c.dims.get_or_insert(match kind {
            ExpansionCheck => 2,
            _ => 1,
        });
        if dims == 0 {
            return Err(MerwError::Config("dims must be positive".into()));
        }
        c.boundary.get_or_insert(Boundary::HardWall);
        if kind != ExpansionCheck {
            let sites = *c.sites.get_or_insert(match kind {
                BoxDiffusion | EntropyGrowth => 33,
                EntropyLandscape => 65,
                _ => 513,
            });
            if sites < 3 {
                return Err(MerwError::Config("sites must be at least 3".into()));
            }
            let unit_box = matches!(kind, BoxDiffusion | EntropyGrowth | EntropyLandscape);
            c.spacing.get_or_insert(if unit_box {
                1.0 / (sites - 1) as f64
            } else {
                (dims as f64).sqrt()
            });
        }
        if let Some(s) = c.spacing {
            if !(s > 0.0 && s.is_finite()) {
                return Err(MerwError::Config("spacing must be positive".into()));
            }
        }
        match kind {
            BoxDiffusion => {
                let steps = c.steps.get_or_insert_with(|| vec![16, 256]);
                if steps.is_empty() {
                    return Err(MerwError::Config("steps must not be empty".into()));
                }
                steps.sort_unstable();
                steps.dedup();
            }
            EntropyGrowth => {
                let [a, b] = *c.steps_pow2.get_or_insert([0, 8]);
                if a > b || b > 30 {
                    return Err(MerwError::Config("steps_pow2 must be a..b with a <= b <= 30".into()));
                }
            }
            EntropyLandscape => {
                let scheme = *c.scheme.get_or_insert(MixtureScheme::AroundGround);
                let first = scheme == MixtureScheme::AroundFirst;
                let r2 = *c.radius2.get_or_insert(if first { 1.0 } else { 0.06 });
                if !(0.0..=1.0).contains(&r2) {
                    return Err(MerwError::Config("radius2 must lie in [0, 1]".into()));
                }
                if *c.grid.get_or_insert(41) == 0 {
                    return Err(MerwError::Config("grid must be positive".into()));
                }
                c.block_nodes.get_or_insert(first);
            }
            PotentialSolve | Corrections => {
                c.potential.get_or_insert_with(|| "harmonic:0.02".into());
                if kind == PotentialSolve && *c.states.get_or_insert(3) == 0 {
                    return Err(MerwError::Config("states must be positive".into()));
                }
            }
            ExpansionCheck => {
                c.potential.get_or_insert_with(|| "harmonic:0.8".into());
                let d = c.deltas.get_or_insert_with(|| vec![0.2, 0.1, 0.05, 0.025]);
                if d.len() < 2 || d.windows(2).any(|w| !(w[1] < w[0])) || d.iter().any(|v| !(*v > 0.0)) {
                    return Err(MerwError::Config("deltas must be at least two positive, decreasing values".into()));
                }
            }
        }
        if let Some(p) = &c.potential {
            Potential::from_preset(p, c.spacing.unwrap_or(1.0))?;
        }
        Ok(c)
    }

    fn lattice(&self) -> Result<LatticeSpec> {
        let sites = self.sites.expect("resolved");
        let boundary = self.boundary.expect("resolved");
        let n = match boundary {
            Boundary::HardWall => sites - 1,
            Boundary::Periodic => sites,
        };
        LatticeSpec::new(self.dims.expect("resolved"), n, self.spacing.expect("resolved"), boundary)
            .map_err(|e| MerwError::Config(e.to_string()))
    }

    fn potential(&self) -> Result<Potential> {
        Potential::from_preset(self.potential.as_deref().unwrap_or("zero"), self.spacing.unwrap_or(1.0))
    }

    fn tolerance(&self, label: &str, default: f64) -> f64 {
        self.tolerances.get(label).copied().unwrap_or(default)
    }
}

/// The JSON report of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub experiment: String,
    pub parameters: ExperimentConfig,
    pub values: BTreeMap<String, Value>,
    pub tolerances: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl RunReport {
    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

struct Run<'a> {
    config: &'a ExperimentConfig,
    data: PathBuf,
    artifacts: Vec<String>,
    values: BTreeMap<String, Value>,
    checks: Vec<Check>,
}

impl Run<'_> {
    fn csv(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.artifacts.push(format!("data/{name}"));
        Ok(BufWriter::new(File::create(self.data.join(name))?))
    }

    fn value(&mut self, key: &str, v: impl Serialize) {
        self.values.insert(key.to_string(), json!(v));
    }

    fn at_most(&mut self, label: &str, measured: f64, default: f64) {
        let tolerance = self.config.tolerance(label, default);
        self.checks.push(Check {
            label: label.to_string(),
            measured,
            tolerance,
            pass: measured <= tolerance,
        });
    }

    fn at_least(&mut self, label: &str, measured: f64, default: f64) {
        let tolerance = self.config.tolerance(label, default);
        self.checks.push(Check {
            label: format!("{label} (at least)"),
            measured,
            tolerance,
            pass: measured >= tolerance,
        });
    }
}

/// Resolves the config, runs the experiment and writes `data/*.csv`,
/// `report.json` and `manifest.json` under `config.out`.
pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    let config = config.resolve()?;
    let data = config.out.join("data");
    fs::create_dir_all(&data)?;
    let mut state = Run {
        config: &config,
        data,
        artifacts: Vec::new(),
        values: BTreeMap::new(),
        checks: Vec::new(),
    };
    match config.experiment {
        ExperimentKind::BoxDiffusion => box_diffusion(&mut state)?,
        ExperimentKind::EntropyGrowth => entropy_growth(&mut state)?,
        ExperimentKind::EntropyLandscape => landscape(&mut state)?,
        ExperimentKind::PotentialSolve => potential_solve(&mut state)?,
        ExperimentKind::ExpansionCheck => expansion_check(&mut state)?,
        ExperimentKind::Corrections => corrections(&mut state)?,
    }
    let Run {
        artifacts,
        values,
        checks,
        ..
    } = state;
    let tolerances = checks.iter().map(|c| (c.label.clone(), c.tolerance)).collect();
    let report = RunReport {
        experiment: config.experiment.name().to_string(),
        parameters: config.clone(),
        values,
        tolerances,
        pass: checks.iter().all(|c| c.pass),
        checks,
    };
    write_json(&config.out.join("report.json"), &report)?;
    let manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "artifacts": artifacts,
        "report": "report.json",
    });
    write_json(&config.out.join("manifest.json"), &manifest)?;
    Ok(report)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

fn ground_pair(m: &StepMatrix) -> Result<crate::spectral::SpectralPair> {
    dominant_eigenpair(m, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

fn box_diffusion(run: &mut Run) -> Result<()> {
    let spec = run.config.lattice()?;
    let m = build_potential_step_matrix(&spec, &run.config.potential()?)?;
    let center = spec.center_site();
    let ground = ground_pair(&m)?;
    let g0 = ground.eigenvector[center];
    let steps = run.config.steps.clone().expect("resolved");
    let variance_per_step = spec.spacing().powi(2) / spec.dims() as f64;

    let mut field = AmplitudeField::point(spec, center)?;
    let mut per_step = Vec::new();
    for &tau in &steps {
        field = evolve(&m, &field, tau - field.time())?;
        let v = field.values();
        let norm = if v[center] != 0.0 { v[center] } else { field.max_abs() };
        let mut out = run.csv(&format!("psi_tau{tau}.csv"))?;
        let coords: Vec<String> = (1..=spec.dims()).map(|d| format!("x{d}")).collect();
        writeln!(out, "site_index,{},psi_ratio,gaussian,ground_ratio", coords.join(","))?;
        let mut ground_gap: f64 = 0.0;
        let mu = spec.site_coords(center)?;
        for (site, &value) in v.iter().enumerate() {
            let x = spec.site_coords(site)?;
            let r2: f64 = x.iter().zip(&mu).map(|(a, b)| (a - b).powi(2)).sum();
            let gauss = (-r2 / (2.0 * tau as f64 * variance_per_step)).exp();
            let ratio = value / norm;
            let gr = ground.eigenvector[site] / g0;
            if value != 0.0 {
                ground_gap = ground_gap.max((ratio - gr).abs());
            }
            let xs: Vec<String> = x.iter().map(|c| format!("{c:.16e}")).collect();
            writeln!(out, "{site},{},{ratio:.16e},{gauss:.16e},{gr:.16e}", xs.join(","))?;
        }
        out.flush()?;
        let gaussian = gaussian_transient_check(&field, center, tau);
        per_step.push(json!({
            "steps": tau,
            "log2_scale": field.log2_scale(),
            "gaussian": gaussian.as_ref().ok(),
            "gaussian_error": gaussian.as_ref().err().map(|e| e.to_string()),
            "ground_profile_gap": ground_gap,
        }));
        if tau == steps[0] {
            match &gaussian {
                Ok(fit) => run.at_most(&format!("gaussian deviation at tau={tau}"), fit.max_rel_dev, 0.05),
                Err(_) if steps.len() == 1 => {}
                Err(e) => return Err(MerwError::InvalidArgument(format!("first step count: {e}"))),
            }
        }
        if tau == *steps.last().unwrap() && (steps.len() > 1 || gaussian.is_err()) {
            run.at_most(&format!("ground profile gap at tau={tau}"), ground_gap, 1e-2);
        }
    }
    run.value("lambda0", ground.eigenvalue);
    run.value("runs", per_step);
    Ok(())
}

fn entropy_growth(run: &mut Run) -> Result<()> {
    let spec = run.config.lattice()?;
    let m = build_potential_step_matrix(&spec, &run.config.potential()?)?;
    let [a, b] = run.config.steps_pow2.expect("resolved");
    let steps: Vec<usize> = (a..=b).map(|n| 1usize << n).collect();
    let curve = transient_growth(&m, &AmplitudeField::point(spec, spec.center_site())?, &steps)?;
    let ground = ground_pair(&m)?;
    let h = step_entropy(&stationary_density(&ground)?, &merw_stochastic_matrix(&m, &ground)?)?.h_bits;
    let mut out = run.csv("entropy_growth.csv")?;
    write_growth_csv(&mut out, &curve)?;
    out.flush()?;
    let drop = curve.windows(2).map(|w| w[0].1 - w[1].1).fold(0.0, f64::max);
    let last = curve.last().map(|p| p.1).unwrap_or(f64::NAN);
    run.value("stationary_h_bits", h);
    run.value("lb_lambda0", ground.eigenvalue.log2());
    run.value("curve", &curve);
    run.at_most("largest decrease between successive k", drop, 0.0);
    run.at_most("final distance to stationary H", (last - h).abs(), 1e-3);
    Ok(())
}

fn landscape(run: &mut Run) -> Result<()> {
    let spec = run.config.lattice()?;
    let m = build_potential_step_matrix(&spec, &run.config.potential()?)?;
    let basis = top_k_eigenpairs(&m, 3, DEFAULT_TOL)?;
    let scheme = run.config.scheme.expect("resolved");
    let opts = LandscapeOptions {
        scheme,
        radius2: run.config.radius2.expect("resolved"),
        points: run.config.grid.expect("resolved"),
        block_nodes: run.config.block_nodes.expect("resolved"),
        node_eps: DEFAULT_NODE_EPS,
    };
    let grid = entropy_landscape(&spec, &m, &basis, &opts)?;
    let name = match scheme {
        MixtureScheme::AroundGround => "landscape_around_ground.csv",
        MixtureScheme::AroundFirst => "landscape_around_first.csv",
    };
    let mut out = run.csv(name)?;
    grid.write_csv(&mut out)?;
    out.flush()?;
    let (ci, cj) = grid.center();
    run.value("valid_points", grid.valid_count());
    run.value("h_center", grid.get(ci, cj));
    if let Some((i, j)) = grid.argmax() {
        run.value("argmax", json!({"alpha": grid.alpha[i], "beta": grid.beta[j], "h": grid.get(i, j)}));
    }
    let d2 = grid.axis_second_differences();
    run.value("second_differences", d2.map(|(a, b)| json!({"alpha": a, "beta": b})));
    match scheme {
        MixtureScheme::AroundGround => {
            let offset = grid
                .argmax()
                .map(|(i, j)| i.abs_diff(ci).max(j.abs_diff(cj)) as f64)
                .unwrap_or(f64::INFINITY);
            run.at_most("argmax offset from centre (grid steps)", offset, 0.0);
        }
        MixtureScheme::AroundFirst => {
            let (da, db) = d2.unwrap_or((f64::NAN, f64::NAN));
            run.at_least("second difference toward |0>", da, 0.0);
            run.at_most("second difference toward |2>", db, 0.0);
        }
    }
    Ok(())
}

fn potential_solve(run: &mut Run) -> Result<()> {
    let spec = run.config.lattice()?;
    let pot = run.config.potential()?;
    let m = build_potential_step_matrix(&spec, &pot)?;
    let basis = top_k_eigenpairs(&m, run.config.states.expect("resolved"), DEFAULT_TOL)?;
    let spectrum = EnergySpectrum::from_basis(&basis, spec.dims());
    let mut out = run.csv("spectrum.csv")?;
    writeln!(out, "index,lambda,energy,residual")?;
    for (p, e) in basis.pairs.iter().zip(&spectrum.levels) {
        writeln!(out, "{},{:.16e},{e:.16e},{:.16e}", p.index, p.eigenvalue, p.residual)?;
    }
    out.flush()?;
    let mut out = run.csv("ground_state.csv")?;
    write_site_csv(&mut out, &spec, basis.vector(0))?;
    out.flush()?;
    run.value("eigenvalues", &spectrum.eigenvalues);
    run.value("energies", &spectrum.levels);
    run.value("degenerate", basis.degenerate);
    let worst = basis.pairs.iter().map(|p| p.residual).fold(0.0, f64::max);
    run.at_most("max eigen residual / lambda0", worst / basis.pairs[0].eigenvalue, 1e-10);
    if m.support().len() <= DENSE_SITE_LIMIT {
        let cmp = order_alpha2_check(&m, &pot, &basis)?;
        run.value("schrodinger_energies", &cmp.schrodinger);
        run.value("max_potential", cmp.max_potential);
        run.value("warnings", &cmp.warnings);
        run.at_most("max |E_MERW - E_Schrodinger| / E_Schrodinger", cmp.max_relative_gap(), 0.02);
    }
    Ok(())
}

fn expansion_check(run: &mut Run) -> Result<()> {
    let dims = run.config.dims.expect("resolved");
    let pot = run.config.potential()?;
    let center: Vec<f64> = [0.1, -0.2, 0.15].iter().cycle().take(dims).copied().collect();
    let field = GaussianBump {
        amplitude: 1.0,
        center,
        width: 0.7,
    };
    let deltas = run.config.deltas.clone().expect("resolved");
    let points = sample_points(dims, 5, 1.0);
    let report = expansion_residual(&pot, &field, &points, &deltas)?;
    let mut out = run.csv("expansion.csv")?;
    writeln!(out, "delta,residual")?;
    for (d, r) in report.deltas.iter().zip(&report.residuals) {
        writeln!(out, "{d:.16e},{r:.16e}")?;
    }
    out.flush()?;
    run.value("residuals", &report.residuals);
    run.value("slope", report.slope);
    run.at_least("log-log slope", report.slope, 2.9);
    Ok(())
}

fn corrections(run: &mut Run) -> Result<()> {
    let spec = run.config.lattice()?;
    let preset = run.config.potential.clone().expect("resolved");
    let pot = run.config.potential()?;
    let m = build_potential_step_matrix(&spec, &pot)?;
    let ground = ground_pair(&m)?;
    let c = correction_expectations(&AmplitudeField::from_pair(spec, &ground)?, &pot)?;
    let mut out = run.csv("corrections.csv")?;
    writeln!(out, "term,value")?;
    for (name, v) in [
        ("v_squared", c.v_squared),
        ("v_laplacian", c.v_laplacian),
        ("grad_v_grad", c.grad_v_grad),
        ("darwin", c.darwin),
        ("mean_laplacian_v", c.mean_laplacian_v),
        ("total", c.total),
    ] {
        writeln!(out, "{name},{v:.16e}")?;
    }
    out.flush()?;
    run.value("corrections", c);
    run.value("lambda0", ground.eigenvalue);
    run.at_most("|<H_D> - <dV>/8|", (c.darwin - c.mean_laplacian_v / 8.0).abs(), 1e-12);
    if let Some(w) = preset.strip_prefix("harmonic:").and_then(|w| w.parse::<f64>().ok()) {
        let expected = w * w * spec.dims() as f64 / 8.0;
        run.at_most("|<H_D> - D w^2/8|", (c.darwin - expected).abs(), 1e-10);
    }
    if preset.starts_with("coulomb:") {
        let gap = (c.v_squared - c.v_laplacian).abs() / c.v_squared.abs();
        run.at_most("|<V^2/2> - <V lap/2>| / <V^2/2>", gap, 0.05);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_json(r#"{"experiment": "entropy-growth", "colour": 1}"#).unwrap_err();
        assert!(matches!(err, MerwError::Config(_)));
        let ok = ExperimentConfig::from_json(r#"{"experiment": "entropy-growth", "steps_pow2": [0, 4]}"#).unwrap();
        assert_eq!(ok.steps_pow2, Some([0, 4]));
    }

    #[test]
    fn defaults_resolve() {
        let c = ExperimentConfig::new(ExperimentKind::EntropyLandscape).resolve().unwrap();
        assert_eq!(c.sites, Some(65));
        assert_eq!(c.spacing, Some(1.0 / 64.0));
        assert_eq!(c.radius2, Some(0.06));
        assert_eq!(c.block_nodes, Some(false));
        let mut first = ExperimentConfig::new(ExperimentKind::EntropyLandscape);
        first.scheme = Some(MixtureScheme::AroundFirst);
        let first = first.resolve().unwrap();
        assert_eq!((first.radius2, first.block_nodes), (Some(1.0), Some(true)));
        let p = ExperimentConfig::new(ExperimentKind::PotentialSolve).resolve().unwrap();
        assert_eq!(p.spacing, Some(1.0));
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let mut c = ExperimentConfig::new(ExperimentKind::PotentialSolve);
        c.potential = Some("morse:2".into());
        assert!(matches!(c.resolve(), Err(MerwError::Config(_))));
        let mut c = ExperimentConfig::new(ExperimentKind::EntropyGrowth);
        c.steps_pow2 = Some([5, 2]);
        assert!(matches!(c.resolve(), Err(MerwError::Config(_))));
    }
}
