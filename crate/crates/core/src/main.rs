use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use merw::experiment::{run, ExperimentConfig, ExperimentKind, RunReport};
use merw::lattice::Boundary;
use merw::verify::{run_criterion, VerifyOptions, CRITERIA};
use merw::walk::MixtureScheme;
use merw::MerwError;

/// Maximal entropy random walk experiments on cubic lattices.
#[derive(Debug, Parser)]
#[command(name = "merw", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Point-started walk in a box against the Gaussian and the ground state.
    BoxDiffusion(ExperimentArgs),
    /// Transient entropy after k = 2^n steps.
    EntropyGrowth(ExperimentArgs),
    /// Entropy over mixtures of the three lowest states.
    EntropyLandscape(ExperimentArgs),
    /// Spectrum and ground state in a potential.
    PotentialSolve(ExperimentArgs),
    /// Convergence order of the second-order expansion.
    ExpansionCheck(ExperimentArgs),
    /// Expectations of the fourth-order correction terms.
    Corrections(ExperimentArgs),
    /// Runs an experiment described by a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the output directory of the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Prints the JSON report instead of a summary.
        #[arg(long)]
        json: bool,
    },
    /// Runs the acceptance criteria.
    Verify {
        /// Comma-separated criterion ids; all when omitted.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
        /// Overrides a check tolerance, `label=value`.
        #[arg(long = "tolerance", value_parser = parse_override)]
        tolerances: Vec<(String, f64)>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long)]
    dims: Option<usize>,
    /// Sites per axis including both walls (N + 1).
    #[arg(long)]
    sites: Option<usize>,
    /// Lattice spacing δ in reduced Compton wavelengths.
    #[arg(long)]
    spacing: Option<f64>,
    #[arg(long, value_parser = parse_boundary)]
    boundary: Option<Boundary>,
    /// `zero`, `harmonic:ω`, `linear:g`, `coulomb:α[:r_cut]`.
    #[arg(long)]
    potential: Option<String>,
    /// Comma-separated step counts.
    #[arg(long, value_delimiter = ',')]
    steps: Option<Vec<usize>>,
    /// Exponent range `a..b` for k = 2^a ..= 2^b.
    #[arg(long, value_parser = parse_range)]
    steps_pow2: Option<[u32; 2]>,
    /// `around_ground` or `around_first`.
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<MixtureScheme>,
    /// Largest α² + β² on the landscape.
    #[arg(long)]
    radius2: Option<f64>,
    /// Landscape samples per axis.
    #[arg(long)]
    grid: Option<usize>,
    /// Block nodes instead of masking signed mixtures.
    #[arg(long)]
    block_nodes: Option<bool>,
    /// Number of eigenpairs.
    #[arg(long)]
    states: Option<usize>,
    /// Comma-separated decreasing spacings for the expansion check.
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    /// Overrides a check tolerance, `label=value`.
    #[arg(long = "tolerance", value_parser = parse_override)]
    tolerances: Vec<(String, f64)>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
}

impl ExperimentArgs {
    fn into_config(self, kind: ExperimentKind) -> (ExperimentConfig, bool) {
        let mut c = ExperimentConfig::new(kind);
        c.dims = self.dims;
        c.sites = self.sites;
        c.spacing = self.spacing;
        c.boundary = self.boundary;
        c.potential = self.potential;
        c.steps = self.steps;
        c.steps_pow2 = self.steps_pow2;
        c.scheme = self.scheme;
        c.radius2 = self.radius2;
        c.grid = self.grid;
        c.block_nodes = self.block_nodes;
        c.states = self.states;
        c.deltas = self.deltas;
        c.tolerances = self.tolerances.into_iter().collect();
        c.out = self.out;
        c.seed = self.seed;
        (c, self.json)
    }
}

fn parse_boundary(s: &str) -> Result<Boundary, String> {
    match s {
        "hard_wall" => Ok(Boundary::HardWall),
        "periodic" => Ok(Boundary::Periodic),
        _ => Err(format!("expected hard_wall or periodic, got `{s}`")),
    }
}

fn parse_scheme(s: &str) -> Result<MixtureScheme, String> {
    s.parse().map_err(|e: MerwError| e.to_string())
}

fn parse_range(s: &str) -> Result<[u32; 2], String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected a..b, got `{s}`"))?;
    let a = a.trim().parse().map_err(|_| format!("bad range start in `{s}`"))?;
    let b = b.trim().parse().map_err(|_| format!("bad range end in `{s}`"))?;
    Ok([a, b])
}

fn parse_override(s: &str) -> Result<(String, f64), String> {
    let (label, value) = s.rsplit_once('=').ok_or_else(|| format!("expected label=value, got `{s}`"))?;
    let value = value.trim().parse().map_err(|_| format!("bad tolerance in `{s}`"))?;
    Ok((label.trim().to_string(), value))
}

fn configure_threads() -> Result<(), String> {
    if let Ok(v) = std::env::var("MERW_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| format!("MERW_THREADS must be a positive integer, got `{v}`"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn is_usage_error(e: &MerwError) -> bool {
    matches!(
        e,
        MerwError::Config(_) | MerwError::InvalidArgument(_) | MerwError::InvalidLattice(_)
    )
}

fn finish_run(result: merw::Result<RunReport>, json: bool) -> ExitCode {
    match result {
        Ok(report) => {
            if json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                for c in &report.checks {
                    let status = if c.pass { "PASS" } else { "FAIL" };
                    println!("{status} {}: {:.6e} (tol {:.3e})", c.label, c.measured, c.tolerance);
                }
            }
            let failed = report.failed_checks();
            if failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                for c in failed {
                    eprintln!("check failed: {}", c.label);
                }
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_usage_error(&e) { 2 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let experiment = |args: ExperimentArgs, kind| {
        let (config, json) = args.into_config(kind);
        finish_run(run(&config), json)
    };
    match cli.command {
        Command::BoxDiffusion(a) => experiment(a, ExperimentKind::BoxDiffusion),
        Command::EntropyGrowth(a) => experiment(a, ExperimentKind::EntropyGrowth),
        Command::EntropyLandscape(a) => experiment(a, ExperimentKind::EntropyLandscape),
        Command::PotentialSolve(a) => experiment(a, ExperimentKind::PotentialSolve),
        Command::ExpansionCheck(a) => experiment(a, ExperimentKind::ExpansionCheck),
        Command::Corrections(a) => experiment(a, ExperimentKind::Corrections),
        Command::Run { config, out, json } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            let mut parsed = match ExperimentConfig::from_json(&text) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            if let Some(out) = out {
                parsed.out = out;
            }
            finish_run(run(&parsed), json)
        }
        Command::Verify { only, tolerances, json } => {
            let opts = VerifyOptions {
                tolerances: tolerances.into_iter().collect(),
            };
            let ids: Vec<u32> = if only.is_empty() {
                CRITERIA.iter().map(|(id, _)| *id).collect()
            } else {
                only
            };
            let mut reports = Vec::new();
            for id in ids {
                match run_criterion(id, &opts) {
                    Some(r) => {
                        if !json {
                            println!("{}", r.summary_line());
                        }
                        reports.push(r);
                    }
                    None => {
                        eprintln!("error: unknown criterion {id}");
                        return ExitCode::from(2);
                    }
                }
            }
            if json {
                println!("{}", serde_json::to_string_pretty(&reports).expect("reports serialize"));
            }
            let failed: Vec<String> = reports
                .iter()
                .filter(|r| !r.pass)
                .map(|r| format!("[{}] {}", r.id, r.name))
                .collect();
            if failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                eprintln!("failed criteria: {}", failed.join(", "));
                ExitCode::from(1)
            }
        }
    }
}
