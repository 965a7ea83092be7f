use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nlqf_cli::run::{execute, write_run, RunOptions, RunResult};
use nlqf_cli::scenario::{load_scenario, OutputSpec};
use nlqf_cli::{density_at, CliError};
use nlqf_core::densities::GDescriptor;
use num_complex::Complex64;

#[derive(Parser)]
#[command(name = "nlqf", version, about = "Nonlinear quantum-field inner products, expectations and densities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone)]
struct Common {
    /// Directory for CSV tables and manifest.json (`run` defaults to ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Scenario edit `dotted.key=value`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Tolerance for PSD certification and dual-path comparisons.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Deformation {
    Identity,
    XMinusTanh,
}

#[derive(Subcommand)]
enum Command {
    /// Run every output listed in the scenario.
    Run { scenario: PathBuf },
    /// Gram matrix of named probes with PSD certification.
    Gram {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        probes: Vec<String>,
    },
    /// Wightman functions of the first 1..n probes.
    Wightman {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        probes: Vec<String>,
        #[arg(long)]
        n: Option<usize>,
        /// Also evaluate by the word-expansion oracle and compare.
        #[arg(long)]
        oracle: bool,
    },
    /// Joint density at a point, from a scenario or from an explicit geometry.
    Density {
        scenario: Option<PathBuf>,
        /// Probes measured (scenario mode).
        #[arg(long, value_delimiter = ',')]
        probes: Vec<String>,
        /// Number of measurements (explicit mode).
        #[arg(long)]
        n: Option<usize>,
        /// `F = variance * identity` (explicit mode).
        #[arg(long)]
        variance: Option<f64>,
        /// Row-major `F` entries (explicit mode).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        cov: Vec<f64>,
        /// Real one-particle vector `S` (explicit mode).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        s: Vec<f64>,
        /// Imaginary part of `S`.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        s_imag: Vec<f64>,
        #[arg(long, value_enum)]
        deformation: Option<Deformation>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        at: Vec<f64>,
    },
    /// Commutators of probe pairs.
    Commutator {
        scenario: PathBuf,
        /// `a,b`; repeatable.
        #[arg(long = "pair", value_name = "A,B", required = true)]
        pairs: Vec<String>,
    },
    /// `xi(f, f_a)` for `a = s * direction` by both evaluation paths.
    SweepTranslation {
        scenario: PathBuf,
        #[arg(long)]
        probe: String,
        /// Four components, or three for a purely spatial direction.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "1,0,0")]
        direction: Vec<f64>,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
        to: f64,
        #[arg(long, default_value_t = 0.5)]
        step: f64,
    },
    /// Grid diagnostics and Gram PSD certification only.
    Check {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',')]
        probes: Vec<String>,
    },
}

fn direction4(d: &[f64]) -> Result<[f64; 4], CliError> {
    match *d {
        [x, y, z] => Ok([0.0, x, y, z]),
        [t, x, y, z] => Ok([t, x, y, z]),
        _ => Err(CliError::Scenario(format!("direction needs 3 or 4 components, got {}", d.len()))),
    }
}

/// Load the scenario, replace its outputs and run.
fn run_single(
    path: &Path,
    common: &Common,
    make: impl FnOnce(&nlqf_cli::scenario::Resolved) -> Result<Vec<OutputSpec>, CliError>,
) -> Result<RunResult, CliError> {
    let loaded = load_scenario(path, &common.overrides)?;
    let mut scenario = loaded.scenario;
    let resolved = nlqf_cli::scenario::Resolved::new(scenario.clone())?;
    scenario.outputs = make(&resolved)?;
    drop(resolved);
    let r = execute(scenario, &loaded.sha256, &common.overrides, RunOptions { tol: common.tol })?;
    if let Some(out) = &common.out {
        write_run(&r, out)?;
    }
    Ok(r)
}

fn print_tables(r: &RunResult) {
    for (_, t) in &r.tables {
        print!("{}", t.to_csv());
    }
    for w in &r.manifest.warnings {
        eprintln!("warning: {w}");
    }
}

fn split_pair(p: &str) -> Result<[String; 2], CliError> {
    match p.split_once(',') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() && !b.contains(',') => Ok([a.to_string(), b.to_string()]),
        _ => Err(CliError::Scenario(format!("pair `{p}` is not `a,b`"))),
    }
}

fn explicit_density(
    n: Option<usize>,
    variance: Option<f64>,
    cov: Vec<f64>,
    s: Vec<f64>,
    s_imag: Vec<f64>,
    deformation: Option<Deformation>,
    at: &[f64],
) -> Result<(), CliError> {
    let n = n.unwrap_or(at.len());
    let f = match (variance, cov.is_empty()) {
        (Some(v), true) => (0..n).map(|i| (0..n).map(|j| if i == j { v } else { 0.0 }).collect()).collect(),
        (None, false) if cov.len() == n * n => cov.chunks(n).map(<[f64]>::to_vec).collect(),
        (None, false) => return Err(CliError::Scenario(format!("--cov needs {} entries for n = {n}", n * n))),
        _ => return Err(CliError::Scenario("give exactly one of --variance and --cov".into())),
    };
    let s = if s.is_empty() && s_imag.is_empty() {
        None
    } else {
        let im = if s_imag.is_empty() { vec![0.0; s.len()] } else { s_imag };
        if im.len() != s.len() || s.len() != n {
            return Err(CliError::Scenario(format!("--s and --s-imag need {n} entries")));
        }
        Some(s.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect())
    };
    let g = deformation.map(|d| match d {
        Deformation::Identity => GDescriptor::Identity,
        Deformation::XMinusTanh => GDescriptor::XMinusTanh,
    });
    let (p, warnings) = density_at(f, s, g, at)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    println!("{p}");
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let common = cli.common.clone();
    let finish = |r: RunResult| -> Result<(), CliError> {
        print_tables(&r);
        r.into_result().map(|_| ())
    };
    match cli.command {
        Command::Run { scenario } => {
            let loaded = load_scenario(&scenario, &common.overrides)?;
            let r = execute(loaded.scenario, &loaded.sha256, &common.overrides, RunOptions { tol: common.tol })?;
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            write_run(&r, &out)?;
            for w in &r.manifest.warnings {
                eprintln!("warning: {w}");
            }
            println!("wrote {} output(s) and manifest.json to {}", r.tables.len(), out.display());
            r.into_result().map(|_| ())
        }
        Command::Gram { scenario, probes } => finish(run_single(&scenario, &common, |_| {
            Ok(vec![OutputSpec::Gram { name: Some("gram".into()), probes, tol: None }])
        })?),
        Command::Wightman { scenario, probes, n, oracle } => finish(run_single(&scenario, &common, |_| {
            Ok(vec![OutputSpec::Wightman { name: Some("wightman".into()), probes, max_n: n, oracle }])
        })?),
        Command::Commutator { scenario, pairs } => {
            let pairs = pairs.iter().map(|p| split_pair(p)).collect::<Result<Vec<_>, _>>()?;
            finish(run_single(&scenario, &common, |_| {
                Ok(vec![OutputSpec::Commutator { name: Some("commutator".into()), pairs }])
            })?)
        }
        Command::SweepTranslation { scenario, probe, direction, from, to, step } => {
            let direction = direction4(&direction)?;
            finish(run_single(&scenario, &common, |_| {
                Ok(vec![OutputSpec::TranslationSweep {
                    name: Some("translation".into()),
                    probe,
                    direction,
                    start: from,
                    stop: to,
                    step,
                }])
            })?)
        }
        Command::Check { scenario, probes } => finish(run_single(&scenario, &common, |r| {
            let probes = if probes.is_empty() { r.all_probe_names() } else { probes };
            Ok(vec![OutputSpec::Gram { name: Some("check".into()), probes, tol: None }])
        })?),
        Command::Density { scenario: Some(scenario), probes, deformation, at, .. } => {
            if probes.len() != at.len() {
                return Err(CliError::Scenario(format!("--at needs one value per probe ({})", probes.len())));
            }
            let g = deformation.map(|d| match d {
                Deformation::Identity => GDescriptor::Identity,
                Deformation::XMinusTanh => GDescriptor::XMinusTanh,
            });
            finish(run_single(&scenario, &common, |_| {
                Ok(vec![OutputSpec::Density {
                    name: Some("density".into()),
                    probes,
                    ranges: at.iter().map(|&x| (x, x, 1)).collect(),
                    deformation: g,
                    ridge: 0.0,
                }])
            })?)
        }
        Command::Density { scenario: None, n, variance, cov, s, s_imag, deformation, at, .. } => {
            explicit_density(n, variance, cov, s, s_imag, deformation, &at)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(nlqf_cli::EXIT_SCENARIO as u8);
        }
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
