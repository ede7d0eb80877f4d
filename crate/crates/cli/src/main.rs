use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use snse_core::config::{parse_config, ParsedConfig, ResolvedConfig};
use snse_core::estimators::{estimate_all, estimate_check, estimate_hat, estimate_tilde};
use snse_core::experiments::{run_linear_battery, run_monte_carlo, run_residual_study, StudyKind};
use snse_core::io::{self, ReportFormat, RunManifest};
use snse_core::{Error, EstimatorConfig, Solver, StokesBasis, TorusSpec};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_ACCEPTANCE: u8 = 4;
const EXIT_IO: u8 = 1;

#[derive(Parser)]
#[command(name = "snse", version, about = "Stochastic Navier-Stokes simulation and viscosity estimation")]
struct Cli {
    /// Worker threads for replicate-level parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file.
    #[arg(long, alias = "plan")]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the master seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Tilde,
    Check,
    Hat,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Writes the eigenbasis as CSV: index, n1, n2, parity, lambda.
    BasisDump {
        /// Grid size; the dump holds every mode it dealiases unless --modes is set.
        #[arg(long, default_value_t = 64)]
        grid_n: usize,
        #[arg(long)]
        modes: Option<usize>,
        #[arg(long, default_value_t = 2.0 * std::f64::consts::PI)]
        length: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulates one replicate and writes a trajectory checkpoint.
    Simulate(RunArgs),
    /// Checks empirical moments of the stochastic Stokes system against the exact ones.
    VerifyLinear(RunArgs),
    /// Evaluates estimators on a trajectory checkpoint and prints JSON.
    Estimate {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value_t = KindArg::All)]
        kind: KindArg,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Write the JSON here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo consistency sweep over the N grid.
    McConsistency(McArgs),
    /// Monte Carlo normality study.
    McNormality(McArgs),
    /// High-order energy of the residual U - Ubar relative to the linear part.
    ResidualStudy(RunArgs),
}

#[derive(Args)]
struct McArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Also write every replicate's trajectory checkpoint.
    #[arg(long)]
    keep_trajectories: bool,
    /// Largest tolerated fraction of failed replicates.
    #[arg(long, default_value_t = 0.0)]
    max_failure_fraction: f64,
}

enum Failure {
    Core(Error),
    Acceptance(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    match run(cli.command, cli.threads) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Acceptance(msg)) => {
            eprintln!("acceptance check failed: {msg}");
            ExitCode::from(EXIT_ACCEPTANCE)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_NUMERICAL)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Io(_) => EXIT_IO,
                e if e.is_numerical() => EXIT_NUMERICAL,
                _ => EXIT_CONFIG,
            })
        }
    }
}

fn load(args: &RunArgs, threads: Option<usize>, command: &str) -> Result<(ParsedConfig, RunManifest), Error> {
    let parsed = parse_config(&args.config, args.seed)?;
    std::fs::create_dir_all(&args.out)?;
    let mut manifest = RunManifest::new(command, parsed.hash(), parsed.master_seed(), Some(parsed.clone()));
    manifest.threads = threads;
    Ok((parsed, manifest))
}

fn kind_error(expected: &str, args: &RunArgs) -> Error {
    Error::config("kind", format!("{} is not a `{expected}` document", args.config.display()))
}

fn finish(mut manifest: RunManifest, out: &Path) -> Result<(), Error> {
    manifest.finish(out.join("manifest.json"))
}

fn run(command: Command, threads: Option<usize>) -> Result<(), Failure> {
    match command {
        Command::BasisDump { grid_n, modes, length, out } => {
            let torus = TorusSpec::new(length)?;
            let basis = match modes {
                Some(m) => {
                    if m == 0 {
                        return Err(Error::config("modes", "at least one mode").into());
                    }
                    StokesBasis::build(torus, m)
                }
                None => StokesBasis::dealiased(torus, grid_n)?,
            };
            io::write_basis_csv(&basis, out)?;
        }
        Command::Simulate(args) => {
            let (parsed, mut manifest) = load(&args, threads, "simulate")?;
            let ResolvedConfig::Simulate { solver, replicate } = &parsed.resolved else {
                return Err(kind_error("simulate", &args).into());
            };
            let traj = Solver::new(solver.clone())?.simulate(*replicate)?;
            let path = args.out.join("trajectory.csv");
            io::write_trajectory(&traj, &manifest.config_hash, &path)?;
            manifest.record(path);
            finish(manifest, &args.out)?;
        }
        Command::VerifyLinear(args) => {
            let (parsed, mut manifest) = load(&args, threads, "verify-linear")?;
            let ResolvedConfig::LinearBattery { battery, min_within_3se } = &parsed.resolved else {
                return Err(kind_error("linear_battery", &args).into());
            };
            let report = run_linear_battery(battery)?;
            let csv = args.out.join("linear_moments.csv");
            io::write_linear_csv(&report, &manifest.config_hash, &csv)?;
            let json = args.out.join("linear_report.json");
            io::write_json(&report, &json)?;
            manifest.record(csv);
            manifest.record(json);
            finish(manifest, &args.out)?;
            let within = report.count_within(3.0);
            println!(
                "{within}/{} modes within 3 standard errors; growth slope {:.4} (target {:.4})",
                report.rows.len(),
                report.fitted_slope_empirical,
                report.target_slope
            );
            if within < *min_within_3se {
                return Err(Failure::Acceptance(format!(
                    "{within} modes within 3 standard errors, {min_within_3se} required"
                )));
            }
        }
        Command::Estimate { traj, alpha, n, kind, stride, out } => {
            let file = io::read_trajectory(&traj)?;
            let cfg = EstimatorConfig { alpha, n, stride };
            let t = &file.trajectory;
            let results = match kind {
                KindArg::Tilde => vec![estimate_tilde(t, &cfg)?],
                KindArg::Check => vec![estimate_check(t, &cfg)?],
                KindArg::Hat => vec![estimate_hat(t, &cfg)?],
                KindArg::All => estimate_all(t, &cfg)?,
            };
            let value = serde_json::json!({
                "config_hash": file.config_hash,
                "basis_hash": file.basis_hash,
                "replicate": t.replicate,
                "results": results,
            });
            match out {
                Some(path) => io::write_json(&value, path)?,
                None => println!("{}", serde_json::to_string_pretty(&value).map_err(Error::from)?),
            }
        }
        Command::McConsistency(args) => monte_carlo(args, threads, StudyKind::Consistency)?,
        Command::McNormality(args) => monte_carlo(args, threads, StudyKind::Normality)?,
        Command::ResidualStudy(args) => {
            let (parsed, mut manifest) = load(&args, threads, "residual-study")?;
            let ResolvedConfig::ResidualStudy { study } = &parsed.resolved else {
                return Err(kind_error("residual_study", &args).into());
            };
            let report = run_residual_study(study)?;
            let path = args.out.join("residual_report.json");
            io::write_json(&report, &path)?;
            manifest.record(path);
            finish(manifest, &args.out)?;
        }
    }
    Ok(())
}

fn monte_carlo(args: McArgs, threads: Option<usize>, study: StudyKind) -> Result<(), Failure> {
    let name = match study {
        StudyKind::Consistency => "mc-consistency",
        StudyKind::Normality => "mc-normality",
    };
    let (parsed, mut manifest) = load(&args.run, threads, name)?;
    let ResolvedConfig::Plan { plan } = &parsed.resolved else {
        return Err(kind_error("plan", &args.run).into());
    };
    let out = &args.run.out;
    let (report, trajectories) = run_monte_carlo(plan, study, args.keep_trajectories)?;
    let json = out.join("report.json");
    let csv = out.join("estimates.csv");
    io::write_report(&report, &json, ReportFormat::Json)?;
    io::write_report(&report, &csv, ReportFormat::Csv)?;
    manifest.record(json);
    manifest.record(csv);
    for traj in &trajectories {
        let path = out.join(format!("trajectory_{}.csv", traj.replicate));
        io::write_trajectory(traj, &manifest.config_hash, &path)?;
        manifest.record(path);
    }
    finish(manifest, out)?;
    if report.failure_fraction > args.max_failure_fraction {
        let first = report.failures.first().map(|f| f.error.as_str()).unwrap_or("");
        return Err(Failure::Numerical(format!(
            "{:.1}% of replicates failed (first: {first})",
            100.0 * report.failure_fraction
        )));
    }
    Ok(())
}
