//! Command-line driver: Monte Carlo experiments, regret-bound validation,
//! assumption diagnostics, and one-off transport/CVaR computations.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use driftbench::drift::DiscreteDistribution;
use driftbench::harness::{
    self, export_csv, export_summary, parse_config_file, run_bound_validation, run_diagnostics,
    run_experiment, run_zero_drift_quadratic, AggregateResult, BoundValidationConfig, Experiment,
    ExperimentConfig, PartialConfig, OUT_DIR_ENV,
};
use driftbench::losses::{cvar_discrete, var_discrete};
use driftbench::transport::w1_discrete;
use driftbench::{Error, Result};

#[derive(Parser)]
#[command(
    name = "driftbench",
    version,
    about = "Online stochastic optimization under drifting distributions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment and export CSV plus a JSON summary.
    Run(RunArgs),
    /// Check measured regret against the calculator bounds on certified fixtures.
    ValidateBounds(ValidateBoundsArgs),
    /// Run the assumption diagnostic suite.
    Diagnose(DiagnoseArgs),
    /// One-off transport and CVaR computations.
    #[command(subcommand)]
    Oracle(OracleCommand),
}

#[derive(Args)]
struct RunArgs {
    /// Config file (flat key = value lines or JSON); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// adaptive_filtering or cvar.
    #[arg(long)]
    experiment: Option<String>,
    /// unconstrained, box_constrained, or l1_regularized.
    #[arg(long)]
    variant: Option<String>,
    /// constant (c/sqrt(T)) or decaying (c/sqrt(t)).
    #[arg(long)]
    schedule: Option<String>,
    /// Rounds per run.
    #[arg(long = "T", visible_alias = "horizon")]
    t: Option<u64>,
    /// Parameter dimension.
    #[arg(long)]
    n: Option<usize>,
    /// Samples per online gradient estimate.
    #[arg(long)]
    m: Option<usize>,
    /// CVaR level.
    #[arg(long)]
    alpha: Option<f64>,
    /// Monte Carlo runs.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Step-schedule constant c.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    noise_variance: Option<f64>,
    #[arg(long)]
    drift_scale: Option<f64>,
    #[arg(long)]
    eval_samples: Option<usize>,
    /// Output directory (default: $DRIFTBENCH_OUT or the working directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cap worker threads; 1 reproduces parallel results exactly.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ValidateBoundsArgs {
    /// sgd, box, or both.
    #[arg(long, default_value = "both")]
    mode: String,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    /// Rounds per fixture.
    #[arg(long = "T", visible_alias = "horizon", default_value_t = 40)]
    t: usize,
    #[arg(long, default_value_t = 3)]
    atoms: usize,
    /// Samples per gradient estimate.
    #[arg(long, default_value_t = 6)]
    m: usize,
    /// Step size; defaults to 0.1 (sgd) and 0.2 (box).
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also run the zero-drift closed-form contraction check.
    #[arg(long, default_value_t = true)]
    zero_drift: bool,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print reports as JSON instead of one line per check.
    #[arg(long, default_value_t = false)]
    json: bool,
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Exact 1-Wasserstein distance between two scalar discrete laws.
    W1 {
        /// First law: comma-separated atoms, each value or value:weight.
        #[arg(long)]
        p: String,
        /// Second law, same format.
        #[arg(long)]
        q: String,
    },
    /// VaR and CVaR of a scalar discrete law.
    Cvar {
        /// Comma-separated atom values.
        #[arg(long)]
        values: String,
        /// Comma-separated weights (default uniform).
        #[arg(long)]
        weights: Option<String>,
        #[arg(long)]
        alpha: f64,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::ValidateBounds(args) => cmd_validate_bounds(args),
        Command::Diagnose(args) => cmd_diagnose(args),
        Command::Oracle(command) => cmd_oracle(command),
    }
}

/// Run `f` on a dedicated pool of `threads` workers when a cap is given.
fn with_thread_cap<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> Result<T> + Send,
) -> Result<T> {
    match threads {
        None => f(),
        Some(0) => Err(Error::InvalidArgument("thread cap must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Internal(format!("thread pool construction failed: {e}")))?
            .install(f),
    }
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let file_partial = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.display().to_string(),
                source,
            })?;
            parse_config_file(&text)?
        }
        None => PartialConfig::default(),
    };
    // The experiment family fixes the defaults, so resolve it first:
    // flag over file over the filtering default.
    let experiment = match args.experiment.as_deref().or(file_partial.experiment.as_deref()) {
        Some(name) => Experiment::parse(name)?,
        None => Experiment::AdaptiveFiltering,
    };
    let base = ExperimentConfig::default_for(experiment);
    let config = file_partial.apply(&base)?;
    let flags = PartialConfig {
        experiment: args.experiment.clone(),
        variant: args.variant.clone(),
        schedule: args.schedule.clone(),
        t: args.t,
        n: args.n,
        m: args.m,
        alpha: args.alpha,
        runs: args.runs,
        seed: args.seed,
        c: args.c,
        noise_variance: args.noise_variance,
        drift_scale: args.drift_scale,
        box_lower: None,
        box_upper: None,
        l1_weight: None,
        eval_samples: args.eval_samples,
        out: None,
        threads: None,
    };
    let config = flags.apply(&config)?;
    config.validate()?;

    let threads = args.threads.or(file_partial.threads);
    let result = with_thread_cap(threads, || run_experiment(&config))?;

    let out_dir = args
        .out
        .or_else(|| file_partial.out.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir).map_err(|source| Error::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let stem = format!("{}_seed{}", config.slug(), config.seed);
    let csv_path = out_dir.join(format!("{stem}.csv"));
    let summary_path = out_dir.join(format!("{stem}_summary.json"));
    export_csv(&result, &csv_path)?;
    export_summary(&result, &summary_path)?;
    print_run_report(&result, &csv_path, &summary_path);
    Ok(ExitCode::SUCCESS)
}

fn print_run_report(result: &AggregateResult, csv_path: &Path, summary_path: &Path) {
    let series = &result.mean_relative_regret;
    println!(
        "{}: {} runs ({} failed, {} reseeded), final mean relative regret {:.6}, wall time {:.2}s",
        result.config.slug(),
        result.n_runs,
        result.failures,
        result.reseeded,
        series.last().copied().unwrap_or(f64::NAN),
        result.wall_time_secs
    );
    if result.oracle_nonconverged > 0 {
        println!(
            "oracle hit the iteration cap {} times (recorded, not fatal)",
            result.oracle_nonconverged
        );
    }
    println!("wrote {}", csv_path.display());
    println!("wrote {}", summary_path.display());
}

fn cmd_validate_bounds(args: ValidateBoundsArgs) -> Result<ExitCode> {
    let modes: Vec<harness::BoundMode> = match args.mode.trim().to_ascii_lowercase().as_str() {
        "sgd" => vec![harness::BoundMode::Sgd],
        "box" | "box_prox" | "boxprox" => vec![harness::BoundMode::BoxProx],
        "both" => vec![harness::BoundMode::Sgd, harness::BoundMode::BoxProx],
        other => {
            return Err(Error::Config(format!(
                "unknown mode {other:?}; expected sgd, box, or both"
            )))
        }
    };
    let mut failed = false;
    if args.zero_drift {
        let report = run_zero_drift_quadratic(30, 0.1)?;
        let gap = (report.measured_regret - report.geometric_regret).abs();
        let ok = gap <= 1e-9 && report.measured_regret <= report.bound;
        println!(
            "zero_drift_quadratic: {} measured {:.12} geometric {:.12} bound {:.6}",
            if ok { "pass" } else { "FAIL" },
            report.measured_regret,
            report.geometric_regret,
            report.bound
        );
        failed |= !ok;
    }
    for mode in modes {
        let default = match mode {
            harness::BoundMode::Sgd => BoundValidationConfig::sgd_default(args.seed),
            harness::BoundMode::BoxProx => BoundValidationConfig::box_default(args.seed),
        };
        let cfg = BoundValidationConfig {
            runs: args.runs,
            horizon: args.t,
            atom_count: args.atoms,
            batch_size: args.m,
            gamma: args.gamma.unwrap_or(default.gamma),
            ..default
        };
        let report = with_thread_cap(args.threads, || run_bound_validation(&cfg))?;
        let ok = report.violations == 0;
        println!(
            "{:?}: {} {} seeds, {} violations, worst margin {:.6}",
            report.mode,
            if ok { "pass" } else { "FAIL" },
            report.runs,
            report.violations,
            report.worst_margin
        );
        failed |= !ok;
    }
    Ok(if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<ExitCode> {
    let reports = run_diagnostics(args.seed)?;
    let failed = reports.iter().any(|r| !r.pass);
    if args.json {
        let text = serde_json::to_string_pretty(&reports)
            .map_err(|e| Error::Internal(format!("report serialization failed: {e}")))?;
        println!("{text}");
    } else {
        for report in &reports {
            println!("{report}");
        }
    }
    Ok(if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_oracle(command: OracleCommand) -> Result<ExitCode> {
    match command {
        OracleCommand::W1 { p, q } => {
            let p = parse_scalar_law(&p)?;
            let q = parse_scalar_law(&q)?;
            let (distance, _) = w1_discrete(&p, &q)?;
            println!("{distance}");
        }
        OracleCommand::Cvar {
            values,
            weights,
            alpha,
        } => {
            let values = parse_number_list(&values)?;
            let law = match weights {
                Some(w) => DiscreteDistribution::scalars(&values, parse_number_list(&w)?)?,
                None => DiscreteDistribution::uniform_scalars(&values)?,
            };
            println!(
                "var={} cvar={}",
                var_discrete(&law, alpha)?,
                cvar_discrete(&law, alpha)?
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_number_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number {:?}", part.trim())))
        })
        .collect()
}

/// Parse "v,v,v" (uniform) or "v:w,v:w" into a scalar discrete law.
fn parse_scalar_law(text: &str) -> Result<DiscreteDistribution> {
    let mut values = Vec::new();
    let mut weights = Vec::new();
    let mut weighted = false;
    for (i, part) in text.split(',').enumerate() {
        let part = part.trim();
        match part.split_once(':') {
            Some((v, w)) => {
                if i > 0 && !weighted {
                    return Err(Error::Config("mix of weighted and unweighted atoms".into()));
                }
                weighted = true;
                values.push(
                    v.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("bad atom value {v:?}")))?,
                );
                weights.push(
                    w.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("bad atom weight {w:?}")))?,
                );
            }
            None => {
                if weighted {
                    return Err(Error::Config("mix of weighted and unweighted atoms".into()));
                }
                values.push(
                    part.parse()
                        .map_err(|_| Error::Config(format!("bad atom value {part:?}")))?,
                );
            }
        }
    }
    if weighted {
        DiscreteDistribution::scalars(&values, weights)
    } else {
        DiscreteDistribution::uniform_scalars(&values)
    }
}
