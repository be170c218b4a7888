//! `robust-bands`: build, tune, evaluate and plot confidence bands for
//! sample paths.
//!
//! Settings come from flags, then an optional `--config` file (TOML, or
//! JSON by extension), then built-in defaults. Exit codes: 0 success,
//! 1 usage or validation error, 2 I/O error, 3 solver limit reached with
//! the partial result written.

mod commands;
mod config;
mod error;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use robust_bands::band::{BudgetRule, SlackSpread};
use robust_bands::pathset::QuantileMethod;
use robust_bands::simulators::Observable;
use robust_bands::solver::CoverMode;
use serde::Serialize;

use commands::Status;
use config::{SimKind, SolveMode, SolverSettings, TuneSettings};
use error::CliError;

#[derive(Parser)]
#[command(name = "robust-bands", version, about = "Minimum-width and robust confidence bands for sample paths")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate sample paths from a VAR(1) or Erlang-R model.
    Simulate(SimulateArgs),
    /// Build a nominal or robust band from a sample-path CSV.
    Solve(SolveArgs),
    /// Choose the robustness budget by cross-validated bisection.
    Tune(TuneArgs),
    /// Coverage of a band on one or more evaluation sets.
    Evaluate(EvaluateArgs),
    /// Nominal versus tuned robust coverage on the VAR(1) model.
    #[command(name = "reproduce-table1")]
    ReproduceTable1(ReproduceArgs),
    /// Render a band, optional paths and a reference path as SVG.
    Plot(PlotArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML or JSON file with settings for this command.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Print the effective settings as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(value_enum)]
    kind: Option<SimKind>,
    /// Number of paths.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Stream of the first path.
    #[arg(long)]
    stream: Option<u64>,
    /// Erlang-R observable: needy or total-in-system.
    #[arg(long)]
    observable: Option<Observable>,
    /// Output CSV; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SolverArgs {
    /// Relative optimality gap at which the search stops.
    #[arg(long)]
    gap: Option<f64>,
    /// uniform, last-step or proportional-to-c.
    #[arg(long)]
    slack_spread: Option<SlackSpread>,
    /// paper-beta or ceiling.
    #[arg(long)]
    cover_mode: Option<CoverMode>,
    /// Number of paths to cover, overriding the value derived from alpha.
    #[arg(long)]
    cover_target: Option<usize>,
    /// order-statistic or linear.
    #[arg(long)]
    quantile_method: Option<QuantileMethod>,
    #[arg(long)]
    node_limit: Option<u64>,
    /// Seconds.
    #[arg(long)]
    time_limit: Option<f64>,
}

impl SolverArgs {
    fn apply(&self, s: &mut SolverSettings) {
        set(&mut s.gap, self.gap);
        set(&mut s.slack_spread, self.slack_spread);
        set(&mut s.cover_mode, self.cover_mode);
        set_opt(&mut s.cover_target, self.cover_target);
        set(&mut s.quantile_method, self.quantile_method);
        set_opt(&mut s.node_limit, self.node_limit);
        set_opt(&mut s.time_limit, self.time_limit);
    }
}

#[derive(Args)]
struct TuningArgs {
    /// Number of folds K.
    #[arg(short = 'K', long)]
    folds: Option<usize>,
    /// Number of bisection steps.
    #[arg(short = 'N', long)]
    iterations: Option<usize>,
    /// Seed of the fold shuffle.
    #[arg(long)]
    seed: Option<u64>,
    /// Start fold solves from earlier solutions.
    #[arg(long)]
    warm_start: bool,
}

impl TuningArgs {
    fn apply(&self, t: &mut TuneSettings) {
        set(&mut t.folds, self.folds);
        set(&mut t.iterations, self.iterations);
        set(&mut t.seed, self.seed);
        t.warm_start |= self.warm_start;
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(value_enum)]
    mode: Option<SolveMode>,
    /// Sample-path CSV.
    paths: Option<PathBuf>,
    #[arg(short, long)]
    alpha: Option<f64>,
    /// Budget in [0, 1] (robust mode).
    #[arg(short, long)]
    gamma: Option<f64>,
    /// Choose gamma by cross-validation (robust mode).
    #[arg(long)]
    tune: bool,
    /// Widening margin added to the sample envelope when deriving cU, cL.
    #[arg(long)]
    margin: Option<f64>,
    /// JSON budget parameters {"cU": [...], "cL": [...], "gamma": g}.
    #[arg(long, value_name = "FILE")]
    budget: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    tuning: TuningArgs,
    /// Output JSON; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct TuneArgs {
    /// Sample-path CSV.
    paths: Option<PathBuf>,
    #[arg(short, long)]
    alpha: Option<f64>,
    /// Widening margin added to the sample envelope when deriving cU, cL.
    #[arg(long)]
    margin: Option<f64>,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    tuning: TuningArgs,
    /// Output JSON; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Band, solve-result or tuner-result JSON.
    band: Option<PathBuf>,
    /// Evaluation sample-path CSVs.
    eval: Vec<PathBuf>,
    /// Output JSON report; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Training-set sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(short, long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eval_sets: Option<usize>,
    #[arg(long)]
    eval_size: Option<usize>,
    /// Allow evaluation sets below the minimum size.
    #[arg(long)]
    force: bool,
    #[arg(short = 'N', long)]
    iterations: Option<usize>,
    #[arg(long)]
    gap: Option<f64>,
    /// Fold count for every row.
    #[arg(short = 'K', long)]
    folds: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
    /// Directory for table1.csv, table1.txt and table1.json.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct PlotArgs {
    /// Band, solve-result or tuner-result JSON.
    band: Option<PathBuf>,
    /// Sample paths to overlay.
    #[arg(long)]
    paths: Option<PathBuf>,
    /// Single-path CSV checked against the band.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    reference_label: Option<String>,
    #[arg(long)]
    max_paths: Option<usize>,
    #[arg(long)]
    title: Option<String>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

fn margin_rule(rule: &mut BudgetRule, margin: Option<f64>) {
    if let Some(margin) = margin {
        *rule = BudgetRule::SampleEnvelope { margin };
    }
}

/// Prints the configuration when asked, otherwise runs the command.
fn finish<T: Serialize>(
    args: &ConfigArgs,
    cfg: &T,
    run: impl FnOnce(&T) -> Result<Status, CliError>,
) -> Result<Status, CliError> {
    if args.print_config {
        print!("{}", config::render(cfg)?);
        return Ok(Status::Complete);
    }
    run(cfg)
}

fn dispatch(command: Command) -> Result<Status, CliError> {
    match command {
        Command::Simulate(a) => {
            let mut c: config::SimulateConfig = config::load(a.config.config.as_deref())?;
            set(&mut c.kind, a.kind);
            set(&mut c.n, a.n);
            set(&mut c.seed, a.seed);
            set(&mut c.stream, a.stream);
            set(&mut c.erlang.observable, a.observable);
            set_opt(&mut c.output, a.output.clone());
            finish(&a.config, &c, commands::simulate)
        }
        Command::Solve(a) => {
            let mut c: config::SolveConfig = config::load(a.config.config.as_deref())?;
            set(&mut c.mode, a.mode);
            set_opt(&mut c.paths, a.paths.clone());
            set(&mut c.alpha, a.alpha);
            set_opt(&mut c.gamma, a.gamma);
            c.tune |= a.tune;
            margin_rule(&mut c.budget, a.margin);
            set_opt(&mut c.budget_file, a.budget.clone());
            a.solver.apply(&mut c.solver);
            a.tuning.apply(&mut c.tuning);
            set_opt(&mut c.output, a.output.clone());
            finish(&a.config, &c, commands::solve)
        }
        Command::Tune(a) => {
            let mut c: config::TuneConfig = config::load(a.config.config.as_deref())?;
            set_opt(&mut c.paths, a.paths.clone());
            set(&mut c.alpha, a.alpha);
            margin_rule(&mut c.budget, a.margin);
            a.solver.apply(&mut c.solver);
            a.tuning.apply(&mut c.tuning);
            set_opt(&mut c.output, a.output.clone());
            finish(&a.config, &c, commands::tune)
        }
        Command::Evaluate(a) => {
            let mut c: config::EvaluateConfig = config::load(a.config.config.as_deref())?;
            set_opt(&mut c.band, a.band.clone());
            if !a.eval.is_empty() {
                c.eval = a.eval.clone();
            }
            set_opt(&mut c.output, a.output.clone());
            finish(&a.config, &c, commands::evaluate)
        }
        Command::ReproduceTable1(a) => {
            let mut c: config::ReproduceConfig = config::load(a.config.config.as_deref())?;
            set(&mut c.n, a.n.clone());
            set(&mut c.alpha, a.alpha);
            set(&mut c.seed, a.seed);
            set(&mut c.eval_sets, a.eval_sets);
            set(&mut c.eval_size, a.eval_size);
            c.force |= a.force;
            set(&mut c.iterations, a.iterations);
            set(&mut c.gap, a.gap);
            set_opt(&mut c.folds, a.folds);
            margin_rule(&mut c.budget, a.margin);
            set_opt(&mut c.output_dir, a.output_dir.clone());
            finish(&a.config, &c, commands::reproduce_table1)
        }
        Command::Plot(a) => {
            let mut c: config::PlotConfig = config::load(a.config.config.as_deref())?;
            set_opt(&mut c.band, a.band.clone());
            set_opt(&mut c.paths, a.paths.clone());
            set_opt(&mut c.reference, a.reference.clone());
            set(&mut c.reference_label, a.reference_label.clone());
            set(&mut c.max_paths, a.max_paths);
            set_opt(&mut c.title, a.title.clone());
            set_opt(&mut c.output, a.output.clone());
            finish(&a.config, &c, commands::plot)
        }
    }
}

/// Caps the worker pool at `ROBUST_BANDS_THREADS` when set.
fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("ROBUST_BANDS_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Usage(format!("ROBUST_BANDS_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads().and_then(|()| dispatch(cli.command));
    match result {
        Ok(Status::Complete) => ExitCode::SUCCESS,
        Ok(Status::LimitReached) => {
            eprintln!("solver limit reached; the written band is not proven optimal");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
