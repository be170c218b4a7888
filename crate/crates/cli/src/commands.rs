use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use robust_bands::band::BudgetParams;
use robust_bands::experiments::{table1_row, Table1Config, Table1Row};
use robust_bands::pathset::{
    coverage_rate, covered_count, load_paths, load_single_path, save_paths, BandJson,
    ConfidenceBand, SamplePathSet,
};
use robust_bands::simulators::{average_rate_model, simulate_erlang_r, simulate_var, RandomSource};
use robust_bands::solver::{solve_nominal, solve_robust, SolveResult};
use robust_bands::tuner::tune_gamma;
use serde::Serialize;

use crate::config::{
    EvaluateConfig, PlotConfig, ReproduceConfig, SimKind, SimulateConfig, SolveConfig, SolveMode,
    TuneConfig,
};
use crate::error::CliError;
use crate::svg::{self, Plot, Reference};

/// How a command finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Complete,
    /// A solver limit stopped the search; the output is a feasible band
    /// without an optimality certificate.
    LimitReached,
}

fn check_input(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Io(format!("{}: no such file", path.display())))
    }
}

fn check_output_dir(path: &Path) -> Result<(), CliError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Io(format!("{}: output directory does not exist", path.display())))
    }
}

fn check_output(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => check_output_dir(dir),
        _ => Ok(()),
    }
}

fn read_paths(path: &Path) -> Result<SamplePathSet, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    load_paths(std::io::BufReader::new(file))
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Usage(format!("cannot serialize output: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Writes `text` to `output`, or to standard output when there is none.
/// Returns a sink for the human-readable summary that does not mix with
/// data written to standard output.
fn emit(output: Option<&Path>, text: &str) -> Result<Box<dyn Write>, CliError> {
    match output {
        Some(path) => {
            write_file(path, text.as_bytes())?;
            Ok(Box::new(std::io::stdout()))
        }
        None => {
            print!("{text}");
            Ok(Box::new(std::io::stderr()))
        }
    }
}

pub fn simulate(cfg: &SimulateConfig) -> Result<Status, CliError> {
    cfg.validate()?;
    if let Some(out) = &cfg.output {
        check_output(out)?;
    }
    let src = RandomSource::with_stream(cfg.seed, cfg.stream);
    let set = match cfg.kind {
        SimKind::Var => simulate_var(&cfg.var, cfg.n, src)?,
        SimKind::ErlangR => simulate_erlang_r(&cfg.erlang, cfg.n, src)?,
        SimKind::ErlangRStationary => simulate_erlang_r(&average_rate_model(&cfg.erlang), cfg.n, src)?,
    };
    let mut csv = Vec::new();
    save_paths(&set, &mut csv)?;
    let text = String::from_utf8(csv).expect("CSV output is UTF-8");
    let mut log = emit(cfg.output.as_deref(), &text)?;
    let _ = writeln!(
        log,
        "simulated {} paths, H = {}, seed {}, stream {}",
        set.n(),
        set.horizon(),
        cfg.seed,
        cfg.stream
    );
    Ok(Status::Complete)
}

fn load_budget(path: &Path) -> Result<BudgetParams, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let raw: BudgetParams =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    // Re-validate through the constructor.
    Ok(BudgetParams::new(raw.upper().to_vec(), raw.lower().to_vec(), raw.gamma())?)
}

fn solve_summary(log: &mut dyn Write, res: &SolveResult, n: usize) {
    let _ = writeln!(
        log,
        "objective {:.6}  covered {}/{}  gap {:.4}  nodes {}  proven_optimal {}",
        res.objective,
        res.covered.len(),
        n,
        res.gap,
        res.nodes,
        res.proven_optimal
    );
}

fn limit_status(limited: bool, proven: bool) -> Status {
    if limited && !proven {
        Status::LimitReached
    } else {
        Status::Complete
    }
}

pub fn solve(cfg: &SolveConfig) -> Result<Status, CliError> {
    cfg.validate()?;
    let paths = cfg.paths.as_deref().expect("validated");
    check_input(paths)?;
    if let Some(b) = &cfg.budget_file {
        check_input(b)?;
    }
    if let Some(out) = &cfg.output {
        check_output(out)?;
    }
    let set = read_paths(paths)?;
    let opts = cfg.solver.options();
    let mut gamma_hat = None;
    let res = match cfg.mode {
        SolveMode::Nominal => solve_nominal(&set, cfg.alpha, &opts)?,
        SolveMode::Robust if cfg.tune => {
            let tuned = tune_gamma(&set, cfg.alpha, &cfg.tuning.tuner(&cfg.solver), &cfg.budget)?;
            gamma_hat = Some(tuned.gamma_hat);
            tuned.solve
        }
        SolveMode::Robust => {
            let budget = match &cfg.budget_file {
                Some(path) => {
                    let b = load_budget(path)?;
                    match cfg.gamma {
                        Some(g) => b.with_gamma(g)?,
                        None => b,
                    }
                }
                None => {
                    let q = robust_bands::pathset::empirical_quantiles_with(
                        &set,
                        cfg.alpha,
                        cfg.solver.quantile_method,
                    )?;
                    cfg.budget.build(&set, &q, cfg.gamma.expect("validated"))?
                }
            };
            solve_robust(&set, cfg.alpha, &budget, &opts)?
        }
    };
    let mut log = emit(cfg.output.as_deref(), &to_json(&res.to_json(&set))?)?;
    if let Some(g) = gamma_hat {
        let _ = writeln!(log, "gamma_hat {g}");
    }
    solve_summary(&mut *log, &res, set.n());
    Ok(limit_status(cfg.solver.limited(), res.proven_optimal))
}

pub fn tune(cfg: &TuneConfig) -> Result<Status, CliError> {
    cfg.validate()?;
    let paths = cfg.paths.as_deref().expect("validated");
    check_input(paths)?;
    if let Some(out) = &cfg.output {
        check_output(out)?;
    }
    let set = read_paths(paths)?;
    let tuned = tune_gamma(&set, cfg.alpha, &cfg.tuning.tuner(&cfg.solver), &cfg.budget)?;
    let mut log = emit(cfg.output.as_deref(), &to_json(&tuned.to_json(&set))?)?;
    let _ = writeln!(log, "gamma_hat {}  bisection steps {}", tuned.gamma_hat, tuned.trace.len());
    solve_summary(&mut *log, &tuned.solve, set.n());
    Ok(limit_status(cfg.solver.limited(), tuned.solve.proven_optimal))
}

/// Reads a band from band, solve-result or tuner-result JSON.
fn read_band(path: &Path) -> Result<ConfidenceBand, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |e: String| CliError::Usage(format!("{}: {e}", path.display()));
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if let Some(inner) = value.get_mut("band").filter(|b| b.is_object()) {
        value = inner.take();
    }
    let band: BandJson = serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
    band.to_band().map_err(|e| bad(e.to_string()))
}

#[derive(Serialize)]
struct SetCoverage {
    file: PathBuf,
    n: usize,
    covered: usize,
    coverage: f64,
}

#[derive(Serialize)]
struct CoverageReport {
    alpha: f64,
    gamma: Option<f64>,
    #[serde(rename = "H")]
    horizon: usize,
    sets: Vec<SetCoverage>,
    average: f64,
}

pub fn evaluate(cfg: &EvaluateConfig) -> Result<Status, CliError> {
    cfg.validate()?;
    let band_path = cfg.band.as_deref().expect("validated");
    check_input(band_path)?;
    for e in &cfg.eval {
        check_input(e)?;
    }
    if let Some(out) = &cfg.output {
        check_output(out)?;
    }
    let band = read_band(band_path)?;
    let mut sets = Vec::with_capacity(cfg.eval.len());
    for file in &cfg.eval {
        let set = read_paths(file)?;
        if set.horizon() != band.horizon() {
            return Err(CliError::Usage(format!(
                "{}: horizon {} does not match the band's {}",
                file.display(),
                set.horizon(),
                band.horizon()
            )));
        }
        sets.push(SetCoverage {
            file: file.clone(),
            n: set.n(),
            covered: covered_count(&band, &set)?,
            coverage: coverage_rate(&band, &set)?,
        });
    }
    let average = sets.iter().map(|s| s.coverage).sum::<f64>() / sets.len() as f64;
    let report = CoverageReport {
        alpha: band.alpha(),
        gamma: band.gamma(),
        horizon: band.horizon(),
        sets,
        average,
    };
    let mut log = emit(cfg.output.as_deref(), &to_json(&report)?)?;
    for (j, s) in report.sets.iter().enumerate() {
        let _ = writeln!(
            log,
            "set #{}  {}  {}/{}  {:.1}%",
            j + 1,
            s.file.display(),
            s.covered,
            s.n,
            100.0 * s.coverage
        );
    }
    let _ = writeln!(log, "average {:.1}%", 100.0 * report.average);
    Ok(Status::Complete)
}

fn table1_csv(rows: &[Table1Row], sets: usize) -> String {
    let mut s = String::from("n,K,gamma_hat");
    for kind in ["nominal", "robust"] {
        for j in 1..=sets {
            s.push_str(&format!(",{kind}_set{j}"));
        }
        s.push_str(&format!(",{kind}_average"));
    }
    s.push_str(",nominal_width,robust_width\n");
    for r in rows {
        s.push_str(&format!("{},{},{}", r.n, r.folds, r.gamma_hat));
        for (v, avg) in [(&r.nominal, r.nominal_average), (&r.robust, r.robust_average)] {
            for x in v {
                s.push_str(&format!(",{x}"));
            }
            s.push_str(&format!(",{avg}"));
        }
        s.push_str(&format!(",{},{}\n", r.nominal_width, r.robust_width));
    }
    s
}

fn table1_text(rows: &[Table1Row], cfg: &ReproduceConfig) -> String {
    let pct = |x: f64| format!("{:.1}%", 100.0 * x);
    let mut s = format!(
        "Coverage of nominal and robust bands, VAR(1) first component, alpha = {}, {} evaluation sets of {} paths, seed {}\n\n",
        cfg.alpha, cfg.eval_sets, cfg.eval_size, cfg.seed
    );
    let mut header = format!("{:>6} {:>3} {:>8} | {:<9}", "n", "K", "gamma", "band");
    for j in 1..=cfg.eval_sets {
        header.push_str(&format!(" {:>7}", format!("#{j}")));
    }
    header.push_str(&format!(" {:>8} {:>8}\n", "average", "width"));
    s.push_str(&header);
    s.push_str(&"-".repeat(header.len() - 1));
    s.push('\n');
    for r in rows {
        for (name, rates, avg, width) in [
            ("nominal", &r.nominal, r.nominal_average, r.nominal_width),
            ("robust", &r.robust, r.robust_average, r.robust_width),
        ] {
            let lead = if name == "nominal" {
                format!("{:>6} {:>3} {:>8.4}", r.n, r.folds, r.gamma_hat)
            } else {
                format!("{:>6} {:>3} {:>8}", "", "", "")
            };
            s.push_str(&format!("{lead} | {name:<9}"));
            for &x in rates {
                s.push_str(&format!(" {:>7}", pct(x)));
            }
            s.push_str(&format!(" {:>8} {:>8.3}\n", pct(avg), width));
        }
    }
    s
}

pub fn reproduce_table1(cfg: &ReproduceConfig) -> Result<Status, CliError> {
    cfg.validate()?;
    if let Some(dir) = &cfg.output_dir {
        check_output_dir(dir)?;
    }
    let mut rows = Vec::with_capacity(cfg.n.len());
    for &n in &cfg.n {
        let started = std::time::Instant::now();
        let row = table1_row(&Table1Config {
            n,
            alpha: cfg.alpha,
            seed: cfg.seed,
            eval_sets: cfg.eval_sets,
            eval_size: cfg.eval_size,
            folds: cfg.folds,
            iterations: cfg.iterations,
            gap: cfg.gap,
            budget: cfg.budget.clone(),
            model: cfg.model.clone(),
        })?;
        eprintln!(
            "n = {n}: nominal {:.1}%, robust {:.1}% ({:.1} s)",
            100.0 * row.nominal_average,
            100.0 * row.robust_average,
            started.elapsed().as_secs_f64()
        );
        rows.push(row);
    }
    let text = table1_text(&rows, cfg);
    print!("{text}");
    if let Some(dir) = &cfg.output_dir {
        write_file(&dir.join("table1.csv"), table1_csv(&rows, cfg.eval_sets).as_bytes())?;
        write_file(&dir.join("table1.txt"), text.as_bytes())?;
        write_file(&dir.join("table1.json"), to_json(&rows)?.as_bytes())?;
    }
    Ok(Status::Complete)
}

pub fn plot(cfg: &PlotConfig) -> Result<Status, CliError> {
    cfg.validate()?;
    let band_path = cfg.band.as_deref().expect("validated");
    let out = cfg.output.as_deref().expect("validated");
    check_input(band_path)?;
    for p in cfg.paths.iter().chain(&cfg.reference) {
        check_input(p)?;
    }
    check_output(out)?;
    let band = read_band(band_path)?;
    let set = cfg.paths.as_deref().map(read_paths).transpose()?;
    if let Some(set) = &set {
        if set.horizon() != band.horizon() {
            return Err(CliError::Usage(format!(
                "paths have horizon {}, band has {}",
                set.horizon(),
                band.horizon()
            )));
        }
    }
    let reference = match &cfg.reference {
        Some(path) => {
            let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
            let values = load_single_path(std::io::BufReader::new(file))
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let violations = band
                .violations(&values)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            Some((values, violations))
        }
        None => None,
    };
    let title = cfg.title.clone().unwrap_or_else(|| match band.gamma() {
        Some(g) => format!("Robust confidence band (alpha = {}, gamma = {g:.4})", band.alpha()),
        None => format!("Confidence band (alpha = {})", band.alpha()),
    });
    let paths: Vec<&[f64]> = set
        .as_ref()
        .map(|s| s.paths().take(cfg.max_paths).collect())
        .unwrap_or_default();
    let svg = svg::render(&Plot {
        lower: band.lower(),
        upper: band.upper(),
        paths,
        total_paths: set.as_ref().map_or(0, |s| s.n()),
        reference: reference.as_ref().map(|(values, violations)| Reference {
            values,
            label: &cfg.reference_label,
            violations,
        }),
        title,
        width: cfg.width,
        height: cfg.height,
    });
    write_file(out, svg.as_bytes())?;
    match &reference {
        Some((_, v)) if v.is_empty() => println!("wrote {}; reference covered", out.display()),
        Some((_, v)) => println!(
            "wrote {}; reference not covered at steps {}",
            out.display(),
            v.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", ")
        ),
        None => println!("wrote {}", out.display()),
    }
    Ok(Status::Complete)
}
