//! End-to-end experiments: the VAR coverage table and the Erlang-R
//! validation study.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::band::BudgetRule;
use crate::error::{domain, Result};
use crate::pathset::{coverage_rate, is_covered, SamplePathSet};
use crate::simulators::{
    average_rate_model, simulate_erlang_r, simulate_var, ErlangRModel, RandomSource, VarModel,
};
use crate::solver::{solve_nominal, SolveOptions, SolveResult};
use crate::tuner::{tune_gamma, TunerConfig, TunerResult};

/// Smallest evaluation set accepted without an explicit override.
pub const MIN_EVAL_SIZE: usize = 500;

/// Stream offset of evaluation set `j`; keeps it clear of the training
/// streams.
fn eval_stream(j: usize) -> u64 {
    (j as u64 + 1) << 32
}

/// Folds used for `n` training paths: two up to 200 paths, four beyond.
pub fn default_folds(n: usize) -> usize {
    if n <= 200 {
        2
    } else {
        4
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Table1Config {
    pub n: usize,
    pub alpha: f64,
    pub seed: u64,
    pub eval_sets: usize,
    pub eval_size: usize,
    pub folds: Option<usize>,
    pub iterations: usize,
    pub gap: f64,
    /// Budget rule applied to each training set.
    pub budget: BudgetRule,
    pub model: VarModel,
}

impl Default for Table1Config {
    fn default() -> Self {
        Self {
            n: 100,
            alpha: 0.1,
            seed: 1,
            eval_sets: 4,
            eval_size: 1000,
            folds: None,
            iterations: 10,
            gap: 0.01,
            budget: BudgetRule::default(),
            model: VarModel::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table1Row {
    pub n: usize,
    pub folds: usize,
    pub gamma_hat: f64,
    pub nominal: Vec<f64>,
    pub robust: Vec<f64>,
    pub nominal_average: f64,
    pub robust_average: f64,
    pub nominal_width: f64,
    pub robust_width: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Evaluation sets drawn from `model` on streams disjoint from training.
pub fn var_eval_sets(model: &VarModel, seed: u64, sets: usize, size: usize) -> Result<Vec<SamplePathSet>> {
    (0..sets)
        .map(|j| simulate_var(model, size, RandomSource::with_stream(seed, eval_stream(j))))
        .collect()
}

/// One row: nominal and tuned robust bands from `n` paths, each evaluated on
/// fresh sets.
pub fn table1_row(cfg: &Table1Config) -> Result<Table1Row> {
    if cfg.eval_sets == 0 || cfg.eval_size == 0 {
        return Err(domain("at least one non-empty evaluation set is required"));
    }
    let train = simulate_var(&cfg.model, cfg.n, RandomSource::new(cfg.seed))?;
    let evals = var_eval_sets(&cfg.model, cfg.seed, cfg.eval_sets, cfg.eval_size)?;
    let opts = SolveOptions {
        gap_tolerance: cfg.gap,
        ..SolveOptions::default()
    };
    let nominal = solve_nominal(&train, cfg.alpha, &opts)?;
    let folds = cfg.folds.unwrap_or_else(|| default_folds(cfg.n));
    let tuner = TunerConfig {
        folds,
        max_iterations: cfg.iterations,
        seed: cfg.seed,
        options: opts,
        warm_start: false,
    };
    let robust = tune_gamma(&train, cfg.alpha, &tuner, &cfg.budget)?;
    let rates = |band| -> Result<Vec<f64>> { evals.iter().map(|e| coverage_rate(band, e)).collect() };
    let nominal_rates = rates(&nominal.band)?;
    let robust_rates = rates(robust.band())?;
    Ok(Table1Row {
        n: cfg.n,
        folds,
        gamma_hat: robust.gamma_hat,
        nominal_average: mean(&nominal_rates),
        robust_average: mean(&robust_rates),
        nominal: nominal_rates,
        robust: robust_rates,
        nominal_width: nominal.objective,
        robust_width: robust.solve.objective,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ErlangStudyConfig {
    pub model: ErlangRModel,
    pub n: usize,
    pub alpha: f64,
    pub folds: usize,
    pub iterations: usize,
    pub gap: f64,
    pub seed: u64,
    pub eval_size: usize,
    /// Independent stationary-model bands checked against the reference path.
    pub repetitions: usize,
}

impl Default for ErlangStudyConfig {
    fn default() -> Self {
        Self {
            model: ErlangRModel::default(),
            n: 300,
            alpha: 0.05,
            folds: 3,
            iterations: 10,
            gap: 0.01,
            seed: 1,
            eval_size: 1000,
            repetitions: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationaryRun {
    pub seed: u64,
    pub gamma_hat: f64,
    pub covers_reference: bool,
    /// 1-based steps where the reference leaves the band.
    pub violations: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ErlangStudy {
    pub training: SamplePathSet,
    /// Tuned band from the time-varying model.
    pub tuned: TunerResult,
    /// Coverage of fresh time-varying paths by `tuned`.
    pub eval_coverage: f64,
    /// Simulated stand-in for the observed drill path.
    pub reference: Vec<f64>,
    pub reference_covered: bool,
    /// Band from the stationary model, first repetition.
    pub stationary: TunerResult,
    pub stationary_runs: Vec<StationaryRun>,
}

/// Reference path: one time-varying path on a stream no other draw uses.
pub fn erlang_reference_path(model: &ErlangRModel, seed: u64) -> Result<Vec<f64>> {
    let set = simulate_erlang_r(model, 1, RandomSource::with_stream(seed, u64::MAX))?;
    Ok(set.path(0).to_vec())
}

fn tune_erlang(set: &SamplePathSet, cfg: &ErlangStudyConfig, seed: u64) -> Result<TunerResult> {
    let tuner = TunerConfig {
        folds: cfg.folds,
        max_iterations: cfg.iterations,
        seed,
        options: SolveOptions {
            gap_tolerance: cfg.gap,
            ..SolveOptions::default()
        },
        warm_start: false,
    };
    tune_gamma(set, cfg.alpha, &tuner, &BudgetRule::default())
}

pub fn erlang_study(cfg: &ErlangStudyConfig) -> Result<ErlangStudy> {
    if cfg.repetitions == 0 {
        return Err(domain("at least one repetition is required"));
    }
    let training = simulate_erlang_r(&cfg.model, cfg.n, RandomSource::new(cfg.seed))?;
    let tuned = tune_erlang(&training, cfg, cfg.seed)?;
    let eval = simulate_erlang_r(
        &cfg.model,
        cfg.eval_size,
        RandomSource::with_stream(cfg.seed, eval_stream(0)),
    )?;
    let eval_coverage = coverage_rate(tuned.band(), &eval)?;
    let reference = erlang_reference_path(&cfg.model, cfg.seed)?;
    let reference_covered = is_covered(tuned.band(), &reference)?;

    let stationary_model = average_rate_model(&cfg.model);
    let runs: Vec<(StationaryRun, TunerResult)> = (0..cfg.repetitions as u64)
        .into_par_iter()
        .map(|r| {
            let seed = cfg.seed.wrapping_add(1000 + r);
            let set = simulate_erlang_r(&stationary_model, cfg.n, RandomSource::new(seed))?;
            let tuned = tune_erlang(&set, cfg, seed)?;
            let violations = tuned.band().violations(&reference)?;
            Ok((
                StationaryRun {
                    seed,
                    gamma_hat: tuned.gamma_hat,
                    covers_reference: violations.is_empty(),
                    violations,
                },
                tuned,
            ))
        })
        .collect::<Result<_>>()?;
    let mut runs = runs.into_iter();
    let (first, stationary) = runs.next().expect("at least one repetition");
    let mut stationary_runs = vec![first];
    stationary_runs.extend(runs.map(|(run, _)| run));
    Ok(ErlangStudy {
        training,
        tuned,
        eval_coverage,
        reference,
        reference_covered,
        stationary,
        stationary_runs,
    })
}

/// Nominal band plus its coverage of each evaluation set.
pub fn nominal_coverage(
    train: &SamplePathSet,
    alpha: f64,
    opts: &SolveOptions,
    evals: &[SamplePathSet],
) -> Result<(SolveResult, Vec<f64>)> {
    let res = solve_nominal(train, alpha, opts)?;
    let rates = evals.iter().map(|e| coverage_rate(&res.band, e)).collect::<Result<_>>()?;
    Ok((res, rates))
}
