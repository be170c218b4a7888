//! Choosing the budget `gamma` by bisection on cross-validated coverage.
//!
//! `f(gamma)` is the held-out coverage of the robust band minus the target
//! `1 - alpha`; it is estimated by K-fold cross-validation and its root is
//! located by a fixed number of bisection steps on `[0, 1]`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::band::{compute_beta, BudgetRule};
use crate::error::{domain, Error, Result};
use crate::pathset::{covered_count, empirical_quantiles_with, ConfidenceBand, SamplePathSet};
use crate::solver::{solve_prepared, SolveOptions, SolveResult, SolveResultJson};

#[derive(Debug, Clone)]
pub struct TunerConfig {
    /// Number of folds `K`.
    pub folds: usize,
    /// Number of bisection steps.
    pub max_iterations: usize,
    /// Seed of the fold shuffle.
    pub seed: u64,
    /// Used for the fold solves and the final solve.
    pub options: SolveOptions,
    /// Seed each fold solve with that fold's solution at the nearest larger
    /// `gamma` evaluated so far.
    pub warm_start: bool,
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self {
            folds: 2,
            max_iterations: 10,
            seed: 0,
            options: SolveOptions::default(),
            warm_start: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TunerResult {
    pub gamma_hat: f64,
    /// `(gamma, f_hat)` at each bisection midpoint.
    pub trace: Vec<(f64, f64)>,
    /// Robust solve on all paths at `gamma_hat`.
    pub solve: SolveResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TunerResultJson {
    pub gamma_hat: f64,
    pub trace: Vec<(f64, f64)>,
    pub band: SolveResultJson,
}

impl TunerResult {
    pub fn band(&self) -> &ConfidenceBand {
        &self.solve.band
    }

    pub fn to_json(&self, set: &SamplePathSet) -> TunerResultJson {
        TunerResultJson {
            gamma_hat: self.gamma_hat,
            trace: self.trace.clone(),
            band: self.solve.to_json(set),
        }
    }
}

/// `K` disjoint folds of equal size `floor(n / K)`. When `K` does not divide
/// `n`, the highest `n mod K` indices are left out. Each fold is sorted.
pub fn kfold_partition(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(domain(format!("at least two folds are required, got {k}")));
    }
    if k > n {
        return Err(domain(format!("{k} folds requested for {n} paths")));
    }
    let m = n / k;
    let mut idx: Vec<usize> = (0..m * k).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(idx
        .chunks(m)
        .map(|c| {
            let mut fold = c.to_vec();
            fold.sort_unstable();
            fold
        })
        .collect())
}

/// Training paths of fold `k`: the union of the other folds, ascending.
fn training_indices(partitions: &[Vec<usize>], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = partitions
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != k)
        .flat_map(|(_, f)| f.iter().copied())
        .collect();
    idx.sort_unstable();
    idx
}

fn solve_fold(
    gamma: f64,
    train: &SamplePathSet,
    alpha: f64,
    rule: &BudgetRule,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    let q = empirical_quantiles_with(train, alpha, opts.quantile_method)?;
    let budget = rule.build(train, &q, gamma)?;
    let beta = compute_beta(&budget)?;
    solve_prepared(train, &q, &beta, opts)
}

struct FoldData {
    train: SamplePathSet,
    test: SamplePathSet,
}

fn fold_data(set: &SamplePathSet, partitions: &[Vec<usize>]) -> Result<Vec<FoldData>> {
    (0..partitions.len())
        .map(|k| {
            Ok(FoldData {
                train: set.select(&training_indices(partitions, k))?,
                test: set.select(&partitions[k])?,
            })
        })
        .collect()
}

/// Held-out results of one fold solve.
struct FoldOutcome {
    covered: usize,
    tested: usize,
    subset: Vec<usize>,
}

/// Fold solves at one `gamma`, in fold order.
fn evaluate_folds(
    gamma: f64,
    folds: &[FoldData],
    alpha: f64,
    rule: &BudgetRule,
    opts: &SolveOptions,
    warm: &[Option<Vec<usize>>],
) -> Result<Vec<FoldOutcome>> {
    folds
        .par_iter()
        .enumerate()
        .map(|(k, fold)| {
            let opts = SolveOptions {
                warm_start: warm.get(k).cloned().flatten(),
                ..opts.clone()
            };
            solve_fold(gamma, &fold.train, alpha, rule, &opts)
                .and_then(|r| {
                    Ok(FoldOutcome {
                        covered: covered_count(&r.band, &fold.test)?,
                        tested: fold.test.n(),
                        subset: r.subset,
                    })
                })
                .map_err(|e| Error::Fold {
                    fold: k + 1,
                    source: Box::new(e),
                })
        })
        .collect()
}

/// Mean held-out coverage minus `1 - alpha`. Differences within rounding
/// of zero count as zero, so exact attainment moves the bracket down.
fn mean_minus_target(outcomes: &[FoldOutcome], alpha: f64) -> f64 {
    let covered: usize = outcomes.iter().map(|o| o.covered).sum();
    let tested: usize = outcomes.iter().map(|o| o.tested).sum();
    let f = covered as f64 / tested as f64 - (1.0 - alpha);
    if f.abs() < 1e-12 {
        0.0
    } else {
        f
    }
}

/// Cross-validated estimate of `P(covered) - (1 - alpha)` at `gamma`.
pub fn estimate_f(
    gamma: f64,
    set: &SamplePathSet,
    partitions: &[Vec<usize>],
    alpha: f64,
    rule: &BudgetRule,
    opts: &SolveOptions,
) -> Result<f64> {
    let folds = fold_data(set, partitions)?;
    let rates = evaluate_folds(gamma, &folds, alpha, rule, opts, &[])?;
    Ok(mean_minus_target(&rates, alpha))
}

/// Exactly `iterations` bisection steps on `[0, 1]`: move the left end up
/// when `f < 0`, otherwise the right end down. Returns the last midpoint and
/// the trace.
pub fn bisect(
    iterations: usize,
    mut f: impl FnMut(f64) -> Result<f64>,
) -> Result<(f64, Vec<(f64, f64)>)> {
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut trace = Vec::with_capacity(iterations);
    let mut mid = 0.5;
    for _ in 0..iterations {
        mid = 0.5 * (a + b);
        let v = f(mid)?;
        trace.push((mid, v));
        if v < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok((mid, trace))
}

pub fn tune_gamma(
    set: &SamplePathSet,
    alpha: f64,
    config: &TunerConfig,
    rule: &BudgetRule,
) -> Result<TunerResult> {
    if config.max_iterations == 0 {
        return Err(domain("at least one bisection iteration is required"));
    }
    let partitions = kfold_partition(set.n(), config.folds, config.seed)?;
    let folds = fold_data(set, &partitions)?;
    let mut cache: Vec<Vec<(f64, Vec<usize>)>> = vec![Vec::new(); folds.len()];
    let (gamma_hat, trace) = bisect(config.max_iterations, |gamma| {
        let warm: Vec<Option<Vec<usize>>> = if config.warm_start {
            cache
                .iter()
                .map(|c| {
                    c.iter()
                        .filter(|(g, _)| *g >= gamma)
                        .min_by(|x, y| x.0.total_cmp(&y.0))
                        .map(|(_, s)| s.clone())
                })
                .collect()
        } else {
            Vec::new()
        };
        let rates = evaluate_folds(gamma, &folds, alpha, rule, &config.options, &warm)?;
        let v = mean_minus_target(&rates, alpha);
        if config.warm_start {
            for (c, o) in cache.iter_mut().zip(rates) {
                c.push((gamma, o.subset));
            }
        }
        Ok(v)
    })?;
    let solve = solve_fold(gamma_hat, set, alpha, rule, &config.options)?;
    Ok(TunerResult {
        gamma_hat,
        trace,
        solve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_properties() {
        let p = kfold_partition(4, 2, 1).unwrap();
        assert_eq!(p.len(), 2);
        let mut all: Vec<usize> = p.concat();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert_eq!(p, kfold_partition(4, 2, 1).unwrap());

        let p = kfold_partition(10, 3, 7).unwrap();
        assert!(p.iter().all(|f| f.len() == 3));
        let mut all: Vec<usize> = p.concat();
        all.sort_unstable();
        assert_eq!(all, (0..9).collect::<Vec<_>>());

        assert!(kfold_partition(3, 4, 0).is_err());
        assert!(kfold_partition(3, 1, 0).is_err());
    }

    #[test]
    fn bisection_arithmetic() {
        let (g, trace) = bisect(10, |_| Ok(0.0)).unwrap();
        assert_eq!(g, 2f64.powi(-10));
        assert_eq!(trace.len(), 10);
        let (g, _) = bisect(10, |_| Ok(-1.0)).unwrap();
        assert_eq!(g, 1.0 - 2f64.powi(-10));

        // Midpoints are those implied by the recorded signs.
        let (_, trace) = bisect(8, |g| Ok(0.3 - g)).unwrap();
        let (mut a, mut b) = (0.0, 1.0);
        for &(g, v) in &trace {
            assert_eq!(g, 0.5 * (a + b));
            if v < 0.0 {
                a = g;
            } else {
                b = g;
            }
        }
        assert_eq!(b - a, 2f64.powi(-8));
    }

    #[test]
    fn full_fold_coverage_gives_alpha() {
        // Identical paths: every band covers every held-out path.
        let rows = vec![vec![1.0, 2.0, 3.0]; 8];
        let set = SamplePathSet::from_rows(&rows).unwrap();
        let parts = kfold_partition(8, 2, 3).unwrap();
        let f = estimate_f(0.4, &set, &parts, 0.1, &BudgetRule::default(), &SolveOptions::exact()).unwrap();
        assert!((f - 0.1).abs() < 1e-12);
    }
}
