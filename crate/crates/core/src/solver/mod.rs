//! Minimum-width band construction.
//!
//! For a fixed covered subset the optimal band has a closed form
//! ([`crate::band::subset_objective`]), so the problem reduces to choosing
//! which `n - k` paths to leave uncovered. That choice is made exactly (up to
//! the requested relative gap) by branch-and-bound in [`search`].

mod flow;
mod lagrange;
mod problem;
mod search;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::band::{compute_beta, subset_objective, BetaVector, BudgetParams, SlackSpread};
use crate::error::{domain, Error, Result};
use crate::pathset::{
    ceil_snap, check_alpha, empirical_quantiles_with, floor_snap, BandJson, ConfidenceBand,
    QuantileBounds, QuantileMethod, SamplePathSet,
};

use problem::{Evaluator, Fix, Problem};
use search::{Search, SearchLimits};

/// Rounding of `n(1 - alpha)` when it is not an integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverMode {
    /// Round down: the smallest `beta > alpha` with `n(1 - beta)` integral.
    #[default]
    PaperBeta,
    Ceiling,
}

impl std::str::FromStr for CoverMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-beta" => Ok(Self::PaperBeta),
            "ceiling" => Ok(Self::Ceiling),
            other => Err(domain(format!("unknown cover mode {other:?}"))),
        }
    }
}

/// Number of paths the band must cover. Never less than one.
pub fn cover_target(n: usize, alpha: f64, mode: CoverMode) -> Result<usize> {
    check_alpha(alpha)?;
    let x = n as f64 * (1.0 - alpha);
    let k = match mode {
        CoverMode::PaperBeta => floor_snap(x),
        CoverMode::Ceiling => ceil_snap(x),
    };
    Ok((k as usize).clamp(1, n.max(1)))
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Explicit `k`; derived from `alpha` and `cover_mode` when `None`.
    pub cover_target: Option<usize>,
    pub cover_mode: CoverMode,
    /// Relative optimality gap at which the search stops.
    pub gap_tolerance: f64,
    pub node_limit: Option<u64>,
    pub time_limit: Option<Duration>,
    pub quantile_method: QuantileMethod,
    pub slack_spread: SlackSpread,
    /// Covered subset used to seed the incumbent.
    pub warm_start: Option<Vec<usize>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            cover_target: None,
            cover_mode: CoverMode::default(),
            gap_tolerance: 0.01,
            node_limit: None,
            time_limit: None,
            quantile_method: QuantileMethod::default(),
            slack_spread: SlackSpread::default(),
            warm_start: None,
        }
    }
}

impl SolveOptions {
    pub fn exact() -> Self {
        Self {
            gap_tolerance: 0.0,
            ..Self::default()
        }
    }

    fn resolve_k(&self, n: usize, alpha: f64) -> Result<usize> {
        let k = match self.cover_target {
            Some(k) => k,
            None => cover_target(n, alpha, self.cover_mode)?,
        };
        if k == 0 || k > n {
            return Err(domain(format!("cover target must lie in [1, {n}], got {k}")));
        }
        Ok(k)
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gap_tolerance) {
            return Err(domain(format!(
                "gap tolerance must lie in [0,1), got {}",
                self.gap_tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub band: ConfidenceBand,
    /// Every path the band covers (0-based, ascending).
    pub covered: Vec<usize>,
    /// The `k` paths the optimization chose to cover.
    pub subset: Vec<usize>,
    pub objective: f64,
    pub lower_bound: f64,
    pub gap: f64,
    pub nodes: u64,
    pub proven_optimal: bool,
}

/// Serialized form of a [`SolveResult`]: the band JSON plus diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResultJson {
    #[serde(flatten)]
    pub band: BandJson,
    pub covered: Vec<usize>,
    pub objective: f64,
    pub lower_bound: f64,
    pub gap: f64,
    pub nodes: u64,
    pub proven_optimal: bool,
}

impl SolveResult {
    pub fn to_json(&self, set: &SamplePathSet) -> SolveResultJson {
        SolveResultJson {
            band: self.band.to_json(Some(set)),
            covered: self.covered.clone(),
            objective: self.objective,
            lower_bound: self.lower_bound,
            gap: self.gap,
            nodes: self.nodes,
            proven_optimal: self.proven_optimal,
        }
    }
}

fn relative_gap(objective: f64, lower_bound: f64) -> f64 {
    ((objective - lower_bound) / objective.abs().max(1e-12)).max(0.0)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    set: &SamplePathSet,
    q: &QuantileBounds,
    beta: &BetaVector,
    subset: Vec<usize>,
    lower_bound: f64,
    nodes: u64,
    proven_optimal: bool,
    spread: SlackSpread,
) -> Result<SolveResult> {
    let (objective, band) = subset_objective(set, &subset, q, beta, spread)?;
    let covered = (0..set.n())
        .filter(|&i| band.covers_unchecked(set.path(i)))
        .collect();
    let lower_bound = lower_bound.min(objective);
    Ok(SolveResult {
        band,
        covered,
        subset,
        objective,
        lower_bound,
        gap: relative_gap(objective, lower_bound),
        nodes,
        proven_optimal,
    })
}

/// Minimum-width band for `beta`, given precomputed quantiles.
pub fn solve_prepared(
    set: &SamplePathSet,
    q: &QuantileBounds,
    beta: &BetaVector,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    opts.validate()?;
    check_shapes(set, q, beta)?;
    let k = opts.resolve_k(set.n(), q.alpha)?;
    let p = Problem::new(set, q, beta, k);
    let limits = SearchLimits {
        gap: opts.gap_tolerance,
        node_limit: opts.node_limit,
        time_limit: opts.time_limit,
    };
    let out = Search::new(&p, limits, opts.warm_start.as_deref()).run();
    let subset: Vec<usize> = (0..set.n()).filter(|&i| out.kept[i]).collect();
    let res = finish(set, q, beta, subset, out.lower_bound, out.nodes, out.proven, opts.slack_spread)?;
    debug_assert!((res.objective - out.objective).abs() <= 1e-9 * p.scale() + 1e-15);
    Ok(res)
}

fn check_shapes(set: &SamplePathSet, q: &QuantileBounds, beta: &BetaVector) -> Result<()> {
    for actual in [q.horizon(), beta.horizon()] {
        if actual != set.horizon() {
            return Err(Error::Dimension {
                expected: set.horizon(),
                actual,
            });
        }
    }
    Ok(())
}

/// Narrowest band covering at least `k` paths.
pub fn solve_nominal(set: &SamplePathSet, alpha: f64, opts: &SolveOptions) -> Result<SolveResult> {
    let q = empirical_quantiles_with(set, alpha, opts.quantile_method)?;
    solve_prepared(set, &q, &BetaVector::nominal(set.horizon()), opts)
}

/// Narrowest band covering at least `k` paths whose envelopes also meet the
/// aggregate widening required by `budget`.
pub fn solve_robust(
    set: &SamplePathSet,
    alpha: f64,
    budget: &BudgetParams,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    let q = empirical_quantiles_with(set, alpha, opts.quantile_method)?;
    let beta = compute_beta(budget)?;
    solve_prepared(set, &q, &beta, opts)
}

/// Drops, one at a time, the path whose removal narrows the band most,
/// until `k` remain. Returns the kept indices in ascending order.
pub fn greedy_incumbent(
    set: &SamplePathSet,
    q: &QuantileBounds,
    beta: &BetaVector,
    k: usize,
) -> Result<Vec<usize>> {
    check_shapes(set, q, beta)?;
    if k > set.n() {
        return Err(domain(format!("cover target {k} exceeds n = {}", set.n())));
    }
    let p = Problem::new(set, q, beta, k);
    let mut ev = Evaluator::from_excluded(&p, vec![false; set.n()]);
    ev.greedy_remove(k, &vec![Fix::Free; set.n()]);
    Ok(ev.kept_indices())
}

pub const BRUTE_FORCE_MAX_N: usize = 20;
pub const BRUTE_FORCE_MAX_EXCLUDED: usize = 6;

/// Exhaustive search over all covered subsets of size exactly `k`.
///
/// Among equal objectives the lexicographically smallest subset wins.
pub fn brute_force(
    set: &SamplePathSet,
    alpha: f64,
    budget: Option<&BudgetParams>,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    let q = empirical_quantiles_with(set, alpha, opts.quantile_method)?;
    let beta = match budget {
        Some(b) => compute_beta(b)?,
        None => BetaVector::nominal(set.horizon()),
    };
    brute_force_prepared(set, &q, &beta, opts)
}

pub fn brute_force_prepared(
    set: &SamplePathSet,
    q: &QuantileBounds,
    beta: &BetaVector,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    check_shapes(set, q, beta)?;
    let n = set.n();
    let k = opts.resolve_k(n, q.alpha)?;
    if n > BRUTE_FORCE_MAX_N || n - k > BRUTE_FORCE_MAX_EXCLUDED {
        return Err(Error::TooLarge(format!(
            "requires n <= {BRUTE_FORCE_MAX_N} and n - k <= {BRUTE_FORCE_MAX_EXCLUDED}, got n = {n}, k = {k}"
        )));
    }
    let mut subset: Vec<usize> = (0..k).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut count = 0u64;
    loop {
        let (obj, _) = subset_objective(set, &subset, q, beta, opts.slack_spread)?;
        count += 1;
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, subset.clone()));
        }
        if !next_combination(&mut subset, n) {
            break;
        }
    }
    let (obj, subset) = best.expect("at least one subset");
    finish(set, q, beta, subset, obj, count, true, opts.slack_spread)
}

/// Advances to the next `k`-combination of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let Some(i) = (0..k).rev().find(|&i| c[i] < n - k + i) else {
        return false;
    };
    c[i] += 1;
    for j in i + 1..k {
        c[j] = c[j - 1] + 1;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::band::BudgetParams;
    use crate::pathset::{empirical_quantiles, is_covered};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn four_paths() -> SamplePathSet {
        SamplePathSet::from_rows(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [10.0, 10.0]]).unwrap()
    }

    fn random_set(rng: &mut ChaCha8Rng, n: usize, h: usize) -> SamplePathSet {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..h).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect())
            .collect();
        SamplePathSet::from_rows(&rows).unwrap()
    }

    #[test]
    fn cover_target_examples() {
        assert_eq!(cover_target(100, 0.1, CoverMode::PaperBeta).unwrap(), 90);
        assert_eq!(cover_target(100, 0.1, CoverMode::Ceiling).unwrap(), 90);
        assert_eq!(cover_target(10, 0.15, CoverMode::PaperBeta).unwrap(), 8);
        assert_eq!(cover_target(10, 0.15, CoverMode::Ceiling).unwrap(), 9);
        assert_eq!(cover_target(1, 0.5, CoverMode::PaperBeta).unwrap(), 1);
    }

    #[test]
    fn four_path_instance() {
        let set = four_paths();
        let res = solve_nominal(&set, 0.5, &SolveOptions::exact()).unwrap();
        assert_eq!(res.objective, 2.0);
        assert_eq!(res.covered, vec![1, 2]);
        assert!(res.proven_optimal);

        let budget = BudgetParams::new(vec![2.0, 2.0], vec![0.0, 0.0], 0.5).unwrap();
        let res = solve_robust(&set, 0.5, &budget, &SolveOptions::exact()).unwrap();
        assert!((res.objective - 4.0).abs() < 1e-8, "{}", res.objective);
    }

    #[test]
    fn single_path_and_full_cover() {
        let set = SamplePathSet::from_rows(&[[1.5, -2.0, 3.0]]).unwrap();
        let res = solve_nominal(&set, 0.1, &SolveOptions::exact()).unwrap();
        assert_eq!(res.objective, 0.0);
        assert_eq!(res.band.upper(), set.path(0));
        assert_eq!(res.band.lower(), set.path(0));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let set = random_set(&mut rng, 9, 3);
        let opts = SolveOptions {
            cover_target: Some(9),
            ..SolveOptions::exact()
        };
        let res = solve_nominal(&set, 0.2, &opts).unwrap();
        let all: Vec<usize> = (0..9).collect();
        let q = empirical_quantiles(&set, 0.2).unwrap();
        let (want, _) =
            subset_objective(&set, &all, &q, &BetaVector::nominal(3), SlackSpread::Uniform).unwrap();
        assert_eq!(res.objective, want);
        assert_eq!(res.covered, all);
    }

    #[test]
    fn greedy_drops_outlier() {
        let mut rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.1, -(i as f64) * 0.1]).collect();
        rows.push(vec![50.0, 50.0]);
        let set = SamplePathSet::from_rows(&rows).unwrap();
        let q = empirical_quantiles(&set, 0.3).unwrap();
        let kept = greedy_incumbent(&set, &q, &BetaVector::nominal(2), 6).unwrap();
        assert_eq!(kept, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(greedy_incumbent(&set, &q, &BetaVector::nominal(2), 7).unwrap().len(), 7);
    }

    #[test]
    fn brute_force_guard() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let set = random_set(&mut rng, 21, 2);
        let opts = SolveOptions {
            cover_target: Some(20),
            ..SolveOptions::exact()
        };
        assert!(matches!(brute_force(&set, 0.1, None, &opts), Err(Error::TooLarge(_))));
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..150 {
            let n = rng.random_range(2..=12);
            let h = rng.random_range(1..=5);
            let set = random_set(&mut rng, n, h);
            let k = n - rng.random_range(0..=3.min(n - 1));
            let gamma = [0.0, 0.3, 0.7, 1.0][rng.random_range(0..4)];
            let alpha = 0.1 + rng.random::<f64>() * 0.5;
            let opts = SolveOptions {
                cover_target: Some(k),
                ..SolveOptions::exact()
            };
            let q = empirical_quantiles(&set, alpha).unwrap();
            let budget = crate::band::default_budget(&set, &q, 0.0, gamma).unwrap();
            let bb = solve_robust(&set, alpha, &budget, &opts).unwrap();
            let bf = brute_force(&set, alpha, Some(&budget), &opts).unwrap();
            assert!(
                (bb.objective - bf.objective).abs() <= 1e-9,
                "n={n} k={k} gamma={gamma}: {} vs {}",
                bb.objective,
                bf.objective
            );
            for &i in &bb.covered {
                assert!(is_covered(&bb.band, set.path(i)).unwrap());
            }
            assert!(bb.covered.len() >= k);
        }
    }

    #[test]
    fn node_bounds_never_exceed_best_completion() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..60 {
            let n = rng.random_range(4..=9);
            let h = rng.random_range(1..=4);
            let set = random_set(&mut rng, n, h);
            let k = n - rng.random_range(1..=3.min(n - 1));
            let q = empirical_quantiles(&set, 0.3).unwrap();
            let gamma = rng.random::<f64>();
            let budget = crate::band::default_budget(&set, &q, 0.0, gamma).unwrap();
            let beta = compute_beta(&budget).unwrap();
            let p = Problem::new(&set, &q, &beta, k);
            // Random partial assignment.
            let mut keep = Vec::new();
            let mut drop = Vec::new();
            for i in 0..n {
                match rng.random_range(0..4) {
                    0 if drop.len() < n - k => drop.push(i),
                    1 => keep.push(i),
                    _ => {}
                }
            }
            if n - drop.len() < k {
                continue;
            }
            let bound = search::bound_for(&p, &keep, &drop);
            // Best completion: all kept sets of size exactly k consistent with the fixes.
            let mut best = f64::INFINITY;
            for mask in 0u32..(1 << n) {
                if mask.count_ones() as usize != k {
                    continue;
                }
                let kept: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
                if keep.iter().any(|&i| !kept[i]) || drop.iter().any(|&i| kept[i]) {
                    continue;
                }
                best = best.min(p.objective_of(&kept));
            }
            assert!(bound <= best + 1e-9, "bound {bound} > best {best}");
        }
    }

    #[test]
    fn node_limit_reports_unproven() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let set = random_set(&mut rng, 60, 6);
        let opts = SolveOptions {
            node_limit: Some(0),
            ..SolveOptions::exact()
        };
        let res = solve_nominal(&set, 0.2, &opts).unwrap();
        assert!(!res.proven_optimal);
        assert!(res.lower_bound <= res.objective);
        assert!(res.covered.len() >= 48);
    }
}
