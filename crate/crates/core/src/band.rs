//! Budget-uncertainty machinery: widening allowances, the closed-form
//! per-step widening terms and the optimal band for a fixed covered subset.
//!
//! The robust constraints require `sum_t u_t >= sum_t (qU_t + cU_t z_t)` for
//! every `z` in `{z in [0,1]^H : mean(z) <= gamma}`. Their tight right-hand
//! side is a fractional knapsack; [`compute_beta`] expresses it per step so
//! that the constraint becomes `sum_t u_t >= sum_t (qU_t + betaU_t)`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::pathset::{ceil_snap, ConfidenceBand, QuantileBounds, SamplePathSet};

/// Positivity floor for widening allowances.
pub const C_FLOOR: f64 = 1e-9;

fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(domain(format!("gamma must lie in [0,1], got {gamma}")))
    }
}

/// Widening allowances `cU`, `cL` and the budget `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetParams {
    #[serde(rename = "cU")]
    upper: Vec<f64>,
    #[serde(rename = "cL")]
    lower: Vec<f64>,
    gamma: f64,
}

impl BudgetParams {
    /// Entries below [`C_FLOOR`] are raised to it.
    pub fn new(upper: Vec<f64>, lower: Vec<f64>, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if upper.len() != lower.len() {
            return Err(Error::Dimension {
                expected: upper.len(),
                actual: lower.len(),
            });
        }
        if upper.is_empty() {
            return Err(domain("budget horizon must be at least 1"));
        }
        if upper.iter().chain(&lower).any(|c| !c.is_finite()) {
            return Err(domain("widening allowances must be finite"));
        }
        let floor = |v: Vec<f64>| v.into_iter().map(|c| c.max(C_FLOOR)).collect();
        Ok(Self {
            upper: floor(upper),
            lower: floor(lower),
            gamma,
        })
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn horizon(&self) -> usize {
        self.upper.len()
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self {
            gamma,
            ..self.clone()
        })
    }
}

/// Per-step widening terms for both envelopes.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaVector {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub t_star: usize,
    /// `None` for the nominal problem.
    pub gamma: Option<f64>,
    pub(crate) weight_upper: Vec<f64>,
    pub(crate) weight_lower: Vec<f64>,
}

impl BetaVector {
    /// All-zero terms: the nominal problem.
    pub fn nominal(h: usize) -> Self {
        Self {
            upper: vec![0.0; h],
            lower: vec![0.0; h],
            t_star: 1,
            gamma: None,
            weight_upper: vec![1.0; h],
            weight_lower: vec![1.0; h],
        }
    }

    pub fn horizon(&self) -> usize {
        self.upper.len()
    }

    pub fn total_upper(&self) -> f64 {
        self.upper.iter().sum()
    }

    pub fn total_lower(&self) -> f64 {
        self.lower.iter().sum()
    }
}

/// `max(ceil(gamma H), 1)`.
pub fn t_star(gamma: f64, h: usize) -> Result<usize> {
    check_gamma(gamma)?;
    if h == 0 {
        return Err(domain("horizon must be at least 1"));
    }
    Ok((ceil_snap(gamma * h as f64) as usize).clamp(1, h))
}

fn beta_side(c: &[f64], gamma: f64, t_star: usize) -> Vec<f64> {
    let mut sorted = c.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let pivot = sorted[t_star - 1];
    c.iter()
        .map(|&ct| (ct - pivot).max(0.0) + gamma * pivot)
        .collect()
}

/// `beta_t = (c_t - c_(t*))^+ + gamma c_(t*)` with `c_(j)` the `j`-th largest.
///
/// Ties in `c` need no perturbation: the sum over `t` is the same for every
/// ordering of equal entries.
pub fn compute_beta(params: &BudgetParams) -> Result<BetaVector> {
    let h = params.horizon();
    let ts = t_star(params.gamma, h)?;
    Ok(BetaVector {
        upper: beta_side(&params.upper, params.gamma, ts),
        lower: beta_side(&params.lower, params.gamma, ts),
        t_star: ts,
        gamma: Some(params.gamma),
        weight_upper: params.upper.clone(),
        weight_lower: params.lower.clone(),
    })
}

/// `sup { sum_t c_t z_t : z in [0,1]^H, mean(z) <= gamma }`, evaluated as a
/// fractional knapsack over the sorted entries.
pub fn worst_case_widening(c: &[f64], gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let mut sorted = c.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut budget = gamma * c.len() as f64;
    let mut total = 0.0;
    for v in sorted {
        if budget <= 0.0 {
            break;
        }
        let take = budget.min(1.0);
        total += take * v;
        budget -= take;
    }
    Ok(total)
}

/// How allowances `cU`, `cL` are derived from a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BudgetRule {
    /// `cU_t = max_i x_t - qU_t + margin`, `cL_t = qL_t - min_i x_t + margin`.
    SampleEnvelope { margin: f64 },
    /// Known hard limits on the process: `cU_t = upper_t - qU_t`,
    /// `cL_t = qL_t - lower_t`. A single value is broadcast over all steps.
    HardBounds { upper: Vec<f64>, lower: Vec<f64> },
}

impl Default for BudgetRule {
    fn default() -> Self {
        BudgetRule::SampleEnvelope { margin: 0.0 }
    }
}

impl BudgetRule {
    pub fn build(&self, set: &SamplePathSet, q: &QuantileBounds, gamma: f64) -> Result<BudgetParams> {
        match self {
            BudgetRule::SampleEnvelope { margin } => default_budget(set, q, *margin, gamma),
            BudgetRule::HardBounds { upper, lower } => hard_bounds_budget(q, upper, lower, gamma),
        }
    }
}

pub fn default_budget(
    set: &SamplePathSet,
    q: &QuantileBounds,
    margin: f64,
    gamma: f64,
) -> Result<BudgetParams> {
    if set.horizon() != q.horizon() {
        return Err(Error::Dimension {
            expected: set.horizon(),
            actual: q.horizon(),
        });
    }
    if margin.is_nan() || margin < 0.0 {
        return Err(domain(format!("margin must be nonnegative, got {margin}")));
    }
    let mut cu = Vec::with_capacity(set.horizon());
    let mut cl = Vec::with_capacity(set.horizon());
    for t in 0..set.horizon() {
        let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..set.n() {
            let x = set.value(i, t);
            hi = hi.max(x);
            lo = lo.min(x);
        }
        cu.push(hi - q.upper[t] + margin);
        cl.push(q.lower[t] - lo + margin);
    }
    BudgetParams::new(cu, cl, gamma)
}

fn broadcast(values: &[f64], h: usize, what: &str) -> Result<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; h]),
        len if len == h => Ok(values.to_vec()),
        len => Err(domain(format!("{what}: expected 1 or {h} values, got {len}"))),
    }
}

pub fn hard_bounds_budget(
    q: &QuantileBounds,
    upper: &[f64],
    lower: &[f64],
    gamma: f64,
) -> Result<BudgetParams> {
    let h = q.horizon();
    let upper = broadcast(upper, h, "upper bound")?;
    let lower = broadcast(lower, h, "lower bound")?;
    let cu = (0..h).map(|t| upper[t] - q.upper[t]).collect();
    let cl = (0..h).map(|t| q.lower[t] - lower[t]).collect();
    BudgetParams::new(cu, cl, gamma)
}

/// Placement of aggregate slack when a budget constraint binds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlackSpread {
    #[default]
    Uniform,
    LastStep,
    ProportionalToC,
}

impl std::str::FromStr for SlackSpread {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "last-step" => Ok(Self::LastStep),
            "proportional-to-c" => Ok(Self::ProportionalToC),
            other => Err(domain(format!("unknown slack spread {other:?}"))),
        }
    }
}

fn spread(deficit: f64, weights: &[f64], mode: SlackSpread) -> Vec<f64> {
    let h = weights.len();
    if deficit <= 0.0 {
        return vec![0.0; h];
    }
    match mode {
        SlackSpread::Uniform => vec![deficit / h as f64; h],
        SlackSpread::LastStep => {
            let mut v = vec![0.0; h];
            v[h - 1] = deficit;
            v
        }
        SlackSpread::ProportionalToC => {
            let total: f64 = weights.iter().sum();
            weights.iter().map(|w| deficit * w / total).collect()
        }
    }
}

/// Optimal width and band over all bands covering every path in `subset`.
///
/// The band is the quantile-clipped envelope of the subset; when an
/// aggregate budget constraint is not met by the envelope, the deficit is
/// added according to `mode`.
pub fn subset_objective(
    set: &SamplePathSet,
    subset: &[usize],
    q: &QuantileBounds,
    beta: &BetaVector,
    mode: SlackSpread,
) -> Result<(f64, ConfidenceBand)> {
    let h = set.horizon();
    for (expected, actual) in [(h, q.horizon()), (h, beta.horizon())] {
        if expected != actual {
            return Err(Error::Dimension { expected, actual });
        }
    }
    let (hi, lo) = crate::pathset::envelope(set, subset)?;
    let mut upper: Vec<f64> = (0..h).map(|t| hi[t].max(q.upper[t])).collect();
    let mut lower: Vec<f64> = (0..h).map(|t| lo[t].min(q.lower[t])).collect();
    let upper_floor: f64 = (0..h).map(|t| q.upper[t] + beta.upper[t]).sum();
    let lower_ceiling: f64 = (0..h).map(|t| q.lower[t] - beta.lower[t]).sum();
    let env_upper: f64 = upper.iter().sum();
    let env_lower: f64 = lower.iter().sum();
    let objective = env_upper.max(upper_floor) - env_lower.min(lower_ceiling);

    for (u, d) in upper
        .iter_mut()
        .zip(spread(upper_floor - env_upper, &beta.weight_upper, mode))
    {
        *u += d;
    }
    for (l, d) in lower
        .iter_mut()
        .zip(spread(env_lower - lower_ceiling, &beta.weight_lower, mode))
    {
        *l -= d;
    }
    let band = ConfidenceBand::new(lower, upper, q.alpha, beta.gamma)?;
    Ok((objective, band))
}
