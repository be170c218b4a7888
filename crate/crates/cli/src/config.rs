//! Per-command configuration records. Each record can be read from a TOML
//! or JSON file; command-line flags then override individual fields.

use std::path::{Path, PathBuf};
use std::time::Duration;

use robust_bands::band::{BudgetRule, SlackSpread};
use robust_bands::pathset::QuantileMethod;
use robust_bands::simulators::{ErlangRModel, VarModel};
use robust_bands::solver::{CoverMode, SolveOptions};
use robust_bands::tuner::TunerConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Reads `path` as JSON when it ends in `.json`, TOML otherwise.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

pub fn render<T: Serialize>(cfg: &T) -> Result<String, CliError> {
    toml::to_string_pretty(cfg).map_err(|e| CliError::Usage(format!("cannot render config: {e}")))
}

fn check_alpha(alpha: f64) -> Result<(), CliError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("alpha must lie in (0,1), got {alpha}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SimKind {
    #[default]
    Var,
    ErlangR,
    ErlangRStationary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub kind: SimKind,
    pub n: usize,
    pub seed: u64,
    /// Stream of the first path; path `i` uses `stream + i`.
    pub stream: u64,
    pub output: Option<PathBuf>,
    pub var: VarModel,
    pub erlang: ErlangRModel,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            kind: SimKind::Var,
            n: 100,
            seed: 1,
            stream: 0,
            output: None,
            var: VarModel::default(),
            erlang: ErlangRModel::default(),
        }
    }
}

impl SimulateConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.n == 0 {
            return Err(CliError::Usage("n must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub gap: f64,
    pub slack_spread: SlackSpread,
    pub cover_mode: CoverMode,
    pub cover_target: Option<usize>,
    pub quantile_method: QuantileMethod,
    pub node_limit: Option<u64>,
    /// Seconds.
    pub time_limit: Option<f64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            gap: 0.01,
            slack_spread: SlackSpread::default(),
            cover_mode: CoverMode::default(),
            cover_target: None,
            quantile_method: QuantileMethod::default(),
            node_limit: None,
            time_limit: None,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), CliError> {
        if !(0.0..1.0).contains(&self.gap) {
            return Err(CliError::Usage(format!("gap must lie in [0,1), got {}", self.gap)));
        }
        if let Some(t) = self.time_limit {
            if !(t.is_finite() && t > 0.0) {
                return Err(CliError::Usage(format!("time limit must be positive, got {t}")));
            }
        }
        if self.cover_target == Some(0) {
            return Err(CliError::Usage("cover target must be at least 1".into()));
        }
        Ok(())
    }

    pub fn options(&self) -> SolveOptions {
        SolveOptions {
            cover_target: self.cover_target,
            cover_mode: self.cover_mode,
            gap_tolerance: self.gap,
            node_limit: self.node_limit,
            time_limit: self.time_limit.map(Duration::from_secs_f64),
            quantile_method: self.quantile_method,
            slack_spread: self.slack_spread,
            warm_start: None,
        }
    }

    /// A node or time limit is in force.
    pub fn limited(&self) -> bool {
        self.node_limit.is_some() || self.time_limit.is_some()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSettings {
    pub folds: usize,
    pub iterations: usize,
    pub seed: u64,
    pub warm_start: bool,
}

impl Default for TuneSettings {
    fn default() -> Self {
        Self {
            folds: 2,
            iterations: 10,
            seed: 0,
            warm_start: false,
        }
    }
}

impl TuneSettings {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.folds < 2 {
            return Err(CliError::Usage(format!("at least two folds are required, got {}", self.folds)));
        }
        if self.iterations == 0 {
            return Err(CliError::Usage("at least one bisection iteration is required".into()));
        }
        Ok(())
    }

    pub fn tuner(&self, solver: &SolverSettings) -> TunerConfig {
        TunerConfig {
            folds: self.folds,
            max_iterations: self.iterations,
            seed: self.seed,
            options: solver.options(),
            warm_start: self.warm_start,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMode {
    #[default]
    Nominal,
    Robust,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub mode: SolveMode,
    pub paths: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub alpha: f64,
    pub gamma: Option<f64>,
    /// Choose `gamma` by cross-validation instead of taking it as given.
    pub tune: bool,
    pub budget: BudgetRule,
    /// Explicit budget parameters; replaces `budget`.
    pub budget_file: Option<PathBuf>,
    pub solver: SolverSettings,
    pub tuning: TuneSettings,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            mode: SolveMode::Nominal,
            paths: None,
            output: None,
            alpha: 0.1,
            gamma: None,
            tune: false,
            budget: BudgetRule::default(),
            budget_file: None,
            solver: SolverSettings::default(),
            tuning: TuneSettings::default(),
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_alpha(self.alpha)?;
        self.solver.validate()?;
        if self.paths.is_none() {
            return Err(CliError::Usage("a sample-path CSV is required".into()));
        }
        if let Some(g) = self.gamma {
            if !(0.0..=1.0).contains(&g) {
                return Err(CliError::Usage(format!("gamma must lie in [0,1], got {g}")));
            }
        }
        match self.mode {
            SolveMode::Nominal => {
                if self.gamma.is_some() || self.tune || self.budget_file.is_some() {
                    return Err(CliError::Usage(
                        "gamma, --tune and --budget apply to robust mode only".into(),
                    ));
                }
            }
            SolveMode::Robust => {
                if self.tune {
                    if self.gamma.is_some() {
                        return Err(CliError::Usage("give either gamma or --tune, not both".into()));
                    }
                    if self.budget_file.is_some() {
                        return Err(CliError::Usage("--tune derives the budget; drop --budget".into()));
                    }
                    self.tuning.validate()?;
                } else if self.gamma.is_none() && self.budget_file.is_none() {
                    return Err(CliError::Usage("robust mode needs gamma or --tune".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    pub paths: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub alpha: f64,
    pub budget: BudgetRule,
    pub solver: SolverSettings,
    pub tuning: TuneSettings,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            paths: None,
            output: None,
            alpha: 0.1,
            budget: BudgetRule::default(),
            solver: SolverSettings::default(),
            tuning: TuneSettings::default(),
        }
    }
}

impl TuneConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_alpha(self.alpha)?;
        self.solver.validate()?;
        self.tuning.validate()?;
        if self.paths.is_none() {
            return Err(CliError::Usage("a sample-path CSV is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub band: Option<PathBuf>,
    pub eval: Vec<PathBuf>,
    pub output: Option<PathBuf>,
}

impl EvaluateConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.band.is_none() {
            return Err(CliError::Usage("a band JSON file is required".into()));
        }
        if self.eval.is_empty() {
            return Err(CliError::Usage("at least one evaluation CSV is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReproduceConfig {
    pub n: Vec<usize>,
    pub alpha: f64,
    pub seed: u64,
    pub eval_sets: usize,
    pub eval_size: usize,
    /// Accept evaluation sets smaller than the minimum.
    pub force: bool,
    pub iterations: usize,
    pub gap: f64,
    /// Fixed fold count; by default two up to 200 paths and four beyond.
    pub folds: Option<usize>,
    pub budget: BudgetRule,
    pub output_dir: Option<PathBuf>,
    pub model: VarModel,
}

impl Default for ReproduceConfig {
    fn default() -> Self {
        Self {
            n: vec![100, 200, 500, 1000, 5000],
            alpha: 0.1,
            seed: 1,
            eval_sets: 4,
            eval_size: 1000,
            force: false,
            iterations: 10,
            gap: 0.01,
            folds: None,
            budget: BudgetRule::default(),
            output_dir: None,
            model: VarModel::default(),
        }
    }
}

impl ReproduceConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_alpha(self.alpha)?;
        if self.n.is_empty() {
            return Err(CliError::Usage("at least one n is required".into()));
        }
        if self.eval_sets == 0 {
            return Err(CliError::Usage("at least one evaluation set is required".into()));
        }
        let min = robust_bands::experiments::MIN_EVAL_SIZE;
        if self.eval_size < min && !self.force {
            return Err(CliError::Usage(format!(
                "evaluation sets of {} paths are below the minimum of {min}; pass --force to run anyway",
                self.eval_size
            )));
        }
        if self.eval_size == 0 {
            return Err(CliError::Usage("evaluation sets must be non-empty".into()));
        }
        if self.iterations == 0 {
            return Err(CliError::Usage("at least one bisection iteration is required".into()));
        }
        if !(0.0..1.0).contains(&self.gap) {
            return Err(CliError::Usage(format!("gap must lie in [0,1), got {}", self.gap)));
        }
        for &n in &self.n {
            let k = self.folds.unwrap_or_else(|| robust_bands::experiments::default_folds(n));
            if k < 2 || k > n {
                return Err(CliError::Usage(format!("{k} folds cannot split {n} paths")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotConfig {
    pub band: Option<PathBuf>,
    pub paths: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub reference_label: String,
    pub output: Option<PathBuf>,
    /// Overlaid paths beyond this many are not drawn.
    pub max_paths: usize,
    pub title: Option<String>,
    pub width: u32,
    pub height: u32,
}

impl Default for PlotConfig {
    fn default() -> Self {
        Self {
            band: None,
            paths: None,
            reference: None,
            reference_label: "reference path".into(),
            output: None,
            max_paths: 200,
            title: None,
            width: 800,
            height: 500,
        }
    }
}

impl PlotConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.band.is_none() {
            return Err(CliError::Usage("a band JSON file is required".into()));
        }
        if self.output.is_none() {
            return Err(CliError::Usage("an output SVG path is required".into()));
        }
        if self.width < 200 || self.height < 150 {
            return Err(CliError::Usage("plot must be at least 200x150".into()));
        }
        Ok(())
    }
}
