use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use seclend_core::calibration::{cds_to_credit, CreditOverrides, FitBounds, FitOptions, LikelihoodSettings};
use seclend_core::error::{Error, Result};
use seclend_core::indemnity::PricingSettings;
use seclend_core::loss::{SimulationMode, DEFAULT_ES_CONFIDENCE};
use seclend_core::solver::{Grade, SolverSettings};
use seclend_core::types::{CreditParams, Criterion, DejdParams, RatingTarget, TransactionSpec, Validate};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Explicit asset parameters; exclusive with `price_series`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dejd: Option<DejdParams>,
    /// `date,close` CSV to calibrate from; relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price_series: Option<PathBuf>,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub borrowers: Vec<BorrowerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transaction: Option<TransactionSpec>,
    #[serde(default)]
    pub targets: Vec<TargetConfig>,
    #[serde(default)]
    pub triple_a: TripleAConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub pricing: PricingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    #[serde(default = "default_init")]
    pub init: DejdParams,
    #[serde(default)]
    pub bounds: FitBounds,
    #[serde(default)]
    pub zero_drift: bool,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_gradient_tolerance")]
    pub gradient_tolerance: f64,
    #[serde(default)]
    pub likelihood: LikelihoodSettings,
}

fn default_init() -> DejdParams {
    DejdParams {
        drift: 0.0,
        diffusion_vol: 0.2,
        jump_intensity: 10.0,
        up_prob: 0.5,
        up_rate: 40.0,
        down_rate: 40.0,
    }
}

fn default_max_iterations() -> usize {
    FitOptions::default().max_iterations
}

fn default_gradient_tolerance() -> f64 {
    FitOptions::default().gradient_tolerance
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            init: default_init(),
            bounds: FitBounds::default(),
            zero_drift: false,
            max_iterations: default_max_iterations(),
            gradient_tolerance: default_gradient_tolerance(),
            likelihood: LikelihoodSettings::default(),
        }
    }
}

impl CalibrationConfig {
    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance,
            zero_drift: self.zero_drift,
            likelihood: self.likelihood,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdsQuote {
    pub spread_bps: f64,
    pub recovery: f64,
    #[serde(default)]
    pub overrides: CreditOverrides,
}

/// A borrower given either directly or by a CDS quote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BorrowerConfig {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credit: Option<CreditParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cds: Option<CdsQuote>,
}

/// A Moody's label alone, or an explicit criterion and threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criterion: Option<Criterion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripleAConfig {
    #[serde(default = "default_criterion")]
    pub criterion: Criterion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pd_threshold: Option<f64>,
}

fn default_criterion() -> Criterion {
    Criterion::ExpectedLoss
}

impl Default for TripleAConfig {
    fn default() -> Self {
        Self {
            criterion: default_criterion(),
            pd_threshold: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_es_confidence")]
    pub es_confidence: f64,
    #[serde(default = "default_mode")]
    pub mode: SimulationMode,
}

fn default_n_paths() -> usize {
    100_000
}

fn default_batch_size() -> usize {
    8192
}

fn default_es_confidence() -> f64 {
    DEFAULT_ES_CONFIDENCE
}

fn default_mode() -> SimulationMode {
    SimulationMode::Joint
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_paths: default_n_paths(),
            batch_size: default_batch_size(),
            es_confidence: default_es_confidence(),
            mode: default_mode(),
        }
    }
}

/// Injected metrics for pricing without simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayInputs {
    pub el: f64,
    pub es: f64,
    pub triple_a_haircut: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub haircuts: Vec<f64>,
    pub mprs: Vec<u32>,
    #[serde(default = "default_criteria")]
    pub criteria: Vec<Criterion>,
}

fn default_criteria() -> Vec<Criterion> {
    vec![Criterion::ExpectedLoss]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PricingConfig {
    #[serde(default = "default_cost_of_capital")]
    pub cost_of_capital: f64,
    #[serde(default = "default_funding_spread")]
    pub funding_spread: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay: Option<ReplayInputs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
}

fn default_cost_of_capital() -> f64 {
    PricingSettings::default().cost_of_capital
}

fn default_funding_spread() -> f64 {
    PricingSettings::default().funding_spread
}

impl Default for PricingConfig {
    fn default() -> Self {
        Self {
            cost_of_capital: default_cost_of_capital(),
            funding_spread: default_funding_spread(),
            replay: None,
            grid: None,
        }
    }
}

impl PricingConfig {
    pub fn settings(&self) -> PricingSettings {
        PricingSettings {
            cost_of_capital: self.cost_of_capital,
            funding_spread: self.funding_spread,
        }
    }
}

fn invalid(message: impl Into<String>) -> Error {
    Error::InvalidInput(message.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config: RunConfig =
            serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "unsupported schema_version {}; expected {SCHEMA_VERSION}",
                config.schema_version
            )));
        }
        // Series paths are stored relative to the config so sidecars stay portable.
        if let Some(series) = &config.price_series {
            if series.is_relative() {
                if let Some(dir) = path.parent() {
                    config.price_series = Some(dir.join(series));
                }
            }
        }
        Ok(config)
    }

    pub fn check_model_source(&self) -> Result<()> {
        match (&self.dejd, &self.price_series) {
            (Some(_), Some(_)) => Err(invalid("give either `dejd` or `price_series`, not both")),
            (None, None) => Err(invalid("one of `dejd` or `price_series` is required")),
            _ => Ok(()),
        }
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| invalid("a seed is required: set `seed` in the config or pass --seed"))
    }

    pub fn transaction(&self) -> Result<TransactionSpec> {
        let txn = self.transaction.ok_or_else(|| invalid("`transaction` is required"))?;
        Ok(txn.validated()?)
    }

    /// Borrowers resolved to credit parameters, with any defaults assumed.
    pub fn grades(&self) -> Result<(Vec<Grade>, Vec<String>)> {
        if self.borrowers.is_empty() {
            return Err(invalid("at least one entry in `borrowers` is required"));
        }
        let mut grades = Vec::new();
        let mut assumptions = Vec::new();
        for b in &self.borrowers {
            let credit = match (&b.credit, &b.cds) {
                (Some(c), None) => c.validated()?,
                (None, Some(q)) => {
                    let fit = cds_to_credit(q.spread_bps, q.recovery, &q.overrides)?;
                    assumptions.extend(fit.assumed.iter().map(|a| format!("{}: {a}", b.label)));
                    fit.params
                }
                _ => {
                    return Err(invalid(format!(
                        "borrower {} needs exactly one of `credit` or `cds`",
                        b.label
                    )))
                }
            };
            grades.push(Grade {
                label: b.label.clone(),
                credit,
            });
        }
        Ok((grades, assumptions))
    }

    pub fn targets(&self) -> Result<Vec<RatingTarget>> {
        if self.targets.is_empty() {
            return Ok(vec![RatingTarget::moodys_aaa()]);
        }
        self.targets
            .iter()
            .map(|t| match (t.criterion, t.threshold) {
                (None, None) => RatingTarget::moodys(&t.label)
                    .ok_or_else(|| invalid(format!("no built-in threshold for `{}`; give one", t.label))),
                (criterion, Some(threshold)) => Ok(RatingTarget::new(
                    criterion.unwrap_or(Criterion::ExpectedLoss),
                    threshold,
                    t.label.clone(),
                )?),
                (Some(_), None) => Err(invalid(format!("target `{}` has a criterion but no threshold", t.label))),
            })
            .collect()
    }

    pub fn check_simulation(&self) -> Result<()> {
        let s = &self.simulation;
        if s.n_paths == 0 || s.batch_size == 0 {
            return Err(invalid("n_paths and batch_size must be at least 1"));
        }
        if !(s.es_confidence > 0.0 && s.es_confidence < 1.0) {
            return Err(invalid(format!("es_confidence must lie in (0, 1), got {}", s.es_confidence)));
        }
        Ok(())
    }

    /// The config as actually run: defaults written out, seed fixed.
    pub fn resolved(&self, seed: Option<u64>) -> Self {
        let mut out = self.clone();
        if seed.is_some() {
            out.seed = seed;
        }
        out
    }
}
