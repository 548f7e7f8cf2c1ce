//! Parameter records and result types shared by every engine module.
//!
//! Records are plain data: they are validated at the engine boundary by
//! [`Validate`] and never clamped into range.

use serde::{Deserialize, Serialize};

use crate::error::{ValidationError, Violation};

/// Business days per year; margin periods quoted in days convert as `u / 250`.
pub const BUSINESS_DAYS_PER_YEAR: f64 = 250.0;

/// Daily time step in years.
pub const DAY: f64 = 1.0 / BUSINESS_DAYS_PER_YEAR;

/// Moody's idealized one-year expected-loss rates for the top of the scale.
pub const MOODYS_ONE_YEAR_EL: [(&str, f64); 4] = [
    ("Aaa", 3.00e-7),
    ("Aa1", 3.10e-6),
    ("Aa2", 7.50e-6),
    ("Aa3", 1.66e-5),
];

pub trait Validate {
    fn validate(&self) -> Result<(), ValidationError>;

    /// Returns the value unchanged when every bound holds.
    fn validated(self) -> Result<Self, ValidationError>
    where
        Self: Sized,
    {
        self.validate()?;
        Ok(self)
    }
}

struct Checker {
    record: &'static str,
    violations: Vec<Violation>,
}

impl Checker {
    fn new(record: &'static str) -> Self {
        Self {
            record,
            violations: Vec::new(),
        }
    }

    fn require(&mut self, ok: bool, field: &'static str, message: impl Into<String>) {
        if !ok {
            self.violations.push(Violation {
                field,
                message: message.into(),
            });
        }
    }

    fn finish(self) -> Result<(), ValidationError> {
        if self.violations.is_empty() {
            Ok(())
        } else {
            Err(ValidationError {
                record: self.record,
                violations: self.violations,
            })
        }
    }
}

/// Double-exponential jump-diffusion parameters for the log-price
/// `X(t) = log(B(t)/B0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DejdParams {
    /// Drift per year, no jump compensator.
    pub drift: f64,
    /// Diffusion volatility per sqrt-year.
    pub diffusion_vol: f64,
    /// Expected jumps per year.
    pub jump_intensity: f64,
    /// Probability that a jump is upward.
    pub up_prob: f64,
    /// Rate of the upward exponential jump size; must exceed 1.
    pub up_rate: f64,
    /// Rate of the downward exponential jump size.
    pub down_rate: f64,
}

impl DejdParams {
    pub fn down_prob(&self) -> f64 {
        1.0 - self.up_prob
    }

    /// Expected size of a single jump in log-return.
    pub fn mean_jump(&self) -> f64 {
        self.up_prob / self.up_rate - self.down_prob() / self.down_rate
    }

    /// Yearly drift contributed by jumps, `lambda_a * E[Y]`.
    pub fn jump_drift(&self) -> f64 {
        self.jump_intensity * self.mean_jump()
    }

    /// The law of `-X`: drift negated, up and down jump legs swapped.
    pub fn mirrored(&self) -> Self {
        Self {
            drift: -self.drift,
            diffusion_vol: self.diffusion_vol,
            jump_intensity: self.jump_intensity,
            up_prob: self.down_prob(),
            up_rate: self.down_rate,
            down_rate: self.up_rate,
        }
    }

    /// Log of `E[exp(X(1))]`, finite because `up_rate > 1`.
    pub fn log_price_growth(&self) -> f64 {
        let jump_mgf = self.up_prob * self.up_rate / (self.up_rate - 1.0)
            + self.down_prob() * self.down_rate / (self.down_rate + 1.0);
        self.drift
            + 0.5 * self.diffusion_vol * self.diffusion_vol
            + self.jump_intensity * (jump_mgf - 1.0)
    }
}

impl Validate for DejdParams {
    fn validate(&self) -> Result<(), ValidationError> {
        let mut c = Checker::new("DejdParams");
        c.require(self.drift.is_finite(), "drift", "drift must be finite");
        c.require(
            self.diffusion_vol >= 0.0 && self.diffusion_vol.is_finite(),
            "diffusion_vol",
            format!("diffusion_vol must be >= 0, got {}", self.diffusion_vol),
        );
        c.require(
            self.jump_intensity >= 0.0 && self.jump_intensity.is_finite(),
            "jump_intensity",
            format!("jump_intensity must be >= 0, got {}", self.jump_intensity),
        );
        c.require(
            (0.0..=1.0).contains(&self.up_prob),
            "up_prob",
            format!("up_prob must lie in [0, 1], got {}", self.up_prob),
        );
        c.require(
            self.up_rate > 1.0 && self.up_rate.is_finite(),
            "up_rate",
            format!("eta must exceed 1, got {}", self.up_rate),
        );
        c.require(
            self.down_rate > 0.0 && self.down_rate.is_finite(),
            "down_rate",
            format!("theta must be > 0, got {}", self.down_rate),
        );
        c.finish()
    }
}

/// Log-OU default intensity, recovery and asset/credit correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreditParams {
    /// Mean reversion speed of `log(lambda)` per year.
    pub mean_reversion: f64,
    /// Long-run level of `log(lambda)`.
    pub mean_level: f64,
    /// Volatility of `log(lambda)` per sqrt-year.
    pub spread_vol: f64,
    /// `log(lambda(0))`.
    pub initial_log_intensity: f64,
    pub recovery: f64,
    /// Loading of the asset diffusion on the credit Brownian motion.
    pub correlation: f64,
}

impl CreditParams {
    pub fn mean_intensity(&self) -> f64 {
        self.mean_level.exp()
    }
}

impl Validate for CreditParams {
    fn validate(&self) -> Result<(), ValidationError> {
        let mut c = Checker::new("CreditParams");
        c.require(
            self.mean_reversion >= 0.0 && self.mean_reversion.is_finite(),
            "mean_reversion",
            format!("mean_reversion must be >= 0, got {}", self.mean_reversion),
        );
        c.require(self.mean_level.is_finite(), "mean_level", "mean_level must be finite");
        c.require(
            self.spread_vol >= 0.0 && self.spread_vol.is_finite(),
            "spread_vol",
            format!("spread_vol must be >= 0, got {}", self.spread_vol),
        );
        c.require(
            self.initial_log_intensity.is_finite(),
            "initial_log_intensity",
            "initial_log_intensity must be finite",
        );
        c.require(
            (0.0..1.0).contains(&self.recovery),
            "recovery",
            format!("recovery must lie in [0, 1), got {}", self.recovery),
        );
        c.require(
            (-1.0..=1.0).contains(&self.correlation),
            "correlation",
            format!("correlation must lie in [-1, 1], got {}", self.correlation),
        );
        c.finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Lender holds cash collateral against a loaned security: loss on the upside.
    SecLending,
    /// Cash lender holds the security: loss on the downside.
    Repo,
}

fn default_horizon() -> f64 {
    1.0
}

fn default_notional() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransactionSpec {
    pub haircut: f64,
    /// Ask-to-fair spread paid at close-out.
    pub liquidity_spread: f64,
    /// Margin period of risk in business days.
    pub mpr_days: u32,
    pub side: Side,
    #[serde(default = "default_notional")]
    pub notional: f64,
    /// Horizon of the default indicator in years.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
}

impl TransactionSpec {
    pub fn sec_lending(haircut: f64, liquidity_spread: f64, mpr_days: u32) -> Self {
        Self {
            haircut,
            liquidity_spread,
            mpr_days,
            side: Side::SecLending,
            notional: 1.0,
            horizon: 1.0,
        }
    }

    pub fn mpr_years(&self) -> f64 {
        f64::from(self.mpr_days) / BUSINESS_DAYS_PER_YEAR
    }

    /// Number of daily steps to the horizon.
    pub fn horizon_steps(&self) -> usize {
        (self.horizon * BUSINESS_DAYS_PER_YEAR).round() as usize
    }

    pub fn with_haircut(mut self, haircut: f64) -> Self {
        self.haircut = haircut;
        self
    }

    pub fn with_mpr_days(mut self, mpr_days: u32) -> Self {
        self.mpr_days = mpr_days;
        self
    }

    /// Collateral posted against a security worth `security_value`.
    pub fn collateral(&self, security_value: f64) -> f64 {
        match self.side {
            Side::SecLending => (1.0 + self.haircut) * security_value,
            Side::Repo => (1.0 - self.haircut) * security_value,
        }
    }
}

impl Validate for TransactionSpec {
    fn validate(&self) -> Result<(), ValidationError> {
        let mut c = Checker::new("TransactionSpec");
        match self.side {
            Side::SecLending => c.require(
                self.haircut >= 0.0 && self.haircut.is_finite(),
                "haircut",
                format!("haircut must be >= 0 for securities lending, got {}", self.haircut),
            ),
            Side::Repo => c.require(
                self.haircut < 1.0 && self.haircut.is_finite(),
                "haircut",
                format!("haircut must be < 1 for repo, got {}", self.haircut),
            ),
        }
        c.require(
            (0.0..1.0).contains(&self.liquidity_spread),
            "liquidity_spread",
            format!("liquidity_spread must lie in [0, 1), got {}", self.liquidity_spread),
        );
        c.require(
            self.mpr_days >= 1,
            "mpr_days",
            "mpr_days must be at least 1",
        );
        c.require(
            self.notional > 0.0 && self.notional.is_finite(),
            "notional",
            format!("notional must be > 0, got {}", self.notional),
        );
        c.require(
            self.horizon > 0.0 && self.horizon.is_finite() && self.horizon_steps() >= 1,
            "horizon",
            format!("horizon must cover at least one business day, got {}", self.horizon),
        );
        c.finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Mean loss as a fraction of notional.
    ExpectedLoss,
    /// Probability of a first-dollar loss.
    DefaultProbability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatingTarget {
    pub criterion: Criterion,
    pub threshold: f64,
    pub label: String,
}

impl RatingTarget {
    pub fn new(criterion: Criterion, threshold: f64, label: impl Into<String>) -> Result<Self, ValidationError> {
        Self {
            criterion,
            threshold,
            label: label.into(),
        }
        .validated()
    }

    /// Looks up a Moody's one-year EL target by rating label.
    pub fn moodys(label: &str) -> Option<Self> {
        MOODYS_ONE_YEAR_EL
            .iter()
            .find(|(l, _)| *l == label)
            .map(|&(l, threshold)| Self {
                criterion: Criterion::ExpectedLoss,
                threshold,
                label: l.to_string(),
            })
    }

    pub fn moodys_aaa() -> Self {
        Self::moodys("Aaa").expect("Aaa is in the table")
    }
}

impl Validate for RatingTarget {
    fn validate(&self) -> Result<(), ValidationError> {
        let mut c = Checker::new("RatingTarget");
        c.require(
            self.threshold > 0.0 && self.threshold.is_finite(),
            "threshold",
            format!("threshold must be > 0, got {}", self.threshold),
        );
        if self.criterion == Criterion::DefaultProbability {
            c.require(
                self.threshold <= 1.0,
                "threshold",
                "a probability threshold cannot exceed 1",
            );
        }
        c.finish()
    }
}

/// Loss on one simulated path, as a fraction of initial notional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSample {
    pub loss: f64,
    pub defaulted: bool,
    pub default_time: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedDescriptor {
    pub base_seed: u64,
    pub partition_count: usize,
}

/// Cost-of-indemnification breakdown; every amount is an annualized
/// fraction of the loaned security's market value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndemnitySheet {
    pub transaction_haircut: f64,
    pub triple_a_haircut: f64,
    pub gap: f64,
    pub el: f64,
    pub es: f64,
    pub redundant_fund: f64,
    pub cost_of_capital: f64,
    pub funding_spread: f64,
    pub risk_charge: f64,
    pub capital_charge: f64,
    pub funding_charge: f64,
    pub total: f64,
    /// Set when `el + es` exceeds the gap and the funding leg was floored at zero.
    pub undercapitalized_gap: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dejd() -> DejdParams {
        DejdParams {
            drift: 0.05,
            diffusion_vol: 0.2,
            jump_intensity: 25.0,
            up_prob: 0.4,
            up_rate: 60.0,
            down_rate: 45.0,
        }
    }

    fn credit() -> CreditParams {
        CreditParams {
            mean_reversion: 0.5,
            mean_level: 0.04f64.ln(),
            spread_vol: 1.0,
            initial_log_intensity: 0.04f64.ln(),
            recovery: 0.4,
            correlation: 0.0,
        }
    }

    #[test]
    fn eta_at_or_below_one_rejected() {
        let err = DejdParams { up_rate: 0.9, ..dejd() }.validate().unwrap_err();
        assert!(err.mentions("up_rate"));
        assert!(err.to_string().contains("eta must exceed 1"));
    }

    #[test]
    fn every_violation_reported() {
        let bad = DejdParams {
            diffusion_vol: -1.0,
            up_prob: 1.5,
            down_rate: 0.0,
            ..dejd()
        };
        let err = bad.validate().unwrap_err();
        assert_eq!(err.violations.len(), 3);
        assert!(err.mentions("diffusion_vol") && err.mentions("up_prob") && err.mentions("down_rate"));
    }

    #[test]
    fn zero_haircut_zero_spread_is_valid() {
        let txn = TransactionSpec::sec_lending(0.0, 0.0, 3);
        assert_eq!(txn.validated(), Ok(txn));
    }

    #[test]
    fn correlation_out_of_range() {
        let err = CreditParams { correlation: 1.5, ..credit() }.validate().unwrap_err();
        assert!(err.mentions("correlation"));
        assert!(credit().validate().is_ok());
    }

    #[test]
    fn repo_haircut_bound() {
        let mut txn = TransactionSpec::sec_lending(1.2, 0.0, 3);
        assert!(txn.validate().is_ok());
        txn.side = Side::Repo;
        assert!(txn.validate().unwrap_err().mentions("haircut"));
        txn.haircut = -0.05;
        assert!(txn.validate().is_ok());
    }

    #[test]
    fn spread_must_stay_below_one() {
        let txn = TransactionSpec::sec_lending(0.02, 1.0, 3);
        assert!(txn.validate().unwrap_err().mentions("liquidity_spread"));
    }

    #[test]
    fn moodys_table_is_exact() {
        let expected = [("Aaa", 3.00e-7), ("Aa1", 3.10e-6), ("Aa2", 7.50e-6), ("Aa3", 1.66e-5)];
        for (label, threshold) in expected {
            let target = RatingTarget::moodys(label).unwrap();
            assert_eq!(target.threshold, threshold);
            assert_eq!(target.criterion, Criterion::ExpectedLoss);
        }
        assert!(RatingTarget::moodys("A1").is_none());
        assert_eq!(MOODYS_ONE_YEAR_EL.len(), 4);
    }

    #[test]
    fn target_threshold_positive() {
        assert!(RatingTarget::new(Criterion::ExpectedLoss, 0.0, "x").is_err());
        assert!(RatingTarget::new(Criterion::DefaultProbability, 1e-4, "AAA").is_ok());
    }

    #[test]
    fn mirror_is_an_involution() {
        let p = dejd();
        assert_eq!(p.mirrored().mirrored(), p);
        assert!((p.mirrored().mean_jump() + p.mean_jump()).abs() < 1e-15);
    }

    #[test]
    fn collateral_follows_side() {
        let txn = TransactionSpec::sec_lending(0.02, 0.0, 3);
        assert!((txn.collateral(100.0) - 102.0).abs() < 1e-12);
        let repo = TransactionSpec { side: Side::Repo, ..txn };
        assert!((repo.collateral(100.0) - 98.0).abs() < 1e-12);
    }

    #[test]
    fn mpr_converts_on_250_days() {
        let txn = TransactionSpec::sec_lending(0.0, 0.0, 5);
        assert!((txn.mpr_years() - 0.02).abs() < 1e-15);
        assert_eq!(txn.horizon_steps(), 250);
    }

    #[test]
    fn unknown_keys_rejected() {
        let json = r#"{"drift":0.0,"diffusion_vol":0.2,"jump_intensity":1.0,"up_prob":0.5,"up_rate":10.0,"down_rate":10.0,"typo":1}"#;
        assert!(serde_json::from_str::<DejdParams>(json).is_err());
    }
}
