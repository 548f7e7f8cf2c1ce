//! Loss distributions and their risk metrics.
//!
//! A [`ScenarioSet`] stores the haircut-free summary of every simulated path,
//! so the loss at any haircut is a cheap revaluation of the same paths. Every
//! metric is then exactly monotone in the haircut, which is what the haircut
//! solver's bisection relies on.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{MixtureDensity, DEFAULT_TAIL_TOLERANCE};
use crate::error::{Error, Result};
use crate::models::{JointStepper, PathSample, PathStreams, Scenario};
use crate::numerics;
use crate::types::{
    CreditParams, Criterion, DejdParams, LossSample, SeedDescriptor, Side, TransactionSpec, Validate,
};

/// Default expected-shortfall confidence level.
pub const DEFAULT_ES_CONFIDENCE: f64 = 0.99;

/// Tail sizes below this mark the ES estimate as unstable.
pub const MIN_TAIL_SAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSettings {
    pub n_paths: usize,
    pub seed: u64,
    /// Paths per work item; does not affect results.
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

fn default_batch_size() -> usize {
    8192
}

impl SimulationSettings {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        Self {
            n_paths,
            seed,
            batch_size: default_batch_size(),
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self
    }

    pub fn partition_count(&self) -> usize {
        self.n_paths.div_ceil(self.batch_size.max(1))
    }

    fn check(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidInput("n_paths must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationMode {
    /// Joint asset and credit dynamics.
    Joint,
    /// Borrower ignored: default at time zero with zero recovery.
    Independent,
}

/// The haircut-independent terms of the loss function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub side: Side,
    pub liquidity_spread: f64,
    pub recovery: f64,
}

impl LossTerms {
    pub fn new(txn: &TransactionSpec, recovery: f64) -> Self {
        Self {
            side: txn.side,
            liquidity_spread: txn.liquidity_spread,
            recovery,
        }
    }

    /// Loss as a fraction of initial notional.
    pub fn loss(&self, haircut: f64, scenario: &Scenario) -> f64 {
        if scenario.default_time.is_none() {
            return 0.0;
        }
        let growth = scenario.window_return.exp();
        let g = self.liquidity_spread;
        let shortfall = match self.side {
            Side::SecLending => growth * (1.0 + g) - (1.0 + haircut),
            Side::Repo => (1.0 - haircut) - growth * (1.0 - g),
        };
        if shortfall > 0.0 {
            (1.0 - self.recovery) * scenario.log_return_at_default.exp() * shortfall
        } else {
            0.0
        }
    }
}

/// Loss on a recorded path under the transaction's haircut.
pub fn loss_from_path(path: &PathSample, txn: &TransactionSpec, credit: &CreditParams) -> LossSample {
    let scenario = Scenario {
        default_time: path.default_time,
        log_return_at_default: if path.default_time.is_some() {
            path.log_return_at_end()
        } else {
            0.0
        },
        window_return: path.mpr_log_return.unwrap_or(0.0),
    };
    LossSample {
        loss: LossTerms::new(txn, credit.recovery).loss(txn.haircut, &scenario),
        defaulted: path.default_time.is_some(),
        default_time: path.default_time,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskMetrics {
    pub el: f64,
    pub el_stderr: f64,
    pub pd_loss: f64,
    pub pd_stderr: f64,
    pub es: f64,
    pub es_confidence: f64,
    pub path_count: usize,
    /// Number of samples averaged for ES.
    pub es_tail_count: usize,
    /// Fewer than [`MIN_TAIL_SAMPLES`] samples in the ES tail.
    pub es_unstable: bool,
}

fn check_confidence(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("ES confidence must lie in (0, 1), got {q}")))
    }
}

/// Number of worst samples averaged for ES at confidence `q`.
pub fn tail_count(n: usize, q: f64) -> usize {
    let raw = (1.0 - q) * n as f64;
    // absorb representation error such as 0.01 * 1e5 = 1000.0000000000001
    ((raw - 1e-9 * raw.max(1.0)).ceil() as usize).clamp(1, n)
}

impl RiskMetrics {
    pub fn from_losses(losses: &[f64], es_confidence: f64) -> Result<Self> {
        check_confidence(es_confidence)?;
        let n = losses.len();
        if n == 0 {
            return Err(Error::InvalidInput("no loss samples".into()));
        }
        let nf = n as f64;
        let el = losses.iter().sum::<f64>() / nf;
        let var = if n > 1 {
            losses.iter().map(|l| (l - el) * (l - el)).sum::<f64>() / (nf - 1.0)
        } else {
            0.0
        };
        let pd = losses.iter().filter(|&&l| l > 0.0).count() as f64 / nf;
        let m = tail_count(n, es_confidence);
        let mut sorted = losses.to_vec();
        sorted.sort_unstable_by(|a, b| b.total_cmp(a));
        let es = sorted[..m].iter().sum::<f64>() / m as f64;
        Ok(Self {
            el,
            el_stderr: (var / nf).sqrt(),
            pd_loss: pd,
            pd_stderr: (pd * (1.0 - pd) / nf).sqrt(),
            es,
            es_confidence,
            path_count: n,
            es_tail_count: m,
            es_unstable: m < MIN_TAIL_SAMPLES,
        })
    }

    pub fn value(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::ExpectedLoss => self.el,
            Criterion::DefaultProbability => self.pd_loss,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossDistribution {
    pub samples: Vec<LossSample>,
    pub path_count: usize,
    pub seed_descriptor: SeedDescriptor,
}

impl LossDistribution {
    pub fn losses(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.loss).collect()
    }

    pub fn metrics(&self, es_confidence: f64) -> Result<RiskMetrics> {
        RiskMetrics::from_losses(&self.losses(), es_confidence)
    }

    /// Writes `loss,defaulted,tau` rows; `tau` is empty for survivors.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["loss", "defaulted", "tau"])?;
        for s in &self.samples {
            let tau = s.default_time.map(|t| t.to_string()).unwrap_or_default();
            w.write_record([s.loss.to_string(), s.defaulted.to_string(), tau])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulated paths reduced to what the loss function needs, reusable across
/// haircut levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    scenarios: Vec<Scenario>,
    terms: LossTerms,
    mode: SimulationMode,
    seed: SeedDescriptor,
}

fn simulate<F>(sim: &SimulationSettings, path: F) -> Vec<Scenario>
where
    F: Fn(&mut PathStreams) -> Scenario + Sync,
{
    let batch = sim.batch_size.max(1);
    let chunks: Vec<Vec<Scenario>> = (0..sim.partition_count())
        .into_par_iter()
        .map(|part| {
            let start = part * batch;
            let end = (start + batch).min(sim.n_paths);
            (start..end)
                .map(|i| path(&mut PathStreams::new(sim.seed, i as u64)))
                .collect()
        })
        .collect();
    chunks.concat()
}

impl ScenarioSet {
    pub fn joint(
        dejd: &DejdParams,
        credit: &CreditParams,
        txn: &TransactionSpec,
        sim: &SimulationSettings,
    ) -> Result<Self> {
        dejd.validate()?;
        credit.validate()?;
        txn.validate()?;
        sim.check()?;
        let stepper = JointStepper::new(dejd, Some(credit), txn);
        Ok(Self {
            scenarios: simulate(sim, |s| stepper.joint(s, None)),
            terms: LossTerms::new(txn, credit.recovery),
            mode: SimulationMode::Joint,
            seed: SeedDescriptor {
                base_seed: sim.seed,
                partition_count: sim.partition_count(),
            },
        })
    }

    /// Borrower-independent set: certain default at time zero, zero recovery.
    pub fn independent(dejd: &DejdParams, txn: &TransactionSpec, sim: &SimulationSettings) -> Result<Self> {
        dejd.validate()?;
        txn.validate()?;
        sim.check()?;
        let stepper = JointStepper::new(dejd, None, txn);
        Ok(Self {
            scenarios: simulate(sim, |s| stepper.independent(s)),
            terms: LossTerms::new(txn, 0.0),
            mode: SimulationMode::Independent,
            seed: SeedDescriptor {
                base_seed: sim.seed,
                partition_count: sim.partition_count(),
            },
        })
    }

    pub fn simulate(
        mode: SimulationMode,
        dejd: &DejdParams,
        credit: &CreditParams,
        txn: &TransactionSpec,
        sim: &SimulationSettings,
    ) -> Result<Self> {
        match mode {
            SimulationMode::Joint => Self::joint(dejd, credit, txn, sim),
            SimulationMode::Independent => Self::independent(dejd, txn, sim),
        }
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn mode(&self) -> SimulationMode {
        self.mode
    }

    pub fn terms(&self) -> &LossTerms {
        &self.terms
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    /// Same paths, different recovery.
    pub fn with_recovery(&self, recovery: f64) -> Self {
        let mut out = self.clone();
        out.terms.recovery = recovery;
        out
    }

    pub fn losses(&self, haircut: f64) -> Vec<f64> {
        self.scenarios.iter().map(|s| self.terms.loss(haircut, s)).collect()
    }

    /// Mean loss; bit-identical to `metrics(haircut, _).el`.
    pub fn expected_loss(&self, haircut: f64) -> f64 {
        self.scenarios.iter().map(|s| self.terms.loss(haircut, s)).sum::<f64>() / self.len() as f64
    }

    pub fn loss_probability(&self, haircut: f64) -> f64 {
        let hits = self
            .scenarios
            .iter()
            .filter(|s| self.terms.loss(haircut, s) > 0.0)
            .count();
        hits as f64 / self.len() as f64
    }

    pub fn objective(&self, criterion: Criterion, haircut: f64) -> f64 {
        match criterion {
            Criterion::ExpectedLoss => self.expected_loss(haircut),
            Criterion::DefaultProbability => self.loss_probability(haircut),
        }
    }

    pub fn metrics(&self, haircut: f64, es_confidence: f64) -> Result<RiskMetrics> {
        RiskMetrics::from_losses(&self.losses(haircut), es_confidence)
    }

    pub fn distribution(&self, haircut: f64) -> LossDistribution {
        let samples = self
            .scenarios
            .iter()
            .map(|s| LossSample {
                loss: self.terms.loss(haircut, s),
                defaulted: s.default_time.is_some(),
                default_time: s.default_time,
            })
            .collect();
        LossDistribution {
            samples,
            path_count: self.len(),
            seed_descriptor: self.seed,
        }
    }
}

pub fn build_distribution_joint(
    dejd: &DejdParams,
    credit: &CreditParams,
    txn: &TransactionSpec,
    sim: &SimulationSettings,
) -> Result<LossDistribution> {
    Ok(ScenarioSet::joint(dejd, credit, txn, sim)?.distribution(txn.haircut))
}

pub fn build_distribution_independent(
    dejd: &DejdParams,
    txn: &TransactionSpec,
    sim: &SimulationSettings,
) -> Result<LossDistribution> {
    Ok(ScenarioSet::independent(dejd, txn, sim)?.distribution(txn.haircut))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndependentMethod {
    MonteCarlo(SimulationSettings),
    /// Integrates the payoff against the closed-form return density.
    Quadrature,
}

/// Borrower-independent metrics by either route.
pub fn independent_metrics(
    dejd: &DejdParams,
    txn: &TransactionSpec,
    method: IndependentMethod,
    es_confidence: f64,
) -> Result<RiskMetrics> {
    match method {
        IndependentMethod::MonteCarlo(sim) => ScenarioSet::independent(dejd, txn, &sim)?.metrics(txn.haircut, es_confidence),
        IndependentMethod::Quadrature => independent_metrics_quadrature(dejd, txn, es_confidence),
    }
}

const QUAD_TOL: f64 = 1e-14;

/// Borrower-independent EL, PD and ES by quadrature against the margin-period
/// return density. Standard errors are zero.
pub fn independent_metrics_quadrature(
    dejd: &DejdParams,
    txn: &TransactionSpec,
    es_confidence: f64,
) -> Result<RiskMetrics> {
    txn.validate()?;
    check_confidence(es_confidence)?;
    let density = MixtureDensity::new(dejd, txn.mpr_years(), DEFAULT_TAIL_TOLERANCE)?;
    let (lo, hi) = density.support(dejd.up_rate, dejd.down_rate);
    let g = txn.liquidity_spread;
    let h = txn.haircut;
    let pdf = |x: f64| density.pdf(x);

    // Mirror repo onto an upper-tail integral so one code path serves both.
    let (strike_log, payoff): (f64, Box<dyn Fn(f64) -> f64>) = match txn.side {
        Side::SecLending => {
            let k = (1.0 + h) / (1.0 + g);
            (k.ln(), Box::new(move |x: f64| (1.0 + g) * (x.exp() - k).max(0.0)))
        }
        Side::Repo => {
            let k = (1.0 - h) / (1.0 - g);
            (k.ln(), Box::new(move |x: f64| (1.0 - g) * (k - x.exp()).max(0.0)))
        }
    };
    // Tail integral of `f` over the loss region beyond `edge`.
    let region = |edge: f64, f: &dyn Fn(f64) -> f64| -> f64 {
        match txn.side {
            Side::SecLending => {
                let a = edge.max(lo);
                if a >= hi {
                    return 0.0;
                }
                numerics::integrate(|x| f(x) * pdf(x), &density.breakpoints(a, hi), QUAD_TOL)
            }
            Side::Repo => {
                let b = edge.min(hi);
                if b <= lo {
                    return 0.0;
                }
                numerics::integrate(|x| f(x) * pdf(x), &density.breakpoints(lo, b), QUAD_TOL)
            }
        }
    };
    let one = |_: f64| 1.0;
    let el = region(strike_log, &*payoff);
    let pd = region(strike_log, &one);
    let alpha = 1.0 - es_confidence;
    let es = if pd <= alpha {
        el / alpha
    } else {
        // Find the edge whose tail holds exactly `alpha` of the mass.
        let (mut inside, mut outside) = match txn.side {
            Side::SecLending => (strike_log.max(lo), hi),
            Side::Repo => (strike_log.min(hi), lo),
        };
        for _ in 0..80 {
            let mid = 0.5 * (inside + outside);
            if region(mid, &one) > alpha {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        region(0.5 * (inside + outside), &*payoff) / alpha
    };
    Ok(RiskMetrics {
        el,
        el_stderr: 0.0,
        pd_loss: pd,
        pd_stderr: 0.0,
        es,
        es_confidence,
        path_count: 0,
        es_tail_count: 0,
        es_unstable: false,
    })
}
