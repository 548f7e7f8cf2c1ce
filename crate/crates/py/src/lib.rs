//! Python bindings.
//!
//! Parameter sets are small mutable classes; results come back as plain
//! dictionaries built from the core crate's serialized form.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

use seclend_core::calibration::{self, CreditOverrides, FitBounds, FitOptions, ReturnSeries};
use seclend_core::error::Error;
use seclend_core::indemnity::{self, PricingContext};
use seclend_core::loss::{self, IndependentMethod, SimulationMode, SimulationSettings};
use seclend_core::solver::{self, Grade, SolverSettings};
use seclend_core::types::{self as core, Criterion, RatingTarget, Side, Validate};

create_exception!(seclend, SeclendError, PyException);
create_exception!(seclend, TargetUnreachableError, SeclendError);
create_exception!(seclend, NoConvergenceError, SeclendError);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::TargetUnreachable { .. } => TargetUnreachableError::new_err(e.to_string()),
        Error::NoConvergence { .. } => NoConvergenceError::new_err(e.to_string()),
        _ => SeclendError::new_err(e.to_string()),
    }
}

fn to_dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| SeclendError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn criterion(name: &str) -> PyResult<Criterion> {
    match name {
        "expected_loss" | "el" => Ok(Criterion::ExpectedLoss),
        "default_probability" | "pd" => Ok(Criterion::DefaultProbability),
        other => Err(SeclendError::new_err(format!("unknown criterion `{other}`"))),
    }
}

fn target(label: &str, threshold: Option<f64>, criterion_name: &str) -> PyResult<RatingTarget> {
    let c = criterion(criterion_name)?;
    match threshold {
        Some(t) => RatingTarget::new(c, t, label).map_err(|e| py_err(e.into())),
        None if c == Criterion::ExpectedLoss => RatingTarget::moodys(label)
            .ok_or_else(|| SeclendError::new_err(format!("no built-in threshold for `{label}`"))),
        None => Err(SeclendError::new_err("default-probability targets need a threshold")),
    }
}

#[pyclass(name = "DejdParams", module = "seclend", skip_from_py_object)]
#[derive(Clone, Copy)]
pub struct PyDejd {
    #[pyo3(get, set)]
    drift: f64,
    #[pyo3(get, set)]
    diffusion_vol: f64,
    #[pyo3(get, set)]
    jump_intensity: f64,
    #[pyo3(get, set)]
    up_prob: f64,
    #[pyo3(get, set)]
    up_rate: f64,
    #[pyo3(get, set)]
    down_rate: f64,
}

impl PyDejd {
    fn core(&self) -> PyResult<core::DejdParams> {
        let p = core::DejdParams {
            drift: self.drift,
            diffusion_vol: self.diffusion_vol,
            jump_intensity: self.jump_intensity,
            up_prob: self.up_prob,
            up_rate: self.up_rate,
            down_rate: self.down_rate,
        };
        p.validate().map_err(|e| py_err(e.into()))?;
        Ok(p)
    }

    fn wrap(p: core::DejdParams) -> Self {
        Self {
            drift: p.drift,
            diffusion_vol: p.diffusion_vol,
            jump_intensity: p.jump_intensity,
            up_prob: p.up_prob,
            up_rate: p.up_rate,
            down_rate: p.down_rate,
        }
    }
}

#[pymethods]
impl PyDejd {
    #[new]
    #[pyo3(signature = (drift, diffusion_vol, jump_intensity, up_prob, up_rate, down_rate))]
    fn new(drift: f64, diffusion_vol: f64, jump_intensity: f64, up_prob: f64, up_rate: f64, down_rate: f64) -> PyResult<Self> {
        let p = Self {
            drift,
            diffusion_vol,
            jump_intensity,
            up_prob,
            up_rate,
            down_rate,
        };
        p.core()?;
        Ok(p)
    }

    /// Yearly drift contributed by jumps.
    fn jump_drift(&self) -> PyResult<f64> {
        Ok(self.core()?.jump_drift())
    }

    fn as_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &self.core()?)
    }

    fn __repr__(&self) -> String {
        format!(
            "DejdParams(drift={}, diffusion_vol={}, jump_intensity={}, up_prob={}, up_rate={}, down_rate={})",
            self.drift, self.diffusion_vol, self.jump_intensity, self.up_prob, self.up_rate, self.down_rate
        )
    }
}

#[pyclass(name = "CreditParams", module = "seclend", skip_from_py_object)]
#[derive(Clone, Copy)]
pub struct PyCredit {
    #[pyo3(get, set)]
    mean_reversion: f64,
    #[pyo3(get, set)]
    mean_level: f64,
    #[pyo3(get, set)]
    spread_vol: f64,
    #[pyo3(get, set)]
    initial_log_intensity: f64,
    #[pyo3(get, set)]
    recovery: f64,
    #[pyo3(get, set)]
    correlation: f64,
}

impl PyCredit {
    fn core(&self) -> PyResult<core::CreditParams> {
        let p = core::CreditParams {
            mean_reversion: self.mean_reversion,
            mean_level: self.mean_level,
            spread_vol: self.spread_vol,
            initial_log_intensity: self.initial_log_intensity,
            recovery: self.recovery,
            correlation: self.correlation,
        };
        p.validate().map_err(|e| py_err(e.into()))?;
        Ok(p)
    }

    fn wrap(p: core::CreditParams) -> Self {
        Self {
            mean_reversion: p.mean_reversion,
            mean_level: p.mean_level,
            spread_vol: p.spread_vol,
            initial_log_intensity: p.initial_log_intensity,
            recovery: p.recovery,
            correlation: p.correlation,
        }
    }
}

#[pymethods]
impl PyCredit {
    #[new]
    #[pyo3(signature = (mean_reversion, mean_level, spread_vol, initial_log_intensity, recovery, correlation=0.0))]
    fn new(
        mean_reversion: f64,
        mean_level: f64,
        spread_vol: f64,
        initial_log_intensity: f64,
        recovery: f64,
        correlation: f64,
    ) -> PyResult<Self> {
        let p = Self {
            mean_reversion,
            mean_level,
            spread_vol,
            initial_log_intensity,
            recovery,
            correlation,
        };
        p.core()?;
        Ok(p)
    }

    /// Credit-triangle mapping from a CDS quote; defaulted fields are listed in `assumed`.
    #[staticmethod]
    #[pyo3(signature = (spread_bps, recovery, mean_reversion=None, spread_vol=None, correlation=None))]
    fn from_cds(
        spread_bps: f64,
        recovery: f64,
        mean_reversion: Option<f64>,
        spread_vol: Option<f64>,
        correlation: Option<f64>,
    ) -> PyResult<(Self, Vec<String>)> {
        let overrides = CreditOverrides {
            mean_reversion,
            spread_vol,
            correlation,
            ..Default::default()
        };
        let fit = calibration::cds_to_credit(spread_bps, recovery, &overrides).map_err(py_err)?;
        Ok((Self::wrap(fit.params), fit.assumed))
    }

    fn mean_intensity(&self) -> f64 {
        self.mean_level.exp()
    }

    fn __repr__(&self) -> String {
        format!(
            "CreditParams(mean_reversion={}, mean_level={}, spread_vol={}, initial_log_intensity={}, recovery={}, correlation={})",
            self.mean_reversion, self.mean_level, self.spread_vol, self.initial_log_intensity, self.recovery, self.correlation
        )
    }
}

#[pyclass(name = "Transaction", module = "seclend", skip_from_py_object)]
#[derive(Clone, Copy)]
pub struct PyTransaction {
    #[pyo3(get, set)]
    haircut: f64,
    #[pyo3(get, set)]
    liquidity_spread: f64,
    #[pyo3(get, set)]
    mpr_days: u32,
    repo: bool,
}

impl PyTransaction {
    fn core(&self) -> PyResult<core::TransactionSpec> {
        let mut t = core::TransactionSpec::sec_lending(self.haircut, self.liquidity_spread, self.mpr_days);
        if self.repo {
            t.side = Side::Repo;
        }
        t.validate().map_err(|e| py_err(e.into()))?;
        Ok(t)
    }
}

#[pymethods]
impl PyTransaction {
    #[new]
    #[pyo3(signature = (haircut, liquidity_spread, mpr_days, side="sec_lending"))]
    fn new(haircut: f64, liquidity_spread: f64, mpr_days: u32, side: &str) -> PyResult<Self> {
        let repo = match side {
            "sec_lending" => false,
            "repo" => true,
            other => return Err(SeclendError::new_err(format!("side must be `sec_lending` or `repo`, got `{other}`"))),
        };
        let t = Self {
            haircut,
            liquidity_spread,
            mpr_days,
            repo,
        };
        t.core()?;
        Ok(t)
    }

    #[getter]
    fn side(&self) -> &'static str {
        if self.repo {
            "repo"
        } else {
            "sec_lending"
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "Transaction(haircut={}, liquidity_spread={}, mpr_days={}, side='{}')",
            self.haircut,
            self.liquidity_spread,
            self.mpr_days,
            self.side()
        )
    }
}

/// Simulated path set; every haircut is revalued on the same paths.
#[pyclass(name = "ScenarioSet", module = "seclend", frozen)]
pub struct PyScenarioSet {
    inner: loss::ScenarioSet,
}

#[pymethods]
impl PyScenarioSet {
    /// Joint simulation when `credit` is given, borrower-independent otherwise.
    #[new]
    #[pyo3(signature = (dejd, transaction, n_paths, seed, credit=None))]
    fn new(
        py: Python<'_>,
        dejd: PyRef<'_, PyDejd>,
        transaction: PyRef<'_, PyTransaction>,
        n_paths: usize,
        seed: u64,
        credit: Option<PyRef<'_, PyCredit>>,
    ) -> PyResult<Self> {
        let dejd = dejd.core()?;
        let txn = transaction.core()?;
        let credit = credit.map(|c| c.core()).transpose()?;
        let sim = SimulationSettings::new(n_paths, seed);
        let inner = py
            .detach(|| match credit {
                Some(c) => loss::ScenarioSet::joint(&dejd, &c, &txn, &sim),
                None => loss::ScenarioSet::independent(&dejd, &txn, &sim),
            })
            .map_err(py_err)?;
        Ok(Self { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn losses(&self, haircut: f64) -> Vec<f64> {
        self.inner.losses(haircut)
    }

    fn expected_loss(&self, haircut: f64) -> f64 {
        self.inner.expected_loss(haircut)
    }

    fn loss_probability(&self, haircut: f64) -> f64 {
        self.inner.loss_probability(haircut)
    }

    #[pyo3(signature = (haircut, es_confidence=loss::DEFAULT_ES_CONFIDENCE))]
    fn metrics<'py>(&self, py: Python<'py>, haircut: f64, es_confidence: f64) -> PyResult<Bound<'py, PyAny>> {
        let m = self.inner.metrics(haircut, es_confidence).map_err(py_err)?;
        to_dict(py, &m)
    }

    /// Smallest haircut meeting a rating target on these paths.
    #[pyo3(signature = (label="Aaa", threshold=None, criterion="expected_loss", resolution=solver::DEFAULT_RESOLUTION))]
    fn solve<'py>(
        &self,
        py: Python<'py>,
        label: &str,
        threshold: Option<f64>,
        criterion: &str,
        resolution: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let target = target(label, threshold, criterion)?;
        let settings = SolverSettings {
            resolution,
            ..Default::default()
        };
        let result = py.detach(|| solver::solve_on(&self.inner, &target, &settings)).map_err(py_err)?;
        to_dict(py, &result)
    }
}

/// Indemnity charges from injected risk numbers, all as fractions.
#[pyfunction]
#[pyo3(signature = (transaction_haircut, triple_a_haircut, el, es, cost_of_capital=indemnity::DEFAULT_COST_OF_CAPITAL, funding_spread=indemnity::DEFAULT_FUNDING_SPREAD))]
fn price_indemnity<'py>(
    py: Python<'py>,
    transaction_haircut: f64,
    triple_a_haircut: f64,
    el: f64,
    es: f64,
    cost_of_capital: f64,
    funding_spread: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let sheet = indemnity::price_indemnity(transaction_haircut, triple_a_haircut, el, es, cost_of_capital, funding_spread)
        .map_err(py_err)?;
    to_dict(py, &sheet)
}

/// Borrower-independent metrics; quadrature unless `n_paths` is given.
#[pyfunction]
#[pyo3(signature = (dejd, transaction, n_paths=None, seed=0, es_confidence=loss::DEFAULT_ES_CONFIDENCE))]
fn independent_metrics<'py>(
    py: Python<'py>,
    dejd: PyRef<'py, PyDejd>,
    transaction: PyRef<'py, PyTransaction>,
    n_paths: Option<usize>,
    seed: u64,
    es_confidence: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let dejd = dejd.core()?;
    let txn = transaction.core()?;
    let method = match n_paths {
        Some(n) => IndependentMethod::MonteCarlo(SimulationSettings::new(n, seed)),
        None => IndependentMethod::Quadrature,
    };
    let m = py
        .detach(|| loss::independent_metrics(&dejd, &txn, method, es_confidence))
        .map_err(py_err)?;
    to_dict(py, &m)
}

/// Simulates, solves the triple-A haircut and prices the transaction.
#[pyfunction]
#[pyo3(signature = (dejd, credit, transaction, n_paths, seed, criterion="expected_loss", pd_threshold=None))]
#[allow(clippy::too_many_arguments)]
fn pricing_sheet<'py>(
    py: Python<'py>,
    dejd: PyRef<'py, PyDejd>,
    credit: PyRef<'py, PyCredit>,
    transaction: PyRef<'py, PyTransaction>,
    n_paths: usize,
    seed: u64,
    criterion: &str,
    pd_threshold: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let dejd = dejd.core()?;
    let credit = credit.core()?;
    let txn = transaction.core()?;
    let c = self::criterion(criterion)?;
    let mut ctx = PricingContext::new(SimulationSettings::new(n_paths, seed));
    ctx.pd_triple_a = pd_threshold;
    let outcome = py
        .detach(|| indemnity::pricing_sheet(&dejd, &credit, &txn, c, &ctx))
        .map_err(py_err)?;
    to_dict(py, &outcome)
}

/// Grade-by-target haircut grid. `grades` is a list of `(label, CreditParams)`
/// ordered from best to worst; `targets` a list of `(label, threshold)` with
/// `None` selecting the built-in threshold. Unreachable cells are `None`.
#[pyfunction]
#[pyo3(signature = (dejd, grades, targets, transaction, n_paths, seed))]
fn haircut_schedule(
    py: Python<'_>,
    dejd: PyRef<'_, PyDejd>,
    grades: Vec<(String, PyRef<'_, PyCredit>)>,
    targets: Vec<(String, Option<f64>)>,
    transaction: PyRef<'_, PyTransaction>,
    n_paths: usize,
    seed: u64,
) -> PyResult<Vec<Vec<Option<f64>>>> {
    let dejd = dejd.core()?;
    let txn = transaction.core()?;
    let grades = grades
        .into_iter()
        .map(|(label, c)| Ok(Grade { label, credit: c.core()? }))
        .collect::<PyResult<Vec<_>>>()?;
    let targets = targets
        .iter()
        .map(|(label, t)| target(label, *t, "expected_loss"))
        .collect::<PyResult<Vec<_>>>()?;
    let sim = SimulationSettings::new(n_paths, seed);
    let schedule = py
        .detach(|| solver::haircut_schedule(&dejd, &grades, &targets, &txn, &sim, SimulationMode::Joint, &SolverSettings::default()))
        .map_err(py_err)?;
    let mut rows = Vec::with_capacity(schedule.cells.len());
    for row in schedule.cells {
        let mut out = Vec::with_capacity(row.len());
        for cell in row {
            match cell {
                Ok(r) => out.push(Some(r.haircut)),
                Err(Error::TargetUnreachable { .. }) => out.push(None),
                Err(e) => return Err(py_err(e)),
            }
        }
        rows.push(out);
    }
    Ok(rows)
}

/// Log-likelihood of daily log returns.
#[pyfunction]
fn log_likelihood(returns: Vec<f64>, dejd: PyRef<'_, PyDejd>) -> PyResult<f64> {
    let series = ReturnSeries::from_returns(returns, "python");
    calibration::log_likelihood(&series, &dejd.core()?).map_err(py_err)
}

/// Maximum-likelihood fit to daily log returns; returns the parameters and the full report.
#[pyfunction]
#[pyo3(signature = (returns, init=None, zero_drift=false))]
fn fit_dejd<'py>(
    py: Python<'py>,
    returns: Vec<f64>,
    init: Option<PyRef<'py, PyDejd>>,
    zero_drift: bool,
) -> PyResult<(PyDejd, Bound<'py, PyAny>)> {
    let init = match init {
        Some(p) => p.core()?,
        None => core::DejdParams {
            drift: 0.0,
            diffusion_vol: 0.2,
            jump_intensity: 10.0,
            up_prob: 0.5,
            up_rate: 40.0,
            down_rate: 40.0,
        },
    };
    let series = ReturnSeries::from_returns(returns, "python");
    let options = FitOptions {
        zero_drift,
        ..Default::default()
    };
    let report = py
        .detach(|| calibration::fit_dejd(&series, &init, &FitBounds::default(), &options))
        .map_err(py_err)?;
    Ok((PyDejd::wrap(report.params), to_dict(py, &report)?))
}

#[pymodule]
fn seclend(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("SeclendError", py.get_type::<SeclendError>())?;
    m.add("TargetUnreachableError", py.get_type::<TargetUnreachableError>())?;
    m.add("NoConvergenceError", py.get_type::<NoConvergenceError>())?;
    m.add("DAY", core::DAY)?;
    m.add_class::<PyDejd>()?;
    m.add_class::<PyCredit>()?;
    m.add_class::<PyTransaction>()?;
    m.add_class::<PyScenarioSet>()?;
    m.add_function(wrap_pyfunction!(price_indemnity, m)?)?;
    m.add_function(wrap_pyfunction!(independent_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(pricing_sheet, m)?)?;
    m.add_function(wrap_pyfunction!(haircut_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(log_likelihood, m)?)?;
    m.add_function(wrap_pyfunction!(fit_dejd, m)?)?;
    Ok(())
}
