//! Pricing of borrower-default indemnification.
//!
//! The agent closes the gap between the transaction haircut and the triple-A
//! haircut with a capital reserve and a funded cash reserve. The charge is
//! the expected loss, plus cost of capital on ES, plus the funding spread on
//! whatever part of the gap the reserves do not already cover.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{RiskMetrics, ScenarioSet, SimulationMode, SimulationSettings, DEFAULT_ES_CONFIDENCE};
use crate::solver::{solve_on, triple_a_target, Grade, HaircutResult, SolverSettings};
use crate::types::{CreditParams, Criterion, DejdParams, IndemnitySheet, TransactionSpec};

pub const DEFAULT_COST_OF_CAPITAL: f64 = 0.15;
pub const DEFAULT_FUNDING_SPREAD: f64 = 0.01;
pub const BPS_PER_UNIT: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PricingSettings {
    #[serde(default = "default_cost_of_capital")]
    pub cost_of_capital: f64,
    #[serde(default = "default_funding_spread")]
    pub funding_spread: f64,
}

fn default_cost_of_capital() -> f64 {
    DEFAULT_COST_OF_CAPITAL
}

fn default_funding_spread() -> f64 {
    DEFAULT_FUNDING_SPREAD
}

impl Default for PricingSettings {
    fn default() -> Self {
        Self {
            cost_of_capital: DEFAULT_COST_OF_CAPITAL,
            funding_spread: DEFAULT_FUNDING_SPREAD,
        }
    }
}

/// Charge for one transaction from already computed inputs.
pub fn price_indemnity(
    transaction_haircut: f64,
    triple_a_haircut: f64,
    el: f64,
    es: f64,
    cost_of_capital: f64,
    funding_spread: f64,
) -> Result<IndemnitySheet> {
    for (name, v) in [
        ("transaction haircut", transaction_haircut),
        ("triple-A haircut", triple_a_haircut),
        ("el", el),
        ("es", es),
        ("cost of capital", cost_of_capital),
        ("funding spread", funding_spread),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidInput(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    if el > es {
        return Err(Error::InconsistentMetrics { el, es });
    }
    let gap = (triple_a_haircut - transaction_haircut).max(0.0);
    let mut sheet = IndemnitySheet {
        transaction_haircut,
        triple_a_haircut,
        gap,
        el,
        es,
        redundant_fund: 0.0,
        cost_of_capital,
        funding_spread,
        risk_charge: 0.0,
        capital_charge: 0.0,
        funding_charge: 0.0,
        total: 0.0,
        undercapitalized_gap: false,
    };
    if gap == 0.0 {
        return Ok(sheet);
    }
    let uncovered = gap - el - es;
    sheet.redundant_fund = uncovered.max(0.0);
    sheet.undercapitalized_gap = uncovered < 0.0;
    sheet.risk_charge = el;
    sheet.capital_charge = es * cost_of_capital;
    sheet.funding_charge = sheet.redundant_fund * funding_spread;
    sheet.total = sheet.risk_charge + sheet.capital_charge + sheet.funding_charge;
    Ok(sheet)
}

/// Sheet charges in basis points, for display and exchange.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SheetBps {
    pub transaction_haircut_bps: f64,
    pub triple_a_haircut_bps: f64,
    pub gap_bps: f64,
    pub el_bps: f64,
    pub es_bps: f64,
    pub redundant_fund_bps: f64,
    pub cost_of_capital: f64,
    pub funding_spread: f64,
    pub risk_charge_bps: f64,
    pub capital_charge_bps: f64,
    pub funding_charge_bps: f64,
    pub total_bps: f64,
    pub undercapitalized_gap: bool,
}

impl From<&IndemnitySheet> for SheetBps {
    fn from(s: &IndemnitySheet) -> Self {
        Self {
            transaction_haircut_bps: s.transaction_haircut * BPS_PER_UNIT,
            triple_a_haircut_bps: s.triple_a_haircut * BPS_PER_UNIT,
            gap_bps: s.gap * BPS_PER_UNIT,
            el_bps: s.el * BPS_PER_UNIT,
            es_bps: s.es * BPS_PER_UNIT,
            redundant_fund_bps: s.redundant_fund * BPS_PER_UNIT,
            cost_of_capital: s.cost_of_capital,
            funding_spread: s.funding_spread,
            risk_charge_bps: s.risk_charge * BPS_PER_UNIT,
            capital_charge_bps: s.capital_charge * BPS_PER_UNIT,
            funding_charge_bps: s.funding_charge * BPS_PER_UNIT,
            total_bps: s.total * BPS_PER_UNIT,
            undercapitalized_gap: s.undercapitalized_gap,
        }
    }
}

impl From<&SheetBps> for IndemnitySheet {
    fn from(b: &SheetBps) -> Self {
        Self {
            transaction_haircut: b.transaction_haircut_bps / BPS_PER_UNIT,
            triple_a_haircut: b.triple_a_haircut_bps / BPS_PER_UNIT,
            gap: b.gap_bps / BPS_PER_UNIT,
            el: b.el_bps / BPS_PER_UNIT,
            es: b.es_bps / BPS_PER_UNIT,
            redundant_fund: b.redundant_fund_bps / BPS_PER_UNIT,
            cost_of_capital: b.cost_of_capital,
            funding_spread: b.funding_spread,
            risk_charge: b.risk_charge_bps / BPS_PER_UNIT,
            capital_charge: b.capital_charge_bps / BPS_PER_UNIT,
            funding_charge: b.funding_charge_bps / BPS_PER_UNIT,
            total: b.total_bps / BPS_PER_UNIT,
            undercapitalized_gap: b.undercapitalized_gap,
        }
    }
}

/// Rows of the pricing sheet in display order, all as decimal fractions.
pub fn sheet_rows(sheet: &IndemnitySheet) -> Vec<(&'static str, f64)> {
    vec![
        ("margin", 1.0 + sheet.transaction_haircut),
        ("triple_a_haircut", sheet.triple_a_haircut),
        ("haircut_gap", sheet.gap),
        ("el", sheet.el),
        ("es", sheet.es),
        ("funding", sheet.redundant_fund),
        ("cost_of_capital", sheet.cost_of_capital),
        ("funding_cost", sheet.funding_spread),
        ("risk_charge", sheet.risk_charge),
        ("capital_charge", sheet.capital_charge),
        ("funding_charge", sheet.funding_charge),
        ("total", sheet.total),
    ]
}

pub fn write_sheet_csv<W: Write>(sheet: &IndemnitySheet, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["item", "value"])?;
    for (item, value) in sheet_rows(sheet) {
        w.write_record([item.to_string(), value.to_string()])?;
    }
    w.write_record(["undercapitalized_gap".to_string(), sheet.undercapitalized_gap.to_string()])?;
    w.flush()?;
    Ok(())
}

/// Human-readable sheet with percentages and charges in bps.
pub fn sheet_summary(sheet: &IndemnitySheet) -> String {
    let pct = |v: f64| format!("{:.4}%", v * 100.0);
    let bps = |v: f64| format!("{:.2}", v * BPS_PER_UNIT);
    let mut lines = vec![
        format!("margin              {}", pct(1.0 + sheet.transaction_haircut)),
        format!("triple-A haircut    {}", pct(sheet.triple_a_haircut)),
        format!("haircut gap         {}", pct(sheet.gap)),
        format!("EL                  {}", pct(sheet.el)),
        format!("ES                  {}", pct(sheet.es)),
        format!("funding             {}", pct(sheet.redundant_fund)),
        format!("cost of capital     {}", pct(sheet.cost_of_capital)),
        format!("funding cost        {}", pct(sheet.funding_spread)),
        format!("risk chrg (bps)     {}", bps(sheet.risk_charge)),
        format!("capital chrg (bps)  {}", bps(sheet.capital_charge)),
        format!("funding chrg (bps)  {}", bps(sheet.funding_charge)),
        format!("total (bps)         {}", bps(sheet.total)),
    ];
    if sheet.undercapitalized_gap {
        lines.push("warning: EL + ES exceed the haircut gap; funding charge floored at zero".into());
    }
    lines.join("\n")
}

/// Everything a simulated pricing run needs besides the market inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingContext {
    pub sim: SimulationSettings,
    pub es_confidence: f64,
    pub solver: SolverSettings,
    pub pricing: PricingSettings,
    pub mode: SimulationMode,
    /// Triple-A threshold for the default-probability criterion.
    pub pd_triple_a: Option<f64>,
}

impl PricingContext {
    pub fn new(sim: SimulationSettings) -> Self {
        Self {
            sim,
            es_confidence: DEFAULT_ES_CONFIDENCE,
            solver: SolverSettings::default(),
            pricing: PricingSettings::default(),
            mode: SimulationMode::Joint,
            pd_triple_a: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingOutcome {
    pub sheet: IndemnitySheet,
    pub triple_a: HaircutResult,
    pub metrics: RiskMetrics,
}

/// Prices on an existing path set, so several haircuts share the same paths.
pub fn price_on(
    set: &ScenarioSet,
    transaction_haircut: f64,
    criterion: Criterion,
    ctx: &PricingContext,
) -> Result<PricingOutcome> {
    let target = triple_a_target(criterion, ctx.pd_triple_a)?;
    let triple_a = solve_on(set, &target, &ctx.solver)?;
    price_with_triple_a(set, transaction_haircut, triple_a, ctx)
}

fn price_with_triple_a(
    set: &ScenarioSet,
    transaction_haircut: f64,
    triple_a: HaircutResult,
    ctx: &PricingContext,
) -> Result<PricingOutcome> {
    let metrics = set.metrics(transaction_haircut, ctx.es_confidence)?;
    let sheet = price_indemnity(
        transaction_haircut,
        triple_a.haircut,
        metrics.el,
        metrics.es,
        ctx.pricing.cost_of_capital,
        ctx.pricing.funding_spread,
    )?;
    Ok(PricingOutcome {
        sheet,
        triple_a,
        metrics,
    })
}

/// Simulates, solves the triple-A haircut, and prices the transaction's gap.
pub fn pricing_sheet(
    dejd: &DejdParams,
    credit: &CreditParams,
    txn: &TransactionSpec,
    criterion: Criterion,
    ctx: &PricingContext,
) -> Result<PricingOutcome> {
    let set = ScenarioSet::simulate(ctx.mode, dejd, credit, txn, &ctx.sim)?;
    price_on(&set, txn.haircut, criterion, ctx)
}

#[derive(Debug)]
pub struct ScenarioCell {
    pub criterion: Criterion,
    pub borrower: String,
    pub mpr_days: u32,
    pub haircut: f64,
    pub outcome: Result<PricingOutcome>,
}

/// Cross product of criteria, borrowers, margin periods and haircuts.
#[derive(Debug)]
pub struct ScenarioGrid {
    pub criteria: Vec<Criterion>,
    pub borrowers: Vec<String>,
    pub mprs: Vec<u32>,
    pub haircuts: Vec<f64>,
    /// Ordered by criterion, borrower, MPR, haircut (haircut fastest).
    pub cells: Vec<ScenarioCell>,
}

pub fn scenario_grid(
    dejd: &DejdParams,
    haircuts: &[f64],
    borrowers: &[Grade],
    criteria: &[Criterion],
    mprs: &[u32],
    txn: &TransactionSpec,
    ctx: &PricingContext,
) -> Result<ScenarioGrid> {
    if haircuts.is_empty() || borrowers.is_empty() || criteria.is_empty() || mprs.is_empty() {
        return Err(Error::InvalidInput("every scenario axis needs at least one entry".into()));
    }
    let blocks: Vec<(Criterion, &Grade, u32)> = criteria
        .iter()
        .flat_map(|&c| borrowers.iter().flat_map(move |b| mprs.iter().map(move |&m| (c, b, m))))
        .collect();
    let cells = blocks
        .par_iter()
        .map(|&(criterion, grade, mpr)| {
            let spec = txn.with_mpr_days(mpr);
            let block = |haircut: f64, outcome: Result<PricingOutcome>| ScenarioCell {
                criterion,
                borrower: grade.label.clone(),
                mpr_days: mpr,
                haircut,
                outcome,
            };
            let solved = ScenarioSet::simulate(ctx.mode, dejd, &grade.credit, &spec, &ctx.sim).and_then(|set| {
                let target = triple_a_target(criterion, ctx.pd_triple_a)?;
                let triple_a = solve_on(&set, &target, &ctx.solver)?;
                Ok((set, triple_a))
            });
            match solved {
                Ok((set, triple_a)) => haircuts
                    .iter()
                    .map(|&h| block(h, price_with_triple_a(&set, h, triple_a.clone(), ctx)))
                    .collect::<Vec<_>>(),
                Err(e) => {
                    let message = e.to_string();
                    let mut first = Some(e);
                    haircuts
                        .iter()
                        .map(|&h| {
                            let err = match (first.take(), &message) {
                                (Some(e), _) => e,
                                (None, m) => Error::InvalidInput(m.clone()),
                            };
                            block(h, Err(err))
                        })
                        .collect()
                }
            }
        })
        .flatten()
        .collect();
    Ok(ScenarioGrid {
        criteria: criteria.to_vec(),
        borrowers: borrowers.iter().map(|b| b.label.clone()).collect(),
        mprs: mprs.to_vec(),
        haircuts: haircuts.to_vec(),
        cells,
    })
}

pub fn criterion_label(c: Criterion) -> &'static str {
    match c {
        Criterion::ExpectedLoss => "expected_loss",
        Criterion::DefaultProbability => "default_probability",
    }
}

impl ScenarioGrid {
    pub fn cell(&self, criterion: usize, borrower: usize, mpr: usize, haircut: usize) -> &ScenarioCell {
        let index = ((criterion * self.borrowers.len() + borrower) * self.mprs.len() + mpr) * self.haircuts.len() + haircut;
        &self.cells[index]
    }

    pub fn total(&self, criterion: usize, borrower: usize, mpr: usize, haircut: usize) -> Option<f64> {
        self.cell(criterion, borrower, mpr, haircut)
            .outcome
            .as_ref()
            .ok()
            .map(|o| o.sheet.total)
    }

    pub fn first_error(&self) -> Option<&Error> {
        self.cells.iter().find_map(|c| c.outcome.as_ref().err())
    }

    /// Totals must not rise with the haircut, and must not fall for a later
    /// borrower or a longer MPR.
    pub fn monotonicity_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let (nc, nb, nm, nh) = (self.criteria.len(), self.borrowers.len(), self.mprs.len(), self.haircuts.len());
        let name = |c: usize, b: usize, m: usize, h: usize| {
            format!(
                "{}/{}/{}d/{}",
                criterion_label(self.criteria[c]),
                self.borrowers[b],
                self.mprs[m],
                self.haircuts[h]
            )
        };
        for c in 0..nc {
            for b in 0..nb {
                for m in 0..nm {
                    for h in 0..nh {
                        let Some(v) = self.total(c, b, m, h) else { continue };
                        if h > 0 && self.haircuts[h] >= self.haircuts[h - 1] {
                            if let Some(prev) = self.total(c, b, m, h - 1) {
                                if v > prev {
                                    out.push(format!("{} exceeds the lower-haircut total {prev}", name(c, b, m, h)));
                                }
                            }
                        }
                        if b > 0 {
                            if let Some(prev) = self.total(c, b - 1, m, h) {
                                if v < prev {
                                    out.push(format!("{} is below the better borrower's total {prev}", name(c, b, m, h)));
                                }
                            }
                        }
                        if m > 0 && self.mprs[m] >= self.mprs[m - 1] {
                            if let Some(prev) = self.total(c, b, m - 1, h) {
                                if v < prev {
                                    out.push(format!("{} is below the shorter-MPR total {prev}", name(c, b, m, h)));
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// One row per criterion and borrower, one column per MPR and haircut.
    /// Totals are decimal fractions.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["criterion".to_string(), "borrower".to_string()];
        for m in &self.mprs {
            for h in &self.haircuts {
                header.push(format!("mpr{m}d_h{h}"));
            }
        }
        w.write_record(&header)?;
        for c in 0..self.criteria.len() {
            for b in 0..self.borrowers.len() {
                let mut record = vec![criterion_label(self.criteria[c]).to_string(), self.borrowers[b].clone()];
                for m in 0..self.mprs.len() {
                    for h in 0..self.haircuts.len() {
                        record.push(match &self.cell(c, b, m, h).outcome {
                            Ok(o) => o.sheet.total.to_string(),
                            Err(Error::TargetUnreachable { .. }) => "unreachable".into(),
                            Err(_) => "error".into(),
                        });
                    }
                }
                w.write_record(&record)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
