//! Minimal haircuts meeting a rating target.
//!
//! Haircuts live on the integer grid `h = i * resolution`. On a common
//! random-number objective, bisection over grid indices returns exactly the
//! smallest feasible grid point, i.e. the same answer as a full grid scan.

use std::cell::RefCell;
use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{ScenarioSet, SimulationMode, SimulationSettings};
use crate::types::{CreditParams, Criterion, DejdParams, RatingTarget, Side, TransactionSpec, Validate};

/// One basis point of margin.
pub const DEFAULT_RESOLUTION: f64 = 1e-4;

pub fn default_h_max(side: Side) -> f64 {
    match side {
        Side::SecLending => 1.0,
        Side::Repo => 0.99,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    /// Upper end of the search; side-dependent default when absent.
    #[serde(default)]
    pub h_max: Option<f64>,
}

fn default_resolution() -> f64 {
    DEFAULT_RESOLUTION
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            h_max: None,
        }
    }
}

impl SolverSettings {
    pub fn h_max_for(&self, side: Side) -> f64 {
        self.h_max.unwrap_or_else(|| default_h_max(side))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaircutResult {
    pub haircut: f64,
    /// Objective value at `haircut`.
    pub achieved_metric: f64,
    pub target: RatingTarget,
    /// Final bisection interval; the lower end is infeasible unless both are 0.
    pub bracket: (f64, f64),
    pub mode: SimulationMode,
    pub evaluations: usize,
}

/// Number of grid steps covering `[0, h_max]`.
fn grid_steps(h_max: f64, resolution: f64) -> Result<usize> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::InvalidInput(format!("resolution must be > 0, got {resolution}")));
    }
    if !(h_max >= 0.0 && h_max.is_finite()) {
        return Err(Error::InvalidInput(format!("h_max must be >= 0, got {h_max}")));
    }
    Ok((h_max / resolution + 1e-9).floor() as usize)
}

/// Smallest grid haircut whose objective meets `target`.
///
/// `objective` must be nonincreasing in the haircut for the result to be the
/// infimum; it is evaluated at most once per grid point.
pub fn solve_haircut<F>(
    objective: F,
    target: &RatingTarget,
    resolution: f64,
    h_max: f64,
    mode: SimulationMode,
) -> Result<HaircutResult>
where
    F: Fn(f64) -> f64,
{
    target.validate()?;
    let steps = grid_steps(h_max, resolution)?;
    let cache = RefCell::new(HashMap::new());
    let eval = |i: usize| -> f64 {
        *cache
            .borrow_mut()
            .entry(i)
            .or_insert_with(|| objective(i as f64 * resolution))
    };
    let threshold = target.threshold;
    let done = |lo: usize, hi: usize, value: f64| HaircutResult {
        haircut: hi as f64 * resolution,
        achieved_metric: value,
        target: target.clone(),
        bracket: (lo as f64 * resolution, hi as f64 * resolution),
        mode,
        evaluations: cache.borrow().len(),
    };

    let at_zero = eval(0);
    if at_zero <= threshold {
        return Ok(done(0, 0, at_zero));
    }
    let at_top = eval(steps);
    if at_top > threshold {
        return Err(Error::TargetUnreachable {
            label: target.label.clone(),
            h_max: steps as f64 * resolution,
            achieved: at_top,
            threshold,
        });
    }
    let (mut lo, mut hi) = (0usize, steps);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if eval(mid) <= threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let value = eval(hi);
    Ok(done(lo, hi, value))
}

/// Exhaustive scan of the same grid; the reference for [`solve_haircut`].
pub fn grid_search<F>(objective: F, threshold: f64, resolution: f64, h_max: f64) -> Result<Option<f64>>
where
    F: Fn(f64) -> f64,
{
    let steps = grid_steps(h_max, resolution)?;
    Ok((0..=steps)
        .map(|i| i as f64 * resolution)
        .find(|&h| objective(h) <= threshold))
}

/// Solves on a prebuilt common-random-number path set.
pub fn solve_on(set: &ScenarioSet, target: &RatingTarget, settings: &SolverSettings) -> Result<HaircutResult> {
    let criterion = target.criterion;
    solve_haircut(
        |h| set.objective(criterion, h),
        target,
        settings.resolution,
        settings.h_max_for(set.terms().side),
        set.mode(),
    )
}

/// Triple-A target for a criterion: Moody's Aaa for EL, the configured value for PD.
pub fn triple_a_target(criterion: Criterion, pd_threshold: Option<f64>) -> Result<RatingTarget> {
    match criterion {
        Criterion::ExpectedLoss => Ok(RatingTarget::moodys_aaa()),
        Criterion::DefaultProbability => {
            let threshold = pd_threshold.ok_or(Error::MissingPdThreshold)?;
            Ok(RatingTarget::new(Criterion::DefaultProbability, threshold, "AAA")?)
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn triple_a_haircut(
    dejd: &DejdParams,
    credit: &CreditParams,
    txn: &TransactionSpec,
    criterion: Criterion,
    pd_threshold: Option<f64>,
    sim: &SimulationSettings,
    mode: SimulationMode,
    settings: &SolverSettings,
) -> Result<HaircutResult> {
    let target = triple_a_target(criterion, pd_threshold)?;
    let set = ScenarioSet::simulate(mode, dejd, credit, txn, sim)?;
    solve_on(&set, &target, settings)
}

/// Solves with a fresh path set for every evaluation.
///
/// The objective is then only statistically monotone, so the result carries
/// Monte Carlo noise in the haircut itself. Provided for comparison.
#[allow(clippy::too_many_arguments)]
pub fn solve_fresh_paths(
    dejd: &DejdParams,
    credit: &CreditParams,
    txn: &TransactionSpec,
    target: &RatingTarget,
    sim: &SimulationSettings,
    mode: SimulationMode,
    settings: &SolverSettings,
) -> Result<HaircutResult> {
    let failure = RefCell::new(None);
    let resolution = settings.resolution;
    let result = solve_haircut(
        |h| {
            let index = (h / resolution).round() as u64;
            let fresh = SimulationSettings {
                seed: sim.seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15),
                ..*sim
            };
            match ScenarioSet::simulate(mode, dejd, credit, txn, &fresh) {
                Ok(set) => set.objective(target.criterion, h),
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            }
        },
        target,
        resolution,
        settings.h_max_for(txn.side),
        mode,
    );
    match failure.into_inner() {
        Some(e) => Err(e),
        None => result,
    }
}

/// A named borrower credit profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grade {
    pub label: String,
    pub credit: CreditParams,
}

/// Grade-by-target grid of solved haircuts.
#[derive(Debug)]
pub struct HaircutSchedule {
    pub grades: Vec<String>,
    pub targets: Vec<RatingTarget>,
    /// `cells[grade][target]`
    pub cells: Vec<Vec<Result<HaircutResult>>>,
}

pub fn haircut_schedule(
    dejd: &DejdParams,
    grades: &[Grade],
    targets: &[RatingTarget],
    txn: &TransactionSpec,
    sim: &SimulationSettings,
    mode: SimulationMode,
    settings: &SolverSettings,
) -> Result<HaircutSchedule> {
    if grades.is_empty() || targets.is_empty() {
        return Err(Error::InvalidInput("schedule needs at least one grade and one target".into()));
    }
    for pair in grades.windows(2) {
        if pair[1].credit.mean_intensity() < pair[0].credit.mean_intensity() {
            return Err(Error::InvalidInput(format!(
                "grades must be ordered by worsening credit: {} has a lower mean intensity than {}",
                pair[1].label, pair[0].label
            )));
        }
    }
    for t in targets {
        t.validate()?;
    }
    let cells = grades
        .par_iter()
        .map(|grade| match ScenarioSet::simulate(mode, dejd, &grade.credit, txn, sim) {
            Ok(set) => targets.iter().map(|t| solve_on(&set, t, settings)).collect(),
            Err(e) => {
                let message = e.to_string();
                let mut row = vec![Err(e)];
                row.extend((1..targets.len()).map(|_| Err(Error::InvalidInput(message.clone()))));
                row
            }
        })
        .collect();
    Ok(HaircutSchedule {
        grades: grades.iter().map(|g| g.label.clone()).collect(),
        targets: targets.to_vec(),
        cells,
    })
}

impl HaircutSchedule {
    pub fn haircut(&self, grade: usize, target: usize) -> Option<f64> {
        self.cells[grade][target].as_ref().ok().map(|r| r.haircut)
    }

    pub fn first_error(&self) -> Option<&Error> {
        self.cells.iter().flatten().find_map(|c| c.as_ref().err())
    }

    /// Rows must not rise as targets loosen; columns must not fall as credit
    /// worsens. Returns one message per violation.
    pub fn monotonicity_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (r, label) in self.grades.iter().enumerate() {
            for c in 1..self.targets.len() {
                if let (Some(a), Some(b)) = (self.haircut(r, c - 1), self.haircut(r, c)) {
                    if b > a {
                        out.push(format!(
                            "row {label}: {} haircut {b} exceeds {} haircut {a}",
                            self.targets[c].label,
                            self.targets[c - 1].label
                        ));
                    }
                }
            }
        }
        for (c, target) in self.targets.iter().enumerate() {
            for r in 1..self.grades.len() {
                if let (Some(a), Some(b)) = (self.haircut(r - 1, c), self.haircut(r, c)) {
                    if b < a {
                        out.push(format!(
                            "column {}: {} haircut {b} below {} haircut {a}",
                            target.label,
                            self.grades[r],
                            self.grades[r - 1]
                        ));
                    }
                }
            }
        }
        out
    }

    /// Grades down, targets across; haircuts as decimal fractions.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["Cpty\\Target".to_string()];
        header.extend(self.targets.iter().map(|t| t.label.clone()));
        w.write_record(&header)?;
        for (label, row) in self.grades.iter().zip(&self.cells) {
            let mut record = vec![label.clone()];
            record.extend(row.iter().map(|cell| match cell {
                Ok(r) => format!("{:.4}", r.haircut),
                Err(Error::TargetUnreachable { .. }) => "unreachable".to_string(),
                Err(_) => "error".to_string(),
            }));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}
