use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use seclend_core::calibration::{fit_dejd, log_likelihood_with, FitReport, ReturnSeries};
use seclend_core::error::{Error, Result};
use seclend_core::indemnity::{
    criterion_label, price_indemnity, pricing_sheet, scenario_grid, sheet_summary, write_sheet_csv, PricingContext,
    PricingOutcome,
};
use seclend_core::loss::SimulationSettings;
use seclend_core::solver::haircut_schedule;
use seclend_core::types::{DejdParams, IndemnitySheet};

mod config;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "seclend", version, about = "Haircuts and indemnification pricing for securities lending")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Verify monotonicity and round-trip properties of the outputs.
    #[arg(long, global = true)]
    self_check: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Fit jump-diffusion parameters to a `date,close` price file.
    Calibrate {
        /// Price file; overrides `price_series` in the configuration.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Solve minimal haircuts for every borrower and target.
    Haircut,
    /// Price indemnification for one transaction or a scenario grid.
    Price,
}

enum Failure {
    Run(Error),
    SelfCheck(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(Error::Io(e))
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NoConvergence { .. } => 2,
        Error::TargetUnreachable { .. } => 3,
        _ => 1,
    }
}

/// The error with the most specific exit code, earliest first.
fn worst_error<T>(cells: impl IntoIterator<Item = Result<T>>) -> Option<Error> {
    let mut worst: Option<Error> = None;
    for e in cells.into_iter().filter_map(|c| c.err()) {
        if worst.as_ref().is_none_or(|w| exit_code(&e) > exit_code(w)) {
            worst = Some(e);
        }
    }
    worst
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("--config is required".into()))?;
    RunConfig::load(path)
}

fn fit_series(path: &Path, config: &RunConfig) -> Result<FitReport> {
    let series = ReturnSeries::from_path(path)?;
    let c = &config.calibration;
    fit_dejd(&series, &c.init, &c.bounds, &c.fit_options())
}

/// Explicit parameters, or a fit to the configured price series.
fn resolve_model(config: &RunConfig, out: &Path) -> Result<DejdParams> {
    config.check_model_source()?;
    if let Some(p) = config.dejd {
        return Ok(p);
    }
    let path = config.price_series.as_ref().expect("checked above");
    let report = fit_series(path, config)?;
    write_json(&out.join("fit_report.json"), &report)?;
    Ok(report.params)
}

fn simulation(config: &RunConfig, seed: u64) -> SimulationSettings {
    SimulationSettings {
        n_paths: config.simulation.n_paths,
        seed,
        batch_size: config.simulation.batch_size,
    }
}

fn calibrate(common: &Common, input: Option<&PathBuf>) -> Result<(), Failure> {
    let config = match &common.config {
        Some(_) => load_config(common)?,
        None => serde_json::from_str(r#"{"schema_version": 1}"#).expect("minimal config parses"),
    };
    let path = input
        .or(config.price_series.as_ref())
        .ok_or_else(|| Error::InvalidInput("give --input or `price_series` in the configuration".into()))?;
    let series = ReturnSeries::from_path(path)?;
    let c = &config.calibration;
    let report = fit_dejd(&series, &c.init, &c.bounds, &c.fit_options());
    let report = match report {
        Ok(r) => r,
        Err(Error::NoConvergence { diagnostics }) => {
            for d in &diagnostics {
                eprintln!(
                    "start {}: log-likelihood {:.6}, gradient norm {:.3e}, {} iterations",
                    d.start_index, d.log_likelihood, d.gradient_norm, d.iterations
                );
            }
            return Err(Error::NoConvergence { diagnostics }.into());
        }
        Err(e) => return Err(e.into()),
    };
    write_json(&common.out.join("fit_report.json"), &report)?;
    if common.config.is_some() {
        let mut resolved = config.resolved(common.seed);
        resolved.price_series = Some(path.clone());
        write_json(&common.out.join("resolved_config.json"), &resolved)?;
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "fit {} returns: log-likelihood {:.6} after {} iterations",
        report.observations, report.log_likelihood, report.iterations
    );
    if common.self_check {
        let again = log_likelihood_with(&series.log_returns, &report.params, &c.likelihood)?.value;
        if again != report.log_likelihood {
            return Err(Failure::SelfCheck(vec![format!(
                "re-evaluated log-likelihood {again} differs from reported {}",
                report.log_likelihood
            )]));
        }
        println!("self-check passed");
    }
    Ok(())
}

#[derive(Serialize)]
struct CellRecord<'a> {
    borrower: &'a str,
    target: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<&'a seclend_core::solver::HaircutResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn haircut(common: &Common) -> Result<(), Failure> {
    let config = load_config(common)?;
    let resolved = config.resolved(common.seed);
    let seed = resolved.require_seed()?;
    resolved.check_simulation()?;
    let txn = resolved.transaction()?;
    let (grades, assumptions) = resolved.grades()?;
    let targets = resolved.targets()?;
    let dejd = resolve_model(&resolved, &common.out)?;
    write_json(&common.out.join("resolved_config.json"), &resolved)?;
    for a in &assumptions {
        eprintln!("assumption: {a}");
    }
    let schedule = haircut_schedule(
        &dejd,
        &grades,
        &targets,
        &txn,
        &simulation(&resolved, seed),
        resolved.simulation.mode,
        &resolved.solver,
    )?;
    schedule.write_csv(fs::File::create(common.out.join("haircut_schedule.csv"))?)?;
    let records: Vec<CellRecord> = schedule
        .grades
        .iter()
        .zip(&schedule.cells)
        .flat_map(|(g, row)| {
            row.iter().zip(&schedule.targets).map(move |(cell, t)| CellRecord {
                borrower: g,
                target: &t.label,
                result: cell.as_ref().ok(),
                error: cell.as_ref().err().map(|e| e.to_string()),
            })
        })
        .collect();
    write_json(&common.out.join("haircut_results.json"), &records)?;
    for (g, row) in schedule.grades.iter().zip(&schedule.cells) {
        let line: Vec<String> = row
            .iter()
            .map(|c| match c {
                Ok(r) => format!("{:.2}%", r.haircut * 100.0),
                Err(_) => "n/a".into(),
            })
            .collect();
        println!("{g}: {}", line.join(" "));
    }
    let violations = schedule.monotonicity_violations();
    if let Some(e) = worst_error(schedule.cells.into_iter().flatten()) {
        return Err(e.into());
    }
    if common.self_check {
        if !violations.is_empty() {
            return Err(Failure::SelfCheck(violations));
        }
        println!("self-check passed");
    }
    Ok(())
}

fn write_sheet(out: &Path, value: &impl Serialize, sheet: &IndemnitySheet) -> Result<()> {
    write_json(&out.join("indemnity_sheet.json"), value)?;
    write_sheet_csv(sheet, fs::File::create(out.join("indemnity_sheet.csv"))?)?;
    println!("{}", sheet_summary(sheet));
    Ok(())
}

fn price(common: &Common) -> Result<(), Failure> {
    let config = load_config(common)?;
    let resolved = config.resolved(common.seed);
    let settings = resolved.pricing.settings();

    if let Some(replay) = resolved.pricing.replay {
        let txn = resolved.transaction()?;
        write_json(&common.out.join("resolved_config.json"), &resolved)?;
        let sheet = price_indemnity(
            txn.haircut,
            replay.triple_a_haircut,
            replay.el,
            replay.es,
            settings.cost_of_capital,
            settings.funding_spread,
        )?;
        write_sheet(&common.out, &sheet, &sheet)?;
        return Ok(());
    }

    let seed = resolved.require_seed()?;
    resolved.check_simulation()?;
    let txn = resolved.transaction()?;
    let (grades, assumptions) = resolved.grades()?;
    let dejd = resolve_model(&resolved, &common.out)?;
    write_json(&common.out.join("resolved_config.json"), &resolved)?;
    for a in &assumptions {
        eprintln!("assumption: {a}");
    }
    let ctx = PricingContext {
        sim: simulation(&resolved, seed),
        es_confidence: resolved.simulation.es_confidence,
        solver: resolved.solver,
        pricing: settings,
        mode: resolved.simulation.mode,
        pd_triple_a: resolved.triple_a.pd_threshold,
    };

    if let Some(grid) = &resolved.pricing.grid {
        let g = scenario_grid(&dejd, &grid.haircuts, &grades, &grid.criteria, &grid.mprs, &txn, &ctx)?;
        g.write_csv(fs::File::create(common.out.join("indemnity_grid.csv"))?)?;
        #[derive(Serialize)]
        struct GridCell<'a> {
            criterion: seclend_core::types::Criterion,
            borrower: &'a str,
            mpr_days: u32,
            haircut: f64,
            #[serde(skip_serializing_if = "Option::is_none")]
            outcome: Option<&'a PricingOutcome>,
            #[serde(skip_serializing_if = "Option::is_none")]
            error: Option<String>,
        }
        let cells: Vec<GridCell> = g
            .cells
            .iter()
            .map(|c| GridCell {
                criterion: c.criterion,
                borrower: &c.borrower,
                mpr_days: c.mpr_days,
                haircut: c.haircut,
                outcome: c.outcome.as_ref().ok(),
                error: c.outcome.as_ref().err().map(|e| e.to_string()),
            })
            .collect();
        write_json(&common.out.join("indemnity_grid.json"), &cells)?;
        for c in &g.cells {
            match &c.outcome {
                Ok(o) => println!(
                    "{} {} {}d h={}: {:.2} bps",
                    criterion_label(c.criterion),
                    c.borrower,
                    c.mpr_days,
                    c.haircut,
                    o.sheet.total * 1e4
                ),
                Err(e) => println!("{} {} {}d h={}: {e}", criterion_label(c.criterion), c.borrower, c.mpr_days, c.haircut),
            }
        }
        let violations = g.monotonicity_violations();
        if let Some(e) = worst_error(g.cells.into_iter().map(|c| c.outcome)) {
            return Err(e.into());
        }
        if common.self_check {
            if !violations.is_empty() {
                return Err(Failure::SelfCheck(violations));
            }
            println!("self-check passed");
        }
        return Ok(());
    }

    if grades.len() != 1 {
        return Err(Error::InvalidInput("single-sheet pricing takes exactly one borrower; use `pricing.grid` for more".into()).into());
    }
    let outcome = pricing_sheet(&dejd, &grades[0].credit, &txn, resolved.triple_a.criterion, &ctx)?;
    write_sheet(&common.out, &outcome, &outcome.sheet)?;
    if outcome.metrics.es_unstable {
        eprintln!(
            "warning: ES averages only {} tail samples",
            outcome.metrics.es_tail_count
        );
    }
    if common.self_check {
        let s = &outcome.sheet;
        if s.total != s.risk_charge + s.capital_charge + s.funding_charge {
            return Err(Failure::SelfCheck(vec!["charges do not add up to the total".into()]));
        }
        println!("self-check passed");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.common.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    if let Err(e) = fs::create_dir_all(&cli.common.out) {
        eprintln!("error: cannot create {}: {e}", cli.common.out.display());
        return ExitCode::from(1);
    }
    let result = match &cli.command {
        Command::Calibrate { input } => calibrate(&cli.common, input.as_ref()),
        Command::Haircut => haircut(&cli.common),
        Command::Price => price(&cli.common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::SelfCheck(violations)) => {
            for v in &violations {
                eprintln!("self-check: {v}");
            }
            ExitCode::from(1)
        }
    }
}
