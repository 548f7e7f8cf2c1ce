//! Historical estimation of asset dynamics and credit-quote mapping.

use std::io::Read;
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{MixtureDensity, DEFAULT_TAIL_TOLERANCE};
use crate::error::{Error, Result, StartDiagnostic};
use crate::numerics;
use crate::optim::{self, BfgsOptions, Bound};
use crate::types::{CreditParams, DejdParams, Validate, DAY};

/// Below this many returns a fit is refused.
pub const MIN_OBSERVATIONS: usize = 500;
/// Roughly five years of business days; shorter histories get a warning.
pub const RECOMMENDED_OBSERVATIONS: usize = 1250;

pub const DEFAULT_MEAN_REVERSION: f64 = 0.5;
pub const DEFAULT_SPREAD_VOL: f64 = 1.0;

/// Daily log returns with the date each return ends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub dates: Vec<NaiveDate>,
    pub log_returns: Vec<f64>,
    pub source: String,
}

const MISSING: [&str; 6] = ["", "na", "n/a", "nan", "null", "none"];

impl ReturnSeries {
    /// Parses a `date,close` CSV. Line numbers in errors count the header as line 1.
    pub fn from_csv<R: Read>(reader: R, source: impl Into<String>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut records = rdr.records();
        let header = match records.next() {
            Some(r) => r?,
            None => {
                return Err(Error::Series {
                    line: 1,
                    message: "empty file; expected header `date,close`".into(),
                })
            }
        };
        let names: Vec<String> = header.iter().map(|s| s.to_ascii_lowercase()).collect();
        if names != ["date", "close"] {
            return Err(Error::Series {
                line: 1,
                message: format!("expected header `date,close`, found `{}`", header.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut dates: Vec<NaiveDate> = Vec::new();
        let mut closes: Vec<f64> = Vec::new();
        for (i, record) in records.enumerate() {
            let line = i + 2;
            let record = record?;
            if record.len() == 1 && record[0].is_empty() {
                continue;
            }
            if record.len() != 2 {
                return Err(Error::Series {
                    line,
                    message: format!("expected 2 fields, found {}", record.len()),
                });
            }
            let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|e| Error::Series {
                line,
                message: format!("bad date `{}`: {e}", &record[0]),
            })?;
            let raw = &record[1];
            if MISSING.contains(&raw.to_ascii_lowercase().as_str()) {
                return Err(Error::Series {
                    line,
                    message: format!("missing close `{raw}`; omit the day instead"),
                });
            }
            let close: f64 = raw.parse().map_err(|_| Error::Series {
                line,
                message: format!("bad close `{raw}`"),
            })?;
            if !(close > 0.0 && close.is_finite()) {
                return Err(Error::Series {
                    line,
                    message: format!("close must be positive, got {close}"),
                });
            }
            if let Some(&prev) = dates.last() {
                if date <= prev {
                    return Err(Error::Series {
                        line,
                        message: format!("date {date} does not follow {prev}"),
                    });
                }
            }
            dates.push(date);
            closes.push(close);
        }
        if closes.len() < 2 {
            return Err(Error::Series {
                line: closes.len() + 2,
                message: "need at least two prices".into(),
            });
        }
        Ok(Self {
            dates: dates[1..].to_vec(),
            log_returns: closes.windows(2).map(|w| (w[1] / w[0]).ln()).collect(),
            source: source.into(),
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv(file, path.display().to_string())
    }

    /// Wraps raw returns, dating them on consecutive weekdays from 2000-01-04.
    pub fn from_returns(log_returns: Vec<f64>, source: impl Into<String>) -> Self {
        let mut dates = Vec::with_capacity(log_returns.len());
        let mut d = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
        for _ in 0..log_returns.len() {
            loop {
                d = d + Days::new(1);
                if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
                    break;
                }
            }
            dates.push(d);
        }
        Self {
            dates,
            log_returns,
            source: source.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.log_returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_returns.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LikelihoodSettings {
    /// Observation interval in years.
    pub interval: f64,
    /// Densities below this are replaced by it.
    pub density_floor: f64,
    pub tail_tolerance: f64,
}

impl Default for LikelihoodSettings {
    fn default() -> Self {
        Self {
            interval: DAY,
            density_floor: 1e-300,
            tail_tolerance: DEFAULT_TAIL_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodValue {
    pub value: f64,
    /// Observations whose density hit the floor.
    pub floored: usize,
}

pub fn log_likelihood_with(returns: &[f64], params: &DejdParams, settings: &LikelihoodSettings) -> Result<LikelihoodValue> {
    let density = MixtureDensity::new(params, settings.interval, settings.tail_tolerance)?;
    let floor = settings.density_floor.ln();
    let mut scratch = Vec::with_capacity(density.n_max() + 1);
    let mut value = 0.0;
    let mut floored = 0;
    for &x in returns {
        let l = density.log_pdf_with(x, &mut scratch);
        if l >= floor {
            value += l;
        } else {
            value += floor;
            floored += 1;
        }
    }
    Ok(LikelihoodValue { value, floored })
}

/// Sum of daily log densities.
pub fn log_likelihood(series: &ReturnSeries, params: &DejdParams) -> Result<f64> {
    Ok(log_likelihood_with(&series.log_returns, params, &LikelihoodSettings::default())?.value)
}

/// Search box for each parameter; bounds are open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitBounds {
    pub drift: (f64, f64),
    pub diffusion_vol: (f64, f64),
    pub jump_intensity: (f64, f64),
    pub up_prob: (f64, f64),
    pub up_rate: (f64, f64),
    pub down_rate: (f64, f64),
}

impl Default for FitBounds {
    fn default() -> Self {
        Self {
            drift: (-5.0, 5.0),
            diffusion_vol: (1e-3, 3.0),
            jump_intensity: (1e-4, 500.0),
            up_prob: (1e-3, 1.0 - 1e-3),
            up_rate: (1.5, 1000.0),
            down_rate: (0.5, 1000.0),
        }
    }
}

impl FitBounds {
    fn as_slice(&self) -> [Bound; 6] {
        let b = |(lo, hi): (f64, f64)| Bound::new(lo, hi);
        [
            b(self.drift),
            b(self.diffusion_vol),
            b(self.jump_intensity),
            b(self.up_prob),
            b(self.up_rate),
            b(self.down_rate),
        ]
    }

    fn check(&self) -> Result<()> {
        let named = [
            ("drift", self.drift),
            ("diffusion_vol", self.diffusion_vol),
            ("jump_intensity", self.jump_intensity),
            ("up_prob", self.up_prob),
            ("up_rate", self.up_rate),
            ("down_rate", self.down_rate),
        ];
        for (name, (lo, hi)) in named {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(Error::InvalidInput(format!("bounds for {name} must satisfy lower < upper")));
            }
        }
        if self.up_rate.0 < 1.0 || self.diffusion_vol.0 <= 0.0 || self.jump_intensity.0 < 0.0 || self.down_rate.0 < 0.0 {
            return Err(Error::InvalidInput(
                "bounds must keep eta > 1, diffusion_vol > 0, jump_intensity >= 0 and theta > 0".into(),
            ));
        }
        if self.up_prob.0 < 0.0 || self.up_prob.1 > 1.0 {
            return Err(Error::InvalidInput("up_prob bounds must lie within [0, 1]".into()));
        }
        Ok(())
    }

    /// Moves `params` strictly inside the box.
    fn clamp(&self, params: &DejdParams) -> DejdParams {
        let inside = |v: f64, (lo, hi): (f64, f64)| {
            let margin = 1e-6 * (hi - lo);
            v.clamp(lo + margin, hi - margin)
        };
        DejdParams {
            drift: inside(params.drift, self.drift),
            diffusion_vol: inside(params.diffusion_vol, self.diffusion_vol),
            jump_intensity: inside(params.jump_intensity, self.jump_intensity),
            up_prob: inside(params.up_prob, self.up_prob),
            up_rate: inside(params.up_rate, self.up_rate),
            down_rate: inside(params.down_rate, self.down_rate),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Hold the drift at zero instead of estimating it.
    pub zero_drift: bool,
    pub likelihood: LikelihoodSettings,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 300,
            gradient_tolerance: 1e-5,
            zero_drift: false,
            likelihood: LikelihoodSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardErrors {
    pub drift: Option<f64>,
    pub diffusion_vol: Option<f64>,
    pub jump_intensity: Option<f64>,
    pub up_prob: Option<f64>,
    pub up_rate: Option<f64>,
    pub down_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartReport {
    pub start_index: usize,
    pub initial: DejdParams,
    pub log_likelihood: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: DejdParams,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Infinity norm of the mean-log-likelihood gradient in search coordinates.
    pub gradient_norm: f64,
    pub standard_errors: StandardErrors,
    pub observations: usize,
    pub floored_observations: usize,
    pub starts: Vec<StartReport>,
    pub warnings: Vec<String>,
}

const PARAM_COUNT: usize = 6;

fn pack(p: &DejdParams) -> [f64; PARAM_COUNT] {
    [p.drift, p.diffusion_vol, p.jump_intensity, p.up_prob, p.up_rate, p.down_rate]
}

fn unpack(x: &[f64]) -> DejdParams {
    DejdParams {
        drift: x[0],
        diffusion_vol: x[1],
        jump_intensity: x[2],
        up_prob: x[3],
        up_rate: x[4],
        down_rate: x[5],
    }
}

/// Deterministic starting points: the given one plus rescaled jump guesses.
fn starting_points(init: &DejdParams, bounds: &FitBounds) -> Vec<DejdParams> {
    let variants = [(1.0, 1.0, init.up_prob), (0.25, 0.6, 0.5), (3.0, 1.6, 0.5)];
    variants
        .iter()
        .map(|&(intensity, rates, up_prob)| {
            bounds.clamp(&DejdParams {
                jump_intensity: init.jump_intensity.max(1.0) * intensity,
                up_rate: (init.up_rate * rates).max(2.0),
                down_rate: init.down_rate * rates,
                up_prob,
                ..*init
            })
        })
        .collect()
}

/// Maximum-likelihood fit with multi-start quasi-Newton search in the box.
pub fn fit_dejd(series: &ReturnSeries, init: &DejdParams, bounds: &FitBounds, options: &FitOptions) -> Result<FitReport> {
    init.validate()?;
    bounds.check()?;
    let n = series.len();
    if n < MIN_OBSERVATIONS {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_OBSERVATIONS} returns to fit, got {n}"
        )));
    }
    let mut warnings = Vec::new();
    if n < RECOMMENDED_OBSERVATIONS {
        warnings.push(format!(
            "only {n} returns; about {RECOMMENDED_OBSERVATIONS} (five years including a stress period) are recommended"
        ));
    }
    let mut box_bounds = bounds.as_slice();
    if options.zero_drift {
        box_bounds[0] = Bound::new(-1e-12, 1e-12);
    }
    let returns = &series.log_returns;
    let objective = |x: &[f64]| -> f64 {
        let mut p = unpack(x);
        if options.zero_drift {
            p.drift = 0.0;
        }
        match log_likelihood_with(returns, &p, &options.likelihood) {
            Ok(l) => -l.value / n as f64,
            Err(_) => f64::INFINITY,
        }
    };
    let bfgs = BfgsOptions {
        max_iterations: options.max_iterations,
        gradient_tolerance: options.gradient_tolerance,
        ..BfgsOptions::default()
    };
    let mut starts = starting_points(init, bounds);
    if options.zero_drift {
        for s in &mut starts {
            s.drift = 0.0;
        }
    }
    let runs: Vec<(DejdParams, optim::Minimum)> = starts
        .par_iter()
        .map(|s| (*s, optim::minimize(objective, &pack(s), &box_bounds, &bfgs)))
        .collect();
    let reports: Vec<StartReport> = runs
        .iter()
        .enumerate()
        .map(|(i, (s, m))| StartReport {
            start_index: i,
            initial: *s,
            log_likelihood: -m.value * n as f64,
            gradient_norm: m.gradient_norm,
            iterations: m.iterations,
            converged: m.converged,
        })
        .collect();
    // Best converged start; ties resolved by start order.
    let best = runs
        .iter()
        .enumerate()
        .filter(|(_, (_, m))| m.converged && m.value.is_finite())
        .min_by(|a, b| a.1 .1.value.total_cmp(&b.1 .1.value).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i);
    let Some(best) = best else {
        return Err(Error::NoConvergence {
            diagnostics: reports
                .iter()
                .map(|r| StartDiagnostic {
                    start_index: r.start_index,
                    log_likelihood: r.log_likelihood,
                    gradient_norm: r.gradient_norm,
                    iterations: r.iterations,
                })
                .collect(),
        });
    };
    let minimum = &runs[best].1;
    let mut params = unpack(&minimum.x);
    if options.zero_drift {
        params.drift = 0.0;
    }
    let value = log_likelihood_with(returns, &params, &options.likelihood)?;
    if value.floored > 0 {
        warnings.push(format!("{} observations hit the density floor", value.floored));
    }
    let standard_errors = standard_errors(&|p: &DejdParams| objective(&pack(p)) * n as f64, &params, bounds, options.zero_drift);
    Ok(FitReport {
        params,
        log_likelihood: value.value,
        iterations: minimum.iterations,
        converged: true,
        gradient_norm: minimum.gradient_norm,
        standard_errors,
        observations: n,
        floored_observations: value.floored,
        starts: reports,
        warnings,
    })
}

/// Standard errors from the inverse numerical Hessian of the negative
/// log-likelihood. Parameters pinned at a bound, or a Hessian that is not
/// positive definite, give `None`.
fn standard_errors(
    nll: &dyn Fn(&DejdParams) -> f64,
    params: &DejdParams,
    bounds: &FitBounds,
    zero_drift: bool,
) -> StandardErrors {
    let x = pack(params);
    let b = bounds.as_slice();
    let free: Vec<usize> = (0..PARAM_COUNT)
        .filter(|&i| !(zero_drift && i == 0))
        .filter(|&i| {
            let width = b[i].upper - b[i].lower;
            x[i] - b[i].lower > 1e-4 * width && b[i].upper - x[i] > 1e-4 * width
        })
        .collect();
    let steps: Vec<f64> = free
        .iter()
        .map(|&i| {
            let room = (x[i] - b[i].lower).min(b[i].upper - x[i]);
            (1e-4 * x[i].abs().max(1e-2)).min(0.5 * room)
        })
        .collect();
    let eval = |shift: &[(usize, f64)]| {
        let mut y = x;
        for &(i, d) in shift {
            y[i] += d;
        }
        nll(&unpack(&y))
    };
    let m = free.len();
    let f0 = eval(&[]);
    let mut hessian = vec![vec![0.0; m]; m];
    for a in 0..m {
        let (i, hi) = (free[a], steps[a]);
        hessian[a][a] = (eval(&[(i, hi)]) - 2.0 * f0 + eval(&[(i, -hi)])) / (hi * hi);
        for c in 0..a {
            let (j, hj) = (free[c], steps[c]);
            let v = (eval(&[(i, hi), (j, hj)]) - eval(&[(i, hi), (j, -hj)]) - eval(&[(i, -hi), (j, hj)])
                + eval(&[(i, -hi), (j, -hj)]))
                / (4.0 * hi * hj);
            hessian[a][c] = v;
            hessian[c][a] = v;
        }
    }
    let mut se = [None; PARAM_COUNT];
    if let Some(cov) = numerics::invert(&hessian) {
        if (0..m).all(|a| cov[a][a] > 0.0 && cov[a][a].is_finite()) {
            for (a, &i) in free.iter().enumerate() {
                se[i] = Some(cov[a][a].sqrt());
            }
        }
    }
    StandardErrors {
        drift: se[0],
        diffusion_vol: se[1],
        jump_intensity: se[2],
        up_prob: se[3],
        up_rate: se[4],
        down_rate: se[5],
    }
}

/// Optional settings for mapping a CDS quote to intensity dynamics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreditOverrides {
    pub mean_reversion: Option<f64>,
    pub spread_vol: Option<f64>,
    pub initial_log_intensity: Option<f64>,
    pub correlation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreditFromQuote {
    pub params: CreditParams,
    /// Fields filled from built-in defaults rather than data.
    pub assumed: Vec<String>,
}

/// Credit-triangle mapping: mean intensity `spread / (1 - R)`.
pub fn cds_to_credit(spread_bps: f64, recovery: f64, overrides: &CreditOverrides) -> Result<CreditFromQuote> {
    if !(spread_bps > 0.0 && spread_bps.is_finite()) {
        return Err(Error::InvalidInput(format!("CDS spread must be > 0 bps, got {spread_bps}")));
    }
    let mean_level = (spread_bps * 1e-4 / (1.0 - recovery)).ln();
    let mut assumed = Vec::new();
    let mut pick = |value: Option<f64>, default: f64, name: &str| {
        value.unwrap_or_else(|| {
            assumed.push(format!("{name} = {default} (default)"));
            default
        })
    };
    let mean_reversion = pick(overrides.mean_reversion, DEFAULT_MEAN_REVERSION, "mean_reversion");
    let spread_vol = pick(overrides.spread_vol, DEFAULT_SPREAD_VOL, "spread_vol");
    let correlation = pick(overrides.correlation, 0.0, "correlation");
    let params = CreditParams {
        mean_reversion,
        mean_level,
        spread_vol,
        initial_log_intensity: overrides.initial_log_intensity.unwrap_or(mean_level),
        recovery,
        correlation,
    };
    params.validate()?;
    Ok(CreditFromQuote { params, assumed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::sample_dejd_increment;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn truth() -> DejdParams {
        DejdParams {
            drift: 0.05,
            diffusion_vol: 0.2,
            jump_intensity: 25.0,
            up_prob: 0.4,
            up_rate: 60.0,
            down_rate: 45.0,
        }
    }

    fn synthetic(params: &DejdParams, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| sample_dejd_increment(params, DAY, &mut rng)).collect()
    }

    #[test]
    fn parses_prices() {
        let csv = "date,close\n2020-01-02,100\n2020-01-03,101\n\n2020-01-06,99.5\n";
        let s = ReturnSeries::from_csv(csv.as_bytes(), "t").unwrap();
        assert_eq!(s.len(), 2);
        assert!((s.log_returns[0] - (1.01f64).ln()).abs() < 1e-15);
        assert_eq!(s.dates[1], NaiveDate::from_ymd_opt(2020, 1, 6).unwrap());
    }

    #[test]
    fn rejects_non_monotone_dates_with_line() {
        let csv = "date,close\n2020-01-02,100\n2020-01-03,101\n2020-01-03,102\n";
        match ReturnSeries::from_csv(csv.as_bytes(), "t") {
            Err(Error::Series { line, message }) => {
                assert_eq!(line, 4);
                assert!(message.contains("does not follow"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_placeholders_and_bad_headers() {
        let bad = [
            ("date,close\n2020-01-02,100\n2020-01-03,NA\n", 3),
            ("day,price\n2020-01-02,100\n", 1),
            ("date,close\n2020-01-02,-1\n", 2),
            ("date,close\n02/01/2020,100\n", 2),
            ("date,close\n2020-01-02,100,3\n", 2),
            ("date,close\n2020-01-02,100\n", 3),
        ];
        for (csv, want) in bad {
            match ReturnSeries::from_csv(csv.as_bytes(), "t") {
                Err(Error::Series { line, .. }) => assert_eq!(line, want, "{csv}"),
                other => panic!("{csv}: {other:?}"),
            }
        }
    }

    #[test]
    fn synthetic_dates_skip_weekends() {
        let s = ReturnSeries::from_returns(vec![0.0; 10], "x");
        assert!(s.dates.windows(2).all(|w| w[0] < w[1]));
        assert!(s.dates.iter().all(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)));
    }

    #[test]
    fn no_jumps_is_gaussian_likelihood() {
        let p = DejdParams {
            jump_intensity: 0.0,
            ..truth()
        };
        let xs = synthetic(&truth(), 200, 1);
        let (m, s) = (p.drift * DAY, p.diffusion_vol * DAY.sqrt());
        let want: f64 = xs
            .iter()
            .map(|x| -0.5 * ((x - m) / s).powi(2) - (s * (2.0 * std::f64::consts::PI).sqrt()).ln())
            .sum();
        let got = log_likelihood(&ReturnSeries::from_returns(xs, "g"), &p).unwrap();
        assert!((got - want).abs() < 1e-9 * want.abs());
    }

    #[test]
    fn likelihood_ignores_order_and_mirrors() {
        let xs = synthetic(&truth(), 500, 2);
        let mut rev = xs.clone();
        rev.reverse();
        let a = log_likelihood(&ReturnSeries::from_returns(xs.clone(), "a"), &truth()).unwrap();
        let b = log_likelihood(&ReturnSeries::from_returns(rev, "b"), &truth()).unwrap();
        assert!((a - b).abs() < 1e-9 * a.abs());
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        let c = log_likelihood(&ReturnSeries::from_returns(neg, "c"), &truth().mirrored()).unwrap();
        assert!((a - c).abs() < 1e-9 * a.abs());
    }

    #[test]
    fn floor_counts_impossible_observations() {
        let p = DejdParams {
            jump_intensity: 0.0,
            ..truth()
        };
        let v = log_likelihood_with(&[0.0, 5.0], &p, &LikelihoodSettings::default()).unwrap();
        assert_eq!(v.floored, 1);
        assert!(v.value.is_finite());
    }

    #[test]
    fn true_volatility_beats_doubled() {
        let mut wins = 0;
        for seed in 0..20 {
            let s = ReturnSeries::from_returns(synthetic(&truth(), 5000, 100 + seed), "s");
            let doubled = DejdParams {
                diffusion_vol: 0.4,
                ..truth()
            };
            if log_likelihood(&s, &truth()).unwrap() >= log_likelihood(&s, &doubled).unwrap() {
                wins += 1;
            }
        }
        assert!(wins >= 19, "{wins}");
    }

    #[test]
    fn short_series_refused() {
        let s = ReturnSeries::from_returns(vec![0.001; 100], "s");
        assert!(fit_dejd(&s, &truth(), &FitBounds::default(), &FitOptions::default()).is_err());
    }

    #[test]
    fn recovers_volatility() {
        let s = ReturnSeries::from_returns(synthetic(&truth(), 5000, 7), "s");
        let fit = fit_dejd(&s, &truth(), &FitBounds::default(), &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.params.diffusion_vol / 0.2 - 1.0).abs() < 0.1, "{:?}", fit.params);
        fit.params.validate().unwrap();
        assert!(fit.params.up_rate > 1.0);
        let again = log_likelihood(&s, &fit.params).unwrap();
        assert_eq!(again, fit.log_likelihood);
    }

    #[test]
    fn gaussian_data_drives_intensity_down() {
        let g = DejdParams {
            jump_intensity: 0.0,
            ..truth()
        };
        let s = ReturnSeries::from_returns(synthetic(&g, 3000, 8), "g");
        let fit = fit_dejd(&s, &truth(), &FitBounds::default(), &FitOptions::default()).unwrap();
        // jumps that are rare or tiny both mean "no jumps" in variance terms
        let jump_var = fit.params.jump_intensity
            * (2.0 * fit.params.up_prob / fit.params.up_rate.powi(2)
                + 2.0 * fit.params.down_prob() / fit.params.down_rate.powi(2));
        assert!(jump_var < 0.1 * 0.04, "{:?}", fit.params);
    }

    #[test]
    fn refit_is_bit_identical() {
        let s = ReturnSeries::from_returns(synthetic(&truth(), 600, 9), "s");
        let a = fit_dejd(&s, &truth(), &FitBounds::default(), &FitOptions::default());
        let b = fit_dejd(&s, &truth(), &FitBounds::default(), &FitOptions::default());
        match (a, b) {
            (Ok(a), Ok(b)) => assert_eq!(a, b),
            (Err(a), Err(b)) => assert_eq!(a.to_string(), b.to_string()),
            _ => panic!("refit changed outcome"),
        }
    }

    #[test]
    fn credit_triangle_arithmetic() {
        let c = cds_to_credit(250.0, 0.4, &CreditOverrides::default()).unwrap();
        assert!((c.params.mean_intensity() - 0.025 / 0.6).abs() < 1e-15);
        assert_eq!(c.params.initial_log_intensity, c.params.mean_level);
        assert_eq!(c.params.mean_reversion, 0.5);
        assert_eq!(c.params.spread_vol, 1.0);
        assert_eq!(c.assumed.len(), 3);
        let tiny = cds_to_credit(1e-9, 0.4, &CreditOverrides::default()).unwrap();
        assert!(tiny.params.mean_intensity() < 1e-12);
        assert!(cds_to_credit(0.0, 0.4, &CreditOverrides::default()).is_err());
        assert!(cds_to_credit(100.0, 1.0, &CreditOverrides::default()).is_err());
    }

    #[test]
    fn constant_intensity_matches_spread_implied_default() {
        for (spread, r) in [(50.0, 0.4), (250.0, 0.4), (600.0, 0.25)] {
            let c = cds_to_credit(spread, r, &CreditOverrides {
                spread_vol: Some(0.0),
                ..Default::default()
            })
            .unwrap();
            let model = 1.0 - (-5.0 * c.params.mean_intensity()).exp();
            // par spread of a flat-hazard CDS is (1 - R) * lambda
            let implied = 1.0 - (-5.0 * spread * 1e-4 / (1.0 - r)).exp();
            assert!((model / implied - 1.0).abs() < 0.05);
        }
    }
}
