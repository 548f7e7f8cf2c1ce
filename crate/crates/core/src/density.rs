//! Closed-form density of the DEJD log-return over a fixed interval.
//!
//! Over an interval `dt` the return is Gaussian `N(mu dt, sigma^2 dt)` plus a
//! Poisson(`lambda dt`) number of double-exponential jumps. An n-fold sum of
//! jumps is itself a mixture of signed Gamma laws, and each Gamma convolved
//! with the Gaussian is expressible through Hh functions, so the whole
//! density reduces to two short series per evaluation point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, LN_SQRT_2PI};
use crate::types::{DejdParams, Validate};

/// Omitted Poisson tail mass targeted when choosing the truncation order.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-12;

const MAX_JUMP_TERMS: usize = 400;

/// Weights of the signed Gamma mixture for an n-fold jump sum: `up[k-1]` is
/// the probability that the sum is distributed as `+Gamma(k, eta)`, `down[k-1]`
/// as `-Gamma(k, theta)`.
pub fn jump_sum_mixture(n: usize, params: &DejdParams) -> (Vec<f64>, Vec<f64>) {
    let p = params.up_prob;
    let q = params.down_prob();
    let eta = params.up_rate;
    let theta = params.down_rate;
    let up_share = eta / (eta + theta);
    let down_share = theta / (eta + theta);
    let mut up = vec![0.0; n];
    let mut down = vec![0.0; n];
    if n == 0 {
        return (up, down);
    }
    let mut ln_fact = vec![0.0; n + 1];
    for i in 1..=n {
        ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
    }
    let ln_binomial = |a: usize, b: usize| ln_fact[a] - ln_fact[b] - ln_fact[a - b];
    for k in 1..n {
        let mut pk = 0.0;
        let mut qk = 0.0;
        for i in k..n {
            let comb = (ln_binomial(n - k - 1, i - k) + ln_binomial(n, i)).exp();
            pk += comb
                * up_share.powi((i - k) as i32)
                * down_share.powi((n - i) as i32)
                * p.powi(i as i32)
                * q.powi((n - i) as i32);
            qk += comb
                * up_share.powi((n - i) as i32)
                * down_share.powi((i - k) as i32)
                * p.powi((n - i) as i32)
                * q.powi(i as i32);
        }
        up[k - 1] = pk;
        down[k - 1] = qk;
    }
    up[n - 1] = p.powi(n as i32);
    down[n - 1] = q.powi(n as i32);
    (up, down)
}

/// Poisson-truncated density of `X(t + dt) - X(t)`.
#[derive(Debug, Clone)]
pub struct MixtureDensity {
    mean: f64,
    sd: f64,
    up_scaled: f64,
    down_scaled: f64,
    ln_no_jump: f64,
    /// `sum_n Pois(n) P_{n,k} (eta sd)^k` for k = 1..=n_max
    up_coef: Vec<f64>,
    down_coef: Vec<f64>,
    n_max: usize,
    tail_mass: f64,
}

impl MixtureDensity {
    pub fn new(params: &DejdParams, dt: f64, tail_tolerance: f64) -> Result<Self> {
        params.validate()?;
        if dt.is_nan() || dt <= 0.0 {
            return Err(Error::InvalidInput(format!("interval must be positive, got {dt}")));
        }
        if params.diffusion_vol.is_nan() || params.diffusion_vol <= 0.0 {
            return Err(Error::DegenerateDiffusion);
        }
        let sd = params.diffusion_vol * dt.sqrt();
        let (weights, tail_mass) =
            numerics::poisson_weights(params.jump_intensity * dt, tail_tolerance, MAX_JUMP_TERMS);
        if tail_mass > tail_tolerance {
            return Err(Error::Truncation {
                tail: tail_mass,
                tolerance: tail_tolerance,
            });
        }
        let n_max = weights.len() - 1;
        let up_scaled = params.up_rate * sd;
        let down_scaled = params.down_rate * sd;
        let mut up_coef = vec![0.0; n_max];
        let mut down_coef = vec![0.0; n_max];
        for (n, &w) in weights.iter().enumerate().skip(1) {
            let (up, down) = jump_sum_mixture(n, params);
            for k in 0..n {
                up_coef[k] += w * up[k];
                down_coef[k] += w * down[k];
            }
        }
        for k in 0..n_max {
            let power = (k + 1) as i32;
            up_coef[k] *= up_scaled.powi(power);
            down_coef[k] *= down_scaled.powi(power);
        }
        Ok(Self {
            mean: params.drift * dt,
            sd,
            up_scaled,
            down_scaled,
            ln_no_jump: weights[0].ln(),
            up_coef,
            down_coef,
            n_max,
            tail_mass,
        })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Poisson mass beyond `n_max` jumps that the density omits.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sd(&self) -> f64 {
        self.sd
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        let mut scratch = Vec::with_capacity(self.n_max + 1);
        self.log_pdf_with(x, &mut scratch)
    }

    /// As [`log_pdf`](Self::log_pdf), reusing `scratch` across calls.
    pub fn log_pdf_with(&self, x: f64, scratch: &mut Vec<f64>) -> f64 {
        let w = (x - self.mean) / self.sd;
        let base = -0.5 * w * w - LN_SQRT_2PI - self.sd.ln();
        let mut terms = [self.ln_no_jump, f64::NEG_INFINITY, f64::NEG_INFINITY];
        if self.n_max > 0 {
            terms[1] = leg(self.up_scaled - w, &self.up_coef, scratch);
            terms[2] = leg(self.down_scaled + w, &self.down_coef, scratch);
        }
        base + numerics::log_sum_exp(&terms)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.log_pdf(x).exp()
    }

    /// A lower and upper return beyond which the density mass is negligible.
    pub fn support(&self, up_rate: f64, down_rate: f64) -> (f64, f64) {
        let jumps = (self.n_max + 40) as f64;
        (
            self.mean - 14.0 * self.sd - jumps / down_rate,
            self.mean + 14.0 * self.sd + jumps / up_rate,
        )
    }

    /// Breakpoints that resolve the Gaussian core for adaptive quadrature.
    pub fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut points = vec![lo];
        for j in -16..=16 {
            let x = self.mean + f64::from(j) * self.sd;
            if x > lo && x < hi {
                points.push(x);
            }
        }
        points.push(hi);
        points
    }
}

fn leg(arg: f64, coef: &[f64], scratch: &mut Vec<f64>) -> f64 {
    let scale = numerics::hh_over_phi(arg, coef.len(), scratch);
    let sum: f64 = coef.iter().zip(&scratch[1..]).map(|(c, g)| c * g).sum();
    if sum > 0.0 {
        scale + sum.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Density of the margin-period return tabulated on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTable {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub n_max: usize,
    pub truncation_tail: f64,
}

impl DensityTable {
    /// Composite Simpson on uniform odd-length grids, trapezoid otherwise.
    pub fn integral(&self) -> f64 {
        let n = self.grid.len();
        if n < 2 {
            return 0.0;
        }
        let h = self.grid[1] - self.grid[0];
        let uniform = self
            .grid
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs());
        if uniform && n % 2 == 1 && n >= 3 {
            let mut s = self.density[0] + self.density[n - 1];
            for i in 1..n - 1 {
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * self.density[i];
            }
            s * h / 3.0
        } else {
            self.grid
                .windows(2)
                .zip(self.density.windows(2))
                .map(|(x, f)| 0.5 * (x[1] - x[0]) * (f[0] + f[1]))
                .sum()
        }
    }

    /// Cumulative distribution at each grid point by the trapezoid rule.
    pub fn cdf(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grid.len());
        let mut acc = 0.0;
        out.push(0.0);
        for i in 1..self.grid.len() {
            acc += 0.5 * (self.grid[i] - self.grid[i - 1]) * (self.density[i] + self.density[i - 1]);
            out.push(acc);
        }
        out
    }

    /// Sup-distance between the tabulated CDF and the empirical CDF of `samples`.
    pub fn kolmogorov_distance(&self, samples: &[f64]) -> f64 {
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let cdf = self.cdf();
        let mut worst: f64 = 0.0;
        let mut j = 0usize;
        for (i, &x) in self.grid.iter().enumerate() {
            while j < sorted.len() && sorted[j] <= x {
                j += 1;
            }
            worst = worst.max((cdf[i] - j as f64 / n).abs());
        }
        worst
    }
}

pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|i| lo + i as f64 * step).collect()
}

/// Grid spanning the effective support of the return over `interval` years.
pub fn default_grid(params: &DejdParams, interval: f64, points: usize) -> Result<Vec<f64>> {
    let density = MixtureDensity::new(params, interval, DEFAULT_TAIL_TOLERANCE)?;
    let (lo, hi) = density.support(params.up_rate, params.down_rate);
    Ok(uniform_grid(lo, hi, points))
}

/// Tabulates the density of `X(u)` when the borrower plays no role.
pub fn mpr_return_distribution_independent(
    params: &DejdParams,
    interval: f64,
    grid: &[f64],
    tail_tolerance: f64,
) -> Result<DensityTable> {
    let density = MixtureDensity::new(params, interval, DEFAULT_TAIL_TOLERANCE.min(tail_tolerance))?;
    let mut scratch = Vec::new();
    let values = grid.iter().map(|&x| density.log_pdf_with(x, &mut scratch).exp()).collect();
    Ok(DensityTable {
        grid: grid.to_vec(),
        density: values,
        n_max: density.n_max(),
        truncation_tail: density.tail_mass(),
    })
}
