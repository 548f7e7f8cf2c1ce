//! DEJD asset returns, log-OU default intensity, and their joint simulation.
//!
//! Every path owns two ChaCha substreams derived from the base seed and the
//! path index: `main` drives the credit/asset path up to default, `window`
//! drives the margin period of risk after default. Results therefore do not
//! depend on how paths are partitioned across workers, and the window draws
//! for a given path are shared between runs that differ only in credit
//! quality or margin period.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::types::{CreditParams, DejdParams, TransactionSpec, DAY};

/// Density of a single jump size `Y`.
pub fn jump_density(y: f64, params: &DejdParams) -> f64 {
    if y >= 0.0 {
        params.up_prob * params.up_rate * (-params.up_rate * y).exp()
    } else {
        params.down_prob() * params.down_rate * (params.down_rate * y).exp()
    }
}

/// `E[X(t + dt) - X(t)]`.
pub fn dejd_mean_increment(params: &DejdParams, dt: f64) -> f64 {
    params.drift * dt + params.jump_intensity * dt * params.mean_jump()
}

/// Compound-Poisson jump sampler for a fixed step length.
#[derive(Debug, Clone, Copy)]
pub struct JumpSampler {
    mean_count: f64,
    no_jump_prob: f64,
    up_prob: f64,
    up_rate: f64,
    down_rate: f64,
}

impl JumpSampler {
    pub fn new(params: &DejdParams, dt: f64) -> Self {
        let mean_count = params.jump_intensity * dt;
        Self {
            mean_count,
            no_jump_prob: (-mean_count).exp(),
            up_prob: params.up_prob,
            up_rate: params.up_rate,
            down_rate: params.down_rate,
        }
    }

    fn count<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if self.mean_count <= 0.0 {
            return 0;
        }
        if self.mean_count > 30.0 {
            return Poisson::new(self.mean_count)
                .expect("positive finite mean")
                .sample(rng) as u64;
        }
        let u: f64 = rng.random();
        let mut n = 0u64;
        let mut p = self.no_jump_prob;
        let mut cumulative = p;
        while u > cumulative && n < 1_000 {
            n += 1;
            p *= self.mean_count / n as f64;
            cumulative += p;
        }
        n
    }

    fn jump<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let up = rng.random::<f64>() < self.up_prob;
        let size: f64 = Exp1.sample(rng);
        if up {
            size / self.up_rate
        } else {
            -size / self.down_rate
        }
    }

    /// Sum of the jumps arriving within one step.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        (0..self.count(rng)).map(|_| self.jump(rng)).sum()
    }
}

/// Diffusion part of an increment driven by a given standard normal draw.
pub fn diffusion_increment(params: &DejdParams, dt: f64, z: f64) -> f64 {
    params.drift * dt + params.diffusion_vol * dt.sqrt() * z
}

/// Draws `X(t + dt) - X(t)`: Gaussian diffusion plus compound-Poisson jumps.
pub fn sample_dejd_increment<R: Rng + ?Sized>(params: &DejdParams, dt: f64, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    diffusion_increment(params, dt, z) + JumpSampler::new(params, dt).sample(rng)
}

/// Exact one-step transition of `y = log(lambda)`.
#[derive(Debug, Clone, Copy)]
pub struct OuTransition {
    mean_level: f64,
    decay: f64,
    noise_scale: f64,
}

impl OuTransition {
    pub fn new(params: &CreditParams, dt: f64) -> Self {
        let k = params.mean_reversion;
        let (decay, noise_scale) = if k > 0.0 {
            let decay = (-k * dt).exp();
            // (1 - e^{-2k dt}) / (2k), computed without cancellation
            let var = -(-2.0 * k * dt).exp_m1() / (2.0 * k);
            (decay, params.spread_vol * var.sqrt())
        } else {
            (1.0, params.spread_vol * dt.sqrt())
        };
        Self {
            mean_level: params.mean_level,
            decay,
            noise_scale,
        }
    }

    pub fn step(&self, y_prev: f64, dw: f64) -> f64 {
        self.mean_level + (y_prev - self.mean_level) * self.decay + self.noise_scale * dw
    }
}

/// `y_next` given `y_prev` and a standard normal draw `dw`.
pub fn sample_intensity_step(y_prev: f64, params: &CreditParams, dt: f64, dw: f64) -> f64 {
    OuTransition::new(params, dt).step(y_prev, dw)
}

/// One fully recorded joint path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    /// Daily asset log-return increments up to default (or the horizon).
    pub log_return_path: Vec<f64>,
    /// Default intensity at the end of each step.
    pub intensity_path: Vec<f64>,
    pub default_time: Option<f64>,
    /// `X(tau + u) - X(tau)`, present exactly when the path defaulted.
    pub mpr_log_return: Option<f64>,
}

impl PathSample {
    /// `X(tau)`, or `X(T)` when the path survived.
    pub fn log_return_at_end(&self) -> f64 {
        self.log_return_path.iter().sum()
    }
}

/// The summary of one path that the loss function needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub default_time: Option<f64>,
    /// `X(tau)`; zero when the path survived or credit is ignored.
    pub log_return_at_default: f64,
    /// `X(tau + u) - X(tau)`; zero when the path survived.
    pub window_return: f64,
}

/// Random streams owned by one path.
#[derive(Debug, Clone)]
pub struct PathStreams {
    pub main: ChaCha8Rng,
    pub window: ChaCha8Rng,
}

impl PathStreams {
    pub fn new(seed: u64, path_index: u64) -> Self {
        let base = ChaCha8Rng::seed_from_u64(seed);
        let mut main = base.clone();
        main.set_stream(2 * path_index);
        let mut window = base;
        window.set_stream(2 * path_index + 1);
        Self { main, window }
    }
}

/// Precomputed daily stepping constants for one parameter set.
#[derive(Debug, Clone, Copy)]
pub struct JointStepper {
    drift_step: f64,
    diffusion_scale: f64,
    loading: f64,
    idiosyncratic: f64,
    jumps: JumpSampler,
    ou: Option<OuTransition>,
    initial_log_intensity: f64,
    steps: usize,
    window_steps: usize,
}

impl JointStepper {
    pub fn new(dejd: &DejdParams, credit: Option<&CreditParams>, txn: &TransactionSpec) -> Self {
        let correlation = credit.map_or(0.0, |c| c.correlation);
        Self {
            drift_step: dejd.drift * DAY,
            diffusion_scale: dejd.diffusion_vol * DAY.sqrt(),
            loading: correlation,
            idiosyncratic: (1.0 - correlation * correlation).max(0.0).sqrt(),
            jumps: JumpSampler::new(dejd, DAY),
            ou: credit.map(|c| OuTransition::new(c, DAY)),
            initial_log_intensity: credit.map_or(f64::NEG_INFINITY, |c| c.initial_log_intensity),
            steps: txn.horizon_steps(),
            window_steps: txn.mpr_days as usize,
        }
    }

    fn asset_step<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let dw: f64 = StandardNormal.sample(rng);
        let dwa: f64 = StandardNormal.sample(rng);
        let dx = self.drift_step
            + self.diffusion_scale * (self.loading * dw + self.idiosyncratic * dwa)
            + self.jumps.sample(rng);
        (dx, dw)
    }

    /// Asset return over the margin period, from the window stream.
    pub fn window_return<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut x = 0.0;
        for _ in 0..self.window_steps {
            x += self.asset_step(rng).0;
        }
        x
    }

    /// Credit-free scenario: the borrower is taken to default at time zero.
    pub fn independent(&self, streams: &mut PathStreams) -> Scenario {
        Scenario {
            default_time: Some(0.0),
            log_return_at_default: 0.0,
            window_return: self.window_return(&mut streams.window),
        }
    }

    /// Simulates to default or the horizon; default fires once the
    /// integrated intensity crosses an Exp(1) threshold.
    pub fn joint(&self, streams: &mut PathStreams, mut record: Option<&mut (Vec<f64>, Vec<f64>)>) -> Scenario {
        let ou = self.ou.expect("joint simulation needs credit parameters");
        let threshold: f64 = Exp1.sample(&mut streams.main);
        let mut y = self.initial_log_intensity;
        let mut intensity = y.exp();
        let mut hazard = 0.0;
        let mut x = 0.0;
        for step in 0..self.steps {
            let (dx, dw) = self.asset_step(&mut streams.main);
            let y_next = ou.step(y, dw);
            let intensity_next = y_next.exp();
            hazard += 0.5 * (intensity + intensity_next) * DAY;
            x += dx;
            if let Some(rec) = record.as_deref_mut() {
                rec.0.push(dx);
                rec.1.push(intensity_next);
            }
            if hazard >= threshold {
                return Scenario {
                    default_time: Some((step + 1) as f64 * DAY),
                    log_return_at_default: x,
                    window_return: self.window_return(&mut streams.window),
                };
            }
            y = y_next;
            intensity = intensity_next;
        }
        Scenario {
            default_time: None,
            log_return_at_default: 0.0,
            window_return: 0.0,
        }
    }
}

/// Simulates one joint path with full recording of its daily history.
pub fn sample_joint_path(
    dejd: &DejdParams,
    credit: &CreditParams,
    txn: &TransactionSpec,
    streams: &mut PathStreams,
) -> PathSample {
    let stepper = JointStepper::new(dejd, Some(credit), txn);
    let mut record = (Vec::new(), Vec::new());
    let scenario = stepper.joint(streams, Some(&mut record));
    PathSample {
        log_return_path: record.0,
        intensity_path: record.1,
        default_time: scenario.default_time,
        mpr_log_return: scenario.default_time.map(|_| scenario.window_return),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kou() -> DejdParams {
        DejdParams {
            drift: 0.05,
            diffusion_vol: 0.2,
            jump_intensity: 25.0,
            up_prob: 0.4,
            up_rate: 60.0,
            down_rate: 45.0,
        }
    }

    fn flat_credit(intensity: f64) -> CreditParams {
        CreditParams {
            mean_reversion: 0.0,
            mean_level: intensity.ln(),
            spread_vol: 0.0,
            initial_log_intensity: intensity.ln(),
            recovery: 0.0,
            correlation: 0.0,
        }
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn jump_density_point_values() {
        let p = DejdParams { up_prob: 1.0, up_rate: 2.0, ..kou() };
        assert_eq!(jump_density(0.0, &p), 2.0);
        let sym = DejdParams { up_prob: 0.5, up_rate: 3.0, down_rate: 3.0, ..kou() };
        assert!((jump_density(0.2, &sym) - jump_density(-0.2, &sym)).abs() < 1e-15);
    }

    #[test]
    fn jump_density_integrates_to_one() {
        // Composite Simpson per branch, with the kink at zero as a panel end.
        let p = kou();
        let simpson = |a: f64, b: f64, fa: f64, fb: f64, n: usize| {
            let h = (b - a) / n as f64;
            let mut s = fa + fb;
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * jump_density(a + i as f64 * h, &p);
            }
            s * h / 3.0
        };
        let n = 2_000_000;
        let left = simpson(-50.0, 0.0, jump_density(-50.0, &p), jump_density(-f64::MIN_POSITIVE, &p), n);
        let right = simpson(0.0, 50.0, jump_density(0.0, &p), jump_density(50.0, &p), n);
        assert!((left + right - 1.0).abs() < 1e-10, "{}", left + right);
    }

    #[test]
    fn mean_increment_closed_form() {
        let no_jumps = DejdParams { jump_intensity: 0.0, ..kou() };
        assert!((dejd_mean_increment(&no_jumps, 1.0) - 0.05).abs() < 1e-15);
        let up_only = DejdParams {
            drift: 0.0,
            jump_intensity: 10.0,
            up_prob: 1.0,
            up_rate: 50.0,
            ..kou()
        };
        assert!((dejd_mean_increment(&up_only, 0.1) - 0.02).abs() < 1e-15);
    }

    #[test]
    fn deterministic_drift_without_noise() {
        let p = DejdParams {
            diffusion_vol: 0.0,
            jump_intensity: 0.0,
            ..kou()
        };
        let mut r = rng(1);
        for _ in 0..10 {
            assert_eq!(sample_dejd_increment(&p, 0.3, &mut r), 0.05 * 0.3);
        }
    }

    #[test]
    fn sampled_mean_and_variance_match_moments() {
        let p = kou();
        let dt = 0.1;
        let n = 1_000_000;
        let mut r = rng(7);
        let draws: Vec<f64> = (0..n).map(|_| sample_dejd_increment(&p, dt, &mut r)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - dejd_mean_increment(&p, dt)).abs() < 4.0 * se);

        let pure = DejdParams { jump_intensity: 0.0, ..p };
        let draws: Vec<f64> = (0..n).map(|_| sample_dejd_increment(&pure, dt, &mut r)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let target = 0.04 * dt;
        // SE of the sample variance of a Gaussian: var * sqrt(2/(n-1))
        let se_var = target * (2.0 / (n - 1) as f64).sqrt();
        assert!((var - target).abs() < 4.0 * se_var);
    }

    #[test]
    fn skewness_sign_follows_jump_asymmetry() {
        // Third cumulant = lambda dt * E[Y^3] = 6 lambda dt (p/eta^3 - q/theta^3)
        for (p_u, eta, theta) in [(0.8, 10.0, 40.0), (0.2, 40.0, 10.0)] {
            let p = DejdParams {
                up_prob: p_u,
                up_rate: eta,
                down_rate: theta,
                jump_intensity: 50.0,
                ..kou()
            };
            let analytic = p_u / eta.powi(3) - (1.0 - p_u) / theta.powi(3);
            let n = 400_000;
            let mut r = rng(11);
            let draws: Vec<f64> = (0..n).map(|_| sample_dejd_increment(&p, 0.1, &mut r)).collect();
            let mean = draws.iter().sum::<f64>() / n as f64;
            let m3 = draws.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n as f64;
            assert_eq!(m3.signum(), analytic.signum(), "p_u={p_u}");
        }
    }

    #[test]
    fn ou_fixed_point_and_half_life() {
        let c = CreditParams {
            mean_reversion: 1.0,
            mean_level: -3.0,
            spread_vol: 0.0,
            initial_log_intensity: -3.0,
            recovery: 0.0,
            correlation: 0.0,
        };
        assert_eq!(sample_intensity_step(-3.0, &c, 0.5, 1.3), -3.0);
        let next = sample_intensity_step(-2.0, &c, std::f64::consts::LN_2, 0.0);
        assert!((next - (-2.5)).abs() < 1e-14);
        let frozen = CreditParams { mean_reversion: 0.0, spread_vol: 0.4, ..c };
        assert!((sample_intensity_step(-1.0, &frozen, 0.25, 1.0) - (-1.0 + 0.4 * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn ou_stationary_variance() {
        let c = CreditParams {
            mean_reversion: 2.0,
            mean_level: -3.0,
            spread_vol: 0.8,
            initial_log_intensity: -3.0,
            recovery: 0.0,
            correlation: 0.0,
        };
        let ou = OuTransition::new(&c, 0.05);
        let mut r = rng(3);
        let mut y = -3.0;
        let n = 100_000;
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            y = ou.step(y, StandardNormal.sample(&mut r));
            values.push(y);
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let target = 0.64 / 4.0;
        assert!((var - target).abs() / target < 0.05, "var={var}");
    }

    #[test]
    fn ou_conditional_moments_exact() {
        let c = CreditParams {
            mean_reversion: 0.7,
            mean_level: -4.0,
            spread_vol: 1.1,
            initial_log_intensity: -4.0,
            recovery: 0.0,
            correlation: 0.0,
        };
        let dt = 0.3;
        let ou = OuTransition::new(&c, dt);
        let mut r = rng(5);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| ou.step(-2.0, StandardNormal.sample(&mut r))).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let want_mean = -4.0 + 2.0 * (-0.7 * dt).exp();
        let want_var = 1.21 * (1.0 - (-1.4 * dt).exp()) / 1.4;
        assert!((mean - want_mean).abs() < 4.0 * (want_var / n as f64).sqrt());
        assert!((var - want_var).abs() < 4.0 * want_var * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn enormous_intensity_defaults_immediately() {
        let txn = TransactionSpec::sec_lending(0.0, 0.0, 3);
        let credit = flat_credit(1e9);
        for i in 0..1_000 {
            let mut s = PathStreams::new(9, i);
            let path = sample_joint_path(&kou(), &credit, &txn, &mut s);
            assert_eq!(path.default_time, Some(DAY));
            assert!(path.mpr_log_return.is_some());
            assert_eq!(path.log_return_path.len(), 1);
        }
    }

    #[test]
    fn negligible_intensity_never_defaults() {
        let txn = TransactionSpec::sec_lending(0.0, 0.0, 3);
        let credit = flat_credit(1e-12);
        let stepper = JointStepper::new(&kou(), Some(&credit), &txn);
        for i in 0..10_000 {
            let sc = stepper.joint(&mut PathStreams::new(4, i), None);
            assert!(sc.default_time.is_none());
        }
        let path = sample_joint_path(&kou(), &credit, &txn, &mut PathStreams::new(4, 0));
        assert_eq!(path.log_return_path.len(), 250);
        assert!(path.intensity_path.iter().all(|&l| l > 0.0));
        assert!(path.mpr_log_return.is_none());
    }

    #[test]
    fn constant_intensity_default_probability() {
        let lambda = 0.3;
        let txn = TransactionSpec::sec_lending(0.0, 0.0, 1);
        let stepper = JointStepper::new(&kou(), Some(&flat_credit(lambda)), &txn);
        let n = 200_000u64;
        let defaults = (0..n)
            .filter(|&i| stepper.joint(&mut PathStreams::new(21, i), None).default_time.is_some())
            .count() as f64;
        let p = 1.0 - (-lambda).exp();
        let est = defaults / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((est - p).abs() < 4.0 * se, "est={est} p={p}");
    }

    #[test]
    fn replay_is_bit_identical() {
        let txn = TransactionSpec::sec_lending(0.02, 0.0, 3);
        let credit = CreditParams {
            mean_reversion: 0.5,
            mean_level: 0.5f64.ln(),
            spread_vol: 1.0,
            initial_log_intensity: 0.5f64.ln(),
            recovery: 0.4,
            correlation: 0.6,
        };
        for i in [0u64, 17, 123_456] {
            let a = sample_joint_path(&kou(), &credit, &txn, &mut PathStreams::new(99, i));
            let b = sample_joint_path(&kou(), &credit, &txn, &mut PathStreams::new(99, i));
            assert_eq!(a, b);
            let sc = JointStepper::new(&kou(), Some(&credit), &txn).joint(&mut PathStreams::new(99, i), None);
            assert_eq!(sc.default_time, a.default_time);
            if a.default_time.is_some() {
                assert_eq!(sc.log_return_at_default, a.log_return_at_end());
                assert_eq!(Some(sc.window_return), a.mpr_log_return);
            }
        }
    }

    #[test]
    fn zero_correlation_decouples_timing_and_window_return() {
        let txn = TransactionSpec::sec_lending(0.0, 0.0, 3);
        let credit = CreditParams {
            mean_reversion: 0.5,
            mean_level: 0.5f64.ln(),
            spread_vol: 1.0,
            initial_log_intensity: 0.5f64.ln(),
            recovery: 0.0,
            correlation: 0.0,
        };
        let stepper = JointStepper::new(&kou(), Some(&credit), &txn);
        let pairs: Vec<(f64, f64)> = (0..200_000u64)
            .filter_map(|i| {
                let sc = stepper.joint(&mut PathStreams::new(8, i), None);
                sc.default_time.map(|t| (if t <= 0.5 { 1.0 } else { 0.0 }, sc.window_return))
            })
            .collect();
        let n = pairs.len() as f64;
        let (ma, mb) = pairs.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0 / n, acc.1 + p.1 / n));
        let cov = pairs.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum::<f64>() / n;
        let va = pairs.iter().map(|p| (p.0 - ma).powi(2)).sum::<f64>() / n;
        let vb = pairs.iter().map(|p| (p.1 - mb).powi(2)).sum::<f64>() / n;
        let corr = cov / (va * vb).sqrt();
        // SE of a sample correlation under independence is 1/sqrt(n)
        assert!(corr.abs() < 4.0 / n.sqrt(), "corr={corr} n={n}");
    }

    #[test]
    fn independent_scenario_matches_density() {
        let p = kou();
        let txn = TransactionSpec::sec_lending(0.0, 0.0, 3);
        let stepper = JointStepper::new(&p, None, &txn);
        let n = 200_000u64;
        let samples: Vec<f64> = (0..n)
            .map(|i| stepper.independent(&mut PathStreams::new(2, i)).window_return)
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let want = dejd_mean_increment(&p, txn.mpr_years());
        assert!((mean - want).abs() < 4.0 * (var / n as f64).sqrt());
    }
}
