//! Box-constrained quasi-Newton minimization.
//!
//! Each coordinate is mapped onto its open interval through a logistic
//! transform and BFGS runs in the unconstrained space. Gradients are central
//! differences, so the objective only needs to be evaluable.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub lower: f64,
    pub upper: f64,
}

impl Bound {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    fn decode(self, z: f64) -> f64 {
        let s = if z >= 0.0 {
            1.0 / (1.0 + (-z).exp())
        } else {
            let e = z.exp();
            e / (1.0 + e)
        };
        self.lower + (self.upper - self.lower) * s
    }

    fn encode(self, x: f64) -> f64 {
        let width = self.upper - self.lower;
        let s = ((x - self.lower) / width).clamp(1e-12, 1.0 - 1e-12);
        (s / (1.0 - s)).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Convergence when the infinity norm of the transformed gradient drops below this.
    pub gradient_tolerance: f64,
    pub difference_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 400,
            gradient_tolerance: 1e-5,
            difference_step: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` over the box from `start`. Non-finite objective values are
/// treated as infeasible by the line search.
pub fn minimize<F>(f: F, start: &[f64], bounds: &[Bound], options: &BfgsOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = start.len();
    assert_eq!(n, bounds.len());
    let map = |z: &[f64]| -> Vec<f64> { z.iter().zip(bounds).map(|(&z, b)| b.decode(z)).collect() };
    let g = |z: &[f64]| -> f64 {
        let v = f(&map(z));
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let gradient = |z: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        let mut probe = z.to_vec();
        for i in 0..n {
            let h = options.difference_step * (1.0 + z[i].abs());
            probe[i] = z[i] + h;
            let up = g(&probe);
            probe[i] = z[i] - h;
            let down = g(&probe);
            probe[i] = z[i];
            out[i] = (up - down) / (2.0 * h);
        }
        out
    };

    let mut z: Vec<f64> = start.iter().zip(bounds).map(|(&x, b)| b.encode(x)).collect();
    let mut value = g(&z);
    let mut grad = gradient(&z);
    let mut inverse = identity(n);
    let mut iterations = 0;
    while iterations < options.max_iterations {
        if !grad.iter().all(|v| v.is_finite()) {
            break;
        }
        if inf_norm(&grad) < options.gradient_tolerance {
            break;
        }
        iterations += 1;
        let mut direction: Vec<f64> = (0..n).map(|i| -dot(&inverse[i], &grad)).collect();
        let mut slope = dot(&direction, &grad);
        if slope >= 0.0 {
            inverse = identity(n);
            direction = grad.iter().map(|v| -v).collect();
            slope = dot(&direction, &grad);
        }
        // Cap the first trial step so the transformed coordinates stay sane.
        let longest = inf_norm(&direction);
        let mut step = if longest > 5.0 { 5.0 / longest } else { 1.0 };
        let mut accepted = None;
        for _ in 0..50 {
            let trial: Vec<f64> = z.iter().zip(&direction).map(|(a, d)| a + step * d).collect();
            let v = g(&trial);
            if v <= value + 1e-4 * step * slope {
                accepted = Some((trial, v));
                break;
            }
            step *= 0.5;
        }
        let Some((next, next_value)) = accepted else {
            if inverse == identity(n) {
                break;
            }
            inverse = identity(n);
            continue;
        };
        let next_grad = gradient(&next);
        let s: Vec<f64> = next.iter().zip(&z).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            bfgs_update(&mut inverse, &s, &y, sy);
        }
        let stalled = (value - next_value).abs() <= 1e-15 * value.abs().max(1.0);
        z = next;
        value = next_value;
        grad = next_grad;
        if stalled && inf_norm(&grad) >= options.gradient_tolerance {
            inverse = identity(n);
        }
    }
    let gradient_norm = inf_norm(&grad);
    Minimum {
        x: map(&z),
        value,
        gradient_norm,
        iterations,
        converged: gradient_norm < options.gradient_tolerance,
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    let rho = 1.0 / sy;
    for i in 0..n {
        for j in 0..n {
            h[i][j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_minimum_inside_box() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2);
        let b = [Bound::new(-5.0, 5.0), Bound::new(-5.0, 5.0)];
        let m = minimize(f, &[0.0, 0.0], &b, &BfgsOptions::default());
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] + 2.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let b = [Bound::new(-3.0, 3.0), Bound::new(-3.0, 3.0)];
        let m = minimize(f, &[-1.2, 1.0], &b, &BfgsOptions::default());
        assert!((m.x[0] - 1.0).abs() < 1e-3 && (m.x[1] - 1.0).abs() < 2e-3, "{m:?}");
    }

    #[test]
    fn minimum_outside_box_pins_to_bound() {
        let f = |x: &[f64]| (x[0] + 3.0).powi(2);
        let m = minimize(f, &[0.5], &[Bound::new(0.0, 1.0)], &BfgsOptions::default());
        assert!(m.x[0] < 1e-3, "{m:?}");
        assert!(m.x[0] > 0.0);
    }

    #[test]
    fn transform_round_trip() {
        let b = Bound::new(1.0, 500.0);
        for x in [1.5, 60.0, 499.0] {
            assert!((b.decode(b.encode(x)) - x).abs() < 1e-9 * x);
        }
    }
}
