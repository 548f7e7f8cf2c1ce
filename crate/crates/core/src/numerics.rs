//! Special functions and quadrature used by the density and pricing code.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Scaled complementary error function `exp(x^2) erfc(x)` for `x >= 0`.
pub fn erfcx(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 26.0 {
        (x * x).exp() * libm::erfc(x)
    } else {
        // Continued fraction, converges fast this far out.
        let mut frac = 0.0;
        for k in (1..=40).rev() {
            frac = (k as f64 * 0.5) / (x + frac);
        }
        1.0 / (PI.sqrt() * (x + frac))
    }
}

pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Hh functions `Hh_n(a) = (1/n!) int_a^inf (t - a)^n phi(t) dt` for
/// `n = -1 ..= kmax - 1`, returned as `(log_scale, g)` with
/// `Hh_n(a) / phi(a) = exp(log_scale) * g[n + 1]`.
///
/// Negative arguments run the forward recurrence, which only adds positive
/// terms there. Large positive arguments run Miller's backward recurrence
/// because `Hh_n(a)` is the minimal solution.
pub fn hh_over_phi(a: f64, kmax: usize, out: &mut Vec<f64>) -> f64 {
    out.clear();
    out.resize(kmax + 1, 0.0);
    if kmax == 0 {
        out[0] = 1.0;
        return 0.0;
    }
    if a < 0.0 {
        let scale = 0.5 * a * a;
        // g_{-1} = exp(-a^2/2), g_0 = Phi(-a) sqrt(2 pi)
        out[0] = (-scale).exp();
        out[1] = norm_cdf(-a) * (2.0 * PI).sqrt();
        forward(a, out);
        return scale;
    }
    if a < 3.0 {
        out[0] = 1.0;
        out[1] = (PI / 2.0).sqrt() * erfcx(a * FRAC_1_SQRT_2);
        forward(a, out);
        return 0.0;
    }
    let kmax_f = kmax as f64;
    let top = ((kmax_f.sqrt() + 20.0 / a).powi(2)).ceil() as usize + 2;
    let top = top.max(kmax + 2);
    // Walk n = top ..= 1 with `upper` = y_n and `current` = y_{n-1};
    // y_{n-1} lands in out[n].
    let mut upper = 0.0;
    let mut current = 1e-200;
    for n in (1..=top).rev() {
        let lower = n as f64 * upper + a * current;
        if n <= kmax {
            out[n] = current;
        }
        upper = current;
        current = lower;
        if current.abs() > 1e250 {
            upper *= 1e-250;
            current *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    // `current` is y_{-1}; normalize so Hh_{-1} / phi = 1.
    let norm = current;
    out[0] = current;
    for v in out.iter_mut() {
        *v /= norm;
    }
    0.0
}

fn forward(a: f64, out: &mut [f64]) {
    for m in 2..out.len() {
        let n = (m - 1) as f64;
        out[m] = (out[m - 2] - a * out[m - 1]) / n;
    }
}

/// Poisson probabilities for `n = 0 ..= n_max` and the omitted tail mass.
pub fn poisson_weights(mean: f64, tail_tol: f64, hard_cap: usize) -> (Vec<f64>, f64) {
    if mean <= 0.0 {
        return (vec![1.0], 0.0);
    }
    let mut weights = vec![(-mean).exp()];
    let mut retained = weights[0];
    let mut n = 0usize;
    loop {
        // Direct summation is exact near full mass; the complement covers underflow.
        let tail = if retained < 0.5 {
            1.0 - retained
        } else {
            tail_mass_after(mean, n, weights[n])
        };
        if tail < tail_tol || n >= hard_cap {
            return (weights, tail);
        }
        n += 1;
        let w = weights[n - 1] * mean / n as f64;
        weights.push(w);
        retained += w;
    }
}

/// `sum_{m > n} Poisson(m; mean)` summed directly to avoid cancellation.
fn tail_mass_after(mean: f64, n: usize, weight_n: f64) -> f64 {
    let mut term = weight_n;
    let mut sum = 0.0;
    let mut m = n;
    loop {
        m += 1;
        term *= mean / m as f64;
        sum += term;
        if m > n + 5 && term < sum * 1e-17 {
            return sum;
        }
        if m > n + 100_000 {
            return sum;
        }
    }
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_KRONROD: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const GK_GAUSS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * GK_KRONROD[7];
    let mut gauss = fc * GK_GAUSS[3];
    for i in 0..7 {
        let dx = half * GK_NODES[i];
        let pair = f(center - dx) + f(center + dx);
        kronrod += GK_KRONROD[i] * pair;
        if i % 2 == 1 {
            gauss += GK_GAUSS[i / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss-Kronrod (7, 15) over the panels delimited by `breaks`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, breaks: &[f64], abs_tol: f64) -> f64 {
    let mut total = 0.0;
    let panels = breaks.len().saturating_sub(1).max(1);
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            total += adapt(&f, w[0], w[1], abs_tol / panels as f64, 0);
        }
    }
    total
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (value, err) = gk15(f, a, b);
    if err <= tol.max(64.0 * f64::EPSILON * value.abs()) || depth >= 40 || (b - a) < 1e-13 * (1.0 + a.abs()) {
        return value;
    }
    let mid = 0.5 * (a + b);
    adapt(f, a, mid, 0.5 * tol, depth + 1) + adapt(f, mid, b, 0.5 * tol, depth + 1)
}

/// Inverse of a small dense symmetric-or-not matrix by Gauss-Jordan with
/// partial pivoting. Returns `None` when singular.
pub fn invert(matrix: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col];
        for j in 0..n {
            a[col][j] /= p;
            inv[col][j] /= p;
        }
        for row in 0..n {
            if row != col {
                let factor = a[row][col];
                if factor != 0.0 {
                    for j in 0..n {
                        a[row][j] -= factor * a[col][j];
                        inv[row][j] -= factor * inv[col][j];
                    }
                }
            }
        }
    }
    Some(inv)
}
