//! Small numerical kernels shared by the model formulas.
//!
//! The short-rate formulas are evaluated at mean reversions as small as
//! 1e-5, where the textbook closed forms cancel catastrophically. Every ratio
//! here switches to a power series below a threshold.

use statrs::distribution::{ContinuousCDF, Normal};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// `(1 - exp(-a*tau)) / a`, continuous through `a = 0`.
pub fn decay_integral(a: f64, tau: f64) -> f64 {
    let x = a * tau;
    if x == 0.0 {
        return tau;
    }
    if x.abs() < 1e-6 {
        return tau * (1.0 - x / 2.0 + x * x / 6.0);
    }
    -(-x).exp_m1() / a
}

/// `(x - 1 + exp(-x)) / x^2`. Equals `1/2` at the origin.
pub fn ramp_ratio(x: f64) -> f64 {
    if x.abs() < 1.0 {
        // sum_{n>=2} (-x)^(n-2) / n!
        let mut term = 0.5;
        let mut sum = term;
        for n in 3..40 {
            term *= -x / n as f64;
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        (x + (-x).exp_m1()) / (x * x)
    }
}

/// `(x - 2(1 - e^{-x}) + (1 - e^{-2x})/2) / x^3`. Equals `1/3` at the origin.
///
/// This is the shape of the Gaussian integrated-rate variance.
pub fn hw_variance_ratio(x: f64) -> f64 {
    if x.abs() < 1.0 {
        // coefficient of x^n is (-1)^n (2 - 2^(n-1)) / n!, n >= 3
        let mut sum = 0.0;
        let mut scaled = 1.0 / 6.0; // x^(n-3) / n!
        for n in 3..60_i32 {
            if n > 3 {
                scaled *= x / n as f64;
            }
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let term = sign * (2.0 - 2f64.powi(n - 1)) * scaled;
            sum += term;
            if n > 6 && term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        (x + 2.0 * (-x).exp_m1() - 0.5 * (-2.0 * x).exp_m1()) / (x * x * x)
    }
}

/// `int_0^tau B_1(s) B_2(s) ds` with `B_i(s) = (1 - e^{-a_i s}) / a_i`.
///
/// Composite Gauss-Legendre; stable for any sign or size of the mean
/// reversions, including zero.
pub fn decay_cross_integral(a1: f64, a2: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    let scale = (a1.abs().max(a2.abs()) * tau).ceil().max(1.0) as usize;
    let panels = scale.min(200);
    let h = tau / panels as f64;
    let (nodes, weights) = gauss_legendre_16();
    let mut total = 0.0;
    for p in 0..panels {
        let lo = p as f64 * h;
        let mid = lo + 0.5 * h;
        let mut acc = 0.0;
        for (x, w) in nodes.iter().zip(weights.iter()) {
            let s = mid + 0.5 * h * x;
            acc += w * decay_integral(a1, s) * decay_integral(a2, s);
        }
        total += 0.5 * h * acc;
    }
    total
}

/// Nodes and weights of the 16-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre_16() -> (&'static [f64; 16], &'static [f64; 16]) {
    static RULE: std::sync::OnceLock<([f64; 16], [f64; 16])> = std::sync::OnceLock::new();
    let r = RULE.get_or_init(|| {
        let v = gauss_legendre(16);
        let mut nodes = [0.0; 16];
        let mut weights = [0.0; 16];
        for (i, (x, w)) in v.into_iter().enumerate() {
            nodes[i] = x;
            weights[i] = w;
        }
        (nodes, weights)
    });
    (&r.0, &r.1)
}

/// Gauss-Legendre nodes and weights by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF, accurate in both tails.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x * FRAC_1_SQRT_2)
}

pub fn norm_inv_cdf(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(p)
}

/// `(n-1)!!` for even `n`, i.e. `E[Z^n]` of a standard normal.
pub fn double_factorial_odd(n: usize) -> f64 {
    let mut acc = 1.0;
    let mut k = n as i64 - 1;
    while k > 1 {
        acc *= k as f64;
        k -= 2;
    }
    acc
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
