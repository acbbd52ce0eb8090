//! Error diagnostics for the WWR approximation: the second-moment constant
//! `C_V`, Taylor-truncation bounds, the explicit bound on the credit
//! truncation error, direct error measurements, and Gaussianity distances
//! of the integrated credit drivers.

use crate::error::{Error, Result};
use crate::exposure::{batch_count, batch_range, batch_se, WwrCoeffs};
use crate::fva::{simulate_exposures, RunInputs};
use crate::instruments::{swap_weights, Swap, Trade};
use crate::mc::{simulate_paths, CubeMode, SimGrid};
use crate::models::{cir_terms, hw_terms, CirppParams, ModelSet};
use crate::numerics::{binomial, double_factorial_odd, factorial, norm_cdf, norm_inv_cdf, norm_pdf};
use crate::par::{map_indexed, Exec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Credit power moments are kept up to this order.
pub const MAX_CREDIT_ORDER: usize = 50;
/// Probability mass kept inside the clipping domain for `C_T`.
pub const CLIP_LEVEL: f64 = 0.9999;
const CALIBRATION_SEED_OFFSET: u64 = 0x5EED_CA11_B0D5_0001;
const CROSS: usize = 4;
const YI_ORDER: usize = 8;

/// `N^2 sum_i gamma_i exp(alpha_i^2 Var[y_r] / 2)`, an upper bound on
/// `E[(V(u)^+)^2]` for a swap in the domestic currency.
pub fn swap_cv_bound(s: &Swap, models: &ModelSet, t: f64, u: f64) -> Result<f64> {
    if s.currency != models.domestic_currency {
        return Err(Error::Config("the analytic second-moment bound needs a domestic swap".into()));
    }
    let w = swap_weights(s, &models.domestic, t, u)?;
    let v = hw_terms(&models.domestic, t, u).var_y;
    let c = w.constant();
    let terms = w.wbar.len() as f64;
    // Written around v = 0 so that nearly cancelling terms stay accurate.
    let total: f64 = w.wbar.iter().sum();
    let squares: f64 = w.wbar.iter().map(|wb| wb * wb).sum();
    let mut sum = (c + total).powi(2) + (terms * squares - total * total);
    for (wb, b) in w.wbar.iter().zip(&w.b) {
        sum += 2.0 * c * wb * (0.5 * b * b * v).exp_m1();
        sum += terms * wb * wb * (2.0 * b * b * v).exp_m1();
    }
    Ok(s.notional * s.notional * sum)
}

/// `sum_{j > n} (-x)^j / j!`, summed directly to avoid cancellation.
pub fn taylor_tail(x: f64, n: usize) -> f64 {
    let mut term = 1.0;
    for j in 1..=n + 1 {
        term *= -x / j as f64;
    }
    let mut sum = term;
    let mut j = n + 1;
    loop {
        j += 1;
        term *= -x / j as f64;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() || term == 0.0 || j > n + 200 {
            return sum;
        }
    }
}

/// Remainder constant on `|x| <= q`: the Lagrange form gives
/// `|tail_{n+1}(x)| <= e^{q} |x|^{n+1} / (n+1)!` there.
pub fn taylor_constant(q: f64) -> f64 {
    q.max(0.0).exp()
}

/// Raw moments of the credit drivers at one date, from the calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreditMomentRow {
    pub date: f64,
    /// `E[Y_I^k]`, `k = 0..=50`.
    pub big_yi: Vec<f64>,
    /// `E[Y_C^k]`.
    pub big_yc: Vec<f64>,
    /// `E[Y_I^k y_I]`.
    pub big_yi_yi: Vec<f64>,
    /// `E[y_I^k]`, `k = 0..=8`.
    pub yi: Vec<f64>,
    /// `E[y_I^j Y_I^k]`, `j, k = 0..=4`.
    pub cross: Vec<Vec<f64>>,
    /// Clipping quantile of `|Y_I + Y_C|`.
    pub q_sum: f64,
}

impl CreditMomentRow {
    /// `E[y_I^j Y_I^k]` for the combinations the bounds use.
    pub fn mixed(&self, j: usize, k: usize) -> Result<f64> {
        match (j, k) {
            (0, k) if k <= MAX_CREDIT_ORDER => Ok(self.big_yi[k]),
            (1, k) if k <= MAX_CREDIT_ORDER => Ok(self.big_yi_yi[k]),
            (j, 0) if j <= YI_ORDER => Ok(self.yi[j]),
            (j, k) if j <= CROSS && k <= CROSS => Ok(self.cross[j][k]),
            _ => Err(Error::Numerical(format!("credit moment E[y_I^{j} Y_I^{k}] not calibrated"))),
        }
    }

    /// `E[(Y_I + Y_C)^m y_I^j]` by the binomial formula and `I`/`C` independence.
    pub fn sum_moment(&self, m: usize, j: usize) -> Result<f64> {
        (0..=m).map(|k| Ok(binomial(m, k) * self.mixed(j, m - k)? * self.big_yc[k])).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CreditCalibration {
    pub n_paths: usize,
    pub seed: u64,
    pub rows: Vec<CreditMomentRow>,
    /// `(date index, Y_I samples, Y_C samples)` for the requested dates.
    pub samples: Vec<(usize, Vec<f64>, Vec<f64>)>,
}

struct CalibChunk {
    sums: Vec<Vec<f64>>,
    qs: Vec<Vec<f64>>,
    samples: Vec<(Vec<f64>, Vec<f64>)>,
}

const ROW_LEN: usize = 3 * (MAX_CREDIT_ORDER + 1) + (YI_ORDER + 1) + (CROSS + 1) * (CROSS + 1);

fn accumulate(row: &mut [f64], big_yi: f64, big_yc: f64, yi: f64) {
    let n1 = MAX_CREDIT_ORDER + 1;
    let (mut p_i, mut p_c) = (1.0, 1.0);
    for k in 0..n1 {
        row[k] += p_i;
        row[n1 + k] += p_c;
        row[2 * n1 + k] += p_i * yi;
        p_i *= big_yi;
        p_c *= big_yc;
    }
    let mut p = 1.0;
    for j in 0..=YI_ORDER {
        row[3 * n1 + j] += p;
        p *= yi;
    }
    let base = 3 * n1 + YI_ORDER + 1;
    let mut pj = 1.0;
    for j in 0..=CROSS {
        let mut pk = pj;
        for k in 0..=CROSS {
            row[base + j * (CROSS + 1) + k] += pk;
            pk *= big_yi;
        }
        pj *= yi;
    }
}

/// Credit-only simulation of both intensities (independent by construction)
/// on the run grid, with its own random stream, accumulating power sums.
pub fn credit_calibration(
    models: &ModelSet,
    grid: &SimGrid,
    n_paths: usize,
    seed: u64,
    sample_dates: &[usize],
    exec: Exec,
) -> Result<CreditCalibration> {
    if n_paths < 2 {
        return Err(Error::Validation("credit calibration needs at least two paths".into()));
    }
    let dates = grid.dates();
    let nd = dates.len();
    let cm: [&CirppParams; 2] = [&models.institution, &models.counterparty];
    let consts: Vec<[(f64, f64); 2]> = dates
        .iter()
        .map(|&u| cm.map(|p| {
            let c = cir_terms(p, 0.0, u, p.x0);
            (c.mu, c.big_m)
        }))
        .collect();
    let seed = seed.wrapping_add(CALIBRATION_SEED_OFFSET);
    let chunk = 256;
    let n_chunks = n_paths.div_ceil(chunk);
    let chunks: Vec<CalibChunk> = map_indexed(exec, n_chunks, |ci| {
        let paths = ci * chunk..((ci + 1) * chunk).min(n_paths);
        let mut out = CalibChunk {
            sums: vec![vec![0.0; ROW_LEN]; nd],
            qs: vec![Vec::with_capacity(paths.len()); nd],
            samples: vec![(Vec::with_capacity(paths.len()), Vec::with_capacity(paths.len())); sample_dates.len()],
        };
        for path in paths {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(path as u64);
            let mut lam = [cm[0].x0, cm[1].x0];
            let mut int = [0.0; 2];
            let record = |d: usize, lam: &[f64; 2], int: &[f64; 2], out: &mut CalibChunk| {
                let (big_yi, big_yc) = (int[0] - consts[d][0].1, int[1] - consts[d][1].1);
                let yi = lam[0] - consts[d][0].0;
                accumulate(&mut out.sums[d], big_yi, big_yc, yi);
                out.qs[d].push((big_yi + big_yc).abs());
                if let Some(s) = sample_dates.iter().position(|&sd| sd == d) {
                    out.samples[s].0.push(big_yi);
                    out.samples[s].1.push(big_yc);
                }
            };
            record(0, &lam, &int, &mut out);
            for d in 1..nd {
                let h = (dates[d] - dates[d - 1]) / grid.substeps as f64;
                for _ in 0..grid.substeps {
                    for e in 0..2 {
                        let p = cm[e];
                        let z: f64 = StandardNormal.sample(&mut rng);
                        let xp = lam[e].max(0.0);
                        let xn = (lam[e] + p.a * (p.theta - xp) * h + p.sigma * xp.sqrt() * h.sqrt() * z).max(0.0);
                        int[e] += 0.5 * (xp + xn) * h;
                        lam[e] = xn;
                    }
                }
                record(d, &lam, &int, &mut out);
            }
        }
        out
    });
    let n = n_paths as f64;
    let n1 = MAX_CREDIT_ORDER + 1;
    let mut rows = Vec::with_capacity(nd);
    for d in 0..nd {
        let mut s = vec![0.0; ROW_LEN];
        let mut q = Vec::with_capacity(n_paths);
        for c in &chunks {
            for (a, b) in s.iter_mut().zip(&c.sums[d]) {
                *a += b;
            }
            q.extend_from_slice(&c.qs[d]);
        }
        for v in s.iter_mut() {
            *v /= n;
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("credit moments overflow at date {}", dates[d])));
        }
        let base = 3 * n1 + YI_ORDER + 1;
        rows.push(CreditMomentRow {
            date: dates[d],
            big_yi: s[..n1].to_vec(),
            big_yc: s[n1..2 * n1].to_vec(),
            big_yi_yi: s[2 * n1..3 * n1].to_vec(),
            yi: s[3 * n1..base].to_vec(),
            cross: (0..=CROSS).map(|j| s[base + j * (CROSS + 1)..base + (j + 1) * (CROSS + 1)].to_vec()).collect(),
            q_sum: quantile(&mut q, CLIP_LEVEL),
        });
    }
    let samples = sample_dates
        .iter()
        .enumerate()
        .map(|(s, &d)| {
            let mut yi = Vec::with_capacity(n_paths);
            let mut yc = Vec::with_capacity(n_paths);
            for c in &chunks {
                yi.extend_from_slice(&c.samples[s].0);
                yc.extend_from_slice(&c.samples[s].1);
            }
            (d, yi, yc)
        })
        .collect();
    Ok(CreditCalibration { n_paths, seed, rows, samples })
}

fn quantile(v: &mut [f64], level: f64) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let k = ((level * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    *v.select_nth_unstable_by(k, f64::total_cmp).1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Credit Taylor truncation with weight 1.
    E1One,
    /// Credit Taylor truncation with weight `y_I`.
    E1Yi,
    /// Rate Taylor truncation with weight `-(Y_I + Y_C)`.
    E2One,
    E2Yi,
    /// Rate Taylor truncation with weight `y_I`.
    E3Yi,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::E1One, Family::E1Yi, Family::E2One, Family::E2Yi, Family::E3Yi];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::E1One => "e1_1",
            Family::E1Yi => "e1_yI",
            Family::E2One => "e2_1",
            Family::E2Yi => "e2_yI",
            Family::E3Yi => "e3_yI",
        }
    }

    fn weight_power(self) -> usize {
        match self {
            Family::E1One | Family::E2One => 0,
            _ => 1,
        }
    }
}

/// `sqrt(E[X^4] - E[X^2]^2) sqrt(E[Z^4] - E[Z^2]^2) + E[X^2] E[Z^2]`, the
/// correlation-free bound on `E[X^2 Z^2]`.
fn product_bound(x2: f64, x4: f64, z2: f64, z4: f64) -> f64 {
    (x4 - x2 * x2).max(0.0).sqrt() * (z4 - z2 * z2).max(0.0).sqrt() + x2 * z2
}

/// `C_1(m, x)` with `x = y_I^p`: bound on `E[exp(-m Y_r) x^m]`.
pub fn c1(m: usize, p: usize, var_big_yr: f64, credit: &CreditMomentRow) -> Result<f64> {
    let mf = (m * m) as f64;
    let xm = credit.mixed(m * p, 0)?;
    let x2m = credit.mixed(2 * m * p, 0)?;
    let spread = ((2.0 * mf * var_big_yr).exp() - (mf * var_big_yr).exp()).max(0.0).sqrt();
    Ok(spread * (x2m - xm * xm).max(0.0).sqrt() + (0.5 * mf * var_big_yr).exp() * xm)
}

/// Gaussian raw moment `E[Y^k]` for `Y ~ N(0, v)`.
fn gauss_moment(k: usize, v: f64) -> f64 {
    if k % 2 == 1 {
        0.0
    } else {
        double_factorial_odd(k) * v.powi(k as i32 / 2)
    }
}

/// Inputs shared by the bounds at one date.
#[derive(Debug, Clone)]
pub struct DateBoundInputs<'a> {
    pub coeffs: &'a WwrCoeffs,
    pub credit: &'a CreditMomentRow,
    pub var_big_yr: f64,
    pub c_v: f64,
    pub disc_epe: f64,
}

/// Truncation bound `H sqrt(C_V) C_T / (n+1)! sqrt(E[Y_z^{2(n+1)} xbar^2])`
/// with the inner expectation replaced by its correlation-free bound.
pub fn truncation_bound(family: Family, n: usize, inp: &DateBoundInputs) -> Result<f64> {
    let k = 2 * (n + 1);
    let p = family.weight_power();
    let vr = inp.var_big_yr;
    let (ct, inner) = match family {
        Family::E1One | Family::E1Yi => {
            let ct = taylor_constant(inp.credit.q_sum);
            let y2 = inp.credit.sum_moment(k, 0)?;
            let y4 = inp.credit.sum_moment(2 * k, 0)?;
            let x2 = c1(2, p, vr, inp.credit)?;
            let x4 = c1(4, p, vr, inp.credit)?;
            let spread = (2.0 * (x4 + x2 * x2)).sqrt();
            (ct, (y4 - y2 * y2).max(0.0).sqrt() * spread + y2 * x2)
        }
        Family::E2One | Family::E2Yi | Family::E3Yi => {
            let ct = taylor_constant(norm_inv_cdf(0.5 + 0.5 * CLIP_LEVEL) * vr.sqrt());
            let (x2, x4) = if family == Family::E3Yi {
                (inp.credit.mixed(2, 0)?, inp.credit.mixed(4, 0)?)
            } else {
                (inp.credit.sum_moment(2, 2 * p)?, inp.credit.sum_moment(4, 4 * p)?)
            };
            (ct, product_bound(gauss_moment(k, vr), gauss_moment(2 * k, vr), x2, x4))
        }
    };
    Ok(inp.coeffs.h_ric * inp.c_v.sqrt() * ct / factorial(n + 1) * inner.max(0.0).sqrt())
}

/// `C_3(x)` of the explicit credit-truncation bound.
pub fn c3(p: usize, var_big_yr: f64, credit: &CreditMomentRow) -> Result<f64> {
    let y4 = credit.sum_moment(4, 0)?;
    let y8 = credit.sum_moment(8, 0)?;
    let x2 = c1(2, p, var_big_yr, credit)?;
    let x4 = c1(4, p, var_big_yr, credit)?;
    Ok(((y8 - y4 * y4).max(0.0).sqrt() * (2.0 * (x4 + x2 * x2)).sqrt() + y4 * x2).max(0.0).sqrt())
}

/// `C_4(x) = sum_{i>=2} (-1)^i / i! E[(Y_I + Y_C)^i x]`.
pub fn c4(p: usize, credit: &CreditMomentRow) -> Result<f64> {
    let mut sum = 0.0;
    for i in 2..=MAX_CREDIT_ORDER {
        let term = if i % 2 == 0 { 1.0 } else { -1.0 } / factorial(i) * credit.sum_moment(i, p)?;
        sum += term;
        if term.abs() <= 1e-15 * sum.abs().max(1e-300) {
            return Ok(sum);
        }
    }
    Err(Error::Numerical(format!(
        "C4 series not converged after {MAX_CREDIT_ORDER} terms at date {}",
        credit.date
    )))
}

/// Explicit signed upper bound
/// `H_rIC sqrt(C_V) C_T2 C_3(x) / 2 - H_IC disc_epe C_4(x)`.
pub fn explicit_e1_bound(p: usize, inp: &DateBoundInputs) -> Result<f64> {
    let ct2 = taylor_constant(inp.credit.q_sum);
    Ok(inp.coeffs.h_ric * inp.c_v.sqrt() * ct2 * c3(p, inp.var_big_yr, inp.credit)? / 2.0
        - inp.coeffs.h_ic * inp.disc_epe * c4(p, inp.credit)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianDistance {
    /// `1/(12n) + sum_i (Phi(x_(i)/s) - (2i-1)/(2n))^2`.
    pub cvm: f64,
    /// `int |F_n(x) - Phi(x/s)| dx`, evaluated exactly.
    pub wasserstein: f64,
}

/// Distance of the sample distribution from `N(0, variance)`.
pub fn gaussian_distance(samples: &[f64], variance: f64) -> Result<GaussianDistance> {
    if samples.len() < 1000 {
        return Err(Error::Validation(format!("need at least 1000 samples, got {}", samples.len())));
    }
    if !(variance > 0.0) {
        return Err(Error::Domain("reference variance must be positive (date 0 is degenerate)".into()));
    }
    let s = variance.sqrt();
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let cvm = 1.0 / (12.0 * n)
        + x.iter()
            .enumerate()
            .map(|(i, v)| {
                let d = norm_cdf(v / s) - (2.0 * i as f64 + 1.0) / (2.0 * n);
                d * d
            })
            .sum::<f64>();
    // Antiderivative of Phi(x/s).
    let g = |v: f64| v * norm_cdf(v / s) + s * norm_pdf(v / s);
    let mut w = g(x[0]) + g(-x[x.len() - 1]);
    for i in 0..x.len() - 1 {
        let (a, b) = (x[i], x[i + 1]);
        if b <= a {
            continue;
        }
        let level = (i + 1) as f64 / n;
        let seg = |lo: f64, hi: f64| level * (hi - lo) - (g(hi) - g(lo));
        let c = s * norm_inv_cdf(level);
        w += if c > a && c < b { seg(a, c).abs() + seg(c, b).abs() } else { seg(a, b).abs() };
    }
    Ok(GaussianDistance { cvm, wasserstein: w })
}

/// Errors measured directly on the simulated paths of the run.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredErrors {
    pub orders: Vec<usize>,
    /// `[date][family][order]`.
    pub values: Vec<Vec<Vec<f64>>>,
    /// `E[(V^+)^2]` per date.
    pub second_moment: Vec<f64>,
}

/// Direct expectations of the truncation errors from the full simulation
/// of the run: the benchmark cube's credit paths against the stored exposures.
pub fn measure_errors(
    inputs: &RunInputs,
    models: &ModelSet,
    grid: &SimGrid,
    ex: &crate::exposure::PathExposures,
    coeffs: &[WwrCoeffs],
    orders: &[usize],
) -> Result<MeasuredErrors> {
    let sim = &inputs.cfg.simulation;
    let nd = grid.len();
    let no = orders.len();
    let nf = Family::ALL.len();
    // Per date: sum d, and per (family, order): sum d*T*x, sum T*x, or sum of the
    // rate-truncation integrand.
    let mut sum_d = vec![0.0; nd];
    let mut sum_v2 = vec![0.0; nd];
    let mut acc = vec![vec![vec![[0.0f64; 2]; no]; nf]; nd];
    let nb = batch_count(sim.paths);
    for b in 0..nb {
        let cube = simulate_paths(models, grid, batch_range(b, sim.paths, nb), sim.seed, CubeMode::Full, sim.exec)?;
        let credit = cube.credit()?;
        let dom = &cube.rates[0];
        for p in 0..cube.n_paths {
            let lp = cube.first_path + p - ex.first_path;
            for d in 1..nd {
                let i = cube.idx(p, d);
                let j = ex.idx(lp, d);
                let v = ex.v_plus[j];
                let disc_v = ex.h(lp, d);
                let ysum = credit.big_y_i[i] + credit.big_y_c[i];
                let yi = credit.y_i[i];
                let big_yr = dom.big_y[i];
                sum_d[d] += disc_v;
                sum_v2[d] += v * v;
                for (oi, &n) in orders.iter().enumerate() {
                    let tc = taylor_tail(ysum, n);
                    let tr = taylor_tail(big_yr, n);
                    for (fi, f) in Family::ALL.iter().enumerate() {
                        let x = if f.weight_power() == 0 { 1.0 } else { yi };
                        let a = &mut acc[d][fi][oi];
                        match f {
                            Family::E1One | Family::E1Yi => {
                                a[0] += disc_v * tc * x;
                                a[1] += tc * x;
                            }
                            Family::E2One | Family::E2Yi => a[0] += tr * x * (-ysum) * v,
                            Family::E3Yi => a[0] += tr * x * v,
                        }
                    }
                }
            }
        }
    }
    let n = sim.paths as f64;
    let values = (0..nd)
        .map(|d| {
            let c = &coeffs[d];
            (0..nf)
                .map(|fi| {
                    (0..no)
                        .map(|oi| {
                            let a = acc[d][fi][oi];
                            match Family::ALL[fi] {
                                Family::E1One | Family::E1Yi => {
                                    c.h_ic * (a[0] / n - (sum_d[d] / n) * (a[1] / n))
                                }
                                _ => c.h_ric * a[0] / n,
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(MeasuredErrors { orders: orders.to_vec(), values, second_moment: sum_v2.iter().map(|s| s / n).collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub date: f64,
    pub family: String,
    pub n: Option<usize>,
    pub bound: f64,
    pub measured_error: Option<f64>,
    /// Monte Carlo standard error of `measured_error`, where reported.
    pub measured_se: Option<f64>,
    pub cvm: Option<f64>,
    pub wasserstein: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundOptions {
    pub orders: Vec<usize>,
    pub calibration_paths: usize,
    /// Dates (grid indices) with Gaussianity diagnostics.
    pub distance_dates: Vec<usize>,
    /// Measure the errors on the run's full simulation.
    pub measure: bool,
}

impl BoundOptions {
    pub fn defaults(grid: &SimGrid, paths: usize) -> Self {
        let nd = grid.len();
        let distance_dates = [nd / 4, nd / 2, nd - 1].into_iter().filter(|&d| d > 0).collect();
        Self { orders: (1..=6).collect(), calibration_paths: paths, distance_dates, measure: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
    /// `"analytic"` for a single domestic swap, `"empirical"` otherwise.
    pub cv_source: String,
    pub clip_level: f64,
    pub calibration_paths: usize,
}

impl BoundReport {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| crate::exposure::csv_error(path, e))?;
        for r in &self.rows {
            w.serialize(r).map_err(|e| crate::exposure::csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn find(&self, family: &str, n: Option<usize>) -> Vec<&BoundRow> {
        self.rows.iter().filter(|r| r.family == family && r.n == n).collect()
    }
}

/// Evaluates every bound of the run at every positive grid date.
pub fn run_bounds(inputs: &RunInputs, opts: &BoundOptions) -> Result<BoundReport> {
    let models = inputs.models()?;
    inputs.portfolio.check_against(&models)?;
    let grid = inputs.grid()?;
    let dates = grid.dates().to_vec();
    let nd = dates.len();
    let exec = inputs.cfg.simulation.exec;
    let coeffs = crate::exposure::profile_coeffs(&models, &dates, inputs.cfg.approximation.n_r)?;
    let ex = simulate_exposures(inputs, &models, &grid)?;
    let disc = crate::exposure::base_moments(&ex, 0, exec)?.mean.disc_epe;
    let nb = batch_count(ex.n_paths);
    let (second, second_se): (Vec<f64>, Vec<f64>) = (0..nd)
        .map(|d| {
            let per_batch: Vec<f64> = (0..nb)
                .map(|b| {
                    let r = batch_range(b, ex.n_paths, nb);
                    let len = r.len() as f64;
                    r.map(|p| ex.v_plus[ex.idx(p, d)].powi(2)).sum::<f64>() / len
                })
                .collect();
            let total = (0..ex.n_paths).map(|p| ex.v_plus[ex.idx(p, d)].powi(2)).sum::<f64>() / ex.n_paths as f64;
            (total, batch_se(&per_batch))
        })
        .unzip();
    let analytic_swap = match inputs.portfolio.trades.as_slice() {
        [Trade::Swap(s)] if s.currency == models.domestic_currency => Some(s.clone()),
        _ => None,
    };
    let c_v: Vec<f64> = match &analytic_swap {
        Some(s) => dates.iter().map(|&u| swap_cv_bound(s, &models, 0.0, u)).collect::<Result<_>>()?,
        None => second.clone(),
    };
    let cal = credit_calibration(&models, &grid, opts.calibration_paths, inputs.cfg.simulation.seed, &opts.distance_dates, exec)?;
    let measured = if opts.measure {
        Some(measure_errors(inputs, &models, &grid, &ex, &coeffs, &opts.orders)?)
    } else {
        None
    };
    drop(ex);

    let mut rows = Vec::new();
    for d in 1..nd {
        let u = dates[d];
        let inp = DateBoundInputs {
            coeffs: &coeffs[d],
            credit: &cal.rows[d],
            var_big_yr: hw_terms(&models.domestic, 0.0, u).var_big_y,
            c_v: c_v[d],
            disc_epe: disc[d],
        };
        let row = |family: &str, n: Option<usize>, bound: f64, measured_error: Option<f64>| BoundRow {
            date: u,
            family: family.to_string(),
            n,
            bound,
            measured_error,
            measured_se: None,
            cvm: None,
            wasserstein: None,
        };
        rows.push(BoundRow { measured_se: Some(second_se[d]), ..row("cv", None, c_v[d], Some(second[d])) });
        let e1_measured = |fi: usize| {
            measured
                .as_ref()
                .and_then(|m| m.orders.iter().position(|&o| o == 1).map(|oi| m.values[d][fi][oi]))
        };
        rows.push(row("e1_explicit_1", Some(1), explicit_e1_bound(0, &inp)?, e1_measured(0)));
        rows.push(row("e1_explicit_yI", Some(1), explicit_e1_bound(1, &inp)?, e1_measured(1)));
        for (fi, f) in Family::ALL.iter().enumerate() {
            for (oi, &n) in opts.orders.iter().enumerate() {
                let m = measured.as_ref().map(|m| m.values[d][fi][oi].abs());
                rows.push(row(f.as_str(), Some(n), truncation_bound(*f, n, &inp)?, m));
            }
        }
    }
    for (d, yi, yc) in &cal.samples {
        let u = dates[*d];
        for (label, samples, p) in [("gauss_Y_I", yi, &models.institution), ("gauss_Y_C", yc, &models.counterparty)] {
            let v = cir_terms(p, 0.0, u, p.x0).var_big_y;
            let g = gaussian_distance(samples, v)?;
            rows.push(BoundRow {
                date: u,
                family: label.to_string(),
                n: None,
                bound: 0.0,
                measured_error: None,
                measured_se: None,
                cvm: Some(g.cvm),
                wasserstein: Some(g.wasserstein),
            });
        }
    }
    Ok(BoundReport {
        rows,
        cv_source: if analytic_swap.is_some() { "analytic" } else { "empirical" }.to_string(),
        clip_level: CLIP_LEVEL,
        calibration_paths: cal.n_paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taylor_tail_matches_difference() {
        for &x in &[-0.7, -0.05, 0.0, 0.3, 1.2] {
            for n in 0..6 {
                let partial: f64 = (0..=n).map(|j| (-x as f64).powi(j as i32) / factorial(j)).sum();
                let direct = (-x as f64).exp() - partial;
                assert!((taylor_tail(x, n) - direct).abs() < 1e-15, "{x} {n}");
            }
        }
    }

    #[test]
    fn lagrange_remainder_holds_on_clip_domain() {
        let q = 0.8;
        for i in 0..=160 {
            let x = -q + 2.0 * q * i as f64 / 160.0;
            for n in 0..6 {
                let rhs = taylor_constant(q) * x.abs().powi(n as i32 + 1) / factorial(n + 1);
                assert!(taylor_tail(x, n).abs() <= rhs + 1e-18);
            }
        }
    }

    #[test]
    fn quantile_picks_order_statistic() {
        let mut v: Vec<f64> = (1..=10000).map(f64::from).collect();
        v.reverse();
        assert_eq!(quantile(&mut v, 0.9999), 9999.0);
        assert_eq!(quantile(&mut v, 0.5), 5000.0);
    }

    #[test]
    fn wasserstein_of_symmetric_two_points() {
        // F_n jumps 0 -> 1/2 -> 1 at -1 and 1; brute-force the integral.
        let mut x = vec![-1.0; 500];
        x.extend(vec![1.0; 500]);
        let s = 1.0;
        let g = gaussian_distance(&x, s).unwrap();
        let (lo, hi, m) = (-12.0, 12.0, 480_000);
        let dx = (hi - lo) / m as f64;
        let brute: f64 = (0..m)
            .map(|i| {
                let v = lo + (i as f64 + 0.5) * dx;
                let f = if v < -1.0 { 0.0 } else if v < 1.0 { 0.5 } else { 1.0 };
                (f - norm_cdf(v)).abs() * dx
            })
            .sum();
        assert!((g.wasserstein - brute).abs() < 1e-8, "{} {}", g.wasserstein, brute);
    }
}
