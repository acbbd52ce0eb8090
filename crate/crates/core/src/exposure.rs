//! Independent and wrong-way exposures.
//!
//! The funding exposure at `u` is split into a part that treats the funding
//! spread as independent of the portfolio and a covariance (WWR) part. The
//! WWR part is either estimated on full credit paths (benchmark) or
//! approximated from moments `E[y_r^l (V)^+]` of the market-only simulation.

use crate::error::{Error, Result};
use crate::instruments::{
    fx_forward_terms, swap_weights, FxForward, FxForwardTerms, Portfolio, Swap, Trade, ValuationPlan, YStar,
};
use crate::mc::{CubeMode, ScenarioCube};
use crate::models::{cir_terms, hw_terms, sigma_ratio, ModelSet, LAMBDA_C, LAMBDA_I};
use crate::models::rate_label;
use crate::numerics::{double_factorial_odd, factorial, norm_cdf, norm_pdf};
use crate::par::{map_indexed, Exec};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const DEFAULT_BATCHES: usize = 50;

/// Number of batch-means batches used for `n_paths` paths.
pub fn batch_count(n_paths: usize) -> usize {
    DEFAULT_BATCHES.min(n_paths).max(1)
}

/// Batch owning global path `p`; batches are contiguous path ranges.
pub fn batch_of(p: usize, n_paths: usize, n_batches: usize) -> usize {
    p * n_batches / n_paths
}

/// Path range of batch `b`.
pub fn batch_range(b: usize, n_paths: usize, n_batches: usize) -> std::ops::Range<usize> {
    let lo = (b * n_paths).div_ceil(n_batches);
    let hi = ((b + 1) * n_paths).div_ceil(n_batches);
    lo..hi
}

/// Per path and date: domestic `y_r`, `(V)^+` and the pathwise discount.
#[derive(Debug, Clone, PartialEq)]
pub struct PathExposures {
    pub dates: Vec<f64>,
    pub first_path: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub y_r: Vec<f64>,
    pub v_plus: Vec<f64>,
    pub discount: Vec<f64>,
}

impl PathExposures {
    pub fn empty(dates: &[f64], seed: u64, capacity_paths: usize) -> Self {
        let cap = capacity_paths * dates.len();
        Self {
            dates: dates.to_vec(),
            first_path: 0,
            n_paths: 0,
            seed,
            y_r: Vec::with_capacity(cap),
            v_plus: Vec::with_capacity(cap),
            discount: Vec::with_capacity(cap),
        }
    }

    pub fn from_cube(cube: &ScenarioCube, plan: &ValuationPlan) -> Result<Self> {
        let mut out = Self::empty(&cube.dates, cube.seed, cube.n_paths);
        out.first_path = cube.first_path;
        out.extend_from_cube(cube, plan)?;
        Ok(out)
    }

    /// Appends the next contiguous block of paths.
    pub fn extend_from_cube(&mut self, cube: &ScenarioCube, plan: &ValuationPlan) -> Result<()> {
        if plan.n_dates() != cube.n_dates() || cube.dates != self.dates {
            return Err(Error::CubeMismatch("valuation plan and cube dates differ".into()));
        }
        if cube.seed != self.seed || cube.first_path != self.first_path + self.n_paths {
            return Err(Error::CubeMismatch("cube is not the next block of this run".into()));
        }
        let nd = cube.n_dates();
        let dom = &cube.rates[0];
        for p in 0..cube.n_paths {
            for d in 0..nd {
                let i = cube.idx(p, d);
                let v = plan.value(cube, p, d);
                if !v.is_finite() {
                    return Err(Error::NonFinite { factor: "portfolio value".into(), path: cube.first_path + p, date: d });
                }
                self.y_r.push(dom.y[i]);
                self.v_plus.push(v.max(0.0));
                self.discount.push(cube.discount[i]);
            }
        }
        self.n_paths += cube.n_paths;
        Ok(())
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    #[inline]
    pub fn idx(&self, path: usize, date: usize) -> usize {
        path * self.dates.len() + date
    }

    /// `h = exp(-int r) (V)^+` for local path/date.
    #[inline]
    pub fn h(&self, path: usize, date: usize) -> f64 {
        let i = self.idx(path, date);
        self.discount[i] * self.v_plus[i]
    }
}

/// Moments of one batch (or of all paths).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub disc_epe: Vec<f64>,
    /// `y_moments[d][l] = E[y_r^l (V)^+]`, `l = 0..=l_max`.
    pub y_moments: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseMoments {
    pub dates: Vec<f64>,
    pub l_max: usize,
    pub n_paths: usize,
    pub mean: MomentSet,
    pub disc_epe_se: Vec<f64>,
    pub y_moments_se: Vec<Vec<f64>>,
    pub batches: Vec<MomentSet>,
}

impl BaseMoments {
    pub fn disc_epe(&self) -> &[f64] {
        &self.mean.disc_epe
    }

    pub fn y_moment(&self, date: usize, l: usize) -> f64 {
        self.mean.y_moments[date][l]
    }
}

/// Batch-mean standard error of the batch values `xs`.
pub fn batch_se(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Path averages of `exp(-int r) V^+` and `y_r^l V^+` with 50-batch standard errors.
pub fn base_moments(ex: &PathExposures, l_max: usize, exec: Exec) -> Result<BaseMoments> {
    if ex.n_paths == 0 {
        return Err(Error::Validation("no paths to average".into()));
    }
    let nd = ex.n_dates();
    let nb = batch_count(ex.n_paths);
    let sums = map_indexed(exec, nb, |b| {
        let r = batch_range(b, ex.n_paths, nb);
        let mut disc = vec![0.0; nd];
        let mut ym = vec![vec![0.0; l_max + 1]; nd];
        for p in r.clone() {
            for d in 0..nd {
                let i = ex.idx(p, d);
                let vp = ex.v_plus[i];
                disc[d] += ex.discount[i] * vp;
                if vp != 0.0 {
                    let y = ex.y_r[i];
                    let mut acc = vp;
                    for slot in ym[d].iter_mut() {
                        *slot += acc;
                        acc *= y;
                    }
                }
            }
        }
        (r.len(), disc, ym)
    });
    let mut total_disc = vec![0.0; nd];
    let mut total_ym = vec![vec![0.0; l_max + 1]; nd];
    let mut batches = Vec::with_capacity(nb);
    for (count, disc, ym) in &sums {
        for d in 0..nd {
            total_disc[d] += disc[d];
            for l in 0..=l_max {
                total_ym[d][l] += ym[d][l];
            }
        }
        let c = *count as f64;
        batches.push(MomentSet {
            disc_epe: disc.iter().map(|x| x / c).collect(),
            y_moments: ym.iter().map(|row| row.iter().map(|x| x / c).collect()).collect(),
        });
    }
    let n = ex.n_paths as f64;
    let mean = MomentSet {
        disc_epe: total_disc.iter().map(|x| x / n).collect(),
        y_moments: total_ym.iter().map(|row| row.iter().map(|x| x / n).collect()).collect(),
    };
    let disc_epe_se = (0..nd)
        .map(|d| batch_se(&batches.iter().map(|b| b.disc_epe[d]).collect::<Vec<_>>()))
        .collect();
    let y_moments_se = (0..nd)
        .map(|d| {
            (0..=l_max)
                .map(|l| batch_se(&batches.iter().map(|b| b.y_moments[d][l]).collect::<Vec<_>>()))
                .collect()
        })
        .collect();
    Ok(BaseMoments { dates: ex.dates.clone(), l_max, n_paths: ex.n_paths, mean, disc_epe_se, y_moments_se, batches })
}

/// Convenience wrapper valuing the portfolio on a base cube first.
pub fn base_moments_from_cube(
    cube: &ScenarioCube,
    portfolio: &Portfolio,
    models: &ModelSet,
    n_r: usize,
) -> Result<BaseMoments> {
    let plan = ValuationPlan::new(portfolio, models, &cube.dates)?;
    let mut ex = PathExposures::from_cube(cube, &plan)?;
    ex.first_path = 0;
    base_moments(&ex, n_r + 2, Exec::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WwrCoeffs {
    pub u: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub nu: f64,
    pub beta: Vec<f64>,
    pub h_ric: f64,
    pub h_ic: f64,
    pub mu_s: f64,
    pub exp_yi_yi: f64,
    pub p_i: f64,
    pub p_c: f64,
    pub lgd: f64,
}

/// `mu_S(t,u) = LGD (mu_I(t,u) + b_I(u))` with `b_I` averaged over the
/// monitoring interval of length `step` ending at `u` (starting at `u` when
/// `u < step`).
pub fn funding_spread_mean(models: &ModelSet, t: f64, u: f64, step: f64) -> f64 {
    let inst = &models.institution;
    let (lo, hi) = if u - step >= 0.0 { (u - step, u) } else { (u, u + step) };
    let b = inst.int_b(lo, hi) / (hi - lo);
    let mu = cir_terms(inst, t, u, inst.x0).mu;
    inst.lgd * (mu + b)
}

/// Coefficients at `u > t`.
pub fn wwr_coeffs(models: &ModelSet, t: f64, u: f64, step: f64, n_r: usize) -> Result<WwrCoeffs> {
    if !(u > t) {
        return Err(Error::Domain(format!("WWR coefficients need u > t (u = {u}, t = {t})")));
    }
    let r = hw_terms(&models.domestic, t, u);
    let ti = cir_terms(&models.institution, t, u, models.institution.x0);
    let tc = cir_terms(&models.counterparty, t, u, models.counterparty.x0);
    let rd = rate_label(&models.domestic_currency);
    let rho_ri = models.rho(&rd, LAMBDA_I)?;
    let rho_rc = models.rho(&rd, LAMBDA_C)?;
    let s_yi = sigma_ratio(ti.var_y, r.var_y)?;
    let s_big_yi = sigma_ratio(ti.var_big_y, r.var_y)?;
    let s_big_yc = sigma_ratio(tc.var_big_y, r.var_y)?;
    let s_big_yr = sigma_ratio(r.var_big_y, r.var_y)?;
    let beta = (0..=n_r).map(|j| (-s_big_yr).powi(j as i32) / factorial(j)).collect();
    Ok(WwrCoeffs {
        u,
        gamma: rho_ri * s_yi,
        alpha: -(rho_ri * s_big_yi + rho_rc * s_big_yc),
        nu: -(rho_ri * rho_ri * s_big_yi + rho_ri * rho_rc * s_big_yc) * s_yi,
        beta,
        h_ric: r.h * ti.h * tc.h,
        h_ic: ti.h * tc.h,
        mu_s: funding_spread_mean(models, t, u, step),
        exp_yi_yi: ti.exp_yy,
        p_i: models.institution.curve.df(u),
        p_c: models.counterparty.curve.df(u),
        lgd: models.institution.lgd,
    })
}

/// Coefficients for every grid date, seen from `t = 0`. At `u = 0` every
/// stochastic driver vanishes, so the WWR coefficients are set to zero.
pub fn profile_coeffs(models: &ModelSet, dates: &[f64], n_r: usize) -> Result<Vec<WwrCoeffs>> {
    let first_step = dates.get(1).copied().unwrap_or(1.0);
    dates
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let step = if i == 0 { first_step } else { u - dates[i - 1] };
            if u == 0.0 {
                let mut beta = vec![0.0; n_r + 1];
                beta[0] = 1.0;
                Ok(WwrCoeffs {
                    u,
                    gamma: 0.0,
                    alpha: 0.0,
                    nu: 0.0,
                    beta,
                    h_ric: 1.0,
                    h_ic: 1.0,
                    mu_s: funding_spread_mean(models, 0.0, 0.0, step),
                    exp_yi_yi: 0.0,
                    p_i: 1.0,
                    p_c: 1.0,
                    lgd: models.institution.lgd,
                })
            } else {
                wwr_coeffs(models, 0.0, u, step, n_r)
            }
        })
        .collect()
}

/// Independent exposure from the discounted EPE of each date.
pub fn epe_indep(disc_epe: &[f64], coeffs: &[WwrCoeffs]) -> Vec<f64> {
    disc_epe
        .iter()
        .zip(coeffs)
        .map(|(e, c)| epe_indep_point(*e, c))
        .collect()
}

#[inline]
pub fn epe_indep_point(disc_epe: f64, c: &WwrCoeffs) -> f64 {
    c.p_i * c.p_c * c.mu_s * disc_epe - c.lgd * c.h_ic * c.exp_yi_yi * disc_epe
}

/// `psi_m = sum_j beta_j E[y^{j+m} V^+]` from a moment row.
pub fn psi(c: &WwrCoeffs, ym: &[f64], m: usize) -> Result<f64> {
    let need = c.beta.len() - 1 + m;
    if ym.len() <= need {
        return Err(Error::Validation(format!(
            "moments up to power {need} required, have {}",
            ym.len().saturating_sub(1)
        )));
    }
    Ok(c.beta.iter().enumerate().map(|(j, b)| b * ym[j + m]).sum())
}

/// Gaussian WWR approximation at one date from a moment row.
pub fn epe_wwr_point(c: &WwrCoeffs, disc_epe: f64, ym: &[f64]) -> Result<f64> {
    let psi1 = psi(c, ym, 1)?;
    let psi2 = psi(c, ym, 2)?;
    Ok(c.h_ric * (c.mu_s * c.alpha + c.lgd * c.gamma) * psi1
        + c.lgd * c.h_ric * c.nu * psi2
        + c.lgd * c.h_ic * c.exp_yi_yi * disc_epe)
}

pub fn epe_wwr_approx_generic(coeffs: &[WwrCoeffs], bm: &BaseMoments) -> Result<Vec<f64>> {
    coeffs
        .iter()
        .enumerate()
        .map(|(d, c)| epe_wwr_point(c, bm.mean.disc_epe[d], &bm.mean.y_moments[d]))
        .collect()
}

/// Central moments of `N(0, variance)` up to `l_max`.
pub fn normal_moments(variance: f64, l_max: usize) -> Vec<f64> {
    (0..=l_max)
        .map(|l| if l % 2 == 1 { 0.0 } else { double_factorial_odd(l) * variance.powi(l as i32 / 2) })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedMoments {
    /// `E[y^l | y <= y*]`; all zero when `underflow` is set.
    pub conditional: Vec<f64>,
    /// `E[y^l 1_{y <= y*}]`.
    pub partial: Vec<f64>,
    pub cdf: f64,
    pub underflow: bool,
}

/// Moments of `N(0, variance)` truncated above at `ystar`.
///
/// The recursion is run on the partial moments `E[y^l 1_{y<=y*}]`, which
/// needs no division by the tail probability.
pub fn truncated_normal_moments(variance: f64, ystar: f64, l_max: usize) -> Result<TruncatedMoments> {
    if !(variance > 0.0) {
        return Err(Error::Domain(format!("truncated moments need positive variance, got {variance}")));
    }
    let sd = variance.sqrt();
    let z = ystar / sd;
    let cdf = norm_cdf(z);
    let dens = if ystar.is_finite() { norm_pdf(z) } else { 0.0 };
    let mut partial = vec![0.0; l_max + 1];
    let mut prev2 = 0.0; // l - 2
    let mut prev1 = cdf; // l - 1
    partial[0] = cdf;
    let mut ypow = 1.0; // ystar^(l-1)
    for l in 1..=l_max {
        let tail = if dens == 0.0 { 0.0 } else { sd * ypow * dens };
        let cur = (l as f64 - 1.0) * variance * prev2 - tail;
        partial[l] = cur;
        prev2 = prev1;
        prev1 = cur;
        ypow *= ystar;
    }
    let underflow = !(cdf > 1e-300);
    let conditional = if underflow {
        vec![0.0; l_max + 1]
    } else {
        partial.iter().map(|p| p / cdf).collect()
    };
    Ok(TruncatedMoments { conditional, partial, cdf, underflow })
}

/// `E[y^l (V)^+]`, `l = 0..=l_max`, of a single swap with the exponentials
/// Taylor-expanded to order `n_a` and the positivity set `{y <= y*}`.
pub fn swap_analytic_moments(s: &Swap, models: &ModelSet, t: f64, u: f64, l_max: usize, n_a: usize) -> Result<Vec<f64>> {
    if u > s.maturity() {
        return Ok(vec![0.0; l_max + 1]);
    }
    let p = models.rates(&s.currency)?;
    let var = hw_terms(p, t, u).var_y;
    let w = swap_weights(s, p, t, u)?;
    let ys = crate::instruments::ystar(s, &w, var.sqrt());
    let top = l_max + n_a;
    let plain = normal_moments(var, top);
    // E[y^k 1_{V >= 0}]
    let ind: Vec<f64> = match ys {
        YStar::NoRoot { positive } => {
            if positive {
                plain.clone()
            } else {
                vec![0.0; top + 1]
            }
        }
        YStar::Root(y) => {
            if var > 0.0 {
                let tm = truncated_normal_moments(var, y, top)?;
                let phi = s.direction.phi();
                (0..=top)
                    .map(|k| if phi < 0.0 { plain[k] - tm.partial[k] } else { tm.partial[k] })
                    .collect()
            } else {
                let positive = crate::instruments::positive_indicator(s, 0.0, ys) > 0.0;
                if positive { plain.clone() } else { vec![0.0; top + 1] }
            }
        }
    };
    let scale = s.direction.phi() * s.notional;
    Ok((0..=l_max)
        .map(|l| {
            let mut acc = w.constant() * ind[l];
            for (wb, b) in w.wbar.iter().zip(&w.b) {
                let mut coef = 1.0;
                let mut inner = 0.0;
                for a in 0..=n_a {
                    inner += coef * ind[a + l];
                    coef *= -b / (a as f64 + 1.0);
                }
                acc += wb * inner;
            }
            scale * acc
        })
        .collect())
}

/// `E[y_d^l (V)^+]` of an FX forward under the one-factor approximation.
pub fn fx_forward_analytic_moments(
    f: &FxForward,
    models: &ModelSet,
    t: f64,
    u: f64,
    l_max: usize,
    n_a: usize,
) -> Result<Vec<f64>> {
    if u > f.maturity {
        return Ok(vec![0.0; l_max + 1]);
    }
    let terms: FxForwardTerms = fx_forward_terms(f, models, t, u)?;
    let var = hw_terms(&models.domestic, t, u).var_y;
    let top = l_max + n_a;
    let plain = normal_moments(var, top);
    let ind: Vec<f64> = match terms.ystar {
        None => if terms.positive_constant { plain.clone() } else { vec![0.0; top + 1] },
        Some(ys) if var > 0.0 => {
            let tm = truncated_normal_moments(var, ys, top)?;
            (0..=top)
                .map(|k| if terms.eta > 0.0 { plain[k] - tm.partial[k] } else { tm.partial[k] })
                .collect()
        }
        Some(_) => {
            if terms.indicator(0.0) > 0.0 { plain.clone() } else { vec![0.0; top + 1] }
        }
    };
    let series = |slope: f64, l: usize| {
        let mut coef = 1.0;
        let mut s = 0.0;
        for a in 0..=n_a {
            s += coef * ind[a + l];
            coef *= -slope / (a as f64 + 1.0);
        }
        s
    };
    Ok((0..=l_max)
        .map(|l| f.notional * (terms.w1 * series(terms.b_dom - terms.eta, l) - terms.w2 * series(terms.b_dom, l)))
        .collect())
}

/// Analytic moments for a single-instrument portfolio.
pub fn analytic_moments(portfolio: &Portfolio, models: &ModelSet, t: f64, u: f64, l_max: usize, n_a: usize) -> Result<Vec<f64>> {
    match portfolio.trades.as_slice() {
        [Trade::Swap(s)] if s.currency == models.domestic_currency => {
            swap_analytic_moments(s, models, t, u, l_max, n_a)
        }
        [Trade::FxForward(f)] => fx_forward_analytic_moments(f, models, t, u, l_max, n_a),
        _ => Err(Error::Config(
            "approx_analytic requires a portfolio of one domestic swap or one FX forward".into(),
        )),
    }
}

/// WWR profile with analytic moments; the discounted EPE still comes from the
/// market simulation.
pub fn epe_wwr_approx_analytic(
    portfolio: &Portfolio,
    coeffs: &[WwrCoeffs],
    models: &ModelSet,
    disc_epe: &[f64],
    n_r: usize,
    n_a: usize,
) -> Result<Vec<f64>> {
    coeffs
        .iter()
        .zip(disc_epe)
        .map(|(c, e)| {
            let ym = if c.u > 0.0 {
                analytic_moments(portfolio, models, 0.0, c.u, n_r + 2, n_a)?
            } else {
                vec![0.0; n_r + 3]
            };
            epe_wwr_point(c, *e, &ym)
        })
        .collect()
}

/// Streaming estimator of the benchmark WWR exposure
/// `E[(h - E h) exp(-int(lambda_I + lambda_C)) (mu_S + LGD y_I)]`.
#[derive(Debug, Clone)]
pub struct McWwrAccumulator {
    n_paths: usize,
    n_batches: usize,
    seed: u64,
    sums: Vec<Vec<f64>>,
    counts: Vec<usize>,
    seen: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McWwr {
    pub value: Vec<f64>,
    pub se: Vec<f64>,
    /// `batch_values[b][d]`.
    pub batch_values: Vec<Vec<f64>>,
    pub truncated_fraction: f64,
}

impl McWwrAccumulator {
    pub fn new(ex: &PathExposures) -> Self {
        let nb = batch_count(ex.n_paths);
        Self {
            n_paths: ex.n_paths,
            n_batches: nb,
            seed: ex.seed,
            sums: vec![vec![0.0; ex.n_dates()]; nb],
            counts: vec![0; nb],
            seen: 0,
        }
    }

    /// Adds a full-mode cube covering any path range of the exposures' run.
    pub fn add(
        &mut self,
        full: &ScenarioCube,
        ex: &PathExposures,
        hbar: &[f64],
        coeffs: &[WwrCoeffs],
        trunc: &mut (u64, u64),
    ) -> Result<()> {
        if full.mode != CubeMode::Full {
            return Err(Error::CubeMismatch("benchmark needs a full-mode cube".into()));
        }
        if full.seed != self.seed {
            return Err(Error::CubeMismatch(format!(
                "full cube seed {} differs from base seed {}",
                full.seed, self.seed
            )));
        }
        if full.dates != ex.dates || full.first_path < ex.first_path || full.paths().end > ex.first_path + ex.n_paths {
            return Err(Error::CubeMismatch("full cube paths or dates not covered by the base run".into()));
        }
        let credit = full.credit()?;
        trunc.0 += credit.truncated_steps;
        trunc.1 += credit.total_steps;
        let nd = full.n_dates();
        for p in 0..full.n_paths {
            let gp = full.first_path + p;
            let b = batch_of(gp - ex.first_path, self.n_paths, self.n_batches);
            let lp = gp - ex.first_path;
            let row = &mut self.sums[b];
            for d in 0..nd {
                let i = full.idx(p, d);
                let c = &coeffs[d];
                let f = c.h_ic * (-credit.big_y_i[i] - credit.big_y_c[i]).exp() * (c.mu_s + c.lgd * credit.y_i[i]);
                row[d] += (ex.h(lp, d) - hbar[d]) * f;
            }
            self.counts[b] += 1;
        }
        self.seen += full.n_paths;
        Ok(())
    }

    pub fn finish(self, trunc: (u64, u64)) -> Result<McWwr> {
        if self.seen != self.n_paths {
            return Err(Error::CubeMismatch(format!(
                "benchmark covered {} of {} paths",
                self.seen, self.n_paths
            )));
        }
        let nd = self.sums.first().map_or(0, Vec::len);
        let batch_values: Vec<Vec<f64>> = self
            .sums
            .iter()
            .zip(&self.counts)
            .map(|(row, &c)| row.iter().map(|s| s / c as f64).collect())
            .collect();
        let n = self.n_paths as f64;
        let value = (0..nd).map(|d| self.sums.iter().map(|r| r[d]).sum::<f64>() / n).collect();
        let se = (0..nd)
            .map(|d| batch_se(&batch_values.iter().map(|b| b[d]).collect::<Vec<_>>()))
            .collect();
        let truncated_fraction = if trunc.1 == 0 { 0.0 } else { trunc.0 as f64 / trunc.1 as f64 };
        Ok(McWwr { value, se, batch_values, truncated_fraction })
    }
}

/// Benchmark WWR exposure on a full cube covering every path of `ex`.
pub fn epe_wwr_mc(full: &ScenarioCube, ex: &PathExposures, bm: &BaseMoments, coeffs: &[WwrCoeffs]) -> Result<McWwr> {
    let mut acc = McWwrAccumulator::new(ex);
    let mut trunc = (0, 0);
    acc.add(full, ex, bm.disc_epe(), coeffs, &mut trunc)?;
    acc.finish(trunc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Wwr,
    Rwr,
    None,
}

impl Verdict {
    fn of(contribution: f64) -> Self {
        if contribution > 0.0 {
            Verdict::Wwr
        } else if contribution < 0.0 {
            Verdict::Rwr
        } else {
            Verdict::None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiPoint {
    pub u: f64,
    pub psi: f64,
    /// `mu_S alpha + LGD gamma`.
    pub net_coefficient: f64,
    pub gamma_term: Verdict,
    pub alpha_term: Verdict,
    pub nu_term: Verdict,
    pub net: Verdict,
}

/// `psi_m` per date together with the WWR/RWR reading of each term.
pub fn psi_diagnostic(bm: &BaseMoments, coeffs: &[WwrCoeffs], m: usize) -> Result<Vec<PsiPoint>> {
    if !(1..=2).contains(&m) {
        return Err(Error::Domain(format!("psi order must be 1 or 2, got {m}")));
    }
    coeffs
        .iter()
        .enumerate()
        .map(|(d, c)| {
            let ym = &bm.mean.y_moments[d];
            let psi1 = psi(c, ym, 1)?;
            let psi2 = psi(c, ym, 2)?;
            let net = c.mu_s * c.alpha + c.lgd * c.gamma;
            Ok(PsiPoint {
                u: c.u,
                psi: if m == 1 { psi1 } else { psi2 },
                net_coefficient: net,
                gamma_term: Verdict::of(c.h_ric * c.lgd * c.gamma * psi1),
                alpha_term: Verdict::of(c.h_ric * c.mu_s * c.alpha * psi1),
                nu_term: Verdict::of(c.h_ric * c.lgd * c.nu * psi2),
                net: Verdict::of(net * psi1),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mc,
    ApproxGeneric,
    ApproxAnalytic,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mc => "mc",
            Method::ApproxGeneric => "approx_generic",
            Method::ApproxAnalytic => "approx_analytic",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mc" => Ok(Method::Mc),
            "approx_generic" => Ok(Method::ApproxGeneric),
            "approx_analytic" => Ok(Method::ApproxAnalytic),
            other => Err(Error::Config(format!(
                "unknown method {other} (expected mc, approx_generic or approx_analytic)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub date: f64,
    pub epe_indep: f64,
    pub epe_wwr: f64,
    pub epe_total: f64,
    pub se_wwr: f64,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureProfile {
    pub method: Method,
    pub rows: Vec<ProfileRow>,
}

impl ExposureProfile {
    pub fn new(method: Method, dates: &[f64], indep: &[f64], wwr: &[f64], se_wwr: &[f64]) -> Result<Self> {
        let n = dates.len();
        if indep.len() != n || wwr.len() != n || se_wwr.len() != n {
            return Err(Error::Validation("profile columns have different lengths".into()));
        }
        let rows = (0..n)
            .map(|i| ProfileRow {
                date: dates[i],
                epe_indep: indep[i],
                epe_wwr: wwr[i],
                epe_total: indep[i] + wwr[i],
                se_wwr: se_wwr[i],
                method,
            })
            .collect();
        Ok(Self { method, rows })
    }

    pub fn dates(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.date).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        for r in &self.rows {
            w.serialize(r).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let rows: Vec<ProfileRow> = rdr
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| csv_error(path, e))?;
        let method = rows
            .first()
            .map(|r| r.method)
            .ok_or_else(|| Error::Parse { path: path.to_path_buf(), message: "empty profile".into() })?;
        Ok(Self { method, rows })
    }
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Parse { path: path.to_path_buf(), message: e.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_partition_paths() {
        for n in [1usize, 7, 50, 51, 1000, 1234] {
            let nb = batch_count(n);
            let mut covered = 0;
            for b in 0..nb {
                let r = batch_range(b, n, nb);
                assert!(!r.is_empty());
                for p in r.clone() {
                    assert_eq!(batch_of(p, n, nb), b);
                }
                covered += r.len();
            }
            assert_eq!(covered, n);
        }
    }

    #[test]
    fn normal_moment_values() {
        let m = normal_moments(2.0, 6);
        assert_eq!(m[1], 0.0);
        assert_eq!(m[3], 0.0);
        assert_eq!(m[2], 2.0);
        assert_eq!(m[4], 12.0);
        assert_eq!(m[6], 120.0);
    }

    #[test]
    fn truncated_limits() {
        let t = truncated_normal_moments(0.3, f64::INFINITY, 8).unwrap();
        let m = normal_moments(0.3, 8);
        for l in 0..=8 {
            assert!((t.conditional[l] - m[l]).abs() < 1e-15);
        }
        let h = truncated_normal_moments(0.3, 0.0, 2).unwrap();
        assert!((h.conditional[1] + (2.0 * 0.3 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
        let u = truncated_normal_moments(1.0, -60.0, 3).unwrap();
        assert!(u.underflow);
        assert!(u.conditional.iter().all(|&x| x == 0.0));
        assert!(truncated_normal_moments(0.0, 1.0, 3).is_err());
    }

    #[test]
    fn method_parsing() {
        assert_eq!("mc".parse::<Method>().unwrap(), Method::Mc);
        assert!("fast".parse::<Method>().is_err());
    }
}
