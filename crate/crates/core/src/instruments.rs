//! Swaps, FX forwards and portfolio valuation on simulated states.

use crate::error::{Error, Result};
use crate::mc::{FxSlab, RateSlab, ScenarioCube};
use crate::models::{hw_terms, sigma_ratio, Hw1fParams, ModelSet};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Payer,
    Receiver,
}

impl Direction {
    pub fn phi(self) -> f64 {
        match self {
            Direction::Payer => -1.0,
            Direction::Receiver => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Swap {
    pub direction: Direction,
    pub notional: f64,
    pub strike: f64,
    /// `T_0 < T_1 < ... < T_m`.
    pub schedule: Vec<f64>,
    pub currency: String,
}

impl Swap {
    pub fn new(
        direction: Direction,
        notional: f64,
        strike: f64,
        schedule: Vec<f64>,
        currency: impl Into<String>,
    ) -> Result<Self> {
        if schedule.len() < 2 {
            return Err(Error::Validation("swap schedule needs at least T0 and T1".into()));
        }
        if schedule[0] < 0.0 || schedule.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation("swap schedule must be non-negative and strictly increasing".into()));
        }
        if !notional.is_finite() || !strike.is_finite() {
            return Err(Error::Validation("swap notional and strike must be finite".into()));
        }
        Ok(Self { direction, notional, strike, schedule, currency: currency.into() })
    }

    /// Regular schedule from `start` to `maturity` with `frequency` payments per year.
    pub fn regular(
        direction: Direction,
        notional: f64,
        strike: f64,
        start: f64,
        maturity: f64,
        frequency: f64,
        currency: impl Into<String>,
    ) -> Result<Self> {
        if !(frequency > 0.0) || !(maturity > start) {
            return Err(Error::Validation("swap needs maturity > start and positive frequency".into()));
        }
        let n = ((maturity - start) * frequency).round().max(1.0) as usize;
        let schedule = (0..=n).map(|k| start + (maturity - start) * k as f64 / n as f64).collect();
        Self::new(direction, notional, strike, schedule, currency)
    }

    pub fn start(&self) -> f64 {
        self.schedule[0]
    }

    pub fn maturity(&self) -> f64 {
        *self.schedule.last().expect("validated schedule")
    }

    pub fn m(&self) -> usize {
        self.schedule.len() - 1
    }

    /// Raw weights `w_0 = -1, w_k = K tau_k, w_m = 1 + K tau_m`.
    pub fn raw_weights(&self) -> Vec<f64> {
        let m = self.m();
        (0..=m)
            .map(|k| {
                if k == 0 {
                    -1.0
                } else {
                    let tau = self.schedule[k] - self.schedule[k - 1];
                    self.strike * tau + if k == m { 1.0 } else { 0.0 }
                }
            })
            .collect()
    }

    /// `beta(u)`: 0 on `[t0, T0]`, `j+1` on `(T_j, T_{j+1}]`.
    pub fn beta(&self, u: f64) -> usize {
        if u <= self.schedule[0] {
            0
        } else {
            self.schedule.partition_point(|&t| t < u)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwapWeights {
    pub beta: usize,
    pub after_start: bool,
    /// Raw weights `w_k` for `k = beta..=m`.
    pub w: Vec<f64>,
    /// Scaled weights `w_bar_k` for `k = beta..=m`.
    pub wbar: Vec<f64>,
    /// `B(u, T_k)` for `k = beta..=m`.
    pub b: Vec<f64>,
}

impl SwapWeights {
    /// Weight on the floating-leg notional already exchanged.
    pub fn constant(&self) -> f64 {
        if self.after_start {
            -1.0
        } else {
            0.0
        }
    }
}

/// Weights of the swap value as a function of `y_r(t,u)`; `p` are the rate
/// parameters of the swap currency.
pub fn swap_weights(s: &Swap, p: &Hw1fParams, t: f64, u: f64) -> Result<SwapWeights> {
    if u > s.maturity() {
        return Err(Error::Domain(format!("valuation date {u} after swap maturity {}", s.maturity())));
    }
    let beta = s.beta(u);
    let mu = hw_terms(p, t, u).mu;
    let raw = s.raw_weights();
    let mut w = Vec::with_capacity(raw.len() - beta);
    let mut wbar = Vec::with_capacity(raw.len() - beta);
    let mut b = Vec::with_capacity(raw.len() - beta);
    for k in beta..raw.len() {
        let tk = s.schedule[k];
        let bk = p.b(tk - u);
        w.push(raw[k]);
        wbar.push(raw[k] * (p.a_bar(u, tk) - mu * bk).exp());
        b.push(bk);
    }
    Ok(SwapWeights { beta, after_start: u > s.start(), w, wbar, b })
}

/// `phi N (-1_{u>T0} + sum_k w_bar_k exp(-y B(u,T_k)))`.
pub fn swap_value_y(s: &Swap, weights: &SwapWeights, y: f64) -> f64 {
    let sum: f64 = weights.wbar.iter().zip(&weights.b).map(|(w, b)| w * (-y * b).exp()).sum();
    s.direction.phi() * s.notional * (weights.constant() + sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum YStar {
    Root(f64),
    /// Positivity does not change over the searched range.
    NoRoot { positive: bool },
}

/// Positivity boundary of the swap value in `y`. `sd_y` scales the bracket.
pub fn ystar(s: &Swap, weights: &SwapWeights, sd_y: f64) -> YStar {
    let phi = s.direction.phi();
    // g is decreasing with sign(g) = sign(V / phi)
    let (coef, expo): (Vec<f64>, Vec<f64>) = if weights.after_start {
        (weights.wbar.clone(), weights.b.clone())
    } else {
        let (w0, b0) = (weights.wbar[0], weights.b[0]);
        weights.wbar[1..]
            .iter()
            .zip(&weights.b[1..])
            .map(|(w, b)| (w / -w0, b - b0))
            .unzip()
    };
    let g = |y: f64| -1.0 + coef.iter().zip(&expo).map(|(c, d)| c * (-y * d).exp()).sum::<f64>();
    let dg = |y: f64| -coef.iter().zip(&expo).map(|(c, d)| c * d * (-y * d).exp()).sum::<f64>();
    let positive_at = |y: f64| if phi > 0.0 { g(y) >= 0.0 } else { g(y) <= 0.0 };
    if !(sd_y > 0.0) {
        return YStar::NoRoot { positive: positive_at(0.0) };
    }
    let mut k = 1.0;
    let bracket = loop {
        let (lo, hi) = (-k * sd_y, k * sd_y);
        let (glo, ghi) = (g(lo), g(hi));
        if glo >= 0.0 && ghi <= 0.0 && glo != ghi {
            break Some((lo, hi));
        }
        if k >= 64.0 {
            break None;
        }
        k *= 2.0;
    };
    let Some((mut lo, mut hi)) = bracket else {
        return YStar::NoRoot { positive: positive_at(0.0) };
    };
    let tol = 1e-8 * sd_y;
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut y = 0.5 * (lo + hi);
    for _ in 0..3 {
        let d = dg(y);
        if d == 0.0 {
            break;
        }
        let step = g(y) / d;
        if !step.is_finite() {
            break;
        }
        y -= step;
    }
    YStar::Root(y)
}

/// `1_{phi=-1} + phi 1_{y <= y*}`.
pub fn positive_indicator(s: &Swap, y: f64, ystar: YStar) -> f64 {
    match ystar {
        YStar::Root(ys) => {
            let below = if y <= ys { 1.0 } else { 0.0 };
            match s.direction {
                Direction::Receiver => below,
                Direction::Payer => 1.0 - below,
            }
        }
        YStar::NoRoot { positive } => f64::from(u8::from(positive)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FxForward {
    pub notional: f64,
    pub strike: f64,
    pub maturity: f64,
    /// Foreign currency; the pair converts it into the domestic currency.
    pub currency: String,
}

impl FxForward {
    pub fn new(notional: f64, strike: f64, maturity: f64, currency: impl Into<String>) -> Result<Self> {
        if !(maturity > 0.0) || !(strike > 0.0) || !notional.is_finite() {
            return Err(Error::Validation("FX forward needs positive maturity and strike".into()));
        }
        Ok(Self { notional, strike, maturity, currency: currency.into() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FxForwardTerms {
    pub delta: f64,
    pub eta: f64,
    pub w1: f64,
    pub w2: f64,
    pub b_dom: f64,
    /// `None` when `|eta| < 1e-12`; positivity is then `positive_constant`.
    pub ystar: Option<f64>,
    pub positive_constant: bool,
}

impl FxForwardTerms {
    /// `sign(eta) 1_{y >= y*} + 1_{eta < 0}`.
    pub fn indicator(&self, y: f64) -> f64 {
        match self.ystar {
            None => f64::from(u8::from(self.positive_constant)),
            Some(ys) => {
                let above = if y >= ys { 1.0 } else { 0.0 };
                if self.eta > 0.0 {
                    above
                } else {
                    1.0 - above
                }
            }
        }
    }

    /// Value under the one-factor approximation, per unit notional, with exact exponentials.
    pub fn approx_value(&self, y: f64) -> f64 {
        self.w1 * (-y * (self.b_dom - self.eta)).exp() - self.w2 * (-y * self.b_dom).exp()
    }
}

pub fn fx_forward_terms(fwd: &FxForward, models: &ModelSet, t: f64, u: f64) -> Result<FxForwardTerms> {
    if u > fwd.maturity {
        return Err(Error::Domain(format!("valuation date {u} after forward maturity {}", fwd.maturity)));
    }
    let dom = &models.domestic;
    let f = models.foreign(&fwd.currency)?;
    let fgn = &f.hw;
    let big_t = fwd.maturity;
    let dt = hw_terms(dom, t, u);
    let ft = hw_terms(fgn, t, u);
    let fx = models.fx_terms(&fwd.currency, t, u)?;
    let rho = models.fx_correlations(&fwd.currency)?;
    let b_d = dom.b(big_t - u);
    let b_f = fgn.b(big_t - u);
    let w1 = (fx.mu_fx + fgn.a_bar(u, big_t) - ft.mu * b_f).exp();
    let dom_bond = (dom.a_bar(u, big_t) - dt.mu * b_d).exp();
    let w2 = fwd.strike * dom_bond;
    let delta = w1 / dom_bond;
    let eta = if dt.var_y > 0.0 {
        let s = |v: f64| sigma_ratio(v, dt.var_y);
        let sx = f.fx.sigma_fx;
        rho.dom_fx * s(sx * sx * (u - t))? - rho.dom_fgn * (s(ft.var_big_y)? + b_f * s(ft.var_y)?)
            + s(dt.var_big_y)?
            + b_d
    } else {
        b_d
    };
    let log_ratio = (fwd.strike / delta).ln();
    let (ystar, positive_constant) = if eta.abs() < 1e-12 {
        (None, log_ratio <= 0.0)
    } else {
        (Some(log_ratio / eta), false)
    };
    Ok(FxForwardTerms { delta, eta, w1, w2, b_dom: b_d, ystar, positive_constant })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Trade {
    Swap(Swap),
    FxForward(FxForward),
}

impl Trade {
    pub fn maturity(&self) -> f64 {
        match self {
            Trade::Swap(s) => s.maturity(),
            Trade::FxForward(f) => f.maturity,
        }
    }

    pub fn currency(&self) -> &str {
        match self {
            Trade::Swap(s) => &s.currency,
            Trade::FxForward(f) => &f.currency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Portfolio {
    pub trades: Vec<Trade>,
}

impl Portfolio {
    pub fn new(trades: Vec<Trade>) -> Result<Self> {
        if trades.is_empty() {
            return Err(Error::Validation("portfolio is empty".into()));
        }
        Ok(Self { trades })
    }

    pub fn maturity(&self) -> f64 {
        self.trades.iter().map(Trade::maturity).fold(0.0, f64::max)
    }

    /// Every trade currency must have a rate model (and FX model when foreign).
    pub fn check_against(&self, models: &ModelSet) -> Result<()> {
        for t in &self.trades {
            let c = t.currency();
            match t {
                Trade::Swap(_) => {
                    models.rates(c)?;
                }
                Trade::FxForward(_) => {
                    models.foreign(c)?;
                }
            }
        }
        Ok(())
    }

    /// The single swap, if the portfolio is exactly one domestic swap.
    pub fn single_domestic_swap(&self, models: &ModelSet) -> Option<&Swap> {
        match self.trades.as_slice() {
            [Trade::Swap(s)] if s.currency == models.domestic_currency => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum TradeRecord {
    Swap {
        direction: Direction,
        notional: f64,
        strike: f64,
        start: f64,
        maturity: f64,
        frequency: f64,
        currency: String,
    },
    FxForward {
        notional: f64,
        strike: f64,
        maturity: f64,
        currency: String,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PortfolioFile {
    trade: Vec<TradeRecord>,
}

pub fn parse_portfolio(text: &str) -> Result<Portfolio> {
    let file: PortfolioFile = toml::from_str(text)
        .map_err(|e| Error::Parse { path: "<portfolio>".into(), message: e.message().trim().to_string() })?;
    let trades = file
        .trade
        .into_iter()
        .map(|r| match r {
            TradeRecord::Swap { direction, notional, strike, start, maturity, frequency, currency } => {
                Swap::regular(direction, notional, strike, start, maturity, frequency, currency).map(Trade::Swap)
            }
            TradeRecord::FxForward { notional, strike, maturity, currency } => {
                FxForward::new(notional, strike, maturity, currency).map(Trade::FxForward)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Portfolio::new(trades)
}

pub fn load_portfolio(path: impl AsRef<Path>) -> Result<Portfolio> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_portfolio(&text).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse { path: path.to_path_buf(), message },
        other => other,
    })
}

#[derive(Debug, Clone)]
enum TradeAtDate {
    Expired,
    Swap { scale: f64, constant: f64, wbar: Vec<f64>, b: Vec<f64>, rate: usize },
    FxForward { notional: f64, strike: f64, dom: (f64, f64), fgn: (f64, f64), fx: usize },
}

/// Per-date deterministic pieces of every trade, so that pathwise valuation
/// only evaluates exponentials of the simulated states.
#[derive(Debug, Clone)]
pub struct ValuationPlan {
    per_date: Vec<Vec<TradeAtDate>>,
}

impl ValuationPlan {
    pub fn new(portfolio: &Portfolio, models: &ModelSet, dates: &[f64]) -> Result<Self> {
        portfolio.check_against(models)?;
        let rate_index = |c: &str| -> usize {
            if c == models.domestic_currency {
                0
            } else {
                1 + models.foreign_index(c).expect("checked currency")
            }
        };
        let per_date = dates
            .iter()
            .map(|&u| {
                portfolio
                    .trades
                    .iter()
                    .map(|t| -> Result<TradeAtDate> {
                        if u > t.maturity() {
                            return Ok(TradeAtDate::Expired);
                        }
                        Ok(match t {
                            Trade::Swap(s) => {
                                let p = models.rates(&s.currency)?;
                                let w = swap_weights(s, p, 0.0, u)?;
                                TradeAtDate::Swap {
                                    scale: s.direction.phi() * s.notional,
                                    constant: w.constant(),
                                    wbar: w.wbar,
                                    b: w.b,
                                    rate: rate_index(&s.currency),
                                }
                            }
                            Trade::FxForward(f) => {
                                let dom = &models.domestic;
                                let fgn = &models.foreign(&f.currency)?.hw;
                                let tau = f.maturity - u;
                                TradeAtDate::FxForward {
                                    notional: f.notional,
                                    strike: f.strike,
                                    dom: (dom.a_bar(u, f.maturity) - hw_terms(dom, 0.0, u).mu * dom.b(tau), dom.b(tau)),
                                    fgn: (fgn.a_bar(u, f.maturity) - hw_terms(fgn, 0.0, u).mu * fgn.b(tau), fgn.b(tau)),
                                    fx: rate_index(&f.currency) - 1,
                                }
                            }
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { per_date })
    }

    pub fn n_dates(&self) -> usize {
        self.per_date.len()
    }

    /// Domestic-currency portfolio value on local path `path` at date index `date`.
    #[inline]
    pub fn value(&self, cube: &ScenarioCube, path: usize, date: usize) -> f64 {
        let i = cube.idx(path, date);
        let mut total = 0.0;
        for t in &self.per_date[date] {
            match t {
                TradeAtDate::Expired => {}
                TradeAtDate::Swap { scale, constant, wbar, b, rate } => {
                    let y = cube.rates[*rate].y[i];
                    let s: f64 = wbar.iter().zip(b).map(|(w, b)| w * (-y * b).exp()).sum();
                    let mut v = scale * (constant + s);
                    if *rate > 0 {
                        v *= cube.fx[rate - 1].ln_fx[i].exp();
                    }
                    total += v;
                }
                TradeAtDate::FxForward { notional, strike, dom, fgn, fx } => {
                    let yd = cube.rates[0].y[i];
                    let yf = cube.rates[fx + 1].y[i];
                    let lnx = cube.fx[*fx].ln_fx[i];
                    let pd = (dom.0 - yd * dom.1).exp();
                    let pf = (fgn.0 - yf * fgn.1).exp();
                    total += notional * (pf * lnx.exp() - strike * pd);
                }
            }
        }
        total
    }
}

/// Domestic value of the portfolio on one path of the cube.
pub fn portfolio_value(p: &Portfolio, models: &ModelSet, cube: &ScenarioCube, path: usize, date: usize) -> Result<f64> {
    if date >= cube.n_dates() || path >= cube.n_paths {
        return Err(Error::Domain("path or date index outside the cube".into()));
    }
    for t in &p.trades {
        cube.rate(t.currency())?;
        if t.currency() != models.domestic_currency {
            cube.ln_fx(t.currency())?;
        }
    }
    let plan = ValuationPlan::new(p, models, &cube.dates[date..=date])?;
    let i = cube.idx(path, date);
    let one = ScenarioCube {
        dates: vec![cube.dates[date]],
        first_path: cube.first_path + path,
        n_paths: 1,
        seed: cube.seed,
        mode: cube.mode,
        rates: cube
            .rates
            .iter()
            .map(|r| RateSlab { currency: r.currency.clone(), y: vec![r.y[i]], big_y: vec![r.big_y[i]] })
            .collect(),
        fx: cube.fx.iter().map(|f| FxSlab { currency: f.currency.clone(), ln_fx: vec![f.ln_fx[i]] }).collect(),
        discount: vec![cube.discount[i]],
        credit: None,
    };
    Ok(plan.value(&one, 0, 0))
}
