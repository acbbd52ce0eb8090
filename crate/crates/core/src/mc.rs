//! Correlated path simulation of rates, FX and (optionally) credit intensities.
//!
//! Each path owns two ChaCha streams keyed by the path index: one for the
//! market factors and one for the two intensities. A base-mode and a
//! full-mode run with the same seed therefore share every rate and FX path.

use crate::error::{Error, Result};
use crate::models::{cir_terms, hw_terms, ModelSet, LAMBDA_C, LAMBDA_I};
use crate::numerics::decay_integral;
use crate::par::{map_indexed, Exec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::ops::Range;
use std::path::Path;

const PIVOT_TOL: f64 = 1e-12;
const CREDIT_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    labels: Vec<String>,
    entries: Vec<f64>,
    chol: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Correlation(format!("unknown factor {label}")))
    }

    pub fn get(&self, a: &str, b: &str) -> Result<f64> {
        let (i, j) = (self.index(a)?, self.index(b)?);
        Ok(self.entries[i * self.dim() + j])
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim() + j]
    }

    /// Lower-triangular factor, row-major.
    pub fn cholesky(&self) -> &[f64] {
        &self.chol
    }

    /// All off-diagonal pairs with a nonzero entry.
    pub fn nonzero_pairs(&self) -> Vec<(String, String, f64)> {
        let n = self.dim();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let r = self.entry(i, j);
                if r != 0.0 {
                    out.push((self.labels[i].clone(), self.labels[j].clone(), r));
                }
            }
        }
        out
    }

    /// A copy with one pair replaced, revalidated.
    pub fn with_entry(&self, a: &str, b: &str, rho: f64) -> Result<Self> {
        let mut pairs: Vec<(String, String, f64)> = self
            .nonzero_pairs()
            .into_iter()
            .filter(|(x, y, _)| !((x == a && y == b) || (x == b && y == a)))
            .collect();
        pairs.push((a.to_string(), b.to_string(), rho));
        build_correlation(&self.labels, &pairs)
    }
}

/// Builds a validated correlation matrix; unspecified pairs are zero.
pub fn build_correlation(labels: &[String], pairs: &[(String, String, f64)]) -> Result<CorrelationMatrix> {
    let n = labels.len();
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            return Err(Error::Correlation(format!("duplicate factor {l}")));
        }
    }
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        entries[i * n + i] = 1.0;
    }
    let pos = |l: &str| {
        labels
            .iter()
            .position(|x| x == l)
            .ok_or_else(|| Error::Correlation(format!("undeclared factor {l}")))
    };
    for (a, b, rho) in pairs {
        let (i, j) = (pos(a)?, pos(b)?);
        if i == j {
            if *rho != 1.0 {
                return Err(Error::Correlation(format!("diagonal entry {a} must be 1")));
            }
            continue;
        }
        if !rho.is_finite() || rho.abs() > 1.0 {
            return Err(Error::Correlation(format!("|rho({a},{b})| = {rho} exceeds 1")));
        }
        entries[i * n + j] = *rho;
        entries[j * n + i] = *rho;
    }
    if let (Ok(i), Ok(c)) = (pos(LAMBDA_I), pos(LAMBDA_C)) {
        if entries[i * n + c] != 0.0 {
            return Err(Error::Correlation(
                "institution and counterparty intensities must be uncorrelated".into(),
            ));
        }
    }
    let chol = cholesky_semidefinite(&entries, n)?;
    Ok(CorrelationMatrix { labels: labels.to_vec(), entries, chol })
}

fn cholesky_semidefinite(c: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l: Vec<f64> = vec![0.0; n * n];
    for j in 0..n {
        let d = c[j * n + j] - (0..j).map(|k| l[j * n + k] * l[j * n + k]).sum::<f64>();
        if d < -PIVOT_TOL {
            return Err(Error::Correlation(format!(
                "matrix is not positive semi-definite (pivot {j} = {d:.3e})"
            )));
        }
        if d <= PIVOT_TOL {
            for i in j + 1..n {
                let r = c[i * n + j] - (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum::<f64>();
                if r.abs() > 1e-8 {
                    return Err(Error::Correlation(format!(
                        "matrix is not positive semi-definite (singular pivot {j})"
                    )));
                }
            }
            continue;
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in j + 1..n {
            let r = c[i * n + j] - (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum::<f64>();
            l[i * n + j] = r / djj;
        }
    }
    Ok(l)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimGrid {
    dates: Vec<f64>,
    pub substeps: usize,
}

impl SimGrid {
    /// `dates` must start at 0 and increase strictly.
    pub fn new(dates: Vec<f64>, substeps: usize) -> Result<Self> {
        if dates.len() < 2 || dates[0] != 0.0 {
            return Err(Error::Validation("grid needs t0 = 0 and at least one later date".into()));
        }
        if dates.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation("monitoring dates must increase strictly".into()));
        }
        if substeps == 0 {
            return Err(Error::Validation("substeps must be at least 1".into()));
        }
        Ok(Self { dates, substeps })
    }

    pub fn uniform(horizon: f64, dates_per_year: f64, substeps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !(dates_per_year > 0.0) {
            return Err(Error::Validation("horizon and dates per year must be positive".into()));
        }
        let n = (horizon * dates_per_year).round().max(1.0) as usize;
        let dates = (0..=n).map(|i| horizon * i as f64 / n as f64).collect();
        Self::new(dates, substeps)
    }

    pub fn dates(&self) -> &[f64] {
        &self.dates
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.dates.last().expect("grid is non-empty")
    }

    pub fn covers(&self, maturity: f64) -> Result<()> {
        if self.horizon() + 1e-12 < maturity {
            return Err(Error::Validation(format!(
                "simulation horizon {} is shorter than portfolio maturity {maturity}",
                self.horizon()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CubeMode {
    Base,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateSlab {
    pub currency: String,
    pub y: Vec<f64>,
    pub big_y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FxSlab {
    pub currency: String,
    pub ln_fx: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CreditSlabs {
    pub x_i: Vec<f64>,
    pub y_i: Vec<f64>,
    pub big_y_i: Vec<f64>,
    pub big_y_c: Vec<f64>,
    pub truncated_steps: u64,
    pub total_steps: u64,
}

impl CreditSlabs {
    pub fn truncated_fraction(&self) -> f64 {
        if self.total_steps == 0 {
            0.0
        } else {
            self.truncated_steps as f64 / self.total_steps as f64
        }
    }
}

/// Simulated drivers for a contiguous range of paths; every slab is
/// path-major with `n_dates` entries per path.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioCube {
    pub dates: Vec<f64>,
    pub first_path: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub mode: CubeMode,
    /// Domestic currency first, then foreign currencies in model order.
    pub rates: Vec<RateSlab>,
    pub fx: Vec<FxSlab>,
    pub discount: Vec<f64>,
    pub credit: Option<CreditSlabs>,
}

impl ScenarioCube {
    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    #[inline]
    pub fn idx(&self, path: usize, date: usize) -> usize {
        path * self.dates.len() + date
    }

    pub fn paths(&self) -> Range<usize> {
        self.first_path..self.first_path + self.n_paths
    }

    pub fn rate(&self, currency: &str) -> Result<&RateSlab> {
        self.rates
            .iter()
            .find(|r| r.currency == currency)
            .ok_or_else(|| Error::CubeMismatch(format!("no rate slab for {currency}")))
    }

    pub fn ln_fx(&self, currency: &str) -> Result<&FxSlab> {
        self.fx
            .iter()
            .find(|r| r.currency == currency)
            .ok_or_else(|| Error::CubeMismatch(format!("no FX slab for {currency}")))
    }

    pub fn credit(&self) -> Result<&CreditSlabs> {
        self.credit
            .as_ref()
            .ok_or_else(|| Error::CubeMismatch("cube was simulated in base mode".into()))
    }

    fn slabs(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for r in &self.rates {
            out.push((format!("y_r_{}", r.currency), &r.y));
            out.push((format!("Y_r_{}", r.currency), &r.big_y));
        }
        for f in &self.fx {
            out.push((format!("lnfx_{}", f.currency), &f.ln_fx));
        }
        out.push(("discount".into(), &self.discount));
        if let Some(c) = &self.credit {
            out.push(("x_I".into(), &c.x_i));
            out.push(("y_I".into(), &c.y_i));
            out.push(("Y_I".into(), &c.big_y_i));
            out.push(("Y_C".into(), &c.big_y_c));
        }
        out
    }

    /// Columnar little-endian dump: magic, labels, dates, path count, slabs.
    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let slabs = self.slabs();
        let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
        put(b"FVACUBE1")?;
        put(&(slabs.len() as u64).to_le_bytes())?;
        for (label, _) in &slabs {
            put(&(label.len() as u64).to_le_bytes())?;
            put(label.as_bytes())?;
        }
        put(&(self.dates.len() as u64).to_le_bytes())?;
        for d in &self.dates {
            put(&d.to_le_bytes())?;
        }
        put(&(self.n_paths as u64).to_le_bytes())?;
        for (_, data) in &slabs {
            for v in data.iter() {
                put(&v.to_le_bytes())?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Appends another cube covering the next contiguous path range.
    pub fn append(&mut self, other: ScenarioCube) -> Result<()> {
        if other.first_path != self.first_path + self.n_paths
            || other.mode != self.mode
            || other.seed != self.seed
            || other.dates != self.dates
        {
            return Err(Error::CubeMismatch("cubes are not contiguous slices of one run".into()));
        }
        for (a, b) in self.rates.iter_mut().zip(other.rates) {
            a.y.extend(b.y);
            a.big_y.extend(b.big_y);
        }
        for (a, b) in self.fx.iter_mut().zip(other.fx) {
            a.ln_fx.extend(b.ln_fx);
        }
        self.discount.extend(other.discount);
        if let (Some(a), Some(b)) = (self.credit.as_mut(), other.credit) {
            a.x_i.extend(b.x_i);
            a.y_i.extend(b.y_i);
            a.big_y_i.extend(b.big_y_i);
            a.big_y_c.extend(b.big_y_c);
            a.truncated_steps += b.truncated_steps;
            a.total_steps += b.total_steps;
        }
        self.n_paths += other.n_paths;
        Ok(())
    }
}

/// `H_r(0,u) exp(-Y_r(0,u))` for every path at `date`.
pub fn pathwise_discount(cube: &ScenarioCube, date: usize) -> Result<Vec<f64>> {
    if date >= cube.n_dates() {
        return Err(Error::Domain(format!("date index {date} out of range")));
    }
    Ok((0..cube.n_paths).map(|p| cube.discount[cube.idx(p, date)]).collect())
}

#[derive(Debug, Clone, Copy)]
struct HwStep {
    decay: f64,
    drift: f64,
    sd: f64,
}

#[derive(Debug, Clone)]
struct Interval {
    h: f64,
    sqrt_h: f64,
    hw: Vec<HwStep>,
}

#[derive(Debug, Clone)]
struct DateConsts {
    rate_mu: Vec<f64>,
    rate_m: Vec<f64>,
    fx_mu: Vec<f64>,
    dom_h: f64,
    cir_mu: [f64; 2],
    cir_m: [f64; 2],
}

/// Per-run constants shared by all paths.
struct Plan<'a> {
    models: &'a ModelSet,
    grid: &'a SimGrid,
    n_rates: usize,
    n_fx: usize,
    n_market: usize,
    chol: Vec<f64>,
    dim: usize,
    intervals: Vec<Interval>,
    dates: Vec<DateConsts>,
    x0: Vec<f64>,
    fx_sigma: Vec<f64>,
}

impl<'a> Plan<'a> {
    fn new(models: &'a ModelSet, grid: &'a SimGrid) -> Self {
        let hws: Vec<_> =
            std::iter::once(&models.domestic).chain(models.foreign.iter().map(|f| &f.hw)).collect();
        let n_rates = hws.len();
        let n_fx = models.foreign.len();
        let n_market = n_rates + n_fx;
        let dim = models.corr.dim();
        let d = grid.dates();
        let intervals = d
            .windows(2)
            .map(|w| {
                let h = (w[1] - w[0]) / grid.substeps as f64;
                let hw = hws
                    .iter()
                    .map(|p| {
                        let q = p.quanto.map_or(0.0, |q| q.rho_rf_fx * p.sigma * q.sigma_fx);
                        HwStep {
                            decay: (-p.a * h).exp(),
                            drift: -q * decay_integral(p.a, h),
                            sd: p.sigma * decay_integral(2.0 * p.a, h).sqrt(),
                        }
                    })
                    .collect();
                Interval { h, sqrt_h: h.sqrt(), hw }
            })
            .collect();
        let dates = d
            .iter()
            .map(|&u| {
                let terms: Vec<_> = hws.iter().map(|p| hw_terms(p, 0.0, u)).collect();
                let fx_mu = models
                    .foreign
                    .iter()
                    .map(|f| models.fx_terms(&f.currency, 0.0, u).map(|t| t.mu_fx).unwrap_or(f64::NAN))
                    .collect();
                let ci = cir_terms(&models.institution, 0.0, u, models.institution.x0);
                let cc = cir_terms(&models.counterparty, 0.0, u, models.counterparty.x0);
                DateConsts {
                    rate_mu: terms.iter().map(|t| t.mu).collect(),
                    rate_m: terms.iter().map(|t| t.big_m).collect(),
                    fx_mu,
                    dom_h: terms[0].h,
                    cir_mu: [ci.mu, cc.mu],
                    cir_m: [ci.big_m, cc.big_m],
                }
            })
            .collect();
        let x0 = hws.iter().map(|p| p.x0).collect();
        let fx_sigma = models.foreign.iter().map(|f| f.fx.sigma_fx).collect();
        Plan {
            models,
            grid,
            n_rates,
            n_fx,
            n_market,
            chol: models.corr.cholesky().to_vec(),
            dim,
            intervals,
            dates,
            x0,
            fx_sigma,
        }
    }
}

struct PathOut<'b> {
    rate_y: Vec<&'b mut [f64]>,
    rate_big_y: Vec<&'b mut [f64]>,
    ln_fx: Vec<&'b mut [f64]>,
    discount: &'b mut [f64],
    credit: Option<[&'b mut [f64]; 4]>,
}

fn simulate_path(plan: &Plan, seed: u64, path: usize, mut out: PathOut) -> (u64, u64) {
    let mut market_rng = ChaCha8Rng::seed_from_u64(seed);
    market_rng.set_stream(path as u64);
    let full = out.credit.is_some();
    let mut credit_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(CREDIT_SEED_OFFSET));
    credit_rng.set_stream(path as u64);

    let (nr, nf, nm, dim) = (plan.n_rates, plan.n_fx, plan.n_market, plan.dim);
    let mut x = plan.x0.clone();
    let mut int_x = vec![0.0; nr];
    let mut wx = vec![0.0; nf];
    let credit_models = [&plan.models.institution, &plan.models.counterparty];
    let mut lam = [credit_models[0].x0, credit_models[1].x0];
    let mut int_lam = [0.0; 2];
    let mut z = vec![0.0; dim];
    let mut w = vec![0.0; dim];
    let n_corr = if full { dim } else { nm };
    let (mut truncated, mut total) = (0u64, 0u64);

    let record = |di: usize, x: &[f64], int_x: &[f64], wx: &[f64], lam: &[f64; 2], int_lam: &[f64; 2], out: &mut PathOut| {
        let c = &plan.dates[di];
        for k in 0..nr {
            out.rate_y[k][di] = x[k] - c.rate_mu[k];
            out.rate_big_y[k][di] = int_x[k] - c.rate_m[k];
        }
        for f in 0..nf {
            out.ln_fx[f][di] =
                c.fx_mu[f] + out.rate_big_y[0][di] - out.rate_big_y[1 + f][di] + plan.fx_sigma[f] * wx[f];
        }
        out.discount[di] = c.dom_h * (-out.rate_big_y[0][di]).exp();
        if let Some(cr) = out.credit.as_mut() {
            cr[0][di] = lam[0];
            cr[1][di] = lam[0] - c.cir_mu[0];
            cr[2][di] = int_lam[0] - c.cir_m[0];
            cr[3][di] = int_lam[1] - c.cir_m[1];
        }
    };
    record(0, &x, &int_x, &wx, &lam, &int_lam, &mut out);
    for (ii, iv) in plan.intervals.iter().enumerate() {
        for _ in 0..plan.grid.substeps {
            for zi in z.iter_mut().take(nm) {
                *zi = StandardNormal.sample(&mut market_rng);
            }
            if full {
                for zi in z.iter_mut().skip(nm) {
                    *zi = StandardNormal.sample(&mut credit_rng);
                }
            }
            for i in 0..n_corr {
                let row = &plan.chol[i * dim..i * dim + i + 1];
                w[i] = row.iter().zip(&z[..=i]).map(|(l, z)| l * z).sum();
            }
            for k in 0..nr {
                let s = iv.hw[k];
                let xn = x[k] * s.decay + s.drift + s.sd * w[k];
                int_x[k] += 0.5 * (x[k] + xn) * iv.h;
                x[k] = xn;
            }
            for f in 0..nf {
                wx[f] += iv.sqrt_h * w[nr + f];
            }
            if full {
                for e in 0..2 {
                    let p = credit_models[e];
                    let xp = lam[e].max(0.0);
                    let raw = lam[e] + p.a * (p.theta - xp) * iv.h + p.sigma * xp.sqrt() * iv.sqrt_h * w[nm + e];
                    total += 1;
                    if raw < 0.0 {
                        truncated += 1;
                    }
                    let xn = raw.max(0.0);
                    int_lam[e] += 0.5 * (xp + xn) * iv.h;
                    lam[e] = xn;
                }
            }
        }
        record(ii + 1, &x, &int_x, &wx, &lam, &int_lam, &mut out);
    }
    (truncated, total)
}

/// Simulates paths `0..n_paths`.
pub fn simulate(models: &ModelSet, grid: &SimGrid, n_paths: usize, seed: u64, mode: CubeMode) -> Result<ScenarioCube> {
    simulate_paths(models, grid, 0..n_paths, seed, mode, Exec::default())
}

/// Simulates the given path range. Paths are keyed by absolute index, so any
/// partition of a run into ranges reproduces the same cube.
pub fn simulate_paths(
    models: &ModelSet,
    grid: &SimGrid,
    paths: Range<usize>,
    seed: u64,
    mode: CubeMode,
    exec: Exec,
) -> Result<ScenarioCube> {
    if paths.is_empty() {
        return Err(Error::Validation("need at least one path".into()));
    }
    let plan = Plan::new(models, grid);
    let nd = grid.len();
    let chunk = 64usize;
    let n = paths.len();
    let n_chunks = n.div_ceil(chunk);
    let full = mode == CubeMode::Full;
    let pieces = map_indexed(exec, n_chunks, |ci| {
        let lo = paths.start + ci * chunk;
        let hi = (lo + chunk).min(paths.end);
        let np = hi - lo;
        let mut rate_y = vec![vec![0.0; np * nd]; plan.n_rates];
        let mut rate_big_y = vec![vec![0.0; np * nd]; plan.n_rates];
        let mut ln_fx = vec![vec![0.0; np * nd]; plan.n_fx];
        let mut discount = vec![0.0; np * nd];
        let mut credit: Vec<Vec<f64>> = if full { vec![vec![0.0; np * nd]; 4] } else { Vec::new() };
        let (mut tr, mut tot) = (0u64, 0u64);
        for p in 0..np {
            let sl = p * nd..(p + 1) * nd;
            let cr = if full {
                let mut it = credit.iter_mut().map(|v| &mut v[sl.clone()]);
                Some([it.next().unwrap(), it.next().unwrap(), it.next().unwrap(), it.next().unwrap()])
            } else {
                None
            };
            let out = PathOut {
                rate_y: rate_y.iter_mut().map(|v| &mut v[sl.clone()]).collect(),
                rate_big_y: rate_big_y.iter_mut().map(|v| &mut v[sl.clone()]).collect(),
                ln_fx: ln_fx.iter_mut().map(|v| &mut v[sl.clone()]).collect(),
                discount: &mut discount[sl.clone()],
                credit: cr,
            };
            let (a, b) = simulate_path(&plan, seed, lo + p, out);
            tr += a;
            tot += b;
        }
        (rate_y, rate_big_y, ln_fx, discount, credit, tr, tot)
    });

    let hws_ccy: Vec<String> = std::iter::once(models.domestic_currency.clone())
        .chain(models.foreign.iter().map(|f| f.currency.clone()))
        .collect();
    let mut rates: Vec<RateSlab> = hws_ccy
        .iter()
        .map(|c| RateSlab { currency: c.clone(), y: Vec::with_capacity(n * nd), big_y: Vec::with_capacity(n * nd) })
        .collect();
    let mut fx: Vec<FxSlab> = models
        .foreign
        .iter()
        .map(|f| FxSlab { currency: f.currency.clone(), ln_fx: Vec::with_capacity(n * nd) })
        .collect();
    let mut discount = Vec::with_capacity(n * nd);
    let mut credit = full.then(|| CreditSlabs {
        x_i: Vec::with_capacity(n * nd),
        y_i: Vec::with_capacity(n * nd),
        big_y_i: Vec::with_capacity(n * nd),
        big_y_c: Vec::with_capacity(n * nd),
        truncated_steps: 0,
        total_steps: 0,
    });
    for (ry, rby, lfx, disc, cr, tr, tot) in pieces {
        for (slab, (a, b)) in rates.iter_mut().zip(ry.into_iter().zip(rby)) {
            slab.y.extend(a);
            slab.big_y.extend(b);
        }
        for (slab, v) in fx.iter_mut().zip(lfx) {
            slab.ln_fx.extend(v);
        }
        discount.extend(disc);
        if let Some(c) = credit.as_mut() {
            let mut it = cr.into_iter();
            c.x_i.extend(it.next().unwrap());
            c.y_i.extend(it.next().unwrap());
            c.big_y_i.extend(it.next().unwrap());
            c.big_y_c.extend(it.next().unwrap());
            c.truncated_steps += tr;
            c.total_steps += tot;
        }
    }
    let cube = ScenarioCube {
        dates: grid.dates().to_vec(),
        first_path: paths.start,
        n_paths: n,
        seed,
        mode,
        rates,
        fx,
        discount,
        credit,
    };
    check_finite(&cube)?;
    Ok(cube)
}

fn check_finite(cube: &ScenarioCube) -> Result<()> {
    for (label, data) in cube.slabs() {
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            let nd = cube.n_dates();
            return Err(Error::NonFinite { factor: label, path: cube.first_path + i / nd, date: i % nd });
        }
    }
    Ok(())
}
