//! Run configuration and the end-to-end FVA pipeline.

use crate::curves::{load_market_data, MarketData};
use crate::error::{Error, Result};
use crate::exposure::{
    base_moments, batch_count, batch_range, batch_se, epe_indep, epe_wwr_point, profile_coeffs, BaseMoments,
    ExposureProfile, McWwr, McWwrAccumulator, Method, PathExposures, WwrCoeffs,
};
use crate::instruments::{load_portfolio, Portfolio, ValuationPlan};
use crate::mc::{build_correlation, simulate_paths, CubeMode, SimGrid};
use crate::models::{CirppParams, ForeignModel, GbmFxParams, Hw1fParams, ModelSet};
use crate::par::Exec;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "+", env!("FVA_WWR_GIT_DESCRIBE"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HwSpec {
    pub currency: String,
    #[serde(default)]
    pub x0: f64,
    pub a: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForeignSpec {
    pub currency: String,
    #[serde(default)]
    pub x0: f64,
    pub a: f64,
    pub sigma: f64,
    pub fx_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CirSpec {
    pub curve: String,
    pub x0: f64,
    pub a: f64,
    pub theta: f64,
    pub sigma: f64,
    pub lgd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrEntry {
    pub a: String,
    pub b: String,
    pub rho: f64,
}

fn default_dpy() -> f64 {
    10.0
}
fn default_substeps() -> usize {
    4
}
fn default_paths() -> usize {
    100_000
}
fn default_seed() -> u64 {
    20_240_601
}
fn default_order() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_dpy")]
    pub dates_per_year: f64,
    /// Defaults to the portfolio maturity.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { dates_per_year: default_dpy(), horizon: None, substeps: default_substeps() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub exec: Exec,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self { paths: default_paths(), seed: default_seed(), exec: Exec::default() }
    }
}

fn default_method() -> Method {
    Method::ApproxGeneric
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxSpec {
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_order")]
    pub n_r: usize,
    #[serde(default = "default_order")]
    pub n_a: usize,
    /// Also run the full-simulation benchmark.
    #[serde(default)]
    pub benchmark: bool,
}

impl Default for ApproxSpec {
    fn default() -> Self {
        Self { method: default_method(), n_r: default_order(), n_a: default_order(), benchmark: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub market: PathBuf,
    pub portfolio: PathBuf,
    pub domestic: HwSpec,
    #[serde(default)]
    pub foreign: Vec<ForeignSpec>,
    pub institution: CirSpec,
    pub counterparty: CirSpec,
    #[serde(default)]
    pub correlation: Vec<CorrEntry>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub simulation: SimSpec,
    #[serde(default)]
    pub approximation: ApproxSpec,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    /// Reads a TOML run configuration; relative file references resolve
    /// against the configuration's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.message().trim().to_string() })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for p in [&mut cfg.market, &mut cfg.portfolio] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.approximation;
        if a.n_r > 20 || a.n_a > 20 {
            return Err(Error::Config("truncation orders n_r, n_a must lie in 0..=20".into()));
        }
        if self.simulation.paths == 0 {
            return Err(Error::Config("paths must be at least 1".into()));
        }
        if !(self.grid.dates_per_year > 0.0) || self.grid.substeps == 0 {
            return Err(Error::Config("dates_per_year and substeps must be positive".into()));
        }
        Ok(())
    }
}

/// A configuration with its market data and portfolio loaded into memory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunInputs {
    pub cfg: RunConfig,
    pub market: MarketData,
    pub portfolio: Portfolio,
}

impl RunInputs {
    pub fn load(cfg: RunConfig) -> Result<Self> {
        let market = load_market_data(&cfg.market)?;
        let portfolio = load_portfolio(&cfg.portfolio)?;
        Ok(Self { cfg, market, portfolio })
    }

    pub fn models(&self) -> Result<ModelSet> {
        build_models(&self.cfg, &self.market)
    }

    pub fn grid(&self) -> Result<SimGrid> {
        let horizon = self.cfg.grid.horizon.unwrap_or_else(|| self.portfolio.maturity());
        let grid = SimGrid::uniform(horizon, self.cfg.grid.dates_per_year, self.cfg.grid.substeps)?;
        grid.covers(self.portfolio.maturity())?;
        Ok(grid)
    }
}

pub fn build_models(cfg: &RunConfig, market: &MarketData) -> Result<ModelSet> {
    let d = &cfg.domestic;
    if d.currency != market.domestic {
        return Err(Error::Config(format!(
            "domestic currency {} differs from market data domestic {}",
            d.currency, market.domestic
        )));
    }
    let domestic = Hw1fParams::new(d.x0, d.a, d.sigma, market.domestic_curve.clone())?;
    let foreign = cfg
        .foreign
        .iter()
        .map(|f| {
            Ok(ForeignModel {
                currency: f.currency.clone(),
                hw: Hw1fParams::new(f.x0, f.a, f.sigma, market.yield_curve(&f.currency)?.clone())?,
                fx: GbmFxParams { spot: market.fx_spot(&f.currency)?, sigma_fx: f.fx_sigma },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cir = |label: &str, s: &CirSpec| {
        CirppParams::new(label, s.x0, s.a, s.theta, s.sigma, s.lgd, market.credit_curve(&s.curve)?.clone())
    };
    let institution = cir("I", &cfg.institution)?;
    let counterparty = cir("C", &cfg.counterparty)?;
    let names: Vec<&str> = cfg.foreign.iter().map(|f| f.currency.as_str()).collect();
    let labels = ModelSet::factor_labels(&d.currency, &names);
    let pairs: Vec<_> = cfg.correlation.iter().map(|c| (c.a.clone(), c.b.clone(), c.rho)).collect();
    let corr = build_correlation(&labels, &pairs)?;
    ModelSet::new(d.currency.clone(), domestic, foreign, institution, counterparty, corr)
}

/// Right-endpoint rule `sum (t_{i+1} - t_i) EPE(t_{i+1})` for both exposure parts.
pub fn integrate_profile(profile: &ExposureProfile, dates: &[f64]) -> Result<(f64, f64)> {
    let pd = profile.dates();
    if pd.len() != dates.len() || pd.iter().zip(dates).any(|(a, b)| a != b) {
        return Err(Error::Validation("profile does not cover the grid dates".into()));
    }
    let indep: Vec<f64> = profile.rows.iter().map(|r| r.epe_indep).collect();
    let wwr: Vec<f64> = profile.rows.iter().map(|r| r.epe_wwr).collect();
    Ok((integrate(&indep, dates), integrate(&wwr, dates)))
}

/// Right-endpoint integral of one column.
pub fn integrate(values: &[f64], dates: &[f64]) -> f64 {
    dates.windows(2).zip(&values[1..]).map(|(w, v)| (w[1] - w[0]) * v).sum()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Runtimes {
    pub approx: Option<f64>,
    pub mc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FvaReport {
    pub version: String,
    pub method: Method,
    pub n_paths: usize,
    pub n_dates: usize,
    pub seed: u64,
    pub fva_indep: f64,
    pub fva_indep_se: f64,
    pub fva_wwr: f64,
    pub fva_wwr_se: f64,
    pub fva_total: f64,
    pub wwr_pct: f64,
    /// Benchmark WWR part when the full simulation ran.
    pub fva_wwr_mc: Option<f64>,
    pub fva_wwr_mc_se: Option<f64>,
    /// `100 (FVA - FVA^MC) / FVA^MC` in percent.
    pub wwr_rd_vs_mc: Option<f64>,
    pub runtime_wwr_seconds: Runtimes,
    pub cir_truncated_fraction: Option<f64>,
    pub profile: ExposureProfile,
    pub config: RunConfig,
}

impl FvaReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Numerical(format!("report serialization: {e}")))
    }
}

/// Everything a run produced, including batch-level results for error bars.
#[derive(Debug, Clone)]
pub struct FvaRun {
    pub report: FvaReport,
    pub dates: Vec<f64>,
    pub coeffs: Vec<WwrCoeffs>,
    pub moments: BaseMoments,
    pub epe_indep: Vec<f64>,
    pub epe_wwr: Vec<f64>,
    pub mc: Option<McWwr>,
    pub mc_profile: Option<ExposureProfile>,
    pub batch_fva_indep: Vec<f64>,
    pub batch_fva_wwr: Vec<f64>,
    pub batch_fva_wwr_mc: Option<Vec<f64>>,
}

impl FvaRun {
    pub fn batch_fva_total(&self) -> Vec<f64> {
        self.batch_fva_indep.iter().zip(&self.batch_fva_wwr).map(|(a, b)| a + b).collect()
    }
}

pub fn run_fva(cfg: &RunConfig) -> Result<FvaReport> {
    Ok(run_inputs(&RunInputs::load(cfg.clone())?)?.report)
}

/// Simulates the market block by block and values the portfolio on every path.
pub fn simulate_exposures(inputs: &RunInputs, models: &ModelSet, grid: &SimGrid) -> Result<PathExposures> {
    let sim = &inputs.cfg.simulation;
    let plan = ValuationPlan::new(&inputs.portfolio, models, grid.dates())?;
    let mut ex = PathExposures::empty(grid.dates(), sim.seed, sim.paths);
    let nb = batch_count(sim.paths);
    for b in 0..nb {
        let cube = simulate_paths(models, grid, batch_range(b, sim.paths, nb), sim.seed, CubeMode::Base, sim.exec)?;
        ex.extend_from_cube(&cube, &plan)?;
    }
    Ok(ex)
}

/// Full-simulation WWR benchmark, streamed over the batch blocks.
pub fn benchmark_wwr(
    inputs: &RunInputs,
    models: &ModelSet,
    grid: &SimGrid,
    ex: &PathExposures,
    hbar: &[f64],
    coeffs: &[WwrCoeffs],
) -> Result<McWwr> {
    let sim = &inputs.cfg.simulation;
    let mut acc = McWwrAccumulator::new(ex);
    let mut trunc = (0u64, 0u64);
    let nb = batch_count(sim.paths);
    for b in 0..nb {
        let cube = simulate_paths(models, grid, batch_range(b, sim.paths, nb), sim.seed, CubeMode::Full, sim.exec)?;
        acc.add(&cube, ex, hbar, coeffs, &mut trunc)?;
    }
    acc.finish(trunc)
}

pub fn run_inputs(inputs: &RunInputs) -> Result<FvaRun> {
    let cfg = &inputs.cfg;
    cfg.validate()?;
    let models = inputs.models()?;
    inputs.portfolio.check_against(&models)?;
    let grid = inputs.grid()?;
    let dates = grid.dates().to_vec();
    let ap = &cfg.approximation;
    if ap.method == Method::ApproxAnalytic {
        crate::exposure::analytic_moments(&inputs.portfolio, &models, 0.0, dates[1], 0, 0)?;
    }
    let coeffs = profile_coeffs(&models, &dates, ap.n_r)?;
    let exec = cfg.simulation.exec;

    let ex = simulate_exposures(inputs, &models, &grid)?;
    let base = base_moments(&ex, 0, exec)?;
    let indep = epe_indep(base.disc_epe(), &coeffs);

    let mut runtimes = Runtimes::default();
    let wants_mc = ap.method == Method::Mc || ap.benchmark;
    let mut moments = base.clone();
    let mut approx_batches: Option<Vec<Vec<f64>>> = None;
    let mut approx: Option<Vec<f64>> = None;
    match ap.method {
        Method::ApproxGeneric => {
            let start = Instant::now();
            let bm = base_moments(&ex, ap.n_r + 2, exec)?;
            let wwr = coeffs
                .iter()
                .enumerate()
                .map(|(d, c)| epe_wwr_point(c, bm.mean.disc_epe[d], &bm.mean.y_moments[d]))
                .collect::<Result<Vec<_>>>()?;
            runtimes.approx = Some(start.elapsed().as_secs_f64());
            let batches = bm
                .batches
                .iter()
                .map(|b| {
                    coeffs
                        .iter()
                        .enumerate()
                        .map(|(d, c)| epe_wwr_point(c, b.disc_epe[d], &b.y_moments[d]))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            approx = Some(wwr);
            approx_batches = Some(batches);
            moments = bm;
        }
        Method::ApproxAnalytic => {
            let start = Instant::now();
            let ym = coeffs
                .iter()
                .map(|c| {
                    if c.u > 0.0 {
                        crate::exposure::analytic_moments(&inputs.portfolio, &models, 0.0, c.u, ap.n_r + 2, ap.n_a)
                    } else {
                        Ok(vec![0.0; ap.n_r + 3])
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let wwr = coeffs
                .iter()
                .enumerate()
                .map(|(d, c)| epe_wwr_point(c, base.mean.disc_epe[d], &ym[d]))
                .collect::<Result<Vec<_>>>()?;
            runtimes.approx = Some(start.elapsed().as_secs_f64());
            let batches = base
                .batches
                .iter()
                .map(|b| {
                    coeffs
                        .iter()
                        .enumerate()
                        .map(|(d, c)| epe_wwr_point(c, b.disc_epe[d], &ym[d]))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            approx = Some(wwr);
            approx_batches = Some(batches);
        }
        Method::Mc => {}
    }

    let mc = if wants_mc {
        let start = Instant::now();
        let mc = benchmark_wwr(inputs, &models, &grid, &ex, base.disc_epe(), &coeffs)?;
        runtimes.mc = Some(start.elapsed().as_secs_f64());
        Some(mc)
    } else {
        None
    };
    drop(ex);

    let (wwr, wwr_batches, se_wwr): (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) = match (approx, approx_batches) {
        (Some(w), Some(b)) => {
            let se = (0..dates.len())
                .map(|d| batch_se(&b.iter().map(|x| x[d]).collect::<Vec<_>>()))
                .collect();
            (w, b, se)
        }
        _ => {
            let m = mc.as_ref().expect("mc ran");
            (m.value.clone(), m.batch_values.clone(), m.se.clone())
        }
    };
    let profile = ExposureProfile::new(ap.method, &dates, &indep, &wwr, &se_wwr)?;
    let mc_profile = mc
        .as_ref()
        .map(|m| ExposureProfile::new(Method::Mc, &dates, &indep, &m.value, &m.se))
        .transpose()?;

    let (fva_indep, fva_wwr) = integrate_profile(&profile, &dates)?;
    let batch_fva_indep: Vec<f64> = base.batches.iter().map(|b| integrate(&epe_indep(&b.disc_epe, &coeffs), &dates)).collect();
    let batch_fva_wwr: Vec<f64> = wwr_batches.iter().map(|b| integrate(b, &dates)).collect();
    let batch_fva_wwr_mc = mc.as_ref().map(|m| m.batch_values.iter().map(|b| integrate(b, &dates)).collect::<Vec<_>>());
    let fva_wwr_mc = mc.as_ref().map(|m| integrate(&m.value, &dates));
    let fva_total = fva_indep + fva_wwr;
    let wwr_rd_vs_mc = fva_wwr_mc.map(|w| {
        let total_mc = fva_indep + w;
        100.0 * (fva_total - total_mc) / total_mc
    });
    let report = FvaReport {
        version: VERSION.to_string(),
        method: ap.method,
        n_paths: cfg.simulation.paths,
        n_dates: dates.len(),
        seed: cfg.simulation.seed,
        fva_indep,
        fva_indep_se: batch_se(&batch_fva_indep),
        fva_wwr,
        fva_wwr_se: batch_se(&batch_fva_wwr),
        fva_total,
        wwr_pct: 100.0 * fva_wwr / fva_indep,
        fva_wwr_mc,
        fva_wwr_mc_se: batch_fva_wwr_mc.as_ref().map(|b| batch_se(b)),
        wwr_rd_vs_mc,
        runtime_wwr_seconds: runtimes,
        cir_truncated_fraction: mc.as_ref().map(|m| m.truncated_fraction),
        profile,
        config: cfg.clone(),
    };
    Ok(FvaRun {
        report,
        dates,
        coeffs,
        moments,
        epe_indep: indep,
        epe_wwr: wwr,
        mc,
        mc_profile,
        batch_fva_indep,
        batch_fva_wwr,
        batch_fva_wwr_mc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exposure::ProfileRow;

    fn profile(dates: &[f64], v: &[f64]) -> ExposureProfile {
        ExposureProfile {
            method: Method::Mc,
            rows: dates
                .iter()
                .zip(v)
                .map(|(d, x)| ProfileRow { date: *d, epe_indep: *x, epe_wwr: 0.0, epe_total: *x, se_wwr: 0.0, method: Method::Mc })
                .collect(),
        }
    }

    #[test]
    fn right_endpoint_rule() {
        let dates: Vec<f64> = (0..=10).map(|i| i as f64 * 0.5).collect();
        let c = vec![2.0; 11];
        assert!((integrate_profile(&profile(&dates, &c), &dates).unwrap().0 - 10.0).abs() < 1e-14);
        let mut last = vec![0.0; 11];
        last[10] = 3.0;
        assert_eq!(integrate(&last, &dates), 1.5);
        let ramp: Vec<f64> = dates.clone();
        let exact = 0.5 * 5.0 * 5.0;
        assert!((integrate(&ramp, &dates) - (exact + 0.5 * 0.5 * 5.0)).abs() < 1e-12);
        assert!(integrate_profile(&profile(&dates[..5], &c[..5]), &dates).is_err());
    }
}
