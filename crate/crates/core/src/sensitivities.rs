//! Bump-and-revalue sensitivities of FVA and its WWR part under common
//! random numbers: every leg reuses the configured seed.

use crate::error::{Error, Result};
use crate::exposure::{batch_se, Method};
use crate::fva::{run_inputs, CorrEntry, RunInputs};
use crate::par::map_indexed;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Entity {
    I,
    C,
}

impl FromStr for Entity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "institution" => Ok(Entity::I),
            "C" | "counterparty" => Ok(Entity::C),
            _ => Err(Error::Config(format!("unknown credit entity '{s}' (expected I or C)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BumpTarget {
    /// `None` means the domestic currency.
    IrParallel(Option<String>),
    IrPillar(String, usize),
    CreditParallel(Entity),
    SigmaR(Option<String>),
    SigmaFx(String),
    SigmaLambda(Entity),
    FxSpot(String),
    Correlation(String, String),
}

impl fmt::Display for BumpTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ent = |e: &Entity| match e {
            Entity::I => "I",
            Entity::C => "C",
        };
        match self {
            BumpTarget::IrParallel(None) => write!(f, "ir_parallel"),
            BumpTarget::IrParallel(Some(c)) => write!(f, "ir_parallel:{c}"),
            BumpTarget::IrPillar(c, i) => write!(f, "ir_pillar:{c}:{i}"),
            BumpTarget::CreditParallel(e) => write!(f, "credit_parallel:{}", ent(e)),
            BumpTarget::SigmaR(None) => write!(f, "sigma_r"),
            BumpTarget::SigmaR(Some(c)) => write!(f, "sigma_r:{c}"),
            BumpTarget::SigmaFx(c) => write!(f, "sigma_fx:{c}"),
            BumpTarget::SigmaLambda(e) => write!(f, "sigma_lambda:{}", ent(e)),
            BumpTarget::FxSpot(c) => write!(f, "fx_spot:{c}"),
            BumpTarget::Correlation(a, b) => write!(f, "corr:{a}:{b}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Central,
    Forward,
}

impl Scheme {
    fn as_str(self) -> &'static str {
        match self {
            Scheme::Central => "central",
            Scheme::Forward => "forward",
        }
    }
}

/// A bump target with its size in natural units. `size = None` selects the
/// default: 1bp for curves, 1% of spot, 10% of the volatility, 0.01 for
/// correlations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpSpec {
    pub target: BumpTarget,
    pub size: Option<f64>,
    pub scheme: Scheme,
}

impl BumpSpec {
    pub fn new(target: BumpTarget, size: f64) -> Self {
        Self { target, size: Some(size), scheme: Scheme::Central }
    }

    /// Bump size in natural units, resolving defaults against the base inputs.
    pub fn resolved_size(&self, base: &RunInputs) -> Result<f64> {
        let h = match self.size {
            Some(h) => h,
            None => match &self.target {
                BumpTarget::IrParallel(_) | BumpTarget::IrPillar(..) | BumpTarget::CreditParallel(_) => 1e-4,
                BumpTarget::FxSpot(c) => 0.01 * base.market.fx_spot(c)?,
                BumpTarget::Correlation(..) => 0.01,
                BumpTarget::SigmaR(c) => 0.1 * rate_sigma(base, c.as_deref())?,
                BumpTarget::SigmaFx(c) => 0.1 * foreign_spec(base, c)?.fx_sigma,
                BumpTarget::SigmaLambda(e) => 0.1 * credit_spec(base, *e).sigma,
            },
        };
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Config(format!("bump size for {} must be positive, got {h}", self.target)));
        }
        Ok(h)
    }
}

/// Parses `kind[:key...][:size][@central|@forward]`, e.g. `ir_parallel:1e-4`,
/// `ir_pillar:USD:2`, `credit_parallel:C:5e-4@forward`, `corr:r_EUR:lambda_I`.
impl FromStr for BumpSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::Config(format!("invalid bump '{s}': {why}"));
        let (body, scheme) = match s.split_once('@') {
            Some((b, "central")) => (b, Scheme::Central),
            Some((b, "forward")) => (b, Scheme::Forward),
            Some(_) => return Err(bad("scheme must be central or forward")),
            None => (s, Scheme::Central),
        };
        let mut tokens: Vec<&str> = body.split(':').collect();
        let kind = tokens.remove(0);
        let min_keys = match kind {
            "ir_parallel" | "sigma_r" => 0,
            "credit_parallel" | "sigma_fx" | "sigma_lambda" | "fx_spot" => 1,
            "ir_pillar" | "corr" => 2,
            _ => return Err(bad("unknown bump kind")),
        };
        let mut size = None;
        if tokens.len() > min_keys {
            if let Ok(h) = tokens[tokens.len() - 1].parse::<f64>() {
                size = Some(h);
                tokens.pop();
            }
        }
        let max_keys = if kind == "ir_parallel" || kind == "sigma_r" { 1 } else { min_keys };
        if tokens.len() < min_keys || tokens.len() > max_keys {
            return Err(bad("wrong number of fields"));
        }
        let key = |i: usize| tokens[i].to_string();
        let target = match kind {
            "ir_parallel" => BumpTarget::IrParallel(tokens.first().map(|t| t.to_string())),
            "sigma_r" => BumpTarget::SigmaR(tokens.first().map(|t| t.to_string())),
            "ir_pillar" => BumpTarget::IrPillar(key(0), tokens[1].parse().map_err(|_| bad("pillar index"))?),
            "credit_parallel" => BumpTarget::CreditParallel(tokens[0].parse()?),
            "sigma_fx" => BumpTarget::SigmaFx(key(0)),
            "sigma_lambda" => BumpTarget::SigmaLambda(tokens[0].parse()?),
            "fx_spot" => BumpTarget::FxSpot(key(0)),
            _ => BumpTarget::Correlation(key(0), key(1)),
        };
        if matches!(size, Some(h) if !(h > 0.0)) {
            return Err(bad("size must be positive"));
        }
        Ok(BumpSpec { target, size, scheme })
    }
}

fn rate_sigma(inputs: &RunInputs, ccy: Option<&str>) -> Result<f64> {
    match ccy {
        None => Ok(inputs.cfg.domestic.sigma),
        Some(c) if c == inputs.cfg.domestic.currency => Ok(inputs.cfg.domestic.sigma),
        Some(c) => Ok(foreign_spec(inputs, c)?.sigma),
    }
}

fn foreign_spec<'a>(inputs: &'a RunInputs, ccy: &str) -> Result<&'a crate::fva::ForeignSpec> {
    inputs
        .cfg
        .foreign
        .iter()
        .find(|f| f.currency == ccy)
        .ok_or_else(|| Error::Config(format!("no foreign currency {ccy} in the configuration")))
}

fn credit_spec(inputs: &RunInputs, e: Entity) -> &crate::fva::CirSpec {
    match e {
        Entity::I => &inputs.cfg.institution,
        Entity::C => &inputs.cfg.counterparty,
    }
}

/// Returns a copy of `inputs` with `target` moved by `delta`. Nothing derived
/// is cached in [`RunInputs`], so shifts, factors and ratios are rebuilt.
pub fn apply_bump(inputs: &RunInputs, target: &BumpTarget, delta: f64) -> Result<RunInputs> {
    let mut out = inputs.clone();
    match target {
        BumpTarget::IrParallel(c) => {
            let ccy = c.clone().unwrap_or_else(|| out.market.domestic.clone());
            let curve = out.market.yield_curve_mut(&ccy)?;
            *curve = curve.shifted(delta);
        }
        BumpTarget::IrPillar(c, i) => {
            let curve = out.market.yield_curve_mut(c)?;
            *curve = curve.shifted_pillar(*i, delta)?;
        }
        BumpTarget::CreditParallel(e) => {
            let label = credit_spec(inputs, *e).curve.clone();
            let other = credit_spec(inputs, if *e == Entity::I { Entity::C } else { Entity::I });
            if other.curve == label {
                return Err(Error::Config(format!(
                    "institution and counterparty share credit curve {label}; a per-entity bump is ambiguous"
                )));
            }
            let curve = out
                .market
                .credit_curves
                .get_mut(&label)
                .ok_or_else(|| Error::Config(format!("unknown credit curve {label}")))?;
            *curve = curve.shifted(delta);
        }
        BumpTarget::SigmaR(c) => match c.as_deref() {
            None => out.cfg.domestic.sigma += delta,
            Some(c) if c == out.cfg.domestic.currency => out.cfg.domestic.sigma += delta,
            Some(c) => {
                foreign_spec(inputs, c)?;
                out.cfg.foreign.iter_mut().find(|f| f.currency == c).expect("checked").sigma += delta;
            }
        },
        BumpTarget::SigmaFx(c) => {
            foreign_spec(inputs, c)?;
            out.cfg.foreign.iter_mut().find(|f| &f.currency == c).expect("checked").fx_sigma += delta;
        }
        BumpTarget::SigmaLambda(e) => match e {
            Entity::I => out.cfg.institution.sigma += delta,
            Entity::C => out.cfg.counterparty.sigma += delta,
        },
        BumpTarget::FxSpot(c) => {
            let spot = out
                .market
                .fx_spots
                .get_mut(c)
                .ok_or_else(|| Error::Config(format!("no FX spot for {c}")))?;
            *spot += delta;
        }
        BumpTarget::Correlation(a, b) => {
            let hit = out.cfg.correlation.iter_mut().find(|e| (&e.a == a && &e.b == b) || (&e.a == b && &e.b == a));
            match hit {
                Some(e) => e.rho += delta,
                None => out.cfg.correlation.push(CorrEntry { a: a.clone(), b: b.clone(), rho: delta }),
            }
        }
    }
    // Surfaces Feller, PSD and domain violations of the bumped state here.
    out.models()?;
    Ok(out)
}

/// FVA pieces of one revaluation, with batch-level values for noise estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct LegValue {
    pub fva_indep: f64,
    pub fva_wwr: f64,
    pub fva_wwr_mc: Option<f64>,
    pub batch_indep: Vec<f64>,
    pub batch_wwr: Vec<f64>,
    pub batch_wwr_mc: Option<Vec<f64>>,
}

pub fn evaluate(inputs: &RunInputs) -> Result<LegValue> {
    let run = run_inputs(inputs)?;
    Ok(LegValue {
        fva_indep: run.report.fva_indep,
        fva_wwr: run.report.fva_wwr,
        fva_wwr_mc: run.report.fva_wwr_mc,
        batch_indep: run.batch_fva_indep,
        batch_wwr: run.batch_fva_wwr,
        batch_wwr_mc: run.batch_fva_wwr_mc,
    })
}

fn evaluate_all(legs: &[RunInputs]) -> Result<Vec<LegValue>> {
    let exec = legs.first().map(|l| l.cfg.simulation.exec).unwrap_or_default();
    map_indexed(exec, legs.len(), |i| evaluate(&legs[i])).into_iter().collect()
}

/// Linear combination of legs, applied to totals and batch values alike.
fn combine(legs: &[LegValue], w: &[f64]) -> LegValue {
    let lin = |f: &dyn Fn(&LegValue) -> f64| legs.iter().zip(w).map(|(l, w)| w * f(l)).sum::<f64>();
    let lin_vec = |f: &dyn Fn(&LegValue) -> Option<&Vec<f64>>| -> Option<Vec<f64>> {
        let first = f(&legs[0])?;
        (0..first.len())
            .map(|b| legs.iter().zip(w).map(|(l, w)| f(l).map(|v| w * v[b])).sum::<Option<f64>>())
            .collect()
    };
    LegValue {
        fva_indep: lin(&|l| l.fva_indep),
        fva_wwr: lin(&|l| l.fva_wwr),
        fva_wwr_mc: legs.iter().zip(w).map(|(l, w)| l.fva_wwr_mc.map(|v| w * v)).sum(),
        batch_indep: lin_vec(&|l| Some(&l.batch_indep)).expect("always present"),
        batch_wwr: lin_vec(&|l| Some(&l.batch_wwr)).expect("always present"),
        batch_wwr_mc: lin_vec(&|l| l.batch_wwr_mc.as_ref()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub target: String,
    pub size: f64,
    pub scheme: Scheme,
    pub d_fva_indep: f64,
    pub d_fva_wwr: f64,
    pub d_fva_total: f64,
    pub method: Method,
    /// Batch-means standard error of `d_fva_wwr`.
    pub se_d_fva_wwr: f64,
}

/// Finite-difference rows for one bump: the configured method, plus a
/// benchmark row when the configuration requests the full simulation.
pub fn fd_sensitivity(inputs: &RunInputs, bump: &BumpSpec) -> Result<Vec<SensitivityRow>> {
    let h = bump.resolved_size(inputs)?;
    let (legs, w) = match bump.scheme {
        Scheme::Central => (
            vec![apply_bump(inputs, &bump.target, h)?, apply_bump(inputs, &bump.target, -h)?],
            vec![0.5 / h, -0.5 / h],
        ),
        Scheme::Forward => (vec![apply_bump(inputs, &bump.target, h)?, inputs.clone()], vec![1.0 / h, -1.0 / h]),
    };
    let d = combine(&evaluate_all(&legs)?, &w);
    Ok(rows_from(&bump.target.to_string(), h, bump.scheme, inputs.cfg.approximation.method, &d))
}

fn rows_from(target: &str, size: f64, scheme: Scheme, method: Method, d: &LegValue) -> Vec<SensitivityRow> {
    let mut rows = vec![SensitivityRow {
        target: target.to_string(),
        size,
        scheme,
        d_fva_indep: d.fva_indep,
        d_fva_wwr: d.fva_wwr,
        d_fva_total: d.fva_indep + d.fva_wwr,
        method,
        se_d_fva_wwr: batch_se(&d.batch_wwr),
    }];
    if method != Method::Mc {
        if let (Some(v), Some(b)) = (d.fva_wwr_mc, &d.batch_wwr_mc) {
            rows.push(SensitivityRow {
                target: target.to_string(),
                size,
                scheme,
                d_fva_indep: d.fva_indep,
                d_fva_wwr: v,
                d_fva_total: d.fva_indep + v,
                method: Method::Mc,
                se_d_fva_wwr: batch_se(b),
            });
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossGammaRow {
    pub target_a: String,
    pub target_b: String,
    pub size_a: f64,
    pub size_b: f64,
    pub cross_indep: f64,
    pub cross_wwr: f64,
    pub cross_total: f64,
    pub method: Method,
    pub se_cross_wwr: f64,
}

/// Mixed central second difference over two targets, four legs on one seed.
pub fn cross_gamma(inputs: &RunInputs, a: &BumpSpec, b: &BumpSpec) -> Result<Vec<CrossGammaRow>> {
    let ha = a.resolved_size(inputs)?;
    let hb = b.resolved_size(inputs)?;
    let leg = |sa: f64, sb: f64| apply_bump(&apply_bump(inputs, &a.target, sa * ha)?, &b.target, sb * hb);
    let legs = vec![leg(1.0, 1.0)?, leg(-1.0, -1.0)?, leg(1.0, -1.0)?, leg(-1.0, 1.0)?];
    let s = 1.0 / (4.0 * ha * hb);
    let d = combine(&evaluate_all(&legs)?, &[s, s, -s, -s]);
    let method = inputs.cfg.approximation.method;
    let row = |wwr: f64, batches: &[f64], method: Method| CrossGammaRow {
        target_a: a.target.to_string(),
        target_b: b.target.to_string(),
        size_a: ha,
        size_b: hb,
        cross_indep: d.fva_indep,
        cross_wwr: wwr,
        cross_total: d.fva_indep + wwr,
        method,
        se_cross_wwr: batch_se(batches),
    };
    let mut rows = vec![row(d.fva_wwr, &d.batch_wwr, method)];
    if method != Method::Mc {
        if let (Some(v), Some(bm)) = (d.fva_wwr_mc, &d.batch_wwr_mc) {
            rows.push(row(v, bm, Method::Mc));
        }
    }
    Ok(rows)
}

/// Central differences at `h`, `h/2`, `h/4` of total FVA. For a smooth
/// target the successive differences shrink by a factor near 4.
#[derive(Debug, Clone, PartialEq)]
pub struct RichardsonCheck {
    pub sizes: [f64; 3],
    pub deltas: [f64; 3],
}

impl RichardsonCheck {
    pub fn ratio(&self) -> f64 {
        (self.deltas[0] - self.deltas[1]) / (self.deltas[1] - self.deltas[2])
    }

    pub fn extrapolated(&self) -> f64 {
        (4.0 * self.deltas[2] - self.deltas[1]) / 3.0
    }
}

pub fn richardson_check(inputs: &RunInputs, target: &BumpTarget, h: f64) -> Result<RichardsonCheck> {
    let sizes = [h, h / 2.0, h / 4.0];
    let mut legs = Vec::with_capacity(6);
    for s in sizes {
        legs.push(apply_bump(inputs, target, s)?);
        legs.push(apply_bump(inputs, target, -s)?);
    }
    let v = evaluate_all(&legs)?;
    let total = |l: &LegValue| l.fva_indep + l.fva_wwr;
    let deltas = [0, 1, 2].map(|k| (total(&v[2 * k]) - total(&v[2 * k + 1])) / (2.0 * sizes[k]));
    Ok(RichardsonCheck { sizes, deltas })
}

pub fn write_sensitivity_csv(path: impl AsRef<Path>, rows: &[SensitivityRow]) -> Result<()> {
    write_rows(path.as_ref(), rows)
}

pub fn write_cross_gamma_csv(path: impl AsRef<Path>, rows: &[CrossGammaRow]) -> Result<()> {
    write_rows(path.as_ref(), rows)
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| crate::exposure::csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| crate::exposure::csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_bump_grammar() {
        let b: BumpSpec = "ir_parallel:1e-4".parse().unwrap();
        assert_eq!(b.target, BumpTarget::IrParallel(None));
        assert_eq!(b.size, Some(1e-4));
        let b: BumpSpec = "ir_parallel:USD".parse().unwrap();
        assert_eq!(b.target, BumpTarget::IrParallel(Some("USD".into())));
        assert_eq!(b.size, None);
        let b: BumpSpec = "ir_pillar:GBP:2".parse().unwrap();
        assert_eq!(b.target, BumpTarget::IrPillar("GBP".into(), 2));
        assert_eq!(b.size, None);
        let b: BumpSpec = "credit_parallel:C:5e-4@forward".parse().unwrap();
        assert_eq!(b.target, BumpTarget::CreditParallel(Entity::C));
        assert_eq!(b.scheme, Scheme::Forward);
        let b: BumpSpec = "corr:r_EUR:lambda_I:0.02".parse().unwrap();
        assert_eq!(b.target, BumpTarget::Correlation("r_EUR".into(), "lambda_I".into()));
        assert_eq!(b.size, Some(0.02));
        for bad in ["vega", "credit_parallel", "ir_parallel:-1e-4", "fx_spot:USD:abc", "sigma_r:1e-4@sideways", "corr:a"] {
            assert!(bad.parse::<BumpSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn display_round_trips() {
        for s in ["ir_parallel", "ir_parallel:USD", "ir_pillar:EUR:3", "credit_parallel:I", "sigma_r:GBP", "sigma_fx:USD", "sigma_lambda:C", "fx_spot:GBP", "corr:r_EUR:fx_USD"] {
            let b: BumpSpec = s.parse().unwrap();
            assert_eq!(b.target.to_string(), s);
        }
    }
}
