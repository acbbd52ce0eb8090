//! Yield and survival term structures.
//!
//! A credit curve is stored exactly like a yield curve; its "discount" is the
//! market survival probability.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub label: String,
    times: Vec<f64>,
    zero_rates: Vec<f64>,
}

impl Curve {
    pub fn new(label: impl Into<String>, times: Vec<f64>, zero_rates: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if times.is_empty() || times.len() != zero_rates.len() {
            return Err(Error::Validation(format!(
                "curve {label}: need matching non-empty pillar times and zero rates"
            )));
        }
        if times[0] < 0.0 {
            return Err(Error::Validation(format!("curve {label}: first pillar is negative")));
        }
        if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::Validation(format!(
                "curve {label}: pillar times not strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if let Some(z) = times.iter().chain(&zero_rates).find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("curve {label}: non-finite value {z}")));
        }
        Ok(Self { label, times, zero_rates })
    }

    pub fn flat(label: impl Into<String>, rate: f64) -> Self {
        Self::new(label, vec![1.0], vec![rate]).expect("flat curve is valid")
    }

    pub fn pillars(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.zero_rates.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Piecewise-linear zero rate, flat outside the pillar range.
    pub fn zero_rate(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.zero_rates[0];
        }
        if t >= self.times[n - 1] {
            return self.zero_rates[n - 1];
        }
        let i = self.times.partition_point(|&x| x <= t);
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let (z0, z1) = (self.zero_rates[i - 1], self.zero_rates[i]);
        z0 + (z1 - z0) * (t - t0) / (t1 - t0)
    }

    /// `P(0,t)`; exactly 1 at `t = 0`.
    pub fn discount(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("discount at negative time {t}")));
        }
        Ok(self.df(t))
    }

    /// Infallible variant for callers that have already validated `t >= 0`.
    pub(crate) fn df(&self, t: f64) -> f64 {
        if t == 0.0 {
            1.0
        } else {
            (-self.zero_rate(t) * t).exp()
        }
    }

    /// `-ln P(0,t)`.
    pub(crate) fn log_df(&self, t: f64) -> f64 {
        -self.zero_rate(t) * t
    }

    /// Parallel shift of every pillar.
    pub fn shifted(&self, dz: f64) -> Self {
        let mut c = self.clone();
        c.zero_rates.iter_mut().for_each(|z| *z += dz);
        c
    }

    /// Shift a single pillar.
    pub fn shifted_pillar(&self, index: usize, dz: f64) -> Result<Self> {
        if index >= self.len() {
            return Err(Error::Validation(format!(
                "curve {}: pillar {index} out of range (has {})",
                self.label,
                self.len()
            )));
        }
        let mut c = self.clone();
        c.zero_rates[index] += dz;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketData {
    pub domestic: String,
    pub domestic_curve: Curve,
    pub foreign_curves: BTreeMap<String, Curve>,
    pub credit_curves: BTreeMap<String, Curve>,
    pub fx_spots: BTreeMap<String, f64>,
}

impl MarketData {
    pub fn yield_curve(&self, currency: &str) -> Result<&Curve> {
        if currency == self.domestic {
            return Ok(&self.domestic_curve);
        }
        self.foreign_curves
            .get(currency)
            .ok_or_else(|| Error::Validation(format!("no yield curve for currency {currency}")))
    }

    pub fn yield_curve_mut(&mut self, currency: &str) -> Result<&mut Curve> {
        if currency == self.domestic {
            return Ok(&mut self.domestic_curve);
        }
        self.foreign_curves
            .get_mut(currency)
            .ok_or_else(|| Error::Validation(format!("no yield curve for currency {currency}")))
    }

    pub fn credit_curve(&self, entity: &str) -> Result<&Curve> {
        self.credit_curves
            .get(entity)
            .ok_or_else(|| Error::Validation(format!("no credit curve {entity}")))
    }

    pub fn fx_spot(&self, currency: &str) -> Result<f64> {
        self.fx_spots
            .get(currency)
            .copied()
            .ok_or_else(|| Error::Validation(format!("no FX spot for {currency}")))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurveRecord {
    label: String,
    times: Vec<f64>,
    zero_rates: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarketFile {
    domestic: String,
    #[serde(default)]
    fx_spots: BTreeMap<String, f64>,
    #[serde(default)]
    yield_curve: Vec<CurveRecord>,
    #[serde(default)]
    credit_curve: Vec<CurveRecord>,
}

pub fn load_market_data(path: impl AsRef<Path>) -> Result<MarketData> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_market_data(&text).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse { path: path.to_path_buf(), message },
        other => other,
    })
}

pub fn parse_market_data(text: &str) -> Result<MarketData> {
    let file: MarketFile = toml::from_str(text)
        .map_err(|e| Error::Parse { path: "<market data>".into(), message: e.message().trim().to_string() })?;
    let mut domestic_curve = None;
    let mut foreign_curves = BTreeMap::new();
    for rec in file.yield_curve {
        let curve = Curve::new(rec.label.clone(), rec.times, rec.zero_rates)?;
        if rec.label == file.domestic {
            domestic_curve = Some(curve);
        } else if foreign_curves.insert(rec.label.clone(), curve).is_some() {
            return Err(Error::Validation(format!("duplicate yield curve {}", rec.label)));
        }
    }
    let domestic_curve = domestic_curve.ok_or_else(|| {
        Error::Validation(format!("no yield curve for domestic currency {}", file.domestic))
    })?;
    let mut credit_curves = BTreeMap::new();
    for rec in file.credit_curve {
        let curve = Curve::new(rec.label.clone(), rec.times, rec.zero_rates)?;
        if credit_curves.insert(rec.label.clone(), curve).is_some() {
            return Err(Error::Validation(format!("duplicate credit curve {}", rec.label)));
        }
    }
    for (ccy, spot) in &file.fx_spots {
        if !(*spot > 0.0) || !spot.is_finite() {
            return Err(Error::Validation(format!("FX spot for {ccy} must be positive, got {spot}")));
        }
    }
    Ok(MarketData {
        domestic: file.domestic,
        domestic_curve,
        foreign_curves,
        credit_curves,
        fx_spots: file.fx_spots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pillar_zero_curve_is_flat_one() {
        let c = Curve::new("Z", vec![1.0], vec![0.0]).unwrap();
        for t in [0.0, 0.5, 3.0, 40.0] {
            assert_eq!(c.discount(t).unwrap(), 1.0);
        }
    }

    #[test]
    fn linear_interpolation_between_pillars() {
        let c = Curve::new("L", vec![1.0, 10.0], vec![0.01, 0.02]).unwrap();
        let z5: f64 = 0.01 + 0.01 * 4.0 / 9.0;
        assert!((c.discount(5.0).unwrap() - (-5.0 * z5).exp()).abs() < 1e-15);
        assert_eq!(c.zero_rate(1.0), 0.01);
        assert_eq!(c.zero_rate(10.0), 0.02);
        assert_eq!(c.zero_rate(0.2), 0.01);
        assert_eq!(c.zero_rate(50.0), 0.02);
    }

    #[test]
    fn flat_curve_closed_form() {
        let c = Curve::flat("F", 0.02);
        assert!((c.discount(10.0).unwrap() - (-0.2f64).exp()).abs() < 1e-15);
        assert_eq!(c.discount(0.0).unwrap(), 1.0);
        assert!(c.discount(-1.0).is_err());
    }

    #[test]
    fn rejects_unordered_pillars() {
        assert!(Curve::new("B", vec![2.0, 1.0], vec![0.01, 0.01]).is_err());
        assert!(Curve::new("B", vec![1.0, 1.0], vec![0.01, 0.01]).is_err());
        assert!(Curve::new("B", vec![-1.0], vec![0.01]).is_err());
    }

    #[test]
    fn parses_market_file() {
        let text = r#"
            domestic = "EUR"
            fx_spots = { USD = 0.9 }
            [[yield_curve]]
            label = "EUR"
            times = [1.0, 10.0]
            zero_rates = [0.0, 0.01]
            [[yield_curve]]
            label = "USD"
            times = [1.0]
            zero_rates = [0.02]
            [[credit_curve]]
            label = "I"
            times = [1.0]
            zero_rates = [0.01]
        "#;
        let m = parse_market_data(text).unwrap();
        assert_eq!(m.domestic, "EUR");
        assert!(m.yield_curve("USD").is_ok());
        assert!(m.yield_curve("GBP").is_err());
        assert_eq!(m.fx_spot("USD").unwrap(), 0.9);
        let bad = text.replace("0.9", "-0.9");
        assert!(parse_market_data(&bad).is_err());
        assert!(matches!(parse_market_data("domestic = ["), Err(Error::Parse { .. })));
    }
}
