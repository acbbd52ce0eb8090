//! Closed-form affine quantities for the Hull-White rates, CIR++ intensities
//! and lognormal FX rates.
//!
//! Every stochastic driver is split as `int_t^u x = M + Y` and
//! `x(u) = mu + y`, with `Y`, `y` zero-mean. The deterministic shifts enter
//! only through `int_b`, obtained from market/model discount-bond ratios.

use crate::curves::Curve;
use crate::error::{Error, Result};
use crate::mc::CorrelationMatrix;
use crate::numerics::{
    decay_cross_integral, decay_integral, gauss_legendre_16, hw_variance_ratio, ramp_ratio,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quanto {
    pub rho_rf_fx: f64,
    pub sigma_fx: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hw1fParams {
    pub x0: f64,
    pub a: f64,
    pub sigma: f64,
    pub curve: Curve,
    pub quanto: Option<Quanto>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CirppParams {
    pub label: String,
    pub x0: f64,
    pub a: f64,
    pub theta: f64,
    pub sigma: f64,
    pub lgd: f64,
    pub curve: Curve,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmFxParams {
    pub spot: f64,
    pub sigma_fx: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HwTerms {
    pub big_b: f64,
    pub big_a: f64,
    pub mu: f64,
    pub big_m: f64,
    pub var_y: f64,
    pub var_big_y: f64,
    pub int_b: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirTerms {
    pub big_b: f64,
    pub big_a: f64,
    pub mu: f64,
    pub big_m: f64,
    pub var_y: f64,
    pub var_big_y: f64,
    pub int_b: f64,
    pub h: f64,
    pub exp_yy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FxTerms {
    pub mu_fx: f64,
    pub var_lnfx: f64,
}

/// Correlations entering the log-FX variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FxCorrelations {
    pub dom_fgn: f64,
    pub dom_fx: f64,
    pub fgn_fx: f64,
}

impl Hw1fParams {
    pub fn new(x0: f64, a: f64, sigma: f64, curve: Curve) -> Result<Self> {
        if !(sigma >= 0.0) || !a.is_finite() || !x0.is_finite() || !sigma.is_finite() {
            return Err(Error::Validation(format!(
                "Hull-White parameters must be finite with sigma >= 0 (a={a}, sigma={sigma}, x0={x0})"
            )));
        }
        Ok(Self { x0, a, sigma, curve, quanto: None })
    }

    /// `B(tau)`.
    pub fn b(&self, tau: f64) -> f64 {
        decay_integral(self.a, tau)
    }

    /// `A(tau) = Var[int x] / 2`.
    pub fn a_fn(&self, tau: f64) -> f64 {
        0.5 * self.sigma * self.sigma * tau.powi(3) * hw_variance_ratio(self.a * tau)
    }

    fn quanto_drift(&self) -> f64 {
        self.quanto.map_or(0.0, |q| q.rho_rf_fx * self.sigma * q.sigma_fx)
    }

    /// `int_t^u b(v) dv` from the market/model bond ratio.
    pub fn int_b(&self, t: f64, u: f64) -> f64 {
        let c = &self.curve;
        (c.log_df(t) - c.log_df(u)) + (self.a_fn(u) - self.a_fn(t))
            - self.x0 * (self.b(u) - self.b(t))
    }

    /// `A_bar(u,T) = A(u,T) - int_u^T b`; the bond is `exp(A_bar - x(u) B(u,T))`.
    pub fn a_bar(&self, u: f64, maturity: f64) -> f64 {
        self.a_fn(maturity - u) - self.int_b(u, maturity)
    }

    /// Model discount bond `P(0,T) = exp(A_bar(0,T) - x0 B(0,T))`.
    pub fn model_zcb(&self, maturity: f64) -> f64 {
        (self.a_bar(0.0, maturity) - self.x0 * self.b(maturity)).exp()
    }
}

pub fn hw_terms(p: &Hw1fParams, t: f64, u: f64) -> HwTerms {
    hw_terms_from(p, t, u, p.x0)
}

/// Terms conditional on `x(t) = x_t`; `hw_terms` uses `x_t = x0` which is exact at `t = 0`.
pub fn hw_terms_from(p: &Hw1fParams, t: f64, u: f64, x_t: f64) -> HwTerms {
    let tau = u - t;
    let big_b = p.b(tau);
    let big_a = p.a_fn(tau);
    let q = p.quanto_drift();
    let mu = x_t * (-p.a * tau).exp() - q * big_b;
    let big_m = x_t * big_b - q * tau * tau * ramp_ratio(p.a * tau);
    let var_y = p.sigma * p.sigma * decay_integral(2.0 * p.a, tau);
    let var_big_y = 2.0 * big_a;
    let int_b = p.int_b(t, u);
    HwTerms { big_b, big_a, mu, big_m, var_y, var_big_y, int_b, h: (-big_m - int_b).exp() }
}

impl CirppParams {
    pub fn new(
        label: impl Into<String>,
        x0: f64,
        a: f64,
        theta: f64,
        sigma: f64,
        lgd: f64,
        curve: Curve,
    ) -> Result<Self> {
        let label = label.into();
        let finite = [x0, a, theta, sigma, lgd].iter().all(|v| v.is_finite());
        if !finite || x0 < 0.0 || a <= 0.0 || theta <= 0.0 || sigma <= 0.0 {
            return Err(Error::Validation(format!(
                "CIR++ {label}: need x0 >= 0 and a, theta, sigma > 0"
            )));
        }
        if !(lgd > 0.0 && lgd <= 1.0) {
            return Err(Error::Validation(format!("CIR++ {label}: LGD {lgd} outside (0,1]")));
        }
        let p = Self { label, x0, a, theta, sigma, lgd, curve };
        if !feller_check(&p) {
            return Err(Error::Feller {
                label: p.label.clone(),
                lhs: 2.0 * a * theta,
                rhs: sigma * sigma,
            });
        }
        Ok(p)
    }

    pub fn h(&self) -> f64 {
        (self.a * self.a + 2.0 * self.sigma * self.sigma).sqrt()
    }

    /// Written with `exp(-h tau)` so it never overflows.
    pub fn b(&self, tau: f64) -> f64 {
        let h = self.h();
        let em = (-h * tau).exp();
        let one_minus = -(-h * tau).exp_m1();
        2.0 * one_minus / (2.0 * h * em + (self.a + h) * one_minus)
    }

    pub fn a_fn(&self, tau: f64) -> f64 {
        let h = self.h();
        let em = (-h * tau).exp();
        let one_minus = -(-h * tau).exp_m1();
        let log_ratio =
            (2.0 * h).ln() + 0.5 * (self.a - h) * tau - (2.0 * h * em + (self.a + h) * one_minus).ln();
        2.0 * self.a * self.theta / (self.sigma * self.sigma) * log_ratio
    }

    pub fn int_b(&self, t: f64, u: f64) -> f64 {
        let c = &self.curve;
        (c.log_df(t) - c.log_df(u)) + (self.a_fn(u) - self.a_fn(t))
            - self.x0 * (self.b(u) - self.b(t))
    }

    /// Model survival `exp(A(0,T) - x0 B(0,T) - int_0^T b)`; equals the market curve.
    pub fn model_survival(&self, maturity: f64) -> f64 {
        (self.a_fn(maturity) - self.x0 * self.b(maturity) - self.int_b(0.0, maturity)).exp()
    }

    /// Instantaneous forward of the unshifted CIR model.
    pub fn model_forward(&self, t: f64) -> f64 {
        let h = self.h();
        let g = (h * t).exp_m1();
        let den = 2.0 * h + (self.a + h) * g;
        2.0 * self.a * self.theta * g / den + self.x0 * 4.0 * h * h * (h * t).exp() / (den * den)
    }
}

pub fn feller_check(p: &CirppParams) -> bool {
    2.0 * p.a * p.theta > p.sigma * p.sigma
}

pub fn cir_terms(p: &CirppParams, t: f64, u: f64, x_t: f64) -> CirTerms {
    let tau = u - t;
    let (a, th, s2) = (p.a, p.theta, p.sigma * p.sigma);
    let e = (-a * tau).exp();
    let one_e = -(-a * tau).exp_m1();
    let bdec = decay_integral(a, tau);
    let mu = x_t * e + th * one_e;
    let big_m = x_t * bdec + th * (tau - bdec);
    let var_y = s2 * bdec * (mu - 0.5 * th * one_e);
    let (var_big_y, exp_yy) = if a * tau < 0.05 {
        cir_second_moments_quadrature(p, tau, x_t)
    } else {
        let at = a * tau;
        let a3 = a * a * a;
        let vy = s2 * x_t / a3 * (1.0 - 2.0 * at * e - e * e)
            + s2 * th / a3 * (at - 3.0 * one_e + 2.0 * at * e + 0.5 * one_e * one_e);
        let eyy = s2 * x_t / (a * a) * e * (at - one_e)
            + s2 * th / (a * a) * (0.5 * (1.0 - e * e) - at * e);
        (vy, eyy)
    };
    let int_b = p.int_b(t, u);
    CirTerms {
        big_b: p.b(tau),
        big_a: p.a_fn(tau),
        mu,
        big_m,
        var_y,
        var_big_y,
        int_b,
        h: (-big_m - int_b).exp(),
        exp_yy,
    }
}

/// Short horizons: integrate the Ito isometry directly, avoiding the
/// cancellation in the `1/a^3` closed forms.
fn cir_second_moments_quadrature(p: &CirppParams, tau: f64, x_t: f64) -> (f64, f64) {
    if tau <= 0.0 {
        return (0.0, 0.0);
    }
    let (nodes, weights) = gauss_legendre_16();
    let (a, th, s2) = (p.a, p.theta, p.sigma * p.sigma);
    let mut vy = 0.0;
    let mut eyy = 0.0;
    for (x, w) in nodes.iter().zip(weights.iter()) {
        let s = 0.5 * tau * (1.0 + x);
        let mean = x_t * (-a * s).exp() + th * -(-a * s).exp_m1();
        let b = decay_integral(a, tau - s);
        vy += w * b * b * mean;
        eyy += w * b * (-a * (tau - s)).exp() * mean;
    }
    (0.5 * tau * s2 * vy, 0.5 * tau * s2 * eyy)
}

pub fn fx_terms(
    dom: &Hw1fParams,
    fgn: &Hw1fParams,
    fx: &GbmFxParams,
    corr: FxCorrelations,
    t: f64,
    u: f64,
    ln_fx_t: f64,
) -> FxTerms {
    let tau = u - t;
    let d = hw_terms(dom, t, u);
    let f = hw_terms(fgn, t, u);
    let sx = fx.sigma_fx;
    let mu_fx = ln_fx_t + d.big_m + d.int_b - f.big_m - f.int_b - 0.5 * sx * sx * tau;
    let cross_df = decay_cross_integral(dom.a, fgn.a, tau);
    let var_lnfx = d.var_big_y + f.var_big_y + sx * sx * tau
        - 2.0 * corr.dom_fgn * dom.sigma * fgn.sigma * cross_df
        + 2.0 * corr.dom_fx * dom.sigma * sx * tau * tau * ramp_ratio(dom.a * tau)
        - 2.0 * corr.fgn_fx * fgn.sigma * sx * tau * tau * ramp_ratio(fgn.a * tau);
    FxTerms { mu_fx, var_lnfx: var_lnfx.max(0.0) }
}

/// `Sigma(x) = sqrt(Var[x] / Var[y_r])`.
pub fn sigma_ratio(var_x: f64, var_y_r: f64) -> Result<f64> {
    if !(var_y_r > 0.0) {
        return Err(Error::Domain(format!(
            "variance ratio undefined for Var[y_r] = {var_y_r}"
        )));
    }
    if var_x < 0.0 {
        return Err(Error::Domain(format!("negative variance {var_x}")));
    }
    Ok((var_x / var_y_r).sqrt())
}

pub const LAMBDA_I: &str = "lambda_I";
pub const LAMBDA_C: &str = "lambda_C";

pub fn rate_label(currency: &str) -> String {
    format!("r_{currency}")
}

pub fn fx_label(currency: &str) -> String {
    format!("fx_{currency}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForeignModel {
    pub currency: String,
    pub hw: Hw1fParams,
    pub fx: GbmFxParams,
}

/// Every process of the hybrid model plus their correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    pub domestic_currency: String,
    pub domestic: Hw1fParams,
    pub foreign: Vec<ForeignModel>,
    pub institution: CirppParams,
    pub counterparty: CirppParams,
    pub corr: CorrelationMatrix,
}

impl ModelSet {
    /// Factor labels in simulation order: rates, FX, then the two intensities.
    pub fn factor_labels(domestic: &str, foreign: &[&str]) -> Vec<String> {
        let mut labels = vec![rate_label(domestic)];
        labels.extend(foreign.iter().map(|c| rate_label(c)));
        labels.extend(foreign.iter().map(|c| fx_label(c)));
        labels.push(LAMBDA_I.to_string());
        labels.push(LAMBDA_C.to_string());
        labels
    }

    /// Assembles the set and wires the quanto correction of every foreign
    /// rate from the correlation matrix.
    pub fn new(
        domestic_currency: impl Into<String>,
        domestic: Hw1fParams,
        mut foreign: Vec<ForeignModel>,
        institution: CirppParams,
        counterparty: CirppParams,
        corr: CorrelationMatrix,
    ) -> Result<Self> {
        let domestic_currency = domestic_currency.into();
        let names: Vec<&str> = foreign.iter().map(|f| f.currency.as_str()).collect();
        let expected = Self::factor_labels(&domestic_currency, &names);
        if corr.labels() != expected.as_slice() {
            return Err(Error::Correlation(format!(
                "correlation labels {:?} do not match model factors {:?}",
                corr.labels(),
                expected
            )));
        }
        for f in &mut foreign {
            if !(f.fx.spot > 0.0) || !(f.fx.sigma_fx > 0.0) {
                return Err(Error::Validation(format!(
                    "FX {}: spot and volatility must be positive",
                    f.currency
                )));
            }
            let rho = corr.get(&rate_label(&f.currency), &fx_label(&f.currency))?;
            f.hw.quanto = Some(Quanto { rho_rf_fx: rho, sigma_fx: f.fx.sigma_fx });
        }
        let mut domestic = domestic;
        domestic.quanto = None;
        Ok(Self { domestic_currency, domestic, foreign, institution, counterparty, corr })
    }

    pub fn foreign_index(&self, currency: &str) -> Option<usize> {
        self.foreign.iter().position(|f| f.currency == currency)
    }

    pub fn foreign(&self, currency: &str) -> Result<&ForeignModel> {
        self.foreign
            .iter()
            .find(|f| f.currency == currency)
            .ok_or_else(|| Error::Validation(format!("no model for currency {currency}")))
    }

    /// Hull-White parameters of any currency (domestic or foreign).
    pub fn rates(&self, currency: &str) -> Result<&Hw1fParams> {
        if currency == self.domestic_currency {
            Ok(&self.domestic)
        } else {
            self.foreign(currency).map(|f| &f.hw)
        }
    }

    pub fn rho(&self, a: &str, b: &str) -> Result<f64> {
        self.corr.get(a, b)
    }

    pub fn fx_correlations(&self, currency: &str) -> Result<FxCorrelations> {
        let d = rate_label(&self.domestic_currency);
        let f = rate_label(currency);
        let x = fx_label(currency);
        Ok(FxCorrelations {
            dom_fgn: self.rho(&d, &f)?,
            dom_fx: self.rho(&d, &x)?,
            fgn_fx: self.rho(&f, &x)?,
        })
    }

    pub fn fx_terms(&self, currency: &str, t: f64, u: f64) -> Result<FxTerms> {
        let f = self.foreign(currency)?;
        let corr = self.fx_correlations(currency)?;
        Ok(fx_terms(&self.domestic, &f.hw, &f.fx, corr, t, u, f.fx.spot.ln()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hw(a: f64, sigma: f64) -> Hw1fParams {
        Hw1fParams::new(0.0, a, sigma, Curve::flat("Z", 0.0)).unwrap()
    }

    fn cir_c() -> CirppParams {
        CirppParams::new("C", 0.0063774, 0.2, 0.035447, 0.08, 0.6, Curve::flat("C", 0.02)).unwrap()
    }

    #[test]
    fn degenerate_interval() {
        let t = hw_terms(&hw(1e-5, 0.00284), 3.0, 3.0);
        assert_eq!((t.big_b, t.big_a, t.var_y, t.var_big_y), (0.0, 0.0, 0.0, 0.0));
        assert!((t.h - 1.0).abs() < 1e-15);
        let c = cir_terms(&cir_c(), 2.0, 2.0, 0.01);
        assert_eq!(c.mu, 0.01);
        assert_eq!(c.big_m, 0.0);
        assert_eq!((c.var_y, c.var_big_y, c.exp_yy), (0.0, 0.0, 0.0));
    }

    #[test]
    fn small_mean_reversion_variance() {
        let (a, s) = (1e-5_f64, 0.00284_f64);
        let t = hw_terms(&hw(a, s), 0.0, 10.0);
        let exact = s * s / (2.0 * a) * -(-2.0 * a * 10.0).exp_m1();
        assert!((t.var_y - exact).abs() < 1e-12 * exact);
        assert!((t.var_y - 8.0648e-5).abs() < 1e-8);
        // a -> 0 limits
        let z = hw_terms(&hw(1e-14, s), 0.0, 7.0);
        assert!((z.big_b - 7.0).abs() < 1e-12);
        assert!((z.var_big_y - s * s * 343.0 / 3.0).abs() < 1e-12 * z.var_big_y);
    }

    #[test]
    fn hw_discount_consistency() {
        let curve = Curve::new("S", vec![1.0, 5.0, 30.0], vec![0.01, 0.015, 0.02]).unwrap();
        for a in [1e-5, 0.03, 0.5] {
            let p = Hw1fParams::new(0.004, a, 0.01, curve.clone()).unwrap();
            for u in [0.1, 1.0, 4.5, 12.0, 30.0, 45.0] {
                let t = hw_terms(&p, 0.0, u);
                let lhs = t.h * (0.5 * t.var_big_y).exp();
                assert!((lhs / p.model_zcb(u) - 1.0).abs() < 1e-12);
                assert!((lhs / curve.df(u) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cir_survival_matches_curve() {
        let p = cir_c();
        for u in [0.5, 3.0, 30.0] {
            assert!((p.model_survival(u) / p.curve.df(u) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cir_quadrature_and_closed_form_agree() {
        let p = cir_c();
        let tau = 0.05 / p.a * 1.5;
        let t = cir_terms(&p, 0.0, tau, 0.01);
        let q = cir_second_moments_quadrature(&p, tau, 0.01);
        assert!((t.var_big_y - q.0).abs() < 1e-10 * q.0);
        assert!((t.exp_yy - q.1).abs() < 1e-10 * q.1);
    }

    #[test]
    fn cir_deterministic_limit() {
        let p = CirppParams::new("D", 0.03, 0.5, 0.03, 1e-9, 0.6, Curve::flat("D", 0.03)).unwrap();
        for u in [1.0, 10.0] {
            let t = cir_terms(&p, 0.0, u, p.x0);
            assert!((t.mu - 0.03).abs() < 1e-15);
            assert!(t.var_y < 1e-18 && t.var_big_y < 1e-18);
        }
    }

    #[test]
    fn feller() {
        let c = Curve::flat("x", 0.0);
        assert!(CirppParams::new("I", 0.0016939, 0.05, 0.015390, 0.02, 0.6, c.clone()).is_ok());
        assert!(CirppParams::new("C", 0.0063774, 0.2, 0.035447, 0.08, 0.6, c.clone()).is_ok());
        let ok = CirppParams { label: "u".into(), x0: 1.0, a: 1.0, theta: 1.0, sigma: 1.0, lgd: 1.0, curve: c.clone() };
        assert!(feller_check(&ok));
        let bad = CirppParams { sigma: 2.0, ..ok };
        assert!(!feller_check(&bad));
        assert!(matches!(
            CirppParams::new("bad", 1.0, 1.0, 1.0, 2.0, 0.5, c),
            Err(Error::Feller { .. })
        ));
    }

    #[test]
    fn fx_variance_without_correlation() {
        let d = hw(0.01, 0.003);
        let f = hw(0.02, 0.004);
        let fx = GbmFxParams { spot: 1.1, sigma_fx: 0.15 };
        let zero = FxCorrelations { dom_fgn: 0.0, dom_fx: 0.0, fgn_fx: 0.0 };
        let t = fx_terms(&d, &f, &fx, zero, 0.0, 5.0, fx.spot.ln());
        let expect = hw_terms(&d, 0.0, 5.0).var_big_y + hw_terms(&f, 0.0, 5.0).var_big_y + 0.15 * 0.15 * 5.0;
        assert!((t.var_lnfx - expect).abs() < 1e-15);
        let t0 = fx_terms(&d, &f, &fx, zero, 2.0, 2.0, fx.spot.ln());
        assert_eq!(t0.var_lnfx, 0.0);
        assert!((t0.mu_fx - fx.spot.ln()).abs() < 1e-15);
    }

    #[test]
    fn sigma_ratio_cases() {
        assert_eq!(sigma_ratio(2.0, 2.0).unwrap(), 1.0);
        assert_eq!(sigma_ratio(0.0, 2.0).unwrap(), 0.0);
        assert!(sigma_ratio(1.0, 0.0).is_err());
        let t = hw_terms(&hw(1e-12, 0.01), 0.0, 6.0);
        let r = sigma_ratio(t.var_big_y, t.var_y).unwrap();
        assert!((r - 6.0 / 3f64.sqrt()).abs() < 1e-9);
    }
}
