mod common;

use common::{adaptive_simpson, inputs_with, rel};
use fva_wwr::exposure::{base_moments, fx_forward_analytic_moments, swap_analytic_moments};
use fva_wwr::fva::simulate_exposures;
use fva_wwr::instruments::{parse_portfolio, portfolio_value, swap_value_y, swap_weights, FxForward, Trade};
use fva_wwr::mc::{simulate, CubeMode, SimGrid};
use fva_wwr::models::{hw_terms, Hw1fParams};
use fva_wwr::par::Exec;

/// `E[f(y)]` for `y ~ N(0, var)`, with the range split at each `y` in `kinks`.
fn gauss_expectation(var: f64, kinks: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let sd = var.sqrt();
    let g = |z: f64| f(sd * z) * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut cuts = vec![-14.0];
    cuts.extend(kinks.iter().map(|k| k / sd).filter(|z| z.abs() < 14.0));
    cuts.push(14.0);
    cuts.windows(2).map(|c| adaptive_simpson(&g, c[0], c[1], 1e-13)).sum()
}

/// Sign changes of `v` on a fine grid over +-14 sd, refined by bisection.
fn roots(var: f64, v: impl Fn(f64) -> f64) -> Vec<f64> {
    let sd = var.sqrt();
    let zs: Vec<f64> = (0..=2800).map(|i| sd * (-14.0 + i as f64 * 0.01)).collect();
    zs.windows(2)
        .filter(|p| v(p[0]).signum() != v(p[1]).signum())
        .map(|p| {
            let (mut lo, mut hi) = (p[0], p[1]);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if v(mid).signum() == v(lo).signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

#[test]
fn swap_analytic_moments_match_quadrature() {
    let inputs = inputs_with("single_swap.cfg", |_| {});
    let models = inputs.models().unwrap();
    let Trade::Swap(s) = &inputs.portfolio.trades[0] else { panic!("swap fixture") };
    for u in [0.3, 1.0, 5.5, 12.0, 29.5] {
        let var = hw_terms(&models.domestic, 0.0, u).var_y;
        let w = swap_weights(s, &models.domestic, 0.0, u).unwrap();
        let m = swap_analytic_moments(s, &models, 0.0, u, 6, 20).unwrap();
        let kinks = roots(var, |y| swap_value_y(s, &w, y));
        for (l, &got) in m.iter().enumerate() {
            let want = gauss_expectation(var, &kinks, |y| y.powi(l as i32) * swap_value_y(s, &w, y).max(0.0));
            let scale = gauss_expectation(var, &kinks, |y| y.abs().powi(l as i32) * swap_value_y(s, &w, y).abs());
            assert!((got - want).abs() <= 1e-8 * scale, "u={u} l={l}: {got} vs {want}");
        }
    }
}

#[test]
fn fx_forward_analytic_moments_match_quadrature() {
    for rho in [0.25, -0.3] {
        let inputs = inputs_with("portfolio.cfg", |c| common::set_rho(c, "r_EUR", "fx_USD", rho));
        let models = inputs.models().unwrap();
        let spot = inputs.market.fx_spot("USD").unwrap();
        let f = FxForward::new(100.0, 1.05 * spot, 10.0, "USD").unwrap();
        for u in [0.5, 4.0, 9.9] {
            let t = fva_wwr::instruments::fx_forward_terms(&f, &models, 0.0, u).unwrap();
            let var = hw_terms(&models.domestic, 0.0, u).var_y;
            let m = fx_forward_analytic_moments(&f, &models, 0.0, u, 5, 20).unwrap();
            let v = |y: f64| f.notional * t.approx_value(y);
            let kinks = roots(var, v);
            for (l, &got) in m.iter().enumerate() {
                let want = gauss_expectation(var, &kinks, |y| y.powi(l as i32) * v(y).max(0.0));
                let scale = gauss_expectation(var, &kinks, |y| y.abs().powi(l as i32) * v(y).abs());
                assert!((got - want).abs() <= 1e-8 * scale, "rho={rho} u={u} l={l}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn analytic_swap_moments_agree_with_simulation() {
    let inputs = inputs_with("single_swap.cfg", |c| c.simulation.paths = 20_000);
    let models = inputs.models().unwrap();
    let grid = inputs.grid().unwrap();
    let ex = simulate_exposures(&inputs, &models, &grid).unwrap();
    let bm = base_moments(&ex, 4, Exec::Parallel).unwrap();
    let Trade::Swap(s) = &inputs.portfolio.trades[0] else { panic!() };
    for d in [5, 50, 150, 280] {
        let u = grid.dates()[d];
        let m = swap_analytic_moments(s, &models, 0.0, u, 4, 20).unwrap();
        for l in 0..=4 {
            let (mc, se) = (bm.mean.y_moments[d][l], bm.y_moments_se[d][l]);
            assert!((m[l] - mc).abs() < 4.0 * se, "u={u} l={l}: analytic {} vs MC {mc} +- {se}", m[l]);
        }
    }
}

fn zcb(p: &Hw1fParams, u: f64, t: f64, x: f64) -> f64 {
    (p.a_bar(u, t) - x * p.b(t - u)).exp()
}

#[test]
fn pathwise_valuation_matches_bond_pricing() {
    let text = r#"
[[trade]]
type = "swap"
direction = "payer"
notional = 5000.0
strike = 0.012
start = 2.0
maturity = 12.0
frequency = 2.0
currency = "USD"

[[trade]]
type = "fx_forward"
notional = 1000.0
strike = 1.2
maturity = 7.5
currency = "GBP"
"#;
    let portfolio = parse_portfolio(text).unwrap();
    let inputs = inputs_with("portfolio.cfg", |_| {});
    let models = inputs.models().unwrap();
    let grid = SimGrid::uniform(12.0, 4.0, 2).unwrap();
    let cube = simulate(&models, &grid, 200, 3, CubeMode::Base).unwrap();
    let Trade::Swap(s) = &portfolio.trades[0] else { panic!() };
    let Trade::FxForward(f) = &portfolio.trades[1] else { panic!() };
    let usd = &models.foreign("USD").unwrap().hw;
    let gbp = &models.foreign("GBP").unwrap().hw;
    for path in [0, 17, 199] {
        for (d, &u) in grid.dates().iter().enumerate() {
            let i = cube.idx(path, d);
            let mut want = 0.0;
            let x_usd = hw_terms(usd, 0.0, u).mu + cube.rate("USD").unwrap().y[i];
            let sched = &s.schedule;
            let float = if u <= sched[0] { zcb(usd, u, sched[0], x_usd) } else { 1.0 };
            let fixed: f64 = (1..sched.len())
                .filter(|&k| sched[k] >= u)
                .map(|k| s.strike * (sched[k] - sched[k - 1]) * zcb(usd, u, sched[k], x_usd))
                .sum();
            let v_usd = -s.notional * (zcb(usd, u, s.maturity(), x_usd) + fixed - float);
            want += v_usd * cube.ln_fx("USD").unwrap().ln_fx[i].exp();
            if u <= f.maturity {
                let x_d = hw_terms(&models.domestic, 0.0, u).mu + cube.rate("EUR").unwrap().y[i];
                let x_f = hw_terms(gbp, 0.0, u).mu + cube.rate("GBP").unwrap().y[i];
                let fx = cube.ln_fx("GBP").unwrap().ln_fx[i].exp();
                want += f.notional * (fx * zcb(gbp, u, f.maturity, x_f) - f.strike * zcb(&models.domestic, u, f.maturity, x_d));
            }
            let got = portfolio_value(&portfolio, &models, &cube, path, d).unwrap();
            assert!(rel(got, want) < 1e-11 || (got - want).abs() < 1e-9, "path {path} u={u}: {got} vs {want}");
        }
    }
}
