mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use common::inputs_with;
use fva_wwr::mc::{simulate, CubeMode, SimGrid};
use fva_wwr::models::{cir_terms, hw_terms, CirppParams};

struct Stats {
    mean: f64,
    var: f64,
    se_mean: f64,
    se_var: f64,
}

fn stats(xs: &[f64]) -> Stats {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    Stats { mean, var: m2, se_mean: (m2 / n).sqrt(), se_var: ((m4 - m2 * m2) / n).sqrt() }
}

/// Exact CIR transition: scaled noncentral chi-square as a Poisson mixture of gammas.
fn cir_exact(p: &CirppParams, tau: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = (-p.a * tau).exp();
    let c = p.sigma * p.sigma * (1.0 - e) / (4.0 * p.a);
    let dof = 4.0 * p.a * p.theta / (p.sigma * p.sigma);
    let nc = p.x0 * e / c;
    let pois = Poisson::new(0.5 * nc).unwrap();
    (0..n)
        .map(|_| {
            let k: f64 = pois.sample(&mut rng);
            let g = Gamma::new(0.5 * dof + k, 2.0).unwrap();
            c * g.sample(&mut rng)
        })
        .collect()
}

#[test]
fn cir_state_moments_match_exact_transition() {
    for name in ["single_swap.cfg", "portfolio.cfg"] {
        let models = inputs_with(name, |_| {}).models().unwrap();
        for p in [&models.institution, &models.counterparty] {
            for (i, &u) in [0.5, 2.0, 10.0, 30.0].iter().enumerate() {
                let s = stats(&cir_exact(p, u, 200_000, 11 + i as u64));
                let t = cir_terms(p, 0.0, u, p.x0);
                assert!((s.mean - t.mu).abs() < 4.0 * s.se_mean, "{name} {} u={u}: mean {} vs {}", p.label, s.mean, t.mu);
                assert!((s.var - t.var_y).abs() < 4.0 * s.se_var, "{name} {} u={u}: var {} vs {}", p.label, s.var, t.var_y);
            }
        }
    }
}

#[test]
fn simulated_credit_integrals_match_closed_form_variance() {
    let inputs = inputs_with("single_swap.cfg", |_| {});
    let models = inputs.models().unwrap();
    let grid = SimGrid::uniform(10.0, 10.0, 4).unwrap();
    let cube = simulate(&models, &grid, 20_000, 99, CubeMode::Full).unwrap();
    let cr = cube.credit().unwrap();
    for d in [10, 50, 100] {
        let u = grid.dates()[d];
        for (p, slab) in [(&models.institution, &cr.big_y_i), (&models.counterparty, &cr.big_y_c)] {
            let xs: Vec<f64> = (0..cube.n_paths).map(|k| slab[cube.idx(k, d)]).collect();
            let s = stats(&xs);
            let t = cir_terms(p, 0.0, u, p.x0);
            // Euler bias is far below 4 SE at this step size
            assert!(s.mean.abs() < 4.0 * s.se_mean, "{} u={u}: E[Y] = {}", p.label, s.mean);
            assert!((s.var - t.var_big_y).abs() < 4.0 * s.se_var, "{} u={u}: {} vs {}", p.label, s.var, t.var_big_y);
        }
        let yi: Vec<f64> = (0..cube.n_paths).map(|k| cr.y_i[cube.idx(k, d)]).collect();
        let s = stats(&yi);
        let t = cir_terms(&models.institution, 0.0, u, models.institution.x0);
        assert!((s.var - t.var_y).abs() < 4.0 * s.se_var);
    }
}

#[test]
fn rate_and_fx_drivers_match_closed_form() {
    let inputs = inputs_with("portfolio.cfg", |_| {});
    let models = inputs.models().unwrap();
    let grid = SimGrid::uniform(30.0, 2.0, 2).unwrap();
    let cube = simulate(&models, &grid, 20_000, 5, CubeMode::Base).unwrap();
    for d in [4, 20, 60] {
        let u = grid.dates()[d];
        let col = |v: &[f64]| -> Vec<f64> { (0..cube.n_paths).map(|k| v[cube.idx(k, d)]).collect() };
        let r = cube.rate("EUR").unwrap();
        let t = hw_terms(&models.domestic, 0.0, u);
        let (sy, sbig) = (stats(&col(&r.y)), stats(&col(&r.big_y)));
        assert!(sy.mean.abs() < 4.0 * sy.se_mean && (sy.var - t.var_y).abs() < 4.0 * sy.se_var, "y_r u={u}");
        assert!(sbig.mean.abs() < 4.0 * sbig.se_mean && (sbig.var - t.var_big_y).abs() < 4.0 * sbig.se_var, "Y_r u={u}");
        for ccy in ["USD", "GBP"] {
            let f = models.fx_terms(ccy, 0.0, u).unwrap();
            let s = stats(&col(&cube.ln_fx(ccy).unwrap().ln_fx));
            assert!((s.mean - f.mu_fx).abs() < 4.0 * s.se_mean, "{ccy} u={u}: mean {} vs {}", s.mean, f.mu_fx);
            assert!((s.var - f.var_lnfx).abs() < 4.0 * s.se_var, "{ccy} u={u}: var {} vs {}", s.var, f.var_lnfx);
        }
    }
}

#[test]
fn model_curves_reprice_market() {
    let inputs = inputs_with("portfolio.cfg", |_| {});
    let models = inputs.models().unwrap();
    for t in [0.5, 1.0, 3.7, 10.0, 29.0] {
        let dom = inputs.market.domestic_curve.discount(t).unwrap();
        assert!((models.domestic.model_zcb(t) - dom).abs() < 1e-13);
        for p in [&models.institution, &models.counterparty] {
            assert!((p.model_survival(t) - p.curve.discount(t).unwrap()).abs() < 1e-13);
        }
    }
}

#[test]
fn feller_violation_is_an_error() {
    let inputs = inputs_with("single_swap.cfg", |c| c.counterparty.sigma = 0.2);
    let err = inputs.models().unwrap_err().to_string();
    assert!(err.contains("Feller"), "{err}");
}
