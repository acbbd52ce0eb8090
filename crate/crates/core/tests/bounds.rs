mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use common::{adaptive_simpson, inputs_with};
use fva_wwr::bounds::{
    c1, c4, explicit_e1_bound, gaussian_distance, run_bounds, swap_cv_bound, truncation_bound, BoundOptions,
    CreditMomentRow, DateBoundInputs, Family,
};
use fva_wwr::exposure::profile_coeffs;
use fva_wwr::instruments::{swap_value_y, swap_weights, Trade};
use fva_wwr::models::hw_terms;

fn degenerate_credit_row() -> CreditMomentRow {
    let unit = |n: usize| (0..n).map(|k| if k == 0 { 1.0 } else { 0.0 }).collect::<Vec<_>>();
    CreditMomentRow {
        date: 1.0,
        big_yi: unit(51),
        big_yc: unit(51),
        big_yi_yi: vec![0.0; 51],
        yi: unit(9),
        cross: (0..5).map(|j| (0..5).map(|k| if j + k == 0 { 1.0 } else { 0.0 }).collect()).collect(),
        q_sum: 0.0,
    }
}

#[test]
fn c1_with_unit_weight_is_the_gaussian_exponential_moment() {
    let row = degenerate_credit_row();
    for &v in &[1e-6, 0.003, 0.2] {
        for m in 1..=4 {
            let want = (0.5 * (m * m) as f64 * v).exp();
            assert!((c1(m, 0, v, &row).unwrap() - want).abs() < 1e-14 * want);
        }
    }
}

#[test]
fn vanishing_credit_moments_give_zero_credit_bounds() {
    let inputs = inputs_with("single_swap.cfg", |_| {});
    let models = inputs.models().unwrap();
    let coeffs = profile_coeffs(&models, &[0.0, 1.0], 5).unwrap();
    let row = degenerate_credit_row();
    let inp = DateBoundInputs { coeffs: &coeffs[1], credit: &row, var_big_yr: 1e-4, c_v: 100.0, disc_epe: 5.0 };
    assert_eq!(c4(0, &row).unwrap(), 0.0);
    assert_eq!(explicit_e1_bound(0, &inp).unwrap(), 0.0);
    for n in 1..=4 {
        assert_eq!(truncation_bound(Family::E1One, n, &inp).unwrap(), 0.0);
    }
    assert!(truncation_bound(Family::E2One, 1, &inp).unwrap() == 0.0);
}

#[test]
fn cv_bound_dominates_the_second_moment() {
    let inputs = inputs_with("single_swap.cfg", |_| {});
    let models = inputs.models().unwrap();
    let Trade::Swap(s) = &inputs.portfolio.trades[0] else { panic!() };
    for i in 1..=300 {
        let u = i as f64 / 10.0;
        let var = hw_terms(&models.domestic, 0.0, u).var_y;
        let w = swap_weights(s, &models.domestic, 0.0, u).unwrap();
        let sd = var.sqrt();
        let f = |z: f64| {
            let v = swap_value_y(s, &w, sd * z);
            v * v * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
        };
        let second = adaptive_simpson(&f, -14.0, 14.0, 1e-13);
        let cv = swap_cv_bound(s, &models, 0.0, u).unwrap();
        assert!(cv >= second * (1.0 - 1e-10), "u={u}: C_V {cv} < E[V^2] {second}");
        if w.wbar.len() == 1 {
            // one cashflow left: the bound is attained
            assert!((cv - second).abs() <= 1e-8 * second, "u={u}: {cv} vs {second}");
        }
    }
}

#[test]
fn gaussian_distance_separates_wrong_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let xs: Vec<f64> = (0..20_000).map(|_| 0.1 * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
    let good = gaussian_distance(&xs, 0.01).unwrap();
    let bad = gaussian_distance(&xs, 0.04).unwrap();
    assert!(good.wasserstein < 0.003 && good.cvm < 0.5, "{good:?}");
    assert!(bad.wasserstein > 5.0 * good.wasserstein && bad.cvm > 10.0 * good.cvm, "{bad:?}");
    assert!(gaussian_distance(&xs[..999], 0.01).is_err());
    assert!(gaussian_distance(&xs, 0.0).is_err());
}

#[test]
fn computed_bounds_dominate_measured_errors() {
    let inputs = inputs_with("single_swap.cfg", |c| {
        c.simulation.paths = 5_000;
        c.grid.dates_per_year = 2.0;
        c.grid.substeps = 20;
    });
    let grid = inputs.grid().unwrap();
    let opts = BoundOptions::defaults(&grid, 5_000);
    let rep = run_bounds(&inputs, &opts).unwrap();
    assert_eq!(rep.cv_source, "analytic");
    assert_eq!(rep.find("cv", None).len(), grid.len() - 1);
    assert_eq!(rep.rows.iter().filter(|r| r.family.starts_with("gauss_")).count(), 2 * opts.distance_dates.len());
    let mut checked = 0;
    for r in &rep.rows {
        let Some(m) = r.measured_error else { continue };
        if r.family == "cv" {
            assert!(m <= r.bound + 3.0 * r.measured_se.unwrap() + 1e-12 * r.bound, "{r:?}");
        } else {
            assert!(r.bound.is_finite());
            assert!(m <= r.bound, "{r:?}");
        }
        checked += 1;
    }
    assert!(checked > 1000);
    let dir = tempfile::tempdir().unwrap();
    rep.write_csv(dir.path().join("bounds.csv")).unwrap();
}
