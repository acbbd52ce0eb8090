mod common;

use common::inputs_with;
use fva_wwr::exposure::Method;
use fva_wwr::fva::RunInputs;
use fva_wwr::sensitivities::{apply_bump, cross_gamma, fd_sensitivity, BumpSpec, BumpTarget, Entity, Scheme};

fn single(paths: usize, method: Method) -> RunInputs {
    inputs_with("single_swap.cfg", |c| {
        c.simulation.paths = paths;
        c.grid.dates_per_year = 4.0;
        c.approximation.method = method;
    })
}

#[test]
fn unused_fx_vol_has_zero_sensitivity() {
    // EUR-only portfolio in the three-currency model
    let inputs = inputs_with("portfolio.cfg", |c| {
        c.portfolio = common::fixture("single_swap_trades.toml");
        c.simulation.paths = 2_000;
        c.grid.dates_per_year = 4.0;
        c.approximation.method = Method::ApproxGeneric;
        c.approximation.benchmark = true;
    });
    let bump: BumpSpec = "sigma_fx:USD".parse().unwrap();
    for row in fd_sensitivity(&inputs, &bump).unwrap() {
        assert_eq!(row.d_fva_indep, 0.0, "{row:?}");
        assert_eq!(row.d_fva_wwr, 0.0, "{row:?}");
    }
}

#[test]
fn receiver_swap_rates_delta_signs() {
    let inputs = single(5_000, Method::ApproxAnalytic);
    let rows = fd_sensitivity(&inputs, &"ir_parallel".parse().unwrap()).unwrap();
    // higher rates push the receiver swap out of the money
    assert!(rows[0].d_fva_indep < 0.0, "{:?}", rows[0]);
    let rows = fd_sensitivity(&inputs, &"credit_parallel:I".parse().unwrap()).unwrap();
    // a wider institution spread raises the funding cost
    assert!(rows[0].d_fva_indep > 0.0, "{:?}", rows[0]);
}

#[test]
fn forward_and_central_differences_agree() {
    let inputs = single(5_000, Method::ApproxAnalytic);
    let c = fd_sensitivity(&inputs, &"credit_parallel:C:1e-4".parse().unwrap()).unwrap();
    let f = fd_sensitivity(&inputs, &"credit_parallel:C:1e-4@forward".parse().unwrap()).unwrap();
    assert_eq!(f[0].scheme, Scheme::Forward);
    let (a, b) = (c[0].d_fva_total, f[0].d_fva_total);
    assert!((a - b).abs() < 1e-2 * a.abs(), "{a} vs {b}");
}

#[test]
fn cross_gamma_is_symmetric() {
    let inputs = single(2_000, Method::ApproxAnalytic);
    let a = BumpSpec::new(BumpTarget::IrParallel(None), 1e-3);
    let b = BumpSpec::new(BumpTarget::CreditParallel(Entity::I), 1e-3);
    let ab = cross_gamma(&inputs, &a, &b).unwrap().remove(0);
    let ba = cross_gamma(&inputs, &b, &a).unwrap().remove(0);
    assert!((ab.cross_total - ba.cross_total).abs() <= 1e-9 * ab.cross_total.abs().max(1.0));
    assert_eq!(ab.target_a, "ir_parallel");
    assert_eq!(ba.target_a, "credit_parallel:I");
}

#[test]
fn bumps_change_only_their_target() {
    let inputs = single(1_000, Method::ApproxAnalytic);
    let b = apply_bump(&inputs, &BumpTarget::SigmaLambda(Entity::C), 0.01).unwrap();
    assert!((b.cfg.counterparty.sigma - inputs.cfg.counterparty.sigma - 0.01).abs() < 1e-15);
    assert_eq!(b.cfg.institution, inputs.cfg.institution);
    assert_eq!(b.market, inputs.market);
    let b = apply_bump(&inputs, &BumpTarget::Correlation("r_EUR".into(), "lambda_I".into()), 0.05).unwrap();
    assert!((b.models().unwrap().rho("r_EUR", "lambda_I").unwrap() + 0.3).abs() < 1e-12);
    let b = apply_bump(&inputs, &BumpTarget::IrPillar("EUR".into(), 2), 1e-4).unwrap();
    let z = |r: &RunInputs| r.market.domestic_curve.pillars().map(|p| p.1).collect::<Vec<_>>();
    let (before, after) = (z(&inputs), z(&b));
    for (i, (x, y)) in before.iter().zip(&after).enumerate() {
        let expected = if i == 2 { x + 1e-4 } else { *x };
        assert!((y - expected).abs() < 1e-15);
    }
}

#[test]
fn invalid_bumps_are_errors() {
    let inputs = single(1_000, Method::ApproxAnalytic);
    // pushes the counterparty intensity past the Feller boundary
    assert!(apply_bump(&inputs, &BumpTarget::SigmaLambda(Entity::C), 0.2).is_err());
    assert!(apply_bump(&inputs, &BumpTarget::FxSpot("JPY".into()), 0.01).is_err());
    assert!(apply_bump(&inputs, &BumpTarget::Correlation("r_EUR".into(), "lambda_C".into()), -0.6).is_err());
    assert!("sigma_fx".parse::<BumpSpec>().is_err());
    assert!("credit_parallel:X".parse::<BumpSpec>().is_err());
    assert!("ir_parallel@sideways".parse::<BumpSpec>().is_err());
}
