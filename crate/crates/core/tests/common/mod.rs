#![allow(dead_code)]

use std::path::PathBuf;

use fva_wwr::fva::{CorrEntry, RunConfig, RunInputs};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn config(name: &str) -> RunConfig {
    RunConfig::load(fixture(name)).expect("fixture config loads")
}

pub fn inputs_with(name: &str, tweak: impl FnOnce(&mut RunConfig)) -> RunInputs {
    let mut cfg = config(name);
    tweak(&mut cfg);
    RunInputs::load(cfg).expect("fixture inputs load")
}

pub fn set_rho(cfg: &mut RunConfig, a: &str, b: &str, rho: f64) {
    cfg.correlation.retain(|c| !((c.a == a && c.b == b) || (c.a == b && c.b == a)));
    if rho != 0.0 {
        cfg.correlation.push(CorrEntry { a: a.into(), b: b.into(), rho });
    }
}

pub fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Adaptive Simpson on `[a, b]`; `rel_tol` is relative to a coarse estimate of `int |f|`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            left + right + diff / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let n = 512;
    let h = (b - a) / n as f64;
    let scale = (0..=n).map(|i| f(a + i as f64 * h).abs()).sum::<f64>() * h;
    if scale == 0.0 {
        return 0.0;
    }
    // start from panels so narrow features are not skipped by the first coarse estimate
    let panels = 64;
    let w = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let (lo, hi) = (a + k as f64 * w, a + (k + 1) as f64 * w);
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            rec(f, lo, hi, fa, fm, fb, simpson(fa, fm, fb, lo, hi), rel_tol * scale / panels as f64, 40)
        })
        .sum()
}
