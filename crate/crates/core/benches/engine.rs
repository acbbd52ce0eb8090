use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fva_wwr::exposure::{base_moments, PathExposures};
use fva_wwr::fva::{RunConfig, RunInputs};
use fva_wwr::instruments::ValuationPlan;
use fva_wwr::mc::{simulate_paths, CubeMode};
use fva_wwr::par::Exec;

fn inputs() -> RunInputs {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/portfolio.cfg");
    RunInputs::load(RunConfig::load(path).expect("config")).expect("inputs")
}

fn engine(c: &mut Criterion) {
    let inputs = inputs();
    let models = inputs.models().unwrap();
    let grid = inputs.grid().unwrap();
    let plan = ValuationPlan::new(&inputs.portfolio, &models, grid.dates()).unwrap();
    let n = 2_000;

    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    for (name, exec) in [("parallel", Exec::Parallel), ("sequential", Exec::Sequential)] {
        for mode in [CubeMode::Base, CubeMode::Full] {
            g.bench_with_input(BenchmarkId::new(name, format!("{mode:?}")), &mode, |b, &mode| {
                b.iter(|| simulate_paths(&models, &grid, 0..n, 1, mode, exec).unwrap())
            });
        }
    }
    g.finish();

    let cube = simulate_paths(&models, &grid, 0..n, 1, CubeMode::Base, Exec::Parallel).unwrap();
    let ex = PathExposures::from_cube(&cube, &plan).unwrap();
    let mut g = c.benchmark_group("base_moments");
    for (name, exec) in [("parallel", Exec::Parallel), ("sequential", Exec::Sequential)] {
        g.bench_function(name, |b| b.iter(|| base_moments(&ex, 7, exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, engine);
criterion_main!(benches);
