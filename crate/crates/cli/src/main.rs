use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fva_wwr::bounds::{run_bounds, BoundOptions};
use fva_wwr::exposure::Method;
use fva_wwr::fva::{run_inputs, RunConfig, RunInputs};
use fva_wwr::mc::{simulate_paths, CubeMode};
use fva_wwr::sensitivities::{cross_gamma, fd_sensitivity, write_cross_gamma_csv, write_sensitivity_csv, BumpSpec};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// FVA with wrong-way risk: Monte Carlo benchmark and Gaussian approximation.
#[derive(Debug, Parser)]
#[command(name = "fva-wwr", version = fva_wwr::fva::VERSION)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute FVA and its WWR part; writes fva_report.json and profile.csv.
    Fva(Common),
    /// Finite-difference sensitivities; writes sensi.csv (and cross_gamma.csv).
    Sensi {
        #[command(flatten)]
        common: Common,
        /// Bump as kind[:key...][:size][@central|@forward], e.g. ir_parallel:1e-4.
        #[arg(long = "bump")]
        bumps: Vec<String>,
        /// Two bumps for a mixed second difference.
        #[arg(long, num_args = 2, value_names = ["BUMP_A", "BUMP_B"])]
        cross: Option<Vec<String>>,
    },
    /// Error bounds and Gaussianity diagnostics; writes bounds.csv.
    Bounds {
        #[command(flatten)]
        common: Common,
        /// Paths of the credit-only moment calibration (defaults to --paths).
        #[arg(long)]
        calibration_paths: Option<usize>,
        /// Skip the direct error measurement on the full simulation.
        #[arg(long)]
        no_measure: bool,
    },
    /// Write only the exposure profile CSV.
    ExportProfile(Common),
    /// Simulate the full scenario cube and write it in binary form (cube.bin).
    ExportCube(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// mc, approx_generic or approx_analytic.
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    dates_per_year: Option<f64>,
    /// Rate Taylor truncation order.
    #[arg(long)]
    n_r: Option<usize>,
    /// Swap weight Taylor truncation order (analytic method).
    #[arg(long)]
    n_a: Option<usize>,
    /// Output directory (default: the config's `output`, else ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also run the full-simulation benchmark.
    #[arg(long)]
    benchmark: bool,
}

impl Common {
    fn load(&self) -> Result<(RunInputs, PathBuf)> {
        let mut cfg = RunConfig::load(&self.config).context("loading run configuration")?;
        if let Some(m) = self.method {
            cfg.approximation.method = m;
        }
        if let Some(s) = self.seed {
            cfg.simulation.seed = s;
        }
        if let Some(p) = self.paths {
            cfg.simulation.paths = p;
        }
        if let Some(d) = self.dates_per_year {
            cfg.grid.dates_per_year = d;
        }
        if let Some(n) = self.n_r {
            cfg.approximation.n_r = n;
        }
        if let Some(n) = self.n_a {
            cfg.approximation.n_a = n;
        }
        cfg.approximation.benchmark |= self.benchmark;
        cfg.validate()?;
        let out = self.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        Ok((RunInputs::load(cfg)?, out))
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fva(common) => {
            let (inputs, out) = common.load()?;
            let run = run_inputs(&inputs)?;
            let r = &run.report;
            write(&out.join("fva_report.json"), &r.to_json()?)?;
            r.profile.write_csv(out.join("profile.csv"))?;
            if let Some(p) = &run.mc_profile {
                if r.method != Method::Mc {
                    p.write_csv(out.join("profile_mc.csv"))?;
                }
            }
            println!(
                "fva_total={:.6} fva_indep={:.6} fva_wwr={:.6} wwr_pct={:.4}{}",
                r.fva_total,
                r.fva_indep,
                r.fva_wwr,
                r.wwr_pct,
                r.wwr_rd_vs_mc.map(|x| format!(" wwr_rd_vs_mc={x:.4}")).unwrap_or_default()
            );
        }
        Command::ExportProfile(common) => {
            let (inputs, out) = common.load()?;
            let run = run_inputs(&inputs)?;
            run.report.profile.write_csv(out.join("profile.csv"))?;
            println!("{}", out.join("profile.csv").display());
        }
        Command::Sensi { common, bumps, cross } => {
            let (inputs, out) = common.load()?;
            if bumps.is_empty() && cross.is_none() {
                bail!("sensi needs at least one --bump or a --cross pair");
            }
            let mut rows = Vec::new();
            for b in &bumps {
                let spec: BumpSpec = b.parse()?;
                rows.extend(fd_sensitivity(&inputs, &spec).with_context(|| format!("bump {b}"))?);
            }
            if !rows.is_empty() {
                write_sensitivity_csv(out.join("sensi.csv"), &rows)?;
                println!("{}", out.join("sensi.csv").display());
            }
            if let Some(pair) = cross {
                let (a, b): (BumpSpec, BumpSpec) = (pair[0].parse()?, pair[1].parse()?);
                let rows = cross_gamma(&inputs, &a, &b).with_context(|| format!("cross {} {}", pair[0], pair[1]))?;
                write_cross_gamma_csv(out.join("cross_gamma.csv"), &rows)?;
                println!("{}", out.join("cross_gamma.csv").display());
            }
        }
        Command::Bounds { common, calibration_paths, no_measure } => {
            let (inputs, out) = common.load()?;
            let grid = inputs.grid()?;
            let mut opts = BoundOptions::defaults(&grid, inputs.cfg.simulation.paths);
            if let Some(p) = calibration_paths {
                opts.calibration_paths = p;
            }
            opts.measure = !no_measure;
            let report = run_bounds(&inputs, &opts)?;
            report.write_csv(out.join("bounds.csv"))?;
            println!("{} (c_v: {})", out.join("bounds.csv").display(), report.cv_source);
        }
        Command::ExportCube(common) => {
            let (inputs, out) = common.load()?;
            let models = inputs.models()?;
            let grid = inputs.grid()?;
            let sim = &inputs.cfg.simulation;
            let cube = simulate_paths(&models, &grid, 0..sim.paths, sim.seed, CubeMode::Full, sim.exec)?;
            cube.write_binary(out.join("cube.bin"))?;
            println!("{}", out.join("cube.bin").display());
        }
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
