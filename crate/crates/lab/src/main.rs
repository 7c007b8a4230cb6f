use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use msle_core::conformal::{DrivingFunction, RectMap};
use msle_core::lattice::Mass;
use msle_core::sim::drift_profile;

use msle_lab::compare::run_compare;
use msle_lab::config::{default_config, ExperimentConfig};
use msle_lab::{checks, io, runs};

#[derive(Parser)]
#[command(
    name = "msle-lab",
    about = "Sampling, driving extraction, forward simulation and validation for loop-erased walks with killing"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML or JSON experiment config; a stock square-family config is used
    /// when absent
    #[arg(long)]
    config: Option<PathBuf>,
    /// master seed override
    #[arg(long)]
    seed: Option<u64>,
    /// output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the validation battery; nonzero exit on any failed check
    Validate {
        #[command(flatten)]
        common: Common,
        /// negative control: inject a deliberate error (the battery must fail)
        #[arg(long, hide = true)]
        corrupt: bool,
    },
    /// Sample loop-erased conditioned walks and write curve batches
    Sample {
        #[command(flatten)]
        common: Common,
    },
    /// Extract Loewner drivings from sampled curves
    Drive {
        #[command(flatten)]
        common: Common,
        /// replace samples by a straight synthetic curve (driving must vanish)
        #[arg(long)]
        straight_test: bool,
        /// also evaluate the drift functional along the first N extracted
        /// drivings and write a reports file
        #[arg(long)]
        profile: Option<usize>,
    },
    /// Forward-simulate the driving SDE and write marginals plus drift reports
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Compare discrete and simulated driving laws
    Compare {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<(ExperimentConfig, u64)> {
    let cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => default_config(),
    };
    let seed = common.seed.unwrap_or(cfg.experiment.seed);
    Ok((cfg, seed))
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Validate { common, corrupt } => {
            let (_, seed) = load(&common)?;
            let results = checks::run_all(seed, corrupt)?;
            let mut all_ok = true;
            for r in &results {
                println!(
                    "{} {:<26} {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail
                );
                all_ok &= r.passed;
            }
            let json = serde_json::json!({
                "seed": seed,
                "checks": results.iter().map(|r| serde_json::json!({
                    "name": r.name, "passed": r.passed, "detail": r.detail,
                })).collect::<Vec<_>>(),
            });
            io::write_json(&common.out.join("validate.json"), &json)?;
            Ok(if all_ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }

        Cmd::Sample { common } => {
            let (cfg, seed) = load(&common)?;
            let hash = cfg.hash();
            for (di, &mesh) in cfg.experiment.mesh_sizes.iter().enumerate() {
                let dom = cfg.domain_at(mesh)?;
                for (mi, &mass) in cfg.experiment.masses.iter().enumerate() {
                    let curves = runs::sample_curves(
                        &dom,
                        Mass(mass),
                        cfg.experiment.samples,
                        seed,
                        (di as u64 * 10 + mi as u64) * 1_000_000,
                    )?;
                    let densities = if cfg.experiment.densities && mass > 0.0 {
                        Some(runs::density_batch(&dom, Mass(mass), &curves)?)
                    } else {
                        None
                    };
                    let n = (1.0 / mesh).round() as usize;
                    let path = common.out.join(format!("curves_n{n}_m{mi}.jsonl"));
                    io::write_curves_jsonl(
                        &path,
                        &hash,
                        seed,
                        mass,
                        mesh,
                        &curves,
                        densities.as_deref(),
                    )?;
                    println!(
                        "wrote {} ({} curves, mass {mass})",
                        path.display(),
                        curves.len()
                    );
                }
            }
            Ok(ExitCode::SUCCESS)
        }

        Cmd::Drive {
            common,
            straight_test,
            profile,
        } => {
            let (cfg, seed) = load(&common)?;
            let hash = cfg.hash();
            let head = io::header("drive", &hash, seed);
            for (di, &mesh) in cfg.experiment.mesh_sizes.iter().enumerate() {
                let dom = cfg.domain_at(mesh)?;
                let n_lat = (1.0 / mesh).round() as usize;
                for (mi, &mass) in cfg.experiment.masses.iter().enumerate() {
                    let drivings = if straight_test {
                        let map = RectMap::for_domain(&dom)?;
                        let b_in = dom.b_edge().inner;
                        let a_in = dom.a_edge().inner;
                        let straight: Vec<_> = (a_in.1..=b_in.1)
                            .map(|j| (a_in.0, j))
                            .collect();
                        let curve = msle_core::lattice::LatticeCurve::new(straight)?;
                        vec![runs::curve_driving(&dom, &map, &curve, f64::INFINITY)?]
                    } else {
                        runs::batch_drivings(
                            &dom,
                            Mass(mass),
                            cfg.experiment.samples,
                            seed,
                            (di as u64 * 10 + mi as u64) * 1_000_000,
                            cfg.experiment.stop_radius,
                            cfg.experiment.t_grid.iter().cloned().fold(0.0, f64::max) * 1.02,
                        )?
                    };
                    let path = common.out.join(format!("drivings_n{n_lat}_m{mi}.csv"));
                    io::write_drivings_csv(&path, &head, &drivings)?;
                    let ms = runs::marginals(&drivings, &cfg.experiment.t_grid);
                    let rows: Vec<Vec<Option<f64>>> = drivings
                        .iter()
                        .map(|d| cfg.experiment.t_grid.iter().map(|&t| d.value_at(t)).collect())
                        .collect();
                    let mpath = common.out.join(format!("marginals_n{n_lat}_m{mi}.csv"));
                    io::write_marginals_csv(&mpath, &head, &cfg.experiment.t_grid, &rows)?;
                    println!(
                        "wrote {} and {} ({} records, short counts {:?})",
                        path.display(),
                        mpath.display(),
                        drivings.len(),
                        ms.short
                    );
                    if let Some(count) = profile {
                        // drift functional evaluated along the extracted drivings
                        let map = RectMap::for_domain(&dom)?;
                        let mut profs = Vec::new();
                        for (i, df) in drivings.iter().take(count).enumerate() {
                            let reports = drift_profile(
                                &map,
                                cfg.sim.mesh_n,
                                mass,
                                df,
                                cfg.sim.cadence,
                                cfg.sim.drift_tol,
                            )?;
                            profs.push((i, reports));
                        }
                        let borrowed: Vec<(usize, &[msle_core::drift::DriftReport])> =
                            profs.iter().map(|(i, r)| (*i, r.as_slice())).collect();
                        let ppath =
                            common.out.join(format!("drift_profile_n{n_lat}_m{mi}.csv"));
                        io::write_reports_csv(&ppath, &head, &borrowed)?;
                        println!("wrote {}", ppath.display());
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }

        Cmd::Simulate { common } => {
            let (cfg, seed) = load(&common)?;
            let hash = cfg.hash();
            let head = io::header("simulate", &hash, seed);
            let finest = cfg
                .experiment
                .mesh_sizes
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            let dom = cfg.domain_at(finest)?;
            let map = RectMap::for_domain(&dom)?;
            for (mi, &mass) in cfg.experiment.masses.iter().enumerate() {
                let base = msle_core::sim::SimConfig {
                    mass,
                    dt: cfg.sim.dt,
                    horizon: cfg.sim.horizon,
                    stop_radius: Some(cfg.experiment.stop_radius),
                    mesh_n: cfg.sim.mesh_n,
                    cadence: cfg.sim.cadence,
                    master_seed: seed,
                    stream: 0,
                    drift_tol: cfg.sim.drift_tol,
                };
                let outs = runs::simulate_batch(&base, &map, cfg.sim.samples, 90_000_000)?;
                let drivings: Vec<DrivingFunction> =
                    outs.iter().map(|o| o.driving.clone()).collect();
                let dpath = common.out.join(format!("sim_drivings_m{mi}.csv"));
                io::write_drivings_csv(&dpath, &head, &drivings)?;
                let rows: Vec<Vec<Option<f64>>> = drivings
                    .iter()
                    .map(|d| cfg.experiment.t_grid.iter().map(|&t| d.value_at(t)).collect())
                    .collect();
                io::write_marginals_csv(
                    &common.out.join(format!("sim_marginals_m{mi}.csv")),
                    &head,
                    &cfg.experiment.t_grid,
                    &rows,
                )?;
                let reports: Vec<(usize, &[msle_core::drift::DriftReport])> = outs
                    .iter()
                    .enumerate()
                    .map(|(i, o)| (i, o.reports.as_slice()))
                    .collect();
                io::write_reports_csv(
                    &common.out.join(format!("sim_reports_m{mi}.csv")),
                    &head,
                    &reports,
                )?;
                println!("simulated {} trajectories at mass {mass}", outs.len());
            }
            Ok(ExitCode::SUCCESS)
        }

        Cmd::Compare { common } => {
            let (cfg, seed) = load(&common)?;
            let report = run_compare(&cfg, seed)?;
            for l in &report.lines {
                println!(
                    "{} {:<34} {}",
                    if l.passed { "PASS" } else { "FAIL" },
                    l.name,
                    l.detail
                );
            }
            io::write_json(
                &common.out.join("compare.json"),
                &serde_json::to_value(&report)?,
            )?;
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}
