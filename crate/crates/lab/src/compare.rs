//! Statistical comparison between discrete curve laws and the forward
//! simulation: marginal KS tests on a pre-registered capacity grid, mean
//! drift against the integrated drift functional, and the mesh-size trend.

use anyhow::{bail, Result};

use msle_core::conformal::RectMap;
use msle_core::lattice::Mass;
use msle_core::sim::{SimConfig, SimOutput};

use crate::config::ExperimentConfig;
use crate::runs;
use crate::stats;

const KS_PASS_P: f64 = 0.01;

#[derive(Debug, Clone, serde::Serialize)]
pub struct TestLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct CompareReport {
    pub lines: Vec<TestLine>,
}

impl CompareReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.passed)
    }

    fn push(&mut self, name: String, passed: bool, detail: String) {
        self.lines.push(TestLine {
            name,
            passed,
            detail,
        });
    }
}

/// Marginals of the driving of classical loop-erased walks against the
/// centered Gaussian of variance `2t`.
pub fn gaussian_limit(
    cfg: &ExperimentConfig,
    mesh: f64,
    n: usize,
    seed: u64,
    report: &mut CompareReport,
) -> Result<()> {
    let dom = cfg.domain_at(mesh)?;
    let horizon = cfg.experiment.t_grid.iter().cloned().fold(0.0, f64::max) * 1.02;
    let drivings = runs::batch_drivings(
        &dom,
        Mass::ZERO,
        n,
        seed,
        0,
        cfg.experiment.stop_radius,
        horizon,
    )?;
    let ms = runs::marginals(&drivings, &cfg.experiment.t_grid);
    for (k, &t) in ms.t_grid.iter().enumerate() {
        let xs = &ms.values[k];
        if xs.len() < n * 95 / 100 {
            report.push(
                format!("gaussian-limit coverage t={t}"),
                false,
                format!("only {} of {n} records reach t", xs.len()),
            );
            continue;
        }
        let sd = (2.0 * t).sqrt();
        let ks = stats::ks_one_sample(xs, |x| stats::normal_cdf(x, 0.0, sd));
        let var = stats::variance(xs);
        let var_ok = (var - 2.0 * t).abs() <= 0.1 * 2.0 * t;
        report.push(
            format!("gaussian-limit KS t={t}"),
            ks.p_value >= KS_PASS_P,
            format!(
                "p = {:.4}, D = {:.4}, n = {} ({} stopped early)",
                ks.p_value,
                ks.statistic,
                xs.len(),
                ms.short[k]
            ),
        );
        report.push(
            format!("gaussian-limit variance t={t}"),
            var_ok,
            format!("Var = {var:.4} vs 2t = {:.4}", 2.0 * t),
        );
    }
    Ok(())
}

/// Integrated drift along simulated trajectories: `E[int_0^t lambda ds]`
/// per grid time, from the per-stream drift reports.
fn mean_integrated_drift(outs: &[SimOutput], cadence_dt: f64, t: f64) -> f64 {
    let mut acc = 0.0;
    for o in outs {
        let mut integral = 0.0;
        for r in &o.reports {
            if r.t >= t {
                break;
            }
            let window = cadence_dt.min(t - r.t);
            integral += r.lambda * window;
        }
        acc += integral;
    }
    acc / outs.len() as f64
}

pub struct SimSide {
    pub outs: Vec<SimOutput>,
    pub marginals: runs::Marginals,
    pub cadence_dt: f64,
}

pub fn run_simulation_side(
    cfg: &ExperimentConfig,
    map: &RectMap,
    mass: f64,
    seed: u64,
    t_grid: &[f64],
) -> Result<SimSide> {
    let base = SimConfig {
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
    let outs = runs::simulate_batch(&base, map, cfg.sim.samples, 90_000_000)?;
    let drivings: Vec<_> = outs.iter().map(|o| o.driving.clone()).collect();
    let marginals = runs::marginals(&drivings, t_grid);
    Ok(SimSide {
        outs,
        marginals,
        cadence_dt: cfg.sim.dt * cfg.sim.cadence as f64,
    })
}

/// Full comparison for one killing rate: discrete marginals per mesh size
/// against the simulated law, mean-drift agreement and the mesh trend.
pub fn compare_mass(
    cfg: &ExperimentConfig,
    mass: f64,
    seed: u64,
    report: &mut CompareReport,
) -> Result<()> {
    let t_grid: Vec<f64> = cfg
        .experiment
        .t_grid
        .iter()
        .copied()
        .filter(|&t| t <= cfg.sim.horizon + 1e-12)
        .collect();
    if t_grid.is_empty() {
        bail!("no grid times below the simulation horizon");
    }
    let finest = cfg
        .experiment
        .mesh_sizes
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let dom_fine = cfg.domain_at(finest)?;
    let map = RectMap::for_domain(&dom_fine)?;
    let sim = run_simulation_side(cfg, &map, mass, seed, &t_grid)?;

    // discrete side per mesh size, coarse to fine
    let mut meshes: Vec<f64> = cfg.experiment.mesh_sizes.clone();
    meshes.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut trend: Vec<(f64, f64, f64)> = Vec::new(); // (mesh, |mean gap| at t*, pooled se)
    let t_star = *t_grid.last().unwrap();

    for (mi, &mesh) in meshes.iter().enumerate() {
        let dom = cfg.domain_at(mesh)?;
        let drivings = runs::batch_drivings(
            &dom,
            Mass(mass),
            cfg.experiment.samples,
            seed,
            (mi as u64 + 1) * 10_000_000,
            cfg.experiment.stop_radius,
            t_star * 1.02,
        )?;
        let ms = runs::marginals(&drivings, &t_grid);
        let is_finest = (mesh - finest).abs() < 1e-15;

        for (k, &t) in t_grid.iter().enumerate() {
            let xs = &ms.values[k];
            let ys = &sim.marginals.values[k];
            if xs.len() < 500 || ys.len() < 500 {
                report.push(
                    format!("compare m={mass} mesh={mesh} t={t}"),
                    false,
                    format!("insufficient samples ({} vs {})", xs.len(), ys.len()),
                );
                continue;
            }
            let gap = (stats::mean(xs) - stats::mean(ys)).abs();
            let se = (stats::variance(xs) / xs.len() as f64
                + stats::variance(ys) / ys.len() as f64)
                .sqrt();
            if (t - t_star).abs() < 1e-12 {
                trend.push((mesh, gap, se));
            }
            if is_finest {
                let ks = stats::ks_two_sample(xs, ys);
                let welch = stats::welch(xs, ys);
                report.push(
                    format!("two-sample KS m={mass} t={t}"),
                    ks.p_value >= KS_PASS_P,
                    format!(
                        "p = {:.4}, D = {:.4} (n = {}, {})",
                        ks.p_value,
                        ks.statistic,
                        xs.len(),
                        ys.len()
                    ),
                );
                report.push(
                    format!("mean-drift m={mass} t={t}"),
                    gap <= 3.0 * se,
                    format!(
                        "|mean gap| = {gap:.4} vs 3 se = {:.4} (welch p = {:.3})",
                        3.0 * se,
                        welch.p_value
                    ),
                );
                if mass > 0.0 {
                    let drift_integral = 2.0 * mean_integrated_drift(&sim.outs, sim.cadence_dt, t);
                    let sim_mean = stats::mean(ys);
                    let sim_se = stats::stderr_of_mean(ys);
                    report.push(
                        format!("drift-consistency m={mass} t={t}"),
                        (sim_mean - drift_integral).abs() <= 3.0 * sim_se.max(1e-3),
                        format!(
                            "mean xi = {sim_mean:.4} vs 2 E[int lambda] = {drift_integral:.4} (se {sim_se:.4})"
                        ),
                    );
                }
            }
        }
    }

    if mass > 0.0 && trend.len() >= 3 {
        let overall = trend.first().unwrap().1 > trend.last().unwrap().1;
        let mut stepwise = true;
        for w in trend.windows(2) {
            let allow = w[0].2.max(w[1].2);
            if w[1].1 > w[0].1 + allow {
                stepwise = false;
            }
        }
        report.push(
            format!("mesh-trend m={mass} t={t_star}"),
            overall && stepwise,
            format!(
                "gaps {:?}",
                trend
                    .iter()
                    .map(|(d, g, _)| format!("mesh {d:.5}: {g:.4}"))
                    .collect::<Vec<_>>()
            ),
        );
    }
    Ok(())
}

pub fn run_compare(cfg: &ExperimentConfig, seed: u64) -> Result<CompareReport> {
    if cfg.experiment.samples < 500 || cfg.sim.samples < 500 {
        bail!("insufficient samples for a comparison (need at least 500 per side)");
    }
    let mut report = CompareReport::default();
    let finest = cfg
        .experiment
        .mesh_sizes
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    for &mass in &cfg.experiment.masses {
        if mass == 0.0 {
            gaussian_limit(cfg, finest, cfg.experiment.samples, seed, &mut report)?;
            // the simulated side of the massless law is a sanity cross-check
            compare_mass(cfg, 0.0, seed, &mut report)?;
        } else {
            compare_mass(cfg, mass, seed, &mut report)?;
        }
    }
    Ok(report)
}
