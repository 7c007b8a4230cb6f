//! Euler–Maruyama forward simulation of the driving SDE
//! `dxi = sqrt(2) dB + 2 lambda dt`, with the drift evaluated on the evolving
//! mesh and the hull grown by one vertical slit per step.
//!
//! Without killing the driving is exactly a sqrt(2)-Brownian path: the drift
//! machinery is never touched and the increments depend only on the stream.

use num_complex::Complex64 as Cx;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::conformal::{ConformalError, DrivingFunction, DrivingStep, RectMap, Slit, SlitChain};
use crate::drift::{DriftError, DriftEvaluator, DriftReport, MeshState};
use crate::lattice::GridDomain;
use crate::rng;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("bad simulation config: {0}")]
    BadConfig(String),
    #[error("mesh failure at step {step}: {source}")]
    MeshFailure { step: usize, source: DriftError },
    #[error("degenerate slit step at {0}, even after halving the step size")]
    DegenerateStep(usize),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
}

/// Simulation parameters. The stopping rule is capacity `horizon` or entry
/// of the tip into the inner `stop_radius`-vicinity of the target, whichever
/// comes first.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub mass: f64,
    pub dt: f64,
    pub horizon: f64,
    pub stop_radius: Option<f64>,
    pub mesh_n: usize,
    /// steps between drift refreshes (1 = recompute every step)
    pub cadence: usize,
    pub master_seed: u64,
    pub stream: u64,
    /// relative tolerance of the Helmholtz solves inside the drift functional
    pub drift_tol: f64,
}

impl SimConfig {
    pub fn new(mass: f64, dt: f64, horizon: f64, mesh_n: usize, master_seed: u64) -> Self {
        SimConfig {
            mass,
            dt,
            horizon,
            stop_radius: None,
            mesh_n,
            cadence: 1,
            master_seed,
            stream: 0,
            drift_tol: 1e-8,
        }
    }

    fn validate(&self, cell: f64) -> Result<(), SimError> {
        if !(self.dt > 0.0) {
            return Err(SimError::BadConfig("dt must be positive".into()));
        }
        if self.cadence == 0 {
            return Err(SimError::BadConfig("cadence must be at least 1".into()));
        }
        if self.mass < 0.0 || self.mass * cell > 0.5 + 1e-12 {
            return Err(SimError::BadConfig(format!(
                "mass * mesh cell = {:.4} exceeds 1/2",
                self.mass * cell
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub driving: DrivingFunction,
    /// hull tip in domain coordinates after each step
    pub tip_trace: Vec<(f64, f64)>,
    pub reports: Vec<DriftReport>,
    pub stopped_by_radius: bool,
}

/// Inner-vicinity membership for cells of the full mesh block, mirroring the
/// lattice convention: distance `cell * (1/2 + steps)` from the target cell.
fn stop_mask(nx: usize, ny: usize, cell: f64, b_cell: (usize, usize), r: f64) -> Vec<bool> {
    let mut mask = vec![false; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let steps = (i as i64 - b_cell.0 as i64).unsigned_abs()
                + (j as i64 - b_cell.1 as i64).unsigned_abs();
            mask[j * nx + i] = cell * (0.5 + steps as f64) < r;
        }
    }
    mask
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

/// Forward-simulate one trajectory on the rectangle of `dom`.
pub fn simulate(cfg: &SimConfig, dom: &GridDomain) -> Result<SimOutput, SimError> {
    let map = RectMap::for_domain(dom)?;
    simulate_on(cfg, &map)
}

pub fn simulate_on(cfg: &SimConfig, map: &RectMap) -> Result<SimOutput, SimError> {
    let cell = map.rect.width / cfg.mesh_n as f64;
    cfg.validate(cell)?;
    let massive = cfg.mass > 0.0;
    let mut state = if massive {
        Some(
            MeshState::new(map, cfg.mesh_n)
                .map_err(|source| SimError::MeshFailure { step: 0, source })?,
        )
    } else {
        None
    };

    // fixed stopping region of the base rectangle
    let ny = (map.rect.height / cell).round() as usize;
    let stop = cfg.stop_radius.map(|r| {
        let bi = (((map.b.0 - map.rect.x0) / cell).floor() as usize).min(cfg.mesh_n - 1);
        let bj = (((map.b.1 - map.rect.y0) / cell).floor() as usize).min(ny - 1);
        stop_mask(cfg.mesh_n, ny, cell, (bi, bj), r)
    });
    let cell_of = |p: (f64, f64)| -> Option<usize> {
        let i = ((p.0 - map.rect.x0) / cell).floor();
        let j = ((p.1 - map.rect.y0) / cell).floor();
        if i < 0.0 || j < 0.0 || i >= cfg.mesh_n as f64 || j >= ny as f64 {
            return None;
        }
        Some(j as usize * cfg.mesh_n + i as usize)
    };

    let mut rng = rng::stream(cfg.master_seed, cfg.stream);
    let mut chain = SlitChain::default();
    let mut steps: Vec<DrivingStep> = Vec::new();
    let mut reports: Vec<DriftReport> = Vec::new();
    let mut xi = 0.0f64;
    let mut lambda = 0.0f64;
    let mut tip_prev = map.a;
    let mut tip_trace = Vec::new();
    let mut stopped_by_radius = false;
    let n_steps = (cfg.horizon / cfg.dt).ceil() as usize;

    let mut evaluator = DriftEvaluator::new();
    let mut k = 0usize;
    while k < n_steps {
        if massive && k % cfg.cadence == 0 {
            let state_ref = state.as_ref().unwrap();
            let report = evaluator
                .evaluate(state_ref, cfg.mass, cfg.drift_tol)
                .map_err(|source| SimError::MeshFailure { step: k, source })?;
            lambda = report.lambda;
            reports.push(report);
        }

        let mut dt = cfg.dt;
        let mut attempt = 0;
        loop {
            let z = normal(&mut rng);
            let xi_next = xi + (2.0 * dt).sqrt() * z + 2.0 * lambda * dt;
            let slit = Slit {
                xi: xi_next,
                h: 2.0 * dt.sqrt(),
            };
            chain.slits.push(slit);
            let tip_ok = chain
                .tip()
                .map(|t| map.inverse(t).map(|p| (p.re, p.im)))
                .transpose();
            match tip_ok {
                Ok(Some(tip)) => {
                    if let Some(s) = state.as_mut() {
                        s.advance(xi_next, dt);
                        s.mask_segment(tip_prev, tip);
                    }
                    xi = xi_next;
                    steps.push(DrivingStep { dt, xi });
                    tip_prev = tip;
                    tip_trace.push(tip);
                    break;
                }
                _ => {
                    chain.slits.pop();
                    if attempt > 0 {
                        return Err(SimError::DegenerateStep(k));
                    }
                    attempt = 1;
                    dt *= 0.5;
                }
            }
        }

        if let Some(stop_cells) = &stop {
            if let Some(ci) = cell_of(tip_prev) {
                if stop_cells[ci] {
                    stopped_by_radius = true;
                    break;
                }
            }
        }
        k += 1;
    }

    Ok(SimOutput {
        driving: DrivingFunction { steps },
        tip_trace,
        reports,
        stopped_by_radius,
    })
}

/// Evaluate the drift functional along a frozen driving record: replays the
/// slit chain, masking the mesh along the mapped-back hull, and reports the
/// drift at each refresh time starting at zero capacity.
pub fn drift_profile(
    map: &RectMap,
    mesh_n: usize,
    mass: f64,
    driving: &DrivingFunction,
    cadence: usize,
    drift_tol: f64,
) -> Result<Vec<DriftReport>, SimError> {
    if cadence == 0 {
        return Err(SimError::BadConfig("cadence must be at least 1".into()));
    }
    let mut state = MeshState::new(map, mesh_n)
        .map_err(|source| SimError::MeshFailure { step: 0, source })?;
    if mass * state.cell > 0.5 + 1e-12 {
        return Err(SimError::BadConfig("mass too large for this mesh".into()));
    }
    let mut chain = SlitChain::default();
    let mut reports = Vec::new();
    let mut tip_prev = map.a;
    let mut evaluator = DriftEvaluator::new();
    for (k, s) in driving.steps.iter().enumerate() {
        if k % cadence == 0 {
            let report = evaluator
                .evaluate(&state, mass, drift_tol)
                .map_err(|source| SimError::MeshFailure { step: k, source })?;
            reports.push(report);
        }
        chain.slits.push(Slit {
            xi: s.xi,
            h: 2.0 * s.dt.sqrt(),
        });
        state.advance(s.xi, s.dt);
        if let Some(tip_h) = chain.tip() {
            if let Ok(tip) = map.inverse(tip_h) {
                let tip = (tip.re, tip.im);
                state.mask_segment(tip_prev, tip);
                tip_prev = tip;
            }
        }
    }
    Ok(reports)
}

/// The tip preimage of a driving record in half-plane coordinates, step by
/// step (used to mask meshes and to compare hulls).
pub fn hull_trace(driving: &DrivingFunction) -> Vec<Cx> {
    let mut chain = SlitChain::default();
    for s in &driving.steps {
        chain.slits.push(Slit {
            xi: s.xi,
            h: 2.0 * s.dt.sqrt(),
        });
    }
    chain.trace()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::Rect;
    use approx::assert_relative_eq;

    fn square_map() -> RectMap {
        RectMap::new(
            Rect {
                x0: 0.0,
                y0: 0.0,
                width: 1.0,
                height: 1.0,
            },
            (0.5, 0.0),
            (0.5, 1.0),
            (0.5, 0.5),
        )
        .unwrap()
    }

    #[test]
    fn capacity_bookkeeping_exact() {
        let cfg = SimConfig::new(0.0, 1e-3, 0.25, 16, 9);
        let out = simulate_on(&cfg, &square_map()).unwrap();
        let total = out.driving.total_capacity();
        assert!((total - 0.25).abs() < 1e-12, "total {total}");
        assert!(out.reports.is_empty());
    }

    #[test]
    fn zero_mass_is_pure_brownian_path() {
        let cfg = SimConfig {
            cadence: 3,
            ..SimConfig::new(0.0, 2e-3, 0.1, 16, 123)
        };
        let out = simulate_on(&cfg, &square_map()).unwrap();
        // bit-identical reference path from the same stream
        let mut rng = crate::rng::stream(123, 0);
        let mut xi = 0.0f64;
        for s in &out.driving.steps {
            let z: f64 = rng.sample(StandardNormal);
            xi += (2.0 * s.dt).sqrt() * z;
            assert_eq!(s.xi, xi);
        }
    }

    #[test]
    fn zero_mass_symmetric_square_statistics() {
        let map = square_map();
        let n = 300usize;
        let t = 0.2;
        let mut vals = Vec::with_capacity(n);
        for i in 0..n {
            let cfg = SimConfig {
                stream: i as u64,
                ..SimConfig::new(0.0, 2e-3, t, 8, 4242)
            };
            let out = simulate_on(&cfg, &map).unwrap();
            vals.push(out.driving.value_at(t).unwrap());
        }
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        let sigma = (2.0 * t / n as f64).sqrt();
        assert!(mean.abs() < 3.0 * sigma, "mean {mean}");
        assert!((var - 2.0 * t).abs() < 0.25 * 2.0 * t, "var {var}");
    }

    #[test]
    fn massive_run_produces_reports() {
        let cfg = SimConfig {
            cadence: 5,
            ..SimConfig::new(1.4, 1e-3, 0.02, 24, 7)
        };
        let out = simulate_on(&cfg, &square_map()).unwrap();
        assert_eq!(out.reports.len(), 4);
        // symmetric start: the first drift vanishes
        assert!(out.reports[0].lambda.abs() < 1e-6);
        for r in &out.reports {
            assert!(r.lambda.is_finite());
            assert!(r.n_m >= 1.0);
        }
        assert_eq!(out.tip_trace.len(), out.driving.steps.len());
    }

    #[test]
    fn drift_profile_zero_mass_and_reflection() {
        let map = square_map();
        // synthetic driving, antisymmetric partner must negate the drift
        let n = 30;
        let dt = 1e-3;
        let steps: Vec<DrivingStep> = (0..n)
            .map(|k| DrivingStep {
                dt,
                xi: 0.4 * ((k as f64) * 0.21).sin() + 0.1,
            })
            .collect();
        let driving = DrivingFunction { steps };
        let zero = drift_profile(&map, 32, 0.0, &driving, 10, 1e-8).unwrap();
        assert!(zero.iter().all(|r| r.lambda == 0.0));

        let m = 1.2;
        let plus = drift_profile(&map, 32, m, &driving, 10, 1e-9).unwrap();
        let minus = drift_profile(&map, 32, m, &driving.reflected(), 10, 1e-9).unwrap();
        assert_eq!(plus.len(), minus.len());
        for (a, b) in plus.iter().zip(&minus) {
            assert_relative_eq!(a.lambda, -b.lambda, epsilon = 1e-6);
        }
        // lambda at time zero on the symmetric square vanishes
        assert!(plus[0].lambda.abs() < 1e-6);
    }

    #[test]
    fn stop_radius_halts_near_target() {
        let map = square_map();
        // huge radius: the very first step is already inside the vicinity
        let cfg = SimConfig {
            stop_radius: Some(10.0),
            ..SimConfig::new(0.0, 1e-3, 1.0, 16, 3)
        };
        let out = simulate_on(&cfg, &map).unwrap();
        assert!(out.stopped_by_radius);
        assert_eq!(out.driving.steps.len(), 1);
    }

    #[test]
    fn hull_trace_matches_tip_trace() {
        let cfg = SimConfig::new(0.0, 1e-3, 0.05, 16, 21);
        let map = square_map();
        let out = simulate_on(&cfg, &map).unwrap();
        let hp = hull_trace(&out.driving);
        assert_eq!(hp.len(), out.tip_trace.len());
        for (h, t) in hp.iter().zip(&out.tip_trace) {
            let back = map.inverse(*h).unwrap();
            assert!((back.re - t.0).abs() < 1e-9);
            assert!((back.im - t.1).abs() < 1e-9);
        }
    }
}
