//! Seeded batch runs: curve sampling, driving extraction with common
//! stopping, per-curve densities and forward-simulation batches. Every task
//! owns one random stream, so batches are reproducible regardless of the
//! thread count; reductions happen in index order.

use anyhow::Result;
use rayon::prelude::*;

use msle_core::conformal::{curve_to_halfplane, extract_driving_refined, DrivingFunction, RectMap};

/// Capacity resolution of driving extraction: mapped polyline segments are
/// subdivided until no unzip step exceeds this increment.
pub const EXTRACTION_DT_MAX: f64 = 2e-3;
use msle_core::lattice::{inner_ball, GridDomain, LatticeCurve, Mass, Vertex};
use msle_core::potential::hit_b_field;
use msle_core::rng;
use msle_core::sampler::ConditionedSampler;
use msle_core::sim::{simulate_on, SimConfig, SimOutput};
use msle_core::solve::WalkSystem;

/// Sample `n` loop-erased conditioned walks, stream `stream_base + i` each.
pub fn sample_curves(
    dom: &GridDomain,
    m: Mass,
    n: usize,
    seed: u64,
    stream_base: u64,
) -> Result<Vec<LatticeCurve>> {
    let sampler = ConditionedSampler::new(dom, m)?;
    let curves: Vec<LatticeCurve> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, stream_base + i as u64);
            let walk = sampler.sample(&mut r);
            msle_core::sampler::loop_erase(&walk)
        })
        .collect();
    Ok(curves)
}

/// Truncate a curve at its first entry into the inner `r`-vicinity of the
/// target (the entry vertex is kept). Returns the truncated curve and
/// whether truncation happened.
pub fn truncate_at_vicinity(dom: &GridDomain, curve: &LatticeCurve, r: f64) -> (LatticeCurve, bool) {
    let ball: std::collections::HashSet<Vertex> = inner_ball(dom, r).into_iter().collect();
    for (k, v) in curve.vertices.iter().enumerate() {
        if ball.contains(v) {
            return (
                LatticeCurve {
                    vertices: curve.vertices[..=k].to_vec(),
                    simple: true,
                },
                true,
            );
        }
    }
    (curve.clone(), false)
}

/// Driving record of one lattice curve under the domain's half-plane chart,
/// resolved to `EXTRACTION_DT_MAX` capacity steps up to `horizon`.
pub fn curve_driving(
    dom: &GridDomain,
    map: &RectMap,
    curve: &LatticeCurve,
    horizon: f64,
) -> Result<DrivingFunction> {
    let (points, _skipped) = curve_to_halfplane(dom, map, curve)?;
    let (df, _chain) = extract_driving_refined(&points, EXTRACTION_DT_MAX, horizon)?;
    Ok(df)
}

/// Sample, truncate at the stopping vicinity and extract drivings in one
/// deterministic pass.
pub fn batch_drivings(
    dom: &GridDomain,
    m: Mass,
    n: usize,
    seed: u64,
    stream_base: u64,
    stop_radius: f64,
    horizon: f64,
) -> Result<Vec<DrivingFunction>> {
    let map = RectMap::for_domain(dom)?;
    let sampler = ConditionedSampler::new(dom, m)?;
    let ball: std::collections::HashSet<Vertex> =
        inner_ball(dom, stop_radius).into_iter().collect();
    let out: Vec<Result<DrivingFunction>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, stream_base + i as u64);
            let walk = sampler.sample(&mut r);
            let curve = msle_core::sampler::loop_erase(&walk);
            let cut = curve
                .vertices
                .iter()
                .position(|v| ball.contains(v))
                .map(|k| k + 1)
                .unwrap_or(curve.vertices.len());
            let truncated = LatticeCurve {
                vertices: curve.vertices[..cut].to_vec(),
                simple: true,
            };
            curve_driving(dom, &map, &truncated, horizon)
        })
        .collect();
    out.into_iter().collect()
}

/// Per-time marginals of a batch of drivings: at each grid time only the
/// records whose capacity reaches it contribute; the short count is recorded.
pub struct Marginals {
    pub t_grid: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub short: Vec<usize>,
}

pub fn marginals(drivings: &[DrivingFunction], t_grid: &[f64]) -> Marginals {
    let mut values = vec![Vec::new(); t_grid.len()];
    let mut short = vec![0usize; t_grid.len()];
    for df in drivings {
        for (k, &t) in t_grid.iter().enumerate() {
            match df.value_at(t) {
                Some(v) => values[k].push(v),
                None => short[k] += 1,
            }
        }
    }
    Marginals {
        t_grid: t_grid.to_vec(),
        values,
        short,
    }
}

/// Largest single-step capacity increment over a batch of drivings.
pub fn max_step_capacity(drivings: &[DrivingFunction]) -> f64 {
    drivings
        .iter()
        .flat_map(|d| d.steps.iter().map(|s| s.dt))
        .fold(0.0, f64::max)
}

/// Forward-simulate `n` trajectories with consecutive streams.
pub fn simulate_batch(
    base: &SimConfig,
    map: &RectMap,
    n: usize,
    stream_base: u64,
) -> Result<Vec<SimOutput>> {
    let outs: Vec<std::result::Result<SimOutput, msle_core::sim::SimError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let cfg = SimConfig {
                stream: stream_base + i as u64,
                ..base.clone()
            };
            simulate_on(&cfg, map)
        })
        .collect();
    let mut res = Vec::with_capacity(n);
    for o in outs {
        res.push(o?);
    }
    Ok(res)
}

/// Log Radon–Nikodym density of one curve, computed incrementally: curve
/// vertices become Dirichlet holes of the fixed full-domain operator, and the
/// two hitting fields are warm-started from the previous step (the hitting
/// field vanishes off the target component automatically, so no component
/// extraction is needed).
pub fn curve_log_density(dom: &GridDomain, m: Mass, curve: &LatticeCurve) -> Result<f64> {
    if m.0 == 0.0 {
        return Ok(0.0);
    }
    let n = curve.vertices.len();
    let sys_m = WalkSystem::from_domain(dom, m.q(dom.mesh()));
    let sys_0 = WalkSystem::from_domain(dom, 1.0);
    let b_idx = dom.index_of(dom.b_edge().inner).unwrap() as usize;
    let mut rhs = vec![0.0; dom.len()];
    rhs[b_idx] = 1.0;
    let mut removed = vec![false; dom.len()];
    let mut h_m: Option<Vec<f64>> = None;
    let mut h_0: Option<Vec<f64>> = None;
    let mut log_density = 0.0;

    for k in 1..n - 2 {
        let tip = curve.vertices[k];
        let tip_idx = dom.index_of(tip).ok_or_else(|| {
            anyhow::anyhow!("curve vertex {tip:?} is not interior")
        })? as usize;
        removed[tip_idx] = true;
        if let Some(h) = h_m.as_mut() {
            h[tip_idx] = 0.0;
        }
        if let Some(h) = h_0.as_mut() {
            h[tip_idx] = 0.0;
        }
        let options: Vec<usize> = dom.neighbors()[tip_idx]
            .iter()
            .filter(|&&j| j != msle_core::lattice::NO_NEIGHBOR && !removed[j as usize])
            .map(|&j| j as usize)
            .collect();
        if options.len() <= 1 {
            continue; // forced step, probability one under both laws
        }
        let hm = sys_m.solve_masked(&removed, &rhs, 1e-10, h_m.as_deref())?;
        let h0 = sys_0.solve_masked(&removed, &rhs, 1e-10, h_0.as_deref())?;
        let next = curve.vertices[k + 1];
        let next_idx = dom
            .index_of(next)
            .ok_or_else(|| anyhow::anyhow!("curve vertex {next:?} is not interior"))?
            as usize;
        let p_of = |h: &[f64]| -> f64 {
            let total: f64 = options.iter().map(|&i| h[i]).sum();
            h[next_idx] / total
        };
        let (pm, p0) = (p_of(&hm), p_of(&h0));
        anyhow::ensure!(pm > 0.0 && p0 > 0.0, "curve leaves the walk support");
        log_density += pm.ln() - p0.ln();
        h_m = Some(hm);
        h_0 = Some(h0);
    }
    Ok(log_density)
}

pub fn density_batch(dom: &GridDomain, m: Mass, curves: &[LatticeCurve]) -> Result<Vec<f64>> {
    let out: Vec<Result<f64>> = curves
        .par_iter()
        .map(|c| curve_log_density(dom, m, c))
        .collect();
    out.into_iter().collect()
}

/// Partition-function ratio `Z_m(a,b) / Z_0(a,b)` of a domain; the density
/// bounds calibrate their constant on its logarithm.
pub fn partition_ratio(dom: &GridDomain, m: Mass) -> Result<f64> {
    use msle_core::potential::{z_boundary_to_point, ZTarget};
    let zm = z_boundary_to_point(dom, m, true, ZTarget::OtherMark)?;
    let z0 = z_boundary_to_point(dom, Mass::ZERO, true, ZTarget::OtherMark)?;
    Ok(zm / z0)
}

/// Mean number of interior steps of the conditioned walk (diagnostic used to
/// size calibration constants): `sum_v Z(a,v) Z(v,b) / Z(a,b)`.
pub fn expected_walk_steps(dom: &GridDomain) -> Result<f64> {
    use msle_core::potential::boundary_rooted_field;
    let za = boundary_rooted_field(dom, Mass::ZERO, true)?;
    let h = hit_b_field(dom, Mass::ZERO)?;
    let zab: f64 = dom
        .interior_neighbors_of(dom.a_edge().outer)
        .iter()
        .map(|&i| h.values[i as usize])
        .sum();
    let cross: f64 = za
        .values
        .iter()
        .zip(&h.values)
        .map(|(a, b)| a * b)
        .sum();
    Ok(cross / zab - 1.0)
}
