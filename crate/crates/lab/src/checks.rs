//! Validation battery: exact identities, oracle equivalences, stability and
//! finite-difference checks, each with a pinned tolerance. `corrupt` injects
//! a deliberate error into the resolvent check as a negative control.

use anyhow::Result;
use rand::Rng;

use msle_core::conformal::{Rect, RectMap};
use msle_core::drift::{drift_lambda, hadamard_check, helmholtz_solve, massive_kernels, MeshState};
use msle_core::lattice::{
    build_rect_domain, inner_ball, slit_component, BoundaryEdge, EdgeLocator, GridDomain,
    LatticeCurve, Mass, Vertex,
};
use msle_core::potential::{
    check_resolvent_identity, green_field, solve_massive_harmonic, z_boundary_to_point,
    boundary_rooted_field, hit_b_field, Endpoint, ZTarget,
};
use msle_core::rng;
use msle_core::sampler::{
    enumerate_tiny, laplacian_walk_step, observable_one_step_expectation, sample_mlerw,
};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        CheckResult {
            name,
            passed,
            detail,
        }
    }
}

/// Random connected sub-domain of a `size x size` block with random marks.
fn random_domain(size: i32, mesh: f64, rng: &mut impl Rng) -> GridDomain {
    loop {
        let target = rng.gen_range(3..=(size * size) as usize);
        let start = (rng.gen_range(1..=size), rng.gen_range(1..=size));
        let mut cells = vec![start];
        let mut seen: std::collections::HashSet<Vertex> = cells.iter().copied().collect();
        while cells.len() < target {
            let &base = &cells[rng.gen_range(0..cells.len())];
            let d = msle_core::lattice::DIRS[rng.gen_range(0..4)];
            let v = (base.0 + d.0, base.1 + d.1);
            if v.0 < 1 || v.0 > size || v.1 < 1 || v.1 > size {
                continue;
            }
            if seen.insert(v) {
                cells.push(v);
            }
        }
        // enumerate boundary edges of the cell set and pick two distinct ones
        let mut edges = Vec::new();
        for &v in &cells {
            for d in msle_core::lattice::DIRS {
                let u = (v.0 + d.0, v.1 + d.1);
                if !seen.contains(&u) {
                    edges.push(BoundaryEdge { outer: u, inner: v });
                }
            }
        }
        if edges.len() < 2 {
            continue;
        }
        let ai = rng.gen_range(0..edges.len());
        let mut bi = rng.gen_range(0..edges.len());
        while bi == ai {
            bi = rng.gen_range(0..edges.len());
        }
        if let Ok(dom) = GridDomain::from_cells(mesh, &cells, edges[ai], edges[bi], cells[0]) {
            return dom;
        }
    }
}

/// Lemma-style identity between killed and free partition functions on
/// random domains, all endpoint combinations; residual <= 1e-9 * max(1, |Z|).
pub fn check_resolvent(seed: u64, corrupt: bool) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    let mut detail = String::new();
    for i in 0..50u64 {
        let mut r = rng::stream(seed, 1000 + i);
        let dom = random_domain(6, 1.0, &mut r);
        for md in [0.0, 0.1, 0.3, 0.5] {
            let m = Mass(md / dom.mesh());
            let endpoints = [
                (Endpoint::Source, Endpoint::Target),
                (
                    Endpoint::Source,
                    Endpoint::Interior(dom.interior()[dom.len() / 2]),
                ),
                (
                    Endpoint::Interior(dom.interior()[0]),
                    Endpoint::Interior(dom.interior()[dom.len() - 1]),
                ),
            ];
            for (w, z) in endpoints {
                let mut residual = check_resolvent_identity(&dom, m, w, z)?;
                if corrupt {
                    residual += 1e-6;
                }
                let z0 = match z {
                    Endpoint::Interior(v) => {
                        z_boundary_to_point(&dom, Mass::ZERO, true, ZTarget::Interior(v))?
                    }
                    _ => z_boundary_to_point(&dom, Mass::ZERO, true, ZTarget::OtherMark)?,
                };
                let rel = residual / z0.abs().max(1.0);
                if rel > worst {
                    worst = rel;
                    detail = format!("domain {i}, m*mesh = {md}");
                }
            }
        }
    }
    Ok(CheckResult::new(
        "resolvent-identity",
        worst <= 1e-9,
        format!("max residual {worst:.3e} ({detail})"),
    ))
}

/// Symmetry of the interior partition function, random domains.
pub fn check_green_symmetry(seed: u64) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for i in 0..50u64 {
        let mut r = rng::stream(seed, 2000 + i);
        let dom = random_domain(6, 1.0, &mut r);
        let m = Mass([0.0, 0.3, 0.5][(i % 3) as usize] / dom.mesh());
        let u = dom.interior()[r.gen_range(0..dom.len())];
        let v = dom.interior()[r.gen_range(0..dom.len())];
        let gu = green_field(&dom, m, u)?;
        let gv = green_field(&dom, m, v)?;
        worst = worst.max((gu.at(&dom, v).unwrap() - gv.at(&dom, u).unwrap()).abs());
    }
    Ok(CheckResult::new(
        "green-symmetry",
        worst <= 1e-10,
        format!("max asymmetry {worst:.3e}"),
    ))
}

/// Uniform crossing bound: `Z(a,v) Z(v,b) / Z(a,b)` stays bounded; the
/// constant is recorded, only sanity is asserted.
pub fn check_crossing_bound() -> Result<CheckResult> {
    let mut cmax = 0.0f64;
    for n in [7usize, 15, 31] {
        let c = ((n + 1) / 2) as i32;
        let dom = build_rect_domain(
            n,
            n,
            1.0 / (n as f64 + 1.0),
            EdgeLocator::BottomCenter,
            EdgeLocator::TopCenter,
            (c, c),
        )?;
        let za = boundary_rooted_field(&dom, Mass::ZERO, true)?;
        let h = hit_b_field(&dom, Mass::ZERO)?;
        let zab = z_boundary_to_point(&dom, Mass::ZERO, true, ZTarget::OtherMark)?;
        for i in 0..dom.len() {
            cmax = cmax.max(za.values[i] * h.values[i] / zab);
        }
    }
    Ok(CheckResult::new(
        "crossing-bound",
        cmax.is_finite() && cmax > 0.0 && cmax < 100.0,
        format!("C = {cmax:.3}"),
    ))
}

/// Ratios of two positive harmonic fields flatten geometrically in nested
/// vicinities of the target.
pub fn check_boundary_ratio_stability() -> Result<CheckResult> {
    let n = 32usize;
    let dom = build_rect_domain(
        n,
        n,
        1.0 / (n as f64 + 1.0),
        EdgeLocator::BottomCenter,
        EdgeLocator::TopCenter,
        (16, 16),
    )?;
    // two positive harmonic fields with boundary data supported far from the
    // target: one on the bottom edge, one on the lower halves of the sides
    let data1: Vec<f64> = dom
        .boundary_edges()
        .iter()
        .map(|e| if e.outer.1 == 0 { 1.0 } else { 0.0 })
        .collect();
    let data2: Vec<f64> = dom
        .boundary_edges()
        .iter()
        .map(|e| {
            if (e.outer.0 == 0 || e.outer.0 == n as i32 + 1) && e.outer.1 <= (n / 2) as i32 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let h1 = solve_massive_harmonic(&dom, Mass::ZERO, &data1)?;
    let h2 = solve_massive_harmonic(&dom, Mass::ZERO, &data2)?;
    let r0 = 0.45f64;
    let mut spreads = Vec::new();
    for q in 0..4 {
        let ball = inner_ball(&dom, r0 / (1 << q) as f64);
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for v in ball {
            let ratio = h1.at(&dom, v).unwrap() / h2.at(&dom, v).unwrap();
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        spreads.push(hi / lo - 1.0);
    }
    let decaying = spreads.windows(2).all(|w| w[1] <= 0.85 * w[0]);
    Ok(CheckResult::new(
        "boundary-ratio-stability",
        decaying,
        format!(
            "spreads {:?}",
            spreads.iter().map(|s| format!("{s:.4}")).collect::<Vec<_>>()
        ),
    ))
}

/// Small-scale density bounds with the constant fitted on the partition
/// ratio of the same domain.
pub fn check_density_bounds(seed: u64) -> Result<CheckResult> {
    let n = 8usize;
    let mesh = 1.0 / (n as f64 + 1.0);
    let dom = build_rect_domain(
        n,
        n,
        mesh,
        EdgeLocator::BottomCenter,
        EdgeLocator::TopCenter,
        (4, 4),
    )?;
    let rad = dom.bound_radius();
    let m = Mass(1.0 / rad);
    let m2r2 = (m.0 * rad) * (m.0 * rad);
    let ratio = crate::runs::partition_ratio(&dom, m)?;
    let c_fit = 1.5 * (-ratio.ln()) / m2r2;
    let curves = crate::runs::sample_curves(&dom, Mass::ZERO, 400, seed, 3000)?;
    let densities = crate::runs::density_batch(&dom, m, &curves)?;
    let max_log = densities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean_log = densities.iter().sum::<f64>() / densities.len() as f64;
    let ok = max_log <= c_fit * m2r2 && mean_log >= -c_fit * m2r2;
    Ok(CheckResult::new(
        "density-bounds",
        ok,
        format!(
            "c_fit = {c_fit:.3}, max log D = {max_log:.4} (cap {:.4}), mean log D = {mean_log:.4} (floor {:.4})",
            c_fit * m2r2,
            -c_fit * m2r2
        ),
    ))
}

/// Exact one-step preservation of the observable.
pub fn check_martingale() -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for (cols, rows) in [(2usize, 2usize), (3, 3)] {
        let dom = build_rect_domain(
            cols,
            rows,
            1.0,
            EdgeLocator::Bottom(1),
            EdgeLocator::Top(cols as i32),
            (1, 1),
        )?;
        let entry = LatticeCurve::new(vec![(1, 0), (1, 1)])?;
        for md in [0.0, 0.3] {
            for &v in dom.interior() {
                if v == (1, 1) {
                    continue;
                }
                let (e, now) = observable_one_step_expectation(&dom, &entry, Mass(md), v)?;
                worst = worst.max((e - now).abs() / now.abs().max(1.0));
            }
        }
    }
    Ok(CheckResult::new(
        "martingale-one-step",
        worst <= 1e-9,
        format!("max relative defect {worst:.3e}"),
    ))
}

/// Loop-erased conditioned walks against the enumeration oracle, plus the
/// exact first-step law of the growth chain.
pub fn check_sampler_equivalence(seed: u64) -> Result<CheckResult> {
    let dom = build_rect_domain(2, 2, 1.0, EdgeLocator::Bottom(1), EdgeLocator::Top(2), (1, 1))?;
    let m = Mass(0.5);
    let law = enumerate_tiny(&dom, m)?;
    let n = 100_000usize;
    let mut counts: std::collections::HashMap<Vec<Vertex>, usize> = Default::default();
    let mut r = rng::stream(seed, 4000);
    for _ in 0..n {
        let c = sample_mlerw(&dom, m, &mut r)?;
        *counts.entry(c.vertices).or_default() += 1;
    }
    let mut worst_sigma = 0.0f64;
    for (curve, p) in &law.curves {
        let k = counts.get(&curve.vertices).copied().unwrap_or(0) as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        worst_sigma = worst_sigma.max((k / n as f64 - p).abs() / sigma.max(1e-9));
    }

    let entry = LatticeCurve::new(vec![(1, 0), (1, 1)])?;
    let dom1 = slit_component(&dom, &entry)?;
    let step = laplacian_walk_step(&dom1, m)?;
    let mut worst_exact = 0.0f64;
    for (v, p) in &step.moves {
        let marginal: f64 = law
            .curves
            .iter()
            .filter(|(c, _)| c.vertices.len() > 2 && c.vertices[2] == *v)
            .map(|(_, p)| p)
            .sum();
        worst_exact = worst_exact.max((p - marginal).abs());
    }
    let ok = worst_sigma <= 4.0 && worst_exact <= 1e-10;
    Ok(CheckResult::new(
        "sampler-equivalence",
        ok,
        format!("MC deviation {worst_sigma:.2} sigma, chain defect {worst_exact:.2e}"),
    ))
}

fn square_map() -> Result<RectMap> {
    Ok(RectMap::new(
        Rect {
            x0: 0.0,
            y0: 0.0,
            width: 1.0,
            height: 1.0,
        },
        (0.5, 0.0),
        (0.5, 1.0),
        (0.5, 0.5),
    )?)
}

/// Continuum form of the kernel resolvent identity on the mesh.
pub fn check_kernel_resolvent() -> Result<CheckResult> {
    let state = MeshState::new(&square_map()?, 64)?;
    let m = 0.35f64;
    let k = massive_kernels(&state, m)?;
    let g0pm = helmholtz_solve(&state, 0.0, &k.p_m)?;
    let mut sup = 0.0f64;
    for i in 0..k.p.len() {
        if state.active[i] {
            sup = sup.max((k.p[i] - k.p_m[i] - m * m * g0pm[i]).abs());
        }
    }
    Ok(CheckResult::new(
        "kernel-resolvent",
        sup <= 1e-6,
        format!("sup residual {sup:.3e}"),
    ))
}

/// Classical and massive finite-difference derivative checks.
pub fn check_hadamard(mesh_n: usize) -> Result<CheckResult> {
    let state = MeshState::new(&square_map()?, mesh_n)?;
    let w = (mesh_n / 5, mesh_n / 2);
    let z = (4 * mesh_n / 5, 5 * mesh_n / 8);
    let m = 1.4f64;
    let (cl, ms) = hadamard_check(&state, m, 1e-4, w, z)?;
    Ok(CheckResult::new(
        "hadamard-residuals",
        cl <= 1e-2 && ms <= 1e-2,
        format!("classical {cl:.3e}, massive {ms:.3e}"),
    ))
}

/// Drift functional sanity: exact zero without killing, symmetric-start zero.
pub fn check_drift_zero() -> Result<CheckResult> {
    let state = MeshState::new(&square_map()?, 64)?;
    let r0 = drift_lambda(&state, 0.0)?;
    let r1 = drift_lambda(&state, 1.4)?;
    let ok = r0.lambda == 0.0 && r0.n_m == 1.0 && r1.lambda.abs() <= 1e-6 && r1.n_m >= 1.0;
    Ok(CheckResult::new(
        "drift-zero-cases",
        ok,
        format!(
            "massless lambda {:.1e}, symmetric-start lambda {:.2e}, N {:.4}",
            r0.lambda, r1.lambda, r1.n_m
        ),
    ))
}

/// The whole battery.
pub fn run_all(seed: u64, corrupt: bool) -> Result<Vec<CheckResult>> {
    Ok(vec![
        check_resolvent(seed, corrupt)?,
        check_green_symmetry(seed)?,
        check_crossing_bound()?,
        check_boundary_ratio_stability()?,
        check_density_bounds(seed)?,
        check_martingale()?,
        check_sampler_equivalence(seed)?,
        check_kernel_resolvent()?,
        check_hadamard(48)?,
        check_drift_zero()?,
    ])
}
