use msle_core::conformal::{Rect, RectMap};
use msle_core::drift::{drift_lambda, helmholtz_solve, pq_fields, MeshState};
use msle_core::lattice::{build_rect_domain, EdgeLocator, Mass};
use msle_lab::runs;
use msle_lab::stats;
use std::f64::consts::PI;

fn log_n_shifted(state: &MeshState, m: f64, h: f64) -> f64 {
    // N(h)^{-1} = 1 - m^2 Int P_h^(m) K0 dA with the source shifted to h in
    // the half-plane chart: P_h = -Im(1/(phi - h))/pi, K0 = Im phi
    let n = state.active.len();
    let mut p = vec![0.0; n];
    let mut k0 = vec![0.0; n];
    for i in 0..n {
        if !state.active[i] { continue; }
        let phi = state.phi(i);
        let shifted = phi - h;
        p[i] = shifted.im / (PI * shifted.norm_sqr());
        k0[i] = phi.im;
    }
    let gp = helmholtz_solve(state, m, &p).unwrap();
    let pm: Vec<f64> = p.iter().zip(&gp).map(|(a, b)| a - m * m * b).collect();
    let pk: Vec<f64> = pm.iter().zip(&k0).map(|(a, b)| a * b).collect();
    -(1.0 - m * m * state.integrate(&pk)).ln()
}

fn main() {
    let map = RectMap::new(
        Rect { x0: 0.0, y0: 0.0, width: 1.0, height: 1.0 },
        (0.25, 0.0), (0.5, 1.0), (0.5, 0.5),
    ).unwrap();
    let rad = 0.5f64 * 2.0f64.sqrt();
    let m = 1.0 / rad;
    for mesh_n in [48usize, 96] {
        let state = MeshState::new(&map, mesh_n).unwrap();
        let lam = drift_lambda(&state, m).unwrap();
        let h = 1e-4;
        let fd = -(log_n_shifted(&state, m, h) - log_n_shifted(&state, m, -h)) / (2.0 * h);
        println!("mesh {mesh_n}: lambda = {:+.6}, FD over source shift = {:+.6}, N = {:.5}", lam.lambda, fd, lam.n_m);
        let (_p, q) = pq_fields(&state);
        println!("  int_qk = {:+.6}, int Q dA = {:+.6}", lam.int_qk, state.integrate(&q));
    }

    // small-time discrete drift: E[xi(t)] ~ 2 lambda(0) t
    let dom = build_rect_domain(31, 31, 1.0 / 32.0,
        EdgeLocator::Bottom(8), EdgeLocator::TopCenter, (16, 16)).unwrap();
    let md = 1.0 / dom.bound_radius();
    let d = runs::batch_drivings(&dom, Mass(md), 20000, 4, 0, 0.15, 0.26).unwrap();
    let ms = runs::marginals(&d, &[0.0625, 0.125, 0.25]);
    for (k, t) in [0.0625, 0.125, 0.25].iter().enumerate() {
        let xs = &ms.values[k];
        println!(
            "discrete mR=1: mean xi({t}) = {:+.5} +- {:.5}  => lambda_avg ~ {:+.4}",
            stats::mean(xs), stats::stderr_of_mean(xs), stats::mean(xs) / (2.0 * t)
        );
    }
}
