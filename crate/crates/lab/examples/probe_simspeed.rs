use std::time::Instant;
use msle_core::conformal::{Rect, RectMap};
use msle_core::sim::SimConfig;
use msle_lab::runs;

fn main() {
    let map = RectMap::new(
        Rect { x0: 0.0, y0: 0.0, width: 1.0, height: 1.0 },
        (0.25, 0.0), (0.5, 1.0), (0.5, 0.5),
    ).unwrap();
    let m = 2.0f64 / 2.0f64.sqrt();
    for (mesh_n, cadence, tol) in [(64usize, 4usize, 1e-4f64), (64, 8, 1e-4), (96, 8, 1e-4), (96, 8, 1e-3)] {
        let base = SimConfig {
            mass: m, dt: 1e-3, horizon: 0.55, stop_radius: Some(0.15),
            mesh_n, cadence, master_seed: 11, stream: 0, drift_tol: tol,
        };
        let t0 = Instant::now();
        let outs = runs::simulate_batch(&base, &map, 8, 0).unwrap();
        let dtw = t0.elapsed().as_secs_f64() / 8.0;
        let lam0 = outs[0].reports[0].lambda;
        let mean_xi: f64 = outs.iter().filter_map(|o| o.driving.value_at(0.5)).sum::<f64>() / 8.0;
        println!("mesh {mesh_n} cad {cadence} tol {tol:.0e}: {dtw:.2} s/traj, lambda0 = {lam0:+.4}, mean xi(0.5) over 8 = {mean_xi:+.3}");
    }
}
