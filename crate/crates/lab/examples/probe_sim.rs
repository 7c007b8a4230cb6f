use std::time::Instant;
use msle_core::conformal::{Rect, RectMap};
use msle_core::sim::SimConfig;
use msle_lab::runs;
use msle_lab::stats;

fn main() {
    // asymmetric source at the quarter point, killing rate with m R ~ 1
    let map = RectMap::new(
        Rect { x0: 0.0, y0: 0.0, width: 1.0, height: 1.0 },
        (0.25, 0.0), (0.5, 1.0), (0.5, 0.5),
    ).unwrap();
    let rad = 0.5f64 * 2.0f64.sqrt();
    let m = 1.0 / rad;

    let base = SimConfig {
        mass: m,
        dt: 1e-3,
        horizon: 0.3,
        stop_radius: Some(0.15),
        mesh_n: 48,
        cadence: 4,
        master_seed: 11,
        stream: 0,
        drift_tol: 1e-7,
    };
    let t0 = Instant::now();
    let outs = runs::simulate_batch(&base, &map, 20, 0).unwrap();
    println!("20 sims (T=0.3, mesh 48, cadence 4): {:?}", t0.elapsed());

    // Novikov-style statistic: int lambda^2 dt per trajectory
    let stat: Vec<f64> = outs.iter().map(|o| {
        let cd = base.dt * base.cadence as f64;
        o.reports.iter().map(|r| r.lambda * r.lambda * cd).sum::<f64>()
    }).collect();
    let mut sorted = stat.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!("int lambda^2: min {:.4} med {:.4} max {:.4}", sorted[0], sorted[sorted.len()/2], sorted[sorted.len()-1]);
    println!("lambda(0) = {:.4}", outs[0].reports[0].lambda);
    let xi: Vec<f64> = outs.iter().filter_map(|o| o.driving.value_at(0.25)).collect();
    println!("xi(0.25): mean {:.4} (n = {})", stats::mean(&xi), xi.len());
}
