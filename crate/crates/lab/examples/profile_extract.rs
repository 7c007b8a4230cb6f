use std::time::Instant;
use msle_core::lattice::Mass;
use msle_lab::config::default_config;
use msle_lab::runs;

fn main() {
    let cfg = default_config();
    let dom = cfg.domain_at(1.0 / 64.0).unwrap();
    let t0 = Instant::now();
    let curves = runs::sample_curves(&dom, Mass::ZERO, 50, 7, 0).unwrap();
    println!("sampling 50: {:?}", t0.elapsed());
    let lens: Vec<usize> = curves.iter().map(|c| c.vertices.len()).collect();
    println!("curve lengths: min {} max {}", lens.iter().min().unwrap(), lens.iter().max().unwrap());
    let t0 = Instant::now();
    let d = runs::batch_drivings(&dom, Mass::ZERO, 50, 7, 0, 0.08, 1.02).unwrap();
    println!("batch_drivings 50: {:?}", t0.elapsed());
    let steps: Vec<usize> = d.iter().map(|x| x.steps.len()).collect();
    println!("driving steps: min {} max {}", steps.iter().min().unwrap(), steps.iter().max().unwrap());
    let caps: Vec<f64> = d.iter().map(|x| x.total_capacity()).collect();
    println!("capacities: {:?}", &caps[..5]);
}
