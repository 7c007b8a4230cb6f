use msle_core::lattice::{build_rect_domain, EdgeLocator, Mass};
use msle_lab::runs;
use msle_lab::stats;

fn main() {
    // 31x31 at mesh 1/32: source at the quarter point of the bottom edge
    let dom = build_rect_domain(31, 31, 1.0 / 32.0,
        EdgeLocator::Bottom(8), EdgeLocator::TopCenter, (16, 16)).unwrap();
    let rad = dom.bound_radius();
    let m = 1.0 / rad;
    println!("R = {rad:.4}, m = {m:.4}, m*mesh = {:.4}", m / 32.0);
    for (label, mass) in [("m=0", Mass::ZERO), ("mR=1", Mass(m)), ("mR=2", Mass(2.0 * m))] {
        let d = runs::batch_drivings(&dom, mass, 4000, 3, 0, 0.15, 0.55).unwrap();
        let ms = runs::marginals(&d, &[0.25, 0.5]);
        for (k, t) in [0.25, 0.5].iter().enumerate() {
            let xs = &ms.values[k];
            println!(
                "{label}: mean xi({t}) = {:+.4} +- {:.4} (n = {}), var = {:.4}",
                stats::mean(xs), stats::stderr_of_mean(xs), xs.len(), stats::variance(xs)
            );
        }
    }
}
