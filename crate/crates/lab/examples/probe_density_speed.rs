use std::time::Instant;
use msle_core::lattice::{build_rect_domain, EdgeLocator, Mass};
use msle_lab::runs;

fn main() {
    let n = 32usize;
    let mesh = 1.0 / 33.0;
    let dom = build_rect_domain(n, n, mesh, EdgeLocator::BottomCenter, EdgeLocator::TopCenter, (16, 16)).unwrap();
    let m = Mass(1.0 / dom.bound_radius());
    let curves = runs::sample_curves(&dom, Mass::ZERO, 200, 1, 0).unwrap();
    let lens: Vec<usize> = curves.iter().map(|c| c.vertices.len()).collect();
    println!("mean curve length: {}", lens.iter().sum::<usize>() / lens.len());
    let t0 = Instant::now();
    let d = runs::density_batch(&dom, m, &curves).unwrap();
    println!("200 densities: {:?} ({:.1} ms each)", t0.elapsed(), t0.elapsed().as_millis() as f64 / 200.0);
    println!("sample log densities: {:?}", &d[..3]);
}
