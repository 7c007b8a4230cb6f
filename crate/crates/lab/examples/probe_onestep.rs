use msle_core::conformal::{Cx, RectMap};
use msle_core::lattice::{build_rect_domain, slit_component, EdgeLocator, LatticeCurve, Mass};
use msle_core::potential::{z_boundary_to_point, ZTarget};
use msle_core::sampler::laplacian_walk_step;

fn main() {
    let n = 63usize;
    let mesh = 1.0 / 64.0;
    let a_col = 16i32; // x = 0.25
    let dom = build_rect_domain(n, n, mesh, EdgeLocator::Bottom(a_col), EdgeLocator::TopCenter,
        (32, 32)).unwrap();
    let rad = dom.bound_radius();
    let m = 1.0 / rad;
    println!("m = {m:.4}");
    let map = RectMap::for_domain(&dom).unwrap();

    // exact one-step distribution after the deterministic entry
    let entry = LatticeCurve::new(vec![(a_col, 0), (a_col, 1)]).unwrap();
    let dom1 = slit_component(&dom, &entry).unwrap();
    let law0 = laplacian_walk_step(&dom1, Mass::ZERO).unwrap();
    let lawm = laplacian_walk_step(&dom1, Mass(m)).unwrap();

    // chart image of the two-step tip: curve [a,(a_col,1),w] has its tip at w;
    // xi-proxy = Re phi(w nudged to cell center), capacity ~ (Im phi)^2... use
    // the driving of the exact 3-point curve
    let mut drift0 = 0.0;
    let mut driftm = 0.0;
    let mut cap = 0.0;
    for (w, p0) in &law0.moves {
        let pm = lawm.moves.iter().find(|(v, _)| v == w).map(|(_, p)| *p).unwrap_or(0.0);
        let img = map.forward(Cx::new(w.0 as f64 * mesh, w.1 as f64 * mesh)).unwrap();
        drift0 += p0 * img.re;
        driftm += pm * img.re;
        cap += p0 * 0.25 * img.im * img.im;
    }
    println!("E0[xi after step] = {drift0:+.6}");
    println!("Em[xi after step] = {driftm:+.6}");
    println!("difference = {:+.6}, mean capacity = {cap:.6}", driftm - drift0);
    println!("implied lambda = {:+.4}", (driftm - drift0) / (2.0 * cap));

    // instrumented N-shift
    for col in [a_col - 1, a_col, a_col + 1] {
        let d = build_rect_domain(n, n, mesh, EdgeLocator::Bottom(col), EdgeLocator::TopCenter,
            (32, 32)).unwrap();
        let z0 = z_boundary_to_point(&d, Mass::ZERO, true, ZTarget::OtherMark).unwrap();
        let zm = z_boundary_to_point(&d, Mass(m), true, ZTarget::OtherMark).unwrap();
        println!("a at col {col}: Z0 = {z0:.6e}, Zm = {zm:.6e}, N = {:.6}", z0 / zm);
    }
}
