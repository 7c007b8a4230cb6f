use msle_core::conformal::{Cx, Rect, RectMap};
use msle_core::lattice::{build_rect_domain, EdgeLocator, Mass};
use msle_core::potential::{z_boundary_to_point, ZTarget};

fn log_n_lattice(n: usize, mesh: f64, a_col: i32, m: f64) -> f64 {
    let dom = build_rect_domain(n, n, mesh, EdgeLocator::Bottom(a_col), EdgeLocator::TopCenter,
        (((n + 1) / 2) as i32, ((n + 1) / 2) as i32)).unwrap();
    let z0 = z_boundary_to_point(&dom, Mass::ZERO, true, ZTarget::OtherMark).unwrap();
    let zm = z_boundary_to_point(&dom, Mass(m), true, ZTarget::OtherMark).unwrap();
    (z0 / zm).ln()
}

fn main() {
    for n in [31usize, 63] {
        let mesh = 1.0 / (n as f64 + 1.0);
        let rad = 0.5f64 * 2.0f64.sqrt() * (n as f64 * mesh);
        let m = 1.0 / rad;
        let a_col = ((n + 1) / 4) as i32; // quarter position
        // chart derivative |phi'(a)| of the unit-square map with a at x = 1/4
        let map = RectMap::new(
            Rect { x0: mesh / 2.0, y0: mesh / 2.0, width: n as f64 * mesh, height: n as f64 * mesh },
            (a_col as f64 * mesh, mesh / 2.0),
            (((n + 1) / 2) as f64 * mesh, mesh / 2.0 + n as f64 * mesh),
            (((n + 1) / 2) as f64 * mesh, mesh / 2.0 + 0.5 * n as f64 * mesh),
        ).unwrap();
        let eps = 0.3 * mesh;
        let xa = a_col as f64 * mesh;
        let y0 = mesh / 2.0;
        let dphi = (map.forward(Cx::new(xa + eps, y0)).unwrap().re
            - map.forward(Cx::new(xa - eps, y0)).unwrap().re) / (2.0 * eps);
        // lattice N with the source moved one cell left/right
        let lp = log_n_lattice(n, mesh, a_col + 1, m);
        let lm = log_n_lattice(n, mesh, a_col - 1, m);
        let l0 = log_n_lattice(n, mesh, a_col, m);
        let lambda = -(lp - lm) / (2.0 * dphi * mesh);
        println!(
            "n={n}: log N = {l0:.5} (N = {:.5}), phi'(a) = {dphi:.4}, lattice lambda = {lambda:+.5}",
            l0.exp()
        );
    }
}
