use msle_core::conformal::{Cx, Rect, RectMap};
use msle_core::drift::{helmholtz_solve, pq_fields, MeshState};
use std::f64::consts::PI;

fn main() {
    // quarter-source unit square, mR = 1
    let map = RectMap::new(
        Rect { x0: 0.0, y0: 0.0, width: 1.0, height: 1.0 },
        (0.25, 0.0), (0.5, 1.0), (0.5, 0.5),
    ).unwrap();
    let rad = 0.5f64 * 2.0f64.sqrt();
    let m = 1.0 / rad;

    // fine quadrature of the massless integrand (1/pi) sin^2(arg phi)
    let nq = 768;
    let h = 1.0 / nq as f64;
    let mut fine = 0.0;
    for j in 0..nq {
        for i in 0..nq {
            let p = Cx::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
            let phi = map.forward(p).unwrap();
            fine += phi.im * phi.im / (PI * phi.norm_sqr());
        }
    }
    fine *= h * h;
    println!("fine Int P K0 dA = {fine:.5}");

    for n in [32usize, 64, 128] {
        let state = MeshState::new(&map, n).unwrap();
        let (p, _q) = pq_fields(&state);
        let mut k0 = vec![0.0; p.len()];
        for i in 0..p.len() {
            if state.active[i] { k0[i] = state.phi(i).im; }
        }
        let pk0: Vec<f64> = p.iter().zip(&k0).map(|(a, b)| a * b).collect();
        let i0 = state.integrate(&pk0);
        let gp = helmholtz_solve(&state, m, &p).unwrap();
        let pm: Vec<f64> = p.iter().zip(&gp).map(|(a, b)| a - m * m * b).collect();
        let pmk: Vec<f64> = pm.iter().zip(&k0).map(|(a, b)| a * b).collect();
        let im = state.integrate(&pmk);
        println!("mesh {n}: Int P K0 = {i0:.5}, Int P^m K0 = {im:.5}, m^2 Int P^m K0 = {:.5}", m * m * im);
    }
    println!("lattice target: m^2 Int P^m K0 = 0.5586, so Int P^m K0 = 0.2622");
}
