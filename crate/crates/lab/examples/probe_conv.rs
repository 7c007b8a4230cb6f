use msle_core::conformal::{Rect, RectMap};
use msle_core::drift::{drift_lambda, MeshState};

fn main() {
    let map = RectMap::new(
        Rect { x0: 0.0, y0: 0.0, width: 1.0, height: 1.0 },
        (0.25, 0.0), (0.5, 1.0), (0.5, 0.5),
    ).unwrap();
    let m = 2.0f64 / 2.0f64.sqrt();
    for n in [48usize, 96, 192, 288] {
        let state = MeshState::new(&map, n).unwrap();
        let r = drift_lambda(&state, m).unwrap();
        println!("mesh {n}: lambda = {:+.5}, N = {:.5}, int_qk = {:+.6}", r.lambda, r.n_m, r.int_qk);
    }
}
