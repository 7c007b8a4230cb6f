use msle_core::conformal::{Cx, RectMap};
use msle_core::lattice::{build_rect_domain, slit_component, EdgeLocator, LatticeCurve, Mass, Vertex};
use msle_core::potential::hit_b_field;
use msle_core::sampler::laplacian_walk_step;

// exact expected chart position of the tip after k growth steps, by DFS over
// all k-step curves with exact step probabilities
fn expected_tip(dom: &msle_core::lattice::GridDomain, map: &RectMap, m: Mass, k_max: usize) -> Vec<(f64, f64)> {
    let mesh = dom.mesh();
    let a_in = dom.a_edge().inner;
    let mut acc = vec![(0.0f64, 0.0f64); k_max + 1]; // (E[Re phi(tip)], E[capacity-proxy])
    fn dfs(
        dom: &msle_core::lattice::GridDomain,
        map: &RectMap,
        m: Mass,
        prefix: &mut Vec<Vertex>,
        prob: f64,
        depth: usize,
        k_max: usize,
        acc: &mut Vec<(f64, f64)>,
        mesh: f64,
    ) {
        let tip = *prefix.last().unwrap();
        let img = map.forward(Cx::new(tip.0 as f64 * mesh, tip.1 as f64 * mesh)).unwrap();
        acc[depth].0 += prob * img.re;
        acc[depth].1 += prob * 0.25 * img.im * img.im;
        if depth == k_max || prob < 1e-12 {
            return;
        }
        let curve = LatticeCurve { vertices: prefix.clone(), simple: true };
        let dom_t = match slit_component(dom, &curve) {
            Ok(d) => d,
            Err(_) => return,
        };
        if tip == dom.b_edge().inner {
            return;
        }
        let law = match laplacian_walk_step(&dom_t, m) {
            Ok(l) => l,
            Err(_) => return,
        };
        for (w, p) in &law.moves {
            prefix.push(*w);
            dfs(dom, map, m, prefix, prob * p, depth + 1, k_max, acc, mesh);
            prefix.pop();
        }
    }
    let mut prefix = vec![dom.a_edge().outer, a_in];
    dfs(dom, map, m, &mut prefix, 1.0, 0, k_max, &mut acc, mesh);
    acc
}

fn main() {
    let n = 15usize;
    let mesh = 1.0 / 16.0;
    let a_col = 4i32;
    let dom = build_rect_domain(n, n, mesh, EdgeLocator::Bottom(a_col), EdgeLocator::TopCenter, (8, 8)).unwrap();
    let m = 1.0 / dom.bound_radius();
    let map = RectMap::for_domain(&dom).unwrap();
    let _ = hit_b_field(&dom, Mass(m)).unwrap();
    let k_max = 7;
    let e0 = expected_tip(&dom, &map, Mass::ZERO, k_max);
    let em = expected_tip(&dom, &map, Mass(m), k_max);
    println!("k | E0[xi]   Em[xi]   diff      cap0     lambda_hat");
    for k in 0..=k_max {
        let d = em[k].0 - e0[k].0;
        let lam = if e0[k].1 > 0.0 { d / (2.0 * e0[k].1) } else { 0.0 };
        println!("{k} | {:+.5} {:+.5} {:+.6} {:.5} {:+.4}", e0[k].0, em[k].0, d, e0[k].1, lam);
    }
}
