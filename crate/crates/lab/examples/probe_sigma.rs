use msle_core::lattice::{build_rect_domain, EdgeLocator, Mass};
use msle_core::rng;
use msle_core::sampler::{enumerate_tiny, sample_mlerw};

fn main() {
    let dom = build_rect_domain(2, 2, 1.0, EdgeLocator::Bottom(1), EdgeLocator::Top(2), (1, 1)).unwrap();
    let m = Mass(0.3);
    let law = enumerate_tiny(&dom, m).unwrap();
    println!("{} curves, probs: {:?}", law.curves.len(),
        law.curves.iter().map(|(_, p)| format!("{p:.6}")).collect::<Vec<_>>());
    let n = 1_000_000usize;
    for seed in [1u64, 2, 3, 4, 5] {
        let mut r = rng::stream(seed, 0);
        let mut counts = vec![0usize; law.curves.len()];
        for _ in 0..n {
            let c = sample_mlerw(&dom, m, &mut r).unwrap();
            let idx = law.curves.iter().position(|(cv, _)| cv.vertices == c.vertices).unwrap();
            counts[idx] += 1;
        }
        let zs: Vec<String> = law.curves.iter().zip(&counts).map(|((_, p), &k)| {
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            format!("{:+.2}", (k as f64 / n as f64 - p) / sigma)
        }).collect();
        println!("seed {seed}: z = {zs:?}");
    }
}
