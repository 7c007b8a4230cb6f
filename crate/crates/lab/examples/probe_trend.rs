use msle_core::lattice::{build_rect_domain, EdgeLocator, Mass};
use msle_lab::{runs, stats};

fn main() {
    for n in [15usize, 31, 63] {
        let mesh = 1.0 / (n as f64 + 1.0);
        let a_col = ((n + 1) / 4) as i32;
        let c = ((n + 1) / 2) as i32;
        let dom = build_rect_domain(n, n, mesh, EdgeLocator::Bottom(a_col),
            EdgeLocator::TopCenter, (c, c)).unwrap();
        let m = 1.0 / dom.bound_radius();
        let nsamp = 20000;
        let d0 = runs::batch_drivings(&dom, Mass::ZERO, nsamp, 21, 0, 0.15, 0.26).unwrap();
        let dm = runs::batch_drivings(&dom, Mass(m), nsamp, 22, 500_000, 0.15, 0.26).unwrap();
        let m0 = runs::marginals(&d0, &[0.0625, 0.25]);
        let mm = runs::marginals(&dm, &[0.0625, 0.25]);
        for (k, t) in [0.0625, 0.25].iter().enumerate() {
            let mu0 = stats::mean(&m0.values[k]);
            let mum = stats::mean(&mm.values[k]);
            let se = (stats::variance(&m0.values[k]) / m0.values[k].len() as f64
                + stats::variance(&mm.values[k]) / mm.values[k].len() as f64).sqrt();
            println!(
                "n={n}: t={t}: E0 = {mu0:+.5}, Em = {mum:+.5}, diff = {:+.5} +- {se:.5} => lambda {:+.4}",
                mum - mu0, (mum - mu0) / (2.0 * t)
            );
        }
    }
}
