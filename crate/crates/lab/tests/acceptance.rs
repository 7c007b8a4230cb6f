//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! with the measured quantities. Run with `cargo test -p msle-lab --test
//! acceptance` (enabled in the default workspace test run).

use msle_core::conformal::RectMap;
use msle_core::drift::{drift_lambda, hadamard_check, MeshState};
use msle_core::lattice::{
    build_rect_domain, BoundaryEdge, EdgeLocator, GridDomain, LatticeCurve, Mass,
};
use msle_core::rng;
use msle_core::sampler::{
    enumerate_tiny, observable_one_step_expectation, sample_mlerw,
};
use msle_core::sim::SimConfig;
use msle_lab::checks;
use msle_lab::config::{default_config, DomainSpec, ExperimentConfig};
use msle_lab::runs;
use msle_lab::stats;

fn report(criterion: usize, name: &str, passed: bool, detail: &str) {
    println!(
        "criterion {criterion} [{}] {name}: {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "criterion {criterion} {name}: {detail}");
}

/// Criterion 1: exact identities on random domains up to 6x6.
#[test]
fn criterion_1_exact_identities() {
    let r = checks::check_resolvent(701, false).unwrap();
    report(1, "resolvent-identity", r.passed, &r.detail);
    let g = checks::check_green_symmetry(702).unwrap();
    report(1, "green-symmetry", g.passed, &g.detail);
}

/// Criterion 2: sampled curve law vs the enumeration oracle on every domain
/// with at most four interior vertices (rectangles and bent shapes), one
/// million samples each, within four sigma per curve.
#[test]
fn criterion_2_oracle_equivalence() {
    struct Case {
        name: &'static str,
        dom: GridDomain,
    }
    let rect = |cols: usize, rows: usize, a, b| {
        build_rect_domain(cols, rows, 1.0, a, b, (1, 1)).unwrap()
    };
    let bent = |cells: &[(i32, i32)], a: BoundaryEdge, b: BoundaryEdge| {
        GridDomain::from_cells(1.0, cells, a, b, cells[0]).unwrap()
    };
    let cases = vec![
        Case {
            name: "1x1",
            dom: rect(1, 1, EdgeLocator::LeftCenter, EdgeLocator::RightCenter),
        },
        Case {
            name: "2x1",
            dom: rect(2, 1, EdgeLocator::Left(1), EdgeLocator::Right(1)),
        },
        Case {
            name: "1x2",
            dom: rect(1, 2, EdgeLocator::Bottom(1), EdgeLocator::Top(1)),
        },
        Case {
            name: "3x1",
            dom: rect(3, 1, EdgeLocator::Left(1), EdgeLocator::Right(1)),
        },
        Case {
            name: "4x1",
            dom: rect(4, 1, EdgeLocator::Left(1), EdgeLocator::Right(1)),
        },
        Case {
            name: "2x2",
            dom: rect(2, 2, EdgeLocator::Bottom(1), EdgeLocator::Top(2)),
        },
        Case {
            name: "L-tromino",
            dom: bent(
                &[(1, 1), (2, 1), (2, 2)],
                BoundaryEdge {
                    outer: (0, 1),
                    inner: (1, 1),
                },
                BoundaryEdge {
                    outer: (2, 3),
                    inner: (2, 2),
                },
            ),
        },
        Case {
            name: "T-tetromino",
            dom: bent(
                &[(1, 1), (2, 1), (3, 1), (2, 2)],
                BoundaryEdge {
                    outer: (1, 0),
                    inner: (1, 1),
                },
                BoundaryEdge {
                    outer: (2, 3),
                    inner: (2, 2),
                },
            ),
        },
        Case {
            name: "S-tetromino",
            dom: bent(
                &[(1, 1), (2, 1), (2, 2), (3, 2)],
                BoundaryEdge {
                    outer: (0, 1),
                    inner: (1, 1),
                },
                BoundaryEdge {
                    outer: (3, 3),
                    inner: (3, 2),
                },
            ),
        },
    ];
    let n = 1_000_000usize;
    let mut worst = 0.0f64;
    let mut worst_case = String::new();
    for (ci, case) in cases.iter().enumerate() {
        assert!(case.dom.len() <= 4);
        for (mi, &md) in [0.0, 0.3, 0.5].iter().enumerate() {
            let m = Mass(md / case.dom.mesh());
            let law = enumerate_tiny(&case.dom, m).unwrap();
            let mut counts: std::collections::HashMap<Vec<(i32, i32)>, usize> =
                Default::default();
            let mut r = rng::stream(7100 + ci as u64, mi as u64);
            for _ in 0..n {
                let c = sample_mlerw(&case.dom, m, &mut r).unwrap();
                *counts.entry(c.vertices).or_default() += 1;
            }
            for (curve, p) in &law.curves {
                let k = counts.get(&curve.vertices).copied().unwrap_or(0) as f64;
                let sigma = (p * (1.0 - p) / n as f64).sqrt().max(1e-12);
                let dev = (k / n as f64 - p).abs() / sigma;
                if dev > worst {
                    worst = dev;
                    worst_case = format!("{} m*mesh={md}", case.name);
                }
            }
            let total: usize = counts.values().sum();
            assert_eq!(total, n);
        }
    }
    report(
        2,
        "oracle-equivalence",
        worst <= 4.0,
        &format!("max deviation {worst:.2} sigma ({worst_case})"),
    );
}

/// Criterion 3: exact one-step preservation of the observable on 2x2 and 3x3
/// domains at m * mesh in {0, 0.3}, from the entry state and a deeper prefix.
#[test]
fn criterion_3_martingale() {
    let mut worst = 0.0f64;
    for (cols, rows) in [(2usize, 2usize), (3, 3)] {
        let dom = build_rect_domain(
            cols,
            rows,
            1.0,
            EdgeLocator::Bottom(1),
            EdgeLocator::Top(cols as i32),
            (1, 1),
        )
        .unwrap();
        let prefixes = vec![
            LatticeCurve::new(vec![(1, 0), (1, 1)]).unwrap(),
            LatticeCurve::new(vec![(1, 0), (1, 1), (2, 1)]).unwrap(),
        ];
        for prefix in &prefixes {
            for md in [0.0, 0.3] {
                for &v in dom.interior() {
                    if prefix.vertices.contains(&v) {
                        continue;
                    }
                    let (e, now) =
                        observable_one_step_expectation(&dom, prefix, Mass(md), v).unwrap();
                    worst = worst.max((e - now).abs() / now.abs().max(1.0));
                }
            }
        }
    }
    report(
        3,
        "martingale-one-step",
        worst <= 1e-9,
        &format!("max relative defect {worst:.3e}"),
    );
}

/// Criterion 4: density bounds with one constant calibrated on the 8x8 domain
/// and reused on 16x16 and 32x32, ten thousand sampled curves each at mR ~ 1.
#[test]
fn criterion_4_density_bounds() {
    let family = |n: usize| {
        let mesh = 1.0 / (n as f64 + 1.0);
        let c = ((n + 1) / 2) as i32;
        build_rect_domain(
            n,
            n,
            mesh,
            EdgeLocator::BottomCenter,
            EdgeLocator::TopCenter,
            (c, c),
        )
        .unwrap()
    };
    // calibration on the smallest domain from the exact partition ratio
    let dom8 = family(8);
    let r8 = dom8.bound_radius();
    let m8 = Mass(1.0 / r8);
    let ratio = runs::partition_ratio(&dom8, m8).unwrap();
    let c_fit = 1.5 * (-ratio.ln()) / (m8.0 * r8) / (m8.0 * r8);
    println!("criterion 4 calibration: c_fit = {c_fit:.4}");

    // ten thousand sampled curves across the family
    for (n, samples) in [(8usize, 4000usize), (16, 3500), (32, 2500)] {
        let dom = family(n);
        let rad = dom.bound_radius();
        let m = Mass(1.0 / rad);
        let cap = c_fit * (m.0 * rad) * (m.0 * rad);
        let curves = runs::sample_curves(&dom, Mass::ZERO, samples, 400 + n as u64, 0).unwrap();
        let dens = runs::density_batch(&dom, m, &curves).unwrap();
        let max_log = dens.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean_log = dens.iter().sum::<f64>() / dens.len() as f64;
        report(
            4,
            &format!("density-bounds {n}x{n}"),
            max_log <= cap && mean_log >= -cap,
            &format!("max log D = {max_log:.4}, mean log D = {mean_log:.4}, cap = {cap:.4}"),
        );
    }
}

/// Criterion 5: classical-limit marginals at mesh 1/64: KS against N(0, 2t)
/// and variance within ten percent at t in {0.25, 0.5, 1}.
#[test]
fn criterion_5_classical_limit() {
    let cfg = default_config();
    let dom = cfg.domain_at(1.0 / 64.0).unwrap();
    let n = 2000usize;
    let drivings = runs::batch_drivings(&dom, Mass::ZERO, n, 7, 0, 0.08, 1.03).unwrap();
    let ms = runs::marginals(&drivings, &[0.25, 0.5, 1.0]);
    for (k, &t) in ms.t_grid.iter().enumerate() {
        let xs = &ms.values[k];
        assert!(
            xs.len() >= n * 98 / 100,
            "{} of {n} records reach t = {t}",
            xs.len()
        );
        let ks = stats::ks_one_sample(xs, |x| stats::normal_cdf(x, 0.0, (2.0 * t).sqrt()));
        let var = stats::variance(xs);
        report(
            5,
            &format!("KS-vs-normal t={t}"),
            ks.p_value >= 0.01,
            &format!("p = {:.4}, D = {:.4}, n = {}", ks.p_value, ks.statistic, xs.len()),
        );
        report(
            5,
            &format!("variance t={t}"),
            (var - 2.0 * t).abs() <= 0.1 * 2.0 * t,
            &format!("Var = {var:.4} vs 2t = {:.4}", 2.0 * t),
        );
    }
}

/// Criterion 6: drift functional basics and the Hadamard finite-difference
/// residuals on a 128^2 mesh at eps = 1e-4.
#[test]
fn criterion_6_drift_functional() {
    // exact zero without killing
    let cfg = default_config();
    let dom = cfg.domain_at(1.0 / 64.0).unwrap();
    let map = RectMap::for_domain(&dom).unwrap();
    let state = MeshState::new(&map, 96).unwrap();
    let r0 = drift_lambda(&state, 0.0).unwrap();
    report(
        6,
        "lambda-zero-mass",
        r0.lambda == 0.0 && r0.n_m == 1.0,
        &format!("lambda = {:e}, N = {}", r0.lambda, r0.n_m),
    );
    // symmetric start
    let rad = map.rect.bound_radius();
    let rsym = drift_lambda(&state, 1.0 / rad).unwrap();
    report(
        6,
        "lambda-symmetric-start",
        rsym.lambda.abs() <= 1e-6,
        &format!("lambda = {:+.3e}", rsym.lambda),
    );
    // quadratic mass scaling on an asymmetric start
    let quarter = build_rect_domain(
        63,
        63,
        1.0 / 64.0,
        EdgeLocator::Bottom(16),
        EdgeLocator::TopCenter,
        (32, 32),
    )
    .unwrap();
    let amap = RectMap::for_domain(&quarter).unwrap();
    let astate = MeshState::new(&amap, 64).unwrap();
    let masses = [0.05 / rad, 0.1 / rad, 0.2 / rad];
    let vals: Vec<f64> = masses
        .iter()
        .map(|&m| drift_lambda(&astate, m).unwrap().lambda.abs())
        .collect();
    let s1 = (vals[1] / vals[0]).ln() / 2.0f64.ln();
    let s2 = (vals[2] / vals[1]).ln() / 2.0f64.ln();
    report(
        6,
        "lambda-mass-exponent",
        (s1 - 2.0).abs() <= 0.2 && (s2 - 2.0).abs() <= 0.2,
        &format!("fitted exponents {s1:.3}, {s2:.3}"),
    );
    // Hadamard residuals at 128^2
    let hstate = MeshState::new(&map, 128).unwrap();
    let (cl0, ms0) = hadamard_check(&hstate, 0.0, 1e-4, (25, 64), (100, 80)).unwrap();
    report(
        6,
        "hadamard-massless",
        cl0 <= 1e-2 && (ms0 - cl0).abs() == 0.0,
        &format!("classical residual {cl0:.3e}"),
    );
    let (cl, msv) = hadamard_check(&hstate, 1.0 / rad, 1e-4, (25, 64), (100, 80)).unwrap();
    report(
        6,
        "hadamard-massive",
        cl <= 1e-2 && msv <= 1e-2,
        &format!("classical {cl:.3e}, massive {msv:.3e}"),
    );
}

/// Criterion 7: discrete driving marginals against the forward simulation at
/// mR ~ 1 on the quarter-source square family: two-sample KS and mean-drift
/// agreement at the finest mesh, and the mean-gap trend over mesh sizes.
#[test]
fn criterion_7_desk_scale_comparison() {
    let t_grid = [0.25, 0.5];
    let quarter = |n: usize| {
        let mesh = 1.0 / (n as f64 + 1.0);
        build_rect_domain(
            n - 1,
            n - 1,
            mesh,
            EdgeLocator::Bottom((n / 4) as i32),
            EdgeLocator::TopCenter,
            ((n / 2) as i32, (n / 2) as i32),
        )
        .unwrap()
    };
    let dom64 = quarter(64);
    let mass = 1.0 / dom64.bound_radius();
    let map = RectMap::for_domain(&dom64).unwrap();

    // simulated side
    let base = SimConfig {
        mass,
        dt: 1e-3,
        horizon: 0.55,
        stop_radius: Some(0.15),
        mesh_n: 64,
        cadence: 8,
        master_seed: 7007,
        stream: 0,
        drift_tol: 1e-4,
    };
    let n_sim = 2000usize;
    let outs = runs::simulate_batch(&base, &map, n_sim, 90_000_000).unwrap();
    let sim_drivings: Vec<_> = outs.iter().map(|o| o.driving.clone()).collect();
    let sim_ms = runs::marginals(&sim_drivings, &t_grid);

    // mean drift consistency of the simulation itself
    {
        let t = 0.5;
        let mut acc = 0.0;
        for o in &outs {
            let mut integral = 0.0;
            for r in &o.reports {
                if r.t >= t {
                    break;
                }
                integral += r.lambda * (base.dt * base.cadence as f64).min(t - r.t);
            }
            acc += 2.0 * integral;
        }
        let predicted = acc / outs.len() as f64;
        let sim_mean = stats::mean(&sim_ms.values[1]);
        let se = stats::stderr_of_mean(&sim_ms.values[1]);
        report(
            7,
            "sim-drift-consistency",
            (sim_mean - predicted).abs() <= 3.0 * se,
            &format!("mean xi(0.5) = {sim_mean:+.4} vs 2E[int lambda] = {predicted:+.4} (se {se:.4})"),
        );
    }

    // discrete side per mesh size
    let mut gaps: Vec<(usize, f64, f64)> = Vec::new();
    for (idx, (n_lat, n_samp)) in [(16usize, 24_000usize), (32, 24_000), (64, 12_000)]
        .iter()
        .enumerate()
    {
        let dom = quarter(*n_lat);
        let drivings = runs::batch_drivings(
            &dom,
            Mass(mass),
            *n_samp,
            7007,
            (idx as u64 + 1) * 10_000_000,
            0.15,
            0.52,
        )
        .unwrap();
        let ms = runs::marginals(&drivings, &t_grid);
        let t_star = 1usize; // t = 0.5
        let xs = &ms.values[t_star];
        let ys = &sim_ms.values[t_star];
        let gap = (stats::mean(xs) - stats::mean(ys)).abs();
        let se = (stats::variance(xs) / xs.len() as f64 + stats::variance(ys) / ys.len() as f64)
            .sqrt();
        gaps.push((*n_lat, gap, se));

        if *n_lat == 64 {
            for (k, &t) in t_grid.iter().enumerate() {
                let ks = stats::ks_two_sample(&ms.values[k], &sim_ms.values[k]);
                report(
                    7,
                    &format!("two-sample-KS t={t}"),
                    ks.p_value >= 0.01,
                    &format!(
                        "p = {:.4}, D = {:.4} (n = {}, {})",
                        ks.p_value,
                        ks.statistic,
                        ms.values[k].len(),
                        sim_ms.values[k].len()
                    ),
                );
                let g = (stats::mean(&ms.values[k]) - stats::mean(&sim_ms.values[k])).abs();
                let s = (stats::variance(&ms.values[k]) / ms.values[k].len() as f64
                    + stats::variance(&sim_ms.values[k]) / sim_ms.values[k].len() as f64)
                    .sqrt();
                report(
                    7,
                    &format!("mean-drift t={t}"),
                    g <= 3.0 * s,
                    &format!("|gap| = {g:.4} vs 3 se = {:.4}", 3.0 * s),
                );
            }
        }
    }
    let overall = gaps[0].1 > gaps[2].1;
    let slack0 = gaps[0].2.max(gaps[1].2);
    let slack1 = gaps[1].2.max(gaps[2].2);
    let stepwise = gaps[1].1 <= gaps[0].1 + slack0 && gaps[2].1 <= gaps[1].1 + slack1;
    report(
        7,
        "mesh-trend",
        overall && stepwise,
        &format!(
            "gaps at t=0.5: 1/16: {:.4}, 1/32: {:.4}, 1/64: {:.4} (se ~ {:.4})",
            gaps[0].1, gaps[1].1, gaps[2].1, gaps[2].2
        ),
    );
}

/// Criterion 8: integrated squared drift along simulated trajectories is
/// finite and stable across seeds.
#[test]
fn criterion_8_novikov_integrability() {
    let dom = build_rect_domain(
        63,
        63,
        1.0 / 64.0,
        EdgeLocator::Bottom(16),
        EdgeLocator::TopCenter,
        (32, 32),
    )
    .unwrap();
    let mass = 1.0 / dom.bound_radius();
    let map = RectMap::for_domain(&dom).unwrap();
    let base = SimConfig {
        mass,
        dt: 1e-3,
        horizon: 0.3,
        stop_radius: Some(0.15),
        mesh_n: 64,
        cadence: 8,
        master_seed: 808,
        stream: 0,
        drift_tol: 1e-4,
    };
    let outs = runs::simulate_batch(&base, &map, 100, 0).unwrap();
    let cd = base.dt * base.cadence as f64;
    let mut stat: Vec<f64> = outs
        .iter()
        .map(|o| o.reports.iter().map(|r| r.lambda * r.lambda * cd).sum::<f64>())
        .collect();
    stat.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = stat[stat.len() / 2];
    let max = *stat.last().unwrap();
    report(
        8,
        "novikov-integrability",
        max.is_finite() && max <= 2.0 * median,
        &format!("median int lambda^2 dt = {median:.3e}, max = {max:.3e}"),
    );
}

/// The full validation battery also runs under acceptance, with its negative
/// control.
#[test]
fn validation_battery_and_negative_control() {
    let results = checks::run_all(99, false).unwrap();
    for r in &results {
        println!(
            "battery [{}] {}: {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
        assert!(r.passed, "{}: {}", r.name, r.detail);
    }
    let corrupted = checks::check_resolvent(99, true).unwrap();
    assert!(
        !corrupted.passed,
        "negative control must fail: {}",
        corrupted.detail
    );
}
