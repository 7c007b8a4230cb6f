//! Exact discrete potential theory for walks with killing.
//!
//! All quantities reduce to solves of `x - (q/4) A x = rhs` on the interior,
//! with `q = 1 - m^2 mesh^2`. Conventions for path weights: a path carries
//! `(q/4)` per *interior* edge; first/last edges incident to a boundary
//! vertex are free. Partition functions rooted at a boundary vertex sum over
//! every edge of that vertex into the current interior, which is what makes
//! the observable a martingale under curve growth.

use thiserror::Error;

use crate::lattice::{GridDomain, Mass, Vertex};
use crate::solve::{SolveError, WalkSystem};

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("killing rate too large for this mesh: m * mesh = {0:.4} > 1/2")]
    MassTooLarge(f64),
    #[error("vertex {0:?} is not interior")]
    NotInterior(Vertex),
    #[error("boundary data length {got} does not match edge count {expected}")]
    DataLength { got: usize, expected: usize },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Real values indexed by the interior vertices of a fixed domain, in the
/// domain's canonical vertex order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn at(&self, dom: &GridDomain, v: Vertex) -> Option<f64> {
        dom.index_of(v).map(|i| self.values[i as usize])
    }
}

/// Either a value of the observable or the signal that the probe vertex has
/// been hit or disconnected and the observable is frozen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObservableValue {
    Value(f64),
    Stopped,
}

fn check_mass(dom: &GridDomain, m: Mass) -> Result<f64, PotentialError> {
    if !m.admissible(dom.mesh()) {
        return Err(PotentialError::MassTooLarge(m.0 * dom.mesh()));
    }
    Ok(m.q(dom.mesh()))
}

const FIELD_TOL: f64 = 1e-12;

/// Solve the killed-walk Dirichlet problem: `H(v) = (q/4) * sum H(nbr)` with
/// non-interior neighbor values read from `boundary_data` (one entry per
/// boundary edge, zero where absent).
pub fn solve_massive_harmonic(
    dom: &GridDomain,
    m: Mass,
    boundary_data: &[f64],
) -> Result<ScalarField, PotentialError> {
    let q = check_mass(dom, m)?;
    if boundary_data.len() != dom.boundary_edges().len() {
        return Err(PotentialError::DataLength {
            got: boundary_data.len(),
            expected: dom.boundary_edges().len(),
        });
    }
    let mut rhs = vec![0.0; dom.len()];
    for (e, &val) in dom.boundary_edges().iter().zip(boundary_data) {
        if val != 0.0 {
            let i = dom.index_of(e.inner).expect("edge inner is interior");
            rhs[i as usize] += (q / 4.0) * val;
        }
    }
    let scale = boundary_data.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let sys = WalkSystem::from_domain(dom, q);
    let values = sys.solve(&rhs, FIELD_TOL * scale.max(1e-300), None)?;
    Ok(ScalarField { values })
}

/// Walk partition function `g(z) = Z(w, z)` rooted at an interior vertex:
/// the unique solution of `g(z) = 1_{z=w} + (q/4) * sum g(nbr)`.
pub fn green_field(dom: &GridDomain, m: Mass, w: Vertex) -> Result<ScalarField, PotentialError> {
    let q = check_mass(dom, m)?;
    let i = dom.index_of(w).ok_or(PotentialError::NotInterior(w))?;
    let mut rhs = vec![0.0; dom.len()];
    rhs[i as usize] = 1.0;
    let sys = WalkSystem::from_domain(dom, q);
    let values = sys.solve(&rhs, FIELD_TOL, None)?;
    Ok(ScalarField { values })
}

/// Hitting weight of the target edge: `h(v) = Z(v, b)`, the mass of walks
/// from `v` that leave the domain across the marked target edge. The final
/// crossing edge is free, so `h` solves the same system as the partition
/// function rooted at the target's interior endpoint.
pub fn hit_b_field(dom: &GridDomain, m: Mass) -> Result<ScalarField, PotentialError> {
    green_field(dom, m, dom.b_edge().inner)
}

/// Partition function rooted at the source (or target) boundary vertex,
/// evaluated at every interior vertex. The root's entry edges are free and
/// all edges of the root vertex into the interior contribute.
pub fn boundary_rooted_field(
    dom: &GridDomain,
    m: Mass,
    from_a: bool,
) -> Result<ScalarField, PotentialError> {
    let q = check_mass(dom, m)?;
    let root = if from_a {
        dom.a_edge().outer
    } else {
        dom.b_edge().outer
    };
    let mut rhs = vec![0.0; dom.len()];
    for i in dom.interior_neighbors_of(root) {
        rhs[i as usize] += 1.0;
    }
    let sys = WalkSystem::from_domain(dom, q);
    let values = sys.solve(&rhs, FIELD_TOL, None)?;
    Ok(ScalarField { values })
}

/// Query point for boundary-rooted partition functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZTarget {
    Interior(Vertex),
    /// The other marked edge: `b` when rooted at `a`, `a` when rooted at `b`.
    OtherMark,
}

/// Scalar partition function from a marked boundary vertex to an interior
/// vertex or to the other marked edge.
pub fn z_boundary_to_point(
    dom: &GridDomain,
    m: Mass,
    from_a: bool,
    z: ZTarget,
) -> Result<f64, PotentialError> {
    let field = boundary_rooted_field(dom, m, from_a)?;
    match z {
        ZTarget::Interior(v) => field
            .at(dom, v)
            .ok_or(PotentialError::NotInterior(v)),
        ZTarget::OtherMark => {
            let inner = if from_a {
                dom.b_edge().inner
            } else {
                dom.a_edge().inner
            };
            Ok(field.at(dom, inner).expect("edge inner is interior"))
        }
    }
}

/// Partition-function data of a slit domain rooted at its tip, reused across
/// observable evaluations: `field(v) = Z(tip, v)` and `at_target = Z(tip, b)`.
#[derive(Debug, Clone)]
pub struct TipField {
    pub field: ScalarField,
    pub at_target: f64,
}

pub fn tip_field(dom: &GridDomain, m: Mass) -> Result<TipField, PotentialError> {
    let field = boundary_rooted_field(dom, m, true)?;
    let at_target = field
        .at(dom, dom.b_edge().inner)
        .expect("edge inner is interior");
    Ok(TipField { field, at_target })
}

/// Martingale observable on a slit domain:
/// `M(v) = Z_t(tip, v) / Z_t(tip, b) * Z_base(o, b)`, with the normalization
/// computed on the base domain without killing. Returns `Stopped` when `v`
/// was hit by the slit or disconnected from the target.
pub fn observable(
    dom_t: &GridDomain,
    base: &GridDomain,
    m: Mass,
    v: Vertex,
) -> Result<ObservableValue, PotentialError> {
    if dom_t.index_of(v).is_none() {
        return Ok(ObservableValue::Stopped);
    }
    let norm = hit_b_field(base, Mass::ZERO)?
        .at(base, base.origin())
        .expect("origin is interior");
    let tf = tip_field(dom_t, m)?;
    let num = tf.field.at(dom_t, v).unwrap();
    Ok(ObservableValue::Value(num / tf.at_target * norm))
}

/// End point of a partition function: interior vertex or a marked edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Endpoint {
    Interior(Vertex),
    Source,
    Target,
}

fn rooted_field(dom: &GridDomain, m: Mass, e: Endpoint) -> Result<ScalarField, PotentialError> {
    match e {
        Endpoint::Interior(v) => green_field(dom, m, v),
        Endpoint::Source => boundary_rooted_field(dom, m, true),
        Endpoint::Target => boundary_rooted_field(dom, m, false),
    }
}

fn eval_field(dom: &GridDomain, f: &ScalarField, e: Endpoint) -> f64 {
    match e {
        Endpoint::Interior(v) => f.at(dom, v).expect("interior vertex"),
        Endpoint::Source => dom
            .interior_neighbors_of(dom.a_edge().outer)
            .iter()
            .map(|&i| f.values[i as usize])
            .sum(),
        Endpoint::Target => dom
            .interior_neighbors_of(dom.b_edge().outer)
            .iter()
            .map(|&i| f.values[i as usize])
            .sum(),
    }
}

/// Residual of the identity relating killed and free partition functions:
/// `(1 - m^2 d^2) Zm(w,z) = Z(w,z) - m^2 d^2 * sum_v Z(w,v) Zm(v,z)`.
pub fn check_resolvent_identity(
    dom: &GridDomain,
    m: Mass,
    w: Endpoint,
    z: Endpoint,
) -> Result<f64, PotentialError> {
    let d = dom.mesh();
    let m2d2 = m.0 * m.0 * d * d;
    let z0_from_w = rooted_field(dom, Mass::ZERO, w)?;
    let zm_from_z = rooted_field(dom, m, z)?;

    let zm_wz = eval_field(dom, &zm_from_z, w);
    let z0_wz = eval_field(dom, &z0_from_w, z);
    let cross: f64 = z0_from_w
        .values
        .iter()
        .zip(&zm_from_z.values)
        .map(|(a, b)| a * b)
        .sum();

    let lhs = (1.0 - m2d2) * zm_wz;
    let rhs = z0_wz - m2d2 * cross;
    Ok((lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_rect_domain, EdgeLocator};
    use approx::assert_relative_eq;

    fn dom_1x1() -> GridDomain {
        build_rect_domain(
            1,
            1,
            1.0,
            EdgeLocator::LeftCenter,
            EdgeLocator::RightCenter,
            (1, 1),
        )
        .unwrap()
    }

    /// 2x1 strip, source on the far left, target on the right; interior
    /// vertices u = (1,1), v = (2,1).
    fn dom_2x1() -> GridDomain {
        build_rect_domain(
            2,
            1,
            1.0,
            EdgeLocator::Left(1),
            EdgeLocator::Right(1),
            (1, 1),
        )
        .unwrap()
    }

    #[test]
    fn harmonic_zero_data() {
        let d = dom_1x1();
        let f = solve_massive_harmonic(&d, Mass(0.3), &vec![0.0; 4]).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn harmonic_single_cell() {
        let d = dom_1x1();
        let mut data = vec![0.0; 4];
        data[0] = 1.0;
        let f = solve_massive_harmonic(&d, Mass::ZERO, &data).unwrap();
        assert_relative_eq!(f.values[0], 0.25, epsilon = 1e-14);
    }

    #[test]
    fn harmonic_strip() {
        let d = dom_2x1();
        // data 1 on the single edge entering v = (2,1) from the right
        let data: Vec<f64> = d
            .boundary_edges()
            .iter()
            .map(|e| {
                if e.inner == (2, 1) && e.outer == (3, 1) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let f = solve_massive_harmonic(&d, Mass::ZERO, &data).unwrap();
        assert_relative_eq!(f.at(&d, (2, 1)).unwrap(), 4.0 / 15.0, epsilon = 1e-13);
        assert_relative_eq!(f.at(&d, (1, 1)).unwrap(), 1.0 / 15.0, epsilon = 1e-13);
    }

    #[test]
    fn green_single_cell_is_one() {
        let d = dom_1x1();
        for m in [0.0, 0.2, 0.5] {
            let g = green_field(&d, Mass(m), (1, 1)).unwrap();
            assert_relative_eq!(g.values[0], 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn green_strip_closed_forms() {
        let d = dom_2x1();
        let g = green_field(&d, Mass::ZERO, (1, 1)).unwrap();
        assert_relative_eq!(g.at(&d, (1, 1)).unwrap(), 16.0 / 15.0, epsilon = 1e-13);
        assert_relative_eq!(g.at(&d, (2, 1)).unwrap(), 4.0 / 15.0, epsilon = 1e-13);

        let m = Mass(0.4);
        let q = m.q(1.0);
        let g = green_field(&d, m, (1, 1)).unwrap();
        assert_relative_eq!(
            g.at(&d, (1, 1)).unwrap(),
            1.0 / (1.0 - q * q / 16.0),
            epsilon = 1e-13
        );
    }

    #[test]
    fn hit_field_closed_forms() {
        let d = dom_1x1();
        for m in [0.0, 0.5] {
            let h = hit_b_field(&d, Mass(m)).unwrap();
            assert_relative_eq!(h.values[0], 1.0, epsilon = 1e-14);
        }
        let d = dom_2x1();
        let h = hit_b_field(&d, Mass::ZERO).unwrap();
        assert_relative_eq!(h.at(&d, (2, 1)).unwrap(), 16.0 / 15.0, epsilon = 1e-13);
        assert_relative_eq!(h.at(&d, (1, 1)).unwrap(), 4.0 / 15.0, epsilon = 1e-13);

        let m = Mass(0.45);
        let q = m.q(1.0);
        let h = hit_b_field(&d, m).unwrap();
        assert_relative_eq!(
            h.at(&d, (2, 1)).unwrap(),
            1.0 / (1.0 - q * q / 16.0),
            epsilon = 1e-13
        );
        assert_relative_eq!(
            h.at(&d, (1, 1)).unwrap(),
            (q / 4.0) / (1.0 - q * q / 16.0),
            epsilon = 1e-13
        );
    }

    #[test]
    fn z_source_to_target() {
        let d = dom_1x1();
        for m in [0.0, 0.3, 0.5] {
            let z = z_boundary_to_point(&d, Mass(m), true, ZTarget::OtherMark).unwrap();
            assert_relative_eq!(z, 1.0, epsilon = 1e-14);
        }
        let d = dom_2x1();
        let z = z_boundary_to_point(&d, Mass::ZERO, true, ZTarget::OtherMark).unwrap();
        assert_relative_eq!(z, 4.0 / 15.0, epsilon = 1e-13);
    }

    #[test]
    fn z_nonincreasing_in_mass() {
        let d = build_rect_domain(
            4,
            5,
            0.25,
            EdgeLocator::BottomCenter,
            EdgeLocator::TopCenter,
            (2, 3),
        )
        .unwrap();
        let mut prev = f64::INFINITY;
        for m in [0.0, 0.4, 0.8, 1.2, 2.0] {
            let z = z_boundary_to_point(&d, Mass(m), true, ZTarget::OtherMark).unwrap();
            assert!(z <= prev + 1e-14, "Z must be nonincreasing in the mass");
            assert!(z > 0.0);
            prev = z;
        }
    }

    #[test]
    fn observable_single_cell_is_one() {
        let d = dom_1x1();
        match observable(&d, &d, Mass::ZERO, (1, 1)).unwrap() {
            ObservableValue::Value(v) => assert_relative_eq!(v, 1.0, epsilon = 1e-13),
            ObservableValue::Stopped => panic!("unexpected stop"),
        }
    }

    #[test]
    fn observable_matches_definition_at_time_zero() {
        let d = build_rect_domain(
            3,
            3,
            1.0,
            EdgeLocator::BottomCenter,
            EdgeLocator::TopCenter,
            (2, 2),
        )
        .unwrap();
        let o = d.origin();
        let za_o = z_boundary_to_point(&d, Mass::ZERO, true, ZTarget::Interior(o)).unwrap();
        let zo_b = hit_b_field(&d, Mass::ZERO).unwrap().at(&d, o).unwrap();
        let za_b = z_boundary_to_point(&d, Mass::ZERO, true, ZTarget::OtherMark).unwrap();
        match observable(&d, &d, Mass::ZERO, o).unwrap() {
            ObservableValue::Value(v) => {
                assert_relative_eq!(v, za_o * zo_b / za_b, epsilon = 1e-12)
            }
            ObservableValue::Stopped => panic!("unexpected stop"),
        }
    }

    #[test]
    fn resolvent_identity_masses() {
        // m = 0 degenerates to 0 = 0 exactly
        let d = dom_1x1();
        let r = check_resolvent_identity(&d, Mass::ZERO, Endpoint::Source, Endpoint::Target)
            .unwrap();
        assert_eq!(r, 0.0);

        // single cell: (1-m^2) * 1 = 1 - m^2 * 1 * 1
        let r = check_resolvent_identity(&d, Mass(0.5), Endpoint::Source, Endpoint::Target)
            .unwrap();
        assert!(r < 1e-14);

        let d = build_rect_domain(
            4,
            4,
            1.0,
            EdgeLocator::Bottom(1),
            EdgeLocator::Top(3),
            (2, 2),
        )
        .unwrap();
        for (w, z) in [
            (Endpoint::Source, Endpoint::Target),
            (Endpoint::Source, Endpoint::Interior((2, 3))),
            (Endpoint::Interior((1, 1)), Endpoint::Interior((4, 4))),
            (Endpoint::Target, Endpoint::Interior((1, 4))),
        ] {
            let r = check_resolvent_identity(&d, Mass(0.3), w, z).unwrap();
            assert!(r < 1e-9, "residual {r} for {w:?} -> {z:?}");
        }
    }

    #[test]
    fn green_symmetry() {
        let d = build_rect_domain(
            5,
            4,
            1.0,
            EdgeLocator::BottomCenter,
            EdgeLocator::TopCenter,
            (3, 2),
        )
        .unwrap();
        let m = Mass(0.25);
        let g_u = green_field(&d, m, (2, 3)).unwrap();
        let g_v = green_field(&d, m, (4, 1)).unwrap();
        let a = g_u.at(&d, (4, 1)).unwrap();
        let b = g_v.at(&d, (2, 3)).unwrap();
        assert!((a - b).abs() < 1e-10);
    }
}
