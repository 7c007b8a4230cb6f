//! Conformal maps between rectangles and the upper half-plane, vertical-slit
//! chains, and Loewner driving-function extraction under half-plane-capacity
//! parametrization.
//!
//! The rectangle map goes through the Jacobi elliptic sine evaluated by theta
//! series (nome computed directly from the aspect ratio), composed with a
//! real Moebius map sending the marked source to 0 and the marked target to
//! infinity, and a dilation normalizing the origin height to one. The slit
//! hull of a curve is discretized by elementary vertical-slit maps
//! `g(z) = xi + sqrt((z - xi)^2 + h^2)` of capacity `h^2 / 4` each.

use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

use crate::lattice::{GridDomain, LatticeCurve};

pub type Cx = Complex64;

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error("aspect ratio {0:.4} outside [0.1, 10]")]
    AspectOutOfRange(f64),
    #[error("marked point {0:?} is not on the rectangle boundary")]
    MarkOffBoundary((f64, f64)),
    #[error("marked point {0:?} sits on a corner")]
    MarkOnCorner((f64, f64)),
    #[error("source and target marks coincide")]
    CoincidentMarks,
    #[error("normalization point is not strictly inside the rectangle")]
    OriginOutside,
    #[error("point maps outside the closed half-plane (Im = {0:.3e})")]
    NotInHalfPlane(f64),
    #[error("point lies on a slit (chain position {0})")]
    OnSlit(usize),
    #[error("degenerate extraction step at curve point {0} (Im = {1:.3e})")]
    DegenerateStep(usize, f64),
    #[error("domain is not rectangular")]
    NotRectangular,
    #[error("target mark maps too close to the source chart; refine the marks")]
    TargetTooClose,
}

// ---------------------------------------------------------------------------
// theta functions and elliptic helpers
// ---------------------------------------------------------------------------

const THETA_MAX_TERMS: usize = 64;

fn theta1(v: Cx, q: f64) -> Cx {
    let mut sum = Cx::new(0.0, 0.0);
    let mut sign = 1.0;
    for n in 0..THETA_MAX_TERMS {
        let e = (n as f64 + 0.5) * (n as f64 + 0.5);
        let coeff = sign * q.powf(e);
        let term = coeff * ((2 * n + 1) as f64 * v).sin();
        sum += term;
        if term.norm() <= 1e-18 * (1.0 + sum.norm()) && n > 1 {
            break;
        }
        sign = -sign;
    }
    2.0 * sum
}

fn theta2(v: Cx, q: f64) -> Cx {
    let mut sum = Cx::new(0.0, 0.0);
    for n in 0..THETA_MAX_TERMS {
        let e = (n as f64 + 0.5) * (n as f64 + 0.5);
        let term = q.powf(e) * ((2 * n + 1) as f64 * v).cos();
        sum += term;
        if term.norm() <= 1e-18 * (1.0 + sum.norm()) && n > 1 {
            break;
        }
    }
    2.0 * sum
}

fn theta3(v: Cx, q: f64) -> Cx {
    let mut sum = Cx::new(1.0, 0.0);
    for n in 1..THETA_MAX_TERMS {
        let term = 2.0 * q.powi((n * n) as i32) * (2.0 * n as f64 * v).cos();
        sum += term;
        if term.norm() <= 1e-18 * sum.norm() && n > 1 {
            break;
        }
    }
    sum
}

fn theta4(v: Cx, q: f64) -> Cx {
    let mut sum = Cx::new(1.0, 0.0);
    let mut sign = -1.0;
    for n in 1..THETA_MAX_TERMS {
        let term = 2.0 * sign * q.powi((n * n) as i32) * (2.0 * n as f64 * v).cos();
        sum += term;
        if term.norm() <= 1e-18 * sum.norm() && n > 1 {
            break;
        }
        sign = -sign;
    }
    sum
}

fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..64 {
        if (a - b).abs() <= 1e-16 * a.abs() {
            break;
        }
        let (na, nb) = (0.5 * (a + b), (a * b).sqrt());
        a = na;
        b = nb;
    }
    0.5 * (a + b)
}

/// Elliptic parameters derived from a nome `q in (0,1)`.
#[derive(Debug, Clone, Copy)]
struct Elliptic {
    nome: f64,
    k: f64,
    big_k: f64,
    big_kp: f64,
    t2: f64,
    t3: f64,
}

impl Elliptic {
    fn from_nome(q: f64) -> Self {
        let zero = Cx::new(0.0, 0.0);
        let t2 = theta2(zero, q).re;
        let t3 = theta3(zero, q).re;
        let t4 = theta4(zero, q).re;
        let k = (t2 / t3) * (t2 / t3);
        let kp = (t4 / t3) * (t4 / t3);
        let big_k = PI / (2.0 * agm(1.0, kp));
        let big_kp = PI / (2.0 * agm(1.0, k));
        Elliptic {
            nome: q,
            k,
            big_k,
            big_kp,
            t2,
            t3,
        }
    }

    /// Jacobi elliptic sine at a complex argument.
    fn sn(&self, u: Cx) -> Cx {
        let v = u * (PI / (2.0 * self.big_k));
        (self.t3 / self.t2) * theta1(v, self.nome) / theta4(v, self.nome)
    }

    /// Inverse of `sn` on the closed fundamental rectangle, via Carlson's
    /// symmetric integral.
    fn inv_sn(&self, w: Cx) -> Cx {
        let one = Cx::new(1.0, 0.0);
        let k2 = self.k * self.k;
        w * carlson_rf(one - w * w, one - k2 * w * w, one)
    }
}

/// Carlson symmetric elliptic integral R_F for complex arguments off the
/// negative real axis.
fn carlson_rf(x: Cx, y: Cx, z: Cx) -> Cx {
    let (mut xt, mut yt, mut zt) = (x, y, z);
    let mut a = (x + y + z) / 3.0;
    let a0 = a;
    let spread = (a0 - x).norm().max((a0 - y).norm()).max((a0 - z).norm());
    let mut scale = spread / 1e-20_f64.powf(1.0 / 8.0);
    for _ in 0..100 {
        if scale <= a.norm() {
            break;
        }
        let (sx, sy, sz) = (xt.sqrt(), yt.sqrt(), zt.sqrt());
        let lam = sx * sy + sy * sz + sz * sx;
        xt = 0.25 * (xt + lam);
        yt = 0.25 * (yt + lam);
        zt = 0.25 * (zt + lam);
        a = 0.25 * (a + lam);
        scale *= 0.25;
    }
    // the iterates keep A - x = (A0 - x0) / 4^m, so the series deviations can
    // be read off the final values directly
    let _ = a0;
    let dx = (a - xt) / a;
    let dy = (a - yt) / a;
    let dz = -dx - dy;
    let e2 = dx * dy - dz * dz;
    let e3 = dx * dy * dz;
    (Cx::new(1.0, 0.0) - e2 / 10.0 + e3 / 14.0 + e2 * e2 / 24.0 - 3.0 * e2 * e3 / 44.0) / a.sqrt()
}

// ---------------------------------------------------------------------------
// rectangle-to-half-plane map
// ---------------------------------------------------------------------------

/// Axis-aligned rectangle in continuum coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub width: f64,
    pub height: f64,
}

impl Rect {
    pub fn contains(&self, p: (f64, f64)) -> bool {
        p.0 > self.x0 && p.0 < self.x0 + self.width && p.1 > self.y0 && p.1 < self.y0 + self.height
    }

    pub fn bound_radius(&self) -> f64 {
        0.5 * (self.width * self.width + self.height * self.height).sqrt()
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x0 + 0.5 * self.width, self.y0 + 0.5 * self.height)
    }
}

#[derive(Debug, Clone, Copy)]
enum MobiusTarget {
    Finite(f64),
    Infinity,
}

/// Real Moebius map of the half-plane sending the source image to 0 and the
/// target image to infinity, composed with a signed dilation.
#[derive(Debug, Clone, Copy)]
struct Mobius {
    alpha: f64,
    beta: MobiusTarget,
    scale: f64,
}

impl Mobius {
    fn apply(&self, w: Cx) -> Cx {
        match self.beta {
            MobiusTarget::Finite(b) => self.scale * (w - self.alpha) / (w - b),
            MobiusTarget::Infinity => self.scale * (w - self.alpha),
        }
    }

    fn invert(&self, w: Cx) -> Cx {
        let zeta = w / self.scale;
        match self.beta {
            MobiusTarget::Finite(b) => (Cx::new(self.alpha, 0.0) - zeta * b) / (1.0 - zeta),
            MobiusTarget::Infinity => zeta + self.alpha,
        }
    }
}

/// Conformal map from a rectangle onto the upper half-plane with the marked
/// source on the boundary sent to 0, the marked target to infinity, and the
/// normalization `Im phi(origin) = 1`.
#[derive(Debug, Clone)]
pub struct RectMap {
    pub rect: Rect,
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub origin: (f64, f64),
    ell: Elliptic,
    mobius: Mobius,
}

fn on_boundary(rect: &Rect, p: (f64, f64), tol: f64) -> bool {
    let (x1, y1) = (rect.x0 + rect.width, rect.y0 + rect.height);
    let on_x = (p.0 - rect.x0).abs() < tol || (p.0 - x1).abs() < tol;
    let on_y = (p.1 - rect.y0).abs() < tol || (p.1 - y1).abs() < tol;
    let in_x = p.0 > rect.x0 - tol && p.0 < x1 + tol;
    let in_y = p.1 > rect.y0 - tol && p.1 < y1 + tol;
    (on_x && in_y) || (on_y && in_x)
}

fn near_corner(rect: &Rect, p: (f64, f64), tol: f64) -> bool {
    let (x1, y1) = (rect.x0 + rect.width, rect.y0 + rect.height);
    [
        (rect.x0, rect.y0),
        (x1, rect.y0),
        (rect.x0, y1),
        (x1, y1),
    ]
    .iter()
    .any(|c| (c.0 - p.0).hypot(c.1 - p.1) < tol)
}

impl RectMap {
    pub fn new(
        rect: Rect,
        a: (f64, f64),
        b: (f64, f64),
        origin: (f64, f64),
    ) -> Result<Self, ConformalError> {
        let aspect = rect.width / rect.height;
        if !(0.1..=10.0).contains(&aspect) {
            return Err(ConformalError::AspectOutOfRange(aspect));
        }
        let tol = 1e-9 * rect.width.max(rect.height);
        for p in [a, b] {
            if !on_boundary(&rect, p, tol) {
                return Err(ConformalError::MarkOffBoundary(p));
            }
            if near_corner(&rect, p, 1e-6 * rect.width.max(rect.height)) {
                return Err(ConformalError::MarkOnCorner(p));
            }
        }
        if (a.0 - b.0).hypot(a.1 - b.1) < tol {
            return Err(ConformalError::CoincidentMarks);
        }
        if !rect.contains(origin) {
            return Err(ConformalError::OriginOutside);
        }

        let ell = Elliptic::from_nome((-2.0 * PI / aspect).exp());
        let mut map = RectMap {
            rect,
            a,
            b,
            origin,
            ell,
            mobius: Mobius {
                alpha: 0.0,
                beta: MobiusTarget::Infinity,
                scale: 1.0,
            },
        };

        let ua = map.to_chart(Cx::new(a.0, a.1));
        let ub = map.to_chart(Cx::new(b.0, b.1));
        let alpha = ell.sn(ua).re;
        let pole_tol = 1e-9 * ell.big_kp;
        let beta = if ub.re.abs() < pole_tol && (ub.im - ell.big_kp).abs() < pole_tol {
            MobiusTarget::Infinity
        } else {
            MobiusTarget::Finite(ell.sn(ub).re)
        };
        if let MobiusTarget::Finite(bv) = beta {
            if (bv - alpha).abs() < 1e-12 {
                return Err(ConformalError::TargetTooClose);
            }
        }
        // orientation first, then the dilation fixing the origin height
        let sign = match beta {
            MobiusTarget::Infinity => 1.0,
            MobiusTarget::Finite(bv) => {
                if alpha > bv {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        map.mobius = Mobius {
            alpha,
            beta,
            scale: sign,
        };
        let w0 = map
            .mobius
            .apply(ell.sn(map.to_chart(Cx::new(origin.0, origin.1))));
        if w0.im <= 0.0 {
            return Err(ConformalError::NotInHalfPlane(w0.im));
        }
        map.mobius.scale = sign / w0.im;
        Ok(map)
    }

    /// Build the map of a rectangular grid domain: marks at the crossing
    /// points of the source/target edges, normalization at the origin vertex.
    pub fn for_domain(dom: &GridDomain) -> Result<Self, ConformalError> {
        if !dom.is_rectangular() {
            return Err(ConformalError::NotRectangular);
        }
        let (x0, y0, w, h) = dom.hull_rect();
        RectMap::new(
            Rect {
                x0,
                y0,
                width: w,
                height: h,
            },
            dom.edge_crossing(dom.a_edge()),
            dom.edge_crossing(dom.b_edge()),
            dom.position(dom.origin()),
        )
    }

    /// Affine chart onto the elliptic rectangle `[-K, K] x [0, K']`.
    fn to_chart(&self, z: Cx) -> Cx {
        let scale = 2.0 * self.ell.big_k / self.rect.width;
        (z - Cx::new(self.rect.x0 + 0.5 * self.rect.width, self.rect.y0)) * scale
    }

    fn from_chart(&self, u: Cx) -> Cx {
        let scale = self.rect.width / (2.0 * self.ell.big_k);
        u * scale + Cx::new(self.rect.x0 + 0.5 * self.rect.width, self.rect.y0)
    }

    /// Forward map to the upper half-plane; small negative heights from
    /// roundoff are clamped to the boundary.
    pub fn forward(&self, z: Cx) -> Result<Cx, ConformalError> {
        let w = self.mobius.apply(self.ell.sn(self.to_chart(z)));
        if w.im < -1e-12 * (1.0 + w.norm()) {
            return Err(ConformalError::NotInHalfPlane(w.im));
        }
        Ok(Cx::new(w.re, w.im.max(0.0)))
    }

    /// Inverse map from the upper half-plane back into the rectangle.
    pub fn inverse(&self, w: Cx) -> Result<Cx, ConformalError> {
        let z0 = self.mobius.invert(w);
        let mut u = self.ell.inv_sn(z0);
        // fold into the fundamental rectangle
        if u.im < 0.0 {
            u = -u;
        }
        Ok(self.from_chart(u))
    }
}

// ---------------------------------------------------------------------------
// driving functions and slit chains
// ---------------------------------------------------------------------------

/// One step of a piecewise driving record: capacity increment and value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrivingStep {
    pub dt: f64,
    pub xi: f64,
}

/// Piecewise record of a Loewner driving term under half-plane-capacity
/// parametrization. All increments are strictly positive.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DrivingFunction {
    pub steps: Vec<DrivingStep>,
}

impl DrivingFunction {
    pub fn total_capacity(&self) -> f64 {
        self.steps.iter().map(|s| s.dt).sum()
    }

    /// Driving value at capacity time `t` (step function, starting at 0).
    /// `None` when `t` exceeds the recorded horizon.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        if t <= 0.0 {
            return Some(0.0);
        }
        let mut acc = 0.0;
        for s in &self.steps {
            acc += s.dt;
            if acc >= t - 1e-15 {
                return Some(s.xi);
            }
        }
        None
    }

    /// Reflected driving `xi -> -xi`.
    pub fn reflected(&self) -> DrivingFunction {
        DrivingFunction {
            steps: self
                .steps
                .iter()
                .map(|s| DrivingStep { dt: s.dt, xi: -s.xi })
                .collect(),
        }
    }
}

/// Elementary vertical slit of height `h` rooted at `xi`; capacity `h^2/4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slit {
    pub xi: f64,
    pub h: f64,
}

impl Slit {
    pub fn capacity(&self) -> f64 {
        0.25 * self.h * self.h
    }

    /// Map the slit complement onto the half-plane. Branch fixed by
    /// continuity from high above the slit: images stay in the closed
    /// half-plane, real points keep their side.
    pub fn forward(&self, z: Cx, pos: usize) -> Result<Cx, ConformalError> {
        let w = z - self.xi;
        if w.re == 0.0 && w.im.abs() < self.h {
            return Err(ConformalError::OnSlit(pos));
        }
        let u = w * w + self.h * self.h;
        let mut r = u.sqrt();
        if r.im < 0.0 || (r.im == 0.0 && w.re < 0.0) {
            r = -r;
        }
        Ok(r + self.xi)
    }

    /// Inverse map opening the slit; the segment `[xi-h, xi+h]` lifts onto it.
    pub fn inverse(&self, w: Cx) -> Cx {
        let v = w - self.xi;
        let u = v * v - self.h * self.h;
        let mut r = u.sqrt();
        if r.im < 0.0 || (r.im == 0.0 && v.re < 0.0) {
            r = -r;
        }
        r + self.xi
    }
}

/// Composition of elementary slit maps, first slit applied first; the
/// composed map realizes `g_t` for the discretized hull.
#[derive(Debug, Clone, Default)]
pub struct SlitChain {
    pub slits: Vec<Slit>,
}

impl SlitChain {
    pub fn capacity(&self) -> f64 {
        self.slits.iter().map(|s| s.capacity()).sum()
    }

    pub fn len(&self) -> usize {
        self.slits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slits.is_empty()
    }

    pub fn apply_upto(&self, z: Cx, upto: usize) -> Result<Cx, ConformalError> {
        let mut w = z;
        for (i, s) in self.slits.iter().take(upto).enumerate() {
            w = s.forward(w, i)?;
        }
        Ok(w)
    }

    pub fn apply(&self, z: Cx) -> Result<Cx, ConformalError> {
        self.apply_upto(z, self.slits.len())
    }

    /// Pull a half-plane point back through the whole chain.
    pub fn pull_back(&self, w: Cx) -> Cx {
        let mut z = w;
        for s in self.slits.iter().rev() {
            z = s.inverse(z);
        }
        z
    }

    /// Preimage of the current driving point: the tip of the discretized hull.
    pub fn tip(&self) -> Option<Cx> {
        let last = self.slits.last()?;
        let mut z = Cx::new(last.xi, last.h);
        for s in self.slits.iter().rev().skip(1) {
            z = s.inverse(z);
        }
        Some(z)
    }

    /// Hull trace: tip position after each slit, in original coordinates.
    pub fn trace(&self) -> Vec<Cx> {
        let mut out = Vec::with_capacity(self.slits.len());
        for k in 1..=self.slits.len() {
            let s = self.slits[k - 1];
            let mut z = Cx::new(s.xi, s.h);
            for sl in self.slits[..k - 1].iter().rev() {
                z = sl.inverse(z);
            }
            out.push(z);
        }
        out
    }
}

/// Unzip a half-plane curve into its driving record: per point, map through
/// the current chain, emit `(dt, xi) = ((Im w)^2 / 4, Re w)` and append the
/// elementary slit. Points on the real line (the first one, typically) are
/// skipped; a point mapped strictly below the line means the discretized
/// curve self-intersects and is reported with its index.
pub fn extract_driving(points: &[Cx]) -> Result<(DrivingFunction, SlitChain), ConformalError> {
    let mut chain = SlitChain::default();
    let mut steps = Vec::with_capacity(points.len());
    let scale = points.iter().fold(0.0f64, |a, p| a.max(p.norm()));
    for (i, &p) in points.iter().enumerate() {
        let w = chain.apply(p)?;
        if w.im < -1e-9 * (1.0 + scale) {
            return Err(ConformalError::DegenerateStep(i, w.im));
        }
        if w.im <= 1e-14 * (1.0 + scale) {
            continue;
        }
        steps.push(DrivingStep {
            dt: 0.25 * w.im * w.im,
            xi: w.re,
        });
        chain.slits.push(Slit { xi: w.re, h: w.im });
    }
    Ok((DrivingFunction { steps }, chain))
}

/// Unzip with adaptive refinement: polyline segments whose capacity
/// increment would exceed `dt_max` are subdivided (bisection in the original
/// coordinates), so the driving of the same polyline hull is resolved to the
/// requested capacity resolution. Extraction stops once the accumulated
/// capacity passes `horizon`; the tail near the target carries unbounded
/// capacity and is irrelevant for marginals below the horizon.
pub fn extract_driving_refined(
    points: &[Cx],
    dt_max: f64,
    horizon: f64,
) -> Result<(DrivingFunction, SlitChain), ConformalError> {
    let mut chain = SlitChain::default();
    let mut steps = Vec::with_capacity(points.len());
    let scale = points.iter().fold(0.0f64, |a, p| a.max(p.norm()));
    let floor = 1e-14 * (1.0 + scale);
    let mut total = 0.0f64;
    let mut prev: Option<Cx> = None;
    'outer: for (i, &p) in points.iter().enumerate() {
        // pending segment targets, deepest subdivision first
        let mut stack = vec![p];
        while let Some(target) = stack.pop() {
            let w = chain.apply(target)?;
            if w.im < -1e-9 * (1.0 + scale) {
                return Err(ConformalError::DegenerateStep(i, w.im));
            }
            if w.im <= floor {
                prev = Some(target);
                continue;
            }
            let dt = 0.25 * w.im * w.im;
            if dt > dt_max {
                if let Some(q) = prev {
                    if (target - q).norm() > 1e-12 * (1.0 + scale) {
                        stack.push(target);
                        stack.push(0.5 * (target + q));
                        continue;
                    }
                }
            }
            steps.push(DrivingStep { dt, xi: w.re });
            chain.slits.push(Slit { xi: w.re, h: w.im });
            total += dt;
            prev = Some(target);
            if total >= horizon {
                break 'outer;
            }
        }
    }
    Ok((DrivingFunction { steps }, chain))
}

/// Evaluate the composed slit map at `z` through the first `upto` slits.
pub fn evaluate_gt(chain: &SlitChain, z: Cx, upto: usize) -> Result<Cx, ConformalError> {
    chain.apply_upto(z, upto)
}

/// Map a lattice curve into the half-plane. Vertices are clamped into the
/// closed rectangle (outer endpoints sit half a cell outside), and points
/// whose image cannot be evaluated (the target's outer vertex maps to
/// infinity) are skipped; the skip count is returned.
pub fn curve_to_halfplane(
    dom: &GridDomain,
    map: &RectMap,
    curve: &LatticeCurve,
) -> Result<(Vec<Cx>, usize), ConformalError> {
    let r = map.rect;
    let (x1, y1) = (r.x0 + r.width, r.y0 + r.height);
    let mut out = Vec::with_capacity(curve.vertices.len());
    let mut skipped = 0usize;
    for &v in &curve.vertices {
        let (x, y) = dom.position(v);
        let p = Cx::new(x.clamp(r.x0, x1), y.clamp(r.y0, y1));
        // the target mark is a pole of the map
        let db = (p.re - map.b.0).hypot(p.im - map.b.1);
        if db < 1e-9 * r.width.max(r.height) {
            skipped += 1;
            continue;
        }
        match map.forward(p) {
            Ok(w) => out.push(w),
            Err(_) => skipped += 1,
        }
    }
    Ok((out, skipped))
}

/// Positive Green function of the half-plane.
pub fn halfplane_green(w: Cx, z: Cx) -> f64 {
    -(1.0 / (2.0 * PI)) * ((w - z).norm() / (w - z.conj()).norm()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_rect_domain, EdgeLocator};
    use approx::assert_relative_eq;

    fn unit_square_map() -> RectMap {
        RectMap::new(
            Rect {
                x0: 0.0,
                y0: 0.0,
                width: 1.0,
                height: 1.0,
            },
            (0.5, 0.0),
            (0.5, 1.0),
            (0.5, 0.5),
        )
        .unwrap()
    }

    #[test]
    fn elliptic_internal_consistency() {
        // K from AGM must agree with the theta-series value (pi/2) t3^2
        for aspect in [0.25, 1.0, 3.0] {
            let e = Elliptic::from_nome((-2.0 * PI / aspect).exp());
            assert_relative_eq!(e.big_k, 0.5 * PI * e.t3 * e.t3, max_relative = 1e-12);
            // sn(K) = 1, sn(i K'/2) = i / sqrt(k)
            assert_relative_eq!(e.sn(Cx::new(e.big_k, 0.0)).re, 1.0, epsilon = 1e-11);
            let v = e.sn(Cx::new(0.0, 0.5 * e.big_kp));
            assert!(v.re.abs() < 1e-11);
            assert_relative_eq!(v.im, 1.0 / e.k.sqrt(), max_relative = 1e-11);
        }
    }

    #[test]
    fn inv_sn_round_trip() {
        let e = Elliptic::from_nome((-2.0 * PI).exp());
        for &w in &[
            Cx::new(0.3, 0.4),
            Cx::new(-1.7, 0.2),
            Cx::new(0.0, 2.5),
            Cx::new(4.0, 0.01),
            Cx::new(-0.02, 0.03),
        ] {
            let u = e.inv_sn(w);
            assert!(u.im >= -1e-12, "chart point below the rectangle: {u}");
            let back = e.sn(u);
            assert!((back - w).norm() < 1e-10 * (1.0 + w.norm()), "{w} -> {u} -> {back}");
        }
    }

    #[test]
    fn square_map_symmetry_and_normalization() {
        let map = unit_square_map();
        // vertical symmetry line maps onto the imaginary axis
        for y in [0.1, 0.35, 0.6, 0.9] {
            let w = map.forward(Cx::new(0.5, y)).unwrap();
            assert!(w.re.abs() < 1e-10, "Re = {}", w.re);
        }
        let w0 = map.forward(Cx::new(0.5, 0.5)).unwrap();
        assert_relative_eq!(w0.im, 1.0, epsilon = 1e-10);
        // boundary samples map to the real line
        for t in [0.12, 0.4, 0.77] {
            for p in [
                Cx::new(t, 0.0),
                Cx::new(0.0, t),
                Cx::new(1.0, t),
                Cx::new(t, 1.0),
            ] {
                if (p - Cx::new(0.5, 1.0)).norm() < 0.2 {
                    continue; // near the pole the image is huge but still real
                }
                let w = map.forward(p).unwrap();
                assert!(w.im.abs() < 1e-9, "{p} -> {w}");
            }
        }
        // source maps to 0
        let wa = map.forward(Cx::new(0.5, 0.0)).unwrap();
        assert!(wa.norm() < 1e-10);
    }

    #[test]
    fn map_round_trip() {
        let map = unit_square_map();
        for &w in &[
            Cx::new(0.0, 1.0),
            Cx::new(0.7, 0.4),
            Cx::new(-2.0, 0.8),
            Cx::new(3.0, 2.0),
        ] {
            let z = map.inverse(w).unwrap();
            assert!(map.rect.contains((z.re, z.im)), "{w} -> {z}");
            let back = map.forward(z).unwrap();
            assert!((back - w).norm() < 1e-9 * (1.0 + w.norm()), "{w} -> {z} -> {back}");
        }
        // and the other way, starting inside the rectangle
        for &z in &[Cx::new(0.3, 0.2), Cx::new(0.8, 0.9), Cx::new(0.5, 0.05)] {
            let w = map.forward(z).unwrap();
            let back = map.inverse(w).unwrap();
            assert!((back - z).norm() < 1e-9, "{z} -> {w} -> {back}");
        }
    }

    #[test]
    fn off_center_marks_round_trip() {
        let map = RectMap::new(
            Rect {
                x0: 0.0,
                y0: 0.0,
                width: 1.0,
                height: 1.0,
            },
            (0.25, 0.0),
            (0.5, 1.0),
            (0.5, 0.5),
        )
        .unwrap();
        let wa = map.forward(Cx::new(0.25, 0.0)).unwrap();
        assert!(wa.norm() < 1e-9);
        assert_relative_eq!(
            map.forward(Cx::new(0.5, 0.5)).unwrap().im,
            1.0,
            epsilon = 1e-10
        );
        let z = map.inverse(Cx::new(0.4, 1.3)).unwrap();
        let back = map.forward(z).unwrap();
        assert!((back - Cx::new(0.4, 1.3)).norm() < 1e-9);
    }

    #[test]
    fn domain_map_matches_marks() {
        let dom = build_rect_domain(
            15,
            15,
            1.0 / 16.0,
            EdgeLocator::BottomCenter,
            EdgeLocator::TopCenter,
            (8, 8),
        )
        .unwrap();
        let map = RectMap::for_domain(&dom).unwrap();
        assert_relative_eq!(map.rect.width, 15.0 / 16.0, epsilon = 1e-12);
        let wa = map
            .forward(Cx::new(map.a.0, map.a.1))
            .unwrap();
        assert!(wa.norm() < 1e-9);
    }

    #[test]
    fn slit_map_formulas() {
        // one slit at 0: the unzip map sends iy to i sqrt(y^2 - h^2), and its
        // inverse opens iy up to i sqrt(y^2 + h^2)
        let s = Slit { xi: 0.0, h: 0.5 };
        let w = s.forward(Cx::new(0.0, 2.0), 0).unwrap();
        assert!(w.re.abs() < 1e-14);
        assert_relative_eq!(w.im, (4.0f64 - 0.25).sqrt(), epsilon = 1e-14);
        let v = s.inverse(Cx::new(0.0, 2.0));
        assert!(v.re.abs() < 1e-14);
        assert_relative_eq!(v.im, (4.0f64 + 0.25).sqrt(), epsilon = 1e-14);
        // sides keep their sign
        let wl = s.forward(Cx::new(-0.3, 0.1), 0).unwrap();
        assert!(wl.re < 0.0);
        let wr = s.forward(Cx::new(0.3, 0.1), 0).unwrap();
        assert!(wr.re > 0.0);
        // inverse opens the slit
        let z = s.inverse(Cx::new(0.0, 0.0));
        assert_relative_eq!(z.im, 0.5, epsilon = 1e-14);
        // round trip away from the slit
        let p = Cx::new(0.4, 0.7);
        let back = s.inverse(s.forward(p, 0).unwrap());
        assert!((back - p).norm() < 1e-12);
    }

    #[test]
    fn extract_single_point() {
        let (df, chain) = extract_driving(&[Cx::new(1.0, 1.0)]).unwrap();
        assert_eq!(df.steps.len(), 1);
        assert_relative_eq!(df.steps[0].xi, 1.0, epsilon = 1e-14);
        assert_relative_eq!(df.steps[0].dt, 0.25, epsilon = 1e-14);
        assert_relative_eq!(chain.capacity(), 0.25, epsilon = 1e-14);
    }

    #[test]
    fn extract_vertical_segment() {
        // points along the imaginary axis up to 2 i sqrt(T): xi = 0, capacity -> T
        let t_target = 0.7f64;
        let n = 400;
        let points: Vec<Cx> = (1..=n)
            .map(|k| Cx::new(0.0, 2.0 * t_target.sqrt() * k as f64 / n as f64))
            .collect();
        let (df, _) = extract_driving(&points).unwrap();
        for s in &df.steps {
            assert!(s.xi.abs() < 1e-12);
        }
        assert_relative_eq!(df.total_capacity(), t_target, max_relative = 5e-3);
    }

    #[test]
    fn extraction_flattens_the_curve() {
        // a slanted curve; after k slits the k-th point lies on the real line
        let points: Vec<Cx> = (1..=30)
            .map(|k| {
                let t = k as f64 / 30.0;
                Cx::new(0.3 * t + 0.05 * (7.0 * t).sin(), 0.8 * t)
            })
            .collect();
        let (_, chain) = extract_driving(&points).unwrap();
        for (k, &p) in points.iter().enumerate() {
            let w = chain.apply_upto(p, k + 1).unwrap();
            assert!(w.im.abs() < 1e-9, "point {k} image {w}");
        }
    }

    #[test]
    fn chain_hydrodynamic_normalization() {
        let points: Vec<Cx> = (1..=50)
            .map(|k| {
                let t = k as f64 / 50.0;
                Cx::new(0.5 * t, 1.1 * t)
            })
            .collect();
        let (df, chain) = extract_driving(&points).unwrap();
        let t = df.total_capacity();
        for &z in &[Cx::new(1000.0, 5.0), Cx::new(-640.0, 770.0)] {
            let g = chain.apply(z).unwrap();
            let err = (g - z - Cx::new(2.0 * t, 0.0) / z).norm();
            assert!(err < 1e-3, "normalization error {err}");
        }
    }

    #[test]
    fn capacity_additivity_by_laurent_fit() {
        let slits = vec![
            Slit { xi: 0.0, h: 0.4 },
            Slit { xi: 0.3, h: 0.5 },
            Slit { xi: -0.2, h: 0.3 },
        ];
        let chain = SlitChain { slits };
        let t = chain.capacity();
        // fit the 1/z coefficient on a large circle
        let mut acc = 0.0;
        let n = 64;
        for k in 0..n {
            let th = 2.0 * PI * (k as f64 + 0.5) / n as f64;
            // stay in the upper half-plane
            let z = Cx::new(5e3 * th.cos(), 5e3 * th.sin().abs() + 10.0);
            let g = chain.apply(z).unwrap();
            acc += ((g - z) * z).re / 2.0;
        }
        assert_relative_eq!(acc / n as f64, t, max_relative = 1e-6);
    }

    #[test]
    fn synthesize_and_reextract_driving() {
        // piecewise-constant driving -> forward chain -> trace -> re-extract
        let n = 1000;
        let dt = 1.0 / n as f64;
        let mut chain = SlitChain::default();
        let mut xi_true = Vec::with_capacity(n);
        for k in 0..n {
            let t = k as f64 * dt;
            let xi = 0.6 * (3.0 * t).sin();
            xi_true.push(xi);
            chain.slits.push(Slit {
                xi,
                h: 2.0 * dt.sqrt(),
            });
        }
        let trace = chain.trace();
        let (df, _) = extract_driving(&trace).unwrap();
        assert_relative_eq!(df.total_capacity(), 1.0, max_relative = 0.02);
        let mut sup = 0.0f64;
        for (k, s) in df.steps.iter().enumerate() {
            sup = sup.max((s.xi - xi_true[k.min(xi_true.len() - 1)]).abs());
        }
        assert!(sup <= 0.02, "sup recovery error {sup}");
    }

    #[test]
    fn empty_chain_is_identity() {
        let chain = SlitChain::default();
        let z = Cx::new(0.3, 0.9);
        assert_eq!(evaluate_gt(&chain, z, 0).unwrap(), z);
    }

    #[test]
    fn curve_mapping_on_symmetry_line() {
        let dom = build_rect_domain(
            15,
            15,
            1.0 / 16.0,
            EdgeLocator::BottomCenter,
            EdgeLocator::TopCenter,
            (8, 8),
        )
        .unwrap();
        let map = RectMap::for_domain(&dom).unwrap();
        let curve = LatticeCurve::new(vec![(8, 0), (8, 1), (8, 2), (8, 3), (8, 4)]).unwrap();
        let (pts, skipped) = curve_to_halfplane(&dom, &map, &curve).unwrap();
        assert_eq!(skipped, 0);
        assert!(pts[0].norm() < 1e-6, "first point near 0, got {}", pts[0]);
        for p in &pts {
            assert!(p.re.abs() < 1e-9);
        }
        // capacity increases along the curve
        let (df, _) = extract_driving(&pts).unwrap();
        assert!(df.steps.len() >= 3);
        assert!(df.steps.iter().all(|s| s.dt > 0.0));
    }

    #[test]
    fn empty_curve_maps_to_nothing() {
        let dom = build_rect_domain(
            3,
            3,
            1.0,
            EdgeLocator::BottomCenter,
            EdgeLocator::TopCenter,
            (2, 2),
        )
        .unwrap();
        let map = RectMap::for_domain(&dom).unwrap();
        let (pts, skipped) = curve_to_halfplane(&dom, &map, &LatticeCurve::empty()).unwrap();
        assert!(pts.is_empty());
        assert_eq!(skipped, 0);
    }
}
