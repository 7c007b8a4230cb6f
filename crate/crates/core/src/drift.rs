//! Poisson-kernel fields on an evolving slit domain, their massive
//! corrections, the normalization factor of the target-normalized observable,
//! and the drift functional of the driving SDE.
//!
//! The state is a square-cell mesh over the experiment rectangle. Each active
//! cell carries the image `w = g_t(phi(center))` of its center under the
//! rectangle map followed by the current slit chain, so `phi_t = w - xi`.
//! Cells swallowed by the curve are masked and act as Dirichlet boundary for
//! the Helmholtz solves.

use num_complex::Complex64 as Cx;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::sync::OnceLock;
use thiserror::Error;

use crate::conformal::{halfplane_green, ConformalError, RectMap, Slit};
use crate::solve::{SolveError, WalkSystem};

#[derive(Debug, Error)]
pub enum DriftError {
    #[error("mesh does not tile the rectangle with square cells")]
    BadMesh,
    #[error("mesh too coarse for this killing rate: normalization denominator {0:.3e}")]
    MeshTooCoarse(f64),
    #[error("probe cells invalid: {0}")]
    BadProbe(String),
    #[error("quadrature solve did not converge (change {0:.3e})")]
    QuadratureDiverged(f64),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Mesh over the experiment rectangle tracking the evolving slit domain.
#[derive(Debug, Clone)]
pub struct MeshState {
    pub nx: usize,
    pub ny: usize,
    /// cell side; cells are squares of area `cell^2`
    pub cell: f64,
    pub rect_x0: f64,
    pub rect_y0: f64,
    pub active: Vec<bool>,
    /// slit-chain image of each cell center (valid where active)
    pub w: Vec<Cx>,
    pub xi: f64,
    pub capacity: f64,
}

const IM_FLOOR: f64 = 1e-12;

impl MeshState {
    /// Lay `n_across` square cells across the width of the map's rectangle.
    pub fn new(map: &RectMap, n_across: usize) -> Result<Self, DriftError> {
        let rect = map.rect;
        let cell = rect.width / n_across as f64;
        let ny_f = rect.height / cell;
        let ny = ny_f.round() as usize;
        if ny == 0 || (ny_f - ny as f64).abs() > 1e-9 * ny_f {
            return Err(DriftError::BadMesh);
        }
        let nx = n_across;
        let mut active = vec![true; nx * ny];
        let mut w = vec![Cx::new(0.0, 0.0); nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let p = Cx::new(
                    rect.x0 + (i as f64 + 0.5) * cell,
                    rect.y0 + (j as f64 + 0.5) * cell,
                );
                let img = map.forward(p)?;
                if img.im <= IM_FLOOR {
                    active[j * nx + i] = false;
                } else {
                    w[j * nx + i] = img;
                }
            }
        }
        Ok(MeshState {
            nx,
            ny,
            cell,
            rect_x0: rect.x0,
            rect_y0: rect.y0,
            active,
            w,
            xi: 0.0,
            capacity: 0.0,
        })
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_center(&self, idx: usize) -> (f64, f64) {
        let (i, j) = (idx % self.nx, idx / self.nx);
        (
            self.rect_x0 + (i as f64 + 0.5) * self.cell,
            self.rect_y0 + (j as f64 + 0.5) * self.cell,
        )
    }

    /// Cell containing a continuum point, if inside the mesh block.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<usize> {
        let i = ((x - self.rect_x0) / self.cell).floor();
        let j = ((y - self.rect_y0) / self.cell).floor();
        if i < 0.0 || j < 0.0 || i >= self.nx as f64 || j >= self.ny as f64 {
            return None;
        }
        Some(self.cell_index(i as usize, j as usize))
    }

    pub fn phi(&self, idx: usize) -> Cx {
        self.w[idx] - self.xi
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Midpoint quadrature over active cells.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        let a = self.cell * self.cell;
        let mut s = 0.0;
        for (i, &act) in self.active.iter().enumerate() {
            if act {
                s += f[i];
            }
        }
        s * a
    }

    /// Advance the hull by one vertical slit planted at `xi_new` with
    /// capacity `dt`; masks cells swallowed by the slit. Returns the number of
    /// newly masked cells.
    pub fn advance(&mut self, xi_new: f64, dt: f64) -> usize {
        let slit = Slit {
            xi: xi_new,
            h: 2.0 * dt.sqrt(),
        };
        let mut masked = 0usize;
        for idx in 0..self.active.len() {
            if !self.active[idx] {
                continue;
            }
            match slit.forward(self.w[idx], 0) {
                Ok(img) if img.im > IM_FLOOR => self.w[idx] = img,
                _ => {
                    self.active[idx] = false;
                    masked += 1;
                }
            }
        }
        self.xi = xi_new;
        self.capacity += dt;
        masked
    }

    /// Deactivate every active cell whose closed square meets the segment
    /// `p0 -> p1` (the mapped-back hull piece). Returns the count masked.
    pub fn mask_segment(&mut self, p0: (f64, f64), p1: (f64, f64)) -> usize {
        let half = 0.5 * self.cell;
        let (xmin, xmax) = (p0.0.min(p1.0) - half, p0.0.max(p1.0) + half);
        let (ymin, ymax) = (p0.1.min(p1.1) - half, p0.1.max(p1.1) + half);
        let i0 = (((xmin - self.rect_x0) / self.cell).floor().max(0.0)) as usize;
        let j0 = (((ymin - self.rect_y0) / self.cell).floor().max(0.0)) as usize;
        let i1 = (((xmax - self.rect_x0) / self.cell).ceil().min(self.nx as f64)) as usize;
        let j1 = (((ymax - self.rect_y0) / self.cell).ceil().min(self.ny as f64)) as usize;
        let mut masked = 0;
        for j in j0..j1 {
            for i in i0..i1 {
                let idx = self.cell_index(i, j);
                if !self.active[idx] {
                    continue;
                }
                let c = self.cell_center(idx);
                if segment_meets_box(p0, p1, (c.0 - half, c.1 - half), (c.0 + half, c.1 + half)) {
                    self.active[idx] = false;
                    masked += 1;
                }
            }
        }
        masked
    }
}

/// Liang–Barsky clip: does the closed segment intersect the closed box?
fn segment_meets_box(p0: (f64, f64), p1: (f64, f64), lo: (f64, f64), hi: (f64, f64)) -> bool {
    let (dx, dy) = (p1.0 - p0.0, p1.1 - p0.1);
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [
        (-dx, p0.0 - lo.0),
        (dx, hi.0 - p0.0),
        (-dy, p0.1 - lo.1),
        (dy, hi.1 - p0.1),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

/// Poisson-kernel field `P = -Im(1/phi)/pi` and its source-derivative
/// companion `Q = -Im(1/phi^2)/pi` on active cells (zero elsewhere).
pub fn pq_fields(state: &MeshState) -> (Vec<f64>, Vec<f64>) {
    let n = state.active.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for idx in 0..n {
        if !state.active[idx] {
            continue;
        }
        let phi = state.phi(idx);
        let n2 = phi.norm_sqr();
        if n2 < 1e-28 {
            continue; // tip collision; the cell is as good as masked
        }
        p[idx] = phi.im / (PI * n2);
        q[idx] = 2.0 * phi.re * phi.im / (PI * n2 * n2);
    }
    (p, q)
}

/// Dirichlet Helmholtz solve on the active mask: returns `u` with
/// `u - (q/4) A u = cell^2 * f`, the discrete version of
/// `(m^2 - (1 - m^2 cell^2) Lap) u = f` with zero outside the mask.
pub fn helmholtz_solve(state: &MeshState, m: f64, f: &[f64]) -> Result<Vec<f64>, DriftError> {
    helmholtz_solve_tol(state, m, f, 1e-10, None)
}

pub fn helmholtz_solve_tol(
    state: &MeshState,
    m: f64,
    f: &[f64],
    tol_rel: f64,
    warm: Option<&[f64]>,
) -> Result<Vec<f64>, DriftError> {
    let q = 1.0 - m * m * state.cell * state.cell;
    let (sys, rank) = WalkSystem::from_mask(state.nx, state.ny, &state.active, q);
    let a = state.cell * state.cell;
    let mut rhs = vec![0.0; sys.len()];
    let mut scale = 0.0f64;
    for (cell, &r) in rank.iter().enumerate() {
        if r != crate::lattice::NO_NEIGHBOR {
            rhs[r as usize] = a * f[cell];
            scale = scale.max(f[cell].abs());
        }
    }
    let warm_packed: Option<Vec<f64>> = warm.map(|w| {
        let mut packed = vec![0.0; sys.len()];
        for (cell, &r) in rank.iter().enumerate() {
            if r != crate::lattice::NO_NEIGHBOR {
                packed[r as usize] = w[cell];
            }
        }
        packed
    });
    let x = sys.solve(&rhs, tol_rel * scale.max(1e-300) * a, warm_packed.as_deref())?;
    let mut out = vec![0.0; state.active.len()];
    for (cell, &r) in rank.iter().enumerate() {
        if r != crate::lattice::NO_NEIGHBOR {
            out[cell] = x[r as usize];
        }
    }
    Ok(out)
}

/// Massive kernel bundle at one time step.
#[derive(Debug, Clone)]
pub struct MassiveKernels {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// massive Poisson kernel `P - m^2 * Gm[P]`
    pub p_m: Vec<f64>,
    /// massless target kernel `Im phi`
    pub k0: Vec<f64>,
    /// massive target kernel `K0 - m^2 * Gm[K0]`
    pub k: Vec<f64>,
    /// normalization `[1 - m^2 Int(P_m K0)]^{-1} >= 1`
    pub n_m: f64,
}

pub fn massive_kernels(state: &MeshState, m: f64) -> Result<MassiveKernels, DriftError> {
    massive_kernels_tol(state, m, 1e-10)
}

pub fn massive_kernels_tol(
    state: &MeshState,
    m: f64,
    tol_rel: f64,
) -> Result<MassiveKernels, DriftError> {
    let (p, q) = pq_fields(state);
    let mut k0 = vec![0.0; state.active.len()];
    for idx in 0..k0.len() {
        if state.active[idx] {
            k0[idx] = state.phi(idx).im;
        }
    }
    if m == 0.0 {
        return Ok(MassiveKernels {
            p_m: p.clone(),
            k: k0.clone(),
            p,
            q,
            k0,
            n_m: 1.0,
        });
    }
    // Walk-to-continuum normalization: a walk killed at rate m^2 cell^2 per
    // step has limiting Green operator 4 (-Lap + 4 m^2)^{-1}, so in the
    // standard-kernel units of P, Q, K0 the effective squared mass entering
    // the integral identities is mu^2 = 4 m^2, while the mesh solve itself
    // (one factor of the walk operator) already carries the right scale.
    let m2 = m * m;
    let mu2 = 4.0 * m2;
    let gp = helmholtz_solve_tol(state, m, &p, tol_rel, None)?;
    let gk = helmholtz_solve_tol(state, m, &k0, tol_rel, None)?;
    let p_m: Vec<f64> = p.iter().zip(&gp).map(|(a, b)| a - m2 * b).collect();
    let k: Vec<f64> = k0.iter().zip(&gk).map(|(a, b)| a - m2 * b).collect();
    let pk: Vec<f64> = p_m.iter().zip(&k0).map(|(a, b)| a * b).collect();
    let denom = 1.0 - mu2 * state.integrate(&pk);
    if denom <= 1e-12 {
        return Err(DriftError::MeshTooCoarse(denom));
    }
    Ok(MassiveKernels {
        p,
        q,
        p_m,
        k0,
        k,
        n_m: 1.0 / denom,
    })
}

/// Warm-started drift evaluation for time-stepping loops: the Helmholtz
/// solutions change little between steps, so the previous fields make good
/// initial guesses.
#[derive(Debug, Default, Clone)]
pub struct DriftEvaluator {
    warm_gp: Option<Vec<f64>>,
    warm_gk: Option<Vec<f64>>,
}

impl DriftEvaluator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn evaluate(
        &mut self,
        state: &MeshState,
        m: f64,
        tol_rel: f64,
    ) -> Result<DriftReport, DriftError> {
        let (p, q) = pq_fields(state);
        let mut k0 = vec![0.0; state.active.len()];
        for idx in 0..k0.len() {
            if state.active[idx] {
                k0[idx] = state.phi(idx).im;
            }
        }
        if m == 0.0 {
            let qk: Vec<f64> = q.iter().zip(&k0).map(|(a, b)| a * b).collect();
            let p2: Vec<f64> = p.iter().map(|v| v * v).collect();
            return Ok(DriftReport {
                t: state.capacity,
                n_m: 1.0,
                lambda: 0.0,
                int_p: state.integrate(&p),
                int_p_pm: state.integrate(&p2),
                int_qk: state.integrate(&qk),
            });
        }
        let m2 = m * m;
        let mu2 = 4.0 * m2;
        let gp = helmholtz_solve_tol(state, m, &p, tol_rel, self.warm_gp.as_deref())?;
        let gk = helmholtz_solve_tol(state, m, &k0, tol_rel, self.warm_gk.as_deref())?;
        let p_m: Vec<f64> = p.iter().zip(&gp).map(|(a, b)| a - m2 * b).collect();
        let k: Vec<f64> = k0.iter().zip(&gk).map(|(a, b)| a - m2 * b).collect();
        let pk: Vec<f64> = p_m.iter().zip(&k0).map(|(a, b)| a * b).collect();
        let denom = 1.0 - mu2 * state.integrate(&pk);
        if denom <= 1e-12 {
            return Err(DriftError::MeshTooCoarse(denom));
        }
        let n_m = 1.0 / denom;
        let qk: Vec<f64> = q.iter().zip(&k).map(|(a, b)| a * b).collect();
        let int_qk = state.integrate(&qk);
        let ppm: Vec<f64> = p.iter().zip(&p_m).map(|(a, b)| a * b).collect();
        let report = DriftReport {
            t: state.capacity,
            n_m,
            lambda: mu2 * int_qk * n_m,
            int_p: state.integrate(&p),
            int_p_pm: state.integrate(&ppm),
            int_qk,
        };
        self.warm_gp = Some(gp);
        self.warm_gk = Some(gk);
        Ok(report)
    }
}

/// Drift functional and diagnostics at one capacity time.
#[derive(Debug, Clone, Copy)]
pub struct DriftReport {
    pub t: f64,
    pub n_m: f64,
    pub lambda: f64,
    pub int_p: f64,
    pub int_p_pm: f64,
    pub int_qk: f64,
}

/// Drift of the driving SDE: `lambda = -m^2 * Int(Q K) * N_m`; identically
/// zero without killing.
pub fn drift_lambda(state: &MeshState, m: f64) -> Result<DriftReport, DriftError> {
    drift_lambda_tol(state, m, 1e-10)
}

pub fn drift_lambda_tol(state: &MeshState, m: f64, tol_rel: f64) -> Result<DriftReport, DriftError> {
    let kern = massive_kernels_tol(state, m, tol_rel)?;
    let qk: Vec<f64> = kern.q.iter().zip(&kern.k).map(|(a, b)| a * b).collect();
    let int_qk = state.integrate(&qk);
    let ppm: Vec<f64> = kern.p.iter().zip(&kern.p_m).map(|(a, b)| a * b).collect();
    // Drift with the sign and 4 m^2 scale fixed by the lattice model: exact
    // enumeration of the growth chain and sampled driving means agree with
    // +4 m^2 N Int(Q K) and contradict the opposite sign.
    let lambda = if m == 0.0 {
        0.0
    } else {
        4.0 * m * m * int_qk * kern.n_m
    };
    Ok(DriftReport {
        t: state.capacity,
        n_m: kern.n_m,
        lambda,
        int_p: state.integrate(&kern.p),
        int_p_pm: state.integrate(&ppm),
        int_qk,
    })
}

/// `(Int P dA, Int P^2 dA)` at the current step.
pub fn integral_diagnostics(state: &MeshState) -> (f64, f64) {
    let (p, _) = pq_fields(state);
    let p2: Vec<f64> = p.iter().map(|v| v * v).collect();
    (state.integrate(&p), state.integrate(&p2))
}

// ---------------------------------------------------------------------------
// Hadamard finite-difference oracle
// ---------------------------------------------------------------------------

/// Mean of `-ln r` over the unit square around the origin, for the diagonal
/// self-interaction of the quadrature Green operator.
fn log_self_constant() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| {
        let n = 512;
        let h = 1.0 / n as f64;
        let mut s = 0.0;
        for j in 0..n {
            for i in 0..n {
                let x = -0.5 + (i as f64 + 0.5) * h;
                let y = -0.5 + (j as f64 + 0.5) * h;
                s -= 0.5 * (x * x + y * y).ln();
            }
        }
        s * h * h
    })
}

/// Green operator of the slit domain applied by quadrature of the analytic
/// kernel `G(x, y) = G_H(phi(x), phi(y))`; every bit of time dependence sits
/// in the smooth `phi` values, which is what the Hadamard check needs.
struct QuadGreen {
    ids: Vec<usize>,
    phi: Vec<Cx>,
    diag: Vec<f64>,
    area: f64,
}

impl QuadGreen {
    fn new(state: &MeshState, phi_at: impl Fn(usize) -> Cx) -> Self {
        let ids: Vec<usize> = (0..state.active.len())
            .filter(|&i| state.active[i])
            .collect();
        let phi: Vec<Cx> = ids.iter().map(|&i| phi_at(i)).collect();
        // |phi'| per cell by central difference on the mesh
        let lookup: std::collections::HashMap<usize, usize> =
            ids.iter().enumerate().map(|(r, &i)| (i, r)).collect();
        let mut diag = vec![0.0; ids.len()];
        let c_sq = log_self_constant();
        for (r, &idx) in ids.iter().enumerate() {
            let (i, j) = (idx % state.nx, idx / state.nx);
            let sample = |di: i64, dj: i64| -> Option<Cx> {
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                if ni < 0 || nj < 0 || ni >= state.nx as i64 || nj >= state.ny as i64 {
                    return None;
                }
                lookup
                    .get(&state.cell_index(ni as usize, nj as usize))
                    .map(|&rr| phi[rr])
            };
            let here = phi[r];
            let deriv = match (sample(1, 0), sample(-1, 0)) {
                (Some(e), Some(w)) => (e - w) / (2.0 * state.cell),
                (Some(e), None) => (e - here) / state.cell,
                (None, Some(w)) => (here - w) / state.cell,
                (None, None) => match (sample(0, 1), sample(0, -1)) {
                    (Some(n), Some(s)) => (n - s) / (2.0 * state.cell) * Cx::new(0.0, -1.0),
                    _ => Cx::new(1.0, 0.0),
                },
            };
            let dphi = deriv.norm().max(1e-300);
            let crad = 2.0 * here.im / dphi;
            diag[r] = (crad.ln() - state.cell.ln() + c_sq) / (2.0 * PI);
        }
        QuadGreen {
            ids,
            phi,
            diag,
            area: state.cell * state.cell,
        }
    }

    fn len(&self) -> usize {
        self.ids.len()
    }

    /// Analytic column `G(., z)` with the cell-averaged diagonal at `z`.
    fn column(&self, z: usize) -> Vec<f64> {
        let pz = self.phi[z];
        (0..self.len())
            .map(|r| {
                if r == z {
                    self.diag[z]
                } else {
                    halfplane_green(self.phi[r], pz)
                }
            })
            .collect()
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .into_par_iter()
            .map(|r| {
                let pr = self.phi[r];
                let mut s = 0.0;
                for c in 0..n {
                    if c == r {
                        s += self.diag[r] * u[c];
                    } else {
                        let d = pr - self.phi[c];
                        let dc = pr - self.phi[c].conj();
                        s += -(0.25 / PI) * (d.norm_sqr() / dc.norm_sqr()).ln() * u[c];
                    }
                }
                s * self.area
            })
            .collect()
    }

    /// `(I + m^2 G)^{-1} f` by fixed-point iteration; the operator norm of
    /// `m^2 G` stays well below one for admissible killing rates.
    fn resolvent(&self, f: &[f64], m2: f64) -> Result<Vec<f64>, DriftError> {
        if m2 == 0.0 {
            return Ok(f.to_vec());
        }
        let scale = f.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
        let mut u = f.to_vec();
        let mut change = f64::INFINITY;
        for _ in 0..80 {
            let gu = self.apply(&u);
            let mut next = vec![0.0; u.len()];
            change = 0.0;
            for i in 0..u.len() {
                next[i] = f[i] - m2 * gu[i];
                change = change.max((next[i] - u[i]).abs());
            }
            u = next;
            if change <= 1e-12 * scale {
                return Ok(u);
            }
        }
        Err(DriftError::QuadratureDiverged(change))
    }
}

/// Finite-difference check of the Green-function derivative under slit
/// growth of capacity `eps` at the current driving position:
/// classical `(G_{t+eps} - G_t)/eps` against `-2 pi P(w) P(z)` (analytic),
/// and the massive analog with kernels massified through the quadrature
/// Green operator. Returns the relative residuals `(classical, massive)`.
pub fn hadamard_check(
    state: &MeshState,
    m: f64,
    eps: f64,
    w_cell: (usize, usize),
    z_cell: (usize, usize),
) -> Result<(f64, f64), DriftError> {
    let wi = state.cell_index(w_cell.0, w_cell.1);
    let zi = state.cell_index(z_cell.0, z_cell.1);
    if !state.active.get(wi).copied().unwrap_or(false)
        || !state.active.get(zi).copied().unwrap_or(false)
    {
        return Err(DriftError::BadProbe("probe cell inactive".into()));
    }
    let d2 = (w_cell.0 as i64 - z_cell.0 as i64).pow(2) + (w_cell.1 as i64 - z_cell.1 as i64).pow(2);
    if d2 < 25 {
        return Err(DriftError::BadProbe(
            "probe cells closer than 5 cells".into(),
        ));
    }

    let grow = Slit {
        xi: 0.0,
        h: 2.0 * eps.sqrt(),
    };
    let phi_now = |idx: usize| state.phi(idx);
    let phi_grown = |idx: usize| -> Cx {
        grow.forward(state.phi(idx), 0)
            .unwrap_or_else(|_| Cx::new(0.0, IM_FLOOR))
    };

    // classical: everything analytic
    let p_of = |phi: Cx| phi.im / (PI * phi.norm_sqr());
    let (pw, pz) = (p_of(phi_now(wi)), p_of(phi_now(zi)));
    let g0 = halfplane_green(phi_now(wi), phi_now(zi));
    let g1 = halfplane_green(phi_grown(wi), phi_grown(zi));
    let reference = -2.0 * PI * pw * pz;
    let classical = ((g1 - g0) / eps - reference).abs() / reference.abs();

    if m == 0.0 {
        return Ok((classical, classical));
    }

    // massive: kernels at both time levels with smooth-in-t quadrature
    let m2 = m * m;
    let quad0 = QuadGreen::new(state, phi_now);
    let quad1 = QuadGreen::new(state, phi_grown);
    let rank = |idx: usize| quad0.ids.iter().position(|&x| x == idx).unwrap();
    let (rw, rz) = (rank(wi), rank(zi));

    let gm0 = quad0.resolvent(&quad0.column(rz), m2)?;
    let gm1 = quad1.resolvent(&quad1.column(rz), m2)?;
    let p_field: Vec<f64> = quad0.phi.iter().map(|&f| p_of(f)).collect();
    let pm = quad0.resolvent(&p_field, m2)?;
    let reference_m = -2.0 * PI * pm[rw] * pm[rz];
    let massive = ((gm1[rw] - gm0[rw]) / eps - reference_m).abs() / reference_m.abs();

    Ok((classical, massive))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::Rect;
    use approx::assert_relative_eq;

    fn square_map() -> RectMap {
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

    fn asym_map() -> RectMap {
        RectMap::new(
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
        .unwrap()
    }

    #[test]
    fn pq_point_values() {
        // phi = i: P = 1/pi, Q = 0; phi = 1 + i: P = Q = 1/(2 pi)
        let p_of = |phi: Cx| phi.im / (PI * phi.norm_sqr());
        let q_of = |phi: Cx| 2.0 * phi.re * phi.im / (PI * phi.norm_sqr().powi(2));
        assert_relative_eq!(p_of(Cx::new(0.0, 1.0)), 1.0 / PI, epsilon = 1e-15);
        assert_eq!(q_of(Cx::new(0.0, 1.0)), 0.0);
        assert_relative_eq!(p_of(Cx::new(1.0, 1.0)), 0.5 / PI, epsilon = 1e-15);
        assert_relative_eq!(q_of(Cx::new(1.0, 1.0)), 0.5 / PI, epsilon = 1e-15);
    }

    #[test]
    fn pq_symmetry_on_square() {
        let state = MeshState::new(&square_map(), 40).unwrap();
        let (p, q) = pq_fields(&state);
        for j in 0..state.ny {
            for i in 0..state.nx / 2 {
                let a = state.cell_index(i, j);
                let b = state.cell_index(state.nx - 1 - i, j);
                assert!((p[a] - p[b]).abs() < 1e-9 * (1.0 + p[a].abs()));
                assert!((q[a] + q[b]).abs() < 1e-9 * (1.0 + q[a].abs()));
            }
        }
    }

    #[test]
    fn helmholtz_zero_and_monotone() {
        let state = MeshState::new(&square_map(), 24).unwrap();
        let zero = helmholtz_solve(&state, 0.7, &vec![0.0; 24 * 24]).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));

        let f = vec![1.0; 24 * 24];
        let u1 = helmholtz_solve(&state, 0.1 / state.cell, &f).unwrap();
        let u2 = helmholtz_solve(&state, 0.3 / state.cell, &f).unwrap();
        for (a, b) in u1.iter().zip(&u2) {
            assert!(*b <= *a + 1e-12);
            assert!(*b >= 0.0);
        }
    }

    #[test]
    fn helmholtz_delta_matches_lattice_green() {
        use crate::lattice::{build_rect_domain, EdgeLocator, Mass};
        use crate::potential::green_field;
        let n = 16;
        let state = MeshState::new(&square_map(), n).unwrap();
        let m = 4.0;
        // same operator on a rectangular grid domain with matching q
        let dom = build_rect_domain(
            n,
            n,
            state.cell,
            EdgeLocator::BottomCenter,
            EdgeLocator::TopCenter,
            ((n / 2) as i32, (n / 2) as i32),
        )
        .unwrap();
        let w_cell = state.cell_index(4, 7);
        let mut f = vec![0.0; n * n];
        f[w_cell] = 1.0 / (state.cell * state.cell);
        let u = helmholtz_solve(&state, m, &f).unwrap();
        let g = green_field(&dom, Mass(m), (5, 8)).unwrap();
        for j in 0..n {
            for i in 0..n {
                let a = u[state.cell_index(i, j)];
                let b = g.at(&dom, (i as i32 + 1, j as i32 + 1)).unwrap();
                assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn kernels_zero_mass_degenerate() {
        let state = MeshState::new(&square_map(), 24).unwrap();
        let k = massive_kernels(&state, 0.0).unwrap();
        assert_eq!(k.p, k.p_m);
        assert_eq!(k.k0, k.k);
        assert_eq!(k.n_m, 1.0);
    }

    #[test]
    fn kernel_bounds_and_normalization() {
        let n = 48usize;
        let state = MeshState::new(&square_map(), n).unwrap();
        let rad = 0.5f64 * 2.0f64.sqrt();
        let m = 1.0 / rad;
        let k = massive_kernels(&state, m).unwrap();
        assert!(k.n_m >= 1.0);
        // generous envelope with the universal-constant shape exp(c m^2 R^2)
        assert!(k.n_m <= (2.0 * m * m * rad * rad).exp());
        let floor = (-2.0 * m * m * rad * rad).exp();
        for j in 0..n {
            for i in 0..n {
                let idx = state.cell_index(i, j);
                if !state.active[idx] {
                    continue;
                }
                // the upper bound is exact cellwise
                assert!(k.p_m[idx] <= k.p[idx] + 1e-12);
                // the lower bound is a continuum statement; corner cells of a
                // fixed mesh sit outside its reach, so test away from the
                // boundary layer
                if i >= 3 && j >= 3 && i < n - 3 && j < n - 3 {
                    assert!(
                        k.p_m[idx] >= floor * k.p[idx] - 1e-12,
                        "cell ({i},{j}): ratio {}",
                        k.p_m[idx] / k.p[idx]
                    );
                }
            }
        }
    }

    #[test]
    fn small_mass_normalization_expansion() {
        // 1 - 1/N = m^2 Int(P K0) + O(m^4)
        let state = MeshState::new(&square_map(), 40).unwrap();
        let (p, _) = pq_fields(&state);
        let mut k0 = vec![0.0; p.len()];
        for i in 0..p.len() {
            if state.active[i] {
                k0[i] = state.phi(i).im;
            }
        }
        let pk: Vec<f64> = p.iter().zip(&k0).map(|(a, b)| a * b).collect();
        let first_order = state.integrate(&pk);
        let mut errs = Vec::new();
        for m in [0.05, 0.1, 0.2] {
            let k = massive_kernels(&state, m).unwrap();
            let lhs = 1.0 - 1.0 / k.n_m;
            errs.push((m, (lhs - 4.0 * m * m * first_order).abs()));
        }
        // quartic scaling: error ratio ~ 16 when m doubles
        assert!(errs[1].1 / errs[0].1 > 8.0);
        assert!(errs[2].1 / errs[1].1 > 8.0);
    }

    #[test]
    fn lambda_zero_mass_and_symmetry() {
        let state = MeshState::new(&square_map(), 48).unwrap();
        let r0 = drift_lambda(&state, 0.0).unwrap();
        assert_eq!(r0.lambda, 0.0);
        assert_eq!(r0.n_m, 1.0);
        // symmetric start: Q odd, K even, so the integral cancels
        let r = drift_lambda(&state, 1.4).unwrap();
        assert!(r.lambda.abs() < 1e-6, "lambda = {}", r.lambda);
        assert!(r.n_m > 1.0);
    }

    #[test]
    fn lambda_translation_invariance() {
        let shifted = RectMap::new(
            Rect {
                x0: 7.0,
                y0: 0.0,
                width: 1.0,
                height: 1.0,
            },
            (7.25, 0.0),
            (7.5, 1.0),
            (7.5, 0.5),
        )
        .unwrap();
        let s1 = MeshState::new(&asym_map(), 32).unwrap();
        let s2 = MeshState::new(&shifted, 32).unwrap();
        let m = 1.2;
        let a = drift_lambda(&s1, m).unwrap().lambda;
        let b = drift_lambda(&s2, m).unwrap().lambda;
        assert_relative_eq!(a, b, max_relative = 1e-9);
    }

    #[test]
    fn lambda_quadratic_in_mass() {
        let state = MeshState::new(&asym_map(), 48).unwrap();
        let masses = [0.1, 0.2, 0.4];
        let vals: Vec<f64> = masses
            .iter()
            .map(|&m| drift_lambda(&state, m).unwrap().lambda.abs())
            .collect();
        let s1 = (vals[1] / vals[0]).ln() / 2.0f64.ln();
        let s2 = (vals[2] / vals[1]).ln() / 2.0f64.ln();
        assert!((s1 - 2.0).abs() < 0.2, "slope {s1}");
        assert!((s2 - 2.0).abs() < 0.2, "slope {s2}");
    }

    #[test]
    fn resolvent_consistency_of_kernels() {
        // exact discrete identity: m^2 G0[P_m] = (1 - m^2 d^2)(P - P_m)
        let state = MeshState::new(&square_map(), 32).unwrap();
        let m = 1.0f64;
        let k = massive_kernels(&state, m).unwrap();
        let g0pm = helmholtz_solve(&state, 0.0, &k.p_m).unwrap();
        let d2 = state.cell * state.cell;
        let mut sup = 0.0f64;
        for i in 0..k.p.len() {
            if state.active[i] {
                let lhs = m * m * g0pm[i];
                let rhs = (1.0 - m * m * d2) * (k.p[i] - k.p_m[i]);
                sup = sup.max((lhs - rhs).abs());
            }
        }
        assert!(sup < 1e-8, "sup residual {sup}");

        // continuum form of the same identity: P - P_m = m^2 G0[P_m] within
        // 1e-6; the discrete mismatch is O(m^2 cell^2), so keep m*cell small
        let state = MeshState::new(&square_map(), 64).unwrap();
        let m = 0.35f64;
        let k = massive_kernels(&state, m).unwrap();
        let g0pm = helmholtz_solve(&state, 0.0, &k.p_m).unwrap();
        let mut sup = 0.0f64;
        for i in 0..k.p.len() {
            if state.active[i] {
                sup = sup.max((k.p[i] - k.p_m[i] - m * m * g0pm[i]).abs());
            }
        }
        assert!(sup < 1e-6, "sup residual {sup}");
    }

    #[test]
    fn advance_and_mask() {
        let mut state = MeshState::new(&square_map(), 32).unwrap();
        let n0 = state.active_count();
        state.advance(0.05, 1e-3);
        assert_relative_eq!(state.capacity, 1e-3, epsilon = 1e-18);
        assert_eq!(state.xi, 0.05);
        // vertical slit masks at most a few cells near the source
        assert!(n0 - state.active_count() < 8);
        let masked = state.mask_segment((0.5, 0.02), (0.5, 0.1));
        assert!(masked >= 2);
    }

    #[test]
    fn integral_diagnostics_finite_and_stable() {
        // at time zero Int P is refinement-stable; Int P^2 is only finite
        // thanks to the mesh cutoff there (the source sits on a flat boundary
        // piece), so its stability is checked on a grown slit, where the tip
        // has the full opening angle and the integral converges
        let map = square_map();
        let s64 = MeshState::new(&map, 64).unwrap();
        let s128 = MeshState::new(&map, 128).unwrap();
        let (p1, q1) = integral_diagnostics(&s64);
        let (p2, q2) = integral_diagnostics(&s128);
        assert!(p1.is_finite() && q1.is_finite() && q2.is_finite());
        assert!((p1 - p2).abs() / p2 < 0.05, "Int P: {p1} vs {p2}");

        let grown = |n: usize| {
            let mut s = MeshState::new(&map, n).unwrap();
            for _ in 0..40 {
                s.advance(0.0, 1e-3);
            }
            let tip_h = Cx::new(0.0, 2.0 * s.capacity.sqrt());
            let tip = map.inverse(tip_h).unwrap();
            s.mask_segment((0.5, 0.0), (tip.re, tip.im));
            s
        };
        let (pa, qa) = integral_diagnostics(&grown(64));
        let (pb, qb) = integral_diagnostics(&grown(128));
        assert!((pa - pb).abs() / pb < 0.05, "slit Int P: {pa} vs {pb}");
        assert!((qa - qb).abs() / qb < 0.05, "slit Int P^2: {qa} vs {qb}");
    }

    #[test]
    fn hadamard_residuals_small() {
        let state = MeshState::new(&square_map(), 48).unwrap();
        let w = (10, 24);
        let z = (38, 30);
        let (cl, ms) = hadamard_check(&state, 0.0, 1e-4, w, z).unwrap();
        assert_eq!(cl, ms);
        assert!(cl < 1e-2, "classical residual {cl}");
        let (cl, ms) = hadamard_check(&state, 1.4, 1e-4, w, z).unwrap();
        assert!(cl < 1e-2, "classical residual {cl}");
        assert!(ms < 1e-2, "massive residual {ms}");
    }

    #[test]
    fn hadamard_rejects_bad_probes() {
        let state = MeshState::new(&square_map(), 32).unwrap();
        assert!(hadamard_check(&state, 0.0, 1e-4, (10, 10), (12, 10)).is_err());
    }
}
