//! Exact samplers for the killed walk conditioned to exit at the target,
//! chronological loop erasure, Laplacian-walk step laws, Radon–Nikodym
//! densities against the mass-zero reference, and an enumeration oracle for
//! tiny domains.

use std::collections::HashMap;

use rand::Rng;
use thiserror::Error;

use crate::lattice::{slit_component, DomainError, GridDomain, LatticeCurve, Mass, Vertex, DIRS};
use crate::potential::{hit_b_field, PotentialError};
use crate::solve::WalkSystem;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("domain too large for enumeration: {0} interior vertices (limit 9)")]
    TooLarge(usize),
    #[error("curve leaves the support of the walk law: {0}")]
    OutsideSupport(String),
}

/// Raw walk trajectory from the source's outer vertex, entering the domain
/// and ending on the target's outer vertex after crossing the target edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkPath {
    pub vertices: Vec<Vertex>,
}

impl WalkPath {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

/// A curve together with the log-density of its law under killing against
/// the mass-zero reference law.
#[derive(Debug, Clone)]
pub struct DensitySample {
    pub curve: LatticeCurve,
    pub log_density: f64,
}

/// Reusable sampler state for one (domain, mass) pair: the hitting field of
/// the target edge and the per-vertex transition weights of the conditioned
/// walk. From interior `v` the walk moves to neighbor `u` with probability
/// `(q/4) h(u) / h(v)` and crosses the target edge with the complementary
/// probability when `v` is the target's interior endpoint.
pub struct ConditionedSampler<'a> {
    dom: &'a GridDomain,
    /// cumulative neighbor weights (E,N,W,S) per vertex
    cum: Vec<[f64; 4]>,
    total: Vec<f64>,
    exit_at: u32,
}

impl<'a> ConditionedSampler<'a> {
    pub fn new(dom: &'a GridDomain, m: Mass) -> Result<Self, SamplerError> {
        let h = hit_b_field(dom, m)?;
        let q4 = m.q(dom.mesh()) / 4.0;
        let exit_at = dom.index_of(dom.b_edge().inner).unwrap();
        let mut cum = vec![[0.0; 4]; dom.len()];
        let mut total = vec![0.0; dom.len()];
        for i in 0..dom.len() {
            let mut acc = 0.0;
            for (k, &j) in dom.neighbors()[i].iter().enumerate() {
                if j != crate::lattice::NO_NEIGHBOR {
                    acc += q4 * h.values[j as usize];
                }
                cum[i][k] = acc;
            }
            total[i] = acc + if i as u32 == exit_at { 1.0 } else { 0.0 };
        }
        Ok(ConditionedSampler {
            dom,
            cum,
            total,
            exit_at,
        })
    }

    /// First-step weights from the source's outer vertex (one per boundary
    /// edge of that vertex, proportional to the hitting field inside).
    fn entry(&self) -> Vec<(u32, f64)> {
        let a = self.dom.a_edge().outer;
        self.dom
            .interior_neighbors_of(a)
            .into_iter()
            .map(|i| {
                // weight proportional to h(inner); recover h from any stored
                // cumulative row is awkward, so recompute from totals
                (i, self.h_value(i))
            })
            .collect()
    }

    fn h_value(&self, i: u32) -> f64 {
        // h(v) = total(v) by the defining identity of the hitting field
        self.total[i as usize]
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> WalkPath {
        let dom = self.dom;
        let mut vertices = Vec::with_capacity(64);
        vertices.push(dom.a_edge().outer);

        // enter the domain
        let entry = self.entry();
        let mut cur: u32 = if entry.len() == 1 {
            entry[0].0
        } else {
            let total: f64 = entry.iter().map(|e| e.1).sum();
            let mut x = rng.gen::<f64>() * total;
            let mut chosen = entry[entry.len() - 1].0;
            for &(i, w) in &entry {
                if x < w {
                    chosen = i;
                    break;
                }
                x -= w;
            }
            chosen
        };
        vertices.push(dom.vertex(cur));

        loop {
            let i = cur as usize;
            let x = rng.gen::<f64>() * self.total[i];
            // neighbor moves occupy [0, cum[3]); the exit mass sits on top
            let row = &self.cum[i];
            if x < row[3] {
                let k = if x < row[1] {
                    if x < row[0] {
                        0
                    } else {
                        1
                    }
                } else if x < row[2] {
                    2
                } else {
                    3
                };
                cur = dom.neighbors()[i][k];
                debug_assert_ne!(cur, crate::lattice::NO_NEIGHBOR);
                vertices.push(dom.vertex(cur));
            } else {
                debug_assert_eq!(cur, self.exit_at, "exit mass only at the target endpoint");
                vertices.push(dom.b_edge().outer);
                return WalkPath { vertices };
            }
        }
    }
}

/// Sample the killed walk conditioned to exit across the target edge.
pub fn conditioned_walk<R: Rng>(
    dom: &GridDomain,
    m: Mass,
    rng: &mut R,
) -> Result<WalkPath, SamplerError> {
    Ok(ConditionedSampler::new(dom, m)?.sample(rng))
}

/// Chronological loop erasure of a vertex sequence.
pub fn loop_erase_vertices(path: &[Vertex]) -> Vec<Vertex> {
    let mut curve: Vec<Vertex> = Vec::with_capacity(path.len().min(64));
    let mut pos: HashMap<Vertex, usize> = HashMap::with_capacity(path.len().min(64));
    for &v in path {
        if let Some(&k) = pos.get(&v) {
            for dropped in curve.drain(k + 1..) {
                pos.remove(&dropped);
            }
        } else {
            pos.insert(v, curve.len());
            curve.push(v);
        }
    }
    curve
}

pub fn loop_erase(path: &WalkPath) -> LatticeCurve {
    LatticeCurve {
        vertices: loop_erase_vertices(&path.vertices),
        simple: true,
    }
}

/// Loop-erased conditioned walk: one draw from the killed-LERW law.
pub fn sample_mlerw<R: Rng>(
    dom: &GridDomain,
    m: Mass,
    rng: &mut R,
) -> Result<LatticeCurve, SamplerError> {
    Ok(loop_erase(&conditioned_walk(dom, m, rng)?))
}

/// Next-step law of the curve-growth chain on a slit domain whose source
/// vertex is the current tip: `P(next = w)` is proportional to `(q/4) h(w)`
/// over the tip's neighbors in the slit interior. The raw normalizing
/// constant is returned alongside. The target endpoint itself terminates the
/// curve with probability one and never appears as a tip here.
#[derive(Debug, Clone)]
pub struct StepLaw {
    pub moves: Vec<(Vertex, f64)>,
    pub normalizer: f64,
}

pub fn laplacian_walk_step(dom_t: &GridDomain, m: Mass) -> Result<StepLaw, SamplerError> {
    let h = hit_b_field(dom_t, m)?;
    let q4 = m.q(dom_t.mesh()) / 4.0;
    let tip = dom_t.a_edge().outer;
    let mut moves: Vec<(Vertex, f64)> = Vec::new();
    let mut total = 0.0;
    for d in DIRS {
        let u = (tip.0 + d.0, tip.1 + d.1);
        if let Some(i) = dom_t.index_of(u) {
            let w = q4 * h.values[i as usize];
            total += w;
            moves.push((u, w));
        }
    }
    assert!(
        total > 0.0,
        "trapped tip cannot occur while the target component is tracked"
    );
    for mv in &mut moves {
        mv.1 /= total;
    }
    Ok(StepLaw {
        moves,
        normalizer: total,
    })
}

/// Step probability of `next` from the given slit domain, zero if inadmissible.
fn step_probability(dom_t: &GridDomain, m: Mass, next: Vertex) -> Result<f64, SamplerError> {
    let law = laplacian_walk_step(dom_t, m)?;
    Ok(law
        .moves
        .iter()
        .find(|(v, _)| *v == next)
        .map(|(_, p)| *p)
        .unwrap_or(0.0))
}

/// Log Radon–Nikodym density of a curve under the killed law against the
/// mass-zero law, accumulated step by step along the curve-growth chain.
pub fn rn_density(
    dom: &GridDomain,
    m: Mass,
    curve: &LatticeCurve,
) -> Result<DensitySample, SamplerError> {
    if m.0 == 0.0 {
        return Ok(DensitySample {
            curve: curve.clone(),
            log_density: 0.0,
        });
    }
    let n = curve.vertices.len();
    if n < 3 {
        return Err(SamplerError::OutsideSupport(
            "curve must run from source to target".into(),
        ));
    }
    let mut log_density = 0.0;

    // entry step: branching only when the source vertex has several edges
    let entry = dom.interior_neighbors_of(curve.vertices[0]);
    if entry.len() > 1 {
        let p = |mass: Mass| -> Result<f64, SamplerError> {
            let h = hit_b_field(dom, mass)?;
            let total: f64 = entry.iter().map(|&i| h.values[i as usize]).sum();
            let at: f64 = dom
                .index_of(curve.vertices[1])
                .map(|i| h.values[i as usize])
                .unwrap_or(0.0);
            Ok(at / total)
        };
        let pm = p(m)?;
        let p0 = p(Mass::ZERO)?;
        if pm <= 0.0 || p0 <= 0.0 {
            return Err(SamplerError::OutsideSupport("entry step".into()));
        }
        log_density += pm.ln() - p0.ln();
    }

    // interior growth steps; the final crossing to the target's outer vertex
    // has probability one under both laws
    for k in 1..n - 2 {
        let prefix = LatticeCurve {
            vertices: curve.vertices[..=k].to_vec(),
            simple: true,
        };
        let dom_k = slit_component(dom, &prefix)?;
        let tip = curve.vertices[k];
        let options = dom_k.interior_neighbors_of(tip);
        if options.len() <= 1 {
            continue; // forced step, probability one under both laws
        }
        let next = curve.vertices[k + 1];
        let pm = step_probability(&dom_k, m, next)?;
        let p0 = step_probability(&dom_k, Mass::ZERO, next)?;
        if pm <= 0.0 || p0 <= 0.0 {
            return Err(SamplerError::OutsideSupport(format!(
                "step {k} to {next:?}"
            )));
        }
        log_density += pm.ln() - p0.ln();
    }

    Ok(DensitySample {
        curve: curve.clone(),
        log_density,
    })
}

/// Partition function rooted at `root` on the raw vertex set `interior of
/// dom minus removed` (possibly disconnected), evaluated at every vertex.
fn subset_green(
    dom: &GridDomain,
    removed: &std::collections::HashSet<Vertex>,
    q: f64,
    root: Vertex,
) -> (Vec<Vertex>, Vec<f64>) {
    let present: Vec<Vertex> = dom
        .interior()
        .iter()
        .copied()
        .filter(|v| !removed.contains(v))
        .collect();
    let index: HashMap<Vertex, u32> = present
        .iter()
        .enumerate()
        .map(|(i, &x)| (x, i as u32))
        .collect();
    let nbr: Vec<[u32; 4]> = present
        .iter()
        .map(|&x| {
            let mut row = [crate::lattice::NO_NEIGHBOR; 4];
            for (k, d) in DIRS.iter().enumerate() {
                if let Some(&j) = index.get(&(x.0 + d.0, x.1 + d.1)) {
                    row[k] = j;
                }
            }
            row
        })
        .collect();
    let sys = WalkSystem::new(nbr, q / 4.0);
    let mut rhs = vec![0.0; present.len()];
    rhs[index[&root] as usize] = 1.0;
    let sol = sys.solve(&rhs, 1e-13, None).expect("subset solve");
    (present, sol)
}

/// Observable value at the stopping step: the curve has just stepped onto
/// `tip`, and the partition functions are taken on the raw remaining vertex
/// set (all components), which is the value the stopped martingale carries.
fn observable_at_step(
    base: &GridDomain,
    removed: &std::collections::HashSet<Vertex>,
    tip: Vertex,
    m: Mass,
    v: Vertex,
    norm: f64,
) -> f64 {
    let q = m.q(base.mesh());
    let q4 = q / 4.0;
    let b_in = base.b_edge().inner;
    // mass of walks from the tip across the target edge, counting the step
    // off the tip; a tip at the target endpoint exits directly with weight one
    let denom = if tip == b_in {
        1.0
    } else {
        let (present, h) = subset_green(base, removed, q, b_in);
        let index: HashMap<Vertex, usize> =
            present.iter().enumerate().map(|(i, &x)| (x, i)).collect();
        q4 * DIRS
            .iter()
            .filter_map(|d| index.get(&(tip.0 + d.0, tip.1 + d.1)))
            .map(|&i| h[i])
            .sum::<f64>()
    };
    // mass of walks from the tip to the probe; the empty walk when the step
    // landed on the probe itself
    let num = if v == tip {
        1.0
    } else {
        let (present, g) = subset_green(base, removed, q, v);
        let index: HashMap<Vertex, usize> =
            present.iter().enumerate().map(|(i, &x)| (x, i)).collect();
        q4 * DIRS
            .iter()
            .filter_map(|d| index.get(&(tip.0 + d.0, tip.1 + d.1)))
            .map(|&i| g[i])
            .sum::<f64>()
    };
    num / denom * norm
}

/// Exact one-step expectation of the observable at probe `v`, conditioned on
/// the curve prefix: `sum_w P(step = w) * M_after(w)`, where steps that hit
/// `v`, disconnect it, or terminate the curve carry the observable value at
/// that stopping step. For the martingale property this must equal the
/// current value, which is returned alongside.
pub fn observable_one_step_expectation(
    base: &GridDomain,
    prefix: &LatticeCurve,
    m: Mass,
    v: Vertex,
) -> Result<(f64, f64), SamplerError> {
    use crate::potential::{hit_b_field as hb, observable, ObservableValue};
    let dom_t = slit_component(base, prefix)?;
    let now = match observable(&dom_t, base, m, v)? {
        ObservableValue::Value(x) => x,
        ObservableValue::Stopped => {
            return Err(SamplerError::OutsideSupport(
                "probe vertex already stopped".into(),
            ))
        }
    };
    let norm = hb(base, Mass::ZERO)?
        .at(base, base.origin())
        .expect("origin is interior");
    let law = laplacian_walk_step(&dom_t, m)?;
    let mut removed: std::collections::HashSet<Vertex> = prefix
        .vertices
        .iter()
        .copied()
        .filter(|x| base.contains(*x))
        .collect();
    // vertices already cut off from the target play no further role
    for x in base.interior() {
        if !dom_t.contains(*x) {
            removed.insert(*x);
        }
    }
    let mut expectation = 0.0;
    for (w, p) in &law.moves {
        removed.insert(*w);
        let value = {
            // when the step neither terminates nor touches the probe and the
            // probe stays connected, this equals the plain observable of the
            // new slit domain
            observable_at_step(base, &removed, *w, m, v, norm)
        };
        removed.remove(w);
        expectation += p * value;
    }
    Ok((expectation, now))
}

/// Exact curve law on a tiny domain, as unnormalized loop-expansion weights:
/// a curve with interior vertices `g_1..g_p` carries
/// `prod_j G_{D_{j-1}}(g_j, g_j) * (q/4)^(p-1)`, where `D_j` removes the
/// first `j` interior curve vertices. Dividing by the total weight (which
/// equals the source-to-target partition function) gives probabilities.
#[derive(Debug, Clone)]
pub struct EnumeratedLaw {
    pub curves: Vec<(LatticeCurve, f64)>,
    pub total_weight: f64,
}

impl EnumeratedLaw {
    pub fn probability_of(&self, curve: &LatticeCurve) -> f64 {
        self.curves
            .iter()
            .find(|(c, _)| c == curve)
            .map(|(_, p)| *p)
            .unwrap_or(0.0)
    }
}

pub fn enumerate_tiny(dom: &GridDomain, m: Mass) -> Result<EnumeratedLaw, SamplerError> {
    if dom.len() > 9 {
        return Err(SamplerError::TooLarge(dom.len()));
    }
    let q = m.q(dom.mesh());
    if !m.admissible(dom.mesh()) {
        return Err(SamplerError::Potential(PotentialError::MassTooLarge(
            m.0 * dom.mesh(),
        )));
    }
    let a_out = dom.a_edge().outer;
    let b_out = dom.b_edge().outer;
    let b_in = dom.b_edge().inner;

    // Green diagonal at `v` on the sub-lattice of still-present vertices;
    // the sub-lattice may be disconnected, which is fine for a dense solve.
    let green_diag = |present: &Vec<Vertex>, v: Vertex| -> f64 {
        let index: HashMap<Vertex, u32> = present
            .iter()
            .enumerate()
            .map(|(i, &x)| (x, i as u32))
            .collect();
        let nbr: Vec<[u32; 4]> = present
            .iter()
            .map(|&x| {
                let mut row = [crate::lattice::NO_NEIGHBOR; 4];
                for (k, d) in DIRS.iter().enumerate() {
                    if let Some(&j) = index.get(&(x.0 + d.0, x.1 + d.1)) {
                        row[k] = j;
                    }
                }
                row
            })
            .collect();
        let sys = WalkSystem::new(nbr, q / 4.0);
        let mut rhs = vec![0.0; present.len()];
        let vi = index[&v] as usize;
        rhs[vi] = 1.0;
        sys.solve(&rhs, 1e-13, None).expect("tiny dense solve")[vi]
    };

    let mut out: Vec<(LatticeCurve, f64)> = Vec::new();

    struct Dfs {
        q: f64,
        b_in: Vertex,
        a_out: Vertex,
        b_out: Vertex,
    }
    impl Dfs {
        #[allow(clippy::too_many_arguments)]
        fn go(
            &self,
            present: &mut Vec<Vertex>,
            path: &mut Vec<Vertex>,
            weight: f64,
            green_diag: &dyn Fn(&Vec<Vertex>, Vertex) -> f64,
            out: &mut Vec<(LatticeCurve, f64)>,
        ) {
            let cur = *path.last().unwrap();
            let w_here = weight * green_diag(present, cur);
            if cur == self.b_in {
                let mut vertices = vec![self.a_out];
                vertices.extend_from_slice(path);
                vertices.push(self.b_out);
                out.push((
                    LatticeCurve {
                        vertices,
                        simple: true,
                    },
                    w_here,
                ));
                return;
            }
            let removed_pos = present.iter().position(|&x| x == cur).unwrap();
            present.swap_remove(removed_pos);
            for d in DIRS {
                let u = (cur.0 + d.0, cur.1 + d.1);
                if present.contains(&u) {
                    path.push(u);
                    self.go(present, path, w_here * self.q / 4.0, green_diag, out);
                    path.pop();
                }
            }
            present.push(cur);
        }
    }

    let dfs = Dfs {
        q,
        b_in,
        a_out,
        b_out,
    };
    let mut present: Vec<Vertex> = dom.interior().to_vec();
    for first in dom.interior_neighbors_of(a_out) {
        let v = dom.vertex(first);
        let mut path = vec![v];
        // entry edge is free: initial weight one
        dfs.go(&mut present, &mut path, 1.0, &green_diag, &mut out);
    }

    let total_weight: f64 = out.iter().map(|(_, w)| w).sum();
    assert!(total_weight > 0.0, "no admissible curve from source to target");
    let curves = out
        .into_iter()
        .map(|(c, w)| (c, w / total_weight))
        .collect();
    Ok(EnumeratedLaw {
        curves,
        total_weight,
    })
}
