//! Discrete domains on the square grid.
//!
//! A domain is a connected set of interior vertices of `mesh * Z^2` together
//! with its boundary *edges*: ordered pairs `(outer, inner)` where `outer` is
//! not interior and `inner` is. The same outer vertex may carry several
//! boundary edges; each edge is a distinct way for a walk to leave the domain.
//! Two edges are marked: `a` (source) and `b` (target). All topology is
//! integer-exact; the mesh length only enters when converting to continuum
//! coordinates.

use std::collections::{HashMap, VecDeque};
use thiserror::Error;

/// Lattice vertex in integer coordinates; absolute position is `coord * mesh`.
pub type Vertex = (i32, i32);

/// Neighbor offsets in the fixed priority order E, N, W, S.
pub const DIRS: [(i32, i32); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

pub const NO_NEIGHBOR: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("interior is empty")]
    EmptyInterior,
    #[error("interior is not connected")]
    NotConnected,
    #[error("invalid boundary edge {0:?} -> {1:?}")]
    BadEdge(Vertex, Vertex),
    #[error("source and target edges coincide")]
    SourceEqualsTarget,
    #[error("origin {0:?} is not an interior vertex")]
    OriginOutside(Vertex),
    #[error("edge locator out of range")]
    LocatorOutOfRange,
    #[error("target swallowed by the slit")]
    TargetSwallowed,
    #[error("slit tip {0:?} is not adjacent to the remaining domain")]
    TipDetached(Vertex),
    #[error("curve is not admissible: {0}")]
    BadCurve(String),
    #[error("mesh length must be positive")]
    BadMesh,
}

/// Boundary edge `(outer, inner)`: `outer` lies outside the interior set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoundaryEdge {
    pub outer: Vertex,
    pub inner: Vertex,
}

/// Locator for a boundary edge of a `cols x rows` rectangular block.
/// Offsets are 1-based column/row indices; `*Center` picks `(n + 1) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeLocator {
    Bottom(i32),
    Top(i32),
    Left(i32),
    Right(i32),
    BottomCenter,
    TopCenter,
    LeftCenter,
    RightCenter,
}

impl EdgeLocator {
    fn resolve(self, cols: i32, rows: i32) -> Result<BoundaryEdge, DomainError> {
        let ccol = (cols + 1) / 2;
        let crow = (rows + 1) / 2;
        let (outer, inner) = match self {
            EdgeLocator::Bottom(i) => ((i, 0), (i, 1)),
            EdgeLocator::Top(i) => ((i, rows + 1), (i, rows)),
            EdgeLocator::Left(j) => ((0, j), (1, j)),
            EdgeLocator::Right(j) => ((cols + 1, j), (cols, j)),
            EdgeLocator::BottomCenter => ((ccol, 0), (ccol, 1)),
            EdgeLocator::TopCenter => ((ccol, rows + 1), (ccol, rows)),
            EdgeLocator::LeftCenter => ((0, crow), (1, crow)),
            EdgeLocator::RightCenter => ((cols + 1, crow), (cols, crow)),
        };
        if inner.0 < 1 || inner.0 > cols || inner.1 < 1 || inner.1 > rows {
            return Err(DomainError::LocatorOutOfRange);
        }
        Ok(BoundaryEdge { outer, inner })
    }
}

/// A finite connected subgraph of the square grid with marked source and
/// target boundary edges and a normalization vertex.
///
/// Immutable after construction; all operations return new domains.
#[derive(Debug, Clone)]
pub struct GridDomain {
    mesh: f64,
    interior: Vec<Vertex>,
    index: HashMap<Vertex, u32>,
    /// For each interior vertex, indices of its interior neighbors in the
    /// E, N, W, S order; `NO_NEIGHBOR` where the neighbor is not interior.
    neighbors: Vec<[u32; 4]>,
    boundary_edges: Vec<BoundaryEdge>,
    a_edge: usize,
    b_edge: usize,
    origin: Vertex,
}

impl GridDomain {
    /// Build a domain from an explicit interior cell list.
    ///
    /// Boundary edges are enumerated in canonical order (interior vertices
    /// sorted lexicographically, directions E, N, W, S), which keeps every
    /// downstream computation deterministic.
    pub fn from_cells(
        mesh: f64,
        cells: &[Vertex],
        a: BoundaryEdge,
        b: BoundaryEdge,
        origin: Vertex,
    ) -> Result<Self, DomainError> {
        if !(mesh > 0.0) {
            return Err(DomainError::BadMesh);
        }
        if cells.is_empty() {
            return Err(DomainError::EmptyInterior);
        }
        let mut interior: Vec<Vertex> = cells.to_vec();
        interior.sort_unstable();
        interior.dedup();

        let index: HashMap<Vertex, u32> = interior
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, i as u32))
            .collect();

        // connectivity under 4-adjacency
        let mut seen = vec![false; interior.len()];
        let mut queue = VecDeque::new();
        seen[0] = true;
        queue.push_back(interior[0]);
        let mut count = 1usize;
        while let Some(v) = queue.pop_front() {
            for d in DIRS {
                let u = (v.0 + d.0, v.1 + d.1);
                if let Some(&i) = index.get(&u) {
                    if !seen[i as usize] {
                        seen[i as usize] = true;
                        count += 1;
                        queue.push_back(u);
                    }
                }
            }
        }
        if count != interior.len() {
            return Err(DomainError::NotConnected);
        }

        let mut neighbors = vec![[NO_NEIGHBOR; 4]; interior.len()];
        let mut boundary_edges = Vec::new();
        for (i, &v) in interior.iter().enumerate() {
            for (k, d) in DIRS.iter().enumerate() {
                let u = (v.0 + d.0, v.1 + d.1);
                match index.get(&u) {
                    Some(&j) => neighbors[i][k] = j,
                    None => boundary_edges.push(BoundaryEdge { outer: u, inner: v }),
                }
            }
        }

        let find_edge = |e: BoundaryEdge| -> Result<usize, DomainError> {
            boundary_edges
                .iter()
                .position(|&x| x == e)
                .ok_or(DomainError::BadEdge(e.outer, e.inner))
        };
        let a_edge = find_edge(a)?;
        let b_edge = find_edge(b)?;
        if a_edge == b_edge {
            return Err(DomainError::SourceEqualsTarget);
        }
        if !index.contains_key(&origin) {
            return Err(DomainError::OriginOutside(origin));
        }

        Ok(GridDomain {
            mesh,
            interior,
            index,
            neighbors,
            boundary_edges,
            a_edge,
            b_edge,
            origin,
        })
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    pub fn interior(&self) -> &[Vertex] {
        &self.interior
    }

    pub fn len(&self) -> usize {
        self.interior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interior.is_empty()
    }

    pub fn contains(&self, v: Vertex) -> bool {
        self.index.contains_key(&v)
    }

    pub fn index_of(&self, v: Vertex) -> Option<u32> {
        self.index.get(&v).copied()
    }

    pub fn vertex(&self, i: u32) -> Vertex {
        self.interior[i as usize]
    }

    /// Interior-neighbor index table in E, N, W, S order.
    pub fn neighbors(&self) -> &[[u32; 4]] {
        &self.neighbors
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn a_edge(&self) -> BoundaryEdge {
        self.boundary_edges[self.a_edge]
    }

    pub fn b_edge(&self) -> BoundaryEdge {
        self.boundary_edges[self.b_edge]
    }

    pub fn a_edge_index(&self) -> usize {
        self.a_edge
    }

    pub fn b_edge_index(&self) -> usize {
        self.b_edge
    }

    pub fn origin(&self) -> Vertex {
        self.origin
    }

    /// Absolute position of a lattice vertex.
    pub fn position(&self, v: Vertex) -> (f64, f64) {
        (v.0 as f64 * self.mesh, v.1 as f64 * self.mesh)
    }

    /// Midpoint of a boundary edge: the point where a crossing walk meets the
    /// polygonal boundary of the domain.
    pub fn edge_crossing(&self, e: BoundaryEdge) -> (f64, f64) {
        (
            (e.outer.0 + e.inner.0) as f64 * 0.5 * self.mesh,
            (e.outer.1 + e.inner.1) as f64 * 0.5 * self.mesh,
        )
    }

    /// Indices of interior vertices adjacent to `v` (itself not interior),
    /// in E, N, W, S order. Used for vertex-rooted partition functions.
    pub fn interior_neighbors_of(&self, v: Vertex) -> Vec<u32> {
        DIRS.iter()
            .filter_map(|d| self.index_of((v.0 + d.0, v.1 + d.1)))
            .collect()
    }

    /// Bounding rectangle of the polygonal representation (half-cell margins).
    /// Returns `(x0, y0, width, height)`.
    pub fn hull_rect(&self) -> (f64, f64, f64, f64) {
        let (mut i0, mut i1, mut j0, mut j1) = (i32::MAX, i32::MIN, i32::MAX, i32::MIN);
        for &(i, j) in &self.interior {
            i0 = i0.min(i);
            i1 = i1.max(i);
            j0 = j0.min(j);
            j1 = j1.max(j);
        }
        let d = self.mesh;
        (
            (i0 as f64 - 0.5) * d,
            (j0 as f64 - 0.5) * d,
            (i1 - i0 + 1) as f64 * d,
            (j1 - j0 + 1) as f64 * d,
        )
    }

    /// True when the interior fills its bounding block exactly.
    pub fn is_rectangular(&self) -> bool {
        let (mut i0, mut i1, mut j0, mut j1) = (i32::MAX, i32::MIN, i32::MAX, i32::MIN);
        for &(i, j) in &self.interior {
            i0 = i0.min(i);
            i1 = i1.max(i);
            j0 = j0.min(j);
            j1 = j1.max(j);
        }
        (i1 - i0 + 1) as usize * (j1 - j0 + 1) as usize == self.interior.len()
    }

    /// Radius of the smallest disc about the hull center containing the
    /// polygonal domain; the scale entering killing-rate bounds.
    pub fn bound_radius(&self) -> f64 {
        let (_, _, w, h) = self.hull_rect();
        0.5 * (w * w + h * h).sqrt()
    }
}

/// Walk-killing intensity. `q(mesh) = 1 - m^2 mesh^2` is the per-step
/// survival weight factor; validity requires `m * mesh <= 1/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mass(pub f64);

impl Mass {
    pub const ZERO: Mass = Mass(0.0);

    pub fn q(self, mesh: f64) -> f64 {
        1.0 - self.0 * self.0 * mesh * mesh
    }

    pub fn admissible(self, mesh: f64) -> bool {
        self.0 >= 0.0 && self.0 * mesh <= 0.5 + 1e-12
    }
}

/// Vertex sequence on the lattice; `simple` means no vertex repeats.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeCurve {
    pub vertices: Vec<Vertex>,
    pub simple: bool,
}

impl LatticeCurve {
    pub fn new(vertices: Vec<Vertex>) -> Result<Self, DomainError> {
        for w in vertices.windows(2) {
            let d = ((w[1].0 - w[0].0).abs(), (w[1].1 - w[0].1).abs());
            if d != (1, 0) && d != (0, 1) {
                return Err(DomainError::BadCurve(format!(
                    "vertices {:?} and {:?} are not adjacent",
                    w[0], w[1]
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        let simple = vertices.iter().all(|v| seen.insert(*v));
        Ok(LatticeCurve { vertices, simple })
    }

    pub fn empty() -> Self {
        LatticeCurve {
            vertices: Vec::new(),
            simple: true,
        }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn tip(&self) -> Option<Vertex> {
        self.vertices.last().copied()
    }
}

/// Canonical rectangular test domain: `cols x rows` interior vertices at
/// `(1..=cols) x (1..=rows)` with boundary edges all around.
pub fn build_rect_domain(
    cols: usize,
    rows: usize,
    mesh: f64,
    a_pos: EdgeLocator,
    b_pos: EdgeLocator,
    origin: Vertex,
) -> Result<GridDomain, DomainError> {
    if cols == 0 || rows == 0 {
        return Err(DomainError::EmptyInterior);
    }
    let (cols, rows) = (cols as i32, rows as i32);
    let mut cells = Vec::with_capacity((cols * rows) as usize);
    for i in 1..=cols {
        for j in 1..=rows {
            cells.push((i, j));
        }
    }
    let a = a_pos.resolve(cols, rows)?;
    let b = b_pos.resolve(cols, rows)?;
    GridDomain::from_cells(mesh, &cells, a, b, origin)
}

/// Remove the interior vertices of `curve` and keep the connected component
/// containing the target. The curve tip becomes the new source vertex; its
/// edge into the new interior is chosen by the fixed E, N, W, S priority.
pub fn slit_component(dom: &GridDomain, curve: &LatticeCurve) -> Result<GridDomain, DomainError> {
    if !curve.simple {
        return Err(DomainError::BadCurve("curve must be simple".into()));
    }
    let removed: Vec<Vertex> = curve
        .vertices
        .iter()
        .copied()
        .filter(|v| dom.contains(*v))
        .collect();
    if removed.is_empty() {
        return Ok(dom.clone());
    }
    let removed_set: std::collections::HashSet<Vertex> = removed.iter().copied().collect();
    let b = dom.b_edge();
    if removed_set.contains(&b.inner) {
        return Err(DomainError::TargetSwallowed);
    }

    // flood fill from the target's interior endpoint
    let mut component = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(b.inner);
    queue.push_back(b.inner);
    while let Some(v) = queue.pop_front() {
        component.push(v);
        for d in DIRS {
            let u = (v.0 + d.0, v.1 + d.1);
            if dom.contains(u) && !removed_set.contains(&u) && seen.insert(u) {
                queue.push_back(u);
            }
        }
    }
    let comp_set: std::collections::HashSet<Vertex> = component.iter().copied().collect();

    let tip = *curve.vertices.last().unwrap();
    let tip_edge = DIRS
        .iter()
        .map(|d| (tip.0 + d.0, tip.1 + d.1))
        .find(|u| comp_set.contains(u))
        .map(|u| BoundaryEdge {
            outer: tip,
            inner: u,
        })
        .ok_or(DomainError::TipDetached(tip))?;

    let origin = if comp_set.contains(&dom.origin()) {
        dom.origin()
    } else {
        b.inner
    };
    GridDomain::from_cells(dom.mesh(), &component, tip_edge, b, origin)
}

/// Interior vertices whose inner distance to the target edge is `< r`.
///
/// The inner distance of `z` is `mesh * (1/2 + d)` where `d` is the BFS step
/// count from the target's interior endpoint through the domain; the half step
/// accounts for crossing the target edge itself.
pub fn inner_ball(dom: &GridDomain, r: f64) -> Vec<Vertex> {
    let b = dom.b_edge();
    let start = dom.index_of(b.inner).expect("target endpoint is interior");
    let mut dist = vec![u32::MAX; dom.len()];
    dist[start as usize] = 0;
    let mut queue = VecDeque::new();
    queue.push_back(start);
    while let Some(i) = queue.pop_front() {
        for &j in &dom.neighbors()[i as usize] {
            if j != NO_NEIGHBOR && dist[j as usize] == u32::MAX {
                dist[j as usize] = dist[i as usize] + 1;
                queue.push_back(j);
            }
        }
    }
    let mut out = Vec::new();
    for (i, &d) in dist.iter().enumerate() {
        if d != u32::MAX && dom.mesh() * (0.5 + d as f64) < r {
            out.push(dom.interior()[i]);
        }
    }
    out
}
