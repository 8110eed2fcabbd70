//! Measurement graphs and their spectral noise-tolerance bounds.
//!
//! A [`CameraGraph`] is an undirected simple graph on vertices `0..n`
//! whose edge `(i, j)` carries a relative rotation measurement `R̃_ij`
//! approximating `R_iᵀ R_j`. The spectral summary exposes the graph
//! Laplacian, its algebraic connectivity (Fiedler value λ₂), and the
//! maximum degree, from which [`alpha_max_bound`] computes the largest
//! measurement-error angle that still guarantees certified global
//! optimality:
//!
//! ```text
//! α_max = 2 · arcsin( √(1/4 + λ₂/(2 d_max)) − 1/2 )
//! ```
//!
//! For single-cycle graphs [`cycle_bound`] gives the sharp threshold π/n,
//! which strictly improves on the spectral bound.
//!
//! Connectivity is decided by union-find (authoritative) and
//! cross-checked against λ₂ > τ_conn; the two must agree.

use nalgebra::{DMatrix, DVector};

use crate::eig;
use crate::so3::Rotation;
use crate::{Error, Result};

/// λ₂ threshold used only to cross-check the union-find connectivity
/// decision.
pub const TAU_CONN: f64 = 1e-8;

/// Above this vertex count λ₂ is computed by Lanczos iteration (with the
/// constant vector deflated) instead of a dense eigensolve.
const DENSE_FIEDLER_LIMIT: usize = 2000;

/// An undirected measurement edge; `i < j` always holds and the
/// measurement is oriented so that `R_i R̃_ij ≈ R_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub measurement: Rotation,
}

/// A connected-or-not simple graph of relative rotation measurements.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraGraph {
    n: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl CameraGraph {
    /// Builds a graph on vertices `0..n` from `(i, j, R̃_ij)` triples.
    ///
    /// Edges may be given in either orientation; `(j, i, R̃)` is stored as
    /// `(i, j, R̃ᵀ)`. Self-loops, out-of-range indices, and duplicate
    /// edges (in any orientation) are hard errors — a duplicate is almost
    /// always a data bug, and averaging measurements silently would mask
    /// it.
    pub fn new(n: usize, edges: Vec<(usize, usize, Rotation)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("graph needs at least one vertex".into()));
        }
        let mut normalized: Vec<Edge> = Vec::with_capacity(edges.len());
        for (i, j, m) in edges {
            if i == j {
                return Err(Error::InvalidInput(format!("self-loop at vertex {i}")));
            }
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!(
                    "edge ({i}, {j}) references a vertex outside 0..{n}"
                )));
            }
            if i < j {
                normalized.push(Edge { i, j, measurement: m });
            } else {
                normalized.push(Edge { i: j, j: i, measurement: m.transpose() });
            }
        }
        normalized.sort_by_key(|e| (e.i, e.j));
        for w in normalized.windows(2) {
            if w[0].i == w[1].i && w[0].j == w[1].j {
                return Err(Error::InvalidInput(format!(
                    "duplicate edge ({}, {})",
                    w[0].i, w[0].j
                )));
            }
        }

        let mut adjacency = vec![Vec::new(); n];
        for (idx, e) in normalized.iter().enumerate() {
            adjacency[e.i].push((e.j, idx));
            adjacency[e.j].push((e.i, idx));
        }
        Ok(CameraGraph { n, edges: normalized, adjacency })
    }

    /// Number of vertices.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges sorted lexicographically by `(i, j)`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbors of `v` as `(neighbor, edge index)` pairs.
    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adjacency[v]
    }

    /// Degree of vertex `v`.
    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    /// Maximum vertex degree.
    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    /// Union-find connectivity; this is the authoritative answer.
    pub fn is_connected(&self) -> bool {
        let mut uf = UnionFind::new(self.n);
        for e in &self.edges {
            uf.union(e.i, e.j);
        }
        (1..self.n).all(|v| uf.find(v) == uf.find(0))
    }

    /// True when the graph is a single simple cycle (so the sharp
    /// [`cycle_bound`] applies).
    pub fn is_cycle_graph(&self) -> bool {
        self.n >= 3 && self.edges.len() == self.n && self.is_connected()
            && (0..self.n).all(|v| self.degree(v) == 2)
    }

    /// The dense graph Laplacian `L = D − A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            l[(e.i, e.i)] += 1.0;
            l[(e.j, e.j)] += 1.0;
            l[(e.i, e.j)] -= 1.0;
            l[(e.j, e.i)] -= 1.0;
        }
        l
    }
}

/// Spectral quantities of a measurement graph used by the noise bounds.
#[derive(Clone, Debug)]
pub struct SpectralSummary {
    /// The graph Laplacian (rows sum to zero).
    pub laplacian: DMatrix<f64>,
    /// Algebraic connectivity λ₂(L).
    pub fiedler_value: f64,
    /// Maximum vertex degree.
    pub d_max: usize,
    /// Union-find connectivity.
    pub connected: bool,
}

/// Computes the Laplacian, its Fiedler value, the maximum degree, and
/// connectivity.
///
/// λ₂ comes from a dense symmetric eigensolve up to 2000 vertices and from
/// Lanczos iteration (constant vector deflated explicitly) above that.
pub fn spectral_summary(g: &CameraGraph) -> SpectralSummary {
    let laplacian = g.laplacian();
    let d_max = g.max_degree();
    let connected = g.is_connected();

    let fiedler_value = if g.n() == 1 {
        0.0
    } else if g.n() <= DENSE_FIEDLER_LIMIT {
        eig::dense_eigenvalues_ascending(laplacian.clone())[1]
    } else {
        fiedler_by_lanczos(g)
    };

    debug_assert_eq!(
        connected,
        g.n() == 1 || fiedler_value > TAU_CONN,
        "union-find and λ₂ = {fiedler_value} disagree about connectivity"
    );

    SpectralSummary { laplacian, fiedler_value, d_max, connected }
}

/// λ₂ via Lanczos on `L + μ·(1 1ᵀ)/n`, which shifts the constant-vector
/// nullspace of a connected Laplacian out of the way.
fn fiedler_by_lanczos(g: &CameraGraph) -> f64 {
    let n = g.n();
    let mu = 2.0 * g.max_degree() as f64 + 1.0;
    let degrees: Vec<f64> = (0..n).map(|v| g.degree(v) as f64).collect();
    let value = eig::lanczos_smallest(n, 400, 1e-10, |x| {
        let mut y = DVector::zeros(n);
        for v in 0..n {
            y[v] = degrees[v] * x[v];
        }
        for e in g.edges() {
            y[e.i] -= x[e.j];
            y[e.j] -= x[e.i];
        }
        let mean = x.sum() / n as f64;
        y.add_scalar_mut(mu * mean);
        y
    });
    // Round-off can leave a harmless −1e-13.
    value.max(0.0)
}

/// The spectral noise-tolerance bound
/// `α_max = 2 arcsin(√(1/4 + λ₂/(2 d_max)) − 1/2)` in radians: if every
/// measurement error angle stays below it, the global optimum is
/// guaranteed to be certifiable.
///
/// Fails for disconnected graphs (λ₂ = 0 carries no information) and for
/// edgeless graphs.
pub fn alpha_max_bound(s: &SpectralSummary) -> Result<f64> {
    if !s.connected {
        return Err(Error::Disconnected);
    }
    if s.d_max == 0 {
        return Err(Error::BoundInapplicable(
            "graph has no edges, so no measurement error to bound".into(),
        ));
    }
    Ok(alpha_max_formula(s.fiedler_value, s.d_max))
}

/// The bound formula itself, usable when λ₂ and d_max are known in closed
/// form (complete graphs have λ₂ = n, cycles 2(1 − cos 2π/n)) without
/// materializing the graph.
pub fn alpha_max_formula(fiedler_value: f64, d_max: usize) -> f64 {
    let arg = (0.25 + fiedler_value / (2.0 * d_max as f64)).sqrt() - 0.5;
    2.0 * arg.clamp(-1.0, 1.0).asin()
}

/// The sharp certification threshold π/n for a single-cycle graph on `n`
/// vertices. For cycles this strictly improves on [`alpha_max_bound`].
pub fn cycle_bound(n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "a cycle graph needs at least 3 vertices, got {n}"
        )));
    }
    Ok(std::f64::consts::PI / n as f64)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}
