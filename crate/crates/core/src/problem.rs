//! Problem assembly: the block measurement matrix, objectives, and
//! residuals.
//!
//! With the solution stacked as `R = [R_1 … R_n] ∈ R^{3×3n}` and the
//! measurements collected into the symmetric block matrix `R̃` (zero
//! diagonal blocks, block `(i, j)` equal to `R̃_ij` for each edge), the
//! estimation problem is
//!
//! ```text
//! minimize  −tr(R R̃ Rᵀ)  over  R_i ∈ SO(3),
//! ```
//!
//! which is the chordal cost `Σ_{(i,j)∈E} ‖R_i R̃_ij − R_j‖²_F` shifted by
//! the constant `6|E|`. Both objectives are exposed because the solver and
//! certificate work with the trace form while accuracy reporting is more
//! natural in the chordal form.

use nalgebra::{DMatrix, Matrix3};

use crate::graph::CameraGraph;
use crate::so3::{rotation_angle, Rotation};
use crate::{Error, Result};

/// Absolute rotation estimates `R_1, …, R_n`, one per vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionStack {
    rotations: Vec<Rotation>,
}

impl SolutionStack {
    pub fn new(rotations: Vec<Rotation>) -> Self {
        SolutionStack { rotations }
    }

    /// The all-identity stack (the usual trivial initialization).
    pub fn identity(n: usize) -> Self {
        SolutionStack { rotations: vec![Rotation::identity(); n] }
    }

    pub fn n(&self) -> usize {
        self.rotations.len()
    }

    pub fn rotations(&self) -> &[Rotation] {
        &self.rotations
    }

    pub fn get(&self, i: usize) -> &Rotation {
        &self.rotations[i]
    }

    /// Left-multiplies every rotation by `q` (a global gauge change; all
    /// objectives are invariant under it).
    pub fn compose_left(&self, q: &Rotation) -> Self {
        SolutionStack {
            rotations: self.rotations.iter().map(|r| q * r).collect(),
        }
    }
}

/// The symmetric 3n×3n block measurement matrix `R̃`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockMeasurement {
    n: usize,
    data: DMatrix<f64>,
    adjacency: Vec<Vec<usize>>,
}

impl BlockMeasurement {
    /// Number of 3×3 block rows.
    pub fn n(&self) -> usize {
        self.n
    }

    /// The full 3n×3n matrix.
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Block `(i, j)` as an owned 3×3 matrix (zero when `(i, j)` is not an
    /// edge).
    pub fn block(&self, i: usize, j: usize) -> Matrix3<f64> {
        self.data.fixed_view::<3, 3>(3 * i, 3 * j).into_owned()
    }

    /// Vertices adjacent to `v` (sorted ascending).
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }
}

/// Assembles `R̃` from a measurement graph: block `(i, j) = R̃_ij`, block
/// `(j, i) = R̃_ijᵀ`, zero diagonal blocks.
pub fn build_measurement(g: &CameraGraph) -> BlockMeasurement {
    let n = g.n();
    let mut data = DMatrix::zeros(3 * n, 3 * n);
    let mut adjacency = vec![Vec::new(); n];
    for e in g.edges() {
        let m = e.measurement.matrix();
        data.fixed_view_mut::<3, 3>(3 * e.i, 3 * e.j).copy_from(m);
        data.fixed_view_mut::<3, 3>(3 * e.j, 3 * e.i)
            .copy_from(&m.transpose());
        adjacency[e.i].push(e.j);
        adjacency[e.j].push(e.i);
    }
    for nbrs in &mut adjacency {
        nbrs.sort_unstable();
    }
    BlockMeasurement { n, data, adjacency }
}

/// The trace objective `−tr(R R̃ Rᵀ) = −2 Σ_{(i,j)∈E} tr(R_i R̃_ij R_jᵀ)`.
///
/// Bounded below by `−6|E|`, attained exactly when every residual
/// vanishes.
pub fn primal_objective(r: &SolutionStack, m: &BlockMeasurement) -> Result<f64> {
    if r.n() != m.n() {
        return Err(Error::InvalidInput(format!(
            "solution has {} rotations but measurement matrix has {} blocks",
            r.n(),
            m.n()
        )));
    }
    let mut acc = 0.0;
    for i in 0..m.n() {
        for &j in m.neighbors(i) {
            if j > i {
                let e = r.get(i).matrix() * m.block(i, j) * r.get(j).matrix().transpose();
                acc += e.trace();
            }
        }
    }
    Ok(-2.0 * acc)
}

/// The chordal cost `Σ_{(i,j)∈E} ‖R_i R̃_ij − R_j‖²_F`, equal to
/// `6|E| + primal_objective`.
pub fn chordal_cost(r: &SolutionStack, g: &CameraGraph) -> Result<f64> {
    check_solution_size(r, g)?;
    let mut acc = 0.0;
    for e in g.edges() {
        let d = r.get(e.i).matrix() * e.measurement.matrix() - r.get(e.j).matrix();
        acc += d.norm_squared();
    }
    Ok(acc)
}

/// Per-edge residual angles and their maximum.
#[derive(Clone, Debug)]
pub struct ResidualReport {
    /// `|α_ij|` for each edge, in the order of [`CameraGraph::edges`].
    pub angles: Vec<f64>,
    /// `max_ij |α_ij|` (zero for edgeless graphs).
    pub max_angle: f64,
}

/// The residual rotation angles `|α_ij|` of `E_ij = R_i R̃_ij R_jᵀ` per
/// edge, plus their maximum.
pub fn residual_angles(r: &SolutionStack, g: &CameraGraph) -> Result<ResidualReport> {
    check_solution_size(r, g)?;
    let mut angles = Vec::with_capacity(g.edges().len());
    let mut max_angle = 0.0f64;
    for e in g.edges() {
        let residual = r.get(e.i) * &e.measurement * r.get(e.j).transpose();
        let alpha = rotation_angle(&residual);
        max_angle = max_angle.max(alpha);
        angles.push(alpha);
    }
    Ok(ResidualReport { angles, max_angle })
}

fn check_solution_size(r: &SolutionStack, g: &CameraGraph) -> Result<()> {
    if r.n() != g.n() {
        return Err(Error::InvalidInput(format!(
            "solution has {} rotations but graph has {} vertices",
            r.n(),
            g.n()
        )));
    }
    Ok(())
}
