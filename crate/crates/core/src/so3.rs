//! Rotation primitives and closed-form 3×3 symmetric matrix kernels.
//!
//! Everything downstream (cost assembly, the block-coordinate solver, the
//! certifier) reduces to a handful of 3×3 operations implemented here:
//! axis–angle construction, rotation angles, chordal distances, projection
//! onto SO(3), and PSD square roots / pseudo-inverses via a closed-form
//! trigonometric eigendecomposition.
//!
//! Numerical hygiene contract:
//! - [`TAU_ORTH`]: a matrix is accepted as a rotation when
//!   `‖mᵀm − I‖_F ≤ τ_orth` and `det m > 0`. Constructors never repair
//!   input silently; renormalization is the explicit
//!   [`Rotation::from_matrix_lossy`].
//! - [`TAU_RANK`]: relative rank cutoff. Projection onto SO(3) fails when
//!   `σ_min ≤ τ_rank·σ_max`, and [`pinv_psd`] zeroes eigenvalues below
//!   `τ_rank·λ_max`.
//! - [`TAU_PSD`]: [`sqrt_psd`] accepts eigenvalues down to `−τ_psd·‖s‖_F`
//!   (clamped to zero) and rejects anything more negative.
//! - Inverse trigonometric arguments are always clamped to [−1, 1] before
//!   `acos`/`asin` so ±1 edge cases cannot produce NaN.
//!
//! The eigendecomposition solves the characteristic cubic in closed form
//! (trigonometric Cardano). When the eigenvalue separation drops below
//! `1e-6·‖s‖_F` the cross-product eigenvector construction loses accuracy,
//! so the kernel falls back to a few cyclic Jacobi sweeps, which are
//! unconditionally stable for symmetric 3×3 matrices.

use nalgebra::{Matrix3, Vector3};

use crate::{Error, Result};

/// Frobenius tolerance for accepting a matrix as a member of SO(3).
pub const TAU_ORTH: f64 = 1e-9;

/// Relative rank cutoff for projections and pseudo-inverses.
pub const TAU_RANK: f64 = 1e-10;

/// Relative tolerance below which a nominally-PSD matrix is rejected.
pub const TAU_PSD: f64 = 1e-8;

/// Eigenvalue separation (relative to `‖s‖_F`) under which the closed-form
/// eigenvector construction defers to Jacobi iteration.
const EIG_DEGENERATE_SEP: f64 = 1e-6;

/// A 3×3 rotation matrix, validated on construction.
///
/// The wrapper guarantees `‖mᵀm − I‖_F ≤ τ_orth` and `det m > 0`, so code
/// consuming a `Rotation` never re-checks orthonormality.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    /// The identity rotation.
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Wraps `m`, failing unless it is orthonormal with positive
    /// determinant within [`TAU_ORTH`].
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let defect = (m.transpose() * m - Matrix3::identity()).norm();
        if defect > TAU_ORTH {
            return Err(Error::InvalidInput(format!(
                "matrix is not orthonormal: ‖mᵀm − I‖_F = {defect:.3e} exceeds {TAU_ORTH:.0e}"
            )));
        }
        if m.determinant() <= 0.0 {
            return Err(Error::InvalidInput(
                "matrix has non-positive determinant (reflection, not rotation)".into(),
            ));
        }
        Ok(Rotation(m))
    }

    /// Explicitly renormalizes a near-rotation by projecting onto SO(3).
    pub fn from_matrix_lossy(m: Matrix3<f64>) -> Result<Self> {
        project_to_so3(&m)
    }

    /// Internal constructor for matrices that are rotations by
    /// construction (products, transposes, SVD projections).
    pub(crate) fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        debug_assert!(
            (m.transpose() * m - Matrix3::identity()).norm() <= 1e-7,
            "unchecked rotation constructor received a non-rotation"
        );
        Rotation(m)
    }

    /// The underlying matrix.
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// The inverse rotation (transpose).
    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    /// The rotation angle in [0, π]; see [`rotation_angle`].
    pub fn angle(&self) -> f64 {
        rotation_angle(self)
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        // A product of rotations is a rotation; drift is O(machine eps).
        Rotation(self.0 * rhs.0)
    }
}

impl std::ops::Mul for &Rotation {
    type Output = Rotation;

    fn mul(self, rhs: &Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

/// A symmetric 3×3 matrix.
///
/// Construction goes through [`Sym3::symmetrized`], which averages away any
/// asymmetry explicitly; the stored matrix is exactly symmetric.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sym3(Matrix3<f64>);

impl Sym3 {
    /// Builds the symmetric part `(m + mᵀ)/2` of an arbitrary matrix.
    pub fn symmetrized(m: Matrix3<f64>) -> Self {
        Sym3((m + m.transpose()) * 0.5)
    }

    /// Diagonal matrix with the given entries.
    pub fn from_diagonal(d: Vector3<f64>) -> Self {
        Sym3(Matrix3::from_diagonal(&d))
    }

    /// The underlying (exactly symmetric) matrix.
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Eigendecomposition `s = V diag(λ) Vᵀ` with `λ` ascending and `V`
    /// orthonormal. Closed-form trigonometric solution with a Jacobi
    /// fallback for near-degenerate spectra.
    pub fn eigen(&self) -> (Vector3<f64>, Matrix3<f64>) {
        eigen_sym3(&self.0)
    }

    /// Largest-magnitude eigenvalue (operator 2-norm for symmetric input).
    pub fn operator_norm(&self) -> f64 {
        let (vals, _) = self.eigen();
        vals[0].abs().max(vals[2].abs())
    }
}

/// Skew-symmetric matrix `[v]×` with `[v]× w = v × w`.
pub(crate) fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`] on skew-symmetric input: `vee([v]×) = v`.
pub(crate) fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rodrigues' formula: the rotation by `angle` radians about the unit
/// vector `axis`.
///
/// Fails with an input error when `axis` is not unit length (within 1e-9).
pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Result<Rotation> {
    let norm = axis.norm();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "axis must be unit length, got ‖axis‖ = {norm:.12}"
        )));
    }
    let k = skew(axis);
    let m = Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos());
    Ok(Rotation::from_matrix_unchecked(m))
}

/// The rotation angle `|α| ∈ [0, π]` of `r`, from `tr r = 1 + 2 cos α`.
///
/// The arccos argument is clamped so traces a hair outside [−1, 3] cannot
/// produce NaN.
pub fn rotation_angle(r: &Rotation) -> f64 {
    let c = (r.0.trace() - 1.0) * 0.5;
    c.clamp(-1.0, 1.0).acos()
}

/// The chordal distance `‖r − s‖_F = 2√2 sin(|α|/2)` where `α` is the
/// angle of the relative rotation `r sᵀ`.
pub fn chordal_distance(r: &Rotation, s: &Rotation) -> f64 {
    (r.0 - s.0).norm()
}

/// Projects an arbitrary 3×3 matrix onto SO(3) in the Frobenius sense:
/// `argmin_{Q ∈ SO(3)} ‖m − Q‖_F = U diag(1, 1, det(UVᵀ)) Vᵀ` from the
/// SVD `m = U Σ Vᵀ`.
///
/// Fails with a degenerate-input error when `σ_min ≤ τ_rank·σ_max` (the
/// nearest rotation is not well defined).
pub fn project_to_so3(m: &Matrix3<f64>) -> Result<Rotation> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("SVD with compute_u");
    let v_t = svd.v_t.expect("SVD with compute_v");
    let sigma = svd.singular_values;
    let (s_max, s_min) = (sigma.max(), sigma.min());
    if s_max <= 0.0 || s_min <= TAU_RANK * s_max {
        return Err(Error::Degenerate(format!(
            "projection onto SO(3) is ill-posed: σ_min/σ_max = {:.3e}",
            if s_max > 0.0 { s_min / s_max } else { 0.0 }
        )));
    }
    let det = (u * v_t).determinant();
    let flip = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, det.signum()));
    Ok(Rotation::from_matrix_unchecked(u * flip * v_t))
}

/// The PSD square root `s^{1/2}` via eigendecomposition.
///
/// Eigenvalues in `[−τ_psd·‖s‖_F, 0)` are clamped to zero; anything more
/// negative is a not-PSD error.
pub fn sqrt_psd(s: &Sym3) -> Result<Sym3> {
    let scale = s.0.norm();
    let (vals, vecs) = s.eigen();
    let mut roots = Vector3::zeros();
    for i in 0..3 {
        if vals[i] < -TAU_PSD * scale {
            return Err(Error::NotPsd(format!(
                "eigenvalue {:.6e} below −τ_psd·‖s‖ = {:.6e}",
                vals[i],
                -TAU_PSD * scale
            )));
        }
        roots[i] = vals[i].max(0.0).sqrt();
    }
    Ok(Sym3::symmetrized(
        vecs * Matrix3::from_diagonal(&roots) * vecs.transpose(),
    ))
}

/// The Moore–Penrose pseudo-inverse of a PSD matrix.
///
/// Eigenvalues at or below `τ_rank·λ_max` are treated as exact zeros, so a
/// zero matrix maps to a zero matrix and rank deficiency is handled
/// without error.
pub fn pinv_psd(s: &Sym3) -> Sym3 {
    let (vals, vecs) = s.eigen();
    let lambda_max = vals[2].max(0.0);
    if lambda_max == 0.0 {
        return Sym3(Matrix3::zeros());
    }
    let cutoff = TAU_RANK * lambda_max;
    let mut inv = Vector3::zeros();
    for i in 0..3 {
        if vals[i] > cutoff {
            inv[i] = 1.0 / vals[i];
        }
    }
    Sym3::symmetrized(vecs * Matrix3::from_diagonal(&inv) * vecs.transpose())
}

/// Closed-form eigendecomposition of a symmetric 3×3 matrix; eigenvalues
/// ascending, eigenvectors as orthonormal columns.
fn eigen_sym3(a: &Matrix3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let scale = a.norm();
    if scale == 0.0 {
        return (Vector3::zeros(), Matrix3::identity());
    }

    let vals = eigenvalues_cardano(a);
    let sep = (vals[1] - vals[0]).min(vals[2] - vals[1]);
    if sep < EIG_DEGENERATE_SEP * scale {
        return jacobi_eigen(a);
    }

    // Well-separated spectrum: each eigenvector is the null direction of
    // a − λI, recovered as the largest cross product of two of its rows.
    let v_min = null_direction(a, vals[0]);
    let mut v_max = null_direction(a, vals[2]);
    v_max = (v_max - v_min * v_min.dot(&v_max)).normalize();
    let v_mid = v_max.cross(&v_min);
    let vecs = Matrix3::from_columns(&[v_min, v_mid, v_max]);
    (vals, vecs)
}

/// Eigenvalues of a symmetric 3×3 matrix by the trigonometric solution of
/// the characteristic cubic, returned ascending.
fn eigenvalues_cardano(a: &Matrix3<f64>) -> Vector3<f64> {
    let p1 = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
    let q = a.trace() / 3.0;
    if p1 == 0.0 {
        // Already diagonal.
        let mut d = [a[(0, 0)], a[(1, 1)], a[(2, 2)]];
        d.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
        return Vector3::new(d[0], d[1], d[2]);
    }
    let p2 = (a[(0, 0)] - q).powi(2) + (a[(1, 1)] - q).powi(2) + (a[(2, 2)] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b = (a - Matrix3::identity() * q) / p;
    let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;

    // φ ∈ [0, π/3], so cos φ is the largest root and cos(φ + 2π/3) the
    // smallest.
    let lam_max = q + 2.0 * p * phi.cos();
    let lam_min = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
    let lam_mid = 3.0 * q - lam_max - lam_min;
    Vector3::new(lam_min, lam_mid, lam_max)
}

/// Null direction of `a − λI` for a (numerically) simple eigenvalue λ:
/// the largest pairwise cross product of its rows.
fn null_direction(a: &Matrix3<f64>, lambda: f64) -> Vector3<f64> {
    let m = a - Matrix3::identity() * lambda;
    let r0 = Vector3::new(m[(0, 0)], m[(0, 1)], m[(0, 2)]);
    let r1 = Vector3::new(m[(1, 0)], m[(1, 1)], m[(1, 2)]);
    let r2 = Vector3::new(m[(2, 0)], m[(2, 1)], m[(2, 2)]);
    let candidates = [r0.cross(&r1), r0.cross(&r2), r1.cross(&r2)];
    let best = candidates
        .iter()
        .max_by(|x, y| {
            x.norm_squared()
                .partial_cmp(&y.norm_squared())
                .expect("finite cross products")
        })
        .expect("three candidates");
    best.normalize()
}

/// Cyclic Jacobi iteration, the unconditionally robust fallback for
/// (near-)degenerate spectra. A handful of sweeps reaches machine
/// precision on 3×3 input.
fn jacobi_eigen(a: &Matrix3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let mut m = *a;
    let mut v = Matrix3::identity();
    let scale = a.norm();

    for _ in 0..30 {
        let off = (m[(0, 1)].powi(2) + m[(0, 2)].powi(2) + m[(1, 2)].powi(2)).sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = m[(p, q)];
            if apq.abs() <= f64::EPSILON * scale {
                continue;
            }
            // Classic Jacobi rotation zeroing m[(p, q)].
            let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut g = Matrix3::identity();
            g[(p, p)] = c;
            g[(q, q)] = c;
            g[(p, q)] = s;
            g[(q, p)] = -s;
            m = g.transpose() * m * g;
            v *= g;
        }
    }

    // Symmetrize accumulated round-off, then sort ascending.
    let mut pairs: Vec<(f64, Vector3<f64>)> = (0..3)
        .map(|i| (m[(i, i)], v.column(i).into_owned()))
        .collect();
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite eigenvalues"));
    let vals = Vector3::new(pairs[0].0, pairs[1].0, pairs[2].0);
    let mut vecs = Matrix3::from_columns(&[pairs[0].1, pairs[1].1, pairs[2].1]);
    if vecs.determinant() < 0.0 {
        vecs.column_mut(2).neg_mut();
    }
    (vals, vecs)
}
