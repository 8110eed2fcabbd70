//! Internal symmetric eigenvalue helpers: dense solves for desk-scale
//! matrices and Lanczos iteration (with full reorthogonalization) for the
//! large sparse operators that appear in spectral graph summaries and
//! optimality certificates.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// All eigenvalues of a dense symmetric matrix, ascending.
pub(crate) fn dense_eigenvalues_ascending(m: DMatrix<f64>) -> Vec<f64> {
    let mut vals: Vec<f64> = nalgebra::SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    vals.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    vals
}

/// Smallest eigenvalue of the symmetric operator `matvec` via Lanczos with
/// full reorthogonalization.
///
/// Iterates until the smallest Ritz pair has residual `|β_j s_j| ≤
/// rel_tol·scale` (checked periodically) or `max_iters` Krylov vectors have
/// been built. The caller is responsible for deflating any known nullspace
/// by shifting it inside `matvec`; see the call sites in `graph` and
/// `certificate`.
pub(crate) fn lanczos_smallest<F>(dim: usize, max_iters: usize, rel_tol: f64, matvec: F) -> f64
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    assert!(dim > 0, "operator dimension must be positive");
    let m = max_iters.min(dim);

    // Deterministic start vector; a fixed seed keeps results reproducible.
    let mut rng = ChaCha20Rng::seed_from_u64(0x1a2c_3057);
    let mut v = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0f64));
    v /= v.norm();

    let mut basis: Vec<DVector<f64>> = vec![v.clone()];
    let mut alphas: Vec<f64> = Vec::with_capacity(m);
    let mut betas: Vec<f64> = Vec::with_capacity(m);
    let mut scale = 0.0f64;

    for j in 0..m {
        let mut w = matvec(&basis[j]);
        let alpha = basis[j].dot(&w);
        alphas.push(alpha);
        w.axpy(-alpha, &basis[j], 1.0);
        if j > 0 {
            let beta_prev = betas[j - 1];
            w.axpy(-beta_prev, &basis[j - 1], 1.0);
        }
        // Full reorthogonalization, twice for numerical safety.
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&w);
                w.axpy(-c, q, 1.0);
            }
        }
        let beta = w.norm();
        scale = scale
            .max(alpha.abs() + beta + if j > 0 { betas[j - 1] } else { 0.0 });

        let last = j + 1 == m;
        if beta <= 1e-14 * scale.max(1.0) {
            // Invariant subspace found; the Ritz values are exact.
            betas.push(0.0);
            break;
        }
        betas.push(beta);

        let check = last || (j >= 10 && j % 10 == 0);
        if check {
            let (theta, s_last) = smallest_ritz(&alphas, &betas[..j]);
            if (beta * s_last).abs() <= rel_tol * scale.max(1.0) {
                return theta;
            }
        }
        if !last {
            basis.push(&w / beta);
        }
    }

    let j = alphas.len();
    smallest_ritz(&alphas, &betas[..j.saturating_sub(1)]).0
}

/// Smallest eigenvalue of the Lanczos tridiagonal, plus the magnitude of
/// the last component of its eigenvector (which drives the residual bound).
fn smallest_ritz(alphas: &[f64], betas: &[f64]) -> (f64, f64) {
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = nalgebra::SymmetricEigen::new(t);
    let mut best = 0usize;
    for i in 1..k {
        if eig.eigenvalues[i] < eig.eigenvalues[best] {
            best = i;
        }
    }
    (eig.eigenvalues[best], eig.eigenvectors[(k - 1, best)].abs())
}
