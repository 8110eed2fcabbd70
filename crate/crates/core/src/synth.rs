//! Synthetic instance generation with reproducible randomness.
//!
//! All sampling is driven by [`ChaCha20Rng`] seeded from a user-supplied
//! `u64`, so instances are identical across runs and platforms modulo
//! floating-point transcendental libraries. Normal deviates use the
//! Box–Muller transform (two uniforms per pair) rather than a
//! table-driven method, keeping the byte-for-byte sampling sequence easy
//! to reason about.
//!
//! Noise model: each edge measurement is the consistent relative rotation
//! of the ground truth composed with a random rotation whose axis is
//! uniform on the sphere and whose angle is `N(0, σ)` (radians, may be
//! negative — the axis absorbs the sign).

use std::collections::VecDeque;
use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::graph::CameraGraph;
use crate::problem::SolutionStack;
use crate::so3::{from_axis_angle, Rotation};
use crate::{Error, Result};

/// Camera graph topologies the generator knows how to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Topology {
    /// Single cycle 0–1–⋯–(n−1)–0.
    Cycle,
    /// All pairs.
    Complete,
    /// Random d-regular graph via the configuration model (resampled
    /// until simple and connected).
    RandomRegular(usize),
}

/// Recipe for one synthetic instance.
#[derive(Clone, Copy, Debug)]
pub struct SynthSpec {
    pub topology: Topology,
    pub n: usize,
    /// Standard deviation of the per-edge noise angle, in radians.
    pub noise_sigma: f64,
    pub seed: u64,
}

/// A generated problem plus the rotations it was built from.
#[derive(Clone, Debug)]
pub struct SynthInstance {
    pub graph: CameraGraph,
    pub ground_truth: SolutionStack,
}

/// Samples standard normals by Box–Muller, caching the second deviate of
/// each pair.
struct NormalSource {
    cache: Option<f64>,
}

impl NormalSource {
    fn new() -> Self {
        NormalSource { cache: None }
    }

    fn next(&mut self, rng: &mut ChaCha20Rng) -> f64 {
        if let Some(z) = self.cache.take() {
            return z;
        }
        // 1 − U maps [0, 1) to (0, 1] so the log is finite.
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        self.cache = Some(r * s);
        r * c
    }
}

/// Uniform direction on the unit sphere (three normals, normalized).
fn uniform_axis(rng: &mut ChaCha20Rng, normals: &mut NormalSource) -> Vector3<f64> {
    loop {
        let v = Vector3::new(normals.next(rng), normals.next(rng), normals.next(rng));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Builds the instance described by `spec`.
///
/// Ground-truth rotation `i` is the rotation by `2πi/n` about the z-axis;
/// every edge measurement is `R_iᵀ R_j` composed with sampled noise.
pub fn generate(spec: &SynthSpec) -> Result<SynthInstance> {
    if spec.n == 0 {
        return Err(Error::InvalidInput("need at least one rotation".into()));
    }
    if !spec.noise_sigma.is_finite() || spec.noise_sigma < 0.0 {
        return Err(Error::InvalidInput(format!(
            "noise sigma must be finite and nonnegative, got {}",
            spec.noise_sigma
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut normals = NormalSource::new();

    let pairs = topology_edges(spec.topology, spec.n, &mut rng)?;

    let truth: Vec<Rotation> = (0..spec.n)
        .map(|i| {
            from_axis_angle(&Vector3::z(), TAU * i as f64 / spec.n as f64)
                .expect("unit axis")
        })
        .collect();

    let mut edges = Vec::with_capacity(pairs.len());
    for (i, j) in pairs {
        let consistent = truth[i].transpose() * truth[j];
        let noisy = if spec.noise_sigma == 0.0 {
            consistent
        } else {
            let axis = uniform_axis(&mut rng, &mut normals);
            let angle = spec.noise_sigma * normals.next(&mut rng);
            consistent * from_axis_angle(&axis, angle)?
        };
        edges.push((i, j, noisy));
    }

    Ok(SynthInstance {
        graph: CameraGraph::new(spec.n, edges)?,
        ground_truth: SolutionStack::new(truth),
    })
}

/// Left-multiplies every rotation by an independent random rotation whose
/// angle is uniform in `[0, scale]` (axis uniform on the sphere). With
/// `scale = 2π` this is a fresh random initialization.
pub fn perturb_solution(r: &SolutionStack, scale: f64, seed: u64) -> Result<SolutionStack> {
    if !(0.0..=TAU).contains(&scale) {
        return Err(Error::InvalidInput(format!(
            "perturbation scale must lie in [0, 2π], got {scale}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut normals = NormalSource::new();
    let mut out = Vec::with_capacity(r.n());
    for i in 0..r.n() {
        let axis = uniform_axis(&mut rng, &mut normals);
        let angle = scale * rng.gen::<f64>();
        out.push(from_axis_angle(&axis, angle)? * *r.get(i));
    }
    Ok(SolutionStack::new(out))
}

/// A cycle instance whose measurements share one residual rotation.
///
/// For any rotation `E = exp(α[u]×)` and arbitrary `R_i`, measurements
/// `R̃_{i,i+1} = R_iᵀ E R_{i+1}` along the directed cycle make every
/// vertex's Lagrange multiplier `R_iᵀ(E + Eᵀ)R_i` — symmetric — so the
/// configuration is a stationary point of the chordal cost for *every*
/// residual angle `α`. It is globally optimal only while `α` is small
/// relative to `π/n`, which makes the family the standard probe for
/// certificate sharpness.
pub fn uniform_residual_cycle(n: usize, alpha: f64) -> Result<(CameraGraph, SolutionStack)> {
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "cycle needs at least 3 vertices, got {n}"
        )));
    }
    if !(0.0..PI).contains(&alpha) {
        return Err(Error::InvalidInput(format!(
            "residual angle must lie in [0, π), got {alpha}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(0x7a3f ^ n as u64);
    let mut normals = NormalSource::new();

    let e_axis = uniform_axis(&mut rng, &mut normals);
    let e = from_axis_angle(&e_axis, alpha)?;

    let truth: Vec<Rotation> = (0..n)
        .map(|_| {
            let axis = uniform_axis(&mut rng, &mut normals);
            from_axis_angle(&axis, rng.gen_range(-PI..PI)).expect("unit axis")
        })
        .collect();

    let mut edges = Vec::with_capacity(n);
    for i in 0..n - 1 {
        edges.push((i, i + 1, truth[i].transpose() * e * truth[i + 1]));
    }
    // The wrap edge is directed n−1 → 0; stored with i < j it appears
    // transposed, i.e. with the residual Eᵀ.
    edges.push((0, n - 1, truth[0].transpose() * e.transpose() * truth[n - 1]));

    Ok((CameraGraph::new(n, edges)?, SolutionStack::new(truth)))
}

fn topology_edges(
    topology: Topology,
    n: usize,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<(usize, usize)>> {
    match topology {
        Topology::Cycle => {
            if n < 3 {
                return Err(Error::InvalidInput(format!(
                    "cycle needs at least 3 vertices, got {n}"
                )));
            }
            let mut pairs: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
            pairs.push((0, n - 1));
            Ok(pairs)
        }
        Topology::Complete => {
            if n < 2 {
                return Err(Error::InvalidInput(format!(
                    "complete graph needs at least 2 vertices, got {n}"
                )));
            }
            let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                for j in i + 1..n {
                    pairs.push((i, j));
                }
            }
            Ok(pairs)
        }
        Topology::RandomRegular(d) => random_regular_edges(n, d, rng),
    }
}

/// Configuration-model sampler: pair up `d` stubs per vertex, reject
/// multigraphs and disconnected outcomes, retry.
fn random_regular_edges(
    n: usize,
    d: usize,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<(usize, usize)>> {
    if d == 0 || d >= n {
        return Err(Error::InvalidInput(format!(
            "regular degree must satisfy 0 < d < n, got d = {d}, n = {n}"
        )));
    }
    if (n * d) % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "no {d}-regular graph on {n} vertices: n·d must be even"
        )));
    }
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat(v).take(d)).collect();
    const MAX_ATTEMPTS: usize = 1000;
    'attempt: for _ in 0..MAX_ATTEMPTS {
        // Fisher–Yates, driven by the instance RNG.
        for i in (1..stubs.len()).rev() {
            stubs.swap(i, rng.gen_range(0..=i));
        }
        let mut seen = std::collections::HashSet::with_capacity(n * d / 2);
        let mut pairs = Vec::with_capacity(n * d / 2);
        for chunk in stubs.chunks_exact(2) {
            let (a, b) = (chunk[0].min(chunk[1]), chunk[0].max(chunk[1]));
            if a == b || !seen.insert((a, b)) {
                continue 'attempt;
            }
            pairs.push((a, b));
        }
        if !pairs_connected(n, &pairs) {
            continue 'attempt;
        }
        pairs.sort_unstable();
        return Ok(pairs);
    }
    Err(Error::Degenerate(format!(
        "failed to sample a simple connected {d}-regular graph on {n} vertices"
    )))
}

fn pairs_connected(n: usize, pairs: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in pairs {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                queue.push_back(w);
            }
        }
    }
    count == n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{build_measurement, chordal_cost, residual_angles};
    use crate::so3::rotation_angle;
    use approx::assert_relative_eq;

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let spec = SynthSpec {
            topology: Topology::Cycle,
            n: 12,
            noise_sigma: 0.3,
            seed: 42,
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.graph.edges().len(), b.graph.edges().len());
        for (ea, eb) in a.graph.edges().iter().zip(b.graph.edges()) {
            assert_eq!(ea.measurement.matrix(), eb.measurement.matrix());
        }
        let c = generate(&SynthSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(
            a.graph.edges()[0].measurement.matrix(),
            c.graph.edges()[0].measurement.matrix()
        );
    }

    #[test]
    fn zero_noise_instances_are_consistent() {
        for topology in [Topology::Cycle, Topology::Complete, Topology::RandomRegular(4)] {
            let spec = SynthSpec { topology, n: 9, noise_sigma: 0.0, seed: 7 };
            let inst = generate(&spec).unwrap();
            let cost = chordal_cost(&inst.ground_truth, &inst.graph).unwrap();
            assert!(cost < 1e-22, "{topology:?}: cost {cost:.3e}");
        }
    }

    #[test]
    fn edge_counts_match_topology() {
        let cycle = generate(&SynthSpec {
            topology: Topology::Cycle,
            n: 15,
            noise_sigma: 0.0,
            seed: 1,
        })
        .unwrap();
        assert_eq!(cycle.graph.edges().len(), 15);
        assert!(cycle.graph.is_cycle_graph());

        let complete = generate(&SynthSpec {
            topology: Topology::Complete,
            n: 8,
            noise_sigma: 0.0,
            seed: 1,
        })
        .unwrap();
        assert_eq!(complete.graph.edges().len(), 28);

        let regular = generate(&SynthSpec {
            topology: Topology::RandomRegular(4),
            n: 30,
            noise_sigma: 0.0,
            seed: 5,
        })
        .unwrap();
        assert_eq!(regular.graph.edges().len(), 60);
        for v in 0..30 {
            assert_eq!(regular.graph.neighbors(v).len(), 4);
        }
        assert!(regular.graph.is_connected());
    }

    #[test]
    fn impossible_regular_degrees_are_rejected() {
        let bad_parity = SynthSpec {
            topology: Topology::RandomRegular(3),
            n: 7,
            noise_sigma: 0.0,
            seed: 0,
        };
        assert!(generate(&bad_parity).is_err());
        let too_dense = SynthSpec {
            topology: Topology::RandomRegular(9),
            n: 9,
            noise_sigma: 0.0,
            seed: 0,
        };
        assert!(generate(&too_dense).is_err());
    }

    #[test]
    fn noise_angles_match_the_half_normal_mean() {
        // |N(0,σ)| has mean σ√(2/π); check the sampled residuals against
        // it within three standard errors.
        let sigma = 0.2;
        let inst = generate(&SynthSpec {
            topology: Topology::Cycle,
            n: 1000,
            noise_sigma: sigma,
            seed: 2024,
        })
        .unwrap();
        let report = residual_angles(&inst.ground_truth, &inst.graph).unwrap();
        let m = report.angles.len() as f64;
        let mean = report.angles.iter().sum::<f64>() / m;
        let expected = sigma * (2.0 / std::f64::consts::PI).sqrt();
        let se = sigma * ((1.0 - 2.0 / std::f64::consts::PI) / m).sqrt();
        assert!(
            (mean - expected).abs() < 3.0 * se,
            "mean |angle| = {mean:.5}, expected {expected:.5} ± {:.5}",
            3.0 * se
        );
    }

    #[test]
    fn perturbation_respects_scale_and_seed() {
        let truth = generate(&SynthSpec {
            topology: Topology::Cycle,
            n: 10,
            noise_sigma: 0.0,
            seed: 3,
        })
        .unwrap()
        .ground_truth;
        let scale = 0.4;
        let p = perturb_solution(&truth, scale, 9).unwrap();
        let q = perturb_solution(&truth, scale, 9).unwrap();
        let mut moved = false;
        for i in 0..10 {
            let delta = *p.get(i) * truth.get(i).transpose();
            let angle = rotation_angle(&delta);
            assert!(angle <= scale + 1e-12, "vertex {i} moved by {angle}");
            moved |= angle > 1e-3;
            assert_eq!(p.get(i).matrix(), q.get(i).matrix());
        }
        assert!(moved, "perturbation did nothing");
        assert!(perturb_solution(&truth, -0.1, 0).is_err());
    }

    #[test]
    fn uniform_residual_cycle_has_uniform_residuals() {
        let alpha = 0.37;
        let (g, r) = uniform_residual_cycle(9, alpha).unwrap();
        assert!(g.is_cycle_graph());
        let report = residual_angles(&r, &g).unwrap();
        for a in &report.angles {
            assert_relative_eq!(*a, alpha, epsilon = 1e-12);
        }
        // Chordal cost matches n · 8 sin²(α/2).
        let cost = chordal_cost(&r, &g).unwrap();
        assert_relative_eq!(
            cost,
            9.0 * 8.0 * (alpha / 2.0).sin().powi(2),
            epsilon = 1e-10
        );
    }

    #[test]
    fn uniform_residual_cycle_residual_orientation_is_shared() {
        // Every directed residual along the cycle is the *same* rotation:
        // E_{i,i+1} = R_i R̃_{i,i+1} R_{i+1}ᵀ is independent of i, and the
        // wrap edge carries its transpose when read in stored orientation.
        let (g, r) = uniform_residual_cycle(6, 0.25).unwrap();
        let m = build_measurement(&g);
        let e01 = r.get(0).matrix() * m.block(0, 1) * r.get(1).matrix().transpose();
        for i in 1..5 {
            let e = r.get(i).matrix() * m.block(i, i + 1) * r.get(i + 1).matrix().transpose();
            assert!((e - e01).norm() < 1e-12);
        }
        let wrap = r.get(0).matrix() * m.block(0, 5) * r.get(5).matrix().transpose();
        assert!((wrap - e01.transpose()).norm() < 1e-12);
    }

    #[test]
    fn rejects_zero_rotations_and_bad_sigma() {
        assert!(generate(&SynthSpec {
            topology: Topology::Cycle,
            n: 0,
            noise_sigma: 0.0,
            seed: 0
        })
        .is_err());
        assert!(generate(&SynthSpec {
            topology: Topology::Cycle,
            n: 5,
            noise_sigma: -1.0,
            seed: 0
        })
        .is_err());
        assert!(generate(&SynthSpec {
            topology: Topology::Cycle,
            n: 5,
            noise_sigma: f64::NAN,
            seed: 0
        })
        .is_err());
    }
}
