//! Shared machinery for the integration suites: a closed-form reference
//! optimum on cycle graphs, the standard solve pipeline, and an
//! independent dense-matrix toolkit for checking the block subproblem
//! against its KKT system.
//!
//! Everything here deliberately avoids the crate's internal 3×3 kernels:
//! pseudo-inverses, square roots, and eigenvalues are recomputed with
//! nalgebra's generic dense routines so the tests remain an outside
//! check, not a mirror of the implementation.

#![allow(dead_code)]

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;

use rotavg_core::certificate::{certify, Certificate};
use rotavg_core::graph::CameraGraph;
use rotavg_core::local::{lm_solve, LMConfig};
use rotavg_core::problem::{build_measurement, chordal_cost, SolutionStack};
use rotavg_core::sdp::{round_solution, solve_dd, SolveTrace, SolverConfig};
use rotavg_core::so3::{from_axis_angle, rotation_angle, Rotation};

// ---------------------------------------------------------------------
// Cycle-graph reference optimum.
//
// On a cycle the only obstruction to a zero-cost solution is the
// holonomy: the rotation picked up by composing the measurements once
// around the loop. Its angle θ_H is gauge- and solution-independent,
// and the optimal assignment spreads it evenly, leaving each of the n
// edges a residual of θ_H/n. That gives closed forms for the optimal
// chordal cost and relaxation objective which the solver must hit.
// ---------------------------------------------------------------------

/// Angle of the composed measurement around a cycle graph's single loop.
pub fn holonomy_angle(g: &CameraGraph) -> f64 {
    assert!(g.is_cycle_graph(), "holonomy reference needs a cycle graph");
    let n = g.n();
    let mut h = Rotation::identity();
    for v in 0..n {
        let w = (v + 1) % n;
        let &(_, idx) = g
            .neighbors(v)
            .iter()
            .find(|(nbr, _)| *nbr == w)
            .expect("cycle edge present");
        let e = &g.edges()[idx];
        let oriented = if e.i == v { e.measurement } else { e.measurement.transpose() };
        h = h * oriented;
    }
    rotation_angle(&h)
}

/// Optimal chordal cost of a cycle with holonomy angle `theta`:
/// `8n sin²(θ/(2n))`.
pub fn optimal_cycle_chordal(n: usize, theta: f64) -> f64 {
    let s = (theta / (2.0 * n as f64)).sin();
    8.0 * n as f64 * s * s
}

/// Optimal relaxation/primal objective of the same cycle:
/// `−2n(1 + 2cos(θ/n))`.
pub fn optimal_cycle_objective(n: usize, theta: f64) -> f64 {
    -2.0 * n as f64 * (1.0 + 2.0 * (theta / n as f64).cos())
}

// ---------------------------------------------------------------------
// Standard pipeline.
// ---------------------------------------------------------------------

pub struct PipelineRun {
    pub solution: SolutionStack,
    pub certificate: Certificate,
    pub trace: SolveTrace,
    pub cost: f64,
}

/// Solve, round at vertex 0, polish, certify.
pub fn certified_pipeline(g: &CameraGraph, cfg: &SolverConfig) -> PipelineRun {
    let m = build_measurement(g);
    let (y, trace) = solve_dd(&m, cfg).expect("solver runs");
    let rounded = round_solution(&y, 0).expect("rounding succeeds");
    let (solution, _) = lm_solve(&rounded, g, &LMConfig::default()).expect("polish runs");
    let certificate = certify(&solution, g).expect("certificate computes");
    let cost = chordal_cost(&solution, g).expect("cost computes");
    PipelineRun { solution, certificate, trace, cost }
}

// ---------------------------------------------------------------------
// Small random helpers (self-contained, not the crate's generators).
// ---------------------------------------------------------------------

/// One standard normal deviate (Box–Muller, no caching).
pub fn normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

pub fn random_unit_axis(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(normal(rng), normal(rng), normal(rng));
        let len = v.norm();
        if len > 1e-6 {
            return v / len;
        }
    }
}

pub fn random_rotation(rng: &mut impl Rng) -> Rotation {
    let axis = random_unit_axis(rng);
    let angle = rng.gen::<f64>() * std::f64::consts::PI;
    from_axis_angle(&axis, angle).expect("unit axis")
}

/// Left-perturbs vertex `i` by `exp(h·ê_axis)` — the same chart the
/// local optimizer differentiates in.
pub fn nudge(r: &SolutionStack, i: usize, axis: usize, h: f64) -> SolutionStack {
    let mut rotations: Vec<Rotation> = (0..r.n()).map(|k| *r.get(k)).collect();
    let mut e = Vector3::zeros();
    e[axis] = 1.0;
    rotations[i] = from_axis_angle(&e, h).expect("unit axis") * rotations[i];
    SolutionStack::new(rotations)
}

/// Central finite-difference gradient of the chordal cost in the
/// left-multiplicative chart, for comparison against the analytic one.
pub fn fd_gradient(r: &SolutionStack, g: &CameraGraph, h: f64) -> Vec<Vector3<f64>> {
    (0..r.n())
        .map(|i| {
            Vector3::from_fn(|axis, _| {
                let plus = chordal_cost(&nudge(r, i, axis, h), g).unwrap();
                let minus = chordal_cost(&nudge(r, i, axis, -h), g).unwrap();
                (plus - minus) / (2.0 * h)
            })
        })
        .collect()
}

// ---------------------------------------------------------------------
// Deterministic suites shared between the property and acceptance
// targets.
// ---------------------------------------------------------------------

pub fn relaxation_objective(
    y: &rotavg_core::sdp::GramIterate,
    m: &rotavg_core::problem::BlockMeasurement,
) -> f64 {
    -m.data().dot(y.data())
}

/// Monotonicity at single-block granularity: every one of `updates`
/// individual block updates must not increase the objective.
pub fn assert_single_update_monotonicity(updates: usize) {
    use rotavg_core::sdp::{bcd_sweep, GramIterate};
    use rotavg_core::synth::{generate, SynthSpec, Topology};

    let instance = generate(&SynthSpec {
        topology: Topology::Complete,
        n: 10,
        noise_sigma: 0.6,
        seed: 77,
    })
    .unwrap();
    let m = build_measurement(&instance.graph);
    let mut y = GramIterate::identity(10);
    let mut prev = relaxation_objective(&y, &m);
    let mut done = 0usize;
    'outer: loop {
        for k in 0..10 {
            bcd_sweep(&mut y, &m, &[k]).unwrap();
            let cur = relaxation_objective(&y, &m);
            assert!(
                cur <= prev + 1e-10 * prev.abs().max(1.0),
                "update {done} (vertex {k}) raised the objective from {prev} to {cur}"
            );
            prev = cur;
            done += 1;
            if done >= updates {
                break 'outer;
            }
        }
    }
}

/// The 50-file corpus: mixed topologies, sizes, and noise levels, every
/// file read back bitwise identical, solutions included.
pub fn assert_fifty_file_round_trip() {
    use rotavg_core::io::{parse_problem, parse_solution, serialize_problem, serialize_solution};
    use rotavg_core::synth::{generate, SynthSpec, Topology};

    for seed in 0..50u64 {
        let topology = match seed % 3 {
            0 => Topology::Cycle,
            1 => Topology::Complete,
            _ => Topology::RandomRegular(4),
        };
        let n = 5 + (seed as usize * 7) % 20;
        let sigma = (seed as f64) * 0.015;
        let instance = generate(&SynthSpec { topology, n, noise_sigma: sigma, seed }).unwrap();

        let text = serialize_problem(&instance.graph);
        let parsed = parse_problem(&text).unwrap();
        assert!(parsed.warnings.is_empty(), "seed {seed}: {:?}", parsed.warnings);
        assert_eq!(parsed.graph.n(), instance.graph.n());
        assert_eq!(parsed.graph.edges().len(), instance.graph.edges().len());
        for (a, b) in instance.graph.edges().iter().zip(parsed.graph.edges()) {
            assert_eq!((a.i, a.j), (b.i, b.j), "seed {seed}");
            assert_eq!(a.measurement.matrix(), b.measurement.matrix(), "seed {seed}");
        }
        // Serialization is canonical: writing the parse output
        // reproduces the file exactly.
        assert_eq!(text, serialize_problem(&parsed.graph), "seed {seed}");

        let sol_text = serialize_solution(&instance.ground_truth);
        let sol = parse_solution(&sol_text).unwrap();
        assert!(sol.warnings.is_empty());
        assert_eq!(sol.solution.n(), n);
        for i in 0..n {
            assert_eq!(
                sol.solution.get(i).matrix(),
                instance.ground_truth.get(i).matrix(),
                "seed {seed} vertex {i}"
            );
        }
    }
}

// ---------------------------------------------------------------------
// Dense PSD toolkit for the subproblem oracle.
// ---------------------------------------------------------------------

pub fn sym_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn spectral_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let se = nalgebra::linalg::SymmetricEigen::new(m.clone());
    let d = DMatrix::from_diagonal(&se.eigenvalues.map(f));
    &se.eigenvectors * d * se.eigenvectors.transpose()
}

pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_map(m, |l| l.max(0.0).sqrt())
}

pub fn psd_pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let se = nalgebra::linalg::SymmetricEigen::new(m.clone());
    let lmax = se.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = 1e-10 * lmax.max(1.0);
    let d = DMatrix::from_diagonal(
        &se.eigenvalues.map(|l| if l > cutoff { 1.0 / l } else { 0.0 }),
    );
    &se.eigenvectors * d * se.eigenvectors.transpose()
}

pub fn lambda_min_dense(m: &DMatrix<f64>) -> f64 {
    let se = nalgebra::linalg::SymmetricEigen::new(m.clone());
    se.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

pub fn nuclear_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.iter().sum()
}

// ---------------------------------------------------------------------
// Block-subproblem oracle: min tr(AᵀS) s.t. [[I, Sᵀ], [S, B]] ⪰ 0.
// ---------------------------------------------------------------------

pub struct Subproblem {
    pub b: DMatrix<f64>,
    pub a: DMatrix<f64>,
}

/// Random instance with `blocks` 3×3 row blocks and the given rank of
/// `B`. `structured` stacks signed rotations into `A` (the pattern the
/// solver actually feeds in); otherwise `A` is Gaussian.
pub fn random_subproblem(
    blocks: usize,
    rank: usize,
    structured: bool,
    rng: &mut impl Rng,
) -> Subproblem {
    let dim = 3 * blocks;
    assert!(rank <= dim);
    let gauss = DMatrix::from_fn(dim, dim, |_, _| normal(rng));
    let q = gauss.qr().q();
    let mut evals = DVector::zeros(dim);
    for k in 0..rank {
        evals[k] = 0.1 + 2.9 * rng.gen::<f64>();
    }
    let b = sym_part(&(&q * DMatrix::from_diagonal(&evals) * q.transpose()));

    let a = if structured {
        let mut a = DMatrix::zeros(dim, 3);
        for blk in 0..blocks {
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let r = random_rotation(rng);
            a.view_mut((3 * blk, 0), (3, 3))
                .copy_from(&(r.matrix() * sign));
        }
        a
    } else {
        DMatrix::from_fn(dim, 3, |_, _| normal(rng))
    };
    Subproblem { b, a }
}

/// Mixed corpus: block counts 2–9 (subproblem sizes 6–27), alternating
/// Gaussian and signed-rotation objective stacks, and a rank schedule
/// that hits full-rank, mildly deficient, and nearly flat `B`.
pub fn subproblem_corpus(rng: &mut impl Rng) -> Vec<Subproblem> {
    (0..100usize)
        .map(|t| {
            let blocks = 2 + t % 8;
            let dim = 3 * blocks;
            let rank = match t % 4 {
                0 => dim,
                1 => dim - 3,
                2 => (dim / 2).max(2),
                _ => 2,
            };
            random_subproblem(blocks, rank, t % 2 == 1, rng)
        })
        .collect()
}

/// Residuals of the five KKT conditions at a candidate `S`, with the
/// multipliers eliminated the way the optimality system allows:
/// `Γ = ½(AᵀBA)^{1/2}` and the free multiplier projected out by
/// restricting stationarity to the range of `B`.
pub struct KktResiduals {
    /// `‖BB†(A + 2B†SΓ)‖_F` — stationarity on range(B).
    pub stationarity: f64,
    /// `λ_min(I − SᵀB†S)` — primal feasibility (wants ≥ 0).
    pub feasibility: f64,
    /// `‖(I − BB†)S‖_F` — S confined to range(B).
    pub range: f64,
    /// `λ_min(Γ)` — dual feasibility (wants ≥ 0).
    pub gamma_psd: f64,
    /// `‖(I − SᵀB†S)Γ‖_F` — complementary slackness.
    pub slackness: f64,
    /// Scale the residual norms should be compared against.
    pub scale: f64,
}

impl KktResiduals {
    /// Worst violation, everything compared at problem scale — the
    /// eigenvalue conditions included, since `B†` legitimately
    /// amplifies rounding on near-degenerate instances.
    pub fn max_violation(&self) -> f64 {
        let mut worst = self.stationarity;
        worst = worst.max(self.range);
        worst = worst.max(self.slackness);
        worst = worst.max(-self.feasibility);
        worst = worst.max(-self.gamma_psd);
        worst / self.scale
    }
}

pub fn kkt_residuals(sp: &Subproblem, s: &DMatrix<f64>) -> KktResiduals {
    let dim = sp.b.nrows();
    let b_pinv = psd_pinv(&sp.b);
    let range_proj = &sp.b * &b_pinv;
    let gamma = psd_sqrt(&sym_part(&(sp.a.transpose() * &sp.b * &sp.a))) * 0.5;

    let stationarity = (&range_proj * (&sp.a + 2.0 * &b_pinv * s * &gamma)).norm();
    let care = DMatrix::identity(3, 3) - s.transpose() * &b_pinv * s;
    let feasibility = lambda_min_dense(&sym_part(&care));
    let range = ((DMatrix::identity(dim, dim) - &range_proj) * s).norm();
    let gamma_psd = lambda_min_dense(&gamma);
    let slackness = (&care * &gamma).norm();
    let scale = 1.0 + sp.a.norm() + sp.b.norm() + gamma.norm();

    KktResiduals { stationarity, feasibility, range, gamma_psd, slackness, scale }
}

/// Objective `tr(AᵀS)`.
pub fn subproblem_objective(sp: &Subproblem, s: &DMatrix<f64>) -> f64 {
    (sp.a.transpose() * s).trace()
}

/// Feasibility margin of the lifted block matrix `[[I, Sᵀ], [S, B]]`.
pub fn lifted_lambda_min(sp: &Subproblem, s: &DMatrix<f64>) -> f64 {
    let dim = sp.b.nrows();
    let mut lifted = DMatrix::zeros(dim + 3, dim + 3);
    lifted.view_mut((0, 0), (3, 3)).copy_from(&DMatrix::identity(3, 3));
    lifted.view_mut((0, 3), (3, dim)).copy_from(&s.transpose());
    lifted.view_mut((3, 0), (dim, 3)).copy_from(s);
    lifted.view_mut((3, 3), (dim, dim)).copy_from(&sp.b);
    lambda_min_dense(&sym_part(&lifted))
}

/// Draws `count` exactly-feasible points `S = B^{1/2}·(r/σ_max(G))·G`
/// and checks none undercuts `S*`'s objective. Returns the smallest
/// sampled-minus-optimal objective gap seen (wants ≥ ~−1e-9·scale).
pub fn sampled_objective_gap(
    sp: &Subproblem,
    s_star: &DMatrix<f64>,
    count: usize,
    rng: &mut impl Rng,
) -> f64 {
    let dim = sp.b.nrows();
    let b_sqrt = psd_sqrt(&sp.b);
    // tr(AᵀB^{1/2}U) — precompute the 3×dim factor once.
    let c_t = sp.a.transpose() * &b_sqrt;
    let obj_star = subproblem_objective(sp, s_star);
    let mut worst_gap = f64::INFINITY;
    for _ in 0..count {
        let g = DMatrix::from_fn(dim, 3, |_, _| normal(rng));
        let gtg = g.transpose() * &g;
        let sigma_max = nalgebra::linalg::SymmetricEigen::new(gtg)
            .eigenvalues
            .iter()
            .cloned()
            .fold(0.0_f64, f64::max)
            .sqrt();
        if sigma_max < 1e-12 {
            continue;
        }
        // Bias the radius toward the boundary, where the optimum lives.
        let r = rng.gen::<f64>().powf(0.25);
        let obj = (&c_t * (&g * (r / sigma_max))).trace();
        worst_gap = worst_gap.min(obj - obj_star);
    }
    worst_gap
}

/// Projected-gradient reference minimizer run in the substituted
/// variable `U = B^{†/2}S` over the spectral-norm unit ball, where the
/// feasible set is exactly `‖U‖₂ ≤ 1`. Returns the best objective seen.
pub fn pgd_reference(sp: &Subproblem, iters: usize) -> f64 {
    let dim = sp.b.nrows();
    let c = psd_sqrt(&sp.b) * &sp.a;
    let step = 0.5 / c.norm().max(1e-12);
    let mut u = DMatrix::<f64>::zeros(dim, 3);
    let mut best = f64::INFINITY;
    for _ in 0..iters {
        u -= &c * step;
        // Project back: clamp singular values at one.
        let svd = u.clone().svd(true, true);
        let clamped = DVector::from_iterator(
            svd.singular_values.len(),
            svd.singular_values.iter().map(|s| s.min(1.0)),
        );
        u = svd.u.as_ref().unwrap()
            * DMatrix::from_diagonal(&clamped)
            * svd.v_t.as_ref().unwrap();
        best = best.min((c.transpose() * &u).trace());
    }
    best
}
