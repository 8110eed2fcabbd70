//! Command-line front end: solve, certify, bound, synth, bench.
//!
//! Exit codes, shared by every subcommand:
//!
//! * `0` — success (for `solve`/`certify`: the solution is certified
//!   globally optimal),
//! * `1` — the pipeline ran but certification failed (`not_certified` or
//!   `not_stationary`),
//! * `2` — input problems: unreadable files, parse errors, malformed or
//!   disconnected graphs, bad arguments,
//! * `3` — numerical failures inside the solver.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rotavg_core::certificate::{certify, Verdict};
use rotavg_core::graph::{alpha_max_bound, cycle_bound, spectral_summary, CameraGraph};
use rotavg_core::io::{
    parse_problem, parse_solution, rotation_rows, serialize_problem, serialize_solution,
    ConfigEcho, Report, SolverSummary, REPORT_FORMAT, REPORT_VERSION,
};
use rotavg_core::local::{lm_solve, LMConfig};
use rotavg_core::problem::{build_measurement, chordal_cost, SolutionStack};
use rotavg_core::sdp::{round_solution, solve_dd, SolverConfig, SweepOrder, WarmStart};
use rotavg_core::synth::{generate, perturb_solution, SynthSpec, Topology};
use rotavg_core::Error as CoreError;

#[derive(Parser)]
#[command(
    name = "rotavg",
    version,
    about = "Multiple rotation averaging under the chordal metric, with global optimality certificates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem file and certify the result.
    Solve(SolveArgs),
    /// Certify an existing solution against a problem file.
    Certify(CertifyArgs),
    /// Print the spectral noise bound of a problem's graph.
    Bound(BoundArgs),
    /// Generate a synthetic problem instance.
    Synth(SynthArgs),
    /// Compare the semidefinite pipeline against random-restart local
    /// optimization on synthetic instances.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OrderArg {
    Cyclic,
    Random,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WarmStartArg {
    Identity,
    SpanningTree,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Text,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TopologyArg {
    Cycle,
    Complete,
    RandomRegular,
}

#[derive(Args)]
struct SolveArgs {
    /// Problem file to read.
    #[arg(long)]
    input: PathBuf,
    /// Relative per-sweep convergence tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_sweeps: usize,
    /// Block update order within a sweep.
    #[arg(long, value_enum, default_value_t = OrderArg::Cyclic)]
    order: OrderArg,
    /// Seed for the random sweep order.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = WarmStartArg::Identity)]
    warm_start: WarmStartArg,
    /// Vertex whose rotation is fixed to the identity.
    #[arg(long, default_value_t = 0)]
    anchor: usize,
    /// Polish the rounded solution with Levenberg–Marquardt before
    /// certification.
    #[arg(long)]
    refine_lm: bool,
    /// Where to write the result (stdout summary is always printed).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Output file format: a full JSON report or a bare solution file.
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
}

#[derive(Args)]
struct CertifyArgs {
    /// Problem file to read.
    #[arg(long)]
    input: PathBuf,
    /// Solution file (`r` records) or a JSON report produced by `solve`.
    #[arg(long)]
    solution: PathBuf,
}

#[derive(Args)]
struct BoundArgs {
    /// Problem file to read.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    topology: TopologyArg,
    #[arg(long)]
    n: usize,
    /// Noise standard deviation in radians.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Vertex degree (random-regular topology only).
    #[arg(long)]
    degree: Option<usize>,
    /// Problem file to write (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the ground-truth rotations here.
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum)]
    topology: TopologyArg,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.2)]
    sigma: f64,
    #[arg(long)]
    degree: Option<usize>,
    /// Number of independent instances.
    #[arg(long, default_value_t = 8)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_sweeps: usize,
}

struct CliError {
    msg: String,
    code: i32,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError { msg: msg.into(), code: 2 }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let code = match e {
            CoreError::InvalidInput(_) | CoreError::Parse { .. } | CoreError::Disconnected => 2,
            _ => 3,
        };
        CliError { msg: e.to_string(), code }
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError {
        msg: format!("cannot read {}: {e}", path.display()),
        code: 2,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError {
        msg: format!("cannot write {}: {e}", path.display()),
        code: 2,
    })
}

/// Entry point; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(args) => solve_cmd(args),
        Command::Certify(args) => certify_cmd(args),
        Command::Bound(args) => bound_cmd(args),
        Command::Synth(args) => synth_cmd(args),
        Command::Bench(args) => bench_cmd(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.msg);
            e.code
        }
    }
}

fn load_problem(path: &Path) -> Result<CameraGraph, CliError> {
    let parsed = parse_problem(&read_file(path)?)?;
    for w in &parsed.warnings {
        eprintln!("warning: {w}");
    }
    Ok(parsed.graph)
}

fn print_certificate(cert: &rotavg_core::certificate::Certificate) {
    println!("verdict {}", cert.verdict);
    println!(
        "lambda_min margin {:.6e} (tolerance {:.3e})",
        cert.lambda_min_margin, cert.certificate_tolerance
    );
    println!("stationarity residual {:.6e}", cert.stationarity_residual);
    println!("duality gap {:.6e}", cert.duality_gap);
    println!("max residual {:.6} rad", cert.max_residual);
    if let Some(bound) = cert.apriori_bound {
        let ok = cert
            .apriori_satisfied
            .map(|s| if s { "within" } else { "outside" })
            .unwrap_or("unknown");
        println!("apriori bound {:.6} rad ({ok})", bound);
    }
}

fn verdict_code(verdict: Verdict) -> i32 {
    if verdict == Verdict::CertifiedGlobal {
        0
    } else {
        1
    }
}

fn solve_cmd(args: &SolveArgs) -> Result<i32, CliError> {
    let graph = load_problem(&args.input)?;
    let measurement = build_measurement(&graph);
    let cfg = SolverConfig {
        max_sweeps: args.max_sweeps,
        rel_tol: args.tol,
        sweep_order: match args.order {
            OrderArg::Cyclic => SweepOrder::Cyclic,
            OrderArg::Random => SweepOrder::RandomPermutation,
        },
        seed: args.seed,
        warm_start: match args.warm_start {
            WarmStartArg::Identity => WarmStart::Identity,
            WarmStartArg::SpanningTree => WarmStart::SpanningTree,
        },
    };
    let (y, trace) = solve_dd(&measurement, &cfg)?;
    for w in &trace.warnings {
        eprintln!("warning: {w}");
    }
    let mut solution = round_solution(&y, args.anchor)?;
    let mut lm_iterations = None;
    if args.refine_lm {
        let (refined, lm_trace) = lm_solve(&solution, &graph, &LMConfig::default())?;
        solution = refined;
        lm_iterations = Some(lm_trace.iterations);
    }
    let cert = certify(&solution, &graph)?;
    let cost = chordal_cost(&solution, &graph)?;

    println!("vertices {}, edges {}", graph.n(), graph.edges().len());
    println!(
        "sweeps {} ({}), objective {:.9e}, wall {:.3} s",
        trace.sweeps_run,
        if trace.converged { "converged" } else { "sweep limit" },
        trace.final_objective(),
        trace.wall_time.as_secs_f64()
    );
    if let Some(iters) = lm_iterations {
        println!("refinement steps {iters}");
    }
    println!("chordal cost {:.9e}", cost);
    print_certificate(&cert);

    if let Some(path) = &args.output {
        match args.format {
            FormatArg::Text => write_file(path, &serialize_solution(&solution))?,
            FormatArg::Json => {
                let report = Report {
                    format: REPORT_FORMAT.to_string(),
                    version: REPORT_VERSION,
                    n: graph.n(),
                    edges: graph.edges().len(),
                    objective: trace.final_objective(),
                    chordal_cost: cost,
                    certificate: cert.clone(),
                    solver: SolverSummary {
                        sweeps: trace.sweeps_run,
                        converged: trace.converged,
                        final_objective: trace.final_objective(),
                        wall_time_seconds: trace.wall_time.as_secs_f64(),
                        warnings: trace.warnings.clone(),
                        refined: args.refine_lm,
                        lm_iterations,
                    },
                    config: ConfigEcho {
                        rel_tol: args.tol,
                        max_sweeps: args.max_sweeps,
                        sweep_order: match args.order {
                            OrderArg::Cyclic => "cyclic".into(),
                            OrderArg::Random => "random-permutation".into(),
                        },
                        seed: args.seed,
                        warm_start: match args.warm_start {
                            WarmStartArg::Identity => "identity".into(),
                            WarmStartArg::SpanningTree => "spanning-tree".into(),
                        },
                        anchor: args.anchor,
                        refine_lm: args.refine_lm,
                    },
                    rotations: rotation_rows(&solution),
                };
                let json = serde_json::to_string_pretty(&report).map_err(|e| CliError {
                    msg: format!("cannot encode report: {e}"),
                    code: 3,
                })?;
                write_file(path, &json)?;
            }
        }
    }
    Ok(verdict_code(cert.verdict))
}

fn certify_cmd(args: &CertifyArgs) -> Result<i32, CliError> {
    let graph = load_problem(&args.input)?;
    let text = read_file(&args.solution)?;
    let solution = if text.trim_start().starts_with('{') {
        let report: Report = serde_json::from_str(&text).map_err(|e| CliError {
            msg: format!("cannot parse JSON report: {e}"),
            code: 2,
        })?;
        report.solution()?
    } else {
        let parsed = parse_solution(&text)?;
        for w in &parsed.warnings {
            eprintln!("warning: {w}");
        }
        parsed.solution
    };
    if solution.n() != graph.n() {
        return Err(CliError::usage(format!(
            "solution has {} rotations but problem has {} vertices",
            solution.n(),
            graph.n()
        )));
    }
    let cert = certify(&solution, &graph)?;
    println!("vertices {}, edges {}", graph.n(), graph.edges().len());
    println!(
        "chordal cost {:.9e}",
        chordal_cost(&solution, &graph)?
    );
    print_certificate(&cert);
    Ok(verdict_code(cert.verdict))
}

fn bound_cmd(args: &BoundArgs) -> Result<i32, CliError> {
    let graph = load_problem(&args.input)?;
    let summary = spectral_summary(&graph);
    println!("vertices {}, edges {}", graph.n(), graph.edges().len());
    println!("fiedler value {:.9e}", summary.fiedler_value);
    println!("max degree {}", summary.d_max);
    let alpha = alpha_max_bound(&summary)?;
    println!(
        "alpha_max {:.6} rad ({:.6} degrees)",
        alpha,
        alpha.to_degrees()
    );
    if graph.is_cycle_graph() {
        let sharp = cycle_bound(graph.n())?;
        println!(
            "cycle bound {:.6} rad ({:.6} degrees)",
            sharp,
            sharp.to_degrees()
        );
    }
    Ok(0)
}

fn topology_from_args(
    topology: TopologyArg,
    degree: Option<usize>,
) -> Result<Topology, CliError> {
    match topology {
        TopologyArg::Cycle => {
            if degree.is_some() {
                return Err(CliError::usage("--degree only applies to random-regular"));
            }
            Ok(Topology::Cycle)
        }
        TopologyArg::Complete => {
            if degree.is_some() {
                return Err(CliError::usage("--degree only applies to random-regular"));
            }
            Ok(Topology::Complete)
        }
        TopologyArg::RandomRegular => {
            let d = degree.ok_or_else(|| {
                CliError::usage("random-regular topology requires --degree")
            })?;
            Ok(Topology::RandomRegular(d))
        }
    }
}

fn synth_cmd(args: &SynthArgs) -> Result<i32, CliError> {
    let spec = SynthSpec {
        topology: topology_from_args(args.topology, args.degree)?,
        n: args.n,
        noise_sigma: args.sigma,
        seed: args.seed,
    };
    let instance = generate(&spec)?;
    let problem_text = serialize_problem(&instance.graph);
    match &args.out {
        Some(path) => write_file(path, &problem_text)?,
        None => print!("{problem_text}"),
    }
    if let Some(path) = &args.truth_out {
        write_file(path, &serialize_solution(&instance.ground_truth))?;
    }
    eprintln!(
        "generated {} vertices, {} edges (sigma {}, seed {})",
        instance.graph.n(),
        instance.graph.edges().len(),
        args.sigma,
        args.seed
    );
    Ok(0)
}

#[derive(Clone, Copy)]
struct ArmResult {
    certified: bool,
    cost: f64,
    seconds: f64,
}

struct RunResult {
    bcd: ArmResult,
    lm: ArmResult,
}

fn bench_one(
    topology: Topology,
    n: usize,
    sigma: f64,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<RunResult, CoreError> {
    let instance = generate(&SynthSpec { topology, n, noise_sigma: sigma, seed })?;
    let graph = &instance.graph;
    let measurement = build_measurement(graph);

    let start = Instant::now();
    let (y, _) = solve_dd(&measurement, cfg)?;
    let rounded = round_solution(&y, 0)?;
    let (polished, _) = lm_solve(&rounded, graph, &LMConfig::default())?;
    let bcd_seconds = start.elapsed().as_secs_f64();
    let bcd_cert = certify(&polished, graph)?;
    let bcd = ArmResult {
        certified: bcd_cert.verdict == Verdict::CertifiedGlobal,
        cost: chordal_cost(&polished, graph)?,
        seconds: bcd_seconds,
    };

    let start = Instant::now();
    let random_init = perturb_solution(
        &SolutionStack::identity(n),
        2.0 * std::f64::consts::PI,
        seed ^ 0x9e37_79b9_7f4a_7c15,
    )?;
    let (local, _) = lm_solve(&random_init, graph, &LMConfig::default())?;
    let lm_seconds = start.elapsed().as_secs_f64();
    let lm_cert = certify(&local, graph)?;
    let lm = ArmResult {
        certified: lm_cert.verdict == Verdict::CertifiedGlobal,
        cost: chordal_cost(&local, graph)?,
        seconds: lm_seconds,
    };

    Ok(RunResult { bcd, lm })
}

fn bench_threads(runs: usize) -> usize {
    let cap = std::env::var("ROTAVG_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1);
    let hw = std::thread::available_parallelism()
        .map(|v| v.get())
        .unwrap_or(1);
    cap.unwrap_or(hw).min(runs.max(1))
}

fn bench_cmd(args: &BenchArgs) -> Result<i32, CliError> {
    if args.runs == 0 {
        return Err(CliError::usage("--runs must be at least 1"));
    }
    let topology = topology_from_args(args.topology, args.degree)?;
    let cfg = SolverConfig {
        max_sweeps: args.max_sweeps,
        rel_tol: args.tol,
        ..Default::default()
    };

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, RunResult)>> = Mutex::new(Vec::with_capacity(args.runs));
    let failure: Mutex<Option<CoreError>> = Mutex::new(None);
    let threads = bench_threads(args.runs);

    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let task = next.fetch_add(1, Ordering::Relaxed);
                if task >= args.runs || failure.lock().unwrap().is_some() {
                    break;
                }
                match bench_one(topology, args.n, args.sigma, args.seed + task as u64, &cfg) {
                    Ok(result) => results.lock().unwrap().push((task, result)),
                    Err(e) => {
                        *failure.lock().unwrap() = Some(e);
                        break;
                    }
                }
            });
        }
    });

    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e.into());
    }
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(task, _)| *task);
    let results: Vec<RunResult> = results.into_iter().map(|(_, r)| r).collect();

    println!(
        "topology {:?}, n {}, sigma {}, runs {}, threads {}",
        topology, args.n, args.sigma, args.runs, threads
    );
    for (name, pick) in [
        ("bcd", &(|r: &RunResult| r.bcd) as &dyn Fn(&RunResult) -> ArmResult),
        ("lm-random", &|r: &RunResult| r.lm),
    ] {
        let arms: Vec<ArmResult> = results.iter().map(pick).collect();
        let certified = arms.iter().filter(|a| a.certified).count();
        let mean_time = arms.iter().map(|a| a.seconds).sum::<f64>() / arms.len() as f64;
        let mean_rel_err = results
            .iter()
            .map(|r| {
                let best = r.bcd.cost.min(r.lm.cost);
                (pick(r).cost - best) / best.abs().max(1.0)
            })
            .sum::<f64>()
            / results.len() as f64;
        println!(
            "{name}: certified {certified}/{}, mean rel err {mean_rel_err:.3e}, mean time {mean_time:.4} s",
            arms.len()
        );
    }
    Ok(0)
}
