//! Plain-text problem/solution formats and the JSON solve report.
//!
//! Problem files:
//!
//! ```text
//! # comment lines start with '#', blank lines are ignored
//! n 3
//! e 0 1 r11 r12 r13 r21 r22 r23 r31 r32 r33
//! e 1 2 ...
//! ```
//!
//! Vertices are 0-indexed, matrix entries are row-major and
//! whitespace-separated. Solution files use the same header with `r`
//! records instead (`r <vertex> <9 entries>`), one per vertex.
//!
//! Parsed matrices must be rotations: orthogonality defect
//! `‖RᵀR − I‖_F` above `1e-6` (or a negative determinant) is an error;
//! defects between `1e-9` and `1e-6` are accepted but re-projected onto
//! SO(3), with a warning naming the offending line. Serialization writes
//! 17 significant digits, so write→read round-trips reproduce the exact
//! `f64` values.

use std::collections::HashSet;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::certificate::Certificate;
use crate::graph::CameraGraph;
use crate::problem::SolutionStack;
use crate::so3::{project_to_so3, Rotation};
use crate::{Error, Result};

/// Orthogonality defect above which a parsed matrix is rejected.
const TAU_REJECT: f64 = 1e-6;
/// Defect above which a parsed matrix is re-projected (with a warning).
const TAU_REPAIR: f64 = 1e-9;

/// A parsed problem plus any repair warnings.
#[derive(Clone, Debug)]
pub struct ParsedProblem {
    pub graph: CameraGraph,
    pub warnings: Vec<String>,
}

/// A parsed solution plus any repair warnings.
#[derive(Clone, Debug)]
pub struct ParsedSolution {
    pub solution: SolutionStack,
    pub warnings: Vec<String>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Validates and repairs a row-major 9-tuple into a rotation.
fn rotation_from_entries(
    entries: &[f64],
    line: usize,
    warnings: &mut Vec<String>,
) -> Result<Rotation> {
    let m = Matrix3::new(
        entries[0], entries[1], entries[2], entries[3], entries[4], entries[5], entries[6],
        entries[7], entries[8],
    );
    let defect = (m.transpose() * m - Matrix3::identity()).norm();
    if !defect.is_finite() || defect > TAU_REJECT {
        return Err(parse_err(
            line,
            format!("matrix is not orthogonal (defect {defect:.3e} > {TAU_REJECT:.0e})"),
        ));
    }
    if m.determinant() <= 0.0 {
        return Err(parse_err(line, "matrix is a reflection, not a rotation"));
    }
    if defect > TAU_REPAIR {
        let repaired = project_to_so3(&m)
            .map_err(|e| parse_err(line, format!("matrix cannot be repaired: {e}")))?;
        warnings.push(format!(
            "line {line}: matrix re-projected onto SO(3) (orthogonality defect {defect:.3e})"
        ));
        return Ok(repaired);
    }
    Rotation::from_matrix(m).map_err(|e| parse_err(line, e.to_string()))
}

/// Splits a record line into tokens after the directive and parses the
/// header `n <count>` / body structure shared by both file kinds.
struct Records {
    n: usize,
    /// (line number, vertex fields, matrix entries)
    rows: Vec<(usize, Vec<usize>, Vec<f64>)>,
}

fn scan(input: &str, directive: &str, index_fields: usize) -> Result<Records> {
    let mut n = None;
    let mut rows = Vec::new();
    for (idx, raw) in input.lines().enumerate() {
        let line = idx + 1;
        let text = raw.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let mut tokens = text.split_whitespace();
        let head = tokens.next().expect("nonempty line");
        let rest: Vec<&str> = tokens.collect();
        if n.is_none() {
            if head != "n" || rest.len() != 1 {
                return Err(parse_err(line, "expected header 'n <count>'"));
            }
            let count: usize = rest[0]
                .parse()
                .map_err(|_| parse_err(line, format!("invalid vertex count '{}'", rest[0])))?;
            if count == 0 {
                return Err(parse_err(line, "vertex count must be positive"));
            }
            n = Some(count);
            continue;
        }
        if head != directive {
            return Err(parse_err(
                line,
                format!("unknown record '{head}' (expected '{directive}')"),
            ));
        }
        if rest.len() != index_fields + 9 {
            return Err(parse_err(
                line,
                format!(
                    "'{directive}' record needs {} fields, found {}",
                    index_fields + 9,
                    rest.len()
                ),
            ));
        }
        let mut indices = Vec::with_capacity(index_fields);
        for tok in &rest[..index_fields] {
            indices.push(
                tok.parse::<usize>()
                    .map_err(|_| parse_err(line, format!("invalid vertex index '{tok}'")))?,
            );
        }
        let mut entries = Vec::with_capacity(9);
        for tok in &rest[index_fields..] {
            let value: f64 = tok
                .parse()
                .map_err(|_| parse_err(line, format!("invalid number '{tok}'")))?;
            if !value.is_finite() {
                return Err(parse_err(line, format!("non-finite entry '{tok}'")));
            }
            entries.push(value);
        }
        rows.push((line, indices, entries));
    }
    let n = n.ok_or_else(|| parse_err(input.lines().count().max(1), "missing 'n <count>' header"))?;
    Ok(Records { n, rows })
}

/// Parses a problem file.
pub fn parse_problem(input: &str) -> Result<ParsedProblem> {
    let records = scan(input, "e", 2)?;
    let mut warnings = Vec::new();
    let mut edges = Vec::with_capacity(records.rows.len());
    let mut seen = HashSet::new();
    for (line, indices, entries) in records.rows {
        let (i, j) = (indices[0], indices[1]);
        if i >= records.n || j >= records.n {
            return Err(parse_err(
                line,
                format!("edge ({i}, {j}) outside vertex range 0..{}", records.n),
            ));
        }
        if i == j {
            return Err(parse_err(line, format!("self-loop at vertex {i}")));
        }
        if !seen.insert((i.min(j), i.max(j))) {
            return Err(parse_err(line, format!("duplicate edge ({i}, {j})")));
        }
        let rotation = rotation_from_entries(&entries, line, &mut warnings)?;
        edges.push((i, j, rotation));
    }
    let graph = CameraGraph::new(records.n, edges)?;
    Ok(ParsedProblem { graph, warnings })
}

/// Parses a solution file (one `r` record per vertex).
pub fn parse_solution(input: &str) -> Result<ParsedSolution> {
    let records = scan(input, "r", 1)?;
    let mut warnings = Vec::new();
    let mut slots: Vec<Option<Rotation>> = vec![None; records.n];
    for (line, indices, entries) in records.rows {
        let v = indices[0];
        if v >= records.n {
            return Err(parse_err(
                line,
                format!("vertex {v} outside range 0..{}", records.n),
            ));
        }
        if slots[v].is_some() {
            return Err(parse_err(line, format!("vertex {v} appears twice")));
        }
        slots[v] = Some(rotation_from_entries(&entries, line, &mut warnings)?);
    }
    let mut rotations = Vec::with_capacity(records.n);
    for (v, slot) in slots.into_iter().enumerate() {
        rotations.push(slot.ok_or_else(|| {
            Error::InvalidInput(format!("no rotation given for vertex {v}"))
        })?);
    }
    Ok(ParsedSolution { solution: SolutionStack::new(rotations), warnings })
}

fn push_matrix(out: &mut String, m: &Matrix3<f64>) {
    for r in 0..3 {
        for c in 0..3 {
            out.push(' ');
            out.push_str(&format!("{:.16e}", m[(r, c)]));
        }
    }
}

/// Writes a problem in the format [`parse_problem`] reads, with enough
/// digits for exact round-trips.
pub fn serialize_problem(g: &CameraGraph) -> String {
    let mut out = String::new();
    out.push_str("# rotation averaging problem\n");
    out.push_str(&format!("n {}\n", g.n()));
    for e in g.edges() {
        out.push_str(&format!("e {} {}", e.i, e.j));
        push_matrix(&mut out, e.measurement.matrix());
        out.push('\n');
    }
    out
}

/// Writes a solution in the format [`parse_solution`] reads.
pub fn serialize_solution(r: &SolutionStack) -> String {
    let mut out = String::new();
    out.push_str("# rotation averaging solution\n");
    out.push_str(&format!("n {}\n", r.n()));
    for i in 0..r.n() {
        out.push_str(&format!("r {i}"));
        push_matrix(&mut out, r.get(i).matrix());
        out.push('\n');
    }
    out
}

/// Summary of the semidefinite solve embedded in a report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverSummary {
    pub sweeps: usize,
    pub converged: bool,
    pub final_objective: f64,
    pub wall_time_seconds: f64,
    pub warnings: Vec<String>,
    /// Whether a local refinement pass ran after rounding.
    pub refined: bool,
    pub lm_iterations: Option<usize>,
}

/// Echo of the configuration that produced a report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub rel_tol: f64,
    pub max_sweeps: usize,
    pub sweep_order: String,
    pub seed: u64,
    pub warm_start: String,
    pub anchor: usize,
    pub refine_lm: bool,
}

/// The JSON document written by the solver front end; parses back for
/// re-certification.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    /// Always `"rotavg-report"`.
    pub format: String,
    pub version: u32,
    pub n: usize,
    pub edges: usize,
    /// Relaxation objective −tr(R̃Y) at the final iterate.
    pub objective: f64,
    /// Chordal cost of the reported rotations.
    pub chordal_cost: f64,
    pub certificate: Certificate,
    pub solver: SolverSummary,
    pub config: ConfigEcho,
    /// Row-major 3×3 blocks, vertex order.
    pub rotations: Vec<[f64; 9]>,
}

pub const REPORT_FORMAT: &str = "rotavg-report";
pub const REPORT_VERSION: u32 = 1;

/// Row-major flattening used by [`Report::rotations`].
pub fn rotation_rows(r: &SolutionStack) -> Vec<[f64; 9]> {
    (0..r.n())
        .map(|i| {
            let m = r.get(i).matrix();
            [
                m[(0, 0)],
                m[(0, 1)],
                m[(0, 2)],
                m[(1, 0)],
                m[(1, 1)],
                m[(1, 2)],
                m[(2, 0)],
                m[(2, 1)],
                m[(2, 2)],
            ]
        })
        .collect()
}

impl Report {
    /// Rebuilds the solution stack carried by the report.
    pub fn solution(&self) -> Result<SolutionStack> {
        if self.rotations.len() != self.n {
            return Err(Error::InvalidInput(format!(
                "report declares n = {} but carries {} rotations",
                self.n,
                self.rotations.len()
            )));
        }
        let mut warnings = Vec::new();
        let mut rotations = Vec::with_capacity(self.n);
        for (i, row) in self.rotations.iter().enumerate() {
            rotations.push(rotation_from_entries(row, i + 1, &mut warnings)?);
        }
        Ok(SolutionStack::new(rotations))
    }
}
