//! Spatial branch-and-bound for bilinear master problems.
//!
//! Best-bound-first search over variable boxes. Each node solves the LP
//! outer approximation from [`MasterProblem::relax`]; incumbents come from
//! fixing the inlet fractions at the relaxation point and re-solving the
//! remaining (linear or convex) subproblem, then screening the candidate
//! against the exact rows. Branching targets the nonlinear term with the
//! largest envelope violation and splits the factor with the wider
//! interval at the relaxation point, clamped away from the interval ends.
//! Everything is index-ordered and single-threaded, so identical inputs
//! produce identical results.

use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use crate::error::SolveError;
use crate::lp::{self, LpStatus};
use crate::master::{MasterProblem, SocRow, CANDIDATE_TOL};
use crate::solution::Solution;

/// Envelope violation that triggers branching.
pub const MCCORMICK_TOL: f64 = 1e-7;
/// Inlet fractions this close to 0 or 1 snap exactly before screening.
pub const SNAP_TOL: f64 = 1e-9;

const KELLEY_MAX_ROUNDS: usize = 30;
const POLISH_PASSES: usize = 4;
const GOLDEN_ITERS: usize = 48;
/// Outer-approximation rounds per node for the cone rows.
const CONE_ROUNDS: usize = 8;
/// Cone cuts shared across the whole tree; they are globally valid.
const CONE_CUT_CAP: usize = 1200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    GapLimit,
    TimeLimit,
    Infeasible,
}

impl SolveStatus {
    pub fn name(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::GapLimit => "gap_limit",
            SolveStatus::TimeLimit => "time_limit",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Relative gap at which the search declares optimality.
    pub rel_gap: f64,
    pub time_limit: Option<Duration>,
    pub max_nodes: usize,
    /// Collect one log row per processed node.
    pub log_nodes: bool,
    /// Locally refine the final incumbent over the inlet fractions.
    pub polish: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_gap: 1e-6,
            time_limit: None,
            max_nodes: 500_000,
            log_nodes: false,
            polish: true,
        }
    }
}

impl SolverConfig {
    pub fn with_rel_gap(rel_gap: f64) -> Self {
        Self {
            rel_gap,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct NodeLogRow {
    pub node: usize,
    pub depth: usize,
    pub lower: f64,
    pub incumbent: f64,
    pub gap: f64,
}

/// Improving incumbent observed during the search, kept for certification.
#[derive(Debug, Clone)]
pub struct IncumbentRecord {
    pub node: usize,
    pub objective: f64,
    pub solution: Solution,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub incumbent: Option<Solution>,
    pub objective: f64,
    pub lower_bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub wall_time: Duration,
    pub node_log: Option<Vec<NodeLogRow>>,
    pub incumbents: Vec<IncumbentRecord>,
}

/// Open subproblem: a box of variable bounds plus the inherited bound.
#[derive(Debug, Clone)]
pub struct BranchNode {
    pub id: usize,
    pub depth: usize,
    pub bound: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

struct HeapEntry {
    bound: f64,
    id: usize,
    node: BranchNode,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.id == other.id
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // BinaryHeap is a max-heap; invert for best-bound-first with
        // oldest-node tie breaking.
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

pub fn relative_gap(upper: f64, lower: f64) -> f64 {
    if !upper.is_finite() || !lower.is_finite() {
        return f64::INFINITY;
    }
    if upper <= lower {
        return 0.0;
    }
    (upper - lower) / lower.abs().max(1.0)
}

/// Largest `|product - a*b|` violation at a point, if any.
pub fn most_violated_term(problem: &MasterProblem, point: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (idx, term) in problem.nonlinear_terms().iter().enumerate() {
        let violation = (point[term.product] - point[term.a] * point[term.b]).abs();
        match best {
            Some((_, v)) if v >= violation => {}
            _ => best = Some((idx, violation)),
        }
    }
    best
}

/// Largest violation over the genuine products only. Square terms feed the
/// convex robust rows, which the cone cuts handle; they never require
/// branching on their own.
fn most_violated_product(problem: &MasterProblem, point: &[f64]) -> f64 {
    problem
        .nonlinear_terms()
        .iter()
        .filter(|t| !t.is_square())
        .map(|t| (point[t.product] - point[t.a] * point[t.b]).abs())
        .fold(0.0, f64::max)
}

/// Splits the node on the most violated nonlinear term: the factor with the
/// wider interval, at the relaxation point clamped to the middle 60% of the
/// interval. The children partition the parent box. Violations are compared
/// relative to each envelope's remaining capacity over the node box, so
/// square terms of large flows do not starve the unit-scale fraction
/// products of branching attention.
pub fn branch(
    problem: &MasterProblem,
    node: &BranchNode,
    point: &[f64],
    next_id: &mut usize,
) -> Result<(BranchNode, BranchNode), SolveError> {
    // Products take precedence; squares are a fallback for callers that
    // drive the relaxation without cone cuts.
    let mut best: Option<(usize, f64, bool)> = None;
    for (idx, term) in problem.nonlinear_terms().iter().enumerate() {
        let violation = (point[term.product] - point[term.a] * point[term.b]).abs();
        if violation <= MCCORMICK_TOL {
            continue;
        }
        let capacity = if term.is_square() {
            let width = node.upper[term.a] - node.lower[term.a];
            width * width / 4.0
        } else {
            let width_a = node.upper[term.a] - node.lower[term.a];
            let width_b = node.upper[term.b] - node.lower[term.b];
            width_a * width_b / 4.0
        };
        let score = violation / capacity.max(1e-12);
        let is_product = !term.is_square();
        let better = match best {
            None => true,
            Some((_, s, was_product)) => {
                (is_product && !was_product) || (is_product == was_product && score > s)
            }
        };
        if better {
            best = Some((idx, score, is_product));
        }
    }
    let (term_idx, _, _) = best.ok_or(SolveError::NoViolatedTerm)?;
    let term = problem.nonlinear_terms()[term_idx];
    let var = if term.is_square() {
        term.a
    } else {
        let width_a = node.upper[term.a] - node.lower[term.a];
        let width_b = node.upper[term.b] - node.lower[term.b];
        if width_a >= width_b {
            term.a
        } else {
            term.b
        }
    };
    let lo = node.lower[var];
    let hi = node.upper[var];
    let width = hi - lo;
    let split = point[var].clamp(lo + 0.2 * width, hi - 0.2 * width);

    let mut left = BranchNode {
        id: *next_id,
        depth: node.depth + 1,
        bound: node.bound,
        lower: node.lower.clone(),
        upper: node.upper.clone(),
    };
    left.upper[var] = split;
    let mut right = BranchNode {
        id: *next_id + 1,
        depth: node.depth + 1,
        bound: node.bound,
        lower: node.lower.clone(),
        upper: node.upper.clone(),
    };
    right.lower[var] = split;
    *next_id += 2;
    Ok((left, right))
}

/// Solves the master to the configured relative gap.
pub fn solve_global(problem: &MasterProblem, cfg: &SolverConfig) -> Result<SolveReport, SolveError> {
    problem.validate()?;
    let start = Instant::now();
    let mut log = cfg.log_nodes.then(Vec::new);
    let mut incumbents: Vec<IncumbentRecord> = Vec::new();

    let (mut root_lo, mut root_hi) = problem.root_bounds();
    if !problem.tighten_bounds_once(&mut root_lo, &mut root_hi) {
        return Ok(SolveReport {
            status: SolveStatus::Infeasible,
            incumbent: None,
            objective: f64::INFINITY,
            lower_bound: f64::INFINITY,
            gap: 0.0,
            nodes: 0,
            wall_time: start.elapsed(),
            node_log: log,
            incumbents,
        });
    }

    let mut heap = BinaryHeap::new();
    heap.push(HeapEntry {
        bound: f64::NEG_INFINITY,
        id: 0,
        node: BranchNode {
            id: 0,
            depth: 0,
            bound: f64::NEG_INFINITY,
            lower: root_lo.clone(),
            upper: root_hi.clone(),
        },
    });
    let mut next_id = 1usize;
    let mut processed = 0usize;
    let mut best: Option<(f64, Vec<f64>)> = None;
    // Bounds of nodes closed by convergence keep the reported lower bound
    // honest: a region may close with its incumbent a hair above its bound.
    let mut closed_floor = f64::INFINITY;
    // Supporting hyperplanes of the cone rows, valid over the whole tree.
    let mut cone_cuts: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();

    let status = loop {
        let heap_min = heap.peek().map(|e| e.bound).unwrap_or(f64::INFINITY);
        let global_lb = heap_min.min(closed_floor);
        let ub = best.as_ref().map(|(o, _)| *o).unwrap_or(f64::INFINITY);
        if best.is_some() && relative_gap(ub, global_lb) <= cfg.rel_gap {
            break SolveStatus::Optimal;
        }
        let Some(entry) = heap.pop() else {
            break if best.is_some() {
                if relative_gap(ub, global_lb) <= cfg.rel_gap {
                    SolveStatus::Optimal
                } else {
                    SolveStatus::GapLimit
                }
            } else {
                SolveStatus::Infeasible
            };
        };
        if let Some(limit) = cfg.time_limit {
            if start.elapsed() >= limit {
                heap.push(entry);
                break SolveStatus::TimeLimit;
            }
        }
        if processed >= cfg.max_nodes {
            heap.push(entry);
            break SolveStatus::GapLimit;
        }
        processed += 1;
        let node = entry.node;

        let Some(relaxed) = solve_node(problem, &node.lower, &node.upper, &mut cone_cuts)?
        else {
            continue;
        };
        let bound = node.bound.max(relaxed.value);
        let ub = best.as_ref().map(|(o, _)| *o).unwrap_or(f64::INFINITY);
        if bound >= ub - 1e-12 * ub.abs().max(1.0) {
            closed_floor = closed_floor.min(bound);
            continue;
        }

        // Incumbent heuristic: pin the fractions at the relaxation point.
        if let Some((cand_obj, cand_values)) =
            fixed_fraction_candidate(problem, &relaxed.point, &root_lo, &root_hi, &cone_cuts)?
        {
            if cand_obj < ub - 1e-12 {
                incumbents.push(IncumbentRecord {
                    node: node.id,
                    objective: cand_obj,
                    solution: problem.decode(&cand_values),
                });
                best = Some((cand_obj, cand_values));
            }
        }

        if let Some(rows) = log.as_mut() {
            let ub_now = best.as_ref().map(|(o, _)| *o).unwrap_or(f64::INFINITY);
            rows.push(NodeLogRow {
                node: node.id,
                depth: node.depth,
                lower: bound,
                incumbent: ub_now,
                gap: relative_gap(ub_now, bound),
            });
        }

        let violation = most_violated_product(problem, &relaxed.point);
        if violation <= MCCORMICK_TOL {
            // The relaxation point is essentially feasible: try it verbatim
            // and close the region at its bound.
            let sol = problem.decode(&relaxed.point);
            let values = problem.candidate_values(&sol.q, &sol.y, &sol.z);
            let (viol, _) = problem.max_violation(&values);
            if viol <= CANDIDATE_TOL {
                let obj = problem.objective_value(&values);
                let ub_now = best.as_ref().map(|(o, _)| *o).unwrap_or(f64::INFINITY);
                if obj < ub_now - 1e-12 {
                    incumbents.push(IncumbentRecord {
                        node: node.id,
                        objective: obj,
                        solution: sol,
                    });
                    best = Some((obj, values));
                }
            }
            closed_floor = closed_floor.min(bound);
            continue;
        }

        let node_for_children = BranchNode { bound, ..node };
        let (left, right) = branch(problem, &node_for_children, &relaxed.point, &mut next_id)?;
        for child in [left, right] {
            heap.push(HeapEntry {
                bound: child.bound,
                id: child.id,
                node: child,
            });
        }
    };

    let heap_min = heap.peek().map(|e| e.bound).unwrap_or(f64::INFINITY);
    let mut lower_bound = heap_min.min(closed_floor);
    let mut objective = best.as_ref().map(|(o, _)| *o).unwrap_or(f64::INFINITY);
    if lower_bound > objective {
        lower_bound = objective;
    }

    // Final local refinement of the incumbent over the fraction simplexes.
    let mut status = status;
    if cfg.polish && best.is_some() {
        let (_, values) = best.as_ref().unwrap();
        let q: Vec<f64> = problem.decision().q.iter().map(|&v| values[v]).collect();
        if let Some((obj, values)) =
            polish_fractions(problem, &q, objective, &root_lo, &root_hi, &cone_cuts)?
        {
            if obj < objective - 1e-12 {
                incumbents.push(IncumbentRecord {
                    node: usize::MAX,
                    objective: obj,
                    solution: problem.decode(&values),
                });
                best = Some((obj, values));
                objective = obj;
            }
        }
        if status == SolveStatus::GapLimit && relative_gap(objective, lower_bound) <= cfg.rel_gap {
            status = SolveStatus::Optimal;
        }
    }
    if status == SolveStatus::Infeasible && best.is_some() {
        status = SolveStatus::GapLimit;
    }

    Ok(SolveReport {
        status,
        incumbent: best.as_ref().map(|(_, v)| problem.decode(v)),
        objective,
        lower_bound,
        gap: relative_gap(objective, lower_bound),
        nodes: processed,
        wall_time: start.elapsed(),
        node_log: log,
        incumbents,
    })
}

/// Snaps near-integral fractions and renormalizes each pool group so the
/// simplex rows hold exactly.
fn snap_fractions(problem: &MasterProblem, q: &mut [f64]) {
    for value in q.iter_mut() {
        if (*value).abs() < SNAP_TOL {
            *value = 0.0;
        }
        if (*value - 1.0).abs() < SNAP_TOL {
            *value = 1.0;
        }
        *value = value.clamp(0.0, 1.0);
    }
    for group in &problem.decision().q_groups {
        let sum: f64 = group.iter().map(|&i| q[i]).sum();
        if sum > 0.5 && (sum - 1.0).abs() > 1e-15 {
            for &i in group {
                q[i] /= sum;
            }
        }
    }
}

struct NodeRelaxation {
    value: f64,
    point: Vec<f64>,
}

/// Node LP with the shared cone cuts, refined by outer approximation: as
/// long as the relaxation point violates a cone row, a supporting
/// hyperplane joins the shared pool and the LP is re-solved.
fn solve_node(
    problem: &MasterProblem,
    lower: &[f64],
    upper: &[f64],
    cone_cuts: &mut Vec<(Vec<(usize, f64)>, f64)>,
) -> Result<Option<NodeRelaxation>, SolveError> {
    for round in 0..=CONE_ROUNDS {
        let mut lp = problem.relax(lower, upper);
        for (coeffs, rhs) in cone_cuts.iter() {
            lp.add_row(coeffs.clone(), f64::NEG_INFINITY, *rhs);
        }
        let relaxed = lp::solve(&lp)?;
        if relaxed.status == LpStatus::Infeasible {
            return Ok(None);
        }
        let mut added = false;
        if round < CONE_ROUNDS && cone_cuts.len() < CONE_CUT_CAP {
            for soc in problem.soc_rows() {
                if let Some(cut) = kelley_cut(soc, &relaxed.point) {
                    cone_cuts.push(cut);
                    added = true;
                }
            }
        }
        if !added {
            return Ok(Some(NodeRelaxation {
                value: relaxed.value,
                point: relaxed.point,
            }));
        }
    }
    unreachable!("cone refinement always returns within the round limit")
}

/// Solves the problem with the fractions pinned: the product envelopes
/// collapse to exact identities, so the LP only misses the cone rows,
/// which are enforced by outer-approximation cuts. Returns an exactly
/// screened candidate.
fn fixed_fraction_candidate(
    problem: &MasterProblem,
    point: &[f64],
    root_lo: &[f64],
    root_hi: &[f64],
    shared_cuts: &[(Vec<(usize, f64)>, f64)],
) -> Result<Option<(f64, Vec<f64>)>, SolveError> {
    let mut q: Vec<f64> = problem.decision().q.iter().map(|&v| point[v]).collect();
    snap_fractions(problem, &mut q);
    solve_with_fixed_fractions(problem, &q, root_lo, root_hi, shared_cuts)
}

fn solve_with_fixed_fractions(
    problem: &MasterProblem,
    q: &[f64],
    root_lo: &[f64],
    root_hi: &[f64],
    shared_cuts: &[(Vec<(usize, f64)>, f64)],
) -> Result<Option<(f64, Vec<f64>)>, SolveError> {
    let mut lo = root_lo.to_vec();
    let mut hi = root_hi.to_vec();
    for (i, &var) in problem.decision().q.iter().enumerate() {
        let pinned = q[i].clamp(root_lo[var], root_hi[var]);
        lo[var] = pinned;
        hi[var] = pinned;
    }
    let mut cuts: Vec<(Vec<(usize, f64)>, f64)> = shared_cuts.to_vec();
    for _ in 0..KELLEY_MAX_ROUNDS {
        let mut lp = problem.relax(&lo, &hi);
        for (coeffs, rhs) in &cuts {
            lp.add_row(coeffs.clone(), f64::NEG_INFINITY, *rhs);
        }
        let relaxed = lp::solve(&lp)?;
        if relaxed.status == LpStatus::Infeasible {
            return Ok(None);
        }
        let sol = problem.decode(&relaxed.point);
        let values = problem.candidate_values(&sol.q, &sol.y, &sol.z);
        let (violation, _) = problem.max_violation(&values);
        if violation <= CANDIDATE_TOL {
            return Ok(Some((problem.objective_value(&values), values)));
        }
        let mut added = false;
        for soc in problem.soc_rows() {
            if let Some(cut) = kelley_cut(soc, &values) {
                cuts.push(cut);
                added = true;
            }
        }
        if !added {
            return Ok(None);
        }
    }
    Ok(None)
}

/// Supporting hyperplane of `linear + constant + r * ||u(v)||_2 <= 0` at a
/// violating point. Valid for the convex feasible set of the row.
fn kelley_cut(soc: &SocRow, values: &[f64]) -> Option<(Vec<(usize, f64)>, f64)> {
    let linear: f64 = soc.constant + soc.linear.iter().map(|&(v, c)| c * values[v]).sum::<f64>();
    let norm: f64 = soc
        .norm_terms
        .iter()
        .map(|&(v, c)| (c * values[v]).powi(2))
        .sum::<f64>()
        .sqrt();
    if linear + soc.radius * norm <= CANDIDATE_TOL || norm <= 1e-12 {
        return None;
    }
    let mut coeffs = soc.linear.clone();
    for &(v, c) in &soc.norm_terms {
        coeffs.push((v, soc.radius * c * c * values[v] / norm));
    }
    Some((coeffs, -soc.constant))
}

/// Coordinate-exchange local search over each pool's fraction simplex:
/// golden-section on mass transfers between inlet pairs, evaluating each
/// trial through the exact fixed-fraction subsolver.
fn polish_fractions(
    problem: &MasterProblem,
    q0: &[f64],
    start_obj: f64,
    root_lo: &[f64],
    root_hi: &[f64],
    shared_cuts: &[(Vec<(usize, f64)>, f64)],
) -> Result<Option<(f64, Vec<f64>)>, SolveError> {
    let groups: Vec<&Vec<usize>> = problem
        .decision()
        .q_groups
        .iter()
        .filter(|g| g.len() >= 2)
        .collect();
    if groups.is_empty() {
        return Ok(None);
    }
    let mut q = q0.to_vec();
    snap_fractions(problem, &mut q);
    let mut best_obj = start_obj;
    let mut best_values: Option<Vec<f64>> = None;

    let golden = 0.5 * (3.0 - 5f64.sqrt());
    for _ in 0..POLISH_PASSES {
        let mut improved = false;
        for group in &groups {
            for ai in 0..group.len() {
                for bi in ai + 1..group.len() {
                    let (ia, ib) = (group[ai], group[bi]);
                    // Transfer t from ia to ib keeps the simplex row exact.
                    let t_min = -q[ib];
                    let t_max = q[ia];
                    if t_max - t_min < 1e-10 {
                        continue;
                    }
                    let eval = |t: f64, q: &[f64]| -> Result<f64, SolveError> {
                        let mut trial = q.to_vec();
                        trial[ia] -= t;
                        trial[ib] += t;
                        Ok(
                            match solve_with_fixed_fractions(problem, &trial, root_lo, root_hi, shared_cuts)? {
                                Some((obj, _)) => obj,
                                None => f64::INFINITY,
                            },
                        )
                    };
                    let (mut a, mut b) = (t_min, t_max);
                    let mut x1 = a + golden * (b - a);
                    let mut x2 = b - golden * (b - a);
                    let mut f1 = eval(x1, &q)?;
                    let mut f2 = eval(x2, &q)?;
                    for _ in 0..GOLDEN_ITERS {
                        if f1 <= f2 {
                            b = x2;
                            x2 = x1;
                            f2 = f1;
                            x1 = a + golden * (b - a);
                            f1 = eval(x1, &q)?;
                        } else {
                            a = x1;
                            x1 = x2;
                            f1 = f2;
                            x2 = b - golden * (b - a);
                            f2 = eval(x2, &q)?;
                        }
                        if b - a < 1e-11 {
                            break;
                        }
                    }
                    // Candidates: interior minimum and both endpoints.
                    for t in [0.5 * (a + b), t_min, t_max] {
                        let mut trial = q.clone();
                        trial[ia] -= t;
                        trial[ib] += t;
                        if let Some((obj, values)) =
                            solve_with_fixed_fractions(problem, &trial, root_lo, root_hi, shared_cuts)?
                        {
                            if obj < best_obj - 1e-12 {
                                best_obj = obj;
                                q = trial;
                                best_values = Some(values);
                                improved = true;
                            }
                        }
                    }
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok(best_values.map(|v| (best_obj, v)))
}
