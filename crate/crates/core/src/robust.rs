//! Robust solution strategies for the pooling problem.
//!
//! Three routes to a robustly feasible flow plan:
//!
//! - [`reformulation_solve`]: replace each quality row by its deterministic
//!   counterpart (shifted coefficients for the box set, padding variables
//!   for the polyhedron, squared rows plus retained nominal rows for the
//!   ellipsoids) and solve once globally.
//! - [`cutting_plane_solve`]: alternate a scenario-constrained master with
//!   the closed-form separation oracle, adding violated scenarios as cuts
//!   and shrinking the master tolerance whenever the incumbent is robustly
//!   feasible, until both the violation and the tolerance targets hold.
//! - [`optimal_safety_factor`]: search the smallest uniform quality-bound
//!   tightening whose nominal solution is robustly feasible, mixing secant
//!   and bisection steps on the bracket.

use std::time::{Duration, Instant};

use crate::error::RobustError;
use crate::instance::{Concentrations, PoolingInstance};
use crate::master::{DecisionMap, MasterProblem, SocRow};
use crate::solution::{self, Solution};
use crate::solver::{self, SolveReport, SolveStatus, SolverConfig};
use crate::uncertainty::{Geometry, ScenarioPoint, Side, UncertaintySet};

/// Robust feasibility threshold standing in for the exact "violation <= 0".
pub const DEFAULT_FEAS_TOL: f64 = 1e-6;
/// Scenarios closer than this are treated as duplicates in a cut pool.
pub const SCENARIO_DUP_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Base master construction

struct BaseIds {
    z: Vec<usize>,
    v: Vec<usize>,
    w: Vec<usize>,
    /// (source-pool arc, pool-terminal arc) per product variable.
    w_triples: Vec<(usize, usize)>,
}

impl BaseIds {
    /// Positions of the products feeding terminal `j`.
    fn triples_into(&self, inst: &PoolingInstance, j: usize) -> Vec<usize> {
        self.w_triples
            .iter()
            .enumerate()
            .filter(|(_, &(_, a))| inst.pool_terminal_arcs()[a].1 == j)
            .map(|(t, _)| t)
            .collect()
    }
}

/// Shared scaffold: flow variables and products, availability, capacity,
/// demand (as bounds on the terminal totals), simplex rows, and the
/// negative-profit objective. Quality rows are added by each variant.
fn base_master(inst: &PoolingInstance) -> (MasterProblem, BaseIds) {
    let mut mp = MasterProblem::new();
    let sources = inst.sources();
    let pools = inst.pools();
    let terminals = inst.terminals();

    let q: Vec<usize> = inst
        .source_pool_arcs()
        .iter()
        .map(|&(i, l)| mp.add_var(format!("q({},{})", sources[i].id, pools[l].id), 0.0, 1.0))
        .collect();
    let y: Vec<usize> = inst
        .pool_terminal_arcs()
        .iter()
        .map(|&(l, j)| {
            mp.add_var(
                format!("y({},{})", pools[l].id, terminals[j].id),
                0.0,
                pools[l].capacity.min(terminals[j].max_demand),
            )
        })
        .collect();
    let z: Vec<usize> = inst
        .source_terminal_arcs()
        .iter()
        .map(|&(i, j)| {
            mp.add_var(
                format!("z({},{})", sources[i].id, terminals[j].id),
                0.0,
                sources[i].upper_avail.min(terminals[j].max_demand),
            )
        })
        .collect();

    let mut w = Vec::new();
    let mut w_triples = Vec::new();
    for (b, &(i, l)) in inst.source_pool_arcs().iter().enumerate() {
        for &a in inst.pool_outlets(l) {
            let (_, j) = inst.pool_terminal_arcs()[a];
            let hi = pools[l].capacity.min(terminals[j].max_demand);
            let id = mp.add_var(
                format!(
                    "w({},{},{})",
                    sources[i].id, pools[l].id, terminals[j].id
                ),
                0.0,
                hi,
            );
            mp.add_product(id, q[b], y[a]);
            w.push(id);
            w_triples.push((b, a));
        }
    }

    let v: Vec<usize> = terminals
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let id = mp.add_var(format!("v({})", t.id), t.min_demand, t.max_demand);
            let mut terms: Vec<(usize, f64)> = inst
                .terminal_pool_arcs(j)
                .iter()
                .map(|&a| (y[a], 1.0))
                .collect();
            terms.extend(inst.terminal_direct_arcs(j).iter().map(|&a| (z[a], 1.0)));
            mp.add_linear_aux(format!("v_def({})", t.id), id, terms, 0.0);
            id
        })
        .collect();

    for (i, s) in sources.iter().enumerate() {
        let mut coeffs: Vec<(usize, f64)> = w_triples
            .iter()
            .enumerate()
            .filter(|(_, &(b, _))| inst.source_pool_arcs()[b].0 == i)
            .map(|(t, _)| (w[t], 1.0))
            .collect();
        for (a, &(si, _)) in inst.source_terminal_arcs().iter().enumerate() {
            if si == i {
                coeffs.push((z[a], 1.0));
            }
        }
        if !coeffs.is_empty() {
            mp.add_row(
                format!("avail({})", s.id),
                coeffs,
                s.lower_avail,
                s.upper_avail,
            );
        }
    }
    for (l, p) in pools.iter().enumerate() {
        let coeffs: Vec<(usize, f64)> =
            inst.pool_outlets(l).iter().map(|&a| (y[a], 1.0)).collect();
        mp.add_row(
            format!("capacity({})", p.id),
            coeffs,
            f64::NEG_INFINITY,
            p.capacity,
        );
    }
    for (l, p) in pools.iter().enumerate() {
        let coeffs: Vec<(usize, f64)> =
            inst.pool_inlets(l).iter().map(|&b| (q[b], 1.0)).collect();
        mp.add_row(format!("simplex({})", p.id), coeffs, 1.0, 1.0);
    }

    let mut objective: Vec<(usize, f64)> = Vec::new();
    for (t, &(b, _)) in w_triples.iter().enumerate() {
        let (i, _) = inst.source_pool_arcs()[b];
        objective.push((w[t], sources[i].cost));
    }
    for (a, &(_, j)) in inst.pool_terminal_arcs().iter().enumerate() {
        objective.push((y[a], -terminals[j].price));
    }
    for (a, &(i, j)) in inst.source_terminal_arcs().iter().enumerate() {
        objective.push((z[a], -(terminals[j].price - sources[i].cost)));
    }
    mp.set_objective(objective);

    mp.set_decision_map(DecisionMap {
        q: q.clone(),
        y: y.clone(),
        z: z.clone(),
        q_groups: (0..pools.len())
            .map(|l| inst.pool_inlets(l).to_vec())
            .collect(),
    });

    let ids = BaseIds {
        z,
        v,
        w,
        w_triples,
    };
    (mp, ids)
}

/// Total-flow auxiliaries `x(i,j)`, one per source-terminal pair that is
/// reachable through a pool or a direct arc.
struct TotalFlowVars {
    pairs: Vec<(usize, usize)>,
    ids: Vec<usize>,
}

impl TotalFlowVars {
    /// Positions of the pairs feeding terminal `j`, in source order.
    fn into_terminal(&self, j: usize) -> Vec<usize> {
        self.pairs
            .iter()
            .enumerate()
            .filter(|(_, &(_, tj))| tj == j)
            .map(|(p, _)| p)
            .collect()
    }
}

fn add_total_flow_vars(
    mp: &mut MasterProblem,
    inst: &PoolingInstance,
    base: &BaseIds,
) -> TotalFlowVars {
    let mut pairs = Vec::new();
    let mut ids = Vec::new();
    for i in 0..inst.n_sources() {
        for j in 0..inst.n_terminals() {
            let mut terms: Vec<(usize, f64)> = Vec::new();
            for (t, &(b, a)) in base.w_triples.iter().enumerate() {
                if inst.source_pool_arcs()[b].0 == i && inst.pool_terminal_arcs()[a].1 == j {
                    terms.push((base.w[t], 1.0));
                }
            }
            if let Some(arc) = inst.st_arc_index(i, j) {
                terms.push((base.z[arc], 1.0));
            }
            if terms.is_empty() {
                continue;
            }
            let reach: f64 = terms.iter().map(|&(v, _)| mp.vars()[v].hi).sum();
            let hi = reach
                .min(inst.sources()[i].upper_avail)
                .min(inst.terminals()[j].max_demand);
            let id = mp.add_var(
                format!(
                    "x({},{})",
                    inst.sources()[i].id,
                    inst.terminals()[j].id
                ),
                0.0,
                hi,
            );
            mp.add_linear_aux(
                format!(
                    "x_def({},{})",
                    inst.sources()[i].id,
                    inst.terminals()[j].id
                ),
                id,
                terms,
                0.0,
            );
            pairs.push((i, j));
            ids.push(id);
        }
    }
    TotalFlowVars {
        pairs,
        ids,
    }
}

/// Quality rows written directly on the products and direct flows, used by
/// the nominal, safety-factor, and box variants: concentrations may be
/// shifted per side, bounds may be scaled.
fn add_wz_quality_rows(
    mp: &mut MasterProblem,
    inst: &PoolingInstance,
    base: &BaseIds,
    conc_up: &Concentrations,
    conc_lo: &Concentrations,
    bound_up: &dyn Fn(usize, usize) -> f64,
    bound_lo: &dyn Fn(usize, usize) -> f64,
) {
    for j in 0..inst.n_terminals() {
        let triples = base.triples_into(inst, j);
        let direct: Vec<usize> = inst.terminal_direct_arcs(j).to_vec();
        for k in 0..inst.n_components() {
            let blend = |conc: &Concentrations| -> Vec<(usize, f64)> {
                let mut coeffs: Vec<(usize, f64)> = Vec::new();
                for &t in &triples {
                    let (b, _) = base.w_triples[t];
                    let (i, _) = inst.source_pool_arcs()[b];
                    coeffs.push((base.w[t], conc.get(i, k)));
                }
                for &a in &direct {
                    let (i, _) = inst.source_terminal_arcs()[a];
                    coeffs.push((base.z[a], conc.get(i, k)));
                }
                coeffs
            };
            let up = bound_up(j, k);
            if up.is_finite() {
                let mut coeffs = blend(conc_up);
                coeffs.push((base.v[j], -up));
                mp.add_row(
                    format!(
                        "quality_up({},{})",
                        inst.terminals()[j].id,
                        inst.components()[k]
                    ),
                    coeffs,
                    f64::NEG_INFINITY,
                    0.0,
                );
            }
            let lo = bound_lo(j, k);
            let mut coeffs = blend(conc_lo);
            coeffs.push((base.v[j], -lo));
            mp.add_row(
                format!(
                    "quality_lo({},{})",
                    inst.terminals()[j].id,
                    inst.components()[k]
                ),
                coeffs,
                0.0,
                f64::INFINITY,
            );
        }
    }
}

/// Quality rows on the total-flow auxiliaries for one concentration
/// realization; `sides` filters which rows are emitted.
fn add_x_quality_rows(
    mp: &mut MasterProblem,
    inst: &PoolingInstance,
    base: &BaseIds,
    xv: &TotalFlowVars,
    conc: &Concentrations,
    label: &str,
    sides: &dyn Fn(usize, usize, Side) -> bool,
) {
    for j in 0..inst.n_terminals() {
        let positions = xv.into_terminal(j);
        for k in 0..inst.n_components() {
            let coeffs = |bound: f64| -> Vec<(usize, f64)> {
                let mut c: Vec<(usize, f64)> = positions
                    .iter()
                    .map(|&p| (xv.ids[p], conc.get(xv.pairs[p].0, k)))
                    .collect();
                c.push((base.v[j], -bound));
                c
            };
            let up = inst.terminals()[j].quality_upper[k];
            if up.is_finite() && sides(j, k, Side::Upper) {
                mp.add_row(
                    format!(
                        "quality_up({},{},{label})",
                        inst.terminals()[j].id,
                        inst.components()[k]
                    ),
                    coeffs(up),
                    f64::NEG_INFINITY,
                    0.0,
                );
            }
            let lo = inst.terminals()[j].quality_lower[k];
            if sides(j, k, Side::Lower) {
                mp.add_row(
                    format!(
                        "quality_lo({},{},{label})",
                        inst.terminals()[j].id,
                        inst.components()[k]
                    ),
                    coeffs(lo),
                    0.0,
                    f64::INFINITY,
                );
            }
        }
    }
}

/// The nominal problem: quality rows at the nominal concentrations.
pub fn build_nominal(inst: &PoolingInstance) -> MasterProblem {
    build_safety(inst, 1.0)
}

/// Nominal concentrations with quality bounds tightened by the safety
/// factor: upper bounds scaled by `1/s`, lower bounds by `s`.
pub fn build_safety(inst: &PoolingInstance, s: f64) -> MasterProblem {
    let (mut mp, base) = base_master(inst);
    let nominal = inst.nominal_concentrations();
    add_wz_quality_rows(
        &mut mp,
        inst,
        &base,
        &nominal,
        &nominal,
        &|j, k| inst.terminals()[j].quality_upper[k] / s,
        &|j, k| inst.terminals()[j].quality_lower[k] * s,
    );
    mp
}

/// Deterministic robust counterpart for the chosen set geometry.
pub fn build_reformulation(
    inst: &PoolingInstance,
    set: &UncertaintySet,
) -> Result<MasterProblem, RobustError> {
    check_covariance_dims(inst, set)?;
    let (mut mp, base) = base_master(inst);
    let r = set.radius();
    match set.geometry() {
        Geometry::Box => {
            // Shifted coefficients C +- r*Chat; no added variables.
            let mut conc_up = inst.nominal_concentrations();
            let mut conc_lo = inst.nominal_concentrations();
            for (i, s) in inst.sources().iter().enumerate() {
                for k in 0..inst.n_components() {
                    *conc_up.get_mut(i, k) += r * s.deviation[k];
                    *conc_lo.get_mut(i, k) -= r * s.deviation[k];
                }
            }
            add_wz_quality_rows(
                &mut mp,
                inst,
                &base,
                &conc_up,
                &conc_lo,
                &|j, k| inst.terminals()[j].quality_upper[k],
                &|j, k| inst.terminals()[j].quality_lower[k],
            );
        }
        Geometry::Polyhedron => {
            let xv = add_total_flow_vars(&mut mp, inst, &base);
            for j in 0..inst.n_terminals() {
                let positions = xv.into_terminal(j);
                for k in 0..inst.n_components() {
                    let pad_exprs: Vec<Vec<(usize, f64)>> = positions
                        .iter()
                        .map(|&p| {
                            vec![(
                                xv.ids[p],
                                inst.sources()[xv.pairs[p].0].deviation[k],
                            )]
                        })
                        .collect();
                    let pad_hi = positions
                        .iter()
                        .map(|&p| {
                            inst.sources()[xv.pairs[p].0].deviation[k]
                                * mp.vars()[xv.ids[p]].hi
                        })
                        .fold(0.0, f64::max);
                    let blend: Vec<(usize, f64)> = positions
                        .iter()
                        .map(|&p| {
                            (
                                xv.ids[p],
                                inst.sources()[xv.pairs[p].0].quality[k],
                            )
                        })
                        .collect();
                    let terminal = &inst.terminals()[j];
                    let component = &inst.components()[k];
                    let up = terminal.quality_upper[k];
                    if up.is_finite() {
                        let lambda =
                            mp.add_var(format!("pad_up({},{component})", terminal.id), 0.0, pad_hi);
                        mp.add_max_aux(
                            format!("pad_up_def({},{component})", terminal.id),
                            lambda,
                            pad_exprs.clone(),
                        );
                        let mut coeffs = blend.clone();
                        coeffs.push((lambda, r));
                        coeffs.push((base.v[j], -up));
                        mp.add_row(
                            format!("quality_up({},{component})", terminal.id),
                            coeffs,
                            f64::NEG_INFINITY,
                            0.0,
                        );
                    }
                    let lambda =
                        mp.add_var(format!("pad_lo({},{component})", terminal.id), 0.0, pad_hi);
                    mp.add_max_aux(
                        format!("pad_lo_def({},{component})", terminal.id),
                        lambda,
                        pad_exprs,
                    );
                    let mut coeffs = blend;
                    coeffs.push((lambda, -r));
                    coeffs.push((base.v[j], -terminal.quality_lower[k]));
                    mp.add_row(
                        format!("quality_lo({},{component})", terminal.id),
                        coeffs,
                        0.0,
                        f64::INFINITY,
                    );
                }
            }
        }
        Geometry::Ellipsoid | Geometry::CorrelatedEllipsoid => {
            let xv = add_total_flow_vars(&mut mp, inst, &base);
            // Nominal rows are retained; the squared rows alone only bound
            // the magnitude of the residual.
            add_x_quality_rows(
                &mut mp,
                inst,
                &base,
                &xv,
                &inst.nominal_concentrations(),
                "nominal",
                &|_, _, _| true,
            );
            add_ellipsoidal_rows(&mut mp, inst, &base, &xv, set);
        }
    }
    Ok(mp)
}

/// Squared robust rows for the (correlated) ellipsoid: with `sigma = L L'`
/// the padding norm is `||L' (Chat o x)||_2`, a 2-norm of linear
/// expressions, so each squared row only needs square terms relaxed by
/// tangents and secants. The exact cone form is kept alongside for
/// candidate certification.
fn add_ellipsoidal_rows(
    mp: &mut MasterProblem,
    inst: &PoolingInstance,
    base: &BaseIds,
    xv: &TotalFlowVars,
    set: &UncertaintySet,
) {
    let r = set.radius();
    let identity;
    let chol_l = match set.cholesky_factor() {
        Some(l) => l,
        None => {
            identity = nalgebra::DMatrix::identity(inst.n_sources(), inst.n_sources());
            &identity
        }
    };
    // Shared squares of the weighted flows, keyed by (norm component, j, k).
    for j in 0..inst.n_terminals() {
        let positions = xv.into_terminal(j);
        if positions.is_empty() {
            continue;
        }
        let terminal = &inst.terminals()[j];
        for k in 0..inst.n_components() {
            let component = &inst.components()[k];
            // Norm expressions g_m = sum_i L[i,m] * Chat[i,k] * x[i,j].
            let mut square_ids: Vec<usize> = Vec::new();
            let mut norm_terms: Vec<(usize, f64)> = Vec::new();
            for m in 0..inst.n_sources() {
                let terms: Vec<(usize, f64)> = positions
                    .iter()
                    .filter_map(|&p| {
                        let (i, _) = xv.pairs[p];
                        let coef = chol_l[(i, m)] * inst.sources()[i].deviation[k];
                        (coef != 0.0).then_some((xv.ids[p], coef))
                    })
                    .collect();
                if terms.is_empty() {
                    continue;
                }
                let (mut g_lo, mut g_hi) = (0.0, 0.0);
                for &(v, c) in &terms {
                    let (a, b) = (c * mp.vars()[v].lo, c * mp.vars()[v].hi);
                    g_lo += a.min(b);
                    g_hi += a.max(b);
                }
                let g = mp.add_var(
                    format!("norm({},{component},{m})", terminal.id),
                    g_lo,
                    g_hi,
                );
                mp.add_linear_aux(
                    format!("norm_def({},{component},{m})", terminal.id),
                    g,
                    terms,
                    0.0,
                );
                let s_hi = (g_lo * g_lo).max(g_hi * g_hi);
                let sq = mp.add_var(
                    format!("norm_sq({},{component},{m})", terminal.id),
                    0.0,
                    s_hi,
                );
                mp.add_product(sq, g, g);
                square_ids.push(sq);
                norm_terms.push((g, 1.0));
            }
            if square_ids.is_empty() {
                continue;
            }

            let blend: Vec<(usize, f64)> = positions
                .iter()
                .map(|&p| (xv.ids[p], inst.sources()[xv.pairs[p].0].quality[k]))
                .collect();
            let blend_hi: f64 = blend.iter().map(|&(v, c)| c * mp.vars()[v].hi).sum();
            let mut emit_side = |side: Side, bound: f64| {
                if !bound.is_finite() {
                    return;
                }
                // Residual u >= 0 thanks to the retained nominal row.
                let (u_hi, u_terms): (f64, Vec<(usize, f64)>) = match side {
                    Side::Upper => {
                        let mut t = vec![(base.v[j], bound)];
                        t.extend(blend.iter().map(|&(v, c)| (v, -c)));
                        (bound * terminal.max_demand, t)
                    }
                    Side::Lower => {
                        let mut t: Vec<(usize, f64)> = blend.clone();
                        t.push((base.v[j], -bound));
                        (blend_hi, t)
                    }
                };
                let tag = side.name();
                let u = mp.add_var(
                    format!("slack_{tag}({},{component})", terminal.id),
                    0.0,
                    u_hi.max(0.0),
                );
                mp.add_linear_aux(
                    format!("slack_{tag}_def({},{component})", terminal.id),
                    u,
                    u_terms,
                    0.0,
                );
                let t_sq = mp.add_var(
                    format!("slack_sq_{tag}({},{component})", terminal.id),
                    0.0,
                    (u_hi * u_hi).max(0.0),
                );
                mp.add_product(t_sq, u, u);
                let mut coeffs: Vec<(usize, f64)> =
                    square_ids.iter().map(|&s| (s, r * r)).collect();
                coeffs.push((t_sq, -1.0));
                // Squared quantities live on the flow-squared scale; the
                // exact cone row below is the certification surface.
                let row_scale = square_ids
                    .iter()
                    .map(|&s| r * r * mp.vars()[s].hi)
                    .sum::<f64>()
                    .max(u_hi * u_hi);
                mp.add_scaled_row(
                    format!("robust_sq_{tag}({},{component})", terminal.id),
                    coeffs,
                    f64::NEG_INFINITY,
                    0.0,
                    row_scale,
                );
                // Exact cone form for screening: -u + r*||g|| <= 0.
                mp.add_soc_row(SocRow {
                    name: format!("robust_cone_{tag}({},{component})", terminal.id),
                    linear: vec![(u, -1.0)],
                    constant: 0.0,
                    radius: r,
                    norm_terms: norm_terms.clone(),
                });
            };
            emit_side(Side::Upper, terminal.quality_upper[k]);
            emit_side(Side::Lower, terminal.quality_lower[k]);
        }
    }
}

fn check_covariance_dims(
    inst: &PoolingInstance,
    set: &UncertaintySet,
) -> Result<(), RobustError> {
    if let Some(sigma) = set.covariance_matrix() {
        if sigma.nrows() != inst.n_sources() {
            return Err(RobustError::Config(format!(
                "covariance is {}x{} but the instance has {} sources",
                sigma.nrows(),
                sigma.ncols(),
                inst.n_sources()
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Scenario masters and cut pools

/// Which quality rows a pooled scenario contributes to the master.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutRows {
    /// Both sides of every terminal/component pair.
    All,
    /// Only the row that was found violated.
    Single {
        terminal: usize,
        component: usize,
        side: Side,
    },
}

#[derive(Debug, Clone)]
pub struct CutOrigin {
    pub iteration: usize,
    pub terminal: usize,
    pub component: usize,
    pub side: Side,
    pub violation: f64,
}

#[derive(Debug, Clone)]
pub struct Cut {
    pub scenario: ScenarioPoint,
    pub rows: CutRows,
    /// None for the nominal seed entry.
    pub origin: Option<CutOrigin>,
}

/// Ordered scenario pool; the first entry is always the nominal point.
#[derive(Debug, Clone)]
pub struct CutPool {
    cuts: Vec<Cut>,
}

impl CutPool {
    pub fn nominal(inst: &PoolingInstance) -> Self {
        Self {
            cuts: vec![Cut {
                scenario: ScenarioPoint::nominal(inst.n_sources(), inst.n_components()),
                rows: CutRows::All,
                origin: None,
            }],
        }
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    /// Scenarios added beyond the nominal seed.
    pub fn cuts_added(&self) -> usize {
        self.cuts.len().saturating_sub(1)
    }

    pub fn contains(&self, scenario: &ScenarioPoint, rows: CutRows) -> bool {
        self.cuts
            .iter()
            .any(|c| c.rows == rows && c.scenario.is_close(scenario, SCENARIO_DUP_TOL))
    }

    pub fn push(&mut self, cut: Cut) {
        self.cuts.push(cut);
    }
}

/// Master over the finite scenario pool: nominal pooling rows plus one pair
/// of linear quality rows per pooled scenario per terminal/component.
pub fn scenario_master(inst: &PoolingInstance, pool: &CutPool) -> MasterProblem {
    assert!(!pool.is_empty(), "cut pool must contain the nominal point");
    let (mut mp, base) = base_master(inst);
    let xv = add_total_flow_vars(&mut mp, inst, &base);
    for (idx, cut) in pool.cuts().iter().enumerate() {
        let realized = cut.scenario.realized(inst);
        let label = format!("cut{idx}");
        match cut.rows {
            CutRows::All => {
                add_x_quality_rows(&mut mp, inst, &base, &xv, &realized, &label, &|_, _, _| {
                    true
                });
            }
            CutRows::Single {
                terminal,
                component,
                side,
            } => {
                add_x_quality_rows(
                    &mut mp,
                    inst,
                    &base,
                    &xv,
                    &realized,
                    &label,
                    &|j, k, s| j == terminal && k == component && s == side,
                );
            }
        }
    }
    mp
}

// ---------------------------------------------------------------------------
// Separation

#[derive(Debug, Clone)]
pub struct SeparationResult {
    /// Largest violation over all quality rows and set members.
    pub epsilon: f64,
    /// Terminal, component, and side attaining it.
    pub worst: Option<(usize, usize, Side)>,
    pub scenario: ScenarioPoint,
    pub feas_tol: f64,
}

impl SeparationResult {
    pub fn certified(&self) -> bool {
        self.epsilon <= self.feas_tol
    }
}

/// Evaluates the closed-form worst case for every terminal, component, and
/// side; the solution is robustly feasible iff the result stays below the
/// tolerance.
pub fn separation(
    inst: &PoolingInstance,
    sol: &Solution,
    set: &UncertaintySet,
    feas_tol: f64,
) -> Result<SeparationResult, RobustError> {
    check_covariance_dims(inst, set)?;
    let x = solution::total_flow_x(inst, sol);
    let v = solution::terminal_flow_v(inst, sol);
    let mut best = SeparationResult {
        epsilon: f64::NEG_INFINITY,
        worst: None,
        scenario: ScenarioPoint::nominal(inst.n_sources(), inst.n_components()),
        feas_tol,
    };
    for j in 0..inst.n_terminals() {
        for k in 0..inst.n_components() {
            for side in [Side::Upper, Side::Lower] {
                let bound = match side {
                    Side::Upper => inst.terminals()[j].quality_upper[k],
                    Side::Lower => inst.terminals()[j].quality_lower[k],
                };
                if !bound.is_finite() {
                    continue;
                }
                let (violation, scenario) = set.worst_case(inst, &x, &v, j, k, side)?;
                if violation > best.epsilon {
                    best.epsilon = violation;
                    best.worst = Some((j, k, side));
                    best.scenario = scenario;
                }
            }
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Method drivers

/// Outcome of a robust method: the final global solve plus certification
/// and work counters across all master solves.
#[derive(Debug, Clone)]
pub struct RobustReport {
    pub solve: SolveReport,
    pub separation_eps: f64,
    pub certified: bool,
    pub cuts_added: usize,
    /// Master solves (cutting planes) or bracket steps (safety factor).
    pub iterations: usize,
    pub total_nodes: usize,
    pub total_time: Duration,
}

fn certify(
    inst: &PoolingInstance,
    set: &UncertaintySet,
    report: &SolveReport,
    feas_tol: f64,
) -> Result<(f64, bool), RobustError> {
    match &report.incumbent {
        Some(sol) => {
            let sep = separation(inst, sol, set, feas_tol)?;
            Ok((sep.epsilon, sep.certified()))
        }
        None => Ok((f64::INFINITY, false)),
    }
}

/// Builds the deterministic reformulation and solves it globally. Any
/// incumbent of the reformulated master is robustly feasible, so even a
/// truncated solve yields a certified solution.
pub fn reformulation_solve(
    inst: &PoolingInstance,
    set: &UncertaintySet,
    cfg: &SolverConfig,
    feas_tol: f64,
) -> Result<RobustReport, RobustError> {
    let mp = build_reformulation(inst, set)?;
    let report = solver::solve_global(&mp, cfg)?;
    let (eps, certified) = certify(inst, set, &report, feas_tol)?;
    Ok(RobustReport {
        separation_eps: eps,
        certified,
        cuts_added: 0,
        iterations: 1,
        total_nodes: report.nodes,
        total_time: report.wall_time,
        solve: report,
    })
}

/// Nominal solve, exposed for the harness.
pub fn nominal_solve(
    inst: &PoolingInstance,
    cfg: &SolverConfig,
) -> Result<SolveReport, RobustError> {
    Ok(solver::solve_global(&build_nominal(inst), cfg)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutMode {
    Single,
    Multi,
}

#[derive(Debug, Clone)]
pub struct CuttingPlaneConfig {
    /// Initial master tolerance.
    pub delta0: f64,
    /// Tolerance shrink factor, strictly inside (0, 1).
    pub gamma: f64,
    /// Final master tolerance.
    pub delta_star: f64,
    pub feas_tol: f64,
    pub max_cuts: usize,
    pub mode: CutMode,
    pub solver: SolverConfig,
}

impl Default for CuttingPlaneConfig {
    fn default() -> Self {
        Self {
            delta0: 1e-2,
            gamma: 0.1,
            delta_star: 1e-6,
            feas_tol: DEFAULT_FEAS_TOL,
            max_cuts: 200,
            mode: CutMode::Multi,
            solver: SolverConfig::default(),
        }
    }
}

impl CuttingPlaneConfig {
    fn validate(&self) -> Result<(), RobustError> {
        if !(self.delta_star > 0.0 && self.delta_star <= self.delta0) {
            return Err(RobustError::Config(format!(
                "tolerances must satisfy 0 < delta_star <= delta0, got {} and {}",
                self.delta_star, self.delta0
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(RobustError::Config(format!(
                "shrink factor must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if self.max_cuts == 0 {
            return Err(RobustError::Config("max_cuts must be at least 1".into()));
        }
        if !(self.feas_tol > 0.0) {
            return Err(RobustError::Config("feas_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Adaptive-tolerance cutting planes. Each round solves the scenario
/// master at the current tolerance and separates the incumbent; violated
/// scenarios join the pool (one row in single mode, all rows in multi
/// mode), robust feasibility shrinks the tolerance, and the loop ends when
/// the incumbent is robustly feasible at the final tolerance.
pub fn cutting_plane_solve(
    inst: &PoolingInstance,
    set: &UncertaintySet,
    cfg: &CuttingPlaneConfig,
) -> Result<(RobustReport, CutPool), RobustError> {
    cfg.validate()?;
    check_covariance_dims(inst, set)?;
    let start = Instant::now();
    let mut pool = CutPool::nominal(inst);
    let mut delta = cfg.delta0;
    let mut iterations = 0usize;
    let mut total_nodes = 0usize;
    let max_rounds = 4 * cfg.max_cuts + 64;

    let finish = |report: SolveReport,
                      eps: f64,
                      certified: bool,
                      pool: CutPool,
                      iterations: usize,
                      total_nodes: usize|
     -> Result<(RobustReport, CutPool), RobustError> {
        Ok((
            RobustReport {
                separation_eps: eps,
                certified,
                cuts_added: pool.cuts_added(),
                iterations,
                total_nodes,
                total_time: start.elapsed(),
                solve: report,
            },
            pool,
        ))
    };

    loop {
        let mut solver_cfg = cfg.solver.clone();
        solver_cfg.rel_gap = delta;
        if let Some(limit) = cfg.solver.time_limit {
            let remaining = limit.saturating_sub(start.elapsed());
            if remaining.is_zero() {
                let mut report = solver::solve_global(&scenario_master(inst, &pool), &{
                    let mut c = solver_cfg.clone();
                    c.max_nodes = 1;
                    c
                })?;
                report.status = SolveStatus::TimeLimit;
                let (eps, certified) = certify(inst, set, &report, cfg.feas_tol)?;
                return finish(report, eps, certified, pool, iterations, total_nodes);
            }
            solver_cfg.time_limit = Some(remaining);
        }

        let mp = scenario_master(inst, &pool);
        let report = solver::solve_global(&mp, &solver_cfg)?;
        iterations += 1;
        total_nodes += report.nodes;

        if report.incumbent.is_none() || report.status == SolveStatus::TimeLimit {
            let (eps, certified) = certify(inst, set, &report, cfg.feas_tol)?;
            return finish(report, eps, certified, pool, iterations, total_nodes);
        }
        let sol = report.incumbent.clone().expect("incumbent present");
        let sep = separation(inst, &sol, set, cfg.feas_tol)?;

        if sep.epsilon <= cfg.feas_tol {
            if delta <= cfg.delta_star * (1.0 + 1e-12) {
                return finish(report, sep.epsilon, true, pool, iterations, total_nodes);
            }
            delta = (delta * cfg.gamma).max(cfg.delta_star);
        } else {
            let (terminal, component, side) = sep.worst.expect("violated row exists");
            let rows = match cfg.mode {
                CutMode::Multi => CutRows::All,
                CutMode::Single => CutRows::Single {
                    terminal,
                    component,
                    side,
                },
            };
            if pool.contains(&sep.scenario, rows) {
                // Master-tolerance slack re-derived an existing scenario;
                // tightening the master is the productive move.
                delta = (delta * cfg.gamma).max(cfg.delta_star);
            } else {
                if pool.cuts_added() >= cfg.max_cuts {
                    let mut report = report;
                    report.status = SolveStatus::GapLimit;
                    return finish(
                        report,
                        sep.epsilon,
                        false,
                        pool,
                        iterations,
                        total_nodes,
                    );
                }
                pool.push(Cut {
                    scenario: sep.scenario.clone(),
                    rows,
                    origin: Some(CutOrigin {
                        iteration: iterations,
                        terminal,
                        component,
                        side,
                        violation: sep.epsilon,
                    }),
                });
            }
        }

        if iterations >= max_rounds {
            let mut report = report;
            report.status = SolveStatus::GapLimit;
            let (eps, certified) = certify(inst, set, &report, cfg.feas_tol)?;
            return finish(report, eps, certified, pool, iterations, total_nodes);
        }
    }
}

/// Solves the safety-factor problem at a fixed factor `s >= 1`.
pub fn safety_factor_solve(
    inst: &PoolingInstance,
    s: f64,
    cfg: &SolverConfig,
) -> Result<SolveReport, RobustError> {
    if !(s >= 1.0) {
        return Err(RobustError::Config(format!(
            "safety factor must be at least 1, got {s}"
        )));
    }
    Ok(solver::solve_global(&build_safety(inst, s), cfg)?)
}

#[derive(Debug, Clone)]
pub struct SafetyFactorConfig {
    /// Initial upper bracket, comfortably conservative.
    pub s_bar: f64,
    /// Relative bracket width at which the search stops.
    pub rel_tol: f64,
    /// Violation level below which bisection replaces the secant step.
    pub bisect_threshold: f64,
    pub max_iters: usize,
    pub feas_tol: f64,
    pub solver: SolverConfig,
}

impl Default for SafetyFactorConfig {
    fn default() -> Self {
        Self {
            s_bar: 100.0,
            rel_tol: 1e-6,
            bisect_threshold: 0.01,
            max_iters: 200,
            feas_tol: DEFAULT_FEAS_TOL,
            solver: SolverConfig::default(),
        }
    }
}

impl SafetyFactorConfig {
    fn validate(&self) -> Result<(), RobustError> {
        if !(self.s_bar > 1.0) {
            return Err(RobustError::Config(format!(
                "s_bar must exceed 1, got {}",
                self.s_bar
            )));
        }
        if !(self.rel_tol > 0.0) {
            return Err(RobustError::Config("rel_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Finds the smallest safety factor whose nominal-concentration solution
/// passes separation for the given set. Bracket updates follow the
/// secant/bisection scheme: secant while the infeasible end is clearly
/// violated, bisection once it is nearly feasible; a candidate joins the
/// feasible side iff its solution certifies.
pub fn optimal_safety_factor(
    inst: &PoolingInstance,
    set: &UncertaintySet,
    cfg: &SafetyFactorConfig,
) -> Result<(f64, RobustReport), RobustError> {
    cfg.validate()?;
    check_covariance_dims(inst, set)?;
    let start = Instant::now();
    let mut iterations = 0usize;
    let mut total_nodes = 0usize;

    let solve_at = |s: f64, iterations: &mut usize, total_nodes: &mut usize| {
        *iterations += 1;
        let report = safety_factor_solve(inst, s, &cfg.solver)?;
        *total_nodes += report.nodes;
        let (eps, certified) = certify(inst, set, &report, cfg.feas_tol)?;
        Ok::<_, RobustError>((report, eps, certified))
    };

    // Both bracket ends are solved up front.
    let (report0, eps0, certified0) = solve_at(1.0, &mut iterations, &mut total_nodes)?;
    if certified0 {
        return Ok((
            1.0,
            RobustReport {
                separation_eps: eps0,
                certified: true,
                cuts_added: 0,
                iterations,
                total_nodes,
                total_time: start.elapsed(),
                solve: report0,
            },
        ));
    }
    let (report1, eps1, certified1) = solve_at(cfg.s_bar, &mut iterations, &mut total_nodes)?;
    if !certified1 {
        return Err(RobustError::IncreaseSBar);
    }

    let mut s0 = 1.0;
    let mut s1 = cfg.s_bar;
    let mut e0 = eps0;
    let mut e1 = eps1;
    let mut best_s = cfg.s_bar;
    let mut best = (report1, eps1);

    while (s1 - s0).abs() / s0.abs().max(1e-12) >= cfg.rel_tol && iterations < cfg.max_iters {
        let mut s = if e1 <= cfg.bisect_threshold {
            0.5 * (s0 + s1)
        } else {
            s0 + e0 * (s0 - s1) / (e1 - e0)
        };
        // The secant step can leave the bracket when the violation curve is
        // flat; fall back to bisection.
        let (lo, hi) = (s0.min(s1), s0.max(s1));
        if !s.is_finite() || s <= lo || s >= hi {
            s = 0.5 * (s0 + s1);
        }
        let (report, eps, certified) = solve_at(s, &mut iterations, &mut total_nodes)?;
        if certified {
            s0 = s;
            e0 = eps;
            if s < best_s {
                best_s = s;
                best = (report, eps);
            }
        } else {
            s1 = s;
            e1 = eps;
        }
    }

    let (report, eps) = best;
    Ok((
        best_s,
        RobustReport {
            separation_eps: eps,
            certified: true,
            cuts_added: 0,
            iterations,
            total_nodes,
            total_time: start.elapsed(),
            solve: report,
        },
    ))
}
