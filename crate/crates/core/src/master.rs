//! Bilinear master problems over box-bounded variables.
//!
//! A [`MasterProblem`] holds linear rows, registered nonlinear terms
//! (products `w = a*b` and squares `t = u*u`), and the recipe for computing
//! every auxiliary variable exactly from the decision variables `(q, y, z)`.
//! [`MasterProblem::relax`] produces the LP outer approximation at given
//! node bounds: each product is replaced by its McCormick envelope, each
//! square by tangent underestimators at the interval endpoints and midpoint
//! plus the secant overestimator. Exact candidate screening goes through
//! [`MasterProblem::evaluate_candidate`], which recomputes auxiliaries from
//! their definitions and reports the worst row or bound violation.

use crate::error::SolveError;
use crate::lp::LinearProgram;
use crate::solution::Solution;

/// Feasibility tolerance used when screening incumbent candidates; tighter
/// than the reporting tolerance so certified results keep headroom.
pub const CANDIDATE_TOL: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct VarDef {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

/// Ranged linear row; either side may be infinite. `scale` normalizes the
/// row's violation during candidate screening: rows built from squared
/// quantities carry their natural magnitude so the tolerance stays
/// meaningful across scales.
#[derive(Debug, Clone)]
pub struct Row {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub lo: f64,
    pub hi: f64,
    pub scale: f64,
}

/// `product = a * b`; `a == b` marks a square term.
#[derive(Debug, Clone, Copy)]
pub struct NonlinearTerm {
    pub product: usize,
    pub a: usize,
    pub b: usize,
}

impl NonlinearTerm {
    pub fn is_square(&self) -> bool {
        self.a == self.b
    }
}

/// How an auxiliary variable is computed from already-known values.
#[derive(Debug, Clone)]
pub enum AuxRule {
    Linear {
        terms: Vec<(usize, f64)>,
        constant: f64,
    },
    Product {
        a: usize,
        b: usize,
    },
    Square {
        of: usize,
    },
    /// Pointwise maximum of linear expressions (and zero); the smallest
    /// feasible value of a padding variable.
    MaxLinear {
        exprs: Vec<Vec<(usize, f64)>>,
    },
}

#[derive(Debug, Clone)]
pub struct AuxDef {
    pub var: usize,
    pub rule: AuxRule,
}

/// Exact second-order-cone form of a robust quality row,
/// `linear + constant + radius * ||weighted terms||_2 <= 0`. Not part of
/// the LP relaxation; used only to certify candidates exactly.
#[derive(Debug, Clone)]
pub struct SocRow {
    pub name: String,
    pub linear: Vec<(usize, f64)>,
    pub constant: f64,
    pub radius: f64,
    pub norm_terms: Vec<(usize, f64)>,
}

/// Variable ids of the decision variables, aligned with the instance arcs.
#[derive(Debug, Clone, Default)]
pub struct DecisionMap {
    pub q: Vec<usize>,
    pub y: Vec<usize>,
    pub z: Vec<usize>,
    /// Positions into `q` grouped by pool; each group shares a simplex row.
    pub q_groups: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct MasterProblem {
    vars: Vec<VarDef>,
    rows: Vec<Row>,
    nonlinear: Vec<NonlinearTerm>,
    objective: Vec<(usize, f64)>,
    aux: Vec<AuxDef>,
    soc_rows: Vec<SocRow>,
    decision: DecisionMap,
}

impl MasterProblem {
    pub fn new() -> Self {
        Self {
            vars: Vec::new(),
            rows: Vec::new(),
            nonlinear: Vec::new(),
            objective: Vec::new(),
            aux: Vec::new(),
            soc_rows: Vec::new(),
            decision: DecisionMap::default(),
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lo: f64, hi: f64) -> usize {
        self.vars.push(VarDef {
            name: name.into(),
            lo,
            hi,
        });
        self.vars.len() - 1
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(usize, f64)>,
        lo: f64,
        hi: f64,
    ) {
        self.rows.push(Row {
            name: name.into(),
            coeffs,
            lo,
            hi,
            scale: 1.0,
        });
    }

    pub fn add_scaled_row(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(usize, f64)>,
        lo: f64,
        hi: f64,
        scale: f64,
    ) {
        self.rows.push(Row {
            name: name.into(),
            coeffs,
            lo,
            hi,
            scale: scale.max(1.0),
        });
    }

    /// Registers `product = a * b` for relaxation, branching, and exact
    /// evaluation.
    pub fn add_product(&mut self, product: usize, a: usize, b: usize) {
        self.nonlinear.push(NonlinearTerm { product, a, b });
        self.aux.push(AuxDef {
            var: product,
            rule: if a == b {
                AuxRule::Square { of: a }
            } else {
                AuxRule::Product { a, b }
            },
        });
    }

    /// Registers an auxiliary defined by a linear identity; also adds the
    /// matching equality row so the LP enforces it.
    pub fn add_linear_aux(
        &mut self,
        name: impl Into<String>,
        var: usize,
        terms: Vec<(usize, f64)>,
        constant: f64,
    ) {
        let name = name.into();
        let mut coeffs = vec![(var, 1.0)];
        for &(v, c) in &terms {
            coeffs.push((v, -c));
        }
        self.add_row(name, coeffs, constant, constant);
        self.aux.push(AuxDef {
            var,
            rule: AuxRule::Linear { terms, constant },
        });
    }

    /// Registers a padding variable with rows `var >= expr` for every
    /// expression; evaluation pins it to the pointwise maximum.
    pub fn add_max_aux(
        &mut self,
        name: impl Into<String>,
        var: usize,
        exprs: Vec<Vec<(usize, f64)>>,
    ) {
        let name = name.into();
        for (idx, expr) in exprs.iter().enumerate() {
            let mut coeffs = vec![(var, 1.0)];
            for &(v, c) in expr {
                coeffs.push((v, -c));
            }
            self.add_row(format!("{name}[{idx}]"), coeffs, 0.0, f64::INFINITY);
        }
        self.aux.push(AuxDef {
            var,
            rule: AuxRule::MaxLinear { exprs },
        });
    }

    pub fn add_soc_row(&mut self, row: SocRow) {
        self.soc_rows.push(row);
    }

    pub fn set_objective(&mut self, objective: Vec<(usize, f64)>) {
        self.objective = objective;
    }

    pub fn set_decision_map(&mut self, decision: DecisionMap) {
        self.decision = decision;
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn vars(&self) -> &[VarDef] {
        &self.vars
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn nonlinear_terms(&self) -> &[NonlinearTerm] {
        &self.nonlinear
    }

    pub fn soc_rows(&self) -> &[SocRow] {
        &self.soc_rows
    }

    pub fn objective(&self) -> &[(usize, f64)] {
        &self.objective
    }

    pub fn decision(&self) -> &DecisionMap {
        &self.decision
    }

    /// Every variable needs finite bounds before the solver can run.
    pub fn validate(&self) -> Result<(), SolveError> {
        for (idx, v) in self.vars.iter().enumerate() {
            if !v.lo.is_finite() || !v.hi.is_finite() {
                return Err(SolveError::Master(format!(
                    "variable {} ({}) has non-finite bounds [{}, {}]",
                    idx, v.name, v.lo, v.hi
                )));
            }
            if v.lo > v.hi {
                return Err(SolveError::Master(format!(
                    "variable {} ({}) has crossed bounds [{}, {}]",
                    idx, v.name, v.lo, v.hi
                )));
            }
        }
        for term in &self.nonlinear {
            if term.product >= self.vars.len()
                || term.a >= self.vars.len()
                || term.b >= self.vars.len()
            {
                return Err(SolveError::Master(
                    "nonlinear term references a missing variable".to_string(),
                ));
            }
        }
        Ok(())
    }

    pub fn root_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.vars.iter().map(|v| v.lo).collect(),
            self.vars.iter().map(|v| v.hi).collect(),
        )
    }

    /// LP outer approximation at the given node bounds: all linear rows
    /// plus envelope rows for every registered nonlinear term.
    pub fn relax(&self, lower: &[f64], upper: &[f64]) -> LinearProgram {
        let objective: Vec<f64> = {
            let mut c = vec![0.0; self.vars.len()];
            for &(v, coef) in &self.objective {
                c[v] += coef;
            }
            c
        };
        let mut lp = LinearProgram::new(lower.to_vec(), upper.to_vec(), objective);
        for row in &self.rows {
            lp.add_row(row.coeffs.clone(), row.lo, row.hi);
        }
        for term in &self.nonlinear {
            if term.is_square() {
                square_envelope(&mut lp, term.product, term.a, lower[term.a], upper[term.a]);
            } else {
                mccormick_envelope(
                    &mut lp,
                    term.product,
                    term.a,
                    term.b,
                    (lower[term.a], upper[term.a]),
                    (lower[term.b], upper[term.b]),
                );
            }
        }
        lp
    }

    /// Computes all variable values implied by a decision vector: decision
    /// variables are copied, auxiliaries evaluated in registration order.
    pub fn candidate_values(&self, q: &[f64], y: &[f64], z: &[f64]) -> Vec<f64> {
        let mut values = vec![0.0; self.vars.len()];
        for (i, &var) in self.decision.q.iter().enumerate() {
            values[var] = q[i];
        }
        for (i, &var) in self.decision.y.iter().enumerate() {
            values[var] = y[i];
        }
        for (i, &var) in self.decision.z.iter().enumerate() {
            values[var] = z[i];
        }
        for def in &self.aux {
            values[def.var] = match &def.rule {
                AuxRule::Linear { terms, constant } => {
                    constant + terms.iter().map(|&(v, c)| c * values[v]).sum::<f64>()
                }
                AuxRule::Product { a, b } => values[*a] * values[*b],
                AuxRule::Square { of } => values[*of] * values[*of],
                AuxRule::MaxLinear { exprs } => exprs
                    .iter()
                    .map(|expr| expr.iter().map(|&(v, c)| c * values[v]).sum::<f64>())
                    .fold(0.0, f64::max),
            };
        }
        values
    }

    /// Worst violation of rows, decision/semantic variable bounds, and the
    /// exact second-order-cone rows at a fully evaluated point.
    pub fn max_violation(&self, values: &[f64]) -> (f64, String) {
        let mut worst = f64::NEG_INFINITY;
        let mut where_ = String::new();
        let mut track = |violation: f64, name: &str| {
            if violation > worst {
                worst = violation;
                where_ = name.to_string();
            }
        };
        for (idx, v) in self.vars.iter().enumerate() {
            let value = values[idx];
            track((v.lo - value).max(value - v.hi), &v.name);
        }
        for row in &self.rows {
            let activity: f64 = row.coeffs.iter().map(|&(v, c)| c * values[v]).sum();
            track(
                (row.lo - activity).max(activity - row.hi) / row.scale,
                &row.name,
            );
        }
        for soc in &self.soc_rows {
            let linear: f64 =
                soc.constant + soc.linear.iter().map(|&(v, c)| c * values[v]).sum::<f64>();
            let norm: f64 = soc
                .norm_terms
                .iter()
                .map(|&(v, c)| (c * values[v]).powi(2))
                .sum::<f64>()
                .sqrt();
            track(linear + soc.radius * norm, &soc.name);
        }
        (worst, where_)
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * values[v]).sum()
    }

    /// Extracts the decision variables of a value vector as a [`Solution`].
    pub fn decode(&self, values: &[f64]) -> Solution {
        Solution {
            q: self.decision.q.iter().map(|&v| values[v]).collect(),
            y: self.decision.y.iter().map(|&v| values[v]).collect(),
            z: self.decision.z.iter().map(|&v| values[v]).collect(),
        }
    }

    /// One pass of row-wise interval propagation plus product/square bound
    /// intersection. Returns false when some domain becomes empty.
    pub fn tighten_bounds_once(&self, lower: &mut [f64], upper: &mut [f64]) -> bool {
        for row in &self.rows {
            // Interval of the whole row.
            let mut act_lo = 0.0;
            let mut act_hi = 0.0;
            for &(v, c) in &row.coeffs {
                let (a, b) = (c * lower[v], c * upper[v]);
                act_lo += a.min(b);
                act_hi += a.max(b);
            }
            if act_lo > row.hi + 1e-9 || act_hi < row.lo - 1e-9 {
                return false;
            }
            for &(v, c) in &row.coeffs {
                if c == 0.0 {
                    continue;
                }
                let (term_lo, term_hi) = {
                    let (a, b) = (c * lower[v], c * upper[v]);
                    (a.min(b), a.max(b))
                };
                let rest_lo = act_lo - term_lo;
                let rest_hi = act_hi - term_hi;
                // row.lo <= term + rest <= row.hi
                let t_lo = if row.lo.is_finite() {
                    row.lo - rest_hi
                } else {
                    f64::NEG_INFINITY
                };
                let t_hi = if row.hi.is_finite() {
                    row.hi - rest_lo
                } else {
                    f64::INFINITY
                };
                let (mut v_lo, mut v_hi) = if c > 0.0 {
                    (t_lo / c, t_hi / c)
                } else {
                    (t_hi / c, t_lo / c)
                };
                v_lo = v_lo.max(lower[v]);
                v_hi = v_hi.min(upper[v]);
                if v_lo > v_hi + 1e-9 {
                    return false;
                }
                lower[v] = v_lo;
                upper[v] = v_hi.max(v_lo);
            }
        }
        for term in &self.nonlinear {
            let (plo, phi) = if term.is_square() {
                let (a, b) = (lower[term.a], upper[term.a]);
                let hi = (a * a).max(b * b);
                let lo = if a <= 0.0 && b >= 0.0 { 0.0 } else { (a * a).min(b * b) };
                (lo, hi)
            } else {
                let products = [
                    lower[term.a] * lower[term.b],
                    lower[term.a] * upper[term.b],
                    upper[term.a] * lower[term.b],
                    upper[term.a] * upper[term.b],
                ];
                (
                    products.iter().cloned().fold(f64::INFINITY, f64::min),
                    products.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                )
            };
            let w = term.product;
            lower[w] = lower[w].max(plo);
            upper[w] = upper[w].min(phi);
            if lower[w] > upper[w] + 1e-9 {
                return false;
            }
            upper[w] = upper[w].max(lower[w]);
        }
        true
    }
}

impl Default for MasterProblem {
    fn default() -> Self {
        Self::new()
    }
}

/// Four McCormick inequalities for `w = a * b` over a box; collapses to an
/// exact linear identity when either factor interval is a point.
fn mccormick_envelope(
    lp: &mut LinearProgram,
    w: usize,
    a: usize,
    b: usize,
    (a_lo, a_hi): (f64, f64),
    (b_lo, b_hi): (f64, f64),
) {
    if a_lo == a_hi && b_lo == b_hi {
        lp.add_row(vec![(w, 1.0)], a_lo * b_lo, a_lo * b_lo);
        return;
    }
    if a_lo == a_hi {
        lp.add_row(vec![(w, 1.0), (b, -a_lo)], 0.0, 0.0);
        return;
    }
    if b_lo == b_hi {
        lp.add_row(vec![(w, 1.0), (a, -b_lo)], 0.0, 0.0);
        return;
    }
    // w >= aL*b + bL*a - aL*bL ; w >= aU*b + bU*a - aU*bU
    lp.add_row(
        vec![(w, 1.0), (b, -a_lo), (a, -b_lo)],
        -a_lo * b_lo,
        f64::INFINITY,
    );
    lp.add_row(
        vec![(w, 1.0), (b, -a_hi), (a, -b_hi)],
        -a_hi * b_hi,
        f64::INFINITY,
    );
    // w <= aU*b + bL*a - aU*bL ; w <= aL*b + bU*a - aL*bU
    lp.add_row(
        vec![(w, 1.0), (b, -a_hi), (a, -b_lo)],
        f64::NEG_INFINITY,
        -a_hi * b_lo,
    );
    lp.add_row(
        vec![(w, 1.0), (b, -a_lo), (a, -b_hi)],
        f64::NEG_INFINITY,
        -a_lo * b_hi,
    );
}

/// Secant overestimator plus tangent underestimators (at the endpoints and
/// midpoint) for `t = u^2` over an interval.
fn square_envelope(lp: &mut LinearProgram, t: usize, u: usize, u_lo: f64, u_hi: f64) {
    if u_lo == u_hi {
        lp.add_row(vec![(t, 1.0)], u_lo * u_lo, u_lo * u_lo);
        return;
    }
    // t <= (lo + hi) u - lo*hi
    lp.add_row(
        vec![(t, 1.0), (u, -(u_lo + u_hi))],
        f64::NEG_INFINITY,
        -u_lo * u_hi,
    );
    for point in [u_lo, 0.5 * (u_lo + u_hi), u_hi] {
        // t >= 2 p u - p^2
        lp.add_row(
            vec![(t, 1.0), (u, -2.0 * point)],
            -point * point,
            f64::INFINITY,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{self, LpStatus};
    use approx::assert_abs_diff_eq;

    /// Helper: min/max of one variable over the root-box relaxation, with
    /// other variables pinned by equality rows (so the envelope itself is
    /// still built on the root box).
    fn extremize(problem: &MasterProblem, pins: &[(usize, f64)], var: usize, sign: f64) -> f64 {
        let (lo, hi) = problem.root_bounds();
        let mut lp = problem.relax(&lo, &hi);
        for &(v, value) in pins {
            lp.add_row(vec![(v, 1.0)], value, value);
        }
        for c in lp.objective.iter_mut() {
            *c = 0.0;
        }
        lp.objective[var] = sign;
        let r = lp::solve(&lp).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        sign * r.value
    }

    #[test]
    fn mccormick_range_on_unit_box() {
        let mut mp = MasterProblem::new();
        let q = mp.add_var("q", 0.0, 1.0);
        let y = mp.add_var("y", 0.0, 1.0);
        let w = mp.add_var("w", 0.0, 1.0);
        mp.add_product(w, q, y);
        // At q = y = 0.5 the envelope allows w in [0, 0.5].
        let min_w = extremize(&mp, &[(q, 0.5), (y, 0.5)], w, 1.0);
        let max_w = extremize(&mp, &[(q, 0.5), (y, 0.5)], w, -1.0);
        assert_abs_diff_eq!(min_w, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(max_w, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn square_envelope_bounds() {
        let mut mp = MasterProblem::new();
        let u = mp.add_var("u", 0.0, 2.0);
        let t = mp.add_var("t", 0.0, 4.0);
        mp.add_product(t, u, u);
        // Secant gives t <= 2u; the tangent at the midpoint 1 gives
        // t >= 2u - 1.
        let max_t = extremize(&mp, &[(u, 1.0)], t, -1.0);
        assert_abs_diff_eq!(max_t, 2.0, epsilon = 1e-9);
        let min_t = extremize(&mp, &[(u, 1.0)], t, 1.0);
        assert_abs_diff_eq!(min_t, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn fixed_factor_collapses_to_identity() {
        let mut mp = MasterProblem::new();
        let q = mp.add_var("q", 0.3, 0.3);
        let y = mp.add_var("y", 0.0, 10.0);
        let w = mp.add_var("w", 0.0, 10.0);
        mp.add_product(w, q, y);
        let max_w = extremize(&mp, &[(y, 4.0)], w, -1.0);
        let min_w = extremize(&mp, &[(y, 4.0)], w, 1.0);
        assert_abs_diff_eq!(max_w, 1.2, epsilon = 1e-9);
        assert_abs_diff_eq!(min_w, 1.2, epsilon = 1e-9);
    }

    #[test]
    fn relaxation_contains_true_points() {
        // Random feasible points of the true nonlinear system satisfy every
        // relaxation row: the envelopes are outer approximations.
        let mut mp = MasterProblem::new();
        let q = mp.add_var("q", 0.0, 1.0);
        let y = mp.add_var("y", 0.0, 5.0);
        let w = mp.add_var("w", 0.0, 5.0);
        let t = mp.add_var("t", 0.0, 25.0);
        mp.add_product(w, q, y);
        mp.add_product(t, y, y);
        mp.add_row("cap", vec![(w, 1.0), (t, 0.2)], f64::NEG_INFINITY, 20.0);

        let (lo, hi) = mp.root_bounds();
        let lp = mp.relax(&lo, &hi);
        let mut rng = crate::test_fixtures::TestRng::new(42);
        for _ in 0..500 {
            let qv = rng.next_f64();
            let yv = rng.uniform(0.0, 5.0);
            let point = [qv, yv, qv * yv, yv * yv];
            if point[2] + 0.2 * point[3] > 20.0 {
                continue;
            }
            for row in &lp.rows {
                let activity: f64 = row.coeffs.iter().map(|&(v, c)| c * point[v]).sum();
                assert!(
                    activity >= row.lo - 1e-9 && activity <= row.hi + 1e-9,
                    "violated relaxation row at ({qv}, {yv})"
                );
            }
        }
    }

    #[test]
    fn tighten_propagates_rows_and_products() {
        let mut mp = MasterProblem::new();
        let a = mp.add_var("a", 0.0, 10.0);
        let b = mp.add_var("b", 0.0, 10.0);
        let w = mp.add_var("w", 0.0, 100.0);
        mp.add_product(w, a, b);
        mp.add_row("sum", vec![(a, 1.0), (b, 1.0)], f64::NEG_INFINITY, 4.0);
        let (mut lo, mut hi) = mp.root_bounds();
        assert!(mp.tighten_bounds_once(&mut lo, &mut hi));
        assert!(hi[a] <= 4.0 + 1e-12);
        assert!(hi[b] <= 4.0 + 1e-12);
        assert!(hi[w] <= 16.0 + 1e-12);
    }

    #[test]
    fn candidate_evaluation_orders_auxiliaries() {
        let mut mp = MasterProblem::new();
        let y0 = mp.add_var("y0", 0.0, 10.0);
        let x = mp.add_var("x", 0.0, 20.0);
        let s = mp.add_var("s", 0.0, 400.0);
        let lambda = mp.add_var("lambda", 0.0, 40.0);
        mp.set_decision_map(DecisionMap {
            y: vec![y0],
            ..DecisionMap::default()
        });
        mp.add_linear_aux("x_def", x, vec![(y0, 2.0)], 0.0);
        mp.add_product(s, x, x);
        mp.add_max_aux("pad", lambda, vec![vec![(x, 2.0)], vec![(x, 0.5)]]);
        let values = mp.candidate_values(&[], &[3.0], &[]);
        assert_abs_diff_eq!(values[x], 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(values[s], 36.0, epsilon = 1e-12);
        assert_abs_diff_eq!(values[lambda], 12.0, epsilon = 1e-12);
    }
}
