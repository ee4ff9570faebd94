//! Dense bounded-variable simplex.
//!
//! Solves `min c'x  s.t.  lo <= Ax <= hi,  l <= x <= u` with finite
//! variable bounds. Rows are ranged; one-sided rows are clamped to the
//! interval reachable under the variable bounds, so every slack is finite.
//! Two phases: artificial variables absorb the initial row residuals, then
//! the true objective is optimized. Pivot selection is Dantzig with
//! index-ordered tie breaking and a Bland fallback after long degenerate
//! streaks, which keeps the solver deterministic.

use crate::error::SolveError;

/// Reduced-cost tolerance for optimality.
const TOL_RC: f64 = 1e-9;
/// Smallest pivot magnitude accepted in the ratio test.
const TOL_PIV: f64 = 1e-10;
/// Residual tolerance declaring phase 1 successful.
const TOL_FEAS: f64 = 1e-7;
/// Degenerate-step threshold.
const TOL_STEP: f64 = 1e-12;

const REFACTOR_EVERY: usize = 64;
const MAX_ITERS: usize = 200_000;
const BLAND_AFTER: usize = 1_000;

/// A ranged linear row `lo <= sum coeffs <= hi`; either side may be infinite.
#[derive(Debug, Clone)]
pub struct LpRow {
    pub coeffs: Vec<(usize, f64)>,
    pub lo: f64,
    pub hi: f64,
}

/// Minimization problem over box-bounded variables.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub objective: Vec<f64>,
    pub rows: Vec<LpRow>,
}

impl LinearProgram {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, objective: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        assert_eq!(lower.len(), objective.len());
        Self {
            lower,
            upper,
            objective,
            rows: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.lower.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, lo: f64, hi: f64) {
        self.rows.push(LpRow { coeffs, lo, hi });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct LpResult {
    pub status: LpStatus,
    /// Values for the structural variables; empty when infeasible.
    pub point: Vec<f64>,
    pub value: f64,
}

/// Solves the program exactly; deterministic for identical input.
///
/// The matrix is equilibrated with power-of-two row/column factors first,
/// so columns of very different magnitude (unit fractions next to squared
/// flows) do not degrade the basis conditioning; powers of two make the
/// descaling bit-exact.
pub fn solve(lp: &LinearProgram) -> Result<LpResult, SolveError> {
    let n = lp.n_vars();
    for j in 0..n {
        if !lp.lower[j].is_finite() || !lp.upper[j].is_finite() {
            return Err(SolveError::Lp(format!(
                "variable {j} has non-finite bounds [{}, {}]",
                lp.lower[j], lp.upper[j]
            )));
        }
        if lp.lower[j] > lp.upper[j] {
            return Ok(LpResult {
                status: LpStatus::Infeasible,
                point: Vec::new(),
                value: f64::INFINITY,
            });
        }
    }

    let (scaled, col_scale) = equilibrate(lp);
    let mut result = solve_scaled(&scaled)?;
    for (j, value) in result.point.iter_mut().enumerate() {
        *value *= col_scale[j];
    }
    if result.status == LpStatus::Optimal {
        result.value = result
            .point
            .iter()
            .zip(&lp.objective)
            .map(|(x, c)| x * c)
            .sum();
    }
    Ok(result)
}

/// Nearest power of two to 1/sqrt(min*max) of the absolute entries.
fn pow2_scale(min_abs: f64, max_abs: f64) -> f64 {
    if !(min_abs > 0.0) || !max_abs.is_finite() {
        return 1.0;
    }
    let target = 1.0 / (min_abs * max_abs).sqrt();
    let exp = target.log2().round().clamp(-40.0, 40.0);
    (exp as i32).pow2()
}

trait Pow2 {
    fn pow2(self) -> f64;
}
impl Pow2 for i32 {
    fn pow2(self) -> f64 {
        f64::from_bits(((1023 + self) as u64) << 52)
    }
}

/// Geometric-mean equilibration with power-of-two factors: two passes over
/// rows and columns, returning the scaled program and the column factors
/// needed to descale the solution.
fn equilibrate(lp: &LinearProgram) -> (LinearProgram, Vec<f64>) {
    let n = lp.n_vars();
    let m = lp.rows.len();
    let mut row_scale = vec![1.0; m];
    let mut col_scale = vec![1.0; n];

    for _ in 0..2 {
        for (i, row) in lp.rows.iter().enumerate() {
            let mut min_abs = f64::INFINITY;
            let mut max_abs = 0.0f64;
            for &(j, c) in &row.coeffs {
                let a = (c * row_scale[i] * col_scale[j]).abs();
                if a > 0.0 {
                    min_abs = min_abs.min(a);
                    max_abs = max_abs.max(a);
                }
            }
            row_scale[i] *= pow2_scale(min_abs, max_abs);
        }
        let mut col_min = vec![f64::INFINITY; n];
        let mut col_max = vec![0.0f64; n];
        for (i, row) in lp.rows.iter().enumerate() {
            for &(j, c) in &row.coeffs {
                let a = (c * row_scale[i] * col_scale[j]).abs();
                if a > 0.0 {
                    col_min[j] = col_min[j].min(a);
                    col_max[j] = col_max[j].max(a);
                }
            }
        }
        for j in 0..n {
            col_scale[j] *= pow2_scale(col_min[j], col_max[j]);
        }
    }

    let mut scaled = LinearProgram::new(
        (0..n).map(|j| lp.lower[j] / col_scale[j]).collect(),
        (0..n).map(|j| lp.upper[j] / col_scale[j]).collect(),
        (0..n).map(|j| lp.objective[j] * col_scale[j]).collect(),
    );
    for (i, row) in lp.rows.iter().enumerate() {
        let coeffs = row
            .coeffs
            .iter()
            .map(|&(j, c)| (j, c * row_scale[i] * col_scale[j]))
            .collect();
        scaled.add_row(coeffs, row.lo * row_scale[i], row.hi * row_scale[i]);
    }
    (scaled, col_scale)
}

fn solve_scaled(lp: &LinearProgram) -> Result<LpResult, SolveError> {
    let n = lp.n_vars();

    let m = lp.rows.len();
    // Layout: structural | slacks | artificials.
    let n_total = n + 2 * m;
    let mut lower = Vec::with_capacity(n_total);
    let mut upper = Vec::with_capacity(n_total);
    lower.extend_from_slice(&lp.lower);
    upper.extend_from_slice(&lp.upper);

    // Slack bounds: requested row range intersected with what the variable
    // box can reach, so they are always finite.
    for row in &lp.rows {
        let (mut reach_lo, mut reach_hi) = (0.0, 0.0);
        for &(j, c) in &row.coeffs {
            let (a, b) = (c * lp.lower[j], c * lp.upper[j]);
            reach_lo += a.min(b);
            reach_hi += a.max(b);
        }
        let lo = row.lo.max(reach_lo);
        let hi = row.hi.min(reach_hi);
        if lo > hi + 1e-12 {
            return Ok(LpResult {
                status: LpStatus::Infeasible,
                point: Vec::new(),
                value: f64::INFINITY,
            });
        }
        lower.push(lo);
        upper.push(hi.max(lo));
    }

    // Columns as sparse (row, coef) lists.
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_total];
    for (i, row) in lp.rows.iter().enumerate() {
        for &(j, c) in &row.coeffs {
            if c != 0.0 {
                cols[j].push((i, c));
            }
        }
        cols[n + i].push((i, -1.0));
    }

    // Initial nonbasic point: structural at lower, slacks clamped to the row
    // activity; artificials absorb what remains.
    let mut values = vec![0.0; n_total];
    values[..n].copy_from_slice(&lp.lower);
    let mut activity = vec![0.0; m];
    for j in 0..n {
        for &(i, c) in &cols[j] {
            activity[i] += c * values[j];
        }
    }
    let mut at_upper = vec![false; n_total];
    let mut artificial_sign = vec![1.0; m];
    for i in 0..m {
        // Nonbasic variables must sit exactly on a bound; pick the one
        // nearest to the initial row activity.
        let (lo, hi) = (lower[n + i], upper[n + i]);
        let s = if (activity[i] - lo).abs() <= (activity[i] - hi).abs() {
            lo
        } else {
            hi
        };
        values[n + i] = s;
        at_upper[n + i] = s == hi && hi > lo;
        let residual = activity[i] - s;
        let a = n + m + i;
        artificial_sign[i] = if residual >= 0.0 { -1.0 } else { 1.0 };
        cols[a].push((i, artificial_sign[i]));
        lower.push(0.0);
        upper.push(residual.abs());
        values[a] = residual.abs();
    }

    // The starting basis is the artificial columns, diag(sign); its inverse
    // is itself.
    let mut binv = identity(m);
    for i in 0..m {
        binv[i * m + i] = artificial_sign[i];
    }

    let mut tb = Tableau {
        n_total,
        m,
        cols,
        lower,
        upper,
        cost: vec![0.0; n_total],
        basis: (n + m..n + 2 * m).collect(),
        basis_pos: vec![None; n_total],
        at_upper,
        binv,
        values,
    };
    for (p, &j) in tb.basis.clone().iter().enumerate() {
        tb.basis_pos[j] = Some(p);
    }

    // Phase 1: drive the artificials to zero.
    for a in n + m..n_total {
        tb.cost[a] = 1.0;
    }
    tb.run()?;
    let infeasibility: f64 = (n + m..n_total).map(|a| tb.values[a]).sum();
    if infeasibility > TOL_FEAS {
        return Ok(LpResult {
            status: LpStatus::Infeasible,
            point: Vec::new(),
            value: f64::INFINITY,
        });
    }
    // Artificials are pinned at zero for phase 2.
    for a in n + m..n_total {
        tb.lower[a] = 0.0;
        tb.upper[a] = 0.0;
        tb.cost[a] = 0.0;
        if tb.basis_pos[a].is_none() {
            tb.values[a] = 0.0;
            tb.at_upper[a] = false;
        }
    }

    // Phase 2.
    tb.cost[..n].copy_from_slice(&lp.objective);
    for s in n..n + m {
        tb.cost[s] = 0.0;
    }
    tb.run()?;

    let point: Vec<f64> = tb.values[..n].to_vec();
    let value = point
        .iter()
        .zip(&lp.objective)
        .map(|(x, c)| x * c)
        .sum::<f64>();
    Ok(LpResult {
        status: LpStatus::Optimal,
        point,
        value,
    })
}

fn identity(m: usize) -> Vec<f64> {
    let mut b = vec![0.0; m * m];
    for i in 0..m {
        b[i * m + i] = 1.0;
    }
    b
}

struct Tableau {
    n_total: usize,
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    basis: Vec<usize>,
    basis_pos: Vec<Option<usize>>,
    at_upper: Vec<bool>,
    /// Dense basis inverse, row-major m x m.
    binv: Vec<f64>,
    values: Vec<f64>,
}

impl Tableau {
    fn run(&mut self) -> Result<(), SolveError> {
        let mut degenerate_streak = 0usize;
        let mut bland = false;
        let mut since_refactor = 0usize;

        for _ in 0..MAX_ITERS {
            let duals = self.duals();
            let Some(entering) = self.choose_entering(&duals, bland) else {
                return Ok(());
            };
            // Direction +1 when entering rises off its lower bound.
            let dir = if self.at_upper[entering] { -1.0 } else { 1.0 };
            let alpha = self.ftran(entering);

            let step = self.ratio_test(entering, dir, &alpha, bland);
            let Some((t, leaving)) = step else {
                return Err(SolveError::Lp(
                    "unbounded direction despite finite bounds".to_string(),
                ));
            };

            if t < TOL_STEP {
                degenerate_streak += 1;
                if degenerate_streak > BLAND_AFTER {
                    bland = true;
                }
            } else {
                degenerate_streak = 0;
            }

            // Apply the step.
            for (p, &b) in self.basis.iter().enumerate() {
                self.values[b] -= dir * t * alpha[p];
            }
            self.values[entering] += dir * t;

            match leaving {
                Leaving::BoundFlip => {
                    self.at_upper[entering] = !self.at_upper[entering];
                    self.values[entering] = if self.at_upper[entering] {
                        self.upper[entering]
                    } else {
                        self.lower[entering]
                    };
                }
                Leaving::Basic { position, to_upper } => {
                    let out = self.basis[position];
                    self.values[out] = if to_upper {
                        self.upper[out]
                    } else {
                        self.lower[out]
                    };
                    self.at_upper[out] = to_upper;
                    self.basis_pos[out] = None;
                    self.basis[position] = entering;
                    self.basis_pos[entering] = Some(position);
                    self.pivot_binv(position, &alpha);

                    since_refactor += 1;
                    if since_refactor >= REFACTOR_EVERY {
                        self.refactor()?;
                        since_refactor = 0;
                    }
                }
            }
        }
        Err(SolveError::Lp("simplex iteration limit exceeded".to_string()))
    }

    /// y = c_B' B^-1.
    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (p, &b) in self.basis.iter().enumerate() {
            let cb = self.cost[b];
            if cb != 0.0 {
                for i in 0..m {
                    y[i] += cb * self.binv[p * m + i];
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, duals: &[f64]) -> f64 {
        let mut d = self.cost[j];
        for &(i, c) in &self.cols[j] {
            d -= duals[i] * c;
        }
        d
    }

    fn choose_entering(&self, duals: &[f64], bland: bool) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for j in 0..self.n_total {
            if self.basis_pos[j].is_some() {
                continue;
            }
            // Fixed variables never move.
            if self.upper[j] - self.lower[j] < TOL_STEP && self.upper[j] == self.lower[j] {
                continue;
            }
            let d = self.reduced_cost(j, duals);
            let violation = if self.at_upper[j] { d } else { -d };
            if violation > TOL_RC {
                if bland {
                    return Some(j);
                }
                match best {
                    Some((v, _)) if v >= violation => {}
                    _ => best = Some((violation, j)),
                }
            }
        }
        best.map(|(_, j)| j)
    }

    /// alpha = B^-1 A_j.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for &(i, c) in &self.cols[j] {
            for p in 0..m {
                alpha[p] += self.binv[p * m + i] * c;
            }
        }
        alpha
    }

    /// Two-pass ratio test. The first pass finds the step allowed when
    /// basic bounds may flex by a small slack; the second picks, among the
    /// blocking candidates within that step, the one with the largest pivot
    /// (smallest variable index in Bland mode). Avoiding tiny pivots keeps
    /// the maintained basis inverse well conditioned.
    fn ratio_test(
        &self,
        entering: usize,
        dir: f64,
        alpha: &[f64],
        bland: bool,
    ) -> Option<(f64, Leaving)> {
        const BOUND_SLACK: f64 = 1e-9;
        let flip = self.upper[entering] - self.lower[entering];

        struct Candidate {
            position: usize,
            variable: usize,
            limit: f64,
            to_upper: bool,
            pivot: f64,
        }
        let mut candidates: Vec<Candidate> = Vec::new();
        let mut t_relaxed = flip;
        for (p, &b) in self.basis.iter().enumerate() {
            // Rate of change of the basic value as the entering rises by t.
            let rate = -dir * alpha[p];
            if rate.abs() <= TOL_PIV {
                continue;
            }
            let (room, to_upper) = if rate > 0.0 {
                (self.upper[b] - self.values[b], true)
            } else {
                (self.lower[b] - self.values[b], false)
            };
            let limit = (room / rate).max(0.0);
            let relaxed = ((room.abs() + BOUND_SLACK) / rate.abs()).max(0.0);
            t_relaxed = t_relaxed.min(relaxed);
            candidates.push(Candidate {
                position: p,
                variable: b,
                limit,
                to_upper,
                pivot: alpha[p].abs(),
            });
        }

        let mut chosen: Option<&Candidate> = None;
        for cand in &candidates {
            if cand.limit > t_relaxed {
                continue;
            }
            chosen = Some(match chosen {
                None => cand,
                Some(cur) => {
                    let better = if bland {
                        cand.variable < cur.variable
                    } else {
                        cand.pivot > cur.pivot
                            || (cand.pivot == cur.pivot && cand.variable < cur.variable)
                    };
                    if better {
                        cand
                    } else {
                        cur
                    }
                }
            });
        }

        let (t, leaving) = match chosen {
            Some(cand) if cand.limit <= flip => (
                cand.limit,
                Leaving::Basic {
                    position: cand.position,
                    to_upper: cand.to_upper,
                },
            ),
            _ => (flip, Leaving::BoundFlip),
        };
        if t.is_finite() {
            Some((t, leaving))
        } else {
            None
        }
    }

    /// Elementary row update of B^-1 after `entering`'s column (with ftran
    /// image `alpha`) replaces basis position `p`.
    fn pivot_binv(&mut self, p: usize, alpha: &[f64]) {
        let m = self.m;
        let pivot = alpha[p];
        for i in 0..m {
            self.binv[p * m + i] /= pivot;
        }
        for q in 0..m {
            if q != p && alpha[q].abs() > 0.0 {
                let factor = alpha[q];
                for i in 0..m {
                    self.binv[q * m + i] -= factor * self.binv[p * m + i];
                }
            }
        }
    }

    /// Rebuilds B^-1 by Gauss-Jordan with partial pivoting and recomputes
    /// the basic values from the nonbasic point.
    fn refactor(&mut self) -> Result<(), SolveError> {
        let m = self.m;
        let mut aug = vec![0.0; m * 2 * m];
        for (p, &b) in self.basis.iter().enumerate() {
            for &(i, c) in &self.cols[b] {
                aug[i * 2 * m + p] = c;
            }
        }
        for i in 0..m {
            aug[i * 2 * m + m + i] = 1.0;
        }
        for col in 0..m {
            let mut piv_row = col;
            let mut piv_val = aug[col * 2 * m + col].abs();
            for r in col + 1..m {
                let v = aug[r * 2 * m + col].abs();
                if v > piv_val {
                    piv_val = v;
                    piv_row = r;
                }
            }
            if piv_val < 1e-12 {
                return Err(SolveError::Lp("singular basis during refactor".to_string()));
            }
            if piv_row != col {
                for k in 0..2 * m {
                    aug.swap(col * 2 * m + k, piv_row * 2 * m + k);
                }
            }
            let inv = 1.0 / aug[col * 2 * m + col];
            for k in 0..2 * m {
                aug[col * 2 * m + k] *= inv;
            }
            for r in 0..m {
                if r != col {
                    let f = aug[r * 2 * m + col];
                    if f != 0.0 {
                        for k in 0..2 * m {
                            aug[r * 2 * m + k] -= f * aug[col * 2 * m + k];
                        }
                    }
                }
            }
        }
        // B^-1 maps row space to basis positions: invert the permutation.
        for p in 0..m {
            for i in 0..m {
                self.binv[p * m + i] = aug[p * 2 * m + m + i];
            }
        }

        // Recompute basic values exactly.
        let mut rhs = vec![0.0; m];
        for j in 0..self.n_total {
            if self.basis_pos[j].is_none() && self.values[j] != 0.0 {
                for &(i, c) in &self.cols[j] {
                    rhs[i] -= c * self.values[j];
                }
            }
        }
        for p in 0..m {
            let mut v = 0.0;
            for i in 0..m {
                v += self.binv[p * m + i] * rhs[i];
            }
            self.values[self.basis[p]] = v;
        }
        Ok(())
    }
}

enum Leaving {
    BoundFlip,
    Basic { position: usize, to_upper: bool },
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_objective_over_box() {
        let lp = LinearProgram::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 0.0]);
        let r = solve(&lp).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn two_variable_lp() {
        // max x + y with x + y <= 1 on the unit box.
        let mut lp = LinearProgram::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![-1.0, -1.0]);
        lp.add_row(vec![(0, 1.0), (1, 1.0)], f64::NEG_INFINITY, 1.0);
        let r = solve(&lp).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert_abs_diff_eq!(r.value, -1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.point[0] + r.point[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn contradictory_constant_row_is_infeasible() {
        let mut lp = LinearProgram::new(vec![0.0], vec![1.0], vec![0.0]);
        lp.add_row(Vec::new(), 1.0, 1.0); // 0 = 1
        let r = solve(&lp).unwrap();
        assert_eq!(r.status, LpStatus::Infeasible);
    }

    #[test]
    fn crossed_rows_are_infeasible() {
        let mut lp = LinearProgram::new(vec![0.0], vec![1.0], vec![1.0]);
        lp.add_row(vec![(0, 1.0)], 0.8, f64::INFINITY);
        lp.add_row(vec![(0, 1.0)], f64::NEG_INFINITY, 0.2);
        let r = solve(&lp).unwrap();
        assert_eq!(r.status, LpStatus::Infeasible);
    }

    #[test]
    fn equality_rows_and_ranged_rows() {
        // min x - y  s.t.  x + y = 2, 0.5 <= x - y <= 1.5, 0 <= x,y <= 2.
        let mut lp = LinearProgram::new(vec![0.0, 0.0], vec![2.0, 2.0], vec![1.0, -1.0]);
        lp.add_row(vec![(0, 1.0), (1, 1.0)], 2.0, 2.0);
        lp.add_row(vec![(0, 1.0), (1, -1.0)], 0.5, 1.5);
        let r = solve(&lp).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert_abs_diff_eq!(r.value, 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(r.point[0], 1.25, epsilon = 1e-9);
        assert_abs_diff_eq!(r.point[1], 0.75, epsilon = 1e-9);
    }

    #[test]
    fn negative_lower_bounds() {
        // min x + 2y over [-5, 5]^2 with x + y >= -3.
        let mut lp = LinearProgram::new(vec![-5.0, -5.0], vec![5.0, 5.0], vec![1.0, 2.0]);
        lp.add_row(vec![(0, 1.0), (1, 1.0)], -3.0, f64::INFINITY);
        let r = solve(&lp).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        // Optimum at x = 2, y = -5: value 2 - 10 = -8.
        assert_abs_diff_eq!(r.value, -8.0, epsilon = 1e-9);
    }

    #[test]
    fn deterministic_repeat() {
        let mut lp = LinearProgram::new(
            vec![0.0, 0.0, 0.0],
            vec![4.0, 4.0, 4.0],
            vec![-5.0, -4.0, -3.0],
        );
        lp.add_row(vec![(0, 2.0), (1, 3.0), (2, 1.0)], f64::NEG_INFINITY, 5.0);
        lp.add_row(vec![(0, 4.0), (1, 1.0), (2, 2.0)], f64::NEG_INFINITY, 11.0);
        lp.add_row(vec![(0, 3.0), (1, 4.0), (2, 2.0)], f64::NEG_INFINITY, 8.0);
        let a = solve(&lp).unwrap();
        let b = solve(&lp).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.point, b.point);
        assert_abs_diff_eq!(a.value, -13.0, epsilon = 1e-9);
    }

    #[test]
    fn fixed_variables_are_respected() {
        let mut lp = LinearProgram::new(vec![0.5, 0.0], vec![0.5, 3.0], vec![0.0, -1.0]);
        lp.add_row(vec![(0, 2.0), (1, 1.0)], f64::NEG_INFINITY, 2.0);
        let r = solve(&lp).unwrap();
        assert_abs_diff_eq!(r.point[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.point[1], 1.0, epsilon = 1e-9);
    }
}
