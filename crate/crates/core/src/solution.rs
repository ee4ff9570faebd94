//! Flow solutions and constraint evaluation for the q-formulation.
//!
//! A [`Solution`] stores the pool inlet fractions `q`, pool outflows `y`,
//! and direct flows `z`, aligned with the arc lists of the instance it was
//! built for. The evaluation routines here are the single source of truth
//! for the objective and constraint residuals; the solver and the robust
//! drivers both certify candidates through them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::InstanceError;
use crate::instance::{Concentrations, PoolingInstance};

/// Default absolute tolerance on constraint residuals.
pub const FEAS_TOL: f64 = 1e-6;

/// Flow values aligned with the owning instance's arc lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Inlet fraction per `source_pool_arcs` entry, each in [0, 1].
    pub q: Vec<f64>,
    /// Flow per `pool_terminal_arcs` entry, nonnegative.
    pub y: Vec<f64>,
    /// Flow per `source_terminal_arcs` entry, nonnegative.
    pub z: Vec<f64>,
}

impl Solution {
    pub fn zeros(inst: &PoolingInstance) -> Self {
        Self {
            q: vec![0.0; inst.source_pool_arcs().len()],
            y: vec![0.0; inst.pool_terminal_arcs().len()],
            z: vec![0.0; inst.source_terminal_arcs().len()],
        }
    }

    /// Parses the `{"q": {"i|l": v}, "y": {"l|j": v}, "z": {"i|j": v}}`
    /// document, validating every key against the instance arcs.
    pub fn from_json(inst: &PoolingInstance, text: &str) -> Result<Self, InstanceError> {
        let raw: RawSolution = serde_json::from_str(text)?;
        let mut sol = Solution::zeros(inst);
        let split = |key: &str| -> Result<(String, String), InstanceError> {
            key.split_once('|')
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .ok_or_else(|| {
                    InstanceError::Validation(format!("solution key {key} is not '|'-joined"))
                })
        };
        for (key, value) in &raw.q {
            let (i, l) = split(key)?;
            let i = inst
                .source_index(&i)
                .ok_or_else(|| InstanceError::Validation(format!("unknown source {i}")))?;
            let l = inst
                .pool_index(&l)
                .ok_or_else(|| InstanceError::Validation(format!("unknown pool {l}")))?;
            let arc = inst.sp_arc_index(i, l).ok_or_else(|| {
                InstanceError::Validation(format!("q key {key} is not a source-pool arc"))
            })?;
            sol.q[arc] = *value;
        }
        for (key, value) in &raw.y {
            let (l, j) = split(key)?;
            let l = inst
                .pool_index(&l)
                .ok_or_else(|| InstanceError::Validation(format!("unknown pool {l}")))?;
            let j = inst
                .terminal_index(&j)
                .ok_or_else(|| InstanceError::Validation(format!("unknown terminal {j}")))?;
            let arc = inst
                .pool_terminal_arcs()
                .iter()
                .position(|&a| a == (l, j))
                .ok_or_else(|| {
                    InstanceError::Validation(format!("y key {key} is not a pool-terminal arc"))
                })?;
            sol.y[arc] = *value;
        }
        for (key, value) in &raw.z {
            let (i, j) = split(key)?;
            let i = inst
                .source_index(&i)
                .ok_or_else(|| InstanceError::Validation(format!("unknown source {i}")))?;
            let j = inst
                .terminal_index(&j)
                .ok_or_else(|| InstanceError::Validation(format!("unknown terminal {j}")))?;
            let arc = inst.st_arc_index(i, j).ok_or_else(|| {
                InstanceError::Validation(format!("z key {key} is not a source-terminal arc"))
            })?;
            sol.z[arc] = *value;
        }
        Ok(sol)
    }

    pub fn to_json(&self, inst: &PoolingInstance) -> String {
        let mut raw = RawSolution::default();
        for (a, &(i, l)) in inst.source_pool_arcs().iter().enumerate() {
            raw.q.insert(
                format!("{}|{}", inst.sources()[i].id, inst.pools()[l].id),
                self.q[a],
            );
        }
        for (a, &(l, j)) in inst.pool_terminal_arcs().iter().enumerate() {
            raw.y.insert(
                format!("{}|{}", inst.pools()[l].id, inst.terminals()[j].id),
                self.y[a],
            );
        }
        for (a, &(i, j)) in inst.source_terminal_arcs().iter().enumerate() {
            raw.z.insert(
                format!("{}|{}", inst.sources()[i].id, inst.terminals()[j].id),
                self.z[a],
            );
        }
        serde_json::to_string_pretty(&raw).expect("solution serialization")
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct RawSolution {
    #[serde(default)]
    q: BTreeMap<String, f64>,
    #[serde(default)]
    y: BTreeMap<String, f64>,
    #[serde(default)]
    z: BTreeMap<String, f64>,
}

/// Dense sources-by-terminals total flow matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalFlow {
    values: Vec<f64>,
    n_sources: usize,
    n_terminals: usize,
}

impl TotalFlow {
    pub fn zeros(n_sources: usize, n_terminals: usize) -> Self {
        Self {
            values: vec![0.0; n_sources * n_terminals],
            n_sources,
            n_terminals,
        }
    }

    pub fn get(&self, source: usize, terminal: usize) -> f64 {
        self.values[source * self.n_terminals + terminal]
    }

    pub fn get_mut(&mut self, source: usize, terminal: usize) -> &mut f64 {
        &mut self.values[source * self.n_terminals + terminal]
    }

    /// Column over sources feeding the given terminal.
    pub fn terminal_column(&self, terminal: usize) -> Vec<f64> {
        (0..self.n_sources).map(|i| self.get(i, terminal)).collect()
    }
}

/// Negative profit: material costs over pool routes minus revenues minus
/// direct-route margins. Profit is the negated value.
pub fn objective(inst: &PoolingInstance, sol: &Solution) -> f64 {
    let mut value = 0.0;
    for (a, &(l, j)) in inst.pool_terminal_arcs().iter().enumerate() {
        for &b in inst.pool_inlets(l) {
            let (i, _) = inst.source_pool_arcs()[b];
            value += inst.sources()[i].cost * sol.q[b] * sol.y[a];
        }
        value -= inst.terminals()[j].price * sol.y[a];
    }
    for (a, &(i, j)) in inst.source_terminal_arcs().iter().enumerate() {
        value -= (inst.terminals()[j].price - inst.sources()[i].cost) * sol.z[a];
    }
    value
}

/// Total flow x from each source to each terminal, combining pool routes
/// (fraction times pool outflow) and direct arcs.
pub fn total_flow_x(inst: &PoolingInstance, sol: &Solution) -> TotalFlow {
    let mut x = TotalFlow::zeros(inst.n_sources(), inst.n_terminals());
    for (a, &(l, j)) in inst.pool_terminal_arcs().iter().enumerate() {
        for &b in inst.pool_inlets(l) {
            let (i, _) = inst.source_pool_arcs()[b];
            *x.get_mut(i, j) += sol.y[a] * sol.q[b];
        }
    }
    for (a, &(i, j)) in inst.source_terminal_arcs().iter().enumerate() {
        *x.get_mut(i, j) += sol.z[a];
    }
    x
}

/// Total inflow v at each terminal.
pub fn terminal_flow_v(inst: &PoolingInstance, sol: &Solution) -> Vec<f64> {
    let mut v = vec![0.0; inst.n_terminals()];
    for (a, &(_, j)) in inst.pool_terminal_arcs().iter().enumerate() {
        v[j] += sol.y[a];
    }
    for (a, &(_, j)) in inst.source_terminal_arcs().iter().enumerate() {
        v[j] += sol.z[a];
    }
    v
}

/// Worst signed residual of one constraint family; positive means violated.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyViolation {
    /// Human-readable location, e.g. a source id or a terminal/component pair.
    pub location: String,
    pub violation: f64,
}

/// Per-family worst violations of the q-formulation constraints at a given
/// concentration realization. Violations are data, not errors.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    pub tol: f64,
    pub availability: Option<FamilyViolation>,
    pub capacity: Option<FamilyViolation>,
    pub demand: Option<FamilyViolation>,
    pub simplex: Option<FamilyViolation>,
    pub quality_upper: Option<FamilyViolation>,
    pub quality_lower: Option<FamilyViolation>,
}

impl FeasibilityReport {
    pub fn families(&self) -> [(&'static str, &Option<FamilyViolation>); 6] {
        [
            ("availability", &self.availability),
            ("capacity", &self.capacity),
            ("demand", &self.demand),
            ("simplex", &self.simplex),
            ("quality_upper", &self.quality_upper),
            ("quality_lower", &self.quality_lower),
        ]
    }

    /// Largest signed residual over all families; -inf when nothing applies.
    pub fn worst_violation(&self) -> f64 {
        self.families()
            .iter()
            .filter_map(|(_, f)| f.as_ref().map(|v| v.violation))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_feasible(&self) -> bool {
        self.worst_violation() <= self.tol
    }
}

fn track(slot: &mut Option<FamilyViolation>, location: String, violation: f64) {
    let better = match slot {
        None => true,
        Some(cur) => violation > cur.violation,
    };
    if better {
        *slot = Some(FamilyViolation {
            location,
            violation,
        });
    }
}

/// Evaluates every constraint family at the given concentration realization.
/// Quality rows are checked in their linear total-flow form. The simplex row
/// of a pool with no outflow is skipped: the inlet fractions of an idle pool
/// carry no flow.
pub fn check_feasibility(
    inst: &PoolingInstance,
    sol: &Solution,
    concentrations: &Concentrations,
    tol: f64,
) -> FeasibilityReport {
    let mut report = FeasibilityReport {
        tol,
        availability: None,
        capacity: None,
        demand: None,
        simplex: None,
        quality_upper: None,
        quality_lower: None,
    };

    let x = total_flow_x(inst, sol);
    let v = terminal_flow_v(inst, sol);

    for (i, s) in inst.sources().iter().enumerate() {
        let mut used = 0.0;
        for (b, &(si, l)) in inst.source_pool_arcs().iter().enumerate() {
            if si == i {
                for &a in inst.pool_outlets(l) {
                    used += sol.q[b] * sol.y[a];
                }
            }
        }
        for (a, &(si, _)) in inst.source_terminal_arcs().iter().enumerate() {
            if si == i {
                used += sol.z[a];
            }
        }
        let violation = (s.lower_avail - used).max(used - s.upper_avail);
        track(&mut report.availability, s.id.clone(), violation);
    }

    for (l, p) in inst.pools().iter().enumerate() {
        let outflow: f64 = inst.pool_outlets(l).iter().map(|&a| sol.y[a]).sum();
        track(&mut report.capacity, p.id.clone(), outflow - p.capacity);
        if outflow > tol {
            let total_q: f64 = inst.pool_inlets(l).iter().map(|&b| sol.q[b]).sum();
            track(&mut report.simplex, p.id.clone(), (total_q - 1.0).abs());
        }
    }

    for (j, t) in inst.terminals().iter().enumerate() {
        let violation = (t.min_demand - v[j]).max(v[j] - t.max_demand);
        track(&mut report.demand, t.id.clone(), violation);
        for k in 0..inst.n_components() {
            let blended: f64 = (0..inst.n_sources())
                .map(|i| concentrations.get(i, k) * x.get(i, j))
                .sum();
            if t.quality_upper[k].is_finite() {
                track(
                    &mut report.quality_upper,
                    format!("{}/{}", t.id, inst.components()[k]),
                    blended - t.quality_upper[k] * v[j],
                );
            }
            track(
                &mut report.quality_lower,
                format!("{}/{}", t.id, inst.components()[k]),
                t.quality_lower[k] * v[j] - blended,
            );
        }
    }

    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_fixtures::{haverly1, random_solution, single_direct_arc_instance, TestRng};
    use approx::assert_abs_diff_eq;

    #[test]
    fn objective_zero_flows_is_zero() {
        let inst = haverly1();
        assert_eq!(objective(&inst, &Solution::zeros(&inst)), 0.0);
    }

    #[test]
    fn objective_single_direct_arc() {
        // One direct arc with z = 10, cost 6, price 9: -(9 - 6) * 10.
        let inst = single_direct_arc_instance();
        let mut sol = Solution::zeros(&inst);
        sol.z[0] = 10.0;
        assert_abs_diff_eq!(objective(&inst, &sol), -30.0, epsilon = 1e-12);
    }

    #[test]
    fn total_flow_single_path() {
        let inst = haverly1();
        let mut sol = Solution::zeros(&inst);
        // q(A->P) = 1, y(P->X) = 5, no direct flow.
        sol.q[0] = 1.0;
        sol.y[0] = 5.0;
        let x = total_flow_x(&inst, &sol);
        assert_abs_diff_eq!(x.get(0, 0), 5.0, epsilon = 1e-12);
        assert_eq!(x.get(1, 0), 0.0);
    }

    #[test]
    fn total_flow_mixes_pool_and_direct_routes() {
        // q = 0.4, y = 10 through the pool plus z = 2 direct: x = 6.
        let inst = haverly1();
        let mut sol = Solution::zeros(&inst);
        sol.q[0] = 0.4;
        sol.q[1] = 0.6;
        sol.y[0] = 10.0;
        let x = total_flow_x(&inst, &sol);
        assert_abs_diff_eq!(x.get(0, 0), 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x.get(1, 0), 6.0, epsilon = 1e-12);
        let mut sol2 = Solution::zeros(&inst);
        sol2.z[0] = 2.0; // C -> X
        let x2 = total_flow_x(&inst, &sol2);
        assert_abs_diff_eq!(x2.get(2, 0), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn total_flow_zero_solution_is_zero() {
        let inst = haverly1();
        let x = total_flow_x(&inst, &Solution::zeros(&inst));
        for i in 0..inst.n_sources() {
            for j in 0..inst.n_terminals() {
                assert_eq!(x.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn terminal_flow_adds_pool_and_direct_inflows() {
        let inst = haverly1();
        let mut sol = Solution::zeros(&inst);
        sol.y[0] = 5.0; // P -> X
        sol.z[0] = 3.0; // C -> X
        let v = terminal_flow_v(&inst, &sol);
        assert_abs_diff_eq!(v[0], 8.0, epsilon = 1e-12);
        assert_eq!(v[1], 0.0);
        assert_eq!(terminal_flow_v(&inst, &Solution::zeros(&inst)), vec![0.0, 0.0]);
    }

    #[test]
    fn terminal_flow_matches_total_flow_on_random_solutions() {
        let inst = haverly1();
        let mut rng = TestRng::new(7);
        for _ in 0..100 {
            let sol = random_solution(&inst, &mut rng);
            let x = total_flow_x(&inst, &sol);
            let v = terminal_flow_v(&inst, &sol);
            for j in 0..inst.n_terminals() {
                let from_x: f64 = (0..inst.n_sources()).map(|i| x.get(i, j)).sum();
                assert_abs_diff_eq!(from_x, v[j], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn profit_identity_in_total_flow_form() {
        // objective == sum c_i x_ij - sum d_j v_j, the regrouped form.
        let inst = haverly1();
        let mut rng = TestRng::new(11);
        for _ in 0..200 {
            let sol = random_solution(&inst, &mut rng);
            let x = total_flow_x(&inst, &sol);
            let v = terminal_flow_v(&inst, &sol);
            let mut regrouped = 0.0;
            for (i, s) in inst.sources().iter().enumerate() {
                for j in 0..inst.n_terminals() {
                    regrouped += s.cost * x.get(i, j);
                }
            }
            for (j, t) in inst.terminals().iter().enumerate() {
                regrouped -= t.price * v[j];
            }
            assert_abs_diff_eq!(objective(&inst, &sol), regrouped, epsilon = 1e-9);
        }
    }

    #[test]
    fn empty_solution_is_feasible_with_zero_lower_demands() {
        let inst = haverly1();
        let report = check_feasibility(
            &inst,
            &Solution::zeros(&inst),
            &inst.nominal_concentrations(),
            FEAS_TOL,
        );
        assert!(report.is_feasible(), "{report:?}");
    }

    #[test]
    fn feasibility_is_monotone_in_tolerance() {
        let inst = haverly1();
        let mut rng = TestRng::new(23);
        let conc = inst.nominal_concentrations();
        for _ in 0..50 {
            let sol = random_solution(&inst, &mut rng);
            let tight = check_feasibility(&inst, &sol, &conc, 1e-8);
            let loose = check_feasibility(&inst, &sol, &conc, 1e-2);
            if tight.is_feasible() {
                assert!(loose.is_feasible());
            }
        }
    }

    #[test]
    fn solution_json_round_trip() {
        let inst = haverly1();
        let mut sol = Solution::zeros(&inst);
        sol.q[0] = 0.25;
        sol.q[1] = 0.75;
        sol.y[1] = 100.0;
        sol.z[1] = 50.0;
        let text = sol.to_json(&inst);
        let back = Solution::from_json(&inst, &text).unwrap();
        assert_eq!(sol, back);
    }

    #[test]
    fn solution_with_unknown_arc_is_rejected() {
        let inst = haverly1();
        let err = Solution::from_json(&inst, r#"{"z": {"A|X": 1.0}}"#).unwrap_err();
        assert!(err.to_string().contains("not a source-terminal arc"), "{err}");
    }
}
