//! Shared fixtures and brute-force oracles for unit, integration, and
//! acceptance tests. Not part of the supported API.

use crate::instance::{Concentrations, PoolingInstance, SourceSpec, TerminalSpec};
use crate::lp::{self, LinearProgram, LpStatus};
use crate::solution::Solution;

pub fn haverly1_json() -> String {
    include_str!("../../../instances/haverly1.json").to_string()
}

pub fn haverly2_json() -> String {
    include_str!("../../../instances/haverly2.json").to_string()
}

pub fn haverly3_json() -> String {
    include_str!("../../../instances/haverly3.json").to_string()
}

pub fn haverly1() -> PoolingInstance {
    PoolingInstance::from_json(&haverly1_json()).expect("haverly1 fixture")
}

pub fn haverly2() -> PoolingInstance {
    PoolingInstance::from_json(&haverly2_json()).expect("haverly2 fixture")
}

pub fn haverly3() -> PoolingInstance {
    PoolingInstance::from_json(&haverly3_json()).expect("haverly3 fixture")
}

/// One source, one terminal, one direct arc; no pools.
pub fn single_direct_arc_instance() -> PoolingInstance {
    PoolingInstance::new(
        "direct".to_string(),
        None,
        vec!["s".to_string()],
        vec![SourceSpec {
            id: "src".to_string(),
            cost: 6.0,
            lower_avail: 0.0,
            upper_avail: 100.0,
            quality: vec![1.0],
            deviation: vec![1.0],
            location: [0.0, 0.0],
        }],
        vec![],
        vec![TerminalSpec {
            id: "t".to_string(),
            price: 9.0,
            min_demand: 0.0,
            max_demand: 100.0,
            quality_lower: vec![0.0],
            quality_upper: vec![10.0],
        }],
        vec![],
        vec![],
        vec![(0, 0)],
    )
    .expect("single-arc fixture")
}

/// Deterministic splitmix64 generator so fixtures stay dependency-free.
#[derive(Debug, Clone)]
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn usize_below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

/// Brute-force optimum for instances with a single two-inlet pool: grid
/// search over the inlet fraction with an LP in the remaining flows at
/// each grid point. Quality rows take explicit per-side concentration
/// matrices and bound scales, so the same oracle covers nominal solves,
/// box-robust solves (shifted concentrations), and safety-factor solves
/// (scaled bounds). Independent of the master/branch-and-bound path.
pub fn grid_lp_optimum(
    inst: &PoolingInstance,
    conc_upper: &Concentrations,
    conc_lower: &Concentrations,
    upper_scale: f64,
    lower_scale: f64,
    grid_steps: usize,
) -> f64 {
    assert_eq!(inst.pools().len(), 1, "oracle handles single-pool instances");
    let inlets = inst.pool_inlets(0);
    assert_eq!(inlets.len(), 2, "oracle handles two-inlet pools");
    let n_y = inst.pool_terminal_arcs().len();
    let n_z = inst.source_terminal_arcs().len();

    let mut best = f64::INFINITY;
    for step in 0..=grid_steps {
        let frac = step as f64 / grid_steps as f64;
        let mut q = vec![0.0; inst.source_pool_arcs().len()];
        q[inlets[0]] = 1.0 - frac;
        q[inlets[1]] = frac;

        // LP in (y, z) at this fixed fraction vector.
        let lower = vec![0.0; n_y + n_z];
        let mut upper = Vec::with_capacity(n_y + n_z);
        let mut objective = vec![0.0; n_y + n_z];
        for (a, &(l, j)) in inst.pool_terminal_arcs().iter().enumerate() {
            upper.push(inst.pools()[l].capacity.min(inst.terminals()[j].max_demand));
            let blended_cost: f64 = inlets
                .iter()
                .map(|&b| {
                    let (i, _) = inst.source_pool_arcs()[b];
                    inst.sources()[i].cost * q[b]
                })
                .sum();
            objective[a] = blended_cost - inst.terminals()[j].price;
        }
        for (a, &(i, j)) in inst.source_terminal_arcs().iter().enumerate() {
            upper.push(inst.sources()[i].upper_avail.min(inst.terminals()[j].max_demand));
            objective[n_y + a] = -(inst.terminals()[j].price - inst.sources()[i].cost);
        }
        let mut lp = LinearProgram::new(lower, upper, objective);

        for (i, s) in inst.sources().iter().enumerate() {
            let mut coeffs: Vec<(usize, f64)> = Vec::new();
            for (a, &(_, _)) in inst.pool_terminal_arcs().iter().enumerate() {
                let used: f64 = inlets
                    .iter()
                    .filter(|&&b| inst.source_pool_arcs()[b].0 == i)
                    .map(|&b| q[b])
                    .sum();
                if used != 0.0 {
                    coeffs.push((a, used));
                }
            }
            for (a, &(si, _)) in inst.source_terminal_arcs().iter().enumerate() {
                if si == i {
                    coeffs.push((n_y + a, 1.0));
                }
            }
            if !coeffs.is_empty() {
                lp.add_row(coeffs, s.lower_avail, s.upper_avail);
            }
        }
        lp.add_row(
            (0..n_y).map(|a| (a, 1.0)).collect(),
            f64::NEG_INFINITY,
            inst.pools()[0].capacity,
        );
        for (j, t) in inst.terminals().iter().enumerate() {
            let mut coeffs: Vec<(usize, f64)> = Vec::new();
            for (a, &(_, tj)) in inst.pool_terminal_arcs().iter().enumerate() {
                if tj == j {
                    coeffs.push((a, 1.0));
                }
            }
            for (a, &(_, tj)) in inst.source_terminal_arcs().iter().enumerate() {
                if tj == j {
                    coeffs.push((n_y + a, 1.0));
                }
            }
            lp.add_row(coeffs.clone(), t.min_demand, t.max_demand);
            for k in 0..inst.n_components() {
                let pool_blend = |conc: &Concentrations| -> f64 {
                    inlets
                        .iter()
                        .map(|&b| {
                            let (i, _) = inst.source_pool_arcs()[b];
                            conc.get(i, k) * q[b]
                        })
                        .sum()
                };
                let upper_bound = t.quality_upper[k] * upper_scale;
                if upper_bound.is_finite() {
                    let mut coeffs: Vec<(usize, f64)> = Vec::new();
                    for (a, &(_, tj)) in inst.pool_terminal_arcs().iter().enumerate() {
                        if tj == j {
                            coeffs.push((a, pool_blend(conc_upper) - upper_bound));
                        }
                    }
                    for (a, &(i, tj)) in inst.source_terminal_arcs().iter().enumerate() {
                        if tj == j {
                            coeffs.push((n_y + a, conc_upper.get(i, k) - upper_bound));
                        }
                    }
                    lp.add_row(coeffs, f64::NEG_INFINITY, 0.0);
                }
                let lower_bound = t.quality_lower[k] * lower_scale;
                let mut coeffs: Vec<(usize, f64)> = Vec::new();
                for (a, &(_, tj)) in inst.pool_terminal_arcs().iter().enumerate() {
                    if tj == j {
                        coeffs.push((a, pool_blend(conc_lower) - lower_bound));
                    }
                }
                for (a, &(i, tj)) in inst.source_terminal_arcs().iter().enumerate() {
                    if tj == j {
                        coeffs.push((n_y + a, conc_lower.get(i, k) - lower_bound));
                    }
                }
                lp.add_row(coeffs, 0.0, f64::INFINITY);
            }
        }

        let solved = lp::solve(&lp).expect("oracle LP solve");
        if solved.status == LpStatus::Optimal && solved.value < best {
            best = solved.value;
        }
    }
    best
}

/// Nominal-optimum oracle at the default grid resolution.
pub fn grid_lp_nominal_optimum(inst: &PoolingInstance) -> f64 {
    let nominal = inst.nominal_concentrations();
    grid_lp_optimum(inst, &nominal, &nominal, 1.0, 1.0, 100)
}

/// Random solution with normalized inlet fractions (the simplex rows hold)
/// and arbitrary nonnegative flows; not necessarily feasible otherwise.
pub fn random_solution(inst: &PoolingInstance, rng: &mut TestRng) -> Solution {
    let mut sol = Solution::zeros(inst);
    for l in 0..inst.pools().len() {
        let inlets = inst.pool_inlets(l);
        let mut total = 0.0;
        for &b in inlets {
            sol.q[b] = rng.next_f64() + 1e-9;
            total += sol.q[b];
        }
        for &b in inlets {
            sol.q[b] /= total;
        }
    }
    for (a, &(l, _)) in inst.pool_terminal_arcs().iter().enumerate() {
        sol.y[a] = rng.uniform(0.0, inst.pools()[l].capacity / 2.0);
    }
    for (a, &(i, _)) in inst.source_terminal_arcs().iter().enumerate() {
        sol.z[a] = rng.uniform(0.0, inst.sources()[i].upper_avail / 2.0);
    }
    sol
}
