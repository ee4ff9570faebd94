//! End-to-end checks of the three robust strategies on the Haverly
//! instances: structural row checks for the reformulations, method
//! agreement, certification of final and intermediate solutions, and the
//! expected orderings across geometries and radii.

use approx::assert_abs_diff_eq;
use robust_pooling::robust::{
    self, build_nominal, build_reformulation, cutting_plane_solve, optimal_safety_factor,
    reformulation_solve, safety_factor_solve, scenario_master, separation, Cut, CutMode, CutPool,
    CutRows, CuttingPlaneConfig, SafetyFactorConfig,
};
use robust_pooling::solution::{check_feasibility, Solution};
use robust_pooling::solver::{solve_global, SolveStatus, SolverConfig};
use robust_pooling::test_fixtures::{grid_lp_optimum, haverly1, haverly3};
use robust_pooling::uncertainty::{ScenarioPoint, UncertaintySet};

fn nominal_haverly1_optimum() -> Solution {
    let report = solve_global(&build_nominal(&haverly1()), &SolverConfig::default()).unwrap();
    report.incumbent.unwrap()
}

#[test]
fn box_reformulation_at_zero_radius_is_nominal() {
    let inst = haverly1();
    let set = UncertaintySet::box_set(0.0).unwrap();
    let robust = reformulation_solve(&inst, &set, &SolverConfig::default(), 1e-6).unwrap();
    assert_eq!(robust.solve.status, SolveStatus::Optimal);
    assert_abs_diff_eq!(robust.solve.objective, -400.0, epsilon = 1e-5);
    assert!(robust.certified);
}

#[test]
fn box_reformulation_shifts_coefficients() {
    // With deviation equal to the nominal value and r = 1, the upper rows
    // carry 2C and the lower rows 0.
    let inst = haverly1();
    let set = UncertaintySet::box_set(1.0).unwrap();
    let mp = build_reformulation(&inst, &set).unwrap();
    let var_name = |v: usize| mp.vars()[v].name.clone();
    let up = mp
        .rows()
        .iter()
        .find(|r| r.name == "quality_up(X,sulfur)")
        .unwrap();
    for &(v, c) in &up.coeffs {
        match var_name(v).as_str() {
            "w(A,P,X)" => assert_abs_diff_eq!(c, 6.0, epsilon = 1e-12),
            "w(B,P,X)" => assert_abs_diff_eq!(c, 2.0, epsilon = 1e-12),
            "z(C,X)" => assert_abs_diff_eq!(c, 4.0, epsilon = 1e-12),
            "v(X)" => assert_abs_diff_eq!(c, -2.5, epsilon = 1e-12),
            other => panic!("unexpected row entry {other}"),
        }
    }
    let lo = mp
        .rows()
        .iter()
        .find(|r| r.name == "quality_lo(X,sulfur)")
        .unwrap();
    for &(v, c) in &lo.coeffs {
        match var_name(v).as_str() {
            "w(A,P,X)" | "w(B,P,X)" | "z(C,X)" => assert_abs_diff_eq!(c, 0.0, epsilon = 1e-12),
            "v(X)" => assert_abs_diff_eq!(c, 0.0, epsilon = 1e-12),
            other => panic!("unexpected row entry {other}"),
        }
    }
}

#[test]
fn polyhedron_reformulation_sizes() {
    // 2 |J| |K| padding variables and 2 |I| |J| |K| padding rows.
    let inst = haverly1();
    let set = UncertaintySet::polyhedron(0.5).unwrap();
    let mp = build_reformulation(&inst, &set).unwrap();
    let pad_vars = mp
        .vars()
        .iter()
        .filter(|v| v.name.starts_with("pad_"))
        .count();
    assert_eq!(pad_vars, 2 * 2 * 1);
    let pad_rows = mp
        .rows()
        .iter()
        .filter(|r| r.name.starts_with("pad_"))
        .count();
    assert_eq!(pad_rows, 2 * 3 * 2 * 1);
    // The problem stays bilinear: products only, no squares.
    assert!(mp.nonlinear_terms().iter().all(|t| !t.is_square()));
}

#[test]
fn scenario_master_with_nominal_pool_is_the_nominal_problem() {
    let inst = haverly1();
    let pool = CutPool::nominal(&inst);
    let mp = scenario_master(&inst, &pool);
    let quality_rows = mp
        .rows()
        .iter()
        .filter(|r| r.name.starts_with("quality_"))
        .count();
    assert_eq!(quality_rows, 2 * 2 * 1);
    let report = solve_global(&mp, &SolverConfig::default()).unwrap();
    assert_eq!(report.status, SolveStatus::Optimal);
    assert_abs_diff_eq!(report.objective, -400.0, epsilon = 1e-5);
}

fn corner_scenario(inst: &robust_pooling::PoolingInstance, value: f64) -> ScenarioPoint {
    let mut s = ScenarioPoint::nominal(inst.n_sources(), inst.n_components());
    for i in 0..inst.n_sources() {
        for k in 0..inst.n_components() {
            *s.xi.get_mut(i, k) = value;
        }
    }
    s
}

#[test]
fn scenario_row_counting() {
    let inst = haverly1();
    let mut pool = CutPool::nominal(&inst);
    pool.push(Cut {
        scenario: corner_scenario(&inst, 0.25),
        rows: CutRows::All,
        origin: None,
    });
    let mp = scenario_master(&inst, &pool);
    let quality_rows = mp
        .rows()
        .iter()
        .filter(|r| r.name.starts_with("quality_"))
        .count();
    // 2 n |J| |K| with n = 2 pooled scenarios.
    assert_eq!(quality_rows, 2 * 2 * 2 * 1);
}

#[test]
fn box_reformulation_equals_two_extreme_scenarios() {
    let inst = haverly1();
    let r = 0.2;
    let set = UncertaintySet::box_set(r).unwrap();
    let reform = reformulation_solve(&inst, &set, &SolverConfig::default(), 1e-6).unwrap();

    let mut pool = CutPool::nominal(&inst);
    pool.push(Cut {
        scenario: corner_scenario(&inst, r),
        rows: CutRows::All,
        origin: None,
    });
    pool.push(Cut {
        scenario: corner_scenario(&inst, -r),
        rows: CutRows::All,
        origin: None,
    });
    let scen = solve_global(&scenario_master(&inst, &pool), &SolverConfig::default()).unwrap();
    assert_eq!(reform.solve.status, SolveStatus::Optimal);
    assert_eq!(scen.status, SolveStatus::Optimal);
    assert_abs_diff_eq!(reform.solve.objective, scen.objective, epsilon = 1e-6);
}

#[test]
fn separation_flags_the_quality_tight_nominal_optimum() {
    let inst = haverly1();
    let sol = nominal_haverly1_optimum();
    let set = UncertaintySet::box_set(0.1).unwrap();
    let sep = separation(&inst, &sol, &set, 1e-6).unwrap();
    assert!(sep.epsilon > 1e-3, "eps = {}", sep.epsilon);
    assert!(!sep.certified());
    assert!(sep.worst.is_some());
    // The scenario itself is a member of the set.
    let (_, k, _) = sep.worst.unwrap();
    assert!(set.membership(&sep.scenario.xi, k));
}

#[test]
fn separation_of_the_zero_solution_is_nonpositive() {
    let inst = haverly1();
    let sol = Solution::zeros(&inst);
    for set in [
        UncertaintySet::box_set(0.5).unwrap(),
        UncertaintySet::ellipsoid(0.5).unwrap(),
        UncertaintySet::polyhedron(0.5).unwrap(),
    ] {
        let sep = separation(&inst, &sol, &set, 1e-6).unwrap();
        assert!(sep.epsilon <= 0.0);
        assert!(sep.certified());
    }
}

#[test]
fn separation_at_zero_radius_is_the_nominal_residual() {
    let inst = haverly1();
    let sol = nominal_haverly1_optimum();
    let set = UncertaintySet::box_set(0.0).unwrap();
    let sep = separation(&inst, &sol, &set, 1e-6).unwrap();
    let feas = check_feasibility(&inst, &sol, &inst.nominal_concentrations(), 1e-6);
    let worst_quality = feas
        .quality_upper
        .iter()
        .chain(feas.quality_lower.iter())
        .map(|f| f.violation)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_abs_diff_eq!(sep.epsilon, worst_quality, epsilon = 1e-9);
}

#[test]
fn cutting_planes_at_zero_radius_converge_without_cuts() {
    let inst = haverly1();
    let set = UncertaintySet::box_set(0.0).unwrap();
    // With the initial tolerance already final, one master solve suffices.
    let cfg = CuttingPlaneConfig {
        delta0: 1e-6,
        delta_star: 1e-6,
        ..CuttingPlaneConfig::default()
    };
    let (report, pool) = cutting_plane_solve(&inst, &set, &cfg).unwrap();
    assert_eq!(report.iterations, 1);
    assert_eq!(pool.cuts_added(), 0);
    assert_eq!(report.solve.status, SolveStatus::Optimal);
    assert_abs_diff_eq!(report.solve.objective, -400.0, epsilon = 1e-5);
    assert!(report.certified);
}

#[test]
fn multi_cut_matches_box_reformulation() {
    let inst = haverly1();
    let set = UncertaintySet::box_set(0.15).unwrap();
    let reform = reformulation_solve(&inst, &set, &SolverConfig::default(), 1e-6).unwrap();
    let (cut, pool) = cutting_plane_solve(&inst, &set, &CuttingPlaneConfig::default()).unwrap();
    assert_eq!(reform.solve.status, SolveStatus::Optimal);
    assert_eq!(cut.solve.status, SolveStatus::Optimal);
    assert!(cut.certified);
    let rel = (reform.solve.objective - cut.solve.objective).abs()
        / reform.solve.objective.abs().max(1.0);
    assert!(rel <= 1e-4, "reform {} vs cuts {}", reform.solve.objective, cut.solve.objective);
    // Every pooled scenario is a member of the set.
    for cut in pool.cuts() {
        for k in 0..inst.n_components() {
            assert!(set.membership(&cut.scenario.xi, k));
        }
    }
}

#[test]
fn single_cut_mode_also_converges_on_haverly() {
    let inst = haverly1();
    let set = UncertaintySet::polyhedron(0.2).unwrap();
    let cfg = CuttingPlaneConfig {
        mode: CutMode::Single,
        ..CuttingPlaneConfig::default()
    };
    let (report, _) = cutting_plane_solve(&inst, &set, &cfg).unwrap();
    assert_eq!(report.solve.status, SolveStatus::Optimal);
    assert!(report.certified);
}

#[test]
fn ellipsoid_methods_agree() {
    let inst = haverly1();
    let set = UncertaintySet::ellipsoid(0.2).unwrap();
    let reform = reformulation_solve(&inst, &set, &SolverConfig::default(), 1e-6).unwrap();
    let (cut, _) = cutting_plane_solve(&inst, &set, &CuttingPlaneConfig::default()).unwrap();
    assert_eq!(reform.solve.status, SolveStatus::Optimal);
    assert_eq!(cut.solve.status, SolveStatus::Optimal);
    assert!(reform.certified && cut.certified);
    let rel = (reform.solve.objective - cut.solve.objective).abs()
        / reform.solve.objective.abs().max(1.0);
    assert!(rel <= 1e-4, "reform {} vs cuts {}", reform.solve.objective, cut.solve.objective);
}

#[test]
fn reformulation_incumbents_are_robustly_feasible_mid_solve() {
    // Any feasible point of the reformulated master is robust; check every
    // incumbent the solver recorded, not only the final one.
    let inst = haverly1();
    for set in [
        UncertaintySet::box_set(0.2).unwrap(),
        UncertaintySet::ellipsoid(0.2).unwrap(),
        UncertaintySet::polyhedron(0.2).unwrap(),
    ] {
        let robust = reformulation_solve(&inst, &set, &SolverConfig::default(), 1e-6).unwrap();
        assert!(!robust.solve.incumbents.is_empty());
        for record in &robust.solve.incumbents {
            let sep = separation(&inst, &record.solution, &set, 1e-6).unwrap();
            assert!(
                sep.certified(),
                "{:?}: incumbent at node {} violates by {}",
                set.geometry(),
                record.node,
                sep.epsilon
            );
        }
    }
}

#[test]
fn geometry_ordering_at_fixed_radius() {
    let inst = haverly1();
    let cfg = SolverConfig::default();
    let profit = |set: &UncertaintySet| {
        let r = reformulation_solve(&inst, set, &cfg, 1e-6).unwrap();
        assert_eq!(r.solve.status, SolveStatus::Optimal);
        -r.solve.objective
    };
    let p_poly = profit(&UncertaintySet::polyhedron(0.15).unwrap());
    let p_ell = profit(&UncertaintySet::ellipsoid(0.15).unwrap());
    let p_box = profit(&UncertaintySet::box_set(0.15).unwrap());
    assert!(p_poly >= p_ell - 1e-6, "poly {p_poly} < ell {p_ell}");
    assert!(p_ell >= p_box - 1e-6, "ell {p_ell} < box {p_box}");
}

#[test]
fn profit_is_monotone_in_the_radius() {
    let inst = haverly3();
    let cfg = SolverConfig::default();
    let mut last = f64::INFINITY;
    for r in [0.0, 0.1, 0.2, 0.3] {
        let set = UncertaintySet::box_set(r).unwrap();
        let robust = reformulation_solve(&inst, &set, &cfg, 1e-6).unwrap();
        assert_eq!(robust.solve.status, SolveStatus::Optimal);
        let profit = -robust.solve.objective;
        assert!(
            profit <= last + 1e-6,
            "profit increased with the radius: {profit} after {last}"
        );
        last = profit;
    }
}

#[test]
fn safety_factor_one_is_nominal_and_large_factors_shut_production() {
    let inst = haverly1();
    let cfg = SolverConfig::default();
    let at_one = safety_factor_solve(&inst, 1.0, &cfg).unwrap();
    assert_abs_diff_eq!(at_one.objective, -400.0, epsilon = 1e-5);
    let at_huge = safety_factor_solve(&inst, 1e6, &cfg).unwrap();
    assert_abs_diff_eq!(at_huge.objective, 0.0, epsilon = 1e-9);
    let sol = at_huge.incumbent.unwrap();
    assert!(sol.y.iter().all(|v| v.abs() <= 1e-9));
    assert!(sol.z.iter().all(|v| v.abs() <= 1e-9));
    assert!(safety_factor_solve(&inst, 0.5, &cfg).is_err());
}

#[test]
fn scaled_bounds_cut_profit_strictly() {
    let inst = haverly1();
    let s = 1.1;
    let nominal = inst.nominal_concentrations();
    let oracle = grid_lp_optimum(&inst, &nominal, &nominal, 1.0 / s, s, 200);
    let report = safety_factor_solve(&inst, s, &SolverConfig::default()).unwrap();
    assert!(
        (report.objective - oracle).abs() <= 1e-4 * oracle.abs().max(1.0),
        "safety solve {} vs oracle {oracle}",
        report.objective
    );
    assert!(-report.objective < 400.0 - 1e-3);
}

#[test]
fn optimal_safety_factor_degenerate_and_conservative() {
    let inst = haverly1();
    let sf_cfg = SafetyFactorConfig {
        rel_tol: 1e-3,
        ..SafetyFactorConfig::default()
    };

    // Zero radius: the nominal solution is already robust.
    let set0 = UncertaintySet::box_set(0.0).unwrap();
    let (s_min, report) = optimal_safety_factor(&inst, &set0, &sf_cfg).unwrap();
    assert_abs_diff_eq!(s_min, 1.0, epsilon = 1e-9);
    assert!(report.certified);

    // Positive radius: certified and no better than the robust optimum.
    let set = UncertaintySet::box_set(0.15).unwrap();
    let (s_min, report) = optimal_safety_factor(&inst, &set, &sf_cfg).unwrap();
    assert!(s_min > 1.0);
    assert!(report.certified);
    let sep = separation(&inst, report.solve.incumbent.as_ref().unwrap(), &set, 1e-6).unwrap();
    assert!(sep.certified());
    let (cut, _) = cutting_plane_solve(&inst, &set, &CuttingPlaneConfig::default()).unwrap();
    let safety_profit = -report.solve.objective;
    let robust_profit = -cut.solve.objective;
    assert!(
        safety_profit <= robust_profit + 1e-6,
        "safety {safety_profit} beats the robust optimum {robust_profit}"
    );
}

#[test]
fn correlated_identity_reproduces_ellipsoid_objectives() {
    let inst = haverly1();
    let n = inst.n_sources();
    let ell = UncertaintySet::ellipsoid(0.2).unwrap();
    let corr =
        UncertaintySet::correlated(0.2, nalgebra::DMatrix::identity(n, n)).unwrap();
    let a = reformulation_solve(&inst, &ell, &SolverConfig::default(), 1e-6).unwrap();
    let b = reformulation_solve(&inst, &corr, &SolverConfig::default(), 1e-6).unwrap();
    assert_eq!(a.solve.status, SolveStatus::Optimal);
    assert_eq!(b.solve.status, SolveStatus::Optimal);
    assert_abs_diff_eq!(a.solve.objective, b.solve.objective, epsilon = 1e-6);
}

#[test]
fn nominal_solve_helper_matches_build_nominal() {
    let inst = haverly1();
    let direct = robust::nominal_solve(&inst, &SolverConfig::default()).unwrap();
    assert_abs_diff_eq!(direct.objective, -400.0, epsilon = 1e-5);
}
