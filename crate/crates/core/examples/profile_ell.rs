// Scratch profiling for the ellipsoid reformulation; not shipped.
use robust_pooling::robust::{build_reformulation, reformulation_solve};
use robust_pooling::solver::{solve_global, SolverConfig};
use robust_pooling::test_fixtures::haverly1;
use robust_pooling::uncertainty::UncertaintySet;
use std::time::Instant;

fn main() {
    let inst = haverly1();
    let set = UncertaintySet::ellipsoid(0.2).unwrap();
    let mp = build_reformulation(&inst, &set).unwrap();
    println!(
        "vars={} rows={} terms={} soc={}",
        mp.vars().len(),
        mp.rows().len(),
        mp.nonlinear_terms().len(),
        mp.soc_rows().len()
    );
    let t = Instant::now();
    let cfg = SolverConfig {
        max_nodes: 20_000,
        ..SolverConfig::default()
    };
    let report = solve_global(&mp, &cfg).unwrap();
    println!(
        "status={:?} obj={} lb={} gap={:.2e} nodes={} time={:?}",
        report.status,
        report.objective,
        report.lower_bound,
        report.gap,
        report.nodes,
        t.elapsed()
    );
    let t = Instant::now();
    let r = reformulation_solve(&inst, &set, &cfg, 1e-6).unwrap();
    println!(
        "reform: status={:?} obj={} nodes={} certified={} time={:?}",
        r.solve.status, r.solve.objective, r.solve.nodes, r.certified, t.elapsed()
    );
}
