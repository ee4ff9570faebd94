//! Exactness check for the simplex: random box-bounded programs solved
//! against brute-force vertex enumeration.

use nalgebra::{DMatrix, DVector};
use robust_pooling::lp::{LinearProgram, LpStatus};
use robust_pooling::test_fixtures::TestRng;

struct HalfSpace {
    coeffs: Vec<f64>,
    rhs: f64,
    /// +1 for `a'x <= rhs`, -1 for `a'x >= rhs`.
    sense: f64,
}

/// Random program around a guaranteed interior point.
fn random_program(rng: &mut TestRng) -> (LinearProgram, Vec<HalfSpace>) {
    let n = 2 + rng.usize_below(3);
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut objective = Vec::new();
    for _ in 0..n {
        let lo = rng.uniform(-3.0, 0.0);
        lower.push(lo);
        upper.push(lo + rng.uniform(0.5, 4.0));
        objective.push(rng.uniform(-2.0, 2.0));
    }
    let interior: Vec<f64> = (0..n)
        .map(|j| lower[j] + rng.uniform(0.25, 0.75) * (upper[j] - lower[j]))
        .collect();

    let mut lp = LinearProgram::new(lower.clone(), upper.clone(), objective);
    let mut halves = Vec::new();
    let m = 1 + rng.usize_below(5);
    for _ in 0..m {
        let coeffs: Vec<f64> = (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let at_interior: f64 = coeffs.iter().zip(&interior).map(|(c, x)| c * x).sum();
        let kind = rng.usize_below(3);
        let (lo, hi) = match kind {
            0 => (f64::NEG_INFINITY, at_interior + rng.uniform(0.05, 1.5)),
            1 => (at_interior - rng.uniform(0.05, 1.5), f64::INFINITY),
            _ => (
                at_interior - rng.uniform(0.05, 1.5),
                at_interior + rng.uniform(0.05, 1.5),
            ),
        };
        if hi.is_finite() {
            halves.push(HalfSpace {
                coeffs: coeffs.clone(),
                rhs: hi,
                sense: 1.0,
            });
        }
        if lo.is_finite() {
            halves.push(HalfSpace {
                coeffs: coeffs.clone(),
                rhs: lo,
                sense: -1.0,
            });
        }
        lp.add_row(coeffs.iter().cloned().enumerate().collect(), lo, hi);
    }
    // Bounds participate in vertex enumeration as ordinary half-spaces.
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        halves.push(HalfSpace {
            coeffs: e.clone(),
            rhs: upper[j],
            sense: 1.0,
        });
        halves.push(HalfSpace {
            coeffs: e,
            rhs: lower[j],
            sense: -1.0,
        });
    }
    (lp, halves)
}

fn feasible(point: &[f64], halves: &[HalfSpace]) -> bool {
    halves.iter().all(|h| {
        let activity: f64 = h.coeffs.iter().zip(point).map(|(c, x)| c * x).sum();
        h.sense * (activity - h.rhs) <= 1e-7
    })
}

/// Minimum objective over all vertices: every subset of n active
/// half-space boundaries defines a candidate corner.
fn vertex_minimum(lp: &LinearProgram, halves: &[HalfSpace]) -> Option<f64> {
    let n = lp.n_vars();
    let total = halves.len();
    let mut best: Option<f64> = None;
    let mut chosen = vec![0usize; n];

    fn visit(
        start: usize,
        slot: usize,
        n: usize,
        total: usize,
        chosen: &mut Vec<usize>,
        lp: &LinearProgram,
        halves: &[HalfSpace],
        best: &mut Option<f64>,
    ) {
        if slot == n {
            let mut a = DMatrix::zeros(n, n);
            let mut b = DVector::zeros(n);
            for (row, &h) in chosen.iter().enumerate() {
                for col in 0..n {
                    a[(row, col)] = halves[h].coeffs[col];
                }
                b[row] = halves[h].rhs;
            }
            let lu = a.lu();
            if let Some(x) = lu.solve(&b) {
                let point: Vec<f64> = x.iter().cloned().collect();
                if point.iter().all(|v| v.is_finite()) && feasible(&point, halves) {
                    let value: f64 = point
                        .iter()
                        .zip(&lp.objective)
                        .map(|(x, c)| x * c)
                        .sum();
                    *best = Some(best.map_or(value, |b: f64| b.min(value)));
                }
            }
            return;
        }
        for h in start..total {
            chosen[slot] = h;
            visit(h + 1, slot + 1, n, total, chosen, lp, halves, best);
        }
    }
    visit(0, 0, n, total, &mut chosen, lp, halves, &mut best);
    best
}

#[test]
fn simplex_matches_vertex_enumeration() {
    let mut rng = TestRng::new(2024);
    for case in 0..300 {
        let (lp, halves) = random_program(&mut rng);
        let got = robust_pooling::lp::solve(&lp).unwrap();
        assert_eq!(
            got.status,
            LpStatus::Optimal,
            "case {case}: interior-point construction must be feasible"
        );
        let oracle = vertex_minimum(&lp, &halves).expect("bounded feasible LP has a vertex");
        assert!(
            (got.value - oracle).abs() <= 1e-6 * (1.0 + oracle.abs()),
            "case {case}: simplex {} vs vertex enumeration {}",
            got.value,
            oracle
        );
        assert!(
            feasible(&got.point, &halves),
            "case {case}: simplex point violates a half-space"
        );
    }
}

#[test]
fn contradictory_extra_row_is_infeasible() {
    let mut rng = TestRng::new(77);
    for _ in 0..50 {
        let (mut lp, _) = random_program(&mut rng);
        let n = lp.n_vars();
        // Demand more than the box can reach.
        let reach: f64 = lp.upper.iter().sum();
        lp.add_row((0..n).map(|j| (j, 1.0)).collect(), reach + 1.0, f64::INFINITY);
        let got = robust_pooling::lp::solve(&lp).unwrap();
        assert_eq!(got.status, LpStatus::Infeasible);
    }
}

#[test]
fn identical_input_identical_output() {
    let mut rng = TestRng::new(13);
    for _ in 0..50 {
        let (lp, _) = random_program(&mut rng);
        let a = robust_pooling::lp::solve(&lp).unwrap();
        let b = robust_pooling::lp::solve(&lp).unwrap();
        assert_eq!(a.status, b.status);
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.point, b.point);
    }
}
