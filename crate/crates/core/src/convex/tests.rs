use super::*;
use crate::problem::min_energy_split;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn relaxed(levels: usize, objective: Vec<f64>) -> ConvexInstance<f64> {
    ConvexInstance { layout: Layout::Relaxed, levels, blocks: objective.len(), objective, rows: vec![], rate_rows: vec![] }
}

fn two_group_instance() -> ConvexInstance<f64> {
    let mut inst = relaxed(6, vec![3.0, 1.0, 2.0]);
    inst.rows = vec![
        LinearRow { terms: vec![(0, 1.0), (1, -1.0)], rhs: 1.0 },
        LinearRow { terms: vec![(1, 1.0), (0, -1.0)], rhs: 1.0 },
        LinearRow { terms: vec![(1, 1.0), (2, -1.0)], rhs: 1.0 },
        LinearRow { terms: vec![(2, 1.0), (1, -1.0)], rhs: 1.0 },
    ];
    inst.rate_rows = vec![
        RateRow { terms: vec![(0, 2.0), (1, 1.0)], capacity: 2.5, snr: 12.0 },
        RateRow { terms: vec![(2, 1.5)], capacity: 1.8, snr: 4.0 },
    ];
    inst
}

#[test]
fn box_optimum_sits_on_bounds() {
    let inst = relaxed(4, vec![1.0, 2.0, -1.0]);
    let r = solve_convex(&inst, &SolverSettings::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    for (x, want) in r.levels.iter().zip([4.0, 4.0, 1.0]) {
        assert!((x - want).abs() < 1e-6, "{x} vs {want}");
    }
    assert!(r.dual_bound >= 11.0 && r.dual_bound - r.objective < 1e-8);
}

#[test]
fn single_block_matches_closed_form() {
    let mut inst = relaxed(6, vec![1.0]);
    // κ·log2(1 + a) with a = 3 is 3.3
    inst.rate_rows = vec![RateRow { terms: vec![(0, 1.0)], capacity: 1.65, snr: 3.0 }];
    let r = solve_convex(&inst, &SolverSettings::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!((r.levels[0] - 3.3).abs() < 1e-7, "{}", r.levels[0]);
    assert!(r.dual_bound >= 3.3, "{}", r.dual_bound);

    inst.rate_rows[0].capacity = 10.0;
    let r = solve_convex(&inst, &SolverSettings::default()).unwrap();
    assert!((r.levels[0] - 6.0).abs() < 1e-7);
}

#[test]
fn lifted_layout_agrees_with_relaxed() {
    let relaxed = two_group_instance();
    let mut lifted = relaxed.clone();
    lifted.layout = Layout::Lifted;
    lifted.objective = relaxed.objective.iter().flat_map(|&c| [c; 6]).collect();
    let a = solve_convex(&relaxed, &SolverSettings::default()).unwrap();
    let b = solve_convex(&lifted, &SolverSettings::default()).unwrap();
    assert_eq!(b.status, SolveStatus::Optimal);
    assert!((a.objective - b.objective).abs() < 1e-6, "{} vs {}", a.objective, b.objective);
    for (x, y) in a.levels.iter().zip(&b.levels) {
        assert!((x - y).abs() < 1e-4);
    }
}

#[test]
fn dual_bound_dominates_random_feasible_points() {
    let inst = two_group_instance();
    let r = solve_convex(&inst, &SolverSettings::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!(inst.max_violation(&r.point) <= 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut hits = 0;
    for _ in 0..5000 {
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(1.0..3.0)).collect();
        if inst.rows.iter().any(|row| dot(&row.terms, &x) > row.rhs) {
            continue;
        }
        let terms: Vec<(f64, f64)> = inst.rate_rows.iter().map(|row| (1.0 / row.snr, dot(&row.terms, &x) / row.capacity)).collect();
        let (_, e) = min_energy_split(&terms, 1.0);
        if e.iter().sum::<f64>() <= 1.0 {
            hits += 1;
            assert!(inst.objective_value(&x) <= r.dual_bound);
        }
    }
    assert!(hits > 50, "only {hits} feasible samples");
}

#[test]
fn barrier_trace_is_nondecreasing() {
    let r = solve_convex(&two_group_instance(), &SolverSettings::default()).unwrap();
    assert!(r.barrier_trace.len() > 3);
    for w in r.barrier_trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-9, "{:?}", w);
    }
    assert!((r.barrier_trace.last().unwrap() - r.objective).abs() < 1e-12);
}

#[test]
fn repeated_solves_are_identical() {
    let inst = two_group_instance();
    let a = solve_convex(&inst, &SolverSettings::default()).unwrap();
    let b = solve_convex(&inst, &SolverSettings::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn empty_interior_is_infeasible() {
    let mut inst = relaxed(3, vec![1.0, 1.0]);
    inst.rows = vec![LinearRow { terms: vec![(0, 1.0), (1, 1.0)], rhs: 2.0 }];
    let r = solve_convex(&inst, &SolverSettings::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Infeasible);

    let mut inst = relaxed(3, vec![1.0]);
    inst.rate_rows = vec![RateRow { terms: vec![(0, 1.0)], capacity: 0.5, snr: 1.0 }];
    assert_eq!(solve_convex(&inst, &SolverSettings::default()).unwrap().status, SolveStatus::Infeasible);
}

#[test]
fn malformed_instances_are_rejected() {
    let mut inst = relaxed(3, vec![1.0]);
    inst.rows = vec![LinearRow { terms: vec![(4, 1.0)], rhs: 1.0 }];
    assert!(solve_convex(&inst, &SolverSettings::default()).is_err());
    let inst = relaxed(3, vec![1.0]);
    let bad = SolverSettings { mu_factor: 1.5, ..SolverSettings::default() };
    assert!(solve_convex(&inst, &bad).is_err());
}

#[test]
fn single_precision_solves() {
    let inst = ConvexInstance::<f32> {
        layout: Layout::Relaxed,
        levels: 6,
        blocks: 1,
        objective: vec![1.0],
        rows: vec![],
        rate_rows: vec![RateRow { terms: vec![(0, 1.0)], capacity: 1.65, snr: 3.0 }],
    };
    let settings = SolverSettings { kkt_tol: 1e-3, gap_tol: 1e-4, ..SolverSettings::default() };
    let r = solve_convex(&inst, &settings).unwrap();
    assert!((r.levels[0] - 3.3).abs() < 1e-3, "{}", r.levels[0]);
}
