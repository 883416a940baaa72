use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::problem::{min_energy_for_selection, Budgets};
use crate::scenario::{QualityLadder, RequestProfile, TileIndex, TilingGrid};

const KB_T0: f64 = 1.38e-23 * 300.0;

fn set(tiles: &[(usize, usize)]) -> BTreeSet<TileIndex> {
    tiles.iter().map(|&(r, c)| TileIndex::new(r, c)).collect()
}

fn budgets(frame: f64, bandwidth: f64, energy: f64) -> Budgets<f64> {
    Budgets { frame, bandwidth, energy, noise: bandwidth * KB_T0 }
}

fn example(levels: usize, b: Budgets<f64>, delta: usize) -> ProblemInstance<f64> {
    let grid = TilingGrid::new(4, 8).unwrap();
    let profile = RequestProfile::new(
        &grid,
        vec![
            set(&[(1, 3), (1, 4), (1, 5), (2, 3), (2, 4), (2, 5)]),
            set(&[(2, 4), (2, 5), (2, 6), (3, 4), (3, 5), (3, 6)]),
        ],
    )
    .unwrap();
    let ladder = QualityLadder::new(
        QualityLadder::<f64>::reference().rates()[..levels].to_vec(),
        QualityLadder::<f64>::reference().psnr()[..levels].to_vec(),
    )
    .unwrap();
    ProblemInstance::new(grid, ladder, profile, b, vec![1e-3, 6e-4], delta).unwrap()
}

/// Random instance on a 3×4 grid with at most `max_tiles` requested tiles.
fn random_small(seed: u64, max_tiles: usize) -> ProblemInstance<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = TilingGrid::new(3, 4).unwrap();
    let all: Vec<TileIndex> = grid.tiles().collect();
    let users = rng.gen_range(1..=2);
    let levels = rng.gen_range(2..=3);
    let pool: Vec<TileIndex> = {
        let mut p = all.clone();
        for i in (1..p.len()).rev() {
            p.swap(i, rng.gen_range(0..=i));
        }
        p.truncate(rng.gen_range(1..=max_tiles));
        p
    };
    let mut sets: Vec<BTreeSet<TileIndex>> = (0..users).map(|_| BTreeSet::new()).collect();
    for &t in &pool {
        let mask = rng.gen_range(1..(1u32 << users));
        for (k, s) in sets.iter_mut().enumerate() {
            if mask & (1 << k) != 0 {
                s.insert(t);
            }
        }
    }
    for k in 0..users {
        if sets[k].is_empty() {
            sets[k].insert(pool[0]);
        }
    }
    let profile = RequestProfile::new(&grid, sets).unwrap();
    let reference = QualityLadder::<f64>::reference();
    let ladder = QualityLadder::new(reference.rates()[..levels].to_vec(), reference.psnr()[..levels].to_vec()).unwrap();
    let b = budgets(0.05, rng.gen_range(2e5..6e5), 10f64.powf(rng.gen_range(-7.0..-4.0)));
    let channels = (0..users).map(|_| -1e-3 * (1.0 - rng.gen::<f64>()).ln()).collect();
    ProblemInstance::new(grid, ladder, profile, b, channels, rng.gen_range(0..=1)).unwrap()
}

#[test]
fn generous_budgets_reach_the_box_bound() {
    let inst = example(6, budgets(0.05, 2e7, 0.05), 1);
    let out = solve_cr(&inst, &SolveSettings::default()).unwrap();
    assert!(out.feasibility.feasible);
    assert_eq!(out.utility, 72.0);
    assert!(out.gap_bound.unwrap().abs() < 1e-6);
    let ub = upper_bound(&inst, &SolveSettings::default()).unwrap();
    assert!(ub >= 72.0 && ub < 72.0 + 1e-6);
    let oracle = oracle_exhaustive(&example(4, budgets(0.05, 2e7, 0.05), 1), OracleCaps { max_tiles: 10, max_levels: 4 }).unwrap();
    assert_eq!(oracle.utility, 48.0);
}

#[test]
fn tight_budget_admits_only_minimum_quality() {
    let loose = example(3, budgets(0.05, 4e5, 1.0), 1);
    let ones = QualitySelection::uniform(loose.tiles(), 1.0, SelectionMode::Integer);
    let need = min_energy_for_selection(&loose, &ones).unwrap().total_energy;
    let inst = loose.with_budgets(budgets(0.05, 4e5, need * (1.0 + 1e-9))).unwrap();
    let caps = OracleCaps { max_tiles: 10, max_levels: 4 };
    assert_eq!(oracle_exhaustive(&inst, caps).unwrap().utility, 12.0);
    for method in [Method::Cr, Method::Dc] {
        let out = solve(method, &inst, &SolveSettings::default()).unwrap();
        assert_eq!(out.utility, 12.0, "{method}");
        assert!(out.feasibility.feasible);
    }
    let starved = loose.with_budgets(budgets(0.05, 4e5, need * 0.999)).unwrap();
    assert!(matches!(oracle_exhaustive(&starved, caps), Err(Error::Infeasible(_))));
    assert!(matches!(solve_cr(&starved, &SolveSettings::default()), Err(Error::Infeasible(_))));
}

#[test]
fn single_tile_floor_matches_closed_form() {
    let grid = TilingGrid::new(2, 2).unwrap();
    let profile = RequestProfile::new(&grid, vec![set(&[(1, 1)])]).unwrap();
    let b = budgets(0.05, 1e5, 2e-8);
    let h = 1e-3;
    let inst = ProblemInstance::new(grid, QualityLadder::reference(), profile, b, vec![h], 1).unwrap();
    let x_star: f64 = b.bandwidth * b.frame * (1.0 + b.energy * h / (b.frame * b.noise)).log2() / (inst.gamma() * b.frame);
    assert!(x_star > 1.0 && x_star < 6.0, "{x_star}");
    let out = solve_cr(&inst, &SolveSettings::default()).unwrap();
    let relaxed = out.relaxed.as_ref().unwrap().level(TileIndex::new(1, 1));
    assert!((relaxed - x_star).abs() < 1e-6, "{relaxed} vs {x_star}");
    assert_eq!(out.utility, x_star.floor());
}

#[test]
fn heuristics_are_sandwiched_by_the_oracle() {
    let settings = SolveSettings::default();
    let mut solved = 0;
    for seed in 0..12 {
        let inst = random_small(seed, 5);
        let Ok(oracle) = oracle_exhaustive(&inst, OracleCaps::default()) else { continue };
        solved += 1;
        let cr = solve_cr(&inst, &settings).unwrap();
        let dc = solve_dc(&inst, &settings).unwrap();
        let ub = cr.upper_bound.unwrap();
        assert!(cr.feasibility.feasible && dc.feasibility.feasible, "seed {seed}");
        assert!(cr.utility <= oracle.utility && dc.utility <= oracle.utility + 1e-6, "seed {seed}");
        assert!(oracle.utility <= ub + 1e-6, "seed {seed}: {} > {ub}", oracle.utility);
        assert!(oracle.utility - cr.utility <= cr.gap_bound.unwrap() + 1e-6, "seed {seed}");
    }
    assert!(solved >= 6, "only {solved} feasible instances");
}

#[test]
fn dca_trace_is_monotone_within_each_stage() {
    let inst = example(4, budgets(0.05, 4e5, 2e-5), 1);
    let out = solve_dc(&inst, &SolveSettings::default()).unwrap();
    assert!(out.feasibility.feasible);
    assert!(!out.dca_trace.is_empty());
    for w in out.dca_trace.windows(2) {
        if w[0].rho == w[1].rho {
            assert!(w[1].objective >= w[0].objective - 1e-8, "{:?}", w);
        }
    }
    assert!(out.dca_trace.last().unwrap().max_penalty <= 1e-4);
    assert!(out.utility <= out.upper_bound.unwrap());
}

#[test]
fn zero_smoothness_forces_uniform_levels() {
    let inst = example(6, budgets(0.05, 4e5, 2e-5), 0);
    for method in [Method::Cr, Method::Dc] {
        let out = solve(method, &inst, &SolveSettings::default()).unwrap();
        let levels: BTreeSet<u64> = out.selection.levels().values().map(|&v| v as u64).collect();
        assert_eq!(levels.len(), 1, "{method}: {levels:?}");
    }
}

#[test]
fn baseline1_uses_the_fixed_allocation() {
    let inst = example(6, budgets(0.05, 8e5, 2e-5), 1);
    let out = baseline1(&inst, false, &SolveSettings::default()).unwrap();
    assert!(out.feasibility.feasible);
    let slot = 0.05 / 3.0;
    assert!(out.allocation.time().iter().all(|&t| t == slot));
    // energy (T/I)·(|S_i|/Σ|S|)·Q with |S| = 4, 2, 4
    let want = [0.4, 0.2, 0.4].map(|s| slot * s * 2e-5);
    for (e, w) in out.allocation.energy().iter().zip(want) {
        assert!((e - w).abs() <= 1e-15 * w);
    }
    let starved = inst.with_budgets(budgets(0.05, 8e5, 1e-12)).unwrap();
    assert!(matches!(baseline1(&starved, true, &SolveSettings::default()), Err(Error::Infeasible(_))));
}

#[test]
fn unicast_matches_multicast_without_overlap() {
    let grid = TilingGrid::new(3, 6).unwrap();
    let profile = RequestProfile::new(&grid, vec![set(&[(1, 1), (1, 2)]), set(&[(3, 5), (3, 6)])]).unwrap();
    let inst = ProblemInstance::new(grid, QualityLadder::reference(), profile, budgets(0.05, 3e5, 1e-5), vec![1e-3, 2e-3], 1).unwrap();
    let settings = SolveSettings::default();
    let multi = solve_cr(&inst, &settings).unwrap();
    let uni = baseline2(&inst, false, &settings).unwrap();
    assert_eq!(uni.solved_instance.as_ref().unwrap().group_count(), 2);
    assert!((multi.upper_bound.unwrap() - uni.upper_bound.unwrap()).abs() < 1e-6);
    assert_eq!(multi.utility, uni.utility);
}

#[test]
fn unicast_bound_is_below_multicast_with_full_overlap() {
    let grid = TilingGrid::new(3, 6).unwrap();
    let tiles = set(&[(1, 1), (1, 2), (2, 1), (2, 2)]);
    let profile = RequestProfile::new(&grid, vec![tiles.clone(), tiles]).unwrap();
    let inst = ProblemInstance::new(grid, QualityLadder::reference(), profile, budgets(0.05, 3e5, 1e-5), vec![1e-3, 1e-3], 1).unwrap();
    let settings = SolveSettings::default();
    let uni = unicast_instance(&inst).unwrap();
    assert_eq!(uni.tiles().len(), 8);
    assert!(upper_bound(&uni, &settings).unwrap() <= upper_bound(&inst, &settings).unwrap());
    let out = baseline2(&inst, true, &settings).unwrap();
    assert!(out.feasibility.feasible);
}

#[test]
fn oracle_refuses_large_instances() {
    let inst = example(6, budgets(0.05, 4e5, 2e-5), 1);
    assert!(matches!(oracle_exhaustive(&inst, OracleCaps::default()), Err(Error::CapExceeded(_))));
}

#[test]
fn oracle_enumerates_constant_selections_under_zero_smoothness() {
    let inst = example(3, budgets(0.05, 2e7, 1.0), 0);
    let out = oracle_exhaustive(&inst, OracleCaps { max_tiles: 10, max_levels: 4 }).unwrap();
    assert!(out.evaluated <= 3);
    assert_eq!(out.utility, 36.0);
}

#[test]
fn method_names_round_trip() {
    for m in Method::ALL {
        assert_eq!(m.name().parse::<Method>().unwrap(), m);
    }
    assert!("simplex".parse::<Method>().is_err());
}

#[test]
fn solves_are_deterministic() {
    let inst = random_small(3, 6);
    let settings = SolveSettings::default();
    for method in [Method::Cr, Method::Dc, Method::Baseline2Dc] {
        let (Ok(a), Ok(b)) = (solve(method, &inst, &settings), solve(method, &inst, &settings)) else { continue };
        assert_eq!(a.selection, b.selection);
        assert_eq!(a.allocation, b.allocation);
        assert_eq!(a.dca_trace, b.dca_trace);
    }
}

#[test]
fn single_level_ladder_is_all_ones() {
    let grid = TilingGrid::new(2, 2).unwrap();
    let profile = RequestProfile::new(&grid, vec![set(&[(1, 1), (1, 2)])]).unwrap();
    let ladder = QualityLadder::new(vec![6.66e5], vec![15.82]).unwrap();
    let inst = ProblemInstance::new(grid, ladder, profile, budgets(0.05, 4e5, 1e-3), vec![1e-3], 1).unwrap();
    let out = solve_dc(&inst, &SolveSettings::default()).unwrap();
    assert_eq!(out.utility, 2.0);
    assert_eq!(out.upper_bound, Some(2.0));
}
