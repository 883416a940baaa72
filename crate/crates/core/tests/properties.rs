use std::collections::BTreeSet;

use proptest::prelude::*;

use tilecast::problem::{check_feasible, rate_capacity, utility, FeasibilityTolerance, SelectionMode};
use tilecast::sim::small_instance;
use tilecast::solvers::{solve_cr, solve_dc, upper_bound};
use tilecast::{build_partition, Error, RequestProfile, SolveSettings, TileIndex, TilingGrid};

fn profile() -> impl Strategy<Value = RequestProfile> {
    (2usize..6, 2usize..8).prop_flat_map(|(rows, cols)| {
        let tile = (1..=rows, 1..=cols).prop_map(|(r, c)| TileIndex::new(r, c));
        let user = prop::collection::btree_set(tile, 1..10);
        prop::collection::vec(user, 1..5).prop_map(move |sets: Vec<BTreeSet<TileIndex>>| {
            RequestProfile::new(&TilingGrid::new(rows, cols).unwrap(), sets).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_groups_share_exact_audiences(p in profile()) {
        let part = build_partition(&p);
        part.validate(&p).unwrap();
        let covered: usize = part.groups().iter().map(|g| g.tiles.len()).sum();
        prop_assert_eq!(covered, p.union().len());
        for g in part.groups() {
            for &t in &g.tiles {
                prop_assert_eq!(&p.audience_of(t), &g.audience);
            }
        }
        let audiences: BTreeSet<_> = part.groups().iter().map(|g| g.audience.clone()).collect();
        prop_assert_eq!(audiences.len(), part.len());
    }

    #[test]
    fn capacity_is_increasing_and_concave(
        t in 1e-4f64..0.1,
        e in 1e-6f64..0.1,
        h in 1e-5f64..1e-2,
        dt in 1e-5f64..0.05,
        de in 1e-6f64..0.05,
    ) {
        let (b, n0) = (2e7, 2e7 * 1.38e-23 * 300.0);
        let c = |t: f64, e: f64| rate_capacity(t, e, h, b, n0);
        prop_assert!(c(t + dt, e) >= c(t, e));
        prop_assert!(c(t, e + de) > c(t, e));
        let mid = c(t + dt / 2.0, e + de / 2.0);
        let chord = (c(t, e) + c(t + dt, e + de)) / 2.0;
        prop_assert!(mid >= chord * (1.0 - 1e-12));
    }

    #[test]
    fn heuristics_are_feasible_and_below_the_bound(seed in 0u64..10_000) {
        let inst = small_instance::<f64>(seed, 8);
        let settings = SolveSettings::default();
        let bound = match upper_bound(&inst, &settings) {
            Ok(b) => b,
            Err(Error::Infeasible(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        for out in [solve_cr(&inst, &settings).unwrap(), solve_dc(&inst, &settings).unwrap()] {
            prop_assert_eq!(out.selection.mode(), SelectionMode::Integer);
            prop_assert!(check_feasible(&inst, &out.selection, &out.allocation, FeasibilityTolerance::default()).feasible);
            prop_assert_eq!(out.utility, utility(&out.selection, inst.profile()));
            prop_assert!(out.utility <= bound + 1e-6);
        }
    }
}
