//! Exact solution of small instances by enumeration.
//!
//! Levels are assigned tile by tile in ascending tile order and ascending
//! level order. A branch is cut when it breaks smoothness with an assigned
//! neighbour, when even level 1 on every remaining tile needs more energy
//! than the budget (minimum energy grows with every level sum), or when
//! level `L` on every remaining tile cannot beat the incumbent. Only strict
//! improvements replace the incumbent, so ties resolve to the
//! lexicographically smallest selection.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::problem::{min_energy_for_sums, Allocation, ProblemInstance, QualitySelection};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleCaps {
    pub max_tiles: usize,
    pub max_levels: usize,
}

impl Default for OracleCaps {
    fn default() -> Self {
        Self { max_tiles: 8, max_levels: 4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult<S> {
    pub utility: S,
    pub selection: QualitySelection<S>,
    pub allocation: Allocation<S>,
    /// Complete selections whose energy was evaluated.
    pub evaluated: usize,
}

struct Search<'a, S> {
    inst: &'a ProblemInstance<S>,
    levels: usize,
    /// Requesting users per tile.
    weight: Vec<usize>,
    /// Group of each tile.
    group: Vec<usize>,
    /// Neighbours of each tile that come earlier in the order.
    earlier: Vec<Vec<usize>>,
    /// `Σ weight` over tiles `i..`.
    tail_weight: Vec<usize>,
    x: Vec<usize>,
    best: Option<(usize, Vec<usize>, Allocation<S>)>,
    evaluated: usize,
}

impl<S: Scalar> Search<'_, S> {
    /// Minimum energy with unassigned tiles from `next` on at level 1.
    fn energy_floor(&self, next: usize) -> crate::problem::MinEnergy<S> {
        let mut sums = vec![0usize; self.inst.group_count()];
        for (i, &g) in self.group.iter().enumerate() {
            sums[g] += if i < next { self.x[i] } else { 1 };
        }
        let sums: Vec<S> = sums.into_iter().map(S::of_usize).collect();
        min_energy_for_sums(self.inst, &sums)
    }

    fn visit(&mut self, next: usize, value: usize) {
        let floor = self.energy_floor(next);
        if next == self.x.len() {
            self.evaluated += 1;
        }
        if !floor.within_budget {
            return;
        }
        if let Some((best, _, _)) = &self.best {
            if value + self.levels * self.tail_weight[next] <= *best {
                return;
            }
        }
        if next == self.x.len() {
            self.best = Some((value, self.x.clone(), floor.allocation));
            return;
        }
        let delta = self.inst.smoothness();
        for level in 1..=self.levels {
            if self.earlier[next].iter().all(|&j| self.x[j].abs_diff(level) <= delta) {
                self.x[next] = level;
                self.visit(next + 1, value + level * self.weight[next]);
            }
        }
        self.x[next] = 0;
    }
}

/// Best integer selection of a small instance and its minimum-energy
/// allocation. Refuses instances above `caps`.
pub fn oracle_exhaustive<S: Scalar>(inst: &ProblemInstance<S>, caps: OracleCaps) -> Result<OracleResult<S>> {
    let tiles = inst.tiles();
    if tiles.len() > caps.max_tiles || inst.levels() > caps.max_levels {
        return Err(Error::CapExceeded(format!(
            "{} tiles and {} levels exceed the limits of {} tiles and {} levels",
            tiles.len(),
            inst.levels(),
            caps.max_tiles,
            caps.max_levels
        )));
    }
    let index: BTreeMap<_, _> = tiles.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let weight: Vec<usize> = tiles.iter().map(|&t| inst.profile().audience_of(t).len()).collect();
    let mut group = vec![0; tiles.len()];
    for (g, grp) in inst.partition().groups().iter().enumerate() {
        for t in &grp.tiles {
            group[index[t]] = g;
        }
    }
    let mut earlier = vec![Vec::new(); tiles.len()];
    for (a, b) in inst.pairs() {
        let (i, j) = (index[a], index[b]);
        earlier[i.max(j)].push(i.min(j));
    }
    let mut tail_weight = vec![0; tiles.len() + 1];
    for i in (0..tiles.len()).rev() {
        tail_weight[i] = tail_weight[i + 1] + weight[i];
    }
    let mut search = Search {
        inst,
        levels: inst.levels(),
        weight,
        group,
        earlier,
        tail_weight,
        x: vec![0; tiles.len()],
        best: None,
        evaluated: 0,
    };
    search.visit(0, 0);
    let evaluated = search.evaluated;
    let Some((value, x, allocation)) = search.best else {
        return Err(Error::Infeasible("minimum quality cannot be delivered".into()));
    };
    let levels = tiles.iter().zip(&x).map(|(&t, &l)| (t, l)).collect();
    Ok(OracleResult { utility: S::of_usize(value), selection: QualitySelection::from_integers(levels), allocation, evaluated })
}
