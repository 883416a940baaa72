//! Translation of a problem instance into block variables and convex rows.
//!
//! With `Δ = 0` every connected component of the smoothness graph must share
//! one level, so its tiles are merged into a single block. Otherwise every
//! tile is its own block. With `Δ ≥ L − 1` smoothness can never bind and its
//! rows are omitted.

use std::collections::BTreeMap;

use crate::convex::{ConvexInstance, ConvexPoint, Layout, LinearRow, RateRow};
use crate::problem::{min_energy_split, rate_capacity, Allocation, ProblemInstance, QualitySelection, SelectionMode};
use crate::scalar::Scalar;
use crate::scenario::TileIndex;

/// How the TDMA resources are chosen.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Supply<S> {
    /// Time and energy are optimized jointly with the selection.
    Free,
    /// Time and energy are fixed; each group gets a cap on its level sum.
    Fixed { allocation: Allocation<S>, caps: Vec<S> },
}

#[derive(Debug, Clone)]
pub(crate) struct Formulation<S> {
    pub levels: usize,
    pub smoothness: usize,
    pub blocks: Vec<Vec<TileIndex>>,
    /// Requesting users summed over the block's tiles.
    pub weight: Vec<S>,
    /// Tiles in the block.
    pub size: Vec<S>,
    /// Distinct adjacent block pairs.
    pub pairs: Vec<(usize, usize)>,
    /// Per group: `(block, tiles of the block in the group)`.
    pub group_terms: Vec<Vec<(usize, S)>>,
    pub supply: Supply<S>,
    pub frame: S,
    pub energy: S,
    bandwidth: S,
    gamma: S,
    noise: S,
    gains: Vec<S>,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

impl<S: Scalar> Formulation<S> {
    pub fn new(inst: &ProblemInstance<S>, supply: Supply<S>) -> Self {
        let tiles = inst.tiles();
        let index: BTreeMap<TileIndex, usize> = tiles.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        let mut parent: Vec<usize> = (0..tiles.len()).collect();
        if inst.smoothness() == 0 {
            for (a, b) in inst.pairs() {
                let (ra, rb) = (find(&mut parent, index[a]), find(&mut parent, index[b]));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        // blocks numbered by their smallest tile
        let mut block_id = BTreeMap::new();
        let mut block_of = vec![0; tiles.len()];
        let mut blocks: Vec<Vec<TileIndex>> = Vec::new();
        for (i, &t) in tiles.iter().enumerate() {
            let root = find(&mut parent, i);
            let id = *block_id.entry(root).or_insert_with(|| {
                blocks.push(Vec::new());
                blocks.len() - 1
            });
            block_of[i] = id;
            blocks[id].push(t);
        }
        let profile = inst.profile();
        let weight = blocks
            .iter()
            .map(|b| S::of_usize(b.iter().map(|&t| profile.audience_of(t).len()).sum()))
            .collect();
        let size = blocks.iter().map(|b| S::of_usize(b.len())).collect();
        let mut pairs = Vec::new();
        if inst.smoothness() + 1 < inst.levels() {
            let mut seen = std::collections::BTreeSet::new();
            for (a, b) in inst.pairs() {
                let (ba, bb) = (block_of[index[a]], block_of[index[b]]);
                if ba != bb && seen.insert((ba.min(bb), ba.max(bb))) {
                    pairs.push((ba.min(bb), ba.max(bb)));
                }
            }
        }
        let group_terms = inst
            .partition()
            .groups()
            .iter()
            .map(|g| {
                let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
                for t in &g.tiles {
                    *counts.entry(block_of[index[t]]).or_default() += 1;
                }
                counts.into_iter().map(|(b, c)| (b, S::of_usize(c))).collect()
            })
            .collect();
        let b = inst.budgets();
        Self {
            levels: inst.levels(),
            smoothness: inst.smoothness(),
            blocks,
            weight,
            size,
            pairs,
            group_terms,
            supply,
            frame: b.frame,
            energy: b.energy,
            bandwidth: b.bandwidth,
            gamma: inst.gamma(),
            noise: b.noise,
            gains: inst.group_gain().to_vec(),
        }
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Convex program over the blocks with the given per-column objective.
    pub fn convex(&self, layout: Layout, objective: Vec<S>) -> ConvexInstance<S> {
        let delta = S::of_usize(self.smoothness);
        let mut rows = Vec::new();
        for &(a, b) in &self.pairs {
            rows.push(LinearRow { terms: vec![(a, S::one()), (b, -S::one())], rhs: delta });
            rows.push(LinearRow { terms: vec![(b, S::one()), (a, -S::one())], rhs: delta });
        }
        let mut rate_rows = Vec::new();
        match &self.supply {
            Supply::Free => {
                for (i, terms) in self.group_terms.iter().enumerate() {
                    rate_rows.push(RateRow {
                        terms: terms.clone(),
                        capacity: self.bandwidth / self.gamma,
                        snr: self.energy * self.gains[i] / (self.frame * self.noise),
                    });
                }
            }
            Supply::Fixed { caps, .. } => {
                for (terms, &cap) in self.group_terms.iter().zip(caps) {
                    rows.push(LinearRow { terms: terms.clone(), rhs: cap });
                }
            }
        }
        ConvexInstance { layout, levels: self.levels, blocks: self.block_count(), objective, rows, rate_rows }
    }

    /// Physical allocation of a convex point (fixed supply ignores the point).
    pub fn allocation_of(&self, point: &ConvexPoint<S>) -> Allocation<S> {
        match &self.supply {
            Supply::Free => {
                let time = point.time_share.iter().map(|&t| t * self.frame).collect();
                let energy = point.energy_share.iter().map(|&e| e * self.energy).collect();
                Allocation::new(time, energy).expect("interior shares are positive")
            }
            Supply::Fixed { allocation, .. } => allocation.clone(),
        }
    }

    pub fn level_sums(&self, x: &[S]) -> Vec<S> {
        self.group_terms.iter().map(|t| t.iter().map(|&(b, c)| c * x[b]).sum()).collect()
    }

    /// Whether block levels `x` are deliverable with `alloc` (exact comparison).
    pub fn delivers(&self, x: &[S], alloc: &Allocation<S>) -> bool {
        if alloc.total_time() > self.frame || alloc.total_energy() > self.energy {
            return false;
        }
        self.level_sums(x).iter().enumerate().all(|(i, &sum)| {
            let have = rate_capacity(alloc.time()[i], alloc.energy()[i], self.gains[i], self.bandwidth, self.noise);
            self.gamma * self.frame * sum <= have
        })
    }

    /// An allocation delivering integer block levels `x`, if one exists:
    /// the fixed allocation under caps, or the minimum-energy split.
    pub fn allocate(&self, x: &[S]) -> Option<Allocation<S>> {
        match &self.supply {
            Supply::Fixed { allocation, caps } => {
                let sums = self.level_sums(x);
                sums.iter().zip(caps).all(|(s, c)| s <= c).then(|| allocation.clone())
            }
            Supply::Free => {
                let terms: Vec<(S, S)> = self
                    .level_sums(x)
                    .iter()
                    .zip(&self.gains)
                    .map(|(&s, &h)| (self.noise / h, self.gamma * self.frame * s / self.bandwidth))
                    .collect();
                let (time, energy) = min_energy_split(&terms, self.frame);
                let total: S = energy.iter().copied().sum();
                (total <= self.energy).then(|| Allocation::new(time, energy).expect("split is well formed"))
            }
        }
    }

    pub fn smooth(&self, x: &[usize]) -> bool {
        self.pairs.iter().all(|&(a, b)| x[a].abs_diff(x[b]) <= self.smoothness)
    }

    /// Lowers levels until every adjacent pair is within the smoothness bound.
    pub fn smooth_down(&self, x: &mut [usize]) {
        let mut changed = true;
        while changed {
            changed = false;
            for &(a, b) in &self.pairs {
                for (hi, lo) in [(a, b), (b, a)] {
                    if x[hi] > x[lo] + self.smoothness {
                        x[hi] = x[lo] + self.smoothness;
                        changed = true;
                    }
                }
            }
        }
    }

    pub fn objective(&self, x: &[S]) -> S {
        self.weight.iter().zip(x).map(|(&w, &v)| w * v).sum()
    }

    pub fn selection(&self, x: &[S], mode: SelectionMode) -> QualitySelection<S> {
        let mut levels = BTreeMap::new();
        for (b, tiles) in self.blocks.iter().enumerate() {
            for &t in tiles {
                levels.insert(t, x[b]);
            }
        }
        QualitySelection::new(levels, mode)
    }
}

pub(crate) fn as_levels<S: Scalar>(x: &[usize]) -> Vec<S> {
    x.iter().map(|&v| S::of_usize(v)).collect()
}
