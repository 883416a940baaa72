//! One instance of the utility maximization problem: data, objective,
//! constraints and quality-of-experience metrics.

mod energy;
mod feasibility;

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{domain, Result};
use crate::scalar::Scalar;
use crate::scenario::{build_partition, group_min_channel, MulticastPartition, QualityLadder, RequestProfile, TileIndex, TilingGrid};

pub use energy::{min_energy_for_selection, min_energy_split, MinEnergy, TdmaLink};
pub(crate) use energy::min_energy_for_sums;
pub use feasibility::{check_feasible, Constraint, FeasibilityReport, FeasibilityTolerance, Residual};

/// Frame duration (s), bandwidth (Hz), per-frame energy limit (J) and noise power (W).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budgets<S> {
    pub frame: S,
    pub bandwidth: S,
    pub energy: S,
    pub noise: S,
}

impl<S: Scalar> Budgets<S> {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("frame duration", self.frame),
            ("bandwidth", self.bandwidth),
            ("energy limit", self.energy),
            ("noise power", self.noise),
        ] {
            if !(v > S::zero() && v.is_finite()) {
                return domain(format!("{name} must be positive and finite, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance<S> {
    grid: TilingGrid,
    ladder: QualityLadder<S>,
    profile: RequestProfile,
    partition: MulticastPartition,
    budgets: Budgets<S>,
    channels: Vec<S>,
    smoothness: usize,
    tiles: Vec<TileIndex>,
    group_gain: Vec<S>,
    pairs: Vec<(TileIndex, TileIndex)>,
}

impl<S: Scalar> ProblemInstance<S> {
    pub fn new(
        grid: TilingGrid,
        ladder: QualityLadder<S>,
        profile: RequestProfile,
        budgets: Budgets<S>,
        channels: Vec<S>,
        smoothness: usize,
    ) -> Result<Self> {
        let partition = build_partition(&profile);
        Self::with_partition(grid, ladder, profile, partition, budgets, channels, smoothness)
    }

    pub fn with_partition(
        grid: TilingGrid,
        ladder: QualityLadder<S>,
        profile: RequestProfile,
        partition: MulticastPartition,
        budgets: Budgets<S>,
        channels: Vec<S>,
        smoothness: usize,
    ) -> Result<Self> {
        budgets.validate()?;
        if channels.len() != profile.users() {
            return domain(format!(
                "{} channel powers given for {} users",
                channels.len(),
                profile.users()
            ));
        }
        if smoothness > ladder.levels() {
            return domain(format!(
                "smoothness bound {smoothness} exceeds the number of levels {}",
                ladder.levels()
            ));
        }
        for set in profile.tile_sets() {
            if let Some(t) = set.iter().find(|t| !grid.contains(**t)) {
                return domain(format!("requested tile {t} lies outside the grid"));
            }
        }
        partition.validate(&profile)?;
        let group_gain = group_min_channel(&partition, &channels)?;
        let union = profile.union();
        let pairs = smoothness_pairs(&grid, &union);
        Ok(Self {
            grid,
            ladder,
            profile,
            partition,
            budgets,
            channels,
            smoothness,
            tiles: union.into_iter().collect(),
            group_gain,
            pairs,
        })
    }

    /// Same scenario with different budgets.
    pub fn with_budgets(&self, budgets: Budgets<S>) -> Result<Self> {
        budgets.validate()?;
        Ok(Self { budgets, ..self.clone() })
    }

    /// Same scenario with different channel powers.
    pub fn with_channels(&self, channels: Vec<S>) -> Result<Self> {
        Self::with_partition(
            self.grid,
            self.ladder.clone(),
            self.profile.clone(),
            self.partition.clone(),
            self.budgets,
            channels,
            self.smoothness,
        )
    }

    pub fn grid(&self) -> &TilingGrid {
        &self.grid
    }
    pub fn ladder(&self) -> &QualityLadder<S> {
        &self.ladder
    }
    pub fn profile(&self) -> &RequestProfile {
        &self.profile
    }
    pub fn partition(&self) -> &MulticastPartition {
        &self.partition
    }
    pub fn budgets(&self) -> &Budgets<S> {
        &self.budgets
    }
    pub fn channels(&self) -> &[S] {
        &self.channels
    }
    pub fn smoothness(&self) -> usize {
        self.smoothness
    }
    pub fn levels(&self) -> usize {
        self.ladder.levels()
    }
    pub fn gamma(&self) -> S {
        self.ladder.gamma()
    }
    /// Requested tiles in ascending order.
    pub fn tiles(&self) -> &[TileIndex] {
        &self.tiles
    }
    /// Weakest audience channel of each group.
    pub fn group_gain(&self) -> &[S] {
        &self.group_gain
    }
    /// Adjacent requested tile pairs subject to the smoothness bound.
    pub fn pairs(&self) -> &[(TileIndex, TileIndex)] {
        &self.pairs
    }
    pub fn group_count(&self) -> usize {
        self.partition.len()
    }

    /// Bits group `i` must deliver for a quality-level sum of `level_sum`.
    pub fn required_bits(&self, level_sum: S) -> S {
        self.gamma() * self.budgets.frame * level_sum
    }

    pub fn link(&self, group: usize) -> TdmaLink<S> {
        TdmaLink {
            bandwidth: self.budgets.bandwidth,
            noise: self.budgets.noise,
            gain: self.group_gain[group],
        }
    }

    /// Per-group sum of the selected levels.
    pub fn group_level_sums(&self, sel: &QualitySelection<S>) -> Vec<S> {
        self.partition
            .groups()
            .iter()
            .map(|g| g.tiles.iter().map(|t| sel.level(*t)).sum())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMode {
    Integer,
    Relaxed,
}

/// Quality level of every requested tile.
#[derive(Debug, Clone, PartialEq)]
pub struct QualitySelection<S> {
    levels: BTreeMap<TileIndex, S>,
    mode: SelectionMode,
}

impl<S: Scalar> QualitySelection<S> {
    pub fn new(levels: BTreeMap<TileIndex, S>, mode: SelectionMode) -> Self {
        Self { levels, mode }
    }

    pub fn uniform<'a>(tiles: impl IntoIterator<Item = &'a TileIndex>, level: S, mode: SelectionMode) -> Self {
        Self::new(tiles.into_iter().map(|&t| (t, level)).collect(), mode)
    }

    pub fn from_integers(levels: BTreeMap<TileIndex, usize>) -> Self {
        Self::new(
            levels.into_iter().map(|(t, l)| (t, S::of_usize(l))).collect(),
            SelectionMode::Integer,
        )
    }

    pub fn mode(&self) -> SelectionMode {
        self.mode
    }

    pub fn levels(&self) -> &BTreeMap<TileIndex, S> {
        &self.levels
    }

    /// Level of `tile`; the tile must be part of the selection.
    pub fn level(&self, tile: TileIndex) -> S {
        match self.levels.get(&tile) {
            Some(&l) => l,
            None => panic!("tile {tile} has no selected level"),
        }
    }

    /// Integer levels, rounding to the nearest level.
    pub fn integer_levels(&self) -> BTreeMap<TileIndex, usize> {
        self.levels
            .iter()
            .map(|(&t, &l)| (t, l.round().to_usize().unwrap_or(0)))
            .collect()
    }

    /// Componentwise sum, used for relaxed arithmetic.
    pub fn add(&self, other: &Self) -> Self {
        let levels = self
            .levels
            .iter()
            .map(|(&t, &l)| (t, l + other.level(t)))
            .collect();
        Self::new(levels, SelectionMode::Relaxed)
    }

    /// Checks that the selection is defined exactly on `tiles` and that levels are in range.
    pub fn conforms(&self, tiles: &[TileIndex], levels: usize) -> Result<()> {
        if self.levels.len() != tiles.len() || tiles.iter().any(|t| !self.levels.contains_key(t)) {
            return domain("selection is not defined exactly on the requested tiles");
        }
        let top = S::of_usize(levels);
        for (t, &l) in &self.levels {
            if !(l >= S::one() && l <= top) {
                return domain(format!("tile {t} has level {l} outside [1, {levels}]"));
            }
            if self.mode == SelectionMode::Integer && l != l.round() {
                return domain(format!("tile {t} has non-integer level {l}"));
            }
        }
        Ok(())
    }
}

/// Per-group transmission time (s) and energy (J).
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation<S> {
    time: Vec<S>,
    energy: Vec<S>,
}

impl<S: Scalar> Allocation<S> {
    /// Rejects mismatched lengths and energy spent in a zero-length slot.
    pub fn new(time: Vec<S>, energy: Vec<S>) -> Result<Self> {
        if time.len() != energy.len() {
            return domain("time and energy vectors differ in length");
        }
        if let Some(i) = (0..time.len()).find(|&i| time[i] == S::zero() && energy[i] > S::zero()) {
            return domain(format!("group {} spends energy with zero transmission time", i + 1));
        }
        Ok(Self { time, energy })
    }

    pub fn from_power(time: Vec<S>, power: &[S]) -> Result<Self> {
        let energy = time.iter().zip(power).map(|(&t, &p)| t * p).collect();
        Self::new(time, energy)
    }

    pub fn time(&self) -> &[S] {
        &self.time
    }

    pub fn energy(&self) -> &[S] {
        &self.energy
    }

    /// Transmit power `e_i / t_i`, 0 for an unused slot.
    pub fn power(&self) -> Vec<S> {
        self.time
            .iter()
            .zip(&self.energy)
            .map(|(&t, &e)| if t > S::zero() { e / t } else if e > S::zero() { S::infinity() } else { S::zero() })
            .collect()
    }

    pub fn total_time(&self) -> S {
        self.time.iter().copied().sum()
    }

    pub fn total_energy(&self) -> S {
        self.energy.iter().copied().sum()
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }
}

/// Total utility: every user's sum of levels over its own tiles.
pub fn utility<S: Scalar>(sel: &QualitySelection<S>, profile: &RequestProfile) -> S {
    profile
        .tile_sets()
        .iter()
        .flat_map(|s| s.iter())
        .map(|&t| sel.level(t))
        .sum()
}

/// Bits deliverable in time `t` with energy `e` over a link of gain `h`:
/// `t·B·log2(1 + e·h/(t·n0))`, extended by 0 at `t = 0`.
pub fn rate_capacity<S: Scalar>(t: S, e: S, h: S, bandwidth: S, noise: S) -> S {
    if t <= S::zero() {
        return S::zero();
    }
    t * bandwidth * (e * h / (t * noise)).ln_1p() / S::LN_2()
}

/// Horizontally (with wraparound from the last column to the first) and
/// vertically adjacent pairs within `tiles`, each unordered pair once.
pub fn smoothness_pairs(grid: &TilingGrid, tiles: &BTreeSet<TileIndex>) -> Vec<(TileIndex, TileIndex)> {
    let mut pairs = BTreeSet::new();
    for &t in tiles {
        let right = TileIndex::new(t.row, t.col % grid.cols() + 1);
        let below = TileIndex::new(t.row + 1, t.col);
        for n in [right, below] {
            if n != t && tiles.contains(&n) {
                pairs.insert(if t < n { (t, n) } else { (n, t) });
            }
        }
    }
    pairs.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsnrSummary<S> {
    pub per_user: Vec<S>,
    pub mean: S,
}

/// Mean PSNR over each user's tiles, and the mean of those over users.
pub fn psnr_metrics<S: Scalar>(
    sel: &QualitySelection<S>,
    profile: &RequestProfile,
    ladder: &QualityLadder<S>,
) -> PsnrSummary<S> {
    let per_user: Vec<S> = profile
        .tile_sets()
        .iter()
        .map(|set| {
            running_mean(set.iter().map(|&t| {
                let l = sel.level(t).round().to_usize().unwrap_or(1).clamp(1, ladder.levels());
                ladder.psnr_at(l)
            }))
        })
        .collect();
    let mean = running_mean(per_user.iter().copied());
    PsnrSummary { per_user, mean }
}

/// Incremental mean; exact when every value is equal.
fn running_mean<S: Scalar>(values: impl Iterator<Item = S>) -> S {
    let mut mean = S::zero();
    for (k, v) in values.enumerate() {
        mean = mean + (v - mean) / S::of_usize(k + 1);
    }
    mean
}
