use std::fmt;

use crate::scalar::Scalar;
use crate::scenario::TileIndex;

use super::{rate_capacity, Allocation, ProblemInstance, QualitySelection, SelectionMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// Allocation or selection shape does not match the instance.
    Shape,
    TimeNonNegative(usize),
    TimeSum,
    EnergyNonNegative(usize),
    /// Energy assigned to a group with zero transmission time.
    IdleEnergy(usize),
    EnergySum,
    Level(TileIndex),
    Rate(usize),
    Smoothness(TileIndex, TileIndex),
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::Shape => write!(f, "shape"),
            Constraint::TimeNonNegative(i) => write!(f, "time_nonneg[{}]", i + 1),
            Constraint::TimeSum => write!(f, "time_sum"),
            Constraint::EnergyNonNegative(i) => write!(f, "energy_nonneg[{}]", i + 1),
            Constraint::IdleEnergy(i) => write!(f, "idle_energy[{}]", i + 1),
            Constraint::EnergySum => write!(f, "energy_sum"),
            Constraint::Level(t) => write!(f, "level{t}"),
            Constraint::Rate(i) => write!(f, "rate[{}]", i + 1),
            Constraint::Smoothness(a, b) => write!(f, "smooth{a}{b}"),
        }
    }
}

/// Signed constraint residual, positive when violated, with the magnitude
/// the relative tolerance is applied to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual<S> {
    pub constraint: Constraint,
    pub value: S,
    pub scale: S,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityTolerance<S> {
    pub relative: S,
    pub absolute: S,
}

impl<S: Scalar> Default for FeasibilityTolerance<S> {
    fn default() -> Self {
        Self {
            relative: S::lit(1e-6),
            absolute: S::lit(1e-9),
        }
    }
}

impl<S: Scalar> FeasibilityTolerance<S> {
    pub fn relative(relative: S) -> Self {
        Self { relative, ..Self::default() }
    }

    pub fn allows(&self, r: &Residual<S>) -> bool {
        r.value <= (self.relative * r.scale.abs()).max(self.absolute)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport<S> {
    pub residuals: Vec<Residual<S>>,
    pub tolerance: FeasibilityTolerance<S>,
    pub feasible: bool,
}

impl<S: Scalar> FeasibilityReport<S> {
    pub fn violations(&self) -> impl Iterator<Item = &Residual<S>> {
        self.residuals.iter().filter(|r| !self.tolerance.allows(r))
    }

    /// Largest residual relative to its scale (absolute when the scale is below 1).
    pub fn worst_relative(&self) -> S {
        self.residuals
            .iter()
            .map(|r| r.value / r.scale.abs().max(S::one()))
            .fold(S::neg_infinity(), S::max)
    }

    pub fn get(&self, c: Constraint) -> Option<&Residual<S>> {
        self.residuals.iter().find(|r| r.constraint == c)
    }
}

/// Evaluates every constraint of the problem at `(sel, alloc)`.
pub fn check_feasible<S: Scalar>(
    inst: &ProblemInstance<S>,
    sel: &QualitySelection<S>,
    alloc: &Allocation<S>,
    tol: FeasibilityTolerance<S>,
) -> FeasibilityReport<S> {
    let b = inst.budgets();
    let groups = inst.group_count();
    let mut out = Vec::new();
    let mut push = |constraint, value, scale| out.push(Residual { constraint, value, scale });

    let shape_ok = alloc.len() == groups && sel.levels().len() == inst.tiles().len() && inst.tiles().iter().all(|t| sel.levels().contains_key(t));
    if !shape_ok {
        push(Constraint::Shape, S::infinity(), S::one());
        return FeasibilityReport { residuals: out, tolerance: tol, feasible: false };
    }

    for (i, (&t, &e)) in alloc.time().iter().zip(alloc.energy()).enumerate() {
        push(Constraint::TimeNonNegative(i), -t, b.frame);
        push(Constraint::EnergyNonNegative(i), -e, b.energy);
        let idle = if t <= S::zero() && e > S::zero() { e } else { S::zero() };
        push(Constraint::IdleEnergy(i), idle, b.energy);
    }
    push(Constraint::TimeSum, alloc.total_time() - b.frame, b.frame);
    push(Constraint::EnergySum, alloc.total_energy() - b.energy, b.energy);

    let top = S::of_usize(inst.levels());
    for &tile in inst.tiles() {
        let x = sel.level(tile);
        let mut v = (S::one() - x).max(x - top);
        if sel.mode() == SelectionMode::Integer {
            v = v.max((x - x.round()).abs());
        }
        push(Constraint::Level(tile), v, S::one());
    }

    for (i, sum) in inst.group_level_sums(sel).into_iter().enumerate() {
        let need = inst.required_bits(sum);
        let link = inst.link(i);
        let have = rate_capacity(alloc.time()[i], alloc.energy()[i], link.gain, link.bandwidth, link.noise);
        push(Constraint::Rate(i), need - have, need);
    }

    let delta = S::of_usize(inst.smoothness());
    for &(a, c) in inst.pairs() {
        push(Constraint::Smoothness(a, c), (sel.level(a) - sel.level(c)).abs() - delta, S::one());
    }

    let feasible = out.iter().all(|r| tol.allows(r));
    FeasibilityReport { residuals: out, tolerance: tol, feasible }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::super::{min_energy_for_selection, Budgets};
    use super::*;
    use crate::scenario::{QualityLadder, RequestProfile, TilingGrid};

    fn instance(q: f64, delta: usize) -> ProblemInstance<f64> {
        let grid = TilingGrid::new(4, 8).unwrap();
        let set = |v: &[(usize, usize)]| v.iter().map(|&(r, c)| TileIndex::new(r, c)).collect::<BTreeSet<_>>();
        let profile = RequestProfile::new(
            &grid,
            vec![
                set(&[(1, 3), (2, 3), (1, 4), (2, 4), (1, 5), (2, 5)]),
                set(&[(2, 4), (3, 4), (2, 5), (3, 5), (2, 6), (3, 6)]),
            ],
        )
        .unwrap();
        let budgets = Budgets { frame: 0.05, bandwidth: 2e7, energy: q, noise: 2e7 * 1.38e-23 * 300.0 };
        ProblemInstance::new(grid, QualityLadder::reference(), profile, budgets, vec![1e-3, 5e-4], delta).unwrap()
    }

    #[test]
    fn slack_instance_is_feasible() {
        let inst = instance(10.0, 1);
        let sel = QualitySelection::uniform(inst.tiles(), 1.0, SelectionMode::Integer);
        let i = inst.group_count();
        let alloc = Allocation::new(vec![0.05 / i as f64; i], vec![1.0; i]).unwrap();
        let rep = check_feasible(&inst, &sel, &alloc, FeasibilityTolerance::default());
        assert!(rep.feasible, "{:?}", rep.violations().collect::<Vec<_>>());
    }

    #[test]
    fn smoothness_violation_is_reported() {
        let inst = instance(10.0, 0);
        let mut levels = QualitySelection::uniform(inst.tiles(), 1.0, SelectionMode::Integer).integer_levels();
        levels.insert(TileIndex::new(1, 4), 2);
        let sel = QualitySelection::from_integers(levels);
        let i = inst.group_count();
        let alloc = Allocation::new(vec![0.05 / i as f64; i], vec![1.0; i]).unwrap();
        let rep = check_feasible(&inst, &sel, &alloc, FeasibilityTolerance::default());
        assert!(!rep.feasible);
        let r = rep.get(Constraint::Smoothness(TileIndex::new(1, 3), TileIndex::new(1, 4))).unwrap();
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn rate_equality_is_feasible_within_tolerance() {
        let inst = instance(10.0, 1);
        let sel = QualitySelection::uniform(inst.tiles(), 3.0, SelectionMode::Integer);
        let me = min_energy_for_selection(&inst, &sel).unwrap();
        let rep = check_feasible(&inst, &sel, &me.allocation, FeasibilityTolerance::default());
        assert!(rep.feasible);
        for i in 0..inst.group_count() {
            let r = rep.get(Constraint::Rate(i)).unwrap();
            assert!(r.value.abs() <= 1e-9 * r.scale, "{r:?}");
        }
    }

    #[test]
    fn budgets_and_shape() {
        let inst = instance(1e-6, 1);
        let sel = QualitySelection::uniform(inst.tiles(), 1.0, SelectionMode::Integer);
        let alloc = Allocation::new(vec![0.03, 0.03, 0.0], vec![1.0, 0.0, 0.0]).unwrap();
        let rep = check_feasible(&inst, &sel, &alloc, FeasibilityTolerance::default());
        assert!(!rep.feasible);
        assert!(rep.get(Constraint::TimeSum).unwrap().value > 0.0);
        assert!(rep.get(Constraint::EnergySum).unwrap().value > 0.0);
        let short = Allocation::new(vec![0.01], vec![0.01]).unwrap();
        assert!(!check_feasible(&inst, &sel, &short, FeasibilityTolerance::default()).feasible);
    }
}
