use std::time::Instant;

use super::dca::run_dc;
use super::formulation::{Formulation, Supply};
use super::relaxation::run_cr;
use super::{Method, SolveOutcome, SolveSettings};
use crate::error::{Error, Result};
use crate::problem::{rate_capacity, Allocation, ProblemInstance};
use crate::scalar::Scalar;
use crate::scenario::{RequestProfile, TileIndex, TilingGrid};

/// Equal slots `T/I` and power `|S_i|/Σ|S|·Q` per group (or, with
/// `energy_split`, energy `|S_i|/Σ|S|·Q`), with the level-sum cap each
/// allocation supports.
fn fixed_supply<S: Scalar>(inst: &ProblemInstance<S>, energy_split: bool) -> Result<Supply<S>> {
    let b = inst.budgets();
    let groups = inst.partition().groups();
    let total = S::of_usize(groups.iter().map(|g| g.tiles.len()).sum());
    let slot = b.frame / S::of_usize(groups.len());
    let energy = groups
        .iter()
        .map(|g| {
            let share = S::of_usize(g.tiles.len()) / total;
            if energy_split {
                share * b.energy
            } else {
                slot * share * b.energy
            }
        })
        .collect();
    let allocation = Allocation::new(vec![slot; groups.len()], energy)?;
    if allocation.total_energy() > b.energy {
        return Err(Error::Infeasible(format!(
            "equal-slot allocation spends {} J of a {} J budget",
            allocation.total_energy(),
            b.energy
        )));
    }
    let per_level = inst.required_bits(S::one());
    let mut caps = Vec::with_capacity(groups.len());
    for (i, g) in groups.iter().enumerate() {
        let link = inst.link(i);
        let cap = rate_capacity(slot, allocation.energy()[i], link.gain, link.bandwidth, link.noise) / per_level;
        if cap < S::of_usize(g.tiles.len()) {
            return Err(Error::Infeasible(format!("group {} cannot receive minimum quality in its fixed slot", i + 1)));
        }
        caps.push(cap);
    }
    Ok(Supply::Fixed { allocation, caps })
}

/// Selection only, under a fixed equal-slot allocation; `dc` picks the DCA
/// over the floor of the relaxation.
pub fn baseline1<S: Scalar>(inst: &ProblemInstance<S>, dc: bool, settings: &SolveSettings<S>) -> Result<SolveOutcome<S>> {
    let start = Instant::now();
    let form = Formulation::new(inst, fixed_supply(inst, settings.baseline1_energy_split)?);
    if dc {
        run_dc(Method::Baseline1Dc, inst, &form, settings, start)
    } else {
        run_cr(Method::Baseline1Cr, inst, &form, settings, start)
    }
}

/// The same users served by unicast: user `k`'s tiles are copied to rows
/// offset by `k·(M + 1)` of a taller grid, with a blank row between copies
/// so smoothness only couples tiles of the same user. Each copy forms its
/// own group with that user's channel.
pub fn unicast_instance<S: Scalar>(inst: &ProblemInstance<S>) -> Result<ProblemInstance<S>> {
    let (rows, cols) = (inst.grid().rows(), inst.grid().cols());
    let users = inst.profile().users();
    let grid = TilingGrid::new(users * (rows + 1) - 1, cols)?;
    let sets = inst
        .profile()
        .tile_sets()
        .iter()
        .enumerate()
        .map(|(k, set)| set.iter().map(|t| TileIndex::new(t.row + k * (rows + 1), t.col)).collect())
        .collect();
    let profile = RequestProfile::new(&grid, sets)?;
    ProblemInstance::new(grid, inst.ladder().clone(), profile, *inst.budgets(), inst.channels().to_vec(), inst.smoothness())
}

/// Runs the relaxation or DCA machinery on [`unicast_instance`].
pub fn baseline2<S: Scalar>(inst: &ProblemInstance<S>, dc: bool, settings: &SolveSettings<S>) -> Result<SolveOutcome<S>> {
    let start = Instant::now();
    let unicast = unicast_instance(inst)?;
    let form = Formulation::new(&unicast, Supply::Free);
    let mut outcome = if dc {
        run_dc(Method::Baseline2Dc, &unicast, &form, settings, start)?
    } else {
        run_cr(Method::Baseline2Cr, &unicast, &form, settings, start)?
    };
    outcome.solved_instance = Some(unicast);
    Ok(outcome)
}
