use std::time::Instant;

use super::formulation::{as_levels, Formulation, Supply};
use super::{all_ones, package, repair, Extras, Method, Rounded, SolveOutcome, SolveSettings};
use crate::convex::{solve_convex, Layout, SolveStatus, SolverResult};
use crate::error::Result;
use crate::problem::ProblemInstance;
use crate::scalar::Scalar;

/// Solves the relaxation; `None` when it has no interior (including `L = 1`).
pub(crate) fn relax<S: Scalar>(form: &Formulation<S>, settings: &SolveSettings<S>) -> Result<Option<SolverResult<S>>> {
    if form.levels < 2 {
        return Ok(None);
    }
    let r = solve_convex(&form.convex(Layout::Relaxed, form.weight.clone()), &settings.convex)?;
    Ok((r.status != SolveStatus::Infeasible).then_some(r))
}

/// Outcome when the relaxation has no interior: everything at level 1.
pub(crate) fn degenerate<S: Scalar>(
    method: Method,
    inst: &ProblemInstance<S>,
    form: &Formulation<S>,
    settings: &SolveSettings<S>,
    start: Instant,
) -> Result<SolveOutcome<S>> {
    let rounded = all_ones(form)?;
    let bound = (form.levels == 1).then(|| form.objective(&as_levels(&rounded.x)));
    let extras = Extras { upper_bound: bound, relaxed: None, dca_trace: Vec::new() };
    Ok(package(method, inst, form, rounded, extras, settings, start.elapsed()))
}

fn floor_levels<S: Scalar>(x: &[S], shift: S, levels: usize) -> Vec<usize> {
    x.iter().map(|&v| (v + shift).floor().to_usize().unwrap_or(1).clamp(1, levels)).collect()
}

/// Componentwise floor of the relaxed solution. Values within 1e-6 below an
/// integer count as that integer when the result is still deliverable.
fn round_down<S: Scalar>(form: &Formulation<S>, r: &SolverResult<S>) -> Result<Rounded<S>> {
    let alloc = form.allocation_of(&r.point);
    let snapped = floor_levels(&r.levels, S::lit(1e-6), form.levels);
    if form.smooth(&snapped) {
        let levels = as_levels(&snapped);
        if form.delivers(&levels, &alloc) {
            return Ok(Rounded { x: snapped, allocation: alloc });
        }
        if let Some(allocation) = form.allocate(&levels) {
            return Ok(Rounded { x: snapped, allocation });
        }
    }
    let strict = floor_levels(&r.levels, S::zero(), form.levels);
    if form.delivers(&as_levels(&strict), &alloc) {
        return Ok(Rounded { x: strict, allocation: alloc });
    }
    repair(form, strict, &r.levels)
}

pub(crate) fn run_cr<S: Scalar>(
    method: Method,
    inst: &ProblemInstance<S>,
    form: &Formulation<S>,
    settings: &SolveSettings<S>,
    start: Instant,
) -> Result<SolveOutcome<S>> {
    let Some(r) = relax(form, settings)? else {
        return degenerate(method, inst, form, settings, start);
    };
    let rounded = round_down(form, &r)?;
    let extras = Extras { upper_bound: Some(r.dual_bound), relaxed: Some(r.levels), dca_trace: Vec::new() };
    Ok(package(method, inst, form, rounded, extras, settings, start.elapsed()))
}

/// Relax the levels to `[1, L]`, solve the convex problem jointly with the
/// allocation, and floor every level.
pub fn solve_cr<S: Scalar>(inst: &ProblemInstance<S>, settings: &SolveSettings<S>) -> Result<SolveOutcome<S>> {
    let start = Instant::now();
    run_cr(Method::Cr, inst, &Formulation::new(inst, Supply::Free), settings, start)
}

/// Optimal value of the relaxation, certified by the barrier duality gap.
pub fn upper_bound<S: Scalar>(inst: &ProblemInstance<S>, settings: &SolveSettings<S>) -> Result<S> {
    let form = Formulation::new(inst, Supply::Free);
    match relax(&form, settings)? {
        Some(r) => Ok(r.dual_bound),
        None => Ok(form.objective(&as_levels(&all_ones(&form)?.x))),
    }
}
