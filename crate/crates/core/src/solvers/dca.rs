//! Penalized DC programming over binary-lifted levels.
//!
//! Each level is written as `x_b = Σ_l y_{b,l}` with `y ∈ [0, 1]`, and the
//! objective is penalized by `ρ·Σ |b|·y·(1 − y)`. The penalty is concave, so
//! replacing it by its tangent at the current iterate gives a convex
//! minorant whose maximizer can only raise the penalized objective.

use std::time::Instant;

use super::formulation::{as_levels, Formulation, Supply};
use super::relaxation::{degenerate, relax};
use super::{package, repair, DcaStep, Extras, Method, Rounded, SolveOutcome, SolveSettings};
use crate::convex::{solve_convex, ConvexPoint, Layout, SolveStatus};
use crate::error::{Error, Result};
use crate::problem::ProblemInstance;
use crate::scalar::Scalar;

fn max_penalty<S: Scalar>(y: &[S]) -> S {
    y.iter().fold(S::zero(), |m, &v| m.max(v * (S::one() - v)))
}

fn penalized<S: Scalar>(form: &Formulation<S>, y: &[S], rho: S) -> S {
    let l = form.levels;
    (0..form.block_count())
        .map(|b| {
            let col = &y[b * l..(b + 1) * l];
            let x: S = col.iter().copied().sum();
            let pen: S = col.iter().map(|&v| v * (S::one() - v)).sum();
            form.weight[b] * x - rho * form.size[b] * pen
        })
        .sum()
}

/// DCA iterations at one penalty weight, appended to `trace`. An iterate
/// that lowers the penalized objective can only come from an inexact
/// subproblem solve and ends the stage instead. Returns the last point and
/// whether the objective moved.
fn stage<S: Scalar>(
    form: &Formulation<S>,
    settings: &SolveSettings<S>,
    mut point: ConvexPoint<S>,
    rho: S,
    trace: &mut Vec<DcaStep<S>>,
) -> Result<(ConvexPoint<S>, bool)> {
    let (l, d) = (form.levels, settings.dca);
    let start = penalized(form, &point.selection, rho);
    let mut f = start;
    trace.push(DcaStep { rho, iteration: 0, objective: f, max_penalty: max_penalty(&point.selection) });
    for iteration in 1..=d.max_iters {
        let objective = (0..form.block_count())
            .flat_map(|b| (0..l).map(move |k| (b, b * l + k)))
            .map(|(b, c)| form.weight[b] - rho * form.size[b] * (S::one() - S::lit(2.0) * point.selection[c]))
            .collect();
        let r = solve_convex(&form.convex(Layout::Lifted, objective), &settings.convex)?;
        if r.status == SolveStatus::Infeasible {
            return Err(Error::Solver("DCA subproblem has no interior".into()));
        }
        let next = penalized(form, &r.point.selection, rho);
        if next < f {
            break;
        }
        point = r.point;
        trace.push(DcaStep { rho, iteration, objective: next, max_penalty: max_penalty(&point.selection) });
        let settled = next - f < d.objective_tol * f.abs().max(S::one());
        f = next;
        if settled {
            break;
        }
    }
    Ok((point, f - start >= d.objective_tol * start.abs().max(S::one())))
}

/// Nearest binary point, made smooth and deliverable.
fn finish<S: Scalar>(form: &Formulation<S>, point: &ConvexPoint<S>) -> Result<Rounded<S>> {
    let l = form.levels;
    let reference: Vec<S> = point.selection.chunks(l).map(|c| c.iter().copied().sum()).collect();
    let mut x: Vec<usize> = point
        .selection
        .chunks(l)
        .map(|c| c.iter().filter(|&&v| v >= S::lit(0.5)).count().clamp(1, l))
        .collect();
    form.smooth_down(&mut x);
    let alloc = form.allocation_of(point);
    if form.delivers(&as_levels(&x), &alloc) {
        Ok(Rounded { x, allocation: alloc })
    } else {
        repair(form, x, &reference)
    }
}

pub(crate) fn run_dc<S: Scalar>(
    method: Method,
    inst: &ProblemInstance<S>,
    form: &Formulation<S>,
    settings: &SolveSettings<S>,
    start: Instant,
) -> Result<SolveOutcome<S>> {
    let Some(relaxed) = relax(form, settings)? else {
        return degenerate(method, inst, form, settings, start);
    };
    let (l, nb, d) = (form.levels, form.block_count(), settings.dca);
    // staircase lift of the relaxed levels
    let mut point = ConvexPoint {
        selection: (0..nb)
            .flat_map(|b| (0..l).map(move |k| (b, k)))
            .map(|(b, k)| (relaxed.levels[b] - S::of_usize(k)).max(S::zero()).min(S::one()))
            .collect(),
        time_share: relaxed.point.time_share.clone(),
        energy_share: relaxed.point.energy_share.clone(),
    };
    let mut trace = Vec::new();
    let mut rho = d.rho_init;
    let mut stalled = 0;
    loop {
        let (next, moved) = stage(form, settings, point, rho, &mut trace)?;
        point = next;
        stalled = if moved { 0 } else { stalled + 1 };
        if max_penalty(&point.selection) <= d.binary_tol || rho >= d.rho_max || stalled >= d.stall_stages {
            break;
        }
        rho = (rho * d.rho_growth).min(d.rho_max);
    }
    if max_penalty(&point.selection) > d.binary_tol {
        // A level share above one half in a group at capacity is a critical
        // point for every penalty weight; restart from its rounding.
        let rounded = finish(form, &point)?;
        point = ConvexPoint {
            selection: rounded.x.iter().flat_map(|&x| (0..l).map(move |k| if k < x { S::one() } else { S::zero() })).collect(),
            time_share: rounded.allocation.time().iter().map(|&t| t / form.frame).collect(),
            energy_share: rounded.allocation.energy().iter().map(|&e| e / form.energy).collect(),
        };
        point = stage(form, settings, point, rho, &mut trace)?.0;
    }
    let rounded = finish(form, &point)?;
    let extras = Extras { upper_bound: Some(relaxed.dual_bound), relaxed: Some(relaxed.levels), dca_trace: trace };
    Ok(package(method, inst, form, rounded, extras, settings, start.elapsed()))
}

/// Lift levels to binary indicators, drive them to `{0, 1}` with a growing
/// concave penalty solved by DCA, round to the nearest binary point and
/// repair any remaining infeasibility.
pub fn solve_dc<S: Scalar>(inst: &ProblemInstance<S>, settings: &SolveSettings<S>) -> Result<SolveOutcome<S>> {
    let start = Instant::now();
    run_dc(Method::Dc, inst, &Formulation::new(inst, Supply::Free), settings, start)
}

