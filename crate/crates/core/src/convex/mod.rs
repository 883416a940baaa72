//! Log-barrier interior-point solver for the convex program family behind
//! the relaxed problem and the penalized DC subproblems.
//!
//! Variables are `blocks` selection values `x_b`, each represented either
//! directly (`Relaxed`, `x_b ∈ [1, L]`) or as the sum of `L` lifted
//! indicators (`Lifted`, `y_{b,l} ∈ [0, 1]`). Each rate row couples a linear
//! form in `x` to a time share `τ_i` and an energy share `ε_i` of the frame:
//!
//! ```text
//! Σ_b coef_ib·x_b ≤ κ_i·τ_i·log2(1 + a_i·ε_i/τ_i),   Σ τ ≤ 1,   Σ ε ≤ 1
//! ```
//!
//! where `κ_i` converts one unit of level sum into spectral efficiency and
//! `a_i` is the SNR of spending the whole energy budget over the whole frame.
//! Shares are normalized by the frame length and energy limit so that all
//! coefficients are of order one.

mod barrier;
mod linalg;
mod rate;

pub use rate::{eval_rate_constraint, RateEval};
pub(crate) use rate::perspective;

use crate::error::{domain, Result};
use crate::problem::min_energy_split;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// One variable per block in `[1, L]`.
    Relaxed,
    /// `L` variables per block in `[0, 1]`, summing to the block's level;
    /// the level floor `x_b ≥ 1` is implied.
    Lifted,
}

/// `Σ coef·x ≤ rhs` over block values.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow<S> {
    pub terms: Vec<(usize, S)>,
    pub rhs: S,
}

/// `Σ coef·x ≤ capacity·τ·log2(1 + snr·ε/τ)` for one transmission group.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow<S> {
    pub terms: Vec<(usize, S)>,
    pub capacity: S,
    pub snr: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexInstance<S> {
    pub layout: Layout,
    pub levels: usize,
    pub blocks: usize,
    /// Maximized linear objective, one coefficient per column.
    pub objective: Vec<S>,
    pub rows: Vec<LinearRow<S>>,
    /// Empty when the allocation is fixed; otherwise one row per group,
    /// each with its own `(τ_i, ε_i)` pair.
    pub rate_rows: Vec<RateRow<S>>,
}

impl<S: Scalar> ConvexInstance<S> {
    /// Columns per block.
    pub fn width(&self) -> usize {
        match self.layout {
            Layout::Relaxed => 1,
            Layout::Lifted => self.levels,
        }
    }

    pub fn columns(&self) -> usize {
        self.blocks * self.width()
    }

    /// Column bounds.
    pub fn bounds(&self) -> (S, S) {
        match self.layout {
            Layout::Relaxed => (S::one(), S::of_usize(self.levels)),
            Layout::Lifted => (S::zero(), S::one()),
        }
    }

    /// Linear rows including the implied level floors of the lifted layout.
    fn explicit(&self) -> ConvexInstance<S> {
        let mut inst = self.clone();
        if self.layout == Layout::Lifted {
            inst.rows.extend((0..self.blocks).map(|b| LinearRow { terms: vec![(b, -S::one())], rhs: -S::one() }));
        }
        inst
    }

    /// Number of inequality constraints seen by the barrier.
    pub fn constraint_count(&self) -> usize {
        let alloc = if self.rate_rows.is_empty() { 0 } else { 3 * self.rate_rows.len() + 2 };
        2 * self.columns() + self.rows.len() + alloc
    }

    /// Block values `x_b` of a column vector.
    pub fn block_values(&self, selection: &[S]) -> Vec<S> {
        selection.chunks(self.width()).map(|c| c.iter().copied().sum()).collect()
    }

    pub fn objective_value(&self, selection: &[S]) -> S {
        self.objective.iter().zip(selection).map(|(&c, &z)| c * z).sum()
    }

    /// Largest constraint violation at `point` (non-positive when feasible).
    pub fn max_violation(&self, point: &ConvexPoint<S>) -> S {
        let (lo, hi) = self.bounds();
        let x = self.block_values(&point.selection);
        let mut worst = S::neg_infinity();
        for &z in &point.selection {
            worst = worst.max(lo - z).max(z - hi);
        }
        for r in &self.rows {
            worst = worst.max(dot(&r.terms, &x) - r.rhs);
        }
        if self.layout == Layout::Lifted {
            worst = x.iter().fold(worst, |w, &v| w.max(S::one() - v));
        }
        if !self.rate_rows.is_empty() {
            for (i, r) in self.rate_rows.iter().enumerate() {
                let (tau, eps) = (point.time_share[i], point.energy_share[i]);
                let cap = if tau > S::zero() { r.capacity * perspective(r.snr, tau, eps).value } else { S::zero() };
                worst = worst.max(dot(&r.terms, &x) - cap).max(-tau).max(-eps);
            }
            worst = worst
                .max(point.time_share.iter().copied().sum::<S>() - S::one())
                .max(point.energy_share.iter().copied().sum::<S>() - S::one());
        }
        worst
    }

    fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.blocks == 0 {
            return domain("convex instance needs at least one level and one block");
        }
        if self.objective.len() != self.columns() || self.objective.iter().any(|c| !c.is_finite()) {
            return domain("objective must have one finite coefficient per column");
        }
        let ok_terms = |t: &[(usize, S)]| t.iter().all(|&(b, c)| b < self.blocks && c.is_finite());
        if self.rows.iter().any(|r| !ok_terms(&r.terms) || !r.rhs.is_finite()) {
            return domain("linear row references an unknown block or is not finite");
        }
        for (i, r) in self.rate_rows.iter().enumerate() {
            if !ok_terms(&r.terms) || r.terms.iter().any(|&(_, c)| c < S::zero()) || !r.terms.iter().any(|&(_, c)| c > S::zero()) {
                return domain(format!("rate row {} needs non-negative coefficients, at least one positive", i + 1));
            }
            if !(r.capacity > S::zero() && r.snr > S::zero() && r.capacity.is_finite() && r.snr.is_finite()) {
                return domain(format!("rate row {} needs positive finite capacity and SNR", i + 1));
            }
        }
        Ok(())
    }

    /// A strictly feasible point: every block at a common level `1 + θ`, with
    /// the minimum-energy time split over a slightly shortened frame and the
    /// energy shares inflated halfway to the budget. `θ` shrinks until the
    /// point is strictly feasible.
    pub fn interior_point(&self) -> Option<ConvexPoint<S>> {
        if self.levels < 2 {
            return None;
        }
        let span = S::of_usize(self.levels - 1);
        let mut theta = span / S::lit(2.0);
        let floor = span * S::lit(1e-10);
        let budget = S::one() - S::lit(1e-3);
        while theta > floor {
            let level = S::one() + theta;
            let x = vec![level; self.blocks];
            theta = theta / S::lit(4.0);
            if self.rows.iter().any(|r| !(dot(&r.terms, &x) < r.rhs)) {
                continue;
            }
            let (mut time_share, mut energy_share) = (Vec::new(), Vec::new());
            if !self.rate_rows.is_empty() {
                let terms: Vec<(S, S)> = self
                    .rate_rows
                    .iter()
                    .map(|r| (S::one() / r.snr, dot(&r.terms, &x) / r.capacity))
                    .collect();
                let (t, e) = min_energy_split(&terms, budget);
                let total: S = e.iter().copied().sum();
                if !(total < S::one()) || t.iter().any(|v| !(*v > S::zero())) {
                    continue;
                }
                let inflate = ((S::one() + S::one() / total) / S::lit(2.0)).min(S::lit(2.0));
                time_share = t;
                energy_share = e.into_iter().map(|v| v * inflate).collect();
            }
            let selection = match self.layout {
                Layout::Relaxed => x,
                Layout::Lifted => vec![level / S::of_usize(self.levels); self.columns()],
            };
            let point = ConvexPoint { selection, time_share, energy_share };
            if self.max_violation(&point) < S::zero() {
                return Some(point);
            }
        }
        None
    }
}

pub(crate) fn dot<S: Scalar>(terms: &[(usize, S)], x: &[S]) -> S {
    terms.iter().map(|&(b, c)| c * x[b]).sum()
}

/// Column values and, when the allocation is free, normalized time and energy shares.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPoint<S> {
    pub selection: Vec<S>,
    pub time_share: Vec<S>,
    pub energy_share: Vec<S>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings<S> {
    /// Target for stationarity and complementarity.
    pub kkt_tol: S,
    /// Absolute duality gap at which the barrier loop stops.
    pub gap_tol: S,
    /// Total Newton step budget.
    pub max_iters: usize,
    /// Initial barrier weight, relative to the largest objective coefficient.
    pub mu_init: S,
    /// Barrier weight reduction per outer iteration, in `(0, 1)`.
    pub mu_factor: S,
    /// Armijo sufficient-decrease fraction.
    pub armijo: S,
    /// Step shrink factor during backtracking, in `(0, 1)`.
    pub backtrack: S,
}

impl<S: Scalar> Default for SolverSettings<S> {
    fn default() -> Self {
        Self {
            kkt_tol: S::lit(1e-7),
            gap_tol: S::lit(1e-9),
            max_iters: 5000,
            mu_init: S::one(),
            mu_factor: S::lit(0.2),
            armijo: S::lit(0.25),
            backtrack: S::lit(0.5),
        }
    }
}

impl<S: Scalar> SolverSettings<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.kkt_tol > S::zero() && self.gap_tol > S::zero() && self.mu_init > S::zero()) {
            return domain("solver tolerances and initial barrier weight must be positive");
        }
        if !(self.mu_factor > S::zero() && self.mu_factor < S::one()) {
            return domain("barrier reduction factor must lie in (0, 1)");
        }
        if !(self.armijo > S::zero() && self.armijo < S::lit(0.5) && self.backtrack > S::zero() && self.backtrack < S::one()) {
            return domain("line-search parameters out of range");
        }
        if self.max_iters == 0 {
            return domain("iteration budget must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult<S> {
    pub point: ConvexPoint<S>,
    /// Block values `x_b`.
    pub levels: Vec<S>,
    pub objective: S,
    /// Objective plus the barrier duality gap; an upper bound on the optimum.
    pub dual_bound: S,
    pub status: SolveStatus,
    pub kkt_residual: S,
    pub iterations: usize,
    /// Objective value after each centering step.
    pub barrier_trace: Vec<S>,
}

impl<S: Scalar> SolverResult<S> {
    fn infeasible() -> Self {
        Self {
            point: ConvexPoint { selection: Vec::new(), time_share: Vec::new(), energy_share: Vec::new() },
            levels: Vec::new(),
            objective: S::neg_infinity(),
            dual_bound: S::neg_infinity(),
            status: SolveStatus::Infeasible,
            kkt_residual: S::infinity(),
            iterations: 0,
            barrier_trace: Vec::new(),
        }
    }
}

/// Maximizes the instance's objective. Infeasibility (no strictly feasible
/// start) is reported through [`SolveStatus::Infeasible`].
pub fn solve_convex<S: Scalar>(inst: &ConvexInstance<S>, settings: &SolverSettings<S>) -> Result<SolverResult<S>> {
    inst.validate()?;
    settings.validate()?;
    let inst = inst.explicit();
    let Some(start) = inst.interior_point() else {
        return Ok(SolverResult::infeasible());
    };
    Ok(barrier::run(&inst, settings, start))
}

#[cfg(test)]
mod tests;
