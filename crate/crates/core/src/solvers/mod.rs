//! Quality selection and resource allocation algorithms.
//!
//! - [`solve_cr`]: continuous relaxation, then componentwise floor.
//! - [`solve_dc`]: binary lifting with a concave penalty, solved by DCA.
//! - [`baseline1`]: equal time slots and size-proportional power, selection only.
//! - [`baseline2`]: every user served by its own unicast transmission.
//! - [`upper_bound`]: optimal value of the relaxation.
//! - [`oracle_exhaustive`]: exact enumeration for small instances.

mod baselines;
mod dca;
mod formulation;
mod oracle;
mod relaxation;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

pub use baselines::{baseline1, baseline2, unicast_instance};
pub use dca::solve_dc;
pub use oracle::{oracle_exhaustive, OracleCaps, OracleResult};
pub use relaxation::{solve_cr, upper_bound};

use crate::convex::SolverSettings;
use crate::error::{Error, Result};
use crate::problem::{check_feasible, utility, Allocation, FeasibilityReport, FeasibilityTolerance, ProblemInstance, QualitySelection, SelectionMode};
use crate::scalar::Scalar;
use formulation::{as_levels, Formulation, Supply};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Cr,
    Dc,
    Baseline1Cr,
    Baseline1Dc,
    Baseline2Cr,
    Baseline2Dc,
    UpperBound,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Cr,
        Method::Dc,
        Method::Baseline1Cr,
        Method::Baseline1Dc,
        Method::Baseline2Cr,
        Method::Baseline2Dc,
        Method::UpperBound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cr => "cr",
            Method::Dc => "dc",
            Method::Baseline1Cr => "baseline1-cr",
            Method::Baseline1Dc => "baseline1-dc",
            Method::Baseline2Cr => "baseline2-cr",
            Method::Baseline2Dc => "baseline2-dc",
            Method::UpperBound => "upperbound",
        }
    }

    /// Whether the method produces a selection (everything but the bound).
    pub fn is_heuristic(self) -> bool {
        self != Method::UpperBound
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown method '{s}' (expected one of cr, dc, baseline1-cr, baseline1-dc, baseline2-cr, baseline2-dc, upperbound)")))
    }
}

/// Penalty schedule and stopping rules of the DCA.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcaSettings<S> {
    pub rho_init: S,
    pub rho_growth: S,
    pub rho_max: S,
    /// Relative change of the penalized objective that ends a stage.
    pub objective_tol: S,
    /// Largest `y·(1 − y)` accepted as binary.
    pub binary_tol: S,
    /// Iterations per penalty value.
    pub max_iters: usize,
    /// Consecutive penalty values without progress after which the DCA
    /// restarts from the rounded point.
    pub stall_stages: usize,
}

impl<S: Scalar> Default for DcaSettings<S> {
    fn default() -> Self {
        Self {
            rho_init: S::one(),
            rho_growth: S::lit(2.0),
            rho_max: S::lit(1_048_576.0),
            objective_tol: S::lit(1e-6),
            binary_tol: S::lit(1e-4),
            max_iters: 100,
            stall_stages: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveSettings<S> {
    pub convex: SolverSettings<S>,
    pub dca: DcaSettings<S>,
    pub tolerance: FeasibilityTolerance<S>,
    /// Baseline 1 splits the energy budget (instead of power) in proportion
    /// to group sizes. Off by default.
    pub baseline1_energy_split: bool,
}

impl<S: Scalar> Default for SolveSettings<S> {
    fn default() -> Self {
        Self {
            convex: SolverSettings::default(),
            dca: DcaSettings::default(),
            tolerance: FeasibilityTolerance::default(),
            baseline1_energy_split: false,
        }
    }
}

/// One DCA iterate: penalty weight, iteration within that weight (0 is the
/// starting point), penalized objective and largest `y·(1 − y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcaStep<S> {
    pub rho: S,
    pub iteration: usize,
    pub objective: S,
    pub max_penalty: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome<S> {
    pub method: Method,
    pub selection: QualitySelection<S>,
    pub allocation: Allocation<S>,
    pub utility: S,
    /// Certified bound on the relaxed optimum, when a relaxation was solved.
    pub upper_bound: Option<S>,
    /// `Σ_k Σ_{Φ_k} (x* − x)` against the relaxed solution `x*`.
    pub gap_bound: Option<S>,
    pub relaxed: Option<QualitySelection<S>>,
    pub feasibility: FeasibilityReport<S>,
    pub elapsed: Duration,
    pub dca_trace: Vec<DcaStep<S>>,
    /// The instance actually solved when it differs from the input (baseline 2).
    pub solved_instance: Option<ProblemInstance<S>>,
}

impl<S: Scalar> SolveOutcome<S> {
    /// The instance the selection and allocation refer to.
    pub fn instance<'a>(&'a self, input: &'a ProblemInstance<S>) -> &'a ProblemInstance<S> {
        self.solved_instance.as_ref().unwrap_or(input)
    }
}

/// Runs a heuristic method. The bound has no selection; use [`upper_bound`].
pub fn solve<S: Scalar>(method: Method, inst: &ProblemInstance<S>, settings: &SolveSettings<S>) -> Result<SolveOutcome<S>> {
    match method {
        Method::Cr => solve_cr(inst, settings),
        Method::Dc => solve_dc(inst, settings),
        Method::Baseline1Cr => baseline1(inst, false, settings),
        Method::Baseline1Dc => baseline1(inst, true, settings),
        Method::Baseline2Cr => baseline2(inst, false, settings),
        Method::Baseline2Dc => baseline2(inst, true, settings),
        Method::UpperBound => Err(Error::Domain("the upper bound has no selection; call upper_bound".into())),
    }
}

/// Integer block levels with their allocation, before packaging.
pub(crate) struct Rounded<S> {
    pub x: Vec<usize>,
    pub allocation: Allocation<S>,
}

/// Lowers levels until the selection is deliverable: each pass decrements
/// the block that exceeds `reference` the most among blocks of groups that
/// fail their rate requirement, then restores smoothness.
pub(crate) fn repair<S: Scalar>(form: &Formulation<S>, mut x: Vec<usize>, reference: &[S]) -> Result<Rounded<S>> {
    loop {
        form.smooth_down(&mut x);
        let levels = as_levels::<S>(&x);
        if let Some(allocation) = form.allocate(&levels) {
            return Ok(Rounded { x, allocation });
        }
        let failing: Vec<usize> = match &form.supply {
            Supply::Fixed { caps, .. } => {
                let sums = form.level_sums(&levels);
                (0..caps.len()).filter(|&i| sums[i] > caps[i]).collect()
            }
            Supply::Free => (0..form.group_terms.len()).collect(),
        };
        let mut pick: Option<(usize, S)> = None;
        for &i in &failing {
            for &(b, _) in &form.group_terms[i] {
                if x[b] > 1 {
                    let excess = levels[b] - reference[b];
                    if pick.map_or(true, |(pb, pe)| excess > pe || (excess == pe && b < pb)) {
                        pick = Some((b, excess));
                    }
                }
            }
        }
        match pick {
            Some((b, _)) => x[b] -= 1,
            None => return Err(Error::Infeasible("minimum quality cannot be delivered".into())),
        }
    }
}

/// All-ones selection, used when the relaxation has no interior.
pub(crate) fn all_ones<S: Scalar>(form: &Formulation<S>) -> Result<Rounded<S>> {
    let x = vec![1; form.block_count()];
    match form.allocate(&as_levels::<S>(&x)) {
        Some(allocation) => Ok(Rounded { x, allocation }),
        None => Err(Error::Infeasible("minimum quality cannot be delivered".into())),
    }
}

pub(crate) struct Extras<S> {
    pub upper_bound: Option<S>,
    pub relaxed: Option<Vec<S>>,
    pub dca_trace: Vec<DcaStep<S>>,
}

pub(crate) fn package<S: Scalar>(
    method: Method,
    inst: &ProblemInstance<S>,
    form: &Formulation<S>,
    rounded: Rounded<S>,
    extras: Extras<S>,
    settings: &SolveSettings<S>,
    elapsed: Duration,
) -> SolveOutcome<S> {
    let selection = form.selection(&as_levels(&rounded.x), SelectionMode::Integer);
    let value = utility(&selection, inst.profile());
    let feasibility = check_feasible(inst, &selection, &rounded.allocation, settings.tolerance);
    let relaxed = extras.relaxed.map(|xs| form.selection(&xs, SelectionMode::Relaxed));
    let gap_bound = relaxed.as_ref().map(|r| utility(r, inst.profile()) - value);
    SolveOutcome {
        method,
        selection,
        allocation: rounded.allocation,
        utility: value,
        upper_bound: extras.upper_bound,
        gap_bound,
        relaxed,
        feasibility,
        elapsed,
        dca_trace: extras.dca_trace,
        solved_instance: None,
    }
}

#[cfg(test)]
mod tests;
