//! Quality selection and TDMA time/energy allocation for multicasting tiled
//! 360° video to several users at several quality levels.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`, and the [`f32`] module to `f32`.

pub mod convex;
pub mod error;
pub mod problem;
pub mod scalar;
pub mod scenario;
pub mod sim;
pub mod solvers;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use scenario::{build_partition, gamma, tiles_for_view, FovSpec, MulticastPartition, RequestProfile, TileIndex, TilingGrid, ViewCenter};
pub use sim::{run_sweep, ChannelModel, NoiseModel, Preset, SweepParam, SweepRecord};
pub use solvers::{oracle_exhaustive, solve, Method, OracleCaps};

pub type QualityLadder = scenario::QualityLadder<f64>;
pub type ProblemInstance = problem::ProblemInstance<f64>;
pub type Budgets = problem::Budgets<f64>;
pub type QualitySelection = problem::QualitySelection<f64>;
pub type Allocation = problem::Allocation<f64>;
pub type SolveSettings = solvers::SolveSettings<f64>;
pub type SolveOutcome = solvers::SolveOutcome<f64>;
pub type Scenario = sim::Scenario<f64>;
pub type SweepSpec = sim::SweepSpec<f64>;

/// The same aliases in single precision.
pub mod f32 {
    pub type QualityLadder = crate::scenario::QualityLadder<f32>;
    pub type ProblemInstance = crate::problem::ProblemInstance<f32>;
    pub type Budgets = crate::problem::Budgets<f32>;
    pub type QualitySelection = crate::problem::QualitySelection<f32>;
    pub type Allocation = crate::problem::Allocation<f32>;
    pub type SolveSettings = crate::solvers::SolveSettings<f32>;
    pub type SolveOutcome = crate::solvers::SolveOutcome<f32>;
    pub type Scenario = crate::sim::Scenario<f32>;
    pub type SweepSpec = crate::sim::SweepSpec<f32>;
}
