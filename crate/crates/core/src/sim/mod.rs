//! Scenario generation and Monte Carlo estimation.

mod estimate;
mod path;
pub mod rng;

pub use estimate::{
    mc_estimate, mc_estimate_buckets, mc_estimate_crn, mc_estimate_indexed, mc_estimate_worlds, Accumulator, CrnEstimate, EstimatorStats,
    PairComparison, SimSettings,
};
pub(crate) use estimate::map_batches;
pub use path::{PathGenerator, ScenarioPath};
