//! Maximal robust controlled invariant sets for linear systems with input
//! delay and disturbance preview, computed through a reduced-order
//! auxiliary system, plus a supervisor and closed-loop simulator.

pub mod error;
pub mod export;
pub mod invariance;
pub mod lane_keeping;
pub mod lp;
pub mod lqr;
pub mod polytope;
pub mod reduction;
pub mod signal;
pub mod supervisor;
pub mod system;

pub use error::{Error, Result};
pub use invariance::{max_invariant_set, pre, FixedPointOptions, FixedPointResult};
pub use polytope::{HPolytope, MappedSet};
pub use reduction::{compute, DelayReduction, ReducedInvariantResult, ReductionOptions, ResultBundle};
pub use system::{augment, augmented_safe_set, load_spec, AugmentedState, DelaySystemSpec, DisturbanceChannel, LinearSystem};
pub use lqr::make_gain;
pub use signal::DisturbanceSignal;
pub use supervisor::{admissible_inputs, deepest_start, project_input, simulate, Controller, SimTrace, SimulationConfig};
