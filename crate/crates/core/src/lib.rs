//! Trajectory planning on a non-holonomic grid lattice.
//!
//! States are (x, y, heading) cells; planning runs value iteration over a
//! time-expanded version of that lattice, so costs and policies are
//! time-dependent and "one iteration sweep" equals "one time step". The
//! sweep is built from a handful of tensor primitives (propagate through
//! transition filters, accumulate costs, pool over actions) that can run
//! either with hard min pooling (exact mode) or with a softmin relaxation
//! recorded on a tape for reverse-mode differentiation (soft mode).
//!
//! On top of the single-agent planner sit a policy backtracer that turns a
//! cost volume into a trajectory, and a cooperative optimizer that couples
//! several planners through per-agent, per-timestep visitation cost grids
//! learned by gradient descent on a shared collision objective.

pub mod coop;
pub mod error;
pub mod executor;
pub mod export;
pub mod grid;
pub mod lattice;
pub mod ops;
pub mod planner;
pub mod render;
pub mod scenario;
pub mod tape;

#[cfg(any(test, feature = "oracle"))]
pub mod oracle;

pub use coop::{CoopConfig, CoopProblem, CoopResult};
pub use error::Error;
pub use executor::{SoftTrace, Trajectory};
pub use grid::{Grid2, Grid3, Grid4};
pub use lattice::{ActionKind, Pose, TransitionModel};
pub use planner::{ExtrinsicCost, Goal, Plan, PlanMode, Planner, INF_CLAMP};
pub use scenario::Scenario;
