//! Robust pooling-problem solvers.
//!
//! The crate covers the full pipeline from instance data to certified
//! robust solutions:
//!
//! - [`instance`] / [`solution`]: the q-formulation pooling model, its JSON
//!   format, and exact constraint evaluation.
//! - [`uncertainty`]: p-norm and distance-correlated uncertainty sets on the
//!   source concentrations, with closed-form worst-case separation.
//! - [`lp`]: a dense bounded-variable simplex used as the relaxation
//!   subsolver.
//! - [`master`] / [`solver`]: bilinear master problems and the spatial
//!   branch-and-bound engine that solves them to a relative gap.
//! - [`robust`]: the three robust strategies (duality reformulation,
//!   adaptive-tolerance cutting planes, optimal safety factor).

pub mod error;
pub mod instance;
pub mod lp;
pub mod master;
pub mod robust;
pub mod solution;
pub mod solver;
pub mod uncertainty;

#[doc(hidden)]
pub mod test_fixtures;

pub use error::{InstanceError, RobustError, SolveError, UncertaintyError};
pub use instance::{Concentrations, PoolingInstance};
pub use solution::{FeasibilityReport, Solution, TotalFlow, FEAS_TOL};
