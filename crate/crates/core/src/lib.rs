//! Cardinality-constrained mean-variance portfolio selection with linear
//! transaction costs.
//!
//! The model minimizes tracking risk `(x - x̄)ᵗ Q (x - x̄)` subject to a net
//! return floor, a trade balance, a full-investment budget, per-asset holding
//! bounds and an exact cardinality `card`. The binary selection variables are
//! handled by an exact concave penalty, which turns the problem into a DC
//! program solved by [`dca::run_dca`]. Each DCA step is a convex QP solved by
//! the in-crate interior-point solver in [`qp`].
//!
//! [`exact`] provides a support-enumeration oracle and a best-first
//! branch-and-bound used to measure how far DCA is from the true optimum.
//!
//! ```no_run
//! use dcafolio::{dca, model::Instance};
//!
//! let inst = Instance::read_from_path("assets.inst")?;
//! let result = dca::run_dca(&inst, &dca::SolverConfig::default())?;
//! if let Some(sol) = &result.solution {
//!     println!("support {:?} risk {:.6}", sol.support, sol.objective);
//! }
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

// Dense numeric kernels index several arrays per loop, and `!(a < b)` is
// the deliberate NaN-rejecting form.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod dca;
pub mod exact;
pub mod model;
pub mod qp;

pub use dca::{run_dca, DcaResult, Solution, SolverConfig};
pub use exact::{enumerate_supports, solve_exact_bb, BnbLimits, ExactResult, ExactStatus};
pub use model::{FeasibilityReport, Instance, Point};
pub use qp::{solve_qp, QpProblem, QpSettings, QpSolution, QpStatus};
