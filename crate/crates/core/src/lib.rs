//! Numerical laboratory for the alpha-power Gauss curvature flow of complete,
//! non-compact convex graphs.
//!
//! The crate evolves convex grid functions under
//! `u_t = (det D^2u)^alpha / (1 + |Du|^2)^(((n+2) alpha - 1)/2)`,
//! monitors the a-priori estimates that control such flows, and provides
//! exact solutions, a closed-curve approximation scheme and explicit
//! barriers for cross-checking.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barriers;
pub mod doubling;
pub mod error;
pub mod estimates;
pub mod geometry;
pub mod io;
mod ode;
pub mod oracles;
pub mod presets;
pub mod solver;

pub use error::{GcfError, Result};
pub use geometry::{compute_quantities, gradient_function, local_uniform_convexity, Domain, GraphFunction, Region};
pub use solver::{run, step, BoundaryCondition, FlowParams, FlowState, FlowTrace};
