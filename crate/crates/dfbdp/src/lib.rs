//! Deep backward dynamic-programming solver for semilinear parabolic PIDEs
//! and the decoupled FBSDEs with jumps behind them.
//!
//! The pipeline: [`levy`] describes the jump measure and its quadrature,
//! [`forward`] simulates the jump-diffusion on a time grid, [`solver`] walks
//! the grid backward fitting one value network and one jump-kernel network
//! per step ([`net`]), and [`metrics`] turns trained solutions and the
//! built-in [`benchmarks`] (which carry closed forms) into error measures.
//! All randomness flows through the counter-based streams in [`rng`], which
//! is what makes every run bit-reproducible at any worker count.

// Validation guards are written `!(x > 0.0)` on purpose: unlike `x <= 0.0`
// they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod error;
pub mod forward;
pub mod levy;
pub mod metrics;
pub mod net;
pub mod rng;
pub mod solver;
