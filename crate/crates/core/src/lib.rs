//! Numerical core for coupled incompressible Navier–Stokes / Fokker–Planck
//! simulations of dilute FENE-type bead-spring chain polymers with
//! centre-of-mass diffusion.
//!
//! The crate is `no_std` + `alloc` when built without the default `std`
//! feature. The `parallel` feature (on by default) distributes independent
//! per-mode solves over a rayon thread pool; results are bitwise identical
//! with and without it.
//!
//! Layout:
//!
//! * [`kinetic`]: FENE potentials, Maxwellians, Rouse matrix, cut-off and
//!   entropy functions.
//! * [`config_space`]: Maxwellian-weighted collocation on the configuration
//!   ball, discrete q-gradients, Kramers stress.
//! * [`flow`]: staggered (MAC) grid on the flow domain, divergence-free
//!   velocities, Stokes-type smoothing, skew-symmetric convection.
//! * [`stepper`]: the implicit-Euler coupled step with its fixed-point loop.
//! * [`diagnostics`]: entropy, Fisher information, energy ledger and the
//!   functional inequalities checked along trajectories.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod config_space;
pub mod diagnostics;
mod error;
pub mod flow;
pub mod kinetic;
pub mod linalg;
pub mod quadrature;
pub mod stepper;

pub use error::{Error, Result};
