//! Finite-difference simulation of the isentropic compressible Navier-Stokes
//! equations with density-dependent (degenerate) viscosity, written in the
//! sound-speed variables `(c, psi, u)` so that vacuum states are admissible.
//!
//! [`picard::time_march`] advances a [`state::FluidState`]; the
//! [`diagnostics`] module measures it and [`experiment::run`] drives complete
//! experiments from a [`config::RunConfig`].

// `!(x > 0.0)` is how NaN gets rejected; index loops mirror the stencils.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checkpoint;
pub mod config;
pub mod diagnostics;
pub mod elliptic;
pub mod experiment;
pub mod grid;
pub mod krylov;
pub mod linstep;
pub mod picard;
pub mod rng;
pub mod state;
