//! Numerical laboratory for the 3D cubic-quintic NLS
//! `i∂ₜu + Δu = −|u|²u + |u|⁴u`.
//!
//! - [`fields`]: radial and periodic Cartesian grids, functionals, `.cqf` I/O
//! - [`groundstate`]: shooting solver for the radial ground states `P_ω`
//! - [`rescaling`]: rescaled solitons `R_ω`, mass-energy curves, landmark masses
//! - [`varmin`]: constrained energy minimization and inequality checks
//! - [`dynamics`]: Strang split-step evolution and virial diagnostics
//! - [`cli`]: command-line front end

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod fft3;
pub mod fields;
pub mod groundstate;
pub mod numerics;
pub mod ode;
pub mod random_fields;
pub mod rescaling;
pub mod varmin;

pub use error::{Error, Result};
