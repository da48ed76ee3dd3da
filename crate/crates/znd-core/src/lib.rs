//! Front tracking for the exothermically reacting Euler equations in
//! Lagrangian coordinates,
//!
//! ```text
//! v_t - u_x = 0,  u_t + p_x = 0,  E_t + (p u)_x = q Y phi(T),  Y_t = -Y phi(T),
//! ```
//!
//! together with the Glimm and Lyapunov functionals used to measure the
//! stability of the fractional-step scheme.
//!
//! The crate is `no_std` and needs `alloc`.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod front_tracking;
pub mod functionals;
pub mod gas_dynamics;
pub mod reaction_scheme;

mod error;

pub use error::Error;
pub use front_tracking::{Family, Front, FrontSolution, Profile};
pub use functionals::{FunctionalReport, QPairLedger};
pub use gas_dynamics::{GasParams, GasState, WaveFan};
pub use reaction_scheme::{DomainSpec, SchemeConfig};

pub type Result<T> = core::result::Result<T, Error>;
