//! Simulation core for a two-qutrit, two-resonator autonomous error
//! correction scheme: Hilbert-space primitives, the star-code Hamiltonians,
//! Lindblad propagation, code checks, the analytic rate model and lifetime
//! fits.
//!
//! Units: time in µs, angular frequency in rad/µs. [`starmodel::MhzParams`]
//! converts from MHz.

pub mod codes;
pub mod error;
pub mod fitters;
pub mod linalg;
pub mod lindblad;
pub mod qspace;
pub mod rates;
pub mod starmodel;

pub use error::{Error, Result};
pub use linalg::C64;
pub use qspace::{ModeLayout, Operator, State};
pub use starmodel::{MhzParams, SystemParams};
