//! Covariant approximate quantum error-correcting codes built from the
//! permutation-symmetric `|J, M>` states of `N` spin-`s` qudits.
//!
//! The crate covers
//! - exact and log-scale angular-momentum arithmetic ([`angmom`]),
//! - dense state vectors, density matrices and partial traces ([`statevec`]),
//! - d-local Kraus channels and their moment matrices ([`channels`]),
//! - Knill-Laflamme residual checks and code-inaccuracy estimates ([`codes`]),
//! - quantum Fisher information of erased probe states and phase
//!   estimators ([`metrology`]),
//! - scaling sweeps and log-log fits ([`sweep`]).

pub mod angmom;
pub mod channels;
pub mod codes;
pub mod error;
pub mod linalg;
pub mod metrology;
pub mod statevec;
pub mod sweep;

pub use angmom::{HalfInt, Ladder};
pub use error::{Error, Result};
