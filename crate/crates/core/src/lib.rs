//! Spin-½ moment coupled to the quantized electromagnetic vacuum: closed-form
//! Markovian predictions, an exact spin ⊗ truncated-Fock solver to check them
//! against, and the numerical plumbing both rely on.

pub mod config;
pub mod error;
pub mod exact;
pub mod geometry;
pub mod markovian;
pub mod ode;
pub mod output;
pub mod quadrature;
pub mod radiation;
pub mod report;
pub mod runner;
pub mod shift;
pub mod trajectory;
pub mod units;
pub mod verify;

pub use error::{Error, Result};
