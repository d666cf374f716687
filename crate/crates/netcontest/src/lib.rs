//! Networked Tullock contests: equilibrium computation via the per-unit-cost
//! parametrization, certification and construction of mutually beneficial
//! bilateral budget transfers, and donation-profile optimization by
//! replicator dynamics.

pub mod builder;
pub mod donation;
pub mod equilibrium;
pub mod error;
pub mod instance;
pub mod transfer;

pub use error::{Error, Result};
pub use instance::{Certificate, ContestInstance};
