//! A coverage-guided mutational fuzzer with pluggable mutation-operator
//! scheduling: uniform (AFL), a fixed learned distribution, or Thompson
//! sampling over per-operator Beta posteriors.

pub mod analysis;
pub mod campaign;
pub mod corpus;
pub mod coverage;
pub mod error;
pub mod executor;
pub mod hash;
pub mod mutation;
pub mod scheduler;

pub use error::{Error, Result};
