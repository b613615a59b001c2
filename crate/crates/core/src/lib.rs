//! Bayesian nonparametric recovery of frequencies, cardinalities and trait levels from a
//! single-row count sketch.

pub mod cardinality;
pub mod error;
pub mod eval;
pub mod fitting;
pub mod hashing;
pub mod optimize;
pub mod quadrature;
pub mod simulate;
pub mod specialfns;
pub mod species;
pub mod traits;

pub use error::{Error, Result};
