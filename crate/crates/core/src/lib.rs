//! Exact computation of martingale and Haar type and cotype ideal norms of
//! finite-dimensional operators.

pub mod error;
pub mod factorization;
pub mod haar;
pub mod ideal;
pub mod martingale;
pub mod norm;
pub mod sample;
pub mod scalar;
mod search;
pub mod spaces;
pub mod stepfn;

pub use error::{Error, Result};
