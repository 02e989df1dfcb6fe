pub mod chaining;
pub mod compat;
pub mod error;
pub mod harness;
pub mod inference;
pub mod linalg;
pub mod solvers;

pub use error::{Error, Result};
