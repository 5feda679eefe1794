//! Strongly operator convex functions: construction, matrix evaluation and
//! randomized certification of the operator inequalities that characterize them.

pub mod cli;
pub mod criteria;
pub mod error;
pub mod frechet;
pub mod funcrep;
pub mod hermitian;

pub use error::{Error, Result};
