//! Selective scene text removal toolkit.

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod imagecore;
pub mod nets;
pub mod rng;
pub mod training;
pub mod synthgen;

pub use error::{Error, Result};
