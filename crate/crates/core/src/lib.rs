//! Decomposition-based control synthesis for Markov decision processes.

pub mod admm;
pub mod cli;
pub mod decomposition;
pub mod error;
pub mod gridworld;
pub mod instances;
pub mod lp;
pub mod mdp;
pub mod product;
pub mod sparse;

pub use error::{Error, Result};
