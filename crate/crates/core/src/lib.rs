//! Relaxations of composite functions `phi(f(x))` built from staircase
//! expansions, their envelopes over simplotopes, and discretized MILP models.

pub mod cli;
pub mod envelope;
pub mod error;
pub mod expansion;
pub mod grid;
pub mod lp;
pub mod milp;
pub mod oracle;
pub mod simplotope;

pub use error::{Error, Result};
