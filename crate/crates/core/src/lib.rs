//! Simulation and evolutionary search of heralded optical states for
//! interferometric phase estimation.

pub mod bayes;
pub mod cli;
pub mod error;
pub mod hilbert;
pub mod metrology;
pub mod operators;
pub mod postselect;
pub mod search;

pub use error::{Error, Result};
