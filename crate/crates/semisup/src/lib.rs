//! IO, parallel Monte Carlo and the command-line front end for
//! [`semisup_core`].

pub mod cli;
pub mod emit;
pub mod io;
pub mod parallel;

pub use semisup_core::*;
