//! Command-line front end: configuration, convergence harness, and output
//! writers around the thps library.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod vtk;

pub use config::{ProblemKind, Regularization, RunConfig};
pub use error::CliError;
