//! Inverse-integration benchmark: instance generation, solver runs, trace
//! export and the acceptance suite.

pub mod acceptance;
pub mod instance;
pub mod runner;

pub use instance::{make_instance, make_integration_operator, rmse, ExperimentSpec, Instance};
pub use runner::{run_benchmark, write_outputs, BenchConfig, BenchResult, SolverKind, SolverParams};
