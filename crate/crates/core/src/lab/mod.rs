//! Configuration, initial data, decay reports, persistence and sweeps.

pub mod config;
pub mod data;
pub mod io;
pub mod report;
pub mod run;
pub mod sweep;

pub use config::{DataSpec, Family, RunConfig, VerifySpec};
pub use report::{DecayReport, DecayRow};
pub use run::{run, simulate, verify_linear, RunOutcome};
pub use sweep::{sweep, SweepResult};
