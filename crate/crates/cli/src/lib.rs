//! Command-line harness around the `tentflow` laboratory: named, fully
//! deterministic experiments that bundle the library's checks into
//! machine-readable reports.
//!
//! The library half (this crate root) exposes the experiment runner so the
//! integration tests and the binary share one code path:
//!
//! * [`config::ExperimentConfig`] — every knob of a run, loadable from a
//!   `key = value` file and overridable from the command line;
//! * [`experiments::run_experiment`] — executes one named experiment and
//!   returns a [`experiments::RunReport`];
//! * [`emit`] — JSON and CSV renderings of a report.
//!
//! All check and curve values in a report depend only on the configuration,
//! never on thread scheduling; timing entries are wall-clock and are the
//! only non-reproducible fields.

pub mod config;
pub mod emit;
pub mod experiments;
