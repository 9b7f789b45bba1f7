//! Configuration-driven experiment runner writing one CSV per scenario plus a
//! JSON manifest.

mod run;
mod spec;

pub use run::{fit_slope, interpolate_crossing, run, run_with_threads, RunError, RunSummary};
pub use spec::{
    db_to_linear, validate_spec, CustomSpec, DistSpec, ExperimentSpec, NetworkSpec, OneOrMany,
    QuantizerMethod, Scenario, SpecError, SpecWarning,
};
