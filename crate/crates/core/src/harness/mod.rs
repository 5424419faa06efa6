//! Scenarios, environments, runs, the trace verifier and the fuzzer.

pub mod corrupt;
pub mod fuzz;
pub mod policy;
pub mod run;
pub mod scenario;
pub mod verify;

pub use fuzz::{fuzz, generate, run_batch, FuzzOutcome, FuzzParams};
pub use run::{run, FinalState, RunFailure, RunOutput};
pub use scenario::{
    load_scenario, scenario_to_json, Construction, DSource, Scenario, ValidationError, Violation,
};
pub use verify::{verify, CheckId, CheckStatus, VerificationReport};
