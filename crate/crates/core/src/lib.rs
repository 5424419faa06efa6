//! Stage-by-stage simulation of two splitting constructions for c.e. sets,
//! with a trace verifier and a scenario fuzzer.

pub mod engine;
pub mod harness;
pub mod model;
pub mod omega;
pub mod robinson;
pub mod sacks;

pub use engine::{
    BlockId, BlockTable, Engine, Environment, EventKind, PriorityAssignment, ReqId, RunError,
    Strategy, Trace, TraceEvent, World,
};
pub use model::{
    evaluate, pair, unpair, Axiom, BitString, EnumerationSchedule, FunctionalId, FunctionalTable,
    Outcome, Role, SetView, Side, TimedAxiom,
};
pub use omega::{build_change_set, limit_eval, restrict, restrict_with, ApproxTable};
pub use robinson::{GuessingRegistry, PPolicy, RobinsonStrategy};
pub use sacks::SacksStrategy;
