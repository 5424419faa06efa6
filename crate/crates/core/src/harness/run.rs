//! Running a scenario to its horizon.

use serde::Serialize;
use thiserror::Error;

use crate::engine::{Engine, RunError, Strategy, Trace, World};
use crate::model::{EnumerationSchedule, Role, Side};
use crate::robinson::{GuessingRegistry, RobinsonStrategy};
use crate::sacks::SacksStrategy;

use super::policy::environment;
use super::scenario::{Construction, Scenario};

/// End-of-run state that is not visible in the trace alone.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FinalState {
    pub horizon: u64,
    pub construction: String,
    pub a0: Vec<(u64, u64)>,
    pub a1: Vec<(u64, u64)>,
    pub d: Vec<(u64, u64)>,
    /// `(block, restraint)` for blocks still restrained at the horizon.
    pub restraints: Vec<(String, i64)>,
    /// `(requirement, input, stage)` of certification scans cut off by the
    /// horizon.
    pub unsettled: Vec<(String, u64, u64)>,
    /// `λ_H(P_e)` for `e ≤ 2H+1`.
    pub lambda: Vec<u64>,
    /// `μ_H(Q_e)` for `e ≤ 2H+1`.
    pub mu: Vec<u64>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trace: Trace,
    pub final_state: FinalState,
}

/// A run that stopped on an internal error, with everything emitted so far.
#[derive(Clone, Debug, Error)]
#[error("{error} (after {} trace events)", trace.len())]
pub struct RunFailure {
    pub error: RunError,
    pub trace: Trace,
}

fn finish(
    world: &World,
    construction: Construction,
    unsettled: Vec<(String, u64, u64)>,
) -> FinalState {
    FinalState {
        horizon: world.horizon,
        construction: construction.to_string(),
        a0: world.a0.entries().to_vec(),
        a1: world.a1.entries().to_vec(),
        d: world.d.entries().to_vec(),
        restraints: world
            .blocks
            .restrained()
            .map(|b| (b.id.to_string(), b.restraint))
            .collect(),
        unsettled,
        lambda: (0..=2 * world.horizon + 1)
            .map(|e| world.assignment.block_of(Side::Zero, e))
            .collect(),
        mu: (0..=2 * world.horizon + 1)
            .map(|e| world.assignment.block_of(Side::One, e))
            .collect(),
    }
}

fn drive<S: Strategy>(engine: &mut Engine<S>) -> Result<(), RunFailure> {
    engine.run_to_horizon().map_err(|error| RunFailure {
        error,
        trace: engine.world.trace.clone(),
    })
}

/// Executes stages `0..=H` with the scenario's construction.
pub fn run(sc: &Scenario) -> Result<RunOutput, RunFailure> {
    let env = environment(&sc.d);
    match sc.construction {
        Construction::Sacks => {
            let world = World::new(sc.horizon, &sc.b, &EnumerationSchedule::new(Role::C));
            let mut engine = Engine::new(world, SacksStrategy::new(sc.functionals.clone()), env);
            drive(&mut engine)?;
            let final_state = finish(&engine.world, sc.construction, Vec::new());
            Ok(RunOutput {
                trace: engine.world.trace,
                final_state,
            })
        }
        Construction::Robinson => {
            let world = World::new(sc.horizon, &sc.b, &sc.c);
            let registry =
                GuessingRegistry::new(sc.p_policy.clone(), sc.q_default, sc.q_overrides.clone());
            let strategy = RobinsonStrategy::new(sc.functionals.clone(), registry);
            let mut engine = Engine::new(world, strategy, env);
            drive(&mut engine)?;
            let unsettled = engine
                .strategy
                .unsettled
                .iter()
                .map(|(r, x, s)| (r.to_string(), *x, *s))
                .collect();
            let final_state = finish(&engine.world, sc.construction, unsettled);
            Ok(RunOutput {
                trace: engine.world.trace,
                final_state,
            })
        }
    }
}
