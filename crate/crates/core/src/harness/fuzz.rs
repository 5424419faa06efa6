//! Seeded scenario generator. Scenario `i` of seed `s` depends on `(s, i)`
//! only, so any single scenario can be regenerated on its own.

use std::collections::BTreeSet;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::engine::Trace;

use crate::model::{
    Axiom, BitString, EnumerationSchedule, FunctionalId, FunctionalTable, Role, Side, TimedAxiom,
};
use crate::robinson::PPolicy;

use super::run::{run, RunFailure};
use super::scenario::{Construction, DSource, Scenario};
use super::verify::{verify, VerificationReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FuzzParams {
    pub construction: Construction,
    pub min_horizon: u64,
    pub max_horizon: u64,
    pub max_functionals: usize,
    pub max_axioms: usize,
}

impl FuzzParams {
    pub fn new(construction: Construction) -> Self {
        FuzzParams {
            construction,
            min_horizon: 4,
            max_horizon: 1024,
            max_functionals: 8,
            max_axioms: 64,
        }
    }
}

fn bits(rng: &mut ChaCha8Rng, max_len: usize) -> BitString {
    let len = rng.random_range(0..=max_len);
    BitString::new((0..len).map(|_| rng.random_bool(0.4)).collect())
}

/// Elements below `small` are drawn often so that they land under restraints.
fn fresh(rng: &mut ChaCha8Rng, used: &mut BTreeSet<u64>, small: u64, large: u64) -> Option<u64> {
    for _ in 0..8 {
        let x = if rng.random_bool(0.5) {
            rng.random_range(0..small)
        } else {
            rng.random_range(0..large)
        };
        if used.insert(x) {
            return Some(x);
        }
    }
    None
}

fn schedule(role: Role, entries: Vec<(u64, u64)>) -> EnumerationSchedule {
    EnumerationSchedule::from_entries(role, entries).expect("generated schedules are valid")
}

/// Scenario number `index` of the stream for `seed`.
pub fn generate(seed: u64, index: u64, params: &FuzzParams) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let robinson = params.construction == Construction::Robinson;
    let lo = params.min_horizon.min(params.max_horizon);
    let h = rng.random_range(lo..=params.max_horizon);

    let density = rng.random_range(0.2..0.8);
    let mut used = BTreeSet::new();
    let mut b = Vec::new();
    for s in (1..=h).step_by(2) {
        if rng.random_bool(density) {
            if let Some(x) = fresh(&mut rng, &mut used, 32, 4 * h + 16) {
                b.push((s, x));
            }
        }
    }

    // churn: C moves below small uses, mostly early
    let mut c = Vec::new();
    if robinson {
        for x in 0..8 {
            if rng.random_bool(0.5) {
                let late = rng.random_bool(0.3);
                let top = if late { h } else { h.min(48) };
                c.push((rng.random_range(1..=top.max(1)), x));
            }
        }
    }

    let d = if rng.random_bool(0.5) {
        let limit = rng.random_bool(0.5).then(|| rng.random_range(1..=4));
        DSource::AntiDelta { limit }
    } else {
        let mut entries = Vec::new();
        for x in 0..8 {
            if rng.random_bool(0.25) {
                entries.push((rng.random_range(0..=h.min(64)), x));
            }
        }
        DSource::Schedule(schedule(Role::D, entries))
    };

    let mut ids = BTreeSet::new();
    let n_functionals = rng.random_range(1..=params.max_functionals.max(1));
    for _ in 0..n_functionals * 2 {
        if ids.len() == n_functionals {
            break;
        }
        let side = if rng.random_bool(0.5) {
            Side::Zero
        } else {
            Side::One
        };
        ids.insert(FunctionalId {
            side,
            index: rng.random_range(0..8),
        });
    }
    let theta_len = if robinson { 4 } else { 6 };
    let functionals = ids
        .into_iter()
        .map(|id| {
            let count = rng.random_range(1..=params.max_axioms.max(1));
            let mut axioms: Vec<TimedAxiom> = Vec::new();
            for _ in 0..count {
                let theta = bits(&mut rng, theta_len);
                let x = rng.random_range(0..6);
                let k = rng.random_bool(0.3);
                let axiom = if robinson {
                    Axiom::binary(theta, bits(&mut rng, 4), x, k)
                } else {
                    Axiom::unary(theta, x, k)
                };
                let clash = axioms.iter().any(|t| {
                    t.axiom.x == x && t.axiom.k != k && t.axiom.oracles_compatible(&axiom)
                });
                if clash || axioms.iter().any(|t| t.axiom == axiom) {
                    continue;
                }
                let stage = if rng.random_bool(0.5) {
                    0
                } else {
                    rng.random_range(0..=h.min(32))
                };
                axioms.push(TimedAxiom { stage, axiom });
            }
            FunctionalTable::new(id, axioms)
        })
        .collect();

    Scenario {
        horizon: h,
        construction: params.construction,
        b: schedule(Role::B, b),
        c: schedule(Role::C, c),
        d,
        functionals,
        p_policy: PPolicy::TruthfulDelay {
            delay: rng.random_range(1..=4),
        },
        q_default: h + 2,
        q_overrides: Default::default(),
        seed: seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index,
    }
}

/// The first `count` scenarios of the stream for `seed`.
pub fn fuzz(seed: u64, count: u64, params: &FuzzParams) -> Vec<Scenario> {
    (0..count).map(|i| generate(seed, i, params)).collect()
}

/// One fuzzed scenario with its trace and report.
#[derive(Clone, Debug)]
pub struct FuzzOutcome {
    pub index: u64,
    pub scenario: Scenario,
    pub result: Result<(Trace, VerificationReport), RunFailure>,
}

impl FuzzOutcome {
    pub fn passed(&self) -> bool {
        matches!(&self.result, Ok((_, r)) if r.passed())
    }
}

/// Generates, runs and verifies scenarios `0..count` in parallel; the result
/// is ordered by index.
pub fn run_batch(seed: u64, count: u64, params: &FuzzParams) -> Vec<FuzzOutcome> {
    (0..count)
        .into_par_iter()
        .map(|index| {
            let scenario = generate(seed, index, params);
            let result = run(&scenario).map(|out| {
                let report = verify(&scenario, &out.trace);
                (out.trace, report)
            });
            FuzzOutcome {
                index,
                scenario,
                result,
            }
        })
        .collect()
}
