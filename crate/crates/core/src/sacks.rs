//! Requirement strategies for the plain splitting construction: length of
//! agreement, expansionary stages, and the local functionals `Δ_e`/`Γ_e`
//! with their diagonalizing triples.

use std::collections::BTreeMap;

use crate::engine::{
    BlockId, BlockReport, EventKind, ReqId, RunError, Strategy, TraceEvent, World,
};
use crate::model::{BitString, FunctionalTable, Outcome, SetView, Side};

/// `(σ, x, k)` frozen when `Δ_e(x)` is defined.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Triple {
    pub sigma: BitString,
    pub x: u64,
    pub k: bool,
    pub defined_at: u64,
}

/// A construction-built partial map `x ↦ k`, one live triple per input.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LocalFunctionalPlain {
    values: BTreeMap<u64, Triple>,
}

impl LocalFunctionalPlain {
    pub fn get(&self, x: u64) -> Option<&Triple> {
        self.values.get(&x)
    }

    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.values.values()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cancel(&mut self) {
        self.values.clear();
    }

    fn define(&mut self, triple: Triple) {
        debug_assert!(!self.values.contains_key(&triple.x));
        self.values.insert(triple.x, triple);
    }
}

#[derive(Clone, Debug)]
pub struct RequirementStateSacks {
    pub id: ReqId,
    pub table: FunctionalTable,
    pub local: LocalFunctionalPlain,
    /// `(x, stage)` once the requirement has diagonalized.
    pub diagonalized_at: Option<(u64, u64)>,
    /// Largest length of agreement seen since the last initialization.
    /// Starts at `-1`, so a stage needs `ℓ ≥ 0` to be expansionary.
    pub best_len: i64,
    /// `(stage, ℓ)` at every expansionary stage since the last initialization.
    pub expansionary: Vec<(u64, i64)>,
    pub initializations: u64,
}

impl RequirementStateSacks {
    pub fn new(table: FunctionalTable) -> Self {
        RequirementStateSacks {
            id: ReqId {
                side: table.id.side,
                e: table.id.index,
            },
            table,
            local: LocalFunctionalPlain::default(),
            diagonalized_at: None,
            best_len: -1,
            expansionary: Vec::new(),
            initializations: 0,
        }
    }

    fn initialize(&mut self) {
        self.local.cancel();
        self.diagonalized_at = None;
        self.best_len = -1;
        self.expansionary.clear();
        self.initializations += 1;
    }
}

/// `ℓ_s(e)`: the largest `y` with `Φ_{e,s}(x)↓ = D_s(x)` for all `x ≤ y`,
/// or `-1`. Computations with use beyond `s` do not count at stage `s`.
pub fn length_of_agreement(
    table: &FunctionalTable,
    s: u64,
    oracle: &dyn SetView,
    d: &dyn SetView,
) -> i64 {
    let Some(max_x) = table.max_input() else {
        return -1;
    };
    let mut len = -1;
    for x in 0..=max_x {
        match crate::model::evaluate(table, s, oracle, None, x) {
            Outcome::Convergent { k, use_len } if use_len as u64 <= s && k == d.contains(x) => {
                len = x as i64;
            }
            _ => break,
        }
    }
    len
}

/// A stage is expansionary when `ℓ` beats every earlier record.
pub fn is_expansionary(len: i64, best_len: i64) -> bool {
    len > best_len
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionReport {
    None,
    Diagonalized(u64),
    Expansionary(i64),
}

impl ActionReport {
    pub fn acted(self) -> bool {
        !matches!(self, ActionReport::None)
    }
}

#[derive(Clone, Debug, Default)]
pub struct SacksStrategy {
    reqs: BTreeMap<ReqId, RequirementStateSacks>,
    active: [Vec<u64>; 2],
}

impl SacksStrategy {
    pub fn new(tables: impl IntoIterator<Item = FunctionalTable>) -> Self {
        let mut reqs = BTreeMap::new();
        for t in tables {
            let st = RequirementStateSacks::new(t);
            reqs.insert(st.id, st);
        }
        let active = [Side::Zero, Side::One].map(|side| {
            reqs.keys()
                .filter(|r| r.side == side)
                .map(|r| r.e)
                .collect::<Vec<_>>()
        });
        SacksStrategy { reqs, active }
    }

    pub fn requirement(&self, id: ReqId) -> Option<&RequirementStateSacks> {
        self.reqs.get(&id)
    }

    pub fn requirements(&self) -> impl Iterator<Item = &RequirementStateSacks> {
        self.reqs.values()
    }

    /// Items (ii.1)–(ii.4) for one requirement at an even stage.
    pub fn run_requirement(&mut self, world: &mut World, id: ReqId, s: u64) -> ActionReport {
        let Some(req) = self.reqs.get_mut(&id) else {
            return ActionReport::None;
        };
        if req.diagonalized_at.is_some() {
            return ActionReport::None;
        }
        let d = world.d.at(s);
        if let Some(t) = req.local.triples().find(|t| t.k != d.contains(t.x)) {
            let (x, k, sigma) = (t.x, t.k, t.sigma.to_string());
            req.diagonalized_at = Some((x, s));
            world.emit(
                TraceEvent::new(s, EventKind::Diagonalize)
                    .with("req", id)
                    .with("input", x)
                    .with("k", k as u8)
                    .with("sigma", sigma),
            );
            return ActionReport::Diagonalized(x);
        }
        let oracle = world.side_set(id.side).at(s);
        let len = length_of_agreement(&req.table, s, &oracle, &d);
        if !is_expansionary(len, req.best_len) {
            return ActionReport::None;
        }
        req.best_len = len;
        req.expansionary.push((s, len));
        let sigma = BitString::restriction(&oracle, s as usize);
        let mut events = vec![TraceEvent::new(s, EventKind::Expansionary)
            .with("req", id)
            .with("len", len)];
        for x in 0..=len as u64 {
            if req.local.get(x).is_some() {
                continue;
            }
            let k = d.contains(x);
            events.push(
                TraceEvent::new(s, EventKind::DefineLocal)
                    .with("req", id)
                    .with("input", x)
                    .with("k", k as u8)
                    .with("sigma", &sigma),
            );
            req.local.define(Triple {
                sigma: sigma.clone(),
                x,
                k,
                defined_at: s,
            });
        }
        for e in events {
            world.emit(e);
        }
        ActionReport::Expansionary(len)
    }

    /// Runs every member, then sets the block restraint to `s` if any member
    /// expanded.
    pub fn run_block_part2(
        &mut self,
        world: &mut World,
        block: BlockId,
        members: &[u64],
        s: u64,
    ) -> BlockReport {
        let mut report = BlockReport::default();
        for &e in members {
            let id = ReqId {
                side: block.side,
                e,
            };
            let action = self.run_requirement(world, id, s);
            if action.acted() {
                report.acted = true;
                let how = match action {
                    ActionReport::Diagonalized(_) => "diagonalize",
                    _ => "expand",
                };
                world.emit(
                    TraceEvent::new(s, EventKind::Act)
                        .with("req", id)
                        .with("block", block)
                        .with("how", how),
                );
            }
            if let ActionReport::Expansionary(_) = action {
                report.restrained = true;
            }
        }
        if report.restrained {
            world.blocks.set_restraint(block, s as i64);
            world.emit(
                TraceEvent::new(s, EventKind::RestraintSet)
                    .with("block", block)
                    .with("value", s),
            );
        }
        report
    }
}

impl Strategy for SacksStrategy {
    fn active(&self, side: Side) -> &[u64] {
        &self.active[side.index() as usize]
    }

    fn run_block(
        &mut self,
        world: &mut World,
        block: BlockId,
        members: &[u64],
        s: u64,
    ) -> Result<BlockReport, RunError> {
        Ok(self.run_block_part2(world, block, members, s))
    }

    fn on_initialize(&mut self, world: &mut World, floor: u64, _s: u64) {
        for req in self.reqs.values_mut() {
            if world.covered_by(req.id, floor) {
                req.initialize();
            }
        }
    }
}
