//! The construction chassis shared by both splitting constructions.
//!
//! A stage runs the environment's enumerations first, then Part I (odd
//! stages, routing the `B`-arrival) or Part II (even stages, block
//! strategies delegated to a [`Strategy`]), and always ends with Part III,
//! the priority-assignment update.

pub mod assign;
pub mod block;
pub mod trace;

use thiserror::Error;

use crate::model::{EnumerationSchedule, Role, SetView, Side};
pub use assign::{AssignmentError, BlockIntervals, PriorityAssignment, UpdateRecord};
pub use block::{
    priority_order, route_element, threatens, BlockId, BlockState, BlockTable, ReqId, Routing,
};
pub use trace::{EventKind, Trace, TraceEvent, TraceParseError};

const NEVER: u64 = u64::MAX;

/// A c.e. set being enumerated during a run, with dense stage lookups.
#[derive(Clone, Debug)]
pub struct StagedSet {
    role: Role,
    stage_of: Vec<u64>,
    order: Vec<(u64, u64)>,
}

impl StagedSet {
    pub fn new(role: Role) -> Self {
        StagedSet {
            role,
            stage_of: Vec::new(),
            order: Vec::new(),
        }
    }

    pub fn from_schedule(sched: &EnumerationSchedule) -> Self {
        let mut out = StagedSet::new(sched.role());
        for (s, e) in sched.entries() {
            out.insert(s, e);
        }
        out
    }

    /// Returns false if the element was already present.
    pub fn insert(&mut self, stage: u64, element: u64) -> bool {
        let idx = element as usize;
        if idx >= self.stage_of.len() {
            self.stage_of.resize(idx + 1, NEVER);
        }
        if self.stage_of[idx] != NEVER {
            return false;
        }
        self.stage_of[idx] = stage;
        self.order.push((stage, element));
        true
    }

    pub fn entry_stage(&self, element: u64) -> Option<u64> {
        match self.stage_of.get(element as usize) {
            Some(&s) if s != NEVER => Some(s),
            _ => None,
        }
    }

    pub fn at(&self, stage: u64) -> StagedView<'_> {
        StagedView { set: self, stage }
    }

    pub fn arrivals_at(&self, stage: u64) -> impl Iterator<Item = u64> + '_ {
        self.order
            .iter()
            .filter(move |&&(s, _)| s == stage)
            .map(|&(_, e)| e)
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> &[(u64, u64)] {
        &self.order
    }

    pub fn to_schedule(&self) -> EnumerationSchedule {
        let mut sched = EnumerationSchedule::new(self.role);
        for &(s, e) in &self.order {
            // Roles other than B carry no stage convention, and B is only
            // built from validated schedules.
            let _ = sched.insert(s, e);
        }
        sched
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StagedView<'a> {
    set: &'a StagedSet,
    stage: u64,
}

impl SetView for StagedView<'_> {
    fn contains(&self, n: u64) -> bool {
        self.set.entry_stage(n).is_some_and(|t| t <= self.stage)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RunError {
    #[error("stage {stage}: {source}")]
    Assignment {
        stage: u64,
        #[source]
        source: AssignmentError,
    },
    #[error("stage {stage}: invariant violated: {detail}")]
    Invariant { stage: u64, detail: String },
    #[error("stages must run in order: expected {expected}, got {got}")]
    OutOfOrder { expected: u64, got: u64 },
}

/// Source of `D`-enumerations. Reactive sources may read the trace emitted
/// so far, and nothing else.
pub trait Environment {
    fn d_arrivals(&mut self, stage: u64, trace: &Trace) -> Vec<u64>;
}

/// Shared, strategy-independent construction state.
#[derive(Clone, Debug)]
pub struct World {
    pub horizon: u64,
    pub b: StagedSet,
    pub c: StagedSet,
    pub d: StagedSet,
    pub a0: StagedSet,
    pub a1: StagedSet,
    pub assignment: PriorityAssignment,
    pub blocks: BlockTable,
    pub trace: Trace,
    initiator: Option<BlockId>,
}

impl World {
    pub fn new(horizon: u64, b: &EnumerationSchedule, c: &EnumerationSchedule) -> Self {
        World {
            horizon,
            b: StagedSet::from_schedule(b),
            c: StagedSet::from_schedule(c),
            d: StagedSet::new(Role::D),
            a0: StagedSet::new(Role::A0),
            a1: StagedSet::new(Role::A1),
            assignment: PriorityAssignment::new(horizon + 1),
            blocks: BlockTable::new(),
            trace: Trace::new(),
            initiator: None,
        }
    }

    /// `A0` or `A1`.
    pub fn side_set(&self, side: Side) -> &StagedSet {
        match side {
            Side::Zero => &self.a0,
            Side::One => &self.a1,
        }
    }

    pub fn emit(&mut self, event: TraceEvent) {
        self.trace.push(event);
    }

    /// Block currently holding requirement `req`.
    pub fn block_of(&self, req: ReqId) -> BlockId {
        BlockId {
            side: req.side,
            index: self.assignment.block_of(req.side, req.e),
        }
    }

    /// Whether `req` sits in a block of priority order at least `floor`.
    pub fn covered_by(&self, req: ReqId, floor: u64) -> bool {
        self.block_of(req).order() >= floor
    }

    /// Initialized block of least order this stage, if any.
    pub fn initiator(&self) -> Option<BlockId> {
        self.initiator
    }
}

/// Summary of one eligible block's Part II pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BlockReport {
    /// Some member acted; lower-priority blocks must be initialized.
    pub acted: bool,
    /// The block restraint was (re)set this stage.
    pub restrained: bool,
}

/// A requirement strategy plugged into the chassis.
pub trait Strategy {
    /// Indices of requirements on `side` that have a functional, ascending.
    fn active(&self, side: Side) -> &[u64];

    /// Part II for one eligible block; `members` lists its active members.
    fn run_block(
        &mut self,
        world: &mut World,
        block: BlockId,
        members: &[u64],
        s: u64,
    ) -> Result<BlockReport, RunError>;

    /// Cancel every requirement currently in a block of order `≥ floor`.
    fn on_initialize(&mut self, world: &mut World, floor: u64, s: u64);

    /// Called after Part I puts `x` into the set on `side`.
    fn after_route(&mut self, _world: &mut World, _side: Side, _x: u64, _s: u64) {}
}

/// Drives stages `0..=horizon` for one strategy.
pub struct Engine<S: Strategy> {
    pub world: World,
    pub strategy: S,
    env: Box<dyn Environment + Send>,
    next_stage: u64,
}

impl<S: Strategy> Engine<S> {
    pub fn new(world: World, strategy: S, env: Box<dyn Environment + Send>) -> Self {
        Engine {
            world,
            strategy,
            env,
            next_stage: 0,
        }
    }

    pub fn next_stage(&self) -> u64 {
        self.next_stage
    }

    pub fn finished(&self) -> bool {
        self.next_stage > self.world.horizon
    }

    /// Runs every remaining stage.
    pub fn run_to_horizon(&mut self) -> Result<(), RunError> {
        while !self.finished() {
            self.run_stage(self.next_stage)?;
        }
        Ok(())
    }

    pub fn run_stage(&mut self, s: u64) -> Result<(), RunError> {
        if s != self.next_stage {
            return Err(RunError::OutOfOrder {
                expected: self.next_stage,
                got: s,
            });
        }
        self.world.initiator = None;
        self.enumerate_environment(s);
        if s % 2 == 1 {
            let arrival = self.world.b.arrivals_at(s).next();
            if let Some(x) = arrival {
                self.part_one(x, s);
            }
        } else {
            self.part_two(s)?;
        }
        self.part_three(s)?;
        self.next_stage += 1;
        Ok(())
    }

    fn enumerate_environment(&mut self, s: u64) {
        let w = &mut self.world;
        let mut b: Vec<u64> = w.b.arrivals_at(s).collect();
        b.sort_unstable();
        for x in b {
            w.emit(
                TraceEvent::new(s, EventKind::Enumerate)
                    .with("set", "B")
                    .with("elem", x),
            );
        }
        let mut c: Vec<u64> = w.c.arrivals_at(s).collect();
        c.sort_unstable();
        for x in c {
            w.emit(
                TraceEvent::new(s, EventKind::Enumerate)
                    .with("set", "C")
                    .with("elem", x),
            );
        }
        let mut d = self.env.d_arrivals(s, &w.trace);
        d.sort_unstable();
        d.dedup();
        for x in d {
            if w.d.insert(s, x) {
                w.emit(
                    TraceEvent::new(s, EventKind::Enumerate)
                        .with("set", "D")
                        .with("elem", x),
                );
            }
        }
    }

    fn part_one(&mut self, x: u64, s: u64) {
        let routing = route_element(x, &self.world.blocks);
        match routing.into {
            Side::Zero => self.world.a0.insert(s, x),
            Side::One => self.world.a1.insert(s, x),
        };
        let block = routing
            .threatened
            .map_or_else(|| "none".to_string(), |b| b.to_string());
        let to = match routing.into {
            Side::Zero => "A0",
            Side::One => "A1",
        };
        self.world.emit(
            TraceEvent::new(s, EventKind::Route)
                .with("elem", x)
                .with("to", to)
                .with("block", block),
        );
        self.strategy
            .after_route(&mut self.world, routing.into, x, s);
        if let Some(target) = routing.initialize {
            self.initialize_block(target, s, "route");
        }
    }

    /// Cancels `target` and every block of larger priority order.
    pub fn initialize_block(&mut self, target: BlockId, s: u64, cause: &str) {
        self.world.emit(
            TraceEvent::new(s, EventKind::Initialize)
                .with("block", target)
                .with("cause", cause),
        );
        self.world.blocks.initialize_from(target, s);
        self.strategy
            .on_initialize(&mut self.world, target.order(), s);
        self.world.initiator = Some(match self.world.initiator {
            Some(prev) if prev.order() <= target.order() => prev,
            _ => target,
        });
    }

    /// Blocks that contain an active requirement, in priority order, up to and
    /// including the first block holding `P_s` or `Q_s`.
    fn eligible_blocks(&self, s: u64) -> Vec<(BlockId, Vec<u64>)> {
        let pa = &self.world.assignment;
        let stop = BlockId::lambda(pa.block_of(Side::Zero, s))
            .order()
            .min(BlockId::upsilon(pa.block_of(Side::One, s)).order());
        let mut out: Vec<(BlockId, Vec<u64>)> = Vec::new();
        for side in [Side::Zero, Side::One] {
            for &e in self.strategy.active(side) {
                let block = BlockId {
                    side,
                    index: pa.block_of(side, e),
                };
                if block.order() > stop {
                    break;
                }
                match out.iter_mut().find(|(b, _)| *b == block) {
                    Some((_, members)) => members.push(e),
                    None => out.push((block, vec![e])),
                }
            }
        }
        out.sort_by_key(|(b, _)| b.order());
        out
    }

    fn part_two(&mut self, s: u64) -> Result<(), RunError> {
        for (block, members) in self.eligible_blocks(s) {
            let report = self
                .strategy
                .run_block(&mut self.world, block, &members, s)?;
            if report.acted {
                self.initialize_block(block.next(), s, "act");
                break;
            }
        }
        Ok(())
    }

    fn part_three(&mut self, s: u64) -> Result<(), RunError> {
        let initiator = self.world.initiator;
        let record = self
            .world
            .assignment
            .update(s, initiator)
            .map_err(|source| RunError::Assignment { stage: s, source })?;
        let event = TraceEvent::new(s, EventKind::AssignmentUpdate);
        let event = match record {
            None => event.with("initiator", "none"),
            Some(r) => event
                .with("initiator", r.initiator)
                .with("tail", r.tail)
                .with("shift", r.shift),
        };
        self.world.emit(event);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quiet;

    impl Environment for Quiet {
        fn d_arrivals(&mut self, _: u64, _: &Trace) -> Vec<u64> {
            Vec::new()
        }
    }

    /// Strategy whose listed requirements act on the listed stages.
    #[derive(Default)]
    struct Scripted {
        active: [Vec<u64>; 2],
        acts: Vec<(u64, ReqId)>,
        canceled: Vec<(u64, u64)>,
        visited: Vec<(u64, BlockId)>,
    }

    impl Strategy for Scripted {
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
            self.visited.push((s, block));
            let acted = members.iter().any(|&e| {
                self.acts.contains(&(
                    s,
                    ReqId {
                        side: block.side,
                        e,
                    },
                ))
            });
            if acted {
                world.blocks.set_restraint(block, s as i64);
            }
            Ok(BlockReport {
                acted,
                restrained: acted,
            })
        }

        fn on_initialize(&mut self, _: &mut World, floor: u64, s: u64) {
            self.canceled.push((s, floor));
        }
    }

    fn engine(b: &[(u64, u64)], strat: Scripted, h: u64) -> Engine<Scripted> {
        let b = EnumerationSchedule::from_entries(Role::B, b.iter().copied()).unwrap();
        let c = EnumerationSchedule::new(Role::C);
        Engine::new(World::new(h, &b, &c), strat, Box::new(Quiet))
    }

    #[test]
    fn stage_zero_visits_only_lambda_zero() {
        let strat = Scripted {
            active: [vec![0, 1, 2], vec![0, 1]],
            ..Default::default()
        };
        let mut eng = engine(&[], strat, 4);
        eng.run_stage(0).unwrap();
        assert_eq!(eng.strategy.visited, vec![(0, BlockId::lambda(0))]);
        let kinds: Vec<_> = eng.world.trace.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![EventKind::AssignmentUpdate]);
    }

    #[test]
    fn odd_stage_without_arrival_only_updates() {
        let mut eng = engine(&[], Scripted::default(), 4);
        eng.run_stage(0).unwrap();
        eng.run_stage(1).unwrap();
        assert_eq!(eng.world.trace.len(), 2);
        assert!(eng
            .world
            .trace
            .iter()
            .all(|e| e.kind == EventKind::AssignmentUpdate));
    }

    #[test]
    fn acting_in_lambda_zero_initializes_from_upsilon_zero() {
        let strat = Scripted {
            active: [vec![0], vec![0]],
            acts: vec![(2, ReqId::p(0))],
            ..Default::default()
        };
        let mut eng = engine(&[], strat, 4);
        eng.run_to_horizon().unwrap();
        assert_eq!(eng.strategy.canceled, vec![(2, 1)]);
        assert_eq!(eng.strategy.visited[1], (2, BlockId::lambda(0)));
        assert_eq!(eng.strategy.visited[3], (4, BlockId::upsilon(0)));
        let upd = eng
            .world
            .trace
            .iter()
            .find(|e| e.stage == 2 && e.kind == EventKind::AssignmentUpdate)
            .unwrap();
        assert_eq!(upd.get("initiator"), Some("U:0"));
        assert_eq!(upd.get("tail"), Some("0"));
    }

    #[test]
    fn unthreatened_arrival_goes_to_a0() {
        let mut eng = engine(&[(1, 3)], Scripted::default(), 2);
        eng.run_to_horizon().unwrap();
        assert_eq!(eng.world.a0.entry_stage(3), Some(1));
        let lines: Vec<String> = eng.world.trace.iter().map(|e| e.to_string()).collect();
        assert_eq!(
            lines,
            vec![
                "stage=0\tkind=assignment-update\tinitiator=none",
                "stage=1\tkind=enumerate\telem=3\tset=B",
                "stage=1\tkind=route\tblock=none\telem=3\tto=A0",
                "stage=1\tkind=assignment-update\tinitiator=none",
                "stage=2\tkind=assignment-update\tinitiator=none",
            ]
        );
    }

    #[test]
    fn threatened_arrival_is_diverted() {
        let strat = Scripted {
            active: [vec![0], vec![]],
            acts: vec![(0, ReqId::p(0))],
            ..Default::default()
        };
        let mut eng = engine(&[(1, 0)], strat, 2);
        eng.run_to_horizon().unwrap();
        assert_eq!(eng.world.a1.entry_stage(0), Some(1));
        // stage 0: act initializes from Υ(0); stage 1: route initializes Υ(0)
        assert_eq!(eng.strategy.canceled, vec![(0, 1), (1, 1)]);
    }

    #[test]
    fn stages_must_be_sequential() {
        let mut eng = engine(&[], Scripted::default(), 4);
        assert_eq!(
            eng.run_stage(1),
            Err(RunError::OutOfOrder {
                expected: 0,
                got: 1
            })
        );
    }

    #[test]
    fn double_initialization_keeps_least_order() {
        let mut eng = engine(&[], Scripted::default(), 4);
        eng.initialize_block(BlockId::upsilon(1), 0, "act");
        eng.initialize_block(BlockId::lambda(1), 0, "act");
        eng.initialize_block(BlockId::lambda(2), 0, "act");
        assert_eq!(eng.world.initiator(), Some(BlockId::lambda(1)));
    }
}
