//! Requirement strategies for the splitting construction over a superlow
//! oracle `C`: guessing sets `W_j` with approximations `p(j, ·)`, the
//! certification procedure, certified sets `F_e(x)`, and oracle-string local
//! functionals `Δ_e^C`/`Γ_e^C`.

use std::collections::BTreeMap;

use crate::engine::{
    BlockId, BlockReport, EventKind, ReqId, RunError, StagedSet, Strategy, TraceEvent, World,
};
use crate::model::{in_cone, Axiom, BitString, FunctionalTable, Outcome, SetView, Side};

/// How `p(j, t)` is produced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PPolicy {
    /// `p(j, t) = 1` iff `t ≥ d` and `C_{t−d}` lies in the cone of some
    /// `σ ∈ W_j` enumerated by stage `t − d`.
    TruthfulDelay { delay: u64 },
    /// Explicit bits `p(j, 0), p(j, 1), …`; the last bit repeats, and a
    /// missing row is constantly 0.
    Table { values: BTreeMap<u64, Vec<bool>> },
}

/// Evaluates `p(j, t)` from the contents of `W_j`.
pub fn p_value(policy: &PPolicy, j: u64, w: &[WEntry], t: u64, c: &StagedSet) -> bool {
    match policy {
        PPolicy::TruthfulDelay { delay } => {
            t >= *delay && {
                let u = t - delay;
                let cu = c.at(u);
                w.iter().any(|e| e.stage <= u && in_cone(&e.sigma, &cu))
            }
        }
        PPolicy::Table { values } => values
            .get(&j)
            .and_then(|row| row.get(t as usize).or(row.last()))
            .copied()
            .unwrap_or(false),
    }
}

/// `σ` enumerated into some `W_j` at `stage`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WEntry {
    pub sigma: BitString,
    pub stage: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GuessOwner {
    pub req: ReqId,
    pub input: u64,
    pub epoch: u64,
}

/// Every guessing set issued during a run. Indices are never reused.
#[derive(Clone, Debug)]
pub struct GuessingRegistry {
    sets: Vec<Vec<WEntry>>,
    owners: Vec<GuessOwner>,
    policy: PPolicy,
    q_default: u64,
    q_overrides: BTreeMap<u64, u64>,
}

impl GuessingRegistry {
    pub fn new(policy: PPolicy, q_default: u64, q_overrides: BTreeMap<u64, u64>) -> Self {
        GuessingRegistry {
            sets: Vec::new(),
            owners: Vec::new(),
            policy,
            q_default,
            q_overrides,
        }
    }

    pub fn policy(&self) -> &PPolicy {
        &self.policy
    }

    pub fn next_index(&self) -> u64 {
        self.sets.len() as u64
    }

    pub fn issue(&mut self, owner: GuessOwner) -> u64 {
        self.sets.push(Vec::new());
        self.owners.push(owner);
        self.sets.len() as u64 - 1
    }

    pub fn owner(&self, j: u64) -> Option<GuessOwner> {
        self.owners.get(j as usize).copied()
    }

    pub fn set(&self, j: u64) -> &[WEntry] {
        self.sets.get(j as usize).map_or(&[], Vec::as_slice)
    }

    pub fn q(&self, j: u64) -> u64 {
        self.q_overrides.get(&j).copied().unwrap_or(self.q_default)
    }

    fn enumerate(&mut self, j: u64, sigma: BitString, stage: u64) {
        self.sets[j as usize].push(WEntry { sigma, stage });
    }

    /// `C_s ∈ [W_j]`.
    pub fn covers(&self, j: u64, c: &dyn SetView) -> bool {
        self.set(j).iter().any(|e| in_cone(&e.sigma, c))
    }

    pub fn p(&self, j: u64, t: u64, c: &StagedSet) -> bool {
        p_value(&self.policy, j, self.set(j), t, c)
    }

    /// `X(j)` as seen at stage `at`.
    pub fn truth_x(&self, j: u64, at: u64, c: &StagedSet) -> bool {
        truth_x(self.set(j), at, c)
    }

    /// Least `t` in `from..=horizon` with `p(j, t) = 1`, with `W_j` as it
    /// stands now.
    pub fn first_p_one(&self, j: u64, from: u64, horizon: u64, c: &StagedSet) -> Option<u64> {
        match &self.policy {
            PPolicy::TruthfulDelay { delay } => {
                let d = *delay;
                self.set(j)
                    .iter()
                    .filter_map(|e| {
                        let (start, end) = cone_interval(&e.sigma, c);
                        let lo = start.max(e.stage).max(from.saturating_sub(d));
                        (lo < end).then(|| lo.checked_add(d)).flatten()
                    })
                    .min()
                    .filter(|&t| t <= horizon)
            }
            PPolicy::Table { .. } => (from..=horizon).find(|&t| self.p(j, t, c)),
        }
    }
}

/// 1 iff some `σ ∈ W_j` enumerated by `at` has `C_at ∈ [σ]`.
pub fn truth_x(w: &[WEntry], at: u64, c: &StagedSet) -> bool {
    let view = c.at(at);
    w.iter().any(|e| e.stage <= at && in_cone(&e.sigma, &view))
}

/// Stages `[start, end)` during which `C_t ∈ [σ]`; `end` is `u64::MAX` when
/// `C` never leaves, and the interval is empty when it never enters.
pub fn cone_interval(sigma: &BitString, c: &StagedSet) -> (u64, u64) {
    let mut start = 0;
    let mut end = u64::MAX;
    for (i, &bit) in sigma.bits().iter().enumerate() {
        match (bit, c.entry_stage(i as u64)) {
            (true, Some(t)) => start = start.max(t),
            (true, None) => return (u64::MAX, u64::MAX),
            (false, Some(t)) => end = end.min(t),
            (false, None) => {}
        }
    }
    (start, end)
}

/// Least `t ≥ from` with `C_t ∉ [σ]`.
pub fn cone_exit(sigma: &BitString, c: &StagedSet, from: u64) -> Option<u64> {
    let (start, end) = cone_interval(sigma, c);
    if from < start || from >= end {
        Some(from)
    } else if end == u64::MAX {
        None
    } else {
        Some(end)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resolution {
    /// The scan reached the horizon without a decision.
    Pending,
    Certified(u64),
    Refused(u64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CertificationRecord {
    pub req: ReqId,
    pub input: u64,
    pub j: u64,
    pub axiom: Axiom,
    pub started: u64,
    /// Stage `σ` entered `W_j` during this certification, if it did.
    pub enumerated_sigma_at: Option<u64>,
    pub resolution: Resolution,
}

/// `F_e(x)` together with the guessing set it currently uses.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CertifiedSet {
    pub owner: (ReqId, u64),
    pub epoch: u64,
    pub j: Option<u64>,
    /// Certified axioms with their certification stages.
    pub members: Vec<(Axiom, u64)>,
    // (σ, t): σ is known to leave the cone at t
    memo: Option<(BitString, u64)>,
}

impl CertifiedSet {
    fn new(owner: (ReqId, u64)) -> Self {
        CertifiedSet {
            owner,
            epoch: 0,
            j: None,
            members: Vec::new(),
            memo: None,
        }
    }

    fn refresh(&mut self) {
        self.epoch += 1;
        self.j = None;
        self.members.clear();
        self.memo = None;
    }
}

/// A diagonalizing axiom `Δ_e^σ(x) = k` with the certified `θ` behind it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalAxiom {
    pub theta: BitString,
    pub sigma: BitString,
    pub x: u64,
    pub k: bool,
    pub defined_at: u64,
    pub live: bool,
    /// First stage at which `D(x)` was seen to differ from `k`.
    pub diagonalized_at: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalFunctionalOracle {
    pub owner: ReqId,
    axioms: Vec<LocalAxiom>,
}

impl LocalFunctionalOracle {
    pub fn new(owner: ReqId) -> Self {
        LocalFunctionalOracle {
            owner,
            axioms: Vec::new(),
        }
    }

    pub fn axioms(&self) -> &[LocalAxiom] {
        &self.axioms
    }

    /// `Δ_e^{C_s}(x)`.
    pub fn eval(&self, x: u64, c: &dyn SetView) -> Outcome {
        self.axioms
            .iter()
            .find(|a| a.live && a.x == x && in_cone(&a.sigma, c))
            .map_or(Outcome::Divergent, |a| Outcome::Convergent {
                k: a.k,
                use_len: a.sigma.len(),
            })
    }

    /// Kills every axiom whose `σ` no longer matches `C`.
    fn live_mut(&mut self, x: u64, c: &dyn SetView) -> Option<&mut LocalAxiom> {
        self.axioms
            .iter_mut()
            .find(|a| a.live && a.x == x && in_cone(&a.sigma, c))
    }

    pub fn sweep(&mut self, c: &dyn SetView) {
        for a in &mut self.axioms {
            if a.live && !in_cone(&a.sigma, c) {
                a.live = false;
            }
        }
    }

    pub fn cancel(&mut self) {
        self.axioms.clear();
    }

    fn define(&mut self, axiom: LocalAxiom) {
        debug_assert!(!self.axioms.iter().any(|a| a.live && a.x == axiom.x));
        self.axioms.push(axiom);
    }
}

/// `eval_local` at stage `s` against the run's `C`.
pub fn eval_local(loc: &LocalFunctionalOracle, s: u64, x: u64, c: &StagedSet) -> Outcome {
    loc.eval(x, &c.at(s))
}

#[derive(Clone, Debug)]
pub struct RequirementStateRobinson {
    pub id: ReqId,
    pub table: FunctionalTable,
    pub local: LocalFunctionalOracle,
    pub certified: BTreeMap<u64, CertifiedSet>,
    /// `(s, τ_s(e))` from the last stage the loop stopped early.
    pub frontier: Option<(u64, u64)>,
    pub initializations: u64,
}

impl RequirementStateRobinson {
    pub fn new(table: FunctionalTable) -> Self {
        let id = ReqId {
            side: table.id.side,
            e: table.id.index,
        };
        RequirementStateRobinson {
            id,
            table,
            local: LocalFunctionalOracle::new(id),
            certified: BTreeMap::new(),
            frontier: None,
            initializations: 0,
        }
    }

    fn initialize(&mut self) {
        self.local.cancel();
        for cs in self.certified.values_mut() {
            cs.refresh();
        }
        self.frontier = None;
        self.initializations += 1;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PxReport {
    DefinedAlready,
    NoComputation,
    Refused,
    Acted,
}

#[derive(Clone, Debug)]
pub struct RobinsonStrategy {
    reqs: BTreeMap<ReqId, RequirementStateRobinson>,
    active: [Vec<u64>; 2],
    pub registry: GuessingRegistry,
    pub records: Vec<CertificationRecord>,
    /// `(req, x, stage)` of every scan that hit the horizon.
    pub unsettled: Vec<(ReqId, u64, u64)>,
}

impl RobinsonStrategy {
    pub fn new(
        tables: impl IntoIterator<Item = FunctionalTable>,
        registry: GuessingRegistry,
    ) -> Self {
        let mut reqs = BTreeMap::new();
        for t in tables {
            let st = RequirementStateRobinson::new(t);
            reqs.insert(st.id, st);
        }
        let active = [Side::Zero, Side::One].map(|side| {
            reqs.keys()
                .filter(|r| r.side == side)
                .map(|r| r.e)
                .collect::<Vec<_>>()
        });
        RobinsonStrategy {
            reqs,
            active,
            registry,
            records: Vec::new(),
            unsettled: Vec::new(),
        }
    }

    pub fn requirement(&self, id: ReqId) -> Option<&RequirementStateRobinson> {
        self.reqs.get(&id)
    }

    pub fn requirements(&self) -> impl Iterator<Item = &RequirementStateRobinson> {
        self.reqs.values()
    }

    /// (C.1) and (C.2) for one computation, resolved by scanning forward
    /// from `s` over the fixed `C`-schedule and `p`.
    pub fn certify(
        &mut self,
        world: &mut World,
        id: ReqId,
        x: u64,
        axiom: &Axiom,
        s: u64,
    ) -> Result<CertificationRecord, RunError> {
        let req = self.reqs.get_mut(&id).ok_or_else(|| RunError::Invariant {
            stage: s,
            detail: format!("certification for unknown requirement {id}"),
        })?;
        let cs = req
            .certified
            .entry(x)
            .or_insert_with(|| CertifiedSet::new((id, x)));
        let owner = GuessOwner {
            req: id,
            input: x,
            epoch: cs.epoch,
        };
        let j = match cs.j {
            Some(j) => j,
            None => {
                let j = self.registry.issue(owner);
                cs.j = Some(j);
                j
            }
        };
        if self.registry.owner(j) != Some(owner) {
            return Err(RunError::Invariant {
                stage: s,
                detail: format!("stale guessing set W_{j} for {id}({x})"),
            });
        }
        let sigma = axiom.sigma.clone().unwrap_or_default();
        let c = &world.c;
        let mut enumerated_sigma_at = None;
        if !self.registry.covers(j, &c.at(s)) {
            self.registry.enumerate(j, sigma.clone(), s);
            enumerated_sigma_at = Some(s);
            world.emit(
                TraceEvent::new(s, EventKind::Enumerate)
                    .with("set", "W")
                    .with("j", j)
                    .with("sigma", &sigma)
                    .with("req", id)
                    .with("input", x),
            );
        }
        let c = &world.c;
        let exit = cone_exit(&sigma, c, s).filter(|&t| t <= world.horizon);
        let hit = self.registry.first_p_one(j, s, world.horizon, c);
        let resolution = match (exit, hit) {
            (Some(t), Some(u)) if t <= u => Resolution::Refused(t),
            (Some(t), None) => Resolution::Refused(t),
            (_, Some(u)) => Resolution::Certified(u),
            (None, None) => Resolution::Pending,
        };
        let base = |kind| {
            TraceEvent::new(s, kind)
                .with("req", id)
                .with("input", x)
                .with("j", j)
                .with("theta", &axiom.theta)
                .with("sigma", &sigma)
                .with("k", axiom.k as u8)
                .with("from", s)
        };
        let event = match resolution {
            Resolution::Certified(t) => base(EventKind::Certify).with("at", t),
            Resolution::Refused(t) => base(EventKind::RefuseCertify)
                .with("at", t)
                .with("reason", "exit"),
            Resolution::Pending => base(EventKind::RefuseCertify).with("reason", "horizon"),
        };
        world.emit(event);
        let record = CertificationRecord {
            req: id,
            input: x,
            j,
            axiom: axiom.clone(),
            started: s,
            enumerated_sigma_at,
            resolution,
        };
        self.records.push(record.clone());
        Ok(record)
    }

    /// (Px.1)–(Px.2b) for input `x` at stage `s`.
    pub fn run_px(
        &mut self,
        world: &mut World,
        id: ReqId,
        x: u64,
        s: u64,
    ) -> Result<PxReport, RunError> {
        let Some(req) = self.reqs.get_mut(&id) else {
            return Ok(PxReport::NoComputation);
        };
        let c = world.c.at(s);
        let d_x = world.d.at(s).contains(x);
        let local = req.local.eval(x, &c);
        let oracle = world.side_set(id.side).at(s);
        let computation = req
            .table
            .applicable(s, &oracle, Some(&c), x)
            .filter(|ta| ta.axiom.k == d_x)
            .map(|ta| ta.axiom.clone());
        let Some(axiom) = computation else {
            if let Some(ax) = req.local.live_mut(x, &c) {
                if ax.k != d_x && ax.diagonalized_at.is_none() {
                    ax.diagonalized_at = Some(s);
                    world.emit(
                        TraceEvent::new(s, EventKind::Diagonalize)
                            .with("req", id)
                            .with("input", x)
                            .with("k", ax.k as u8)
                            .with("sigma", &ax.sigma),
                    );
                }
            }
            return Ok(PxReport::NoComputation);
        };
        if local.value().is_some() {
            return Ok(PxReport::DefinedAlready);
        }
        if axiom.use_len() as u64 >= s {
            return Ok(PxReport::NoComputation);
        }
        let sigma = axiom.sigma.clone().unwrap_or_default();
        if let Some((memo_sigma, t)) = req.certified.get(&x).and_then(|cs| cs.memo.as_ref()) {
            if *memo_sigma == sigma && s < *t {
                return Ok(PxReport::Refused);
            }
        }
        let record = self.certify(world, id, x, &axiom, s)?;
        let req = self.reqs.get_mut(&id).expect("requirement exists");
        let cs = req
            .certified
            .get_mut(&x)
            .expect("certify creates the entry");
        match record.resolution {
            Resolution::Certified(_) => {
                cs.members.push((axiom.clone(), s));
                req.local.define(LocalAxiom {
                    theta: axiom.theta.clone(),
                    sigma: sigma.clone(),
                    x,
                    k: axiom.k,
                    defined_at: s,
                    live: true,
                    diagonalized_at: None,
                });
                world.emit(
                    TraceEvent::new(s, EventKind::DefineLocal)
                        .with("req", id)
                        .with("input", x)
                        .with("k", axiom.k as u8)
                        .with("sigma", &sigma)
                        .with("theta", &axiom.theta),
                );
                Ok(PxReport::Acted)
            }
            Resolution::Refused(t) => {
                cs.memo = Some((sigma, t));
                Ok(PxReport::Refused)
            }
            Resolution::Pending => {
                cs.memo = Some((sigma, u64::MAX));
                self.unsettled.push((id, x, s));
                Ok(PxReport::Refused)
            }
        }
    }

    /// The `P_e` loop over `x = 0, 1, …`. Returns whether some `P_e(x)` acted.
    pub fn run_requirement(
        &mut self,
        world: &mut World,
        id: ReqId,
        s: u64,
    ) -> Result<bool, RunError> {
        let Some(req) = self.reqs.get_mut(&id) else {
            return Ok(false);
        };
        req.local.sweep(&world.c.at(s));
        let mut acted = false;
        let mut x = 0;
        let stop = loop {
            if x == s {
                break s;
            }
            match self.run_px(world, id, x, s)? {
                PxReport::DefinedAlready => {}
                PxReport::Acted => acted = true,
                PxReport::NoComputation | PxReport::Refused => {
                    let req = self.reqs.get_mut(&id).expect("requirement exists");
                    req.frontier = Some((s, x));
                    break x;
                }
            }
            x += 1;
        };
        let req = &self.reqs[&id];
        let (c, d) = (world.c.at(s), world.d.at(s));
        if let Some(y) = (0..stop).find(|&y| req.local.eval(y, &c).value() != Some(d.contains(y))) {
            return Err(RunError::Invariant {
                stage: s,
                detail: format!("{id}: Δ({y}) disagrees with D below τ = {stop}"),
            });
        }
        Ok(acted)
    }

    /// Clears and refreshes every `F_e(x)` on `side` whose certified use no
    /// longer matches `A_side`.
    pub fn apply_injury(
        &mut self,
        world: &mut World,
        side: Side,
        elem: u64,
        s: u64,
    ) -> Vec<(ReqId, u64)> {
        let mut hit = Vec::new();
        let mut out = Vec::new();
        let oracle = world.side_set(side).at(s);
        for req in self.reqs.values_mut().filter(|r| r.id.side == side) {
            for (&x, cs) in req.certified.iter_mut() {
                if cs.members.iter().any(|(a, _)| !in_cone(&a.theta, &oracle)) {
                    out.push(
                        TraceEvent::new(s, EventKind::Injury)
                            .with("req", req.id)
                            .with("input", x)
                            .with("j", cs.j.map_or("none".to_string(), |j| j.to_string()))
                            .with("elem", elem),
                    );
                    cs.refresh();
                    hit.push((req.id, x));
                }
            }
        }
        for e in out {
            world.emit(e);
        }
        hit
    }
}

impl Strategy for RobinsonStrategy {
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
        let mut report = BlockReport::default();
        for &e in members {
            let id = ReqId {
                side: block.side,
                e,
            };
            if self.run_requirement(world, id, s)? {
                report.acted = true;
                world.emit(
                    TraceEvent::new(s, EventKind::Act)
                        .with("req", id)
                        .with("block", block)
                        .with("how", "certify"),
                );
            }
        }
        if report.acted {
            report.restrained = true;
            world.blocks.set_restraint(block, s as i64);
            world.emit(
                TraceEvent::new(s, EventKind::RestraintSet)
                    .with("block", block)
                    .with("value", s),
            );
        }
        Ok(report)
    }

    fn on_initialize(&mut self, world: &mut World, floor: u64, _s: u64) {
        for req in self.reqs.values_mut() {
            if world.covered_by(req.id, floor) {
                req.initialize();
            }
        }
    }

    fn after_route(&mut self, world: &mut World, side: Side, x: u64, s: u64) {
        self.apply_injury(world, side, x, s);
    }
}
