//! The trace verifier. Every check is recomputed from the scenario and the
//! trace alone, with naive dense replays instead of the engine's own data
//! structures.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::engine::StagedSet;
use crate::engine::{BlockId, EventKind, ReqId, Trace, TraceEvent};
use crate::model::{evaluate, in_cone, BitString, EnumerationSchedule, Role, SetView, Side};
use crate::omega::{build_change_set, limit_eval, restrict_with, ApproxTable};
use crate::robinson::{p_value, truth_x, PPolicy, WEntry};

use super::scenario::{Construction, Scenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum CheckId {
    V1,
    V2,
    V3,
    V4,
    V5,
    V6,
    V7,
    V8,
    V9,
    V10,
    V11,
}

impl CheckId {
    pub const ALL: [CheckId; 11] = [
        CheckId::V1,
        CheckId::V2,
        CheckId::V3,
        CheckId::V4,
        CheckId::V5,
        CheckId::V6,
        CheckId::V7,
        CheckId::V8,
        CheckId::V9,
        CheckId::V10,
        CheckId::V11,
    ];

    pub fn title(self) -> &'static str {
        match self {
            CheckId::V1 => "partition of B into A0 and A1",
            CheckId::V2 => "monotone schedules and stage order",
            CheckId::V3 => "priority assignments never increase",
            CheckId::V4 => "restraint integrity",
            CheckId::V5 => "diagonalization persistence",
            CheckId::V6 => "injuries come with initialization",
            CheckId::V7 => "certification window soundness",
            CheckId::V8 => "guess approximation contract",
            CheckId::V9 => "local and global functionals agree",
            CheckId::V10 => "change-set coding of the guesses",
            CheckId::V11 => "assignment updates match the replay",
        }
    }
}

impl fmt::Display for CheckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(&format!("{self:?}"))
    }
}

impl std::str::FromStr for CheckId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CheckId::ALL
            .into_iter()
            .find(|c| c.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown check {s:?} (expected V1..V11)"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    /// `events` are zero-based indices into the trace.
    Fail {
        stage: u64,
        events: Vec<usize>,
        detail: String,
    },
    Skipped {
        reason: String,
    },
}

impl CheckStatus {
    pub fn is_fail(&self) -> bool {
        matches!(self, CheckStatus::Fail { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail { .. } => "fail",
            CheckStatus::Skipped { .. } => "skipped",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Diagnostics {
    pub max_restraint: BTreeMap<String, i64>,
    pub last_initialization: BTreeMap<String, u64>,
    /// `λ_H` and `μ_H` as `(block, first, last)` over the tracked indices.
    pub lambda: Vec<(u64, u64, u64)>,
    pub mu: Vec<(u64, u64, u64)>,
    pub actions: BTreeMap<String, u64>,
    /// Injuries per block of the injured requirement.
    pub injuries: BTreeMap<String, u64>,
    pub initializations: u64,
    pub certifications: u64,
    pub refusals: u64,
    pub diagonalizations: u64,
    /// Guessing sets whose `X(j)` still moved within the last `d` stages.
    pub unstable_guesses: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub checks: BTreeMap<CheckId, CheckStatus>,
    pub flags: Vec<String>,
    pub diagnostics: Diagnostics,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        !self.checks.values().any(CheckStatus::is_fail)
    }

    pub fn settled(&self) -> bool {
        !self.flags.iter().any(|f| f == "unsettled")
    }

    pub fn status(&self, id: CheckId) -> &CheckStatus {
        &self.checks[&id]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// `stage → element` membership read at a fixed stage.
struct At<'a> {
    map: &'a BTreeMap<u64, u64>,
    stage: u64,
}

impl SetView for At<'_> {
    fn contains(&self, n: u64) -> bool {
        self.map.get(&n).is_some_and(|&t| t <= self.stage)
    }
}

struct Failures {
    first: BTreeMap<CheckId, CheckStatus>,
}

impl Failures {
    fn fail(&mut self, id: CheckId, stage: u64, events: Vec<usize>, detail: impl Into<String>) {
        self.first.entry(id).or_insert(CheckStatus::Fail {
            stage,
            events,
            detail: detail.into(),
        });
    }

    fn skip(&mut self, id: CheckId, reason: &str) {
        self.first.entry(id).or_insert(CheckStatus::Skipped {
            reason: reason.into(),
        });
    }
}

/// Dense `λ` or `μ` over indices `0..n`, extended as singletons beyond.
#[derive(Clone)]
struct Dense(Vec<i64>);

impl Dense {
    fn get(&self, e: u64) -> i64 {
        let n = self.0.len() as u64;
        if e < n {
            self.0[e as usize]
        } else {
            self.0[n as usize - 1] + (e - (n - 1)) as i64
        }
    }
}

#[derive(Clone, Debug)]
struct Define {
    idx: usize,
    stage: u64,
    req: ReqId,
    x: u64,
    k: bool,
    sigma: BitString,
}

#[derive(Clone, Debug)]
struct Cert {
    idx: usize,
    stage: u64,
    j: u64,
    sigma: BitString,
    at: Option<u64>,
    kind: EventKind,
    reason: Option<String>,
}

fn field<T: std::str::FromStr>(ev: &TraceEvent, key: &str) -> Option<T> {
    ev.get_parsed(key)
}

/// Runs V1–V11 over a trace produced from `sc`.
pub fn verify(sc: &Scenario, trace: &Trace) -> VerificationReport {
    let h = sc.horizon;
    let n = h as usize + 2;
    let robinson = sc.construction == Construction::Robinson;
    let c_sched = if robinson {
        sc.c.clone()
    } else {
        EnumerationSchedule::new(Role::C)
    };
    let mut c_staged = StagedSet::new(Role::C);
    for (s, x) in c_sched.entries() {
        c_staged.insert(s, x);
    }
    let mut f = Failures {
        first: BTreeMap::new(),
    };
    let mut diag = Diagnostics::default();

    let mut a: [BTreeMap<u64, u64>; 2] = [BTreeMap::new(), BTreeMap::new()];
    let mut d: BTreeMap<u64, u64> = BTreeMap::new();
    let mut b_seen: BTreeMap<u64, u64> = BTreeMap::new();
    let mut c_seen: BTreeMap<u64, u64> = BTreeMap::new();
    let mut w: BTreeMap<u64, Vec<WEntry>> = BTreeMap::new();
    let mut w_owner: BTreeMap<u64, (String, String)> = BTreeMap::new();
    let mut restraints: BTreeMap<u64, i64> = BTreeMap::new();
    let mut lam = [
        Dense((0..n as i64).collect()),
        Dense((0..n as i64).collect()),
    ];
    let reqs: Vec<ReqId> = sc
        .functionals
        .iter()
        .map(|t| ReqId {
            side: t.id.side,
            e: t.id.index,
        })
        .collect();
    let mut init_stages: BTreeMap<ReqId, Vec<u64>> = BTreeMap::new();
    let mut injury_stages: BTreeMap<(ReqId, u64), Vec<u64>> = BTreeMap::new();
    let mut defines: Vec<Define> = Vec::new();
    let mut certs: Vec<Cert> = Vec::new();
    let mut diagonals: Vec<(usize, u64, ReqId, u64, bool)> = Vec::new();
    let mut unsettled = false;

    // per-stage scratch
    let mut stage: u64 = 0;
    let mut stage_open = false;
    let mut last_was_update = true;
    let mut inits: Vec<(usize, BlockId, String)> = Vec::new();
    let mut acts: Vec<BlockId> = Vec::new();
    let mut routed_next: Vec<BlockId> = Vec::new();
    let mut b_here: Vec<u64> = Vec::new();
    let mut c_here: Vec<u64> = Vec::new();
    let mut routed_here: Vec<(usize, u64)> = Vec::new();
    // (event, block that must be initialized this stage)
    let mut owed: Vec<(usize, BlockId)> = Vec::new();
    let mut injuries: Vec<(usize, ReqId)> = Vec::new();
    let mut updates = 0u64;

    let block_of = |lam: &[Dense; 2], r: ReqId| -> i64 { lam[r.side.index() as usize].get(r.e) };

    for (idx, ev) in trace.iter().enumerate() {
        // V2: stage order and framing
        if stage_open && ev.stage != stage {
            f.fail(
                CheckId::V2,
                ev.stage,
                vec![idx],
                format!("stage {stage} has no closing assignment-update"),
            );
        }
        if !stage_open {
            let expected = if updates == 0 { 0 } else { stage + 1 };
            if ev.stage != expected {
                f.fail(
                    CheckId::V2,
                    ev.stage,
                    vec![idx],
                    format!(
                        "expected an event of stage {expected}, found stage {}",
                        ev.stage
                    ),
                );
            }
            stage = ev.stage;
            stage_open = true;
            last_was_update = false;
        }
        if ev.stage > h {
            f.fail(CheckId::V2, ev.stage, vec![idx], "event beyond the horizon");
        }
        let s = stage;
        match ev.kind {
            EventKind::Enumerate => {
                let set = ev.get("set").unwrap_or("");
                let elem: Option<u64> = field(ev, "elem");
                match (set, elem) {
                    ("B", Some(x)) => {
                        if b_seen.insert(x, s).is_some() {
                            f.fail(CheckId::V2, s, vec![idx], format!("B re-enumerates {x}"));
                        }
                        b_here.push(x);
                    }
                    ("C", Some(x)) => {
                        if c_seen.insert(x, s).is_some() {
                            f.fail(CheckId::V2, s, vec![idx], format!("C re-enumerates {x}"));
                        }
                        c_here.push(x);
                    }
                    ("D", Some(x)) => {
                        if d.insert(x, s).is_some() {
                            f.fail(CheckId::V2, s, vec![idx], format!("D re-enumerates {x}"));
                        }
                    }
                    ("W", _) => {
                        let (Some(j), Some(sigma)) =
                            (field::<u64>(ev, "j"), field::<BitString>(ev, "sigma"))
                        else {
                            f.fail(CheckId::V2, s, vec![idx], "malformed W enumeration");
                            continue;
                        };
                        let owner = (
                            ev.get("req").unwrap_or("").to_string(),
                            ev.get("input").unwrap_or("").to_string(),
                        );
                        if *w_owner.entry(j).or_insert_with(|| owner.clone()) != owner {
                            f.fail(
                                CheckId::V7,
                                s,
                                vec![idx],
                                format!("W_{j} used by two owners"),
                            );
                        }
                        let list = w.entry(j).or_default();
                        if list.iter().any(|e| e.sigma == sigma) {
                            f.fail(
                                CheckId::V2,
                                s,
                                vec![idx],
                                format!("W_{j} re-enumerates {sigma}"),
                            );
                        }
                        list.push(WEntry { sigma, stage: s });
                    }
                    _ => f.fail(CheckId::V2, s, vec![idx], "malformed enumeration"),
                }
            }
            EventKind::Route => {
                let (Some(x), Some(to)) = (field::<u64>(ev, "elem"), ev.get("to")) else {
                    f.fail(CheckId::V1, s, vec![idx], "malformed route");
                    continue;
                };
                let side = match to {
                    "A0" => Side::Zero,
                    "A1" => Side::One,
                    _ => {
                        f.fail(
                            CheckId::V1,
                            s,
                            vec![idx],
                            format!("route to unknown set {to}"),
                        );
                        continue;
                    }
                };
                routed_here.push((idx, x));
                if a[0].contains_key(&x) || a[1].contains_key(&x) {
                    f.fail(CheckId::V1, s, vec![idx], format!("{x} routed twice"));
                }
                a[side.index() as usize].insert(x, s);
                // V4: recompute the routing decision
                let threatened = restraints
                    .iter()
                    .find(|&(_, &r)| (x as i64) <= r)
                    .map(|(&o, _)| BlockId::from_order(o));
                let expect_side = threatened.map_or(Side::Zero, |b| b.side.other());
                let expect_block = threatened.map_or("none".to_string(), |b| b.to_string());
                if expect_side != side || ev.get("block") != Some(expect_block.as_str()) {
                    f.fail(
                        CheckId::V4,
                        s,
                        vec![idx],
                        format!(
                            "{x} routed to {to} by {:?}; replay threatens {expect_block}",
                            ev.get("block")
                        ),
                    );
                }
                if let Some(b) = threatened {
                    routed_next.push(b.next());
                }
                for (&o, &r) in &restraints {
                    let blk = BlockId::from_order(o);
                    if blk.side == side && (x as i64) <= r {
                        owed.push((idx, blk));
                    }
                }
            }
            EventKind::Initialize => {
                let Some(target) = field::<BlockId>(ev, "block") else {
                    f.fail(CheckId::V4, s, vec![idx], "malformed initialize");
                    continue;
                };
                let cause = ev.get("cause").unwrap_or("").to_string();
                let caused = match cause.as_str() {
                    "route" => routed_next.contains(&target),
                    "act" => acts.iter().any(|b| b.next() == target),
                    _ => false,
                };
                if !caused {
                    f.fail(
                        CheckId::V4,
                        s,
                        vec![idx],
                        format!("initialization of {target} has no {cause:?} cause"),
                    );
                }
                let _ = restraints.split_off(&target.order());
                diag.last_initialization.insert(target.to_string(), s);
                diag.initializations += 1;
                inits.push((idx, target, cause));
            }
            EventKind::RestraintSet => {
                let (Some(b), Some(v)) = (field::<BlockId>(ev, "block"), field::<i64>(ev, "value"))
                else {
                    f.fail(CheckId::V4, s, vec![idx], "malformed restraint-set");
                    continue;
                };
                restraints.insert(b.order(), v);
                let m = diag.max_restraint.entry(b.to_string()).or_insert(-1);
                *m = (*m).max(v);
            }
            EventKind::Act => {
                if let Some(b) = field::<BlockId>(ev, "block") {
                    acts.push(b);
                }
                if let Some(r) = ev.get("req") {
                    *diag.actions.entry(r.to_string()).or_insert(0) += 1;
                }
            }
            EventKind::DefineLocal => {
                if robinson {
                    match (
                        field::<ReqId>(ev, "req"),
                        field::<u64>(ev, "input"),
                        field::<u8>(ev, "k"),
                        field::<BitString>(ev, "sigma"),
                    ) {
                        (Some(req), Some(x), Some(k), Some(sigma)) => defines.push(Define {
                            idx,
                            stage: s,
                            req,
                            x,
                            k: k == 1,
                            sigma,
                        }),
                        _ => f.fail(CheckId::V9, s, vec![idx], "malformed define-local"),
                    }
                }
            }
            EventKind::Certify | EventKind::RefuseCertify => {
                if ev.kind == EventKind::Certify {
                    diag.certifications += 1;
                } else {
                    diag.refusals += 1;
                }
                let reason = ev.get("reason").map(str::to_string);
                if reason.as_deref() == Some("horizon") {
                    unsettled = true;
                }
                match (field::<u64>(ev, "j"), field::<BitString>(ev, "sigma")) {
                    (Some(j), Some(sigma)) => {
                        let owner = (
                            ev.get("req").unwrap_or("").to_string(),
                            ev.get("input").unwrap_or("").to_string(),
                        );
                        if *w_owner.entry(j).or_insert_with(|| owner.clone()) != owner {
                            f.fail(
                                CheckId::V7,
                                s,
                                vec![idx],
                                format!("W_{j} used by two owners"),
                            );
                        }
                        certs.push(Cert {
                            idx,
                            stage: s,
                            j,
                            sigma,
                            at: field(ev, "at"),
                            kind: ev.kind,
                            reason,
                        })
                    }
                    _ => f.fail(CheckId::V7, s, vec![idx], "malformed certification event"),
                }
            }
            EventKind::Diagonalize => {
                diag.diagonalizations += 1;
                match (
                    field::<ReqId>(ev, "req"),
                    field::<u64>(ev, "input"),
                    field::<u8>(ev, "k"),
                ) {
                    (Some(r), Some(x), Some(k)) => diagonals.push((idx, s, r, x, k == 1)),
                    _ => f.fail(CheckId::V5, s, vec![idx], "malformed diagonalize"),
                }
            }
            EventKind::Injury => {
                let (Some(r), Some(x)) = (field::<ReqId>(ev, "req"), field::<u64>(ev, "input"))
                else {
                    f.fail(CheckId::V6, s, vec![idx], "malformed injury");
                    continue;
                };
                injuries.push((idx, r));
                injury_stages.entry((r, x)).or_default().push(s);
                let blk = BlockId {
                    side: r.side,
                    index: block_of(&lam, r).max(0) as u64,
                };
                *diag.injuries.entry(blk.to_string()).or_insert(0) += 1;
            }
            EventKind::Expansionary => {}
            EventKind::AssignmentUpdate => {
                updates += 1;
                // V1: every B-arrival of this stage was routed, nothing else
                let mut arrivals: Vec<u64> = sc.b.arrivals_at(s).collect();
                arrivals.sort_unstable();
                let mut b_sorted = b_here.clone();
                b_sorted.sort_unstable();
                if b_sorted != arrivals {
                    f.fail(
                        CheckId::V2,
                        s,
                        vec![idx],
                        "B enumerations differ from the schedule",
                    );
                }
                let mut c_arr: Vec<u64> = c_sched.arrivals_at(s).collect();
                c_arr.sort_unstable();
                c_here.sort_unstable();
                if c_here != c_arr {
                    f.fail(
                        CheckId::V2,
                        s,
                        vec![idx],
                        "C enumerations differ from the schedule",
                    );
                }
                let mut routed: Vec<u64> = routed_here.iter().map(|&(_, x)| x).collect();
                routed.sort_unstable();
                let expect: Vec<u64> = if s % 2 == 1 {
                    arrivals.clone()
                } else {
                    Vec::new()
                };
                if routed != expect {
                    let ids = routed_here.iter().map(|&(i, _)| i).chain([idx]).collect();
                    f.fail(
                        CheckId::V1,
                        s,
                        ids,
                        format!("stage {s} routes {routed:?} but B delivers {expect:?}"),
                    );
                }
                for &(i, x) in &routed_here {
                    if !sc.b.entry_stage(x).is_some_and(|t| t <= s) {
                        f.fail(CheckId::V1, s, vec![i], format!("{x} is not in B_{s}"));
                    }
                }
                // V4: every protected block that lost an element is initialized
                let least_init = inits.iter().map(|(_, b, _)| b.order()).min();
                for &(i, blk) in &owed {
                    if !least_init.is_some_and(|o| o <= blk.order()) {
                        f.fail(
                            CheckId::V4,
                            s,
                            vec![i],
                            format!("element entered the side restrained by {blk} without initialization"),
                        );
                    }
                }
                // initialization of requirements, for V5/V6/V9
                for &r in &reqs {
                    let order = 2 * block_of(&lam, r) + r.side.index() as i64;
                    if least_init.is_some_and(|o| (o as i64) <= order) {
                        init_stages.entry(r).or_default().push(s);
                    }
                }
                for &(i, r) in &injuries {
                    let order = 2 * block_of(&lam, r) + r.side.index() as i64;
                    if !least_init.is_some_and(|o| (o as i64) <= order) {
                        f.fail(
                            CheckId::V6,
                            s,
                            vec![i],
                            format!("injury to {r} without initialization of its block"),
                        );
                    }
                }
                // V11: initiator is the least initialized block
                let expect_init = inits.iter().map(|(_, b, _)| *b).min();
                let recorded = ev.get("initiator").unwrap_or("");
                let expect_str = expect_init.map_or("none".to_string(), |b| b.to_string());
                if recorded != expect_str {
                    f.fail(
                        CheckId::V11,
                        s,
                        vec![idx],
                        format!("initiator {recorded} but replay gives {expect_str}"),
                    );
                }
                if let Some(blk) = field::<BlockId>(ev, "initiator") {
                    replay_update(&mut f, &mut lam, blk, s, idx, ev);
                } else if recorded != "none" {
                    f.fail(CheckId::V11, s, vec![idx], "malformed initiator");
                }
                stage_open = false;
                last_was_update = true;
                inits.clear();
                acts.clear();
                routed_next.clear();
                b_here.clear();
                c_here.clear();
                routed_here.clear();
                owed.clear();
                injuries.clear();
            }
        }
    }
    if !last_was_update || updates != h + 1 {
        f.fail(
            CheckId::V2,
            stage,
            vec![trace.len().saturating_sub(1)],
            format!("trace covers {updates} stages, expected {}", h + 1),
        );
    }

    diag.lambda = intervals(&lam[0], n);
    diag.mu = intervals(&lam[1], n);

    let a_at = |side: Side, s: u64| At {
        map: &a[side.index() as usize],
        stage: s,
    };

    // V5
    if robinson {
        f.skip(CheckId::V5, "applies to the plain construction");
    } else {
        for &(idx, s, r, x, k) in &diagonals {
            let d_s = d.get(&x).is_some_and(|&t| t <= s);
            if d_s == k {
                f.fail(
                    CheckId::V5,
                    s,
                    vec![idx],
                    format!("{r} diagonalizes at {x} but D_{s}({x}) = {k}"),
                );
                continue;
            }
            let later = init_stages
                .get(&r)
                .is_some_and(|v| v.iter().any(|&t| t > s));
            if later {
                continue;
            }
            let Some(table) = sc.functional(r.side, r.e) else {
                f.fail(CheckId::V5, s, vec![idx], format!("{r} has no functional"));
                continue;
            };
            let phi = evaluate(table, h, &a_at(r.side, h), None, x).value();
            let d_h = d.contains_key(&x);
            if phi != Some(k) || d_h == k {
                f.fail(
                    CheckId::V5,
                    s,
                    vec![idx],
                    format!(
                        "at the horizon {r}: Φ({x}) = {phi:?}, D({x}) = {d_h}, diagonal value {k}"
                    ),
                );
            }
        }
    }

    if robinson {
        let c_at = |s: u64| c_sched.view_at(s);
        // V7
        for cert in &certs {
            let cone = |u: u64| in_cone(&cert.sigma, &c_at(u));
            match (cert.kind, cert.reason.as_deref(), cert.at) {
                (EventKind::Certify, _, Some(t)) => {
                    if t > h || t < cert.stage {
                        f.fail(
                            CheckId::V7,
                            cert.stage,
                            vec![cert.idx],
                            "resolution outside the scan",
                        );
                    } else if let Some(u) = (cert.stage..=t).find(|&u| !cone(u)) {
                        f.fail(
                            CheckId::V7,
                            cert.stage,
                            vec![cert.idx],
                            format!("C leaves [{}] at {u}, inside the window", cert.sigma),
                        );
                    } else if !p_value(
                        &sc.p_policy,
                        cert.j,
                        w.get(&cert.j).map_or(&[][..], Vec::as_slice),
                        t,
                        &c_staged,
                    ) {
                        f.fail(
                            CheckId::V7,
                            cert.stage,
                            vec![cert.idx],
                            format!("p({}, {t}) = 0 at certification", cert.j),
                        );
                    }
                }
                (EventKind::RefuseCertify, Some("exit"), Some(t)) => {
                    if t > h || t < cert.stage || cone(t) {
                        f.fail(
                            CheckId::V7,
                            cert.stage,
                            vec![cert.idx],
                            format!("refusal at {t} without C leaving [{}]", cert.sigma),
                        );
                    } else if let Some(u) = (cert.stage..t).find(|&u| !cone(u)) {
                        f.fail(
                            CheckId::V7,
                            cert.stage,
                            vec![cert.idx],
                            format!("C already left [{}] at {u}", cert.sigma),
                        );
                    }
                }
                (EventKind::RefuseCertify, Some("horizon"), _) => {
                    if let Some(u) = (cert.stage..=h).find(|&u| !cone(u)) {
                        f.fail(
                            CheckId::V7,
                            cert.stage,
                            vec![cert.idx],
                            format!(
                                "scan marked unresolved but C leaves [{}] at {u}",
                                cert.sigma
                            ),
                        );
                    }
                }
                _ => f.fail(
                    CheckId::V7,
                    cert.stage,
                    vec![cert.idx],
                    "malformed certification event",
                ),
            }
        }

        // V8 and V10
        let mut js: BTreeSet<u64> = w.keys().copied().collect();
        js.extend(certs.iter().map(|c| c.j));
        let mut rows = Vec::new();
        for &j in &js {
            let entries = w.get(&j).map_or(&[][..], Vec::as_slice);
            let p: Vec<bool> = (0..=h)
                .map(|t| p_value(&sc.p_policy, j, entries, t, &c_staged))
                .collect();
            let witness = vec![certs.iter().find(|c| c.j == j).map_or(0, |c| c.idx)];
            if p[0] {
                f.fail(CheckId::V8, 0, witness.clone(), format!("p({j}, 0) = 1"));
            }
            let changes = p.windows(2).filter(|v| v[0] != v[1]).count() as u64;
            if changes > sc.q(j) {
                f.fail(
                    CheckId::V8,
                    h,
                    witness.clone(),
                    format!("p({j}, ·) changes {changes} times, q({j}) = {}", sc.q(j)),
                );
            }
            let x_h = truth_x(entries, h, &c_staged);
            let limit_checked = match &sc.p_policy {
                PPolicy::TruthfulDelay { delay } => {
                    let lo = h.saturating_sub(*delay);
                    let stable = (lo..=h).all(|t| truth_x(entries, t, &c_staged) == x_h);
                    if !stable {
                        diag.unstable_guesses.push(j);
                    }
                    stable
                }
                PPolicy::Table { .. } => true,
            };
            if limit_checked && p[h as usize] != x_h {
                f.fail(
                    CheckId::V8,
                    h,
                    witness,
                    format!("p({j}, H) = {} but X({j}) = {x_h} at H", p[h as usize]),
                );
            }
            rows.push((p, sc.q(j).saturating_add(1)));
        }
        if rows.is_empty() {
            f.skip(CheckId::V10, "no guessing sets were issued");
        } else {
            match ApproxTable::new(h, rows) {
                Err(e) => f.fail(
                    CheckId::V10,
                    h,
                    vec![],
                    format!("guesses do not form an approximation: {e}"),
                ),
                Ok(tab) => {
                    let changes = build_change_set(&tab);
                    for m in 0..=tab.width() {
                        let coded = restrict_with(&tab, &changes, m);
                        let limit: BTreeSet<u64> =
                            (0..m).filter(|&x| limit_eval(&tab, x)).collect();
                        if coded != limit {
                            f.fail(
                                CheckId::V10,
                                h,
                                vec![],
                                format!("change-set coding differs from the limit below {m}"),
                            );
                            break;
                        }
                    }
                }
            }
        }

        // V9
        for def in &defines {
            let Some(table) = sc.functional(def.req.side, def.req.e) else {
                f.fail(
                    CheckId::V9,
                    def.stage,
                    vec![def.idx],
                    format!("{} has no functional", def.req),
                );
                continue;
            };
            let next_init = init_stages
                .get(&def.req)
                .and_then(|v| v.iter().copied().find(|&t| t > def.stage));
            let next_injury = injury_stages
                .get(&(def.req, def.x))
                .and_then(|v| v.iter().copied().find(|&t| t > def.stage));
            let death = (def.stage..=h).find(|&u| !in_cone(&def.sigma, &c_at(u)));
            let end = [next_init, next_injury, death]
                .into_iter()
                .flatten()
                .min()
                .unwrap_or(h + 1);
            for u in def.stage..end {
                let c = c_at(u);
                let phi = evaluate(table, u, &a_at(def.req.side, u), Some(&c), def.x).value();
                if phi != Some(def.k) {
                    f.fail(
                        CheckId::V9,
                        u,
                        vec![def.idx],
                        format!(
                            "Δ for {} at {} is {} but Φ gives {phi:?} at stage {u}",
                            def.req, def.x, def.k as u8
                        ),
                    );
                    break;
                }
            }
        }
    } else {
        for id in [CheckId::V7, CheckId::V8, CheckId::V9, CheckId::V10] {
            f.skip(id, "applies to the oracle construction");
        }
    }

    let mut flags = vec![if unsettled { "unsettled" } else { "settled" }.to_string()];
    if f.first.get(&CheckId::V8).is_some_and(CheckStatus::is_fail) {
        flags.push("p-contract-violated".to_string());
    }
    let checks = CheckId::ALL
        .into_iter()
        .map(|id| (id, f.first.remove(&id).unwrap_or(CheckStatus::Pass)))
        .collect();
    VerificationReport {
        checks,
        flags,
        diagnostics: diag,
    }
}

/// Items (1)–(3) applied literally to a dense copy of the assignment.
fn replay_update(
    f: &mut Failures,
    lam: &mut [Dense; 2],
    blk: BlockId,
    s: u64,
    idx: usize,
    ev: &TraceEvent,
) {
    let side = blk.side.index() as usize;
    let i = blk.index as i64;
    let old = lam[side].clone();
    let n = old.0.len() as u64;
    let Some(m) = (0..n).rev().find(|&e| old.get(e) == i) else {
        f.fail(
            CheckId::V11,
            s,
            vec![idx],
            format!("{blk} is empty in the replay"),
        );
        f.fail(
            CheckId::V3,
            s,
            vec![idx],
            format!("update from empty block {blk}"),
        );
        return;
    };
    let shift = old.get(s) - i;
    if field::<u64>(ev, "tail") != Some(m) || field::<i64>(ev, "shift") != Some(shift) {
        f.fail(
            CheckId::V11,
            s,
            vec![idx],
            format!(
                "recorded tail/shift {:?}/{:?}, replay {m}/{shift}",
                ev.get("tail"),
                ev.get("shift")
            ),
        );
    }
    if m > s {
        f.fail(
            CheckId::V11,
            s,
            vec![idx],
            format!("tail {m} of {blk} lies beyond stage {s}"),
        );
    }
    let mut new = old.clone();
    for e in 0..n {
        new.0[e as usize] = if e <= m {
            old.get(e)
        } else if e <= s {
            i
        } else {
            old.get(e) - shift
        };
    }
    if let Some(e) = (0..n).find(|&e| new.get(e) > old.get(e)) {
        f.fail(
            CheckId::V3,
            s,
            vec![idx],
            format!(
                "index {e} moves from block {} to {}",
                old.get(e),
                new.get(e)
            ),
        );
    }
    if m <= s {
        for j in 1..n.saturating_sub(s) {
            if new.get(s + j) != i + j as i64 {
                f.fail(
                    CheckId::V11,
                    s,
                    vec![idx],
                    format!(
                        "index {} lands in {} instead of {}",
                        s + j,
                        new.get(s + j),
                        i + j as i64
                    ),
                );
                break;
            }
        }
    }
    lam[side] = new;
}

fn intervals(lam: &Dense, n: usize) -> Vec<(u64, u64, u64)> {
    let mut out: Vec<(u64, u64, u64)> = Vec::new();
    for e in 0..n as u64 {
        let b = lam.get(e).max(0) as u64;
        match out.last_mut() {
            Some(last) if last.0 == b => last.2 = e,
            _ => out.push((b, e, e)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{load_scenario, run};

    fn scenario(json: &str) -> Scenario {
        load_scenario(json).unwrap()
    }

    const SACKS: &str = r#"{"horizon": 8, "construction": "sacks", "b": [[3, 0], [5, 6]],
        "d": [], "functionals": [{"side": 1, "e": 0,
        "axioms": [{"theta": "", "x": 0, "k": 0, "stage": 0}]}]}"#;

    #[test]
    fn check_ids_parse_case_insensitively() {
        for id in CheckId::ALL {
            assert_eq!(id.to_string().to_lowercase().parse::<CheckId>(), Ok(id));
        }
        assert!("V12".parse::<CheckId>().is_err());
    }

    #[test]
    fn sacks_reports_skip_oracle_checks() {
        let sc = scenario(SACKS);
        let report = verify(&sc, &run(&sc).unwrap().trace);
        assert!(report.passed());
        for id in [CheckId::V7, CheckId::V8, CheckId::V9, CheckId::V10] {
            assert_eq!(report.status(id).label(), "skipped");
        }
        assert_eq!(report.flags, vec!["settled".to_string()]);
        assert_eq!(report.diagnostics.max_restraint.get("U:0"), Some(&2));
    }

    #[test]
    fn failure_points_at_the_offending_event() {
        let sc = scenario(SACKS);
        let mut trace = run(&sc).unwrap().trace;
        let idx = trace
            .iter()
            .position(|e| e.kind == EventKind::Route)
            .unwrap();
        let mut events: Vec<TraceEvent> = trace.iter().cloned().collect();
        events[idx] = events[idx].clone().with("to", "A1");
        trace = Trace::new();
        for e in events {
            trace.push(e);
        }
        let report = verify(&sc, &trace);
        match report.status(CheckId::V4) {
            CheckStatus::Fail { stage, events, .. } => {
                assert_eq!(*stage, 3);
                assert!(events.contains(&idx));
            }
            other => panic!("expected a V4 failure, got {other:?}"),
        }
    }

    #[test]
    fn exhausted_scan_flags_unsettled() {
        let sc = scenario(
            r#"{"horizon": 6, "construction": "robinson", "b": [], "c": [], "d": [],
            "functionals": [{"side": 0, "e": 0,
              "axioms": [{"theta": "", "sigma": "", "x": 0, "k": 0, "stage": 0}]}],
            "p_policy": {"type": "truthful_delay", "d": 10}}"#,
        );
        let out = run(&sc).unwrap();
        let report = verify(&sc, &out.trace);
        assert!(report.passed(), "{}", report.to_json());
        assert!(!report.settled());
        assert_eq!(report.diagnostics.refusals, 1);
        assert_eq!(report.diagnostics.unstable_guesses, vec![0]);
        assert_eq!(out.final_state.unsettled, vec![("P:0".to_string(), 0, 2)]);
    }

    #[test]
    fn lying_guess_violates_the_contract() {
        let sc = scenario(
            r#"{"horizon": 6, "construction": "robinson", "b": [], "c": [], "d": [],
            "functionals": [{"side": 0, "e": 0,
              "axioms": [{"theta": "", "sigma": "", "x": 0, "k": 0, "stage": 0}]}],
            "p_policy": {"type": "table", "values": {}}}"#,
        );
        let report = verify(&sc, &run(&sc).unwrap().trace);
        assert!(report.status(CheckId::V8).is_fail());
        assert!(report.flags.iter().any(|f| f == "p-contract-violated"));
    }

    #[test]
    fn report_json_has_the_documented_keys() {
        let sc = scenario(SACKS);
        let report = verify(&sc, &run(&sc).unwrap().trace);
        let v: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(v["checks"]["V1"]["status"], "pass");
        assert_eq!(v["checks"]["V8"]["status"], "skipped");
        assert!(v["flags"].is_array());
        assert!(v["diagnostics"].is_object());
    }
}
