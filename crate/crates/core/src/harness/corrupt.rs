//! Deliberately damaged traces, one per verifier check, used as negative
//! controls.

use crate::engine::StagedSet;
use crate::engine::{BlockId, EventKind, ReqId, Trace, TraceEvent};
use crate::model::BitString;
use crate::model::Role;
use crate::robinson::{p_value, truth_x, PPolicy, WEntry};

use super::scenario::{Construction, Scenario};
use super::verify::CheckId;

const FAR: u64 = 1 << 21;

fn update_index(trace: &Trace, stage: u64) -> Option<usize> {
    trace
        .iter()
        .position(|e| e.stage == stage && e.kind == EventKind::AssignmentUpdate)
}

fn insert_before_update(trace: &mut Trace, stage: u64, ev: TraceEvent) -> Option<()> {
    let at = update_index(trace, stage)?;
    trace.events.insert(at, ev);
    Some(())
}

fn first_req(sc: &Scenario) -> Option<ReqId> {
    sc.functionals.first().map(|t| ReqId {
        side: t.id.side,
        e: t.id.index,
    })
}

fn fresh_j(trace: &Trace) -> u64 {
    trace
        .iter()
        .filter_map(|e| e.get_u64("j"))
        .max()
        .map_or(0, |j| j + 1)
}

/// A `W` enumeration for a fresh index whose guesses break the contract.
fn bad_guess(sc: &Scenario, trace: &Trace, need_changes: bool) -> Option<TraceEvent> {
    let h = sc.horizon;
    let mut c = StagedSet::new(Role::C);
    for (s, x) in sc.c.entries() {
        c.insert(s, x);
    }
    let j = fresh_j(trace);
    let candidates = (0..=4usize).flat_map(|len| {
        (0..1u32 << len).map(move |m| BitString::new((0..len).map(|i| m >> i & 1 == 1).collect()))
    });
    for sigma in candidates {
        for stage in 0..=h {
            let w = [WEntry {
                sigma: sigma.clone(),
                stage,
            }];
            let p: Vec<bool> = (0..=h)
                .map(|t| p_value(&sc.p_policy, j, &w, t, &c))
                .collect();
            let changes = p.windows(2).filter(|v| v[0] != v[1]).count() as u64;
            let too_many = changes > sc.q(j);
            let x_h = truth_x(&w, h, &c);
            let limit_off = match &sc.p_policy {
                PPolicy::TruthfulDelay { delay } => {
                    let stable = (h.saturating_sub(*delay)..=h).all(|t| truth_x(&w, t, &c) == x_h);
                    stable && p[h as usize] != x_h
                }
                PPolicy::Table { .. } => p[h as usize] != x_h,
            };
            if too_many || (!need_changes && limit_off) {
                return Some(
                    TraceEvent::new(stage, EventKind::Enumerate)
                        .with("set", "W")
                        .with("j", j)
                        .with("sigma", &sigma)
                        .with("req", "P:0")
                        .with("input", FAR),
                );
            }
        }
    }
    None
}

/// Damages `trace` so that `check` fails, or returns `None` when this trace
/// offers nothing to damage for that check.
pub fn corrupt(check: CheckId, sc: &Scenario, trace: &Trace) -> Option<Trace> {
    let mut t = trace.clone();
    let robinson = sc.construction == Construction::Robinson;
    match check {
        CheckId::V1 => {
            let ev = TraceEvent::new(0, EventKind::Route)
                .with("elem", FAR)
                .with("to", "A0")
                .with("block", "none");
            insert_before_update(&mut t, 0, ev)?;
        }
        CheckId::V2 => {
            t.events.last()?;
            t.push(
                TraceEvent::new(0, EventKind::Enumerate)
                    .with("set", "D")
                    .with("elem", FAR),
            );
        }
        CheckId::V3 => {
            if sc.horizon == 0 {
                return None;
            }
            let at = update_index(&t, 0)?;
            t.events[at] = TraceEvent::new(0, EventKind::AssignmentUpdate)
                .with("initiator", BlockId::lambda(sc.horizon))
                .with("tail", sc.horizon)
                .with("shift", -(sc.horizon as i64));
        }
        CheckId::V4 => {
            let at = t.iter().position(|e| e.kind == EventKind::Route)?;
            let to = if t.events[at].get("to") == Some("A0") {
                "A1"
            } else {
                "A0"
            };
            t.events[at] = t.events[at].clone().with("to", to);
        }
        CheckId::V5 => {
            if robinson {
                return None;
            }
            let r = first_req(sc)?;
            let ev = TraceEvent::new(sc.horizon, EventKind::Diagonalize)
                .with("req", r)
                .with("input", FAR)
                .with("k", 0);
            insert_before_update(&mut t, sc.horizon, ev)?;
        }
        CheckId::V6 => {
            let r = first_req(sc)?;
            let quiet = (0..=sc.horizon).find(|&s| {
                !t.iter()
                    .any(|e| e.stage == s && e.kind == EventKind::Initialize)
            })?;
            let ev = TraceEvent::new(quiet, EventKind::Injury)
                .with("req", r)
                .with("input", 0)
                .with("j", "none")
                .with("elem", 0);
            insert_before_update(&mut t, quiet, ev)?;
        }
        CheckId::V7 => {
            if !robinson {
                return None;
            }
            let ev = TraceEvent::new(0, EventKind::RefuseCertify)
                .with("req", "P:0")
                .with("input", FAR)
                .with("j", fresh_j(&t))
                .with("theta", "")
                .with("sigma", "")
                .with("k", 0)
                .with("from", 0)
                .with("at", 0)
                .with("reason", "exit");
            insert_before_update(&mut t, 0, ev)?;
        }
        CheckId::V8 | CheckId::V10 => {
            if !robinson {
                return None;
            }
            let ev = bad_guess(sc, &t, check == CheckId::V10)?;
            insert_before_update(&mut t, ev.stage, ev)?;
        }
        CheckId::V9 => {
            if !robinson {
                return None;
            }
            let r = first_req(sc)?;
            let ev = TraceEvent::new(0, EventKind::DefineLocal)
                .with("req", r)
                .with("input", FAR)
                .with("k", 0)
                .with("sigma", "")
                .with("theta", "");
            insert_before_update(&mut t, 0, ev)?;
        }
        CheckId::V11 => {
            let at = update_index(&t, 0)?;
            let ev = &t.events[at];
            t.events[at] = if ev.get("initiator") == Some("none") {
                TraceEvent::new(0, EventKind::AssignmentUpdate)
                    .with("initiator", BlockId::lambda(0))
                    .with("tail", 0)
                    .with("shift", 0)
            } else {
                let shift = ev.get_i64("shift").unwrap_or(0);
                ev.clone().with("shift", shift + 1)
            };
        }
    }
    Some(t)
}
