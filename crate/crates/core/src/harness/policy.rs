//! Environments that feed `D` into a run.

use std::collections::BTreeSet;

use crate::engine::{Environment, EventKind, Trace};
use crate::model::EnumerationSchedule;

use super::scenario::DSource;

/// Replays a fixed schedule.
#[derive(Clone, Debug)]
pub struct StaticD {
    schedule: EnumerationSchedule,
}

impl StaticD {
    pub fn new(schedule: EnumerationSchedule) -> Self {
        StaticD { schedule }
    }
}

impl Environment for StaticD {
    fn d_arrivals(&mut self, stage: u64, _trace: &Trace) -> Vec<u64> {
        self.schedule.arrivals_at(stage).collect()
    }
}

/// Watches `define-local` events with value 0 and answers by enumerating
/// the input into `D` at the next odd stage.
#[derive(Clone, Debug, Default)]
pub struct AntiDelta {
    cursor: usize,
    pending: BTreeSet<u64>,
    added: BTreeSet<u64>,
    limit: Option<u64>,
}

impl AntiDelta {
    pub fn new(limit: Option<u64>) -> Self {
        AntiDelta {
            limit,
            ..AntiDelta::default()
        }
    }
}

impl Environment for AntiDelta {
    fn d_arrivals(&mut self, stage: u64, trace: &Trace) -> Vec<u64> {
        for ev in &trace.events[self.cursor..] {
            if ev.kind == EventKind::DefineLocal && ev.get("k") == Some("0") {
                if let Some(x) = ev.get_u64("input") {
                    if !self.added.contains(&x) {
                        self.pending.insert(x);
                    }
                }
            }
        }
        self.cursor = trace.events.len();
        if stage.is_multiple_of(2) {
            return Vec::new();
        }
        let mut out = Vec::new();
        while let Some(x) = self.pending.pop_first() {
            if self.limit.is_some_and(|l| self.added.len() as u64 >= l) {
                self.pending.clear();
                break;
            }
            self.added.insert(x);
            out.push(x);
        }
        out
    }
}

pub fn environment(source: &DSource) -> Box<dyn Environment + Send> {
    match source {
        DSource::Schedule(s) => Box::new(StaticD::new(s.clone())),
        DSource::AntiDelta { limit } => Box::new(AntiDelta::new(*limit)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::TraceEvent;

    fn define(stage: u64, x: u64, k: u8) -> TraceEvent {
        TraceEvent::new(stage, EventKind::DefineLocal)
            .with("req", "P:0")
            .with("input", x)
            .with("k", k)
    }

    #[test]
    fn anti_delta_waits_for_odd_stage() {
        let mut env = AntiDelta::new(None);
        let mut trace = Trace::new();
        trace.push(define(0, 2, 0));
        trace.push(define(0, 3, 1));
        assert_eq!(env.d_arrivals(0, &trace), Vec::<u64>::new());
        assert_eq!(env.d_arrivals(1, &trace), vec![2]);
        trace.push(define(2, 2, 0));
        assert_eq!(env.d_arrivals(3, &trace), Vec::<u64>::new());
    }

    #[test]
    fn anti_delta_respects_limit() {
        let mut env = AntiDelta::new(Some(1));
        let mut trace = Trace::new();
        trace.push(define(0, 2, 0));
        trace.push(define(0, 5, 0));
        assert_eq!(env.d_arrivals(1, &trace), vec![2]);
        trace.push(define(2, 7, 0));
        assert!(env.d_arrivals(3, &trace).is_empty());
    }
}
