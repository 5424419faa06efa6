//! Trace events and their line format:
//! `stage=<s>\tkind=<kind>\t<key>=<value>...` with keys sorted.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    Enumerate,
    Route,
    Initialize,
    Act,
    Expansionary,
    Diagonalize,
    Certify,
    RefuseCertify,
    DefineLocal,
    RestraintSet,
    AssignmentUpdate,
    Injury,
}

impl EventKind {
    pub const ALL: [EventKind; 12] = [
        EventKind::Enumerate,
        EventKind::Route,
        EventKind::Initialize,
        EventKind::Act,
        EventKind::Expansionary,
        EventKind::Diagonalize,
        EventKind::Certify,
        EventKind::RefuseCertify,
        EventKind::DefineLocal,
        EventKind::RestraintSet,
        EventKind::AssignmentUpdate,
        EventKind::Injury,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Enumerate => "enumerate",
            EventKind::Route => "route",
            EventKind::Initialize => "initialize",
            EventKind::Act => "act",
            EventKind::Expansionary => "expansionary",
            EventKind::Diagonalize => "diagonalize",
            EventKind::Certify => "certify",
            EventKind::RefuseCertify => "refuse-certify",
            EventKind::DefineLocal => "define-local",
            EventKind::RestraintSet => "restraint-set",
            EventKind::AssignmentUpdate => "assignment-update",
            EventKind::Injury => "injury",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = TraceParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| TraceParseError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceParseError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("unknown event kind {0:?}")]
    UnknownKind(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub stage: u64,
    pub kind: EventKind,
    pub payload: BTreeMap<String, String>,
}

impl TraceEvent {
    pub fn new(stage: u64, kind: EventKind) -> Self {
        TraceEvent {
            stage,
            kind,
            payload: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl fmt::Display) -> Self {
        debug_assert!(key != "stage" && key != "kind");
        self.payload.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.payload.get(key).map(String::as_str)
    }

    pub fn get_u64(&self, key: &str) -> Option<u64> {
        self.get(key)?.parse().ok()
    }

    pub fn get_i64(&self, key: &str) -> Option<i64> {
        self.get(key)?.parse().ok()
    }

    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Option<T> {
        self.get(key)?.parse().ok()
    }

    pub fn parse_line(line: &str) -> Result<TraceEvent, String> {
        let mut fields = line.split('\t');
        let stage = fields
            .next()
            .and_then(|f| f.strip_prefix("stage="))
            .ok_or("missing stage field")?
            .parse::<u64>()
            .map_err(|e| format!("bad stage: {e}"))?;
        let kind = fields
            .next()
            .and_then(|f| f.strip_prefix("kind="))
            .ok_or("missing kind field")?
            .parse::<EventKind>()
            .map_err(|e| e.to_string())?;
        let mut payload = BTreeMap::new();
        for f in fields {
            let (k, v) = f
                .split_once('=')
                .ok_or_else(|| format!("field {f:?} has no '='"))?;
            if payload.insert(k.to_string(), v.to_string()).is_some() {
                return Err(format!("duplicate key {k:?}"));
            }
        }
        Ok(TraceEvent {
            stage,
            kind,
            payload,
        })
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage={}\tkind={}", self.stage, self.kind)?;
        for (k, v) in &self.payload {
            write!(f, "\t{k}={v}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn new() -> Self {
        Trace::default()
    }

    pub fn push(&mut self, event: TraceEvent) {
        self.events.push(event);
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TraceEvent> {
        self.events.iter()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Trace, TraceParseError> {
        let events = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                TraceEvent::parse_line(l).map_err(|message| TraceParseError::Line {
                    line: i + 1,
                    message,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Trace { events })
    }
}

impl<'a> IntoIterator for &'a Trace {
    type Item = &'a TraceEvent;
    type IntoIter = std::slice::Iter<'a, TraceEvent>;

    fn into_iter(self) -> Self::IntoIter {
        self.events.iter()
    }
}
