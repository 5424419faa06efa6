//! Scenario documents: JSON in, validated [`Scenario`] out, every violation
//! reported with a path into the document.

use std::collections::BTreeMap;
use std::fmt;

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::model::{
    Axiom, BitString, EnumerationSchedule, FunctionalId, FunctionalTable, Role, Side, TimedAxiom,
};
use crate::robinson::PPolicy;

/// Largest horizon a document may ask for.
pub const MAX_HORIZON: u64 = 1 << 16;
/// Largest element any schedule may mention.
pub const MAX_ELEMENT: u64 = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Construction {
    Sacks,
    Robinson,
}

impl Construction {
    pub fn as_str(self) -> &'static str {
        match self {
            Construction::Sacks => "sacks",
            Construction::Robinson => "robinson",
        }
    }
}

impl fmt::Display for Construction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl std::str::FromStr for Construction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sacks" => Ok(Construction::Sacks),
            "robinson" => Ok(Construction::Robinson),
            _ => Err(format!("unknown construction {s:?}")),
        }
    }
}

/// Where `D` comes from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DSource {
    /// A fixed schedule (a plain array, or the `static` policy).
    Schedule(EnumerationSchedule),
    /// Puts `x` into `D` at the next odd stage after some local functional
    /// defines value 0 at `x`. `limit` caps how many elements it adds.
    AntiDelta { limit: Option<u64> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub horizon: u64,
    pub construction: Construction,
    pub b: EnumerationSchedule,
    pub c: EnumerationSchedule,
    pub d: DSource,
    pub functionals: Vec<FunctionalTable>,
    pub p_policy: PPolicy,
    pub q_default: u64,
    pub q_overrides: BTreeMap<u64, u64>,
    pub seed: u64,
}

impl Scenario {
    pub fn functional(&self, side: Side, e: u64) -> Option<&FunctionalTable> {
        self.functionals
            .iter()
            .find(|t| t.id == FunctionalId { side, index: e })
    }

    pub fn q(&self, j: u64) -> u64 {
        self.q_overrides.get(&j).copied().unwrap_or(self.q_default)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub struct ValidationError {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violation(s)", self.violations.len())?;
        for v in &self.violations {
            write!(f, "\n  {v}")?;
        }
        Ok(())
    }
}

struct Checker {
    violations: Vec<Violation>,
}

impl Checker {
    fn fail(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }

    fn uint(&mut self, v: &Value, path: &str) -> Option<u64> {
        match v.as_u64() {
            Some(n) => Some(n),
            None => {
                self.fail(path, format!("expected a nonnegative integer, got {v}"));
                None
            }
        }
    }

    fn bits(&mut self, v: &Value, path: &str) -> Option<BitString> {
        match v.as_str().map(str::parse::<BitString>) {
            Some(Ok(b)) => Some(b),
            _ => {
                self.fail(path, format!("expected a string of 0/1 digits, got {v}"));
                None
            }
        }
    }

    fn entries(&mut self, v: &Value, path: &str) -> Vec<(u64, u64)> {
        let Some(items) = v.as_array() else {
            self.fail(path, "expected an array of [stage, element] pairs");
            return Vec::new();
        };
        let mut out = Vec::new();
        for (i, item) in items.iter().enumerate() {
            let p = format!("{path}[{i}]");
            match item.as_array().map(Vec::as_slice) {
                Some([s, x]) => {
                    let s = self.uint(s, &format!("{p}[0]"));
                    let x = self.uint(x, &format!("{p}[1]"));
                    if let Some(x) = x.filter(|&x| x > MAX_ELEMENT) {
                        self.fail(
                            format!("{p}[1]"),
                            format!("element {x} exceeds {MAX_ELEMENT}"),
                        );
                        continue;
                    }
                    if let (Some(s), Some(x)) = (s, x) {
                        out.push((s, x));
                    }
                }
                _ => self.fail(p, "expected [stage, element]"),
            }
        }
        out
    }

    fn schedule(&mut self, v: &Value, path: &str, role: Role) -> EnumerationSchedule {
        let entries = self.entries(v, path);
        match EnumerationSchedule::from_entries(role, entries) {
            Ok(s) => s,
            Err(errors) => {
                for e in errors {
                    self.fail(path, e.to_string());
                }
                EnumerationSchedule::new(role)
            }
        }
    }
}

const KEYS: [&str; 11] = [
    "horizon",
    "construction",
    "b",
    "c",
    "d",
    "functionals",
    "p_policy",
    "q_default",
    "q_overrides",
    "seed",
    "comment",
];

/// Parses and validates a scenario document.
pub fn load_scenario(document: &str) -> Result<Scenario, ValidationError> {
    let value: Value = serde_json::from_str(document).map_err(|e| ValidationError {
        violations: vec![Violation {
            path: "$".into(),
            message: format!("not valid JSON: {e}"),
        }],
    })?;
    scenario_from_value(&value)
}

pub fn scenario_from_value(value: &Value) -> Result<Scenario, ValidationError> {
    let mut ck = Checker {
        violations: Vec::new(),
    };
    let empty = Map::new();
    let obj = match value.as_object() {
        Some(o) => o,
        None => {
            ck.fail("$", "expected a JSON object");
            &empty
        }
    };
    for k in obj.keys() {
        if !KEYS.contains(&k.as_str()) {
            ck.fail(format!("$.{k}"), "unknown key");
        }
    }

    let horizon = match obj.get("horizon") {
        Some(v) => ck.uint(v, "$.horizon"),
        None => {
            ck.fail("$.horizon", "missing");
            None
        }
    };
    if let Some(h) = horizon.filter(|&h| h > MAX_HORIZON) {
        ck.fail("$.horizon", format!("{h} exceeds {MAX_HORIZON}"));
    }
    let horizon = horizon.unwrap_or(0);

    let construction = match obj.get("construction").map(|v| v.as_str()) {
        Some(Some(s)) => match s.parse() {
            Ok(c) => Some(c),
            Err(e) => {
                ck.fail("$.construction", e);
                None
            }
        },
        Some(None) => {
            ck.fail("$.construction", "expected \"sacks\" or \"robinson\"");
            None
        }
        None => {
            ck.fail("$.construction", "missing");
            None
        }
    };

    let b = match obj.get("b") {
        Some(v) => ck.schedule(v, "$.b", Role::B),
        None => EnumerationSchedule::new(Role::B),
    };
    let c = match obj.get("c") {
        Some(v) => ck.schedule(v, "$.c", Role::C),
        None => EnumerationSchedule::new(Role::C),
    };
    let d = match obj.get("d") {
        None => DSource::Schedule(EnumerationSchedule::new(Role::D)),
        Some(v @ Value::Array(_)) => DSource::Schedule(ck.schedule(v, "$.d", Role::D)),
        Some(Value::Object(m)) => d_policy(&mut ck, m),
        Some(_) => {
            ck.fail("$.d", "expected an array or a policy object");
            DSource::Schedule(EnumerationSchedule::new(Role::D))
        }
    };

    let functionals = match obj.get("functionals") {
        None => Vec::new(),
        Some(v) => functionals(&mut ck, v, construction),
    };

    let p_policy = match obj.get("p_policy") {
        None => PPolicy::TruthfulDelay { delay: 1 },
        Some(v) => p_policy(&mut ck, v),
    };
    let q_default = match obj.get("q_default") {
        None => horizon + 2,
        Some(v) => ck.uint(v, "$.q_default").unwrap_or(1),
    };
    if q_default == 0 {
        ck.fail("$.q_default", "must be positive");
    }
    let mut q_overrides = BTreeMap::new();
    match obj.get("q_overrides") {
        None => {}
        Some(Value::Object(m)) => {
            for (k, v) in m {
                let path = format!("$.q_overrides.{k}");
                match (k.parse::<u64>(), ck.uint(v, &path)) {
                    (Ok(j), Some(q)) if q > 0 => {
                        q_overrides.insert(j, q);
                    }
                    (Err(_), _) => ck.fail(path, "keys must be guessing-set indices"),
                    (_, Some(_)) => ck.fail(path, "must be positive"),
                    _ => {}
                }
            }
        }
        Some(_) => ck.fail("$.q_overrides", "expected an object"),
    }
    let seed = match obj.get("seed") {
        None => 0,
        Some(v) => ck.uint(v, "$.seed").unwrap_or(0),
    };

    match (ck.violations.is_empty(), construction) {
        (true, Some(construction)) => Ok(Scenario {
            horizon,
            construction,
            b,
            c,
            d,
            functionals,
            p_policy,
            q_default,
            q_overrides,
            seed,
        }),
        _ => Err(ValidationError {
            violations: ck.violations,
        }),
    }
}

fn d_policy(ck: &mut Checker, m: &Map<String, Value>) -> DSource {
    let params = m.get("params").cloned().unwrap_or(json!({}));
    if !params.is_object() {
        ck.fail("$.d.params", "expected an object");
    }
    match m.get("policy").and_then(Value::as_str) {
        Some("static") => match params.get("entries") {
            Some(v) => DSource::Schedule(ck.schedule(v, "$.d.params.entries", Role::D)),
            None => DSource::Schedule(EnumerationSchedule::new(Role::D)),
        },
        Some("anti-delta") => {
            let limit = params
                .get("limit")
                .and_then(|v| ck.uint(v, "$.d.params.limit"));
            DSource::AntiDelta { limit }
        }
        other => {
            ck.fail(
                "$.d.policy",
                format!("expected \"static\" or \"anti-delta\", got {other:?}"),
            );
            DSource::Schedule(EnumerationSchedule::new(Role::D))
        }
    }
}

fn functionals(
    ck: &mut Checker,
    v: &Value,
    construction: Option<Construction>,
) -> Vec<FunctionalTable> {
    let Some(items) = v.as_array() else {
        ck.fail("$.functionals", "expected an array");
        return Vec::new();
    };
    let mut out: Vec<FunctionalTable> = Vec::new();
    for (i, f) in items.iter().enumerate() {
        let path = format!("$.functionals[{i}]");
        let side = f
            .get("side")
            .and_then(|s| ck.uint(s, &format!("{path}.side")))
            .and_then(|s| {
                let side = Side::from_index(s);
                if side.is_none() {
                    ck.fail(format!("{path}.side"), "must be 0 or 1");
                }
                side
            });
        let e = f.get("e").and_then(|e| ck.uint(e, &format!("{path}.e")));
        if f.get("side").is_none() {
            ck.fail(format!("{path}.side"), "missing");
        }
        if f.get("e").is_none() {
            ck.fail(format!("{path}.e"), "missing");
        }
        let mut axioms = Vec::new();
        match f.get("axioms").and_then(Value::as_array) {
            None => ck.fail(format!("{path}.axioms"), "expected an array"),
            Some(list) => {
                for (n, a) in list.iter().enumerate() {
                    let ap = format!("{path}.axioms[{n}]");
                    let theta = match a.get("theta") {
                        Some(t) => ck.bits(t, &format!("{ap}.theta")),
                        None => {
                            ck.fail(format!("{ap}.theta"), "missing");
                            None
                        }
                    };
                    let sigma = a.get("sigma").map(|s| ck.bits(s, &format!("{ap}.sigma")));
                    let x = a.get("x").and_then(|x| ck.uint(x, &format!("{ap}.x")));
                    let k = a.get("k").and_then(|k| ck.uint(k, &format!("{ap}.k")));
                    let stage = a
                        .get("stage")
                        .map_or(Some(0), |s| ck.uint(s, &format!("{ap}.stage")));
                    if a.get("x").is_none() || a.get("k").is_none() {
                        ck.fail(ap.clone(), "x and k are required");
                    }
                    if let Some(k) = k.filter(|&k| k > 1) {
                        ck.fail(format!("{ap}.k"), format!("must be 0 or 1, got {k}"));
                    }
                    match (construction, &sigma) {
                        (Some(Construction::Sacks), Some(_)) => {
                            ck.fail(format!("{ap}.sigma"), "sacks functionals take no C-oracle")
                        }
                        (Some(Construction::Robinson), None) => {
                            ck.fail(format!("{ap}.sigma"), "robinson functionals need sigma")
                        }
                        _ => {}
                    }
                    if let (Some(theta), Some(x), Some(k), Some(stage)) = (theta, x, k, stage) {
                        let k = k == 1;
                        let axiom = match sigma {
                            Some(Some(sigma)) => Axiom::binary(theta, sigma, x, k),
                            Some(None) => continue,
                            None => Axiom::unary(theta, x, k),
                        };
                        axioms.push(TimedAxiom { stage, axiom });
                    }
                }
            }
        }
        let (Some(side), Some(e)) = (side, e) else {
            continue;
        };
        let table = FunctionalTable::new(FunctionalId { side, index: e }, axioms);
        if let Err(conflict) = table.validate_consistency() {
            for (a, b) in conflict.pairs {
                ck.fail(
                    format!("{path}.axioms"),
                    format!("axioms {a} and {b} are compatible but disagree"),
                );
            }
        }
        if out.iter().any(|t| t.id == table.id) {
            ck.fail(
                path,
                format!("duplicate functional side {} e {e}", side.index()),
            );
            continue;
        }
        out.push(table);
    }
    out
}

fn p_policy(ck: &mut Checker, v: &Value) -> PPolicy {
    let fallback = PPolicy::TruthfulDelay { delay: 1 };
    match v.get("type").and_then(Value::as_str) {
        Some("truthful_delay") => {
            let delay = v
                .get("d")
                .and_then(|d| ck.uint(d, "$.p_policy.d"))
                .unwrap_or(1);
            if delay == 0 {
                ck.fail("$.p_policy.d", "must be at least 1 so that p(j, 0) = 0");
            }
            PPolicy::TruthfulDelay { delay }
        }
        Some("table") => {
            let mut values = BTreeMap::new();
            match v.get("values").and_then(Value::as_object) {
                None => ck.fail("$.p_policy.values", "expected an object"),
                Some(m) => {
                    for (k, row) in m {
                        let path = format!("$.p_policy.values.{k}");
                        let Ok(j) = k.parse::<u64>() else {
                            ck.fail(path, "keys must be guessing-set indices");
                            continue;
                        };
                        if let Some(bits) = ck.bits(row, &path) {
                            if bits.get(0) == Some(true) {
                                ck.fail(path, "p(j, 0) must be 0");
                            }
                            values.insert(j, bits.bits().to_vec());
                        }
                    }
                }
            }
            PPolicy::Table { values }
        }
        _ => {
            ck.fail(
                "$.p_policy.type",
                "expected \"truthful_delay\" or \"table\"",
            );
            fallback
        }
    }
}

fn entries_json(sched: &EnumerationSchedule) -> Value {
    Value::Array(sched.entries().map(|(s, x)| json!([s, x])).collect())
}

/// The document form of a scenario; [`load_scenario`] inverts it.
pub fn scenario_to_value(sc: &Scenario) -> Value {
    let d = match &sc.d {
        DSource::Schedule(s) => entries_json(s),
        DSource::AntiDelta { limit } => match limit {
            Some(l) => json!({"policy": "anti-delta", "params": {"limit": l}}),
            None => json!({"policy": "anti-delta", "params": {}}),
        },
    };
    let functionals: Vec<Value> = sc
        .functionals
        .iter()
        .map(|t| {
            let axioms: Vec<Value> = t
                .axioms()
                .iter()
                .map(|ta| {
                    let mut a = json!({
                        "theta": ta.axiom.theta.to_string(),
                        "x": ta.axiom.x,
                        "k": ta.axiom.k as u8,
                        "stage": ta.stage,
                    });
                    if let Some(sigma) = &ta.axiom.sigma {
                        a["sigma"] = json!(sigma.to_string());
                    }
                    a
                })
                .collect();
            json!({"side": t.id.side.index(), "e": t.id.index, "axioms": axioms})
        })
        .collect();
    let p_policy = match &sc.p_policy {
        PPolicy::TruthfulDelay { delay } => json!({"type": "truthful_delay", "d": delay}),
        PPolicy::Table { values } => {
            let values: Map<String, Value> = values
                .iter()
                .map(|(j, row)| {
                    (
                        j.to_string(),
                        json!(BitString::new(row.clone()).to_string()),
                    )
                })
                .collect();
            json!({"type": "table", "values": values})
        }
    };
    let mut doc = json!({
        "horizon": sc.horizon,
        "construction": sc.construction.as_str(),
        "b": entries_json(&sc.b),
        "c": entries_json(&sc.c),
        "d": d,
        "functionals": functionals,
        "p_policy": p_policy,
        "q_default": sc.q_default,
        "seed": sc.seed,
    });
    if !sc.q_overrides.is_empty() {
        let q: Map<String, Value> = sc
            .q_overrides
            .iter()
            .map(|(j, q)| (j.to_string(), json!(q)))
            .collect();
        doc["q_overrides"] = Value::Object(q);
    }
    doc
}

pub fn scenario_to_json(sc: &Scenario) -> String {
    serde_json::to_string_pretty(&scenario_to_value(sc)).expect("scenario serializes")
}
