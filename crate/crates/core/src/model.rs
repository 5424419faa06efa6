//! Data model shared by every construction: pairing, binary strings,
//! stage-indexed enumerations, and Turing functionals given as explicit
//! axiom tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Cantor pairing `(a+b)(a+b+1)/2 + b`.
pub fn pair(a: u64, b: u64) -> u64 {
    let w = a + b;
    w * (w + 1) / 2 + b
}

/// Inverse of [`pair`].
pub fn unpair(n: u64) -> (u64, u64) {
    // w is the largest integer with w(w+1)/2 <= n.
    let mut w = ((8 * n as u128 + 1).isqrt() as u64 - 1) / 2;
    while (w + 1) * (w + 2) / 2 <= n {
        w += 1;
    }
    while w * (w + 1) / 2 > n {
        w -= 1;
    }
    let b = n - w * (w + 1) / 2;
    (w - b, b)
}

/// Anything that can answer membership queries for a set of naturals.
pub trait SetView {
    fn contains(&self, n: u64) -> bool;
}

impl SetView for BTreeSet<u64> {
    fn contains(&self, n: u64) -> bool {
        BTreeSet::contains(self, &n)
    }
}

/// The two halves of the splitting: side zero builds `A0` and is attacked by
/// the `P`/`Φ` requirements in the `Λ` blocks, side one builds `A1` with
/// `Q`/`Ψ` and `Υ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    Zero,
    One,
}

impl Side {
    pub fn index(self) -> u8 {
        match self {
            Side::Zero => 0,
            Side::One => 1,
        }
    }

    pub fn from_index(i: u64) -> Option<Side> {
        match i {
            0 => Some(Side::Zero),
            1 => Some(Side::One),
            _ => None,
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::Zero => Side::One,
            Side::One => Side::Zero,
        }
    }

    /// Requirement letter: `P` for side zero, `Q` for side one.
    pub fn letter(self) -> char {
        match self {
            Side::Zero => 'P',
            Side::One => 'Q',
        }
    }
}

/// A finite binary string, used for oracle segments.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BitString(Vec<bool>);

impl BitString {
    pub fn new(bits: Vec<bool>) -> Self {
        BitString(bits)
    }

    pub fn empty() -> Self {
        BitString(Vec::new())
    }

    /// The characteristic string of `set` restricted to `[0, len)`.
    pub fn restriction(set: &dyn SetView, len: usize) -> Self {
        BitString((0..len as u64).map(|i| set.contains(i)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<bool> {
        self.0.get(i).copied()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn is_prefix_of(&self, other: &BitString) -> bool {
        self.len() <= other.len() && other.0[..self.len()] == self.0[..]
    }

    /// One string is an initial segment of the other.
    pub fn compatible(&self, other: &BitString) -> bool {
        self.is_prefix_of(other) || other.is_prefix_of(self)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "\"{self}\"")
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid bit string {0:?}: only '0' and '1' are allowed")]
pub struct BitStringError(pub String);

impl FromStr for BitString {
    type Err = BitStringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(BitStringError(s.to_string())),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(BitString)
    }
}

/// `X ∈ [σ]`: `sigma` is an initial segment of the characteristic string of
/// the set.
pub fn in_cone(sigma: &BitString, set: &dyn SetView) -> bool {
    sigma
        .bits()
        .iter()
        .enumerate()
        .all(|(i, &b)| set.contains(i as u64) == b)
}

/// Which c.e. set a schedule enumerates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    B,
    C,
    D,
    A0,
    A1,
    W,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::B => "B",
            Role::C => "C",
            Role::D => "D",
            Role::A0 => "A0",
            Role::A1 => "A1",
            Role::W => "W",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("element {element} of {role} is enumerated twice (stages {first} and {second})")]
    Reenumerated {
        role: Role,
        element: u64,
        first: u64,
        second: u64,
    },
    #[error(
        "B enumerates {count} elements at stage {stage}; at most one is allowed at odd stages"
    )]
    CrowdedOddStage { stage: u64, count: usize },
    #[error("B enumerates element {element} at even stage {stage}")]
    EvenStageArrival { stage: u64, element: u64 },
}

/// A stage-indexed plan of which elements enter a c.e. set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnumerationSchedule {
    role: Role,
    entries: BTreeSet<(u64, u64)>,
    stage_of: BTreeMap<u64, u64>,
}

impl EnumerationSchedule {
    pub fn new(role: Role) -> Self {
        EnumerationSchedule {
            role,
            entries: BTreeSet::new(),
            stage_of: BTreeMap::new(),
        }
    }

    /// Builds a schedule from `(stage, element)` pairs, checking monotonicity
    /// and, for `B`, the at-most-one-per-odd-stage convention.
    pub fn from_entries(
        role: Role,
        entries: impl IntoIterator<Item = (u64, u64)>,
    ) -> Result<Self, Vec<ScheduleError>> {
        let mut sched = EnumerationSchedule::new(role);
        let mut errors = Vec::new();
        let mut sorted: Vec<_> = entries.into_iter().collect();
        sorted.sort_unstable();
        sorted.dedup();
        for (stage, element) in sorted {
            if let Err(e) = sched.insert(stage, element) {
                errors.push(e);
            }
        }
        if errors.is_empty() {
            Ok(sched)
        } else {
            Err(errors)
        }
    }

    /// Adds one enumeration. Entries may arrive in any stage order; an element
    /// that already has an entry is rejected.
    pub fn insert(&mut self, stage: u64, element: u64) -> Result<(), ScheduleError> {
        if let Some(&first) = self.stage_of.get(&element) {
            return Err(ScheduleError::Reenumerated {
                role: self.role,
                element,
                first: first.min(stage),
                second: first.max(stage),
            });
        }
        if self.role == Role::B {
            if stage.is_multiple_of(2) {
                return Err(ScheduleError::EvenStageArrival { stage, element });
            }
            let count = self.arrivals_at(stage).count();
            if count >= 1 {
                return Err(ScheduleError::CrowdedOddStage {
                    stage,
                    count: count + 1,
                });
            }
        }
        self.entries.insert((stage, element));
        self.stage_of.insert(element, stage);
        Ok(())
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn entries(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry_stage(&self, element: u64) -> Option<u64> {
        self.stage_of.get(&element).copied()
    }

    pub fn arrivals_at(&self, stage: u64) -> impl Iterator<Item = u64> + '_ {
        self.entries
            .range((stage, 0)..=(stage, u64::MAX))
            .map(|&(_, e)| e)
    }

    pub fn max_stage(&self) -> Option<u64> {
        self.entries.iter().next_back().map(|&(s, _)| s)
    }

    pub fn max_element(&self) -> Option<u64> {
        self.stage_of.keys().next_back().copied()
    }

    /// `X_s`: every element whose entry stage is at most `stage`.
    pub fn snapshot(&self, stage: u64) -> Snapshot {
        Snapshot {
            stage,
            members: self
                .entries
                .range(..=(stage, u64::MAX))
                .map(|&(_, e)| e)
                .collect(),
        }
    }

    /// Membership at `stage` without materializing a snapshot.
    pub fn view_at(&self, stage: u64) -> ScheduleView<'_> {
        ScheduleView { sched: self, stage }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ScheduleView<'a> {
    sched: &'a EnumerationSchedule,
    stage: u64,
}

impl SetView for ScheduleView<'_> {
    fn contains(&self, n: u64) -> bool {
        self.sched.entry_stage(n).is_some_and(|t| t <= self.stage)
    }
}

/// The contents of a schedule as of some stage.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Snapshot {
    pub stage: u64,
    pub members: BTreeSet<u64>,
}

impl SetView for Snapshot {
    fn contains(&self, n: u64) -> bool {
        self.members.contains(&n)
    }
}

pub fn snapshot(sched: &EnumerationSchedule, s: u64) -> Snapshot {
    sched.snapshot(s)
}

/// A single oracle axiom `(θ, σ, x, k)`. `sigma` is absent for functionals
/// that consult only one oracle.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Axiom {
    pub theta: BitString,
    pub sigma: Option<BitString>,
    pub x: u64,
    pub k: bool,
}

impl Axiom {
    pub fn unary(theta: BitString, x: u64, k: bool) -> Self {
        Axiom {
            theta,
            sigma: None,
            x,
            k,
        }
    }

    pub fn binary(theta: BitString, sigma: BitString, x: u64, k: bool) -> Self {
        Axiom {
            theta,
            sigma: Some(sigma),
            x,
            k,
        }
    }

    /// The use `l = |θ|`.
    pub fn use_len(&self) -> usize {
        self.theta.len()
    }

    /// Two axioms could both apply to one oracle pair.
    pub fn oracles_compatible(&self, other: &Axiom) -> bool {
        self.theta.compatible(&other.theta)
            && match (&self.sigma, &other.sigma) {
                (Some(a), Some(b)) => a.compatible(b),
                _ => true,
            }
    }
}

/// Identifies `Φ_e` (side zero) or `Ψ_e` (side one).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FunctionalId {
    pub side: Side,
    pub index: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimedAxiom {
    pub stage: u64,
    pub axiom: Axiom,
}

/// A Turing functional as a stage-tagged set of axioms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionalTable {
    pub id: FunctionalId,
    axioms: Vec<TimedAxiom>,
    // input -> axiom positions sorted by (use, k)
    by_input: BTreeMap<u64, Vec<usize>>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("inconsistent axioms: {pairs:?}")]
pub struct ConflictError {
    /// Positions (into the table's axiom list) of each conflicting pair.
    pub pairs: Vec<(usize, usize)>,
}

impl FunctionalTable {
    pub fn new(id: FunctionalId, axioms: Vec<TimedAxiom>) -> Self {
        let mut by_input: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, a) in axioms.iter().enumerate() {
            by_input.entry(a.axiom.x).or_default().push(i);
        }
        for list in by_input.values_mut() {
            list.sort_by_key(|&i| (axioms[i].axiom.use_len(), axioms[i].axiom.k, i));
        }
        FunctionalTable {
            id,
            axioms,
            by_input,
        }
    }

    pub fn empty(id: FunctionalId) -> Self {
        FunctionalTable::new(id, Vec::new())
    }

    pub fn axioms(&self) -> &[TimedAxiom] {
        &self.axioms
    }

    pub fn is_binary(&self) -> bool {
        self.axioms.iter().any(|a| a.axiom.sigma.is_some())
    }

    /// Largest input mentioned by any axiom.
    pub fn max_input(&self) -> Option<u64> {
        self.by_input.keys().next_back().copied()
    }

    pub fn validate_consistency(&self) -> Result<(), ConflictError> {
        let mut pairs = Vec::new();
        for list in self.by_input.values() {
            for (n, &i) in list.iter().enumerate() {
                for &j in &list[n + 1..] {
                    let (a, b) = (&self.axioms[i].axiom, &self.axioms[j].axiom);
                    if a.k != b.k && a.oracles_compatible(b) {
                        pairs.push((i.min(j), i.max(j)));
                    }
                }
            }
        }
        if pairs.is_empty() {
            Ok(())
        } else {
            pairs.sort_unstable();
            Err(ConflictError { pairs })
        }
    }

    /// The axiom `evaluate` would select, if any.
    pub fn applicable(
        &self,
        s: u64,
        oracle_a: &dyn SetView,
        oracle_c: Option<&dyn SetView>,
        x: u64,
    ) -> Option<&TimedAxiom> {
        let list = self.by_input.get(&x)?;
        list.iter().map(|&i| &self.axioms[i]).find(|ta| {
            ta.stage <= s
                && in_cone(&ta.axiom.theta, oracle_a)
                && match (&ta.axiom.sigma, oracle_c) {
                    (Some(sigma), Some(c)) => in_cone(sigma, c),
                    (None, _) => true,
                    (Some(_), None) => false,
                }
        })
    }
}

pub fn validate_consistency(table: &FunctionalTable) -> Result<(), ConflictError> {
    table.validate_consistency()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Convergent { k: bool, use_len: usize },
    Divergent,
}

impl Outcome {
    pub fn value(self) -> Option<bool> {
        match self {
            Outcome::Convergent { k, .. } => Some(k),
            Outcome::Divergent => None,
        }
    }
}

/// `Φ_{e,s}^{A ⊕ C}(x)`. Among applicable axioms the one with least
/// `(use, k)` wins.
pub fn evaluate(
    table: &FunctionalTable,
    s: u64,
    oracle_a: &dyn SetView,
    oracle_c: Option<&dyn SetView>,
    x: u64,
) -> Outcome {
    match table.applicable(s, oracle_a, oracle_c, x) {
        Some(ta) => Outcome::Convergent {
            k: ta.axiom.k,
            use_len: ta.axiom.use_len(),
        },
        None => Outcome::Divergent,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bits(s: &str) -> BitString {
        s.parse().unwrap()
    }

    fn set(xs: &[u64]) -> Snapshot {
        Snapshot {
            stage: 0,
            members: xs.iter().copied().collect(),
        }
    }

    fn phi(axioms: Vec<(u64, Axiom)>) -> FunctionalTable {
        FunctionalTable::new(
            FunctionalId {
                side: Side::Zero,
                index: 0,
            },
            axioms
                .into_iter()
                .map(|(stage, axiom)| TimedAxiom { stage, axiom })
                .collect(),
        )
    }

    #[test]
    fn pairing_examples() {
        assert_eq!(pair(0, 0), 0);
        assert_eq!(pair(1, 2), 8);
        assert_eq!(pair(2, 1), 7);
        assert_eq!(unpair(0), (0, 0));
        assert_eq!(unpair(8), (1, 2));
        assert_eq!(unpair(7), (2, 1));
    }

    #[test]
    fn pairing_is_a_bijection_on_an_initial_segment() {
        let h = 64u64;
        let mut seen = BTreeSet::new();
        for n in 0..2 * h * h {
            let (a, b) = unpair(n);
            assert_eq!(pair(a, b), n);
            assert!(seen.insert((a, b)));
        }
    }

    #[test]
    fn snapshot_cutoffs() {
        let empty = EnumerationSchedule::new(Role::D);
        assert!(empty.snapshot(5).members.is_empty());
        let one = EnumerationSchedule::from_entries(Role::D, [(1, 5)]).unwrap();
        assert!(one.snapshot(0).members.is_empty());
        assert_eq!(one.snapshot(1).members, [5].into());
        let two = EnumerationSchedule::from_entries(Role::D, [(1, 5), (3, 2)]).unwrap();
        assert_eq!(two.snapshot(3).members, [2, 5].into());
        assert_eq!(two.snapshot(2).members, [5].into());
    }

    #[test]
    fn schedule_rejects_reenumeration_and_b_violations() {
        let err = EnumerationSchedule::from_entries(Role::D, [(1, 5), (3, 5)]).unwrap_err();
        assert!(matches!(
            err[0],
            ScheduleError::Reenumerated { element: 5, .. }
        ));
        let err = EnumerationSchedule::from_entries(Role::B, [(3, 1), (3, 2)]).unwrap_err();
        assert!(matches!(
            err[0],
            ScheduleError::CrowdedOddStage { stage: 3, .. }
        ));
        let err = EnumerationSchedule::from_entries(Role::B, [(2, 1)]).unwrap_err();
        assert!(matches!(
            err[0],
            ScheduleError::EvenStageArrival { stage: 2, .. }
        ));
        assert!(EnumerationSchedule::from_entries(Role::B, [(1, 4), (5, 2)]).is_ok());
    }

    #[test]
    fn cone_examples() {
        assert!(in_cone(&BitString::empty(), &set(&[3, 4])));
        assert!(in_cone(&bits("010"), &set(&[1])));
        assert!(!in_cone(&bits("010"), &set(&[0, 1])));
        // positions past the string are unconstrained
        assert!(in_cone(&bits("010"), &set(&[1, 7])));
    }

    #[test]
    fn bitstring_parsing() {
        assert_eq!(bits("0110").to_string(), "0110");
        assert_eq!(bits("").len(), 0);
        assert!("01a".parse::<BitString>().is_err());
        assert!(bits("01").is_prefix_of(&bits("011")));
        assert!(!bits("011").is_prefix_of(&bits("01")));
        assert!(bits("011").compatible(&bits("01")));
        assert!(!bits("1").compatible(&bits("0")));
    }

    #[test]
    fn evaluate_examples() {
        let empty = phi(vec![]);
        assert_eq!(evaluate(&empty, 5, &set(&[]), None, 0), Outcome::Divergent);
        let one = phi(vec![(2, Axiom::unary(bits("00"), 0, true))]);
        assert_eq!(
            evaluate(&one, 2, &set(&[]), None, 0),
            Outcome::Convergent {
                k: true,
                use_len: 2
            }
        );
        assert_eq!(evaluate(&one, 1, &set(&[]), None, 0), Outcome::Divergent);
        assert_eq!(evaluate(&one, 2, &set(&[1]), None, 0), Outcome::Divergent);
    }

    #[test]
    fn evaluate_prefers_smallest_use() {
        let t = phi(vec![
            (0, Axiom::unary(bits("000"), 0, false)),
            (0, Axiom::unary(bits("0"), 0, false)),
        ]);
        assert_eq!(
            evaluate(&t, 0, &set(&[]), None, 0),
            Outcome::Convergent {
                k: false,
                use_len: 1
            }
        );
    }

    #[test]
    fn binary_evaluation_needs_both_oracles() {
        let t = phi(vec![(0, Axiom::binary(bits("0"), bits("1"), 0, true))]);
        assert!(t.is_binary());
        let c_yes = set(&[0]);
        let c_no = set(&[]);
        assert_eq!(
            evaluate(&t, 0, &set(&[]), Some(&c_yes), 0).value(),
            Some(true)
        );
        assert_eq!(
            evaluate(&t, 0, &set(&[]), Some(&c_no), 0),
            Outcome::Divergent
        );
        assert_eq!(evaluate(&t, 0, &set(&[]), None, 0), Outcome::Divergent);
    }

    #[test]
    fn consistency_examples() {
        assert!(phi(vec![]).validate_consistency().is_ok());
        let bad = phi(vec![
            (0, Axiom::unary(bits("0"), 0, false)),
            (0, Axiom::unary(bits("01"), 0, true)),
        ]);
        assert_eq!(
            bad.validate_consistency(),
            Err(ConflictError {
                pairs: vec![(0, 1)]
            })
        );
        let ok = phi(vec![
            (0, Axiom::unary(bits("0"), 0, false)),
            (0, Axiom::unary(bits("1"), 0, true)),
        ]);
        assert!(ok.validate_consistency().is_ok());
        // binary axioms with incompatible C-segments do not conflict
        let ok2 = phi(vec![
            (0, Axiom::binary(bits("0"), bits("0"), 0, false)),
            (0, Axiom::binary(bits("0"), bits("1"), 0, true)),
        ]);
        assert!(ok2.validate_consistency().is_ok());
    }

    fn arb_bits(max: usize) -> impl Strategy<Value = BitString> {
        prop::collection::vec(any::<bool>(), 0..max).prop_map(BitString::new)
    }

    proptest! {
        #[test]
        fn unpair_inverts_pair(a in 0u64..1_000_000, b in 0u64..1_000_000) {
            prop_assert_eq!(unpair(pair(a, b)), (a, b));
        }

        #[test]
        fn snapshots_grow(entries in prop::collection::btree_map(0u64..40, 0u64..30, 0..20),
                          s in 0u64..30, t in 0u64..30) {
            let sched = EnumerationSchedule::from_entries(
                Role::D, entries.iter().map(|(&e, &st)| (st, e))).unwrap();
            let (lo, hi) = (s.min(t), s.max(t));
            prop_assert!(sched.snapshot(lo).members.is_subset(&sched.snapshot(hi).members));
        }

        #[test]
        fn cone_respects_extension(long in arb_bits(12), cut in 0usize..12,
                                   members in prop::collection::btree_set(0u64..12, 0..12)) {
            let short = BitString::new(long.bits()[..cut.min(long.len())].to_vec());
            if in_cone(&long, &members) {
                prop_assert!(in_cone(&short, &members));
            }
        }

        #[test]
        fn evaluation_survives_unchanged_oracle_below_use(
            theta in arb_bits(6), k in any::<bool>(), appear in 0u64..5,
            s in 0u64..5, extra in 0u64..5,
            above in prop::collection::btree_set(6u64..12, 0..4)) {
            let t = phi(vec![(appear, Axiom::unary(theta.clone(), 0, k))]);
            let a: BTreeSet<u64> = theta.bits().iter().enumerate()
                .filter(|(_, &b)| b).map(|(i, _)| i as u64).collect();
            let before = evaluate(&t, s, &a, None, 0);
            let mut later = a.clone();
            later.extend(above.iter().copied());
            let after = evaluate(&t, s + extra, &later, None, 0);
            if let Outcome::Convergent { .. } = before {
                prop_assert_eq!(before, after);
            }
        }
    }
}
