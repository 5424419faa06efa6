//! Approximations with a computable bound on mind changes, and the change-set
//! coding that recovers an initial segment of the limit from a c.e. set plus
//! a parity count.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::model::{pair, EnumerationSchedule, Role, SetView};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ApproxError {
    #[error("row {x} has {len} values, expected horizon+1 = {expected}")]
    WrongLength { x: u64, len: usize, expected: usize },
    #[error("row {x} starts at 1; approximations start at 0")]
    NonzeroStart { x: u64 },
    #[error("row {x} changes {changes} times but its bound is {bound}")]
    TooManyChanges { x: u64, changes: usize, bound: u64 },
    #[error("row {x} has bound 0")]
    ZeroBound { x: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Row {
    values: Vec<bool>,
    bound: u64,
}

/// `f(x, s)` for `x < width` and `s ≤ horizon`, with bounds `b(x)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ApproxTable {
    horizon: u64,
    rows: Vec<Row>,
}

impl ApproxTable {
    /// Rows are `(values f(x,0..=H), bound b(x))`.
    pub fn new(horizon: u64, rows: Vec<(Vec<bool>, u64)>) -> Result<Self, ApproxError> {
        let expected = horizon as usize + 1;
        let mut out = Vec::with_capacity(rows.len());
        for (x, (values, bound)) in rows.into_iter().enumerate() {
            let x = x as u64;
            if values.len() != expected {
                return Err(ApproxError::WrongLength {
                    x,
                    len: values.len(),
                    expected,
                });
            }
            if bound == 0 {
                return Err(ApproxError::ZeroBound { x });
            }
            if values[0] {
                return Err(ApproxError::NonzeroStart { x });
            }
            let changes = count_changes(&values);
            if changes as u64 >= bound {
                return Err(ApproxError::TooManyChanges { x, changes, bound });
            }
            out.push(Row { values, bound });
        }
        Ok(ApproxTable { horizon, rows: out })
    }

    /// Builds rows from the stages `s` at which `f(x, s+1) ≠ f(x, s)`.
    pub fn from_flips(horizon: u64, rows: Vec<(Vec<u64>, u64)>) -> Result<Self, ApproxError> {
        let rows = rows
            .into_iter()
            .map(|(flips, bound)| {
                let mut values = vec![false; horizon as usize + 1];
                let mut cur = false;
                for s in 0..horizon {
                    if flips.contains(&s) {
                        cur = !cur;
                    }
                    values[s as usize + 1] = cur;
                }
                (values, bound)
            })
            .collect();
        ApproxTable::new(horizon, rows)
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// Number of points `x` with a row.
    pub fn width(&self) -> u64 {
        self.rows.len() as u64
    }

    pub fn value(&self, x: u64, s: u64) -> bool {
        self.rows[x as usize].values[s as usize]
    }

    pub fn bound(&self, x: u64) -> u64 {
        self.rows[x as usize].bound
    }

    pub fn mind_changes(&self, x: u64) -> usize {
        count_changes(&self.rows[x as usize].values)
    }
}

fn count_changes(values: &[bool]) -> usize {
    values.windows(2).filter(|w| w[0] != w[1]).count()
}

/// The c.e. set of codes `⟨x, i⟩`, one per mind change.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChangeSet {
    pub schedule: EnumerationSchedule,
}

/// The limit value, read at the horizon.
pub fn limit_eval(tab: &ApproxTable, x: u64) -> bool {
    tab.value(x, tab.horizon)
}

/// Enumerates `⟨x, i−1⟩` at stage `s` when `f(x, s+1) ≠ f(x, s)` for the
/// `i`-th time.
pub fn build_change_set(tab: &ApproxTable) -> ChangeSet {
    let mut schedule = EnumerationSchedule::new(Role::C);
    for x in 0..tab.width() {
        let mut i = 0;
        for s in 0..tab.horizon {
            if tab.value(x, s + 1) != tab.value(x, s) {
                schedule
                    .insert(s, pair(x, i))
                    .expect("change codes are distinct");
                i += 1;
            }
        }
    }
    ChangeSet { schedule }
}

/// `A ↾ n` recovered from the change set: `x ∈ A` iff the number of
/// `i < d` with `⟨x, i⟩ ∈ C` is odd, where `d = max{b(x) : x < n}`.
pub fn restrict(tab: &ApproxTable, n: u64) -> BTreeSet<u64> {
    restrict_with(tab, &build_change_set(tab), n)
}

/// As [`restrict`], reusing an already built change set.
pub fn restrict_with(tab: &ApproxTable, changes: &ChangeSet, n: u64) -> BTreeSet<u64> {
    let n = n.min(tab.width());
    let d = (0..n).map(|x| tab.bound(x)).max().unwrap_or(0);
    let coded = changes.schedule.view_at(tab.horizon);
    (0..n)
        .filter(|&x| (0..d).filter(|&i| coded.contains(pair(x, i))).count() % 2 == 1)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(flips: &[&[u64]]) -> ApproxTable {
        ApproxTable::from_flips(12, flips.iter().map(|f| (f.to_vec(), 4)).collect()).unwrap()
    }

    #[test]
    fn limit_examples() {
        let t = table(&[&[], &[3], &[3, 7]]);
        assert!(!limit_eval(&t, 0));
        assert!(limit_eval(&t, 1));
        assert!(!limit_eval(&t, 2));
        assert!(!t.value(1, 3));
        assert!(t.value(1, 4));
    }

    #[test]
    fn change_set_examples() {
        let quiet = table(&[&[]]);
        assert!(build_change_set(&quiet).schedule.is_empty());

        let mut rows: Vec<&[u64]> = vec![&[]; 6];
        rows[5] = &[3];
        let once = build_change_set(&table(&rows));
        assert_eq!(
            once.schedule.entries().collect::<Vec<_>>(),
            vec![(3, pair(5, 0))]
        );

        rows[5] = &[3, 7];
        let twice = build_change_set(&table(&rows));
        assert_eq!(
            twice.schedule.entries().collect::<Vec<_>>(),
            vec![(3, pair(5, 0)), (7, pair(5, 1))]
        );
    }

    #[test]
    fn restrict_examples() {
        let mut rows: Vec<&[u64]> = vec![&[]; 6];
        assert!(restrict(&table(&rows), 0).is_empty());
        rows[5] = &[3];
        assert_eq!(restrict(&table(&rows), 6), [5].into());
        rows[5] = &[3, 7];
        assert!(restrict(&table(&rows), 6).is_empty());
    }

    #[test]
    fn table_invariants_are_enforced() {
        assert_eq!(
            ApproxTable::new(2, vec![(vec![true, true, true], 3)]),
            Err(ApproxError::NonzeroStart { x: 0 })
        );
        assert_eq!(
            ApproxTable::from_flips(6, vec![(vec![1, 2], 2)]),
            Err(ApproxError::TooManyChanges {
                x: 0,
                changes: 2,
                bound: 2
            })
        );
        assert!(matches!(
            ApproxTable::new(2, vec![(vec![false], 3)]),
            Err(ApproxError::WrongLength { .. })
        ));
    }

    #[test]
    fn change_codes_stay_below_bound() {
        let t = ApproxTable::from_flips(20, vec![(vec![1, 4, 9], 4), (vec![2], 2)]).unwrap();
        let cs = build_change_set(&t);
        for (_, code) in cs.schedule.entries() {
            let (x, i) = crate::model::unpair(code);
            assert!(i < t.bound(x));
        }
    }
}
