//! Blocks of requirements, their restraints, and Part I routing.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::model::Side;

/// `Λ(i)` (side zero) or `Υ(i)` (side one).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BlockId {
    pub side: Side,
    pub index: u64,
}

impl BlockId {
    pub fn lambda(index: u64) -> Self {
        BlockId {
            side: Side::Zero,
            index,
        }
    }

    pub fn upsilon(index: u64) -> Self {
        BlockId {
            side: Side::One,
            index,
        }
    }

    /// `Λ(0) < Υ(0) < Λ(1) < Υ(1) < ⋯` as `0, 1, 2, 3, …`.
    pub fn order(self) -> u64 {
        2 * self.index + self.side.index() as u64
    }

    pub fn from_order(order: u64) -> Self {
        if order.is_multiple_of(2) {
            BlockId::lambda(order / 2)
        } else {
            BlockId::upsilon(order / 2)
        }
    }

    /// The block initialized when this one is threatened in Part I:
    /// `Λ(i) ↦ Υ(i)` and `Υ(i) ↦ Λ(i+1)`.
    pub fn next(self) -> Self {
        BlockId::from_order(self.order() + 1)
    }
}

impl Ord for BlockId {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.order().cmp(&other.order())
    }
}

impl PartialOrd for BlockId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.side {
            Side::Zero => 'L',
            Side::One => 'U',
        };
        write!(f, "{tag}:{}", self.index)
    }
}

impl FromStr for BlockId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (tag, idx) = s
            .split_once(':')
            .ok_or_else(|| format!("block id {s:?} must look like L:i or U:i"))?;
        let index = idx
            .parse()
            .map_err(|_| format!("bad block index in {s:?}"))?;
        match tag {
            "L" => Ok(BlockId::lambda(index)),
            "U" => Ok(BlockId::upsilon(index)),
            _ => Err(format!("block id {s:?} must start with L or U")),
        }
    }
}

/// `P_e` (side zero) or `Q_e` (side one).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReqId {
    pub side: Side,
    pub e: u64,
}

impl ReqId {
    pub fn p(e: u64) -> Self {
        ReqId {
            side: Side::Zero,
            e,
        }
    }

    pub fn q(e: u64) -> Self {
        ReqId { side: Side::One, e }
    }
}

impl fmt::Display for ReqId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.side.letter(), self.e)
    }
}

impl FromStr for ReqId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (tag, idx) = s
            .split_once(':')
            .ok_or_else(|| format!("requirement {s:?} must look like P:e or Q:e"))?;
        let e = idx
            .parse()
            .map_err(|_| format!("bad requirement index in {s:?}"))?;
        match tag {
            "P" => Ok(ReqId::p(e)),
            "Q" => Ok(ReqId::q(e)),
            _ => Err(format!("requirement {s:?} must start with P or Q")),
        }
    }
}

/// Snapshot of one block's bookkeeping. `restraint` is `-1` when unset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockState {
    pub id: BlockId,
    pub restraint: i64,
    pub last_initialized: Option<u64>,
}

impl BlockState {
    pub fn fresh(id: BlockId) -> Self {
        BlockState {
            id,
            restraint: -1,
            last_initialized: None,
        }
    }
}

pub fn priority_order(block: &BlockState) -> u64 {
    block.id.order()
}

/// `x ≤ ρ_s(i)` (or `τ_s(i)`).
pub fn threatens(x: u64, block: &BlockState) -> bool {
    (x as i64) <= block.restraint
}

/// Restraints of every block, materialized lazily by priority order.
#[derive(Clone, Debug, Default)]
pub struct BlockTable {
    restraints: BTreeMap<u64, i64>,
    // (stage, least order initialized) for every initialization
    inits: Vec<(u64, u64)>,
    max_restraint: BTreeMap<u64, i64>,
}

impl BlockTable {
    pub fn new() -> Self {
        BlockTable::default()
    }

    pub fn state(&self, id: BlockId) -> BlockState {
        BlockState {
            id,
            restraint: self.restraints.get(&id.order()).copied().unwrap_or(-1),
            last_initialized: self
                .inits
                .iter()
                .rev()
                .find(|&&(_, floor)| floor <= id.order())
                .map(|&(s, _)| s),
        }
    }

    pub fn restraint(&self, id: BlockId) -> i64 {
        self.restraints.get(&id.order()).copied().unwrap_or(-1)
    }

    pub fn set_restraint(&mut self, id: BlockId, value: i64) {
        self.restraints.insert(id.order(), value);
        let m = self.max_restraint.entry(id.order()).or_insert(-1);
        *m = (*m).max(value);
    }

    /// Every block currently holding a restraint, in priority order.
    pub fn restrained(&self) -> impl Iterator<Item = BlockState> + '_ {
        self.restraints
            .keys()
            .map(|&o| self.state(BlockId::from_order(o)))
    }

    /// Resets the target block and every block of larger priority order.
    pub fn initialize_from(&mut self, target: BlockId, stage: u64) {
        self.restraints.split_off(&target.order());
        self.inits.push((stage, target.order()));
    }

    pub fn initializations(&self) -> &[(u64, u64)] {
        &self.inits
    }

    /// Largest restraint each block ever held.
    pub fn max_restraints(&self) -> &BTreeMap<u64, i64> {
        &self.max_restraint
    }
}

/// Part I decision for one `B`-arrival.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Routing {
    pub into: Side,
    pub threatened: Option<BlockId>,
    pub initialize: Option<BlockId>,
}

/// Finds the threatened block of least priority order and applies (i.1)/(i.2).
pub fn route_element(x: u64, blocks: &BlockTable) -> Routing {
    let threatened = blocks.restrained().find(|b| threatens(x, b)).map(|b| b.id);
    match threatened {
        None => Routing {
            into: Side::Zero,
            threatened: None,
            initialize: None,
        },
        Some(id) => Routing {
            into: id.side.other(),
            threatened: Some(id),
            initialize: Some(id.next()),
        },
    }
}
