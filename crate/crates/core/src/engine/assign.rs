//! Dynamic priority assignments `λ_s` and `μ_s`.
//!
//! Both maps are nondecreasing in the requirement index, so every block is an
//! interval of indices. An assignment is stored as the first member of each
//! explicitly materialized block; past the last one every block is a
//! singleton continuing the sequence.

use std::ops::Range;

use thiserror::Error;

use super::block::BlockId;
use crate::model::Side;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AssignmentError {
    #[error("tail requirement {tail} of block {block} lies beyond stage {stage}")]
    TailBeyondStage {
        block: BlockId,
        tail: u64,
        stage: u64,
    },
}

/// One side of the assignment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockIntervals {
    starts: Vec<u64>,
}

impl Default for BlockIntervals {
    fn default() -> Self {
        BlockIntervals { starts: vec![0] }
    }
}

impl BlockIntervals {
    /// First member of block `i`.
    pub fn first(&self, i: u64) -> u64 {
        let last = self.starts.len() as u64 - 1;
        if i <= last {
            self.starts[i as usize]
        } else {
            self.starts[last as usize] + (i - last)
        }
    }

    pub fn members(&self, i: u64) -> Range<u64> {
        self.first(i)..self.first(i + 1)
    }

    /// Largest index in block `i`.
    pub fn tail(&self, i: u64) -> u64 {
        self.first(i + 1) - 1
    }

    /// The block holding requirement `e`.
    pub fn block_of(&self, e: u64) -> u64 {
        let last = self.starts.len() - 1;
        if e >= self.starts[last] {
            last as u64 + (e - self.starts[last])
        } else {
            (self.starts.partition_point(|&st| st <= e) - 1) as u64
        }
    }

    /// Items (1)–(3): keep indices up to the tail of block `i`, put
    /// `tail+1 ..= s` into block `i`, and send `s + j` to block `i + j`.
    fn absorb(&mut self, i: u64, s: u64) {
        while (self.starts.len() as u64) <= i {
            let next = self.first(self.starts.len() as u64);
            self.starts.push(next);
        }
        self.starts.truncate(i as usize + 1);
        self.starts.push(s + 1);
    }
}

/// What Part III did at one stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UpdateRecord {
    pub initiator: BlockId,
    /// Tail requirement of the initiator before the update.
    pub tail: u64,
    /// `λ_{s−1}(P_s) − i` (or the `μ` analogue).
    pub shift: u64,
}

/// `λ_s` and `μ_s`, plus per-index change history for stabilization reports.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PriorityAssignment {
    sides: [BlockIntervals; 2],
    tracked: u64,
    last_change: [Vec<Option<u64>>; 2],
}

impl PriorityAssignment {
    /// Identity assignment `λ_0(P_j) = μ_0(Q_j) = j`; change history is kept
    /// for indices `0..=tracked`.
    pub fn new(tracked: u64) -> Self {
        let n = tracked as usize + 1;
        PriorityAssignment {
            sides: [BlockIntervals::default(), BlockIntervals::default()],
            tracked,
            last_change: [vec![None; n], vec![None; n]],
        }
    }

    pub fn intervals(&self, side: Side) -> &BlockIntervals {
        &self.sides[side.index() as usize]
    }

    /// `λ(P_e)` for side zero, `μ(Q_e)` for side one.
    pub fn block_of(&self, side: Side, e: u64) -> u64 {
        self.intervals(side).block_of(e)
    }

    pub fn members(&self, block: BlockId) -> Range<u64> {
        self.intervals(block.side).members(block.index)
    }

    pub fn tail(&self, block: BlockId) -> u64 {
        self.intervals(block.side).tail(block.index)
    }

    pub fn last_change(&self, side: Side, e: u64) -> Option<u64> {
        self.last_change[side.index() as usize]
            .get(e as usize)
            .copied()
            .flatten()
    }

    pub fn tracked(&self) -> u64 {
        self.tracked
    }

    /// Part III at stage `s`. `initiator` is the initialized block of least
    /// priority order, if any block was initialized.
    pub fn update(
        &mut self,
        s: u64,
        initiator: Option<BlockId>,
    ) -> Result<Option<UpdateRecord>, AssignmentError> {
        let Some(block) = initiator else {
            return Ok(None);
        };
        let side = block.side.index() as usize;
        let i = block.index;
        let tail = self.sides[side].tail(i);
        if tail > s {
            return Err(AssignmentError::TailBeyondStage {
                block,
                tail,
                stage: s,
            });
        }
        let shift = self.sides[side].block_of(s) - i;
        let before: Vec<u64> = (tail + 1..=self.tracked)
            .map(|e| self.sides[side].block_of(e))
            .collect();
        self.sides[side].absorb(i, s);
        for (e, old) in (tail + 1..=self.tracked).zip(before) {
            if self.sides[side].block_of(e) != old {
                self.last_change[side][e as usize] = Some(s);
            }
        }
        Ok(Some(UpdateRecord {
            initiator: block,
            tail,
            shift,
        }))
    }
}
