use serde::{Deserialize, Serialize};

use super::{Bounds, Streamline, Termination, Vec3};
use crate::error::{Error, Result};

pub type BlockId = i32;

/// Marks the end of a trajectory (left the domain or hit a critical point).
pub const TERMINAL: BlockId = -1;

/// Regular partition of a box into `nblocks` slabs per axis. Block ids run
/// x-fastest; per axis the index is `min(floor(frac · n), n - 1)`, so the
/// upper faces belong to the last slab.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockGrid {
    pub bounds: Bounds,
    pub nblocks: [usize; 3],
}

impl BlockGrid {
    pub fn new(bounds: Bounds, nblocks: [usize; 3]) -> Result<Self> {
        if nblocks.contains(&0) {
            return Err(Error::Config(format!(
                "block dimensions must be positive, got {nblocks:?}"
            )));
        }
        Ok(BlockGrid { bounds, nblocks })
    }

    pub fn block_count(&self) -> usize {
        self.nblocks.iter().product()
    }

    pub fn block_of(&self, p: Vec3) -> BlockId {
        if !self.bounds.contains(p) {
            return TERMINAL;
        }
        let mut c = [0usize; 3];
        for a in 0..3 {
            let frac = (p[a] - self.bounds.min[a]) / (self.bounds.max[a] - self.bounds.min[a]);
            c[a] = ((frac * self.nblocks[a] as f64).floor() as usize).min(self.nblocks[a] - 1);
        }
        self.id_of(c)
    }

    pub fn id_of(&self, c: [usize; 3]) -> BlockId {
        (c[0] + self.nblocks[0] * (c[1] + self.nblocks[1] * c[2])) as BlockId
    }

    pub fn coords_of(&self, id: BlockId) -> [usize; 3] {
        let id = id as usize;
        let nx = self.nblocks[0];
        let ny = self.nblocks[1];
        [id % nx, (id / nx) % ny, id / (nx * ny)]
    }

    pub fn block_edges(&self) -> Vec3 {
        let e = self.bounds.extent();
        [
            e[0] / self.nblocks[0] as f64,
            e[1] / self.nblocks[1] as f64,
            e[2] / self.nblocks[2] as f64,
        ]
    }

    pub fn min_block_edge(&self) -> f64 {
        let e = self.block_edges();
        e[0].min(e[1]).min(e[2])
    }
}

/// Ordered block visits of one particle: no consecutive repeats, and
/// [`TERMINAL`] at most once, in last position.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlockSequence(Vec<BlockId>);

impl BlockSequence {
    pub fn new(blocks: Vec<BlockId>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(seq_err("empty sequence"));
        }
        for (i, w) in blocks.windows(2).enumerate() {
            if w[0] == w[1] {
                return Err(seq_err(format!(
                    "repeated block {} at position {}",
                    w[0],
                    i + 1
                )));
            }
        }
        if let Some(i) = blocks[..blocks.len() - 1]
            .iter()
            .position(|&b| b == TERMINAL)
        {
            return Err(seq_err(format!(
                "terminal marker at position {i} is not last"
            )));
        }
        if let Some(&b) = blocks.iter().find(|&&b| b < TERMINAL) {
            return Err(seq_err(format!("invalid block id {b}")));
        }
        if blocks == [TERMINAL] {
            return Err(seq_err("sequence has no blocks before the terminal marker"));
        }
        Ok(BlockSequence(blocks))
    }

    /// Builds a sequence, collapsing consecutive repeats first.
    pub fn from_visits(visits: impl IntoIterator<Item = BlockId>) -> Result<Self> {
        let mut blocks: Vec<BlockId> = Vec::new();
        for b in visits {
            if blocks.last() != Some(&b) {
                blocks.push(b);
            }
        }
        Self::new(blocks)
    }

    pub fn blocks(&self) -> &[BlockId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn terminated(&self) -> bool {
        self.0.last() == Some(&TERMINAL)
    }

    /// Block ids without the terminal marker.
    pub fn visits(&self) -> &[BlockId] {
        if self.terminated() {
            &self.0[..self.0.len() - 1]
        } else {
            &self.0
        }
    }
}

fn seq_err(reason: impl Into<String>) -> Error {
    Error::Sequence {
        line: 0,
        reason: reason.into(),
    }
}

pub fn to_block_sequence(streamline: &Streamline, grid: &BlockGrid) -> BlockSequence {
    block_path(streamline, grid).0
}

/// Block sequence of a streamline together with, for every point, the index
/// of the sequence entry the point belongs to.
pub fn block_path(streamline: &Streamline, grid: &BlockGrid) -> (BlockSequence, Vec<usize>) {
    let mut blocks: Vec<BlockId> = Vec::new();
    let mut index = Vec::with_capacity(streamline.points.len());
    for &p in &streamline.points {
        let b = grid.block_of(p);
        if b == TERMINAL {
            // tracer points are in bounds; anything else ends the path
            break;
        }
        if blocks.last() != Some(&b) {
            blocks.push(b);
        }
        index.push(blocks.len() - 1);
    }
    if matches!(
        streamline.termination,
        Termination::OutOfBounds | Termination::ZeroVelocity
    ) || index.len() < streamline.points.len()
    {
        blocks.push(TERMINAL);
    }
    (BlockSequence(blocks), index)
}
