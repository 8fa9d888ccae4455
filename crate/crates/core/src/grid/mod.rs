//! The `q × q × l` process grid and how matrices are laid out on it.
//!
//! Rank `(i, j, k)` sits in row `i` and column `j` of layer `k`; its linear
//! id is `(k·q + i)·q + j`. Every cut below is ceil-first: when a dimension
//! does not divide evenly, lower-indexed blocks get the extra item.

mod batch;
mod dist;
mod index_map;

pub use batch::{batch_split_b, BatchSplit};
pub use dist::{distribute_a, distribute_b, distribute_c_like_a, gather_global, DistMatrix, LocalBlock, Role};
pub use index_map::IndexMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{block_range, MatrixError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GridError {
    #[error("{p} ranks cannot be split into {l} layers")]
    IndivisibleLayers { p: usize, l: usize },
    #[error("each layer must be a square grid, but p/l = {per_layer}")]
    NonSquareLayer { per_layer: usize },
    #[error("grid needs at least one rank and one layer")]
    Empty,
    #[error("batch count must be at least one")]
    ZeroBatches,
    #[error("local blocks of ranks {first} and {second} overlap")]
    OverlapDetected { first: usize, second: usize },
    #[error("distributed matrix has {found} blocks for a grid of {expected} ranks")]
    BlockCount { expected: usize, found: usize },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Shape of the 3D grid: `q × q` ranks per layer, `l` layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridShape3D {
    q: usize,
    l: usize,
}

impl GridShape3D {
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn layers(&self) -> usize {
        self.l
    }

    pub fn ranks(&self) -> usize {
        self.q * self.q * self.l
    }

    pub fn rank_of(&self, c: RankCoord) -> usize {
        debug_assert!(c.i < self.q && c.j < self.q && c.k < self.l);
        (c.k * self.q + c.i) * self.q + c.j
    }

    pub fn coord_of(&self, rank: usize) -> RankCoord {
        debug_assert!(rank < self.ranks());
        let j = rank % self.q;
        let i = (rank / self.q) % self.q;
        let k = rank / (self.q * self.q);
        RankCoord { i, j, k }
    }

    pub fn coords(&self) -> impl Iterator<Item = RankCoord> + '_ {
        (0..self.ranks()).map(|r| self.coord_of(r))
    }

    /// Rows of block `i` when `n` rows are cut into `q` blocks.
    pub fn block(&self, n: usize, i: usize) -> (usize, usize) {
        block_range(n, self.q, i)
    }

    /// Layer `k`'s contiguous sub-slice of block `blk`.
    pub fn layered_block(&self, n: usize, blk: usize, k: usize) -> (usize, usize) {
        let (start, len) = block_range(n, self.q, blk);
        let (off, sub) = block_range(len, self.l, k);
        (start + off, sub)
    }
}

/// A rank's position in the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RankCoord {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl RankCoord {
    pub fn new(i: usize, j: usize, k: usize) -> Self {
        RankCoord { i, j, k }
    }
}

/// Builds the `√(p/l) × √(p/l) × l` grid.
pub fn make_grid(p: usize, l: usize) -> Result<GridShape3D, GridError> {
    if p == 0 || l == 0 {
        return Err(GridError::Empty);
    }
    if !p.is_multiple_of(l) {
        return Err(GridError::IndivisibleLayers { p, l });
    }
    let per_layer = p / l;
    let q = (per_layer as f64).sqrt().round() as usize;
    if q * q != per_layer {
        return Err(GridError::NonSquareLayer { per_layer });
    }
    Ok(GridShape3D { q, l })
}

/// Layer counts that give a valid grid for `p` ranks.
pub fn valid_layer_counts(p: usize) -> Vec<usize> {
    (1..=p).filter(|&l| make_grid(p, l).is_ok()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shapes() {
        let g = make_grid(8, 2).unwrap();
        assert_eq!((g.q(), g.layers(), g.ranks()), (2, 2, 8));
        assert_eq!(make_grid(16, 1).unwrap().q(), 4);
        assert_eq!(make_grid(12, 2), Err(GridError::NonSquareLayer { per_layer: 6 }));
        assert_eq!(make_grid(8, 3), Err(GridError::IndivisibleLayers { p: 8, l: 3 }));
        assert_eq!(make_grid(0, 1), Err(GridError::Empty));
        assert_eq!(valid_layer_counts(16), vec![1, 4, 16]);
        assert_eq!(valid_layer_counts(8), vec![2, 8]);
    }

    #[test]
    fn rank_numbering_roundtrips() {
        let g = make_grid(18, 2).unwrap();
        for r in 0..g.ranks() {
            assert_eq!(g.rank_of(g.coord_of(r)), r);
        }
        assert_eq!(g.rank_of(RankCoord::new(1, 2, 1)), (3 + 1) * 3 + 2);
    }

    #[test]
    fn layered_blocks_tile_the_dimension() {
        let g = make_grid(18, 2).unwrap();
        for n in [0, 1, 5, 17, 36] {
            let mut covered = vec![0u8; n];
            for blk in 0..g.q() {
                for k in 0..g.layers() {
                    let (s, len) = g.layered_block(n, blk, k);
                    for c in &mut covered[s..s + len] {
                        *c += 1;
                    }
                }
            }
            assert!(covered.iter().all(|&c| c == 1));
        }
    }
}
