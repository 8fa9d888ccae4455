use serde::Serialize;

use super::{GridError, GridShape3D, IndexMap, RankCoord};
use crate::matrix::SparseMat;

/// Which layout a distributed matrix follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Role {
    /// Row block `i`, layer `k`'s slice of column block `j`. Also used for C.
    A,
    /// Layer `k`'s slice of row block `i`, column block `j`.
    B,
    /// Output pieces; same cut as `A` unless batching reshaped the columns.
    C,
}

/// One rank's piece with its global row and column maps.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalBlock<T> {
    pub mat: SparseMat<T>,
    pub rows: IndexMap,
    pub cols: IndexMap,
}

impl<T: Copy> LocalBlock<T> {
    pub fn cut(global: &SparseMat<T>, rows: (usize, usize), cols: (usize, usize)) -> Self {
        let mat = global
            .col_range(cols.0, cols.0 + cols.1)
            .row_range(rows.0, rows.0 + rows.1);
        LocalBlock {
            mat,
            rows: IndexMap::contiguous(rows.0, rows.1),
            cols: IndexMap::contiguous(cols.0, cols.1),
        }
    }
}

/// A matrix spread over the grid, one block per rank in rank order.
#[derive(Debug, Clone, PartialEq)]
pub struct DistMatrix<T> {
    pub grid: GridShape3D,
    pub role: Role,
    pub nrows: usize,
    pub ncols: usize,
    pub blocks: Vec<LocalBlock<T>>,
}

impl<T> DistMatrix<T> {
    pub fn block(&self, c: RankCoord) -> &LocalBlock<T> {
        &self.blocks[self.grid.rank_of(c)]
    }

    pub fn nnz(&self) -> usize {
        self.blocks.iter().map(|b| b.mat.nnz()).sum()
    }

    pub fn max_local_nnz(&self) -> usize {
        self.blocks.iter().map(|b| b.mat.nnz()).max().unwrap_or(0)
    }
}

pub fn distribute_a<T: Copy>(a: &SparseMat<T>, grid: GridShape3D) -> DistMatrix<T> {
    let blocks = grid
        .coords()
        .map(|c| {
            LocalBlock::cut(
                a,
                grid.block(a.nrows(), c.i),
                grid.layered_block(a.ncols(), c.j, c.k),
            )
        })
        .collect();
    DistMatrix {
        grid,
        role: Role::A,
        nrows: a.nrows(),
        ncols: a.ncols(),
        blocks,
    }
}

pub fn distribute_b<T: Copy>(b: &SparseMat<T>, grid: GridShape3D) -> DistMatrix<T> {
    let blocks = grid
        .coords()
        .map(|c| {
            LocalBlock::cut(
                b,
                grid.layered_block(b.nrows(), c.i, c.k),
                grid.block(b.ncols(), c.j),
            )
        })
        .collect();
    DistMatrix {
        grid,
        role: Role::B,
        nrows: b.nrows(),
        ncols: b.ncols(),
        blocks,
    }
}

/// Lays out an output matrix the way unbatched 3D SUMMA leaves it.
pub fn distribute_c_like_a<T: Copy>(c: &SparseMat<T>, grid: GridShape3D) -> DistMatrix<T> {
    DistMatrix {
        role: Role::C,
        ..distribute_a(c, grid)
    }
}

/// Reassembles the global matrix from the local blocks.
pub fn gather_global<T: Copy>(d: &DistMatrix<T>) -> Result<SparseMat<T>, GridError> {
    if d.blocks.len() != d.grid.ranks() {
        return Err(GridError::BlockCount {
            expected: d.grid.ranks(),
            found: d.blocks.len(),
        });
    }
    for (x, bx) in d.blocks.iter().enumerate() {
        for (y, by) in d.blocks.iter().enumerate().skip(x + 1) {
            if bx.rows.intersects(&by.rows) && bx.cols.intersects(&by.cols) {
                return Err(GridError::OverlapDetected { first: x, second: y });
            }
        }
    }
    let mut per_col: Vec<Vec<(usize, T)>> = vec![Vec::new(); d.ncols];
    for blk in &d.blocks {
        let rows: Vec<usize> = blk.rows.iter().collect();
        for (local_j, gj) in blk.cols.iter().enumerate() {
            let (r, v) = blk.mat.col(local_j);
            per_col[gj].extend(r.iter().zip(v).map(|(&lr, &val)| (rows[lr], val)));
        }
    }
    let mut col_ptr = Vec::with_capacity(d.ncols + 1);
    col_ptr.push(0);
    let mut row_idx = Vec::new();
    let mut values = Vec::new();
    let mut sorted = true;
    for mut col in per_col {
        col.sort_by_key(|e| e.0);
        sorted &= col.windows(2).all(|w| w[0].0 < w[1].0);
        for (r, v) in col {
            row_idx.push(r);
            values.push(v);
        }
        col_ptr.push(row_idx.len());
    }
    Ok(SparseMat::from_parts(d.nrows, d.ncols, col_ptr, row_idx, values, sorted)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::matrix::Triple;
    use crate::semiring::PlusTimes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, m: usize, n: usize, d: f64) -> SparseMat<i64> {
        let mut t = Vec::new();
        for i in 0..m {
            for j in 0..n {
                if rng.gen_bool(d) {
                    t.push(Triple::new(i, j, rng.gen_range(1..100)));
                }
            }
        }
        SparseMat::from_triples(&t, m, n, PlusTimes::new()).unwrap()
    }

    #[test]
    fn eight_rank_block_shapes() {
        let g = make_grid(8, 2).unwrap();
        let m = SparseMat::<i64>::identity(8);
        for blk in &distribute_a(&m, g).blocks {
            assert_eq!(blk.mat.shape(), (4, 2));
        }
        for blk in &distribute_b(&m, g).blocks {
            assert_eq!(blk.mat.shape(), (2, 4));
        }
    }

    #[test]
    fn single_layer_is_2d_blocking() {
        let g = make_grid(4, 1).unwrap();
        let m = SparseMat::<i64>::identity(6);
        let da = distribute_a(&m, g);
        let db = distribute_b(&m, g);
        for (x, y) in da.blocks.iter().zip(&db.blocks) {
            assert_eq!(x.mat.shape(), (3, 3));
            assert_eq!(x, y);
        }
    }

    #[test]
    fn shape_law_when_divisible() {
        let g = make_grid(16, 4).unwrap();
        let m = SparseMat::<i64>::identity(32);
        for blk in &distribute_a(&m, g).blocks {
            assert_eq!(blk.mat.nrows(), g.layers() * blk.mat.ncols());
        }
        for blk in &distribute_b(&m, g).blocks {
            assert_eq!(blk.mat.ncols(), g.layers() * blk.mat.nrows());
        }
    }

    #[test]
    fn round_trips_and_disjoint_cover() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let grids = [(1, 1), (4, 1), (8, 2), (16, 4), (16, 16), (18, 2)];
        for _ in 0..50 {
            let (p, l) = grids[rng.gen_range(0..grids.len())];
            let g = make_grid(p, l).unwrap();
            let (m, n) = (rng.gen_range(0..20), rng.gen_range(0..20));
            let mat = random(&mut rng, m, n, 0.3);
            let da = distribute_a(&mat, g);
            let db = distribute_b(&mat, g);
            assert_eq!(da.nnz(), mat.nnz());
            assert_eq!(db.nnz(), mat.nnz());
            assert_eq!(gather_global(&da).unwrap(), mat);
            assert_eq!(gather_global(&db).unwrap(), mat);
        }
    }

    #[test]
    fn single_rank_and_empty() {
        let g = make_grid(1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mat = random(&mut rng, 5, 7, 0.4);
        assert_eq!(distribute_a(&mat, g).blocks[0].mat, mat);
        let empty = SparseMat::<i64>::empty(0, 0);
        assert_eq!(gather_global(&distribute_b(&empty, make_grid(4, 1).unwrap())).unwrap(), empty);
    }

    #[test]
    fn overlap_is_detected() {
        let g = make_grid(4, 1).unwrap();
        let mut d = distribute_a(&SparseMat::<i64>::identity(4), g);
        d.blocks[1].rows = d.blocks[0].rows.clone();
        d.blocks[1].cols = d.blocks[0].cols.clone();
        assert_eq!(
            gather_global(&d),
            Err(GridError::OverlapDetected { first: 0, second: 1 })
        );
    }
}
