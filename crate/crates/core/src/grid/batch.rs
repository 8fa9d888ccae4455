use super::{DistMatrix, GridError, IndexMap, LocalBlock};

/// Block-cyclic cut of a rank's local columns into `b` batches.
///
/// Columns are grouped into blocks of `width = ceil(local_cols / (b·l))`;
/// batch `t` takes blocks `t, t + b, t + 2b, …`. With even division every
/// batch gets exactly `l` blocks, one per layer after the fiber split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchSplit {
    local_cols: usize,
    batches: usize,
    width: usize,
}

impl BatchSplit {
    pub fn new(local_cols: usize, batches: usize, layers: usize) -> Result<Self, GridError> {
        if batches == 0 {
            return Err(GridError::ZeroBatches);
        }
        let width = local_cols.div_ceil(batches * layers.max(1)).max(1);
        Ok(BatchSplit {
            local_cols,
            batches,
            width,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn batches(&self) -> usize {
        self.batches
    }

    pub fn num_blocks(&self) -> usize {
        self.local_cols.div_ceil(self.width)
    }

    /// Local column runs of batch `t`.
    pub fn piece(&self, t: usize) -> IndexMap {
        assert!(t < self.batches);
        IndexMap::from_runs((t..self.num_blocks()).step_by(self.batches).map(|blk| {
            let start = blk * self.width;
            (start, self.width.min(self.local_cols - start))
        }))
    }
}

/// Cuts every rank's local B into `b` block-cyclic pieces. The column map of
/// each piece is in global terms.
pub fn batch_split_b<T: Copy>(db: &DistMatrix<T>, b: usize) -> Result<Vec<Vec<LocalBlock<T>>>, GridError> {
    if b == 0 {
        return Err(GridError::ZeroBatches);
    }
    db.blocks
        .iter()
        .map(|blk| {
            let split = BatchSplit::new(blk.mat.ncols(), b, db.grid.layers())?;
            Ok((0..b)
                .map(|t| {
                    let local = split.piece(t);
                    LocalBlock {
                        mat: blk.mat.select_cols(local.iter()),
                        rows: blk.rows.clone(),
                        cols: blk.cols.compose(&local),
                    }
                })
                .collect())
        })
        .collect()
}
