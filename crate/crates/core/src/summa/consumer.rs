use std::collections::BTreeMap;
use std::sync::mpsc::Receiver;

use serde::Serialize;

use crate::grid::{LocalBlock, RankCoord};
use crate::matrix::{SparseMat, Triple};
use crate::scalar::Scalar;
use crate::semiring::Semiring;

/// One rank's share of one batch of output columns.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPiece<T> {
    pub batch: usize,
    pub rank: usize,
    pub coord: RankCoord,
    pub block: LocalBlock<T>,
}

/// Receives each finished batch, in batch order, with one piece per rank in
/// rank order. The pieces are dropped when `consume` returns.
pub trait BatchConsumer<T>: Send {
    fn consume(&mut self, batch: usize, pieces: &[BatchPiece<T>]);
}

/// Records per-batch sizes and nothing else.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BatchLog {
    pub batches: Vec<usize>,
    pub nnz: Vec<u64>,
    pub columns: Vec<usize>,
}

impl<T> BatchConsumer<T> for BatchLog {
    fn consume(&mut self, batch: usize, pieces: &[BatchPiece<T>]) {
        self.batches.push(batch);
        self.nnz.push(pieces.iter().map(|p| p.block.mat.nnz() as u64).sum());
        // every column appears once per row block
        self.columns.push(
            pieces
                .iter()
                .filter(|p| p.coord.i == 0)
                .map(|p| p.block.cols.len())
                .sum(),
        );
    }
}

/// Keeps the `k` largest entries of every output column and drops the rest.
/// Ties go to the smaller row index.
#[derive(Debug, Clone)]
pub struct TopKPruner<T> {
    k: usize,
    nrows: usize,
    ncols: usize,
    kept: Vec<Triple<T>>,
}

impl<T: Scalar + PartialOrd> TopKPruner<T> {
    pub fn new(k: usize, nrows: usize, ncols: usize) -> Self {
        TopKPruner {
            k,
            nrows,
            ncols,
            kept: Vec::new(),
        }
    }

    pub fn kept(&self) -> &[Triple<T>] {
        &self.kept
    }

    pub fn into_matrix<S: Semiring<Elem = T>>(self, sr: S) -> SparseMat<T> {
        SparseMat::from_triples(&self.kept, self.nrows, self.ncols, sr).expect("pruned entries lie inside the output shape")
    }
}

impl<T: Scalar + PartialOrd> BatchConsumer<T> for TopKPruner<T> {
    fn consume(&mut self, _batch: usize, pieces: &[BatchPiece<T>]) {
        let mut by_col: BTreeMap<usize, Vec<(usize, T)>> = BTreeMap::new();
        for p in pieces {
            for t in p.block.mat.triples() {
                by_col
                    .entry(p.block.cols.to_global(t.col))
                    .or_default()
                    .push((p.block.rows.to_global(t.row), t.val));
            }
        }
        for (col, mut entries) in by_col {
            entries.sort_by(|x, y| {
                y.1.partial_cmp(&x.1)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(x.0.cmp(&y.0))
            });
            entries.truncate(self.k);
            self.kept
                .extend(entries.into_iter().map(|(row, val)| Triple { row, col, val }));
        }
    }
}

/// Reorders pieces into complete batches and hands them over in order.
/// Returns how many batches were delivered.
pub(crate) fn drain_batches<T>(
    rx: Receiver<BatchPiece<T>>,
    ranks: usize,
    consumer: &mut dyn BatchConsumer<T>,
) -> usize {
    let mut waiting: BTreeMap<usize, Vec<BatchPiece<T>>> = BTreeMap::new();
    let mut next = 0;
    for piece in rx {
        waiting.entry(piece.batch).or_default().push(piece);
        while waiting.get(&next).is_some_and(|v| v.len() == ranks) {
            let mut pieces = waiting.remove(&next).expect("present");
            pieces.sort_by_key(|p| p.rank);
            consumer.consume(next, &pieces);
            next += 1;
        }
    }
    next
}
