//! Per-rank computational kernels.
//!
//! The hash kernels never sort: multiplication and merging emit each column
//! in first-insertion order. The heap kernels keep everything sorted and
//! serve as the differential baseline. Only the final fiber merge output is
//! sorted, by [`finalize_sort`].
//!
//! Local multiplication keeps entries that cancel to zero so that stored
//! nonzeros always equal the structural count from [`local_symbolic`];
//! merges drop them.

mod accumulator;
mod hash;
mod heap;

pub use accumulator::HashAccumulator;
pub use hash::{hash_merge_unsorted, hash_spgemm_unsorted, local_symbolic, local_symbolic_per_col};
pub use heap::{heap_merge_sorted, heap_spgemm_sorted};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{MatrixError, SparseMat};
use crate::semiring::Semiring;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("kernel requires column-sorted input")]
    UnsortedInput,
    #[error("cannot merge an empty pile")]
    EmptyPile,
    #[error("pile parts disagree on shape: {expected:?} vs {found:?}")]
    PileShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("duplicate row {row} in column {col}")]
    DuplicateRows { row: usize, col: usize },
}

/// Partial results awaiting a merge, all of one shape.
#[derive(Debug, Clone)]
pub struct PartialPile<T> {
    parts: Vec<SparseMat<T>>,
}

impl<T> PartialPile<T> {
    pub fn new(parts: Vec<SparseMat<T>>) -> Result<Self, KernelError> {
        let first = parts.first().ok_or(KernelError::EmptyPile)?;
        let shape = first.shape();
        if let Some(p) = parts.iter().find(|p| p.shape() != shape) {
            return Err(KernelError::PileShapeMismatch {
                expected: shape,
                found: p.shape(),
            });
        }
        Ok(PartialPile { parts })
    }

    pub fn parts(&self) -> &[SparseMat<T>] {
        &self.parts
    }

    pub fn shape(&self) -> (usize, usize) {
        self.parts[0].shape()
    }

    pub fn nnz(&self) -> usize {
        self.parts.iter().map(|p| p.nnz()).sum()
    }

    pub fn into_parts(self) -> Vec<SparseMat<T>> {
        self.parts
    }
}

/// Which local multiply/merge family to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Hash,
    Heap,
}

impl Kernel {
    pub fn multiply<S: Semiring>(
        self,
        a: &SparseMat<S::Elem>,
        b: &SparseMat<S::Elem>,
        sr: S,
    ) -> Result<SparseMat<S::Elem>, KernelError> {
        match self {
            Kernel::Hash => Ok(hash_spgemm_unsorted(a, b, sr)?),
            Kernel::Heap => heap_spgemm_sorted(a, b, sr),
        }
    }

    pub fn merge<S: Semiring>(
        self,
        pile: &PartialPile<S::Elem>,
        sr: S,
    ) -> Result<SparseMat<S::Elem>, KernelError> {
        match self {
            Kernel::Hash => Ok(hash_merge_unsorted(pile, sr)),
            Kernel::Heap => heap_merge_sorted(pile, sr),
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hash" => Ok(Kernel::Hash),
            "heap" => Ok(Kernel::Heap),
            other => Err(format!("unknown kernel '{other}' (expected hash or heap)")),
        }
    }
}

/// Sorts every column by row index. Fails if a column still has duplicates.
pub fn finalize_sort<T: Copy + Send + Sync>(m: &SparseMat<T>) -> Result<SparseMat<T>, KernelError> {
    if m.is_sorted() {
        return Ok(m.clone());
    }
    let cols = build_columns(m.ncols(), |j, rows: &mut Vec<usize>, vals: &mut Vec<T>| {
        let (r, v) = m.col(j);
        let mut pairs: Vec<(usize, T)> = r.iter().copied().zip(v.iter().copied()).collect();
        pairs.sort_unstable_by_key(|&(row, _)| row);
        if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(KernelError::DuplicateRows { row: w[0].0, col: j });
        }
        for (row, val) in pairs {
            rows.push(row);
            vals.push(val);
        }
        Ok(())
    })?;
    Ok(cols.into_matrix(m.nrows(), true))
}

/// Column-chunked output under construction.
pub(crate) struct Columns<T> {
    col_ptr: Vec<usize>,
    rows: Vec<usize>,
    vals: Vec<T>,
}

impl<T> Columns<T> {
    pub(crate) fn into_matrix(self, nrows: usize, sorted: bool) -> SparseMat<T> {
        let ncols = self.col_ptr.len() - 1;
        SparseMat::from_parts_unchecked(nrows, ncols, self.col_ptr, self.rows, self.vals, sorted)
    }
}

const COLS_PER_CHUNK: usize = 256;

/// Runs `fill(j, rows, vals)` for every column, in parallel over column
/// chunks, and stitches the results together in column order. Output is
/// independent of the worker count.
pub(crate) fn build_columns<T, F>(ncols: usize, fill: F) -> Result<Columns<T>, KernelError>
where
    T: Send,
    F: Fn(usize, &mut Vec<usize>, &mut Vec<T>) -> Result<(), KernelError> + Sync,
{
    build_columns_with(ncols, || (), |_, j, r, v| fill(j, r, v))
}

type Chunk<T> = (Vec<usize>, Vec<usize>, Vec<T>);

/// Like [`build_columns`] with per-chunk scratch state from `init`.
pub(crate) fn build_columns_with<T, W, I, F>(
    ncols: usize,
    init: I,
    fill: F,
) -> Result<Columns<T>, KernelError>
where
    T: Send,
    I: Fn() -> W + Sync,
    F: Fn(&mut W, usize, &mut Vec<usize>, &mut Vec<T>) -> Result<(), KernelError> + Sync,
{
    let run_chunk = |start: usize| -> Result<Chunk<T>, KernelError> {
        let end = (start + COLS_PER_CHUNK).min(ncols);
        let mut scratch = init();
        let mut counts = Vec::with_capacity(end - start);
        let mut rows = Vec::new();
        let mut vals = Vec::new();
        for j in start..end {
            let before = rows.len();
            fill(&mut scratch, j, &mut rows, &mut vals)?;
            counts.push(rows.len() - before);
        }
        Ok((counts, rows, vals))
    };
    let starts: Vec<usize> = (0..ncols).step_by(COLS_PER_CHUNK).collect();
    let chunks: Vec<_> = if starts.len() > 1 {
        starts.par_iter().map(|&s| run_chunk(s)).collect::<Result<_, _>>()?
    } else {
        starts.iter().map(|&s| run_chunk(s)).collect::<Result<_, _>>()?
    };
    let total: usize = chunks.iter().map(|c| c.1.len()).sum();
    let mut col_ptr = Vec::with_capacity(ncols + 1);
    col_ptr.push(0);
    let mut rows = Vec::with_capacity(total);
    let mut vals = Vec::with_capacity(total);
    for (counts, r, v) in chunks {
        for c in counts {
            let last = *col_ptr.last().unwrap();
            col_ptr.push(last + c);
        }
        rows.extend(r);
        vals.extend(v);
    }
    Ok(Columns { col_ptr, rows, vals })
}
