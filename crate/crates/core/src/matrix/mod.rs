//! Compressed sparse column storage and the structural operations on it.

mod oracle;
mod stats;

pub use oracle::{dense_multiply_counted, dense_multiply_oracle, ORACLE_MAX_DIM};
pub use stats::{compute_stats, MatStats};

use thiserror::Error;

use crate::scalar::Scalar;
use crate::semiring::Semiring;

const _: () = assert!(usize::BITS == 64, "indices must be 64-bit");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatrixError {
    #[error("entry ({row}, {col}) out of range for a {nrows}x{ncols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },
    #[error("cannot split into zero parts")]
    ZeroParts,
    #[error("row count mismatch: expected {expected}, found {found}")]
    RowCountMismatch { expected: usize, found: usize },
    #[error("nothing to concatenate")]
    EmptyConcat,
    #[error("dimension mismatch: {a_rows}x{a_cols} times {b_rows}x{b_cols}")]
    DimMismatch {
        a_rows: usize,
        a_cols: usize,
        b_rows: usize,
        b_cols: usize,
    },
    #[error("dimension {dim} exceeds the dense oracle limit")]
    TooLargeForOracle { dim: usize },
    #[error("malformed matrix: {0}")]
    Malformed(String),
}

pub(crate) fn check_dims<T>(a: &SparseMat<T>, b: &SparseMat<T>) -> Result<(), MatrixError> {
    if a.ncols() != b.nrows() {
        return Err(MatrixError::DimMismatch {
            a_rows: a.nrows(),
            a_cols: a.ncols(),
            b_rows: b.nrows(),
            b_cols: b.ncols(),
        });
    }
    Ok(())
}

/// One `(row, col, value)` entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triple<T> {
    pub row: usize,
    pub col: usize,
    pub val: T,
}

impl<T> Triple<T> {
    pub fn new(row: usize, col: usize, val: T) -> Self {
        Triple { row, col, val }
    }
}

impl<T> From<(usize, usize, T)> for Triple<T> {
    fn from((row, col, val): (usize, usize, T)) -> Self {
        Triple { row, col, val }
    }
}

/// Sparse matrix in compressed sparse column form.
///
/// When `sorted` is false, row indices inside a column may appear in any
/// order and may repeat; repeated entries are unmerged partial sums.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMat<T> {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<T>,
    sorted: bool,
}

impl<T> SparseMat<T> {
    pub fn empty(nrows: usize, ncols: usize) -> Self {
        SparseMat {
            nrows,
            ncols,
            col_ptr: vec![0; ncols + 1],
            row_idx: Vec::new(),
            values: Vec::new(),
            sorted: true,
        }
    }

    /// Builds a matrix from raw arrays, validating every storage invariant.
    ///
    /// A `sorted = true` claim is checked; it is never inferred.
    pub fn from_parts(
        nrows: usize,
        ncols: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        values: Vec<T>,
        sorted: bool,
    ) -> Result<Self, MatrixError> {
        let bad = |msg: &str| Err(MatrixError::Malformed(msg.to_string()));
        if col_ptr.len() != ncols + 1 {
            return bad("col_ptr length must be ncols + 1");
        }
        if col_ptr[0] != 0 || col_ptr[ncols] != row_idx.len() {
            return bad("col_ptr must start at 0 and end at nnz");
        }
        if row_idx.len() != values.len() {
            return bad("row_idx and values lengths differ");
        }
        if col_ptr.windows(2).any(|w| w[0] > w[1]) {
            return bad("col_ptr must be nondecreasing");
        }
        for j in 0..ncols {
            let rows = &row_idx[col_ptr[j]..col_ptr[j + 1]];
            if let Some(&r) = rows.iter().find(|&&r| r >= nrows) {
                return Err(MatrixError::IndexOutOfRange {
                    row: r,
                    col: j,
                    nrows,
                    ncols,
                });
            }
            if sorted && rows.windows(2).any(|w| w[0] >= w[1]) {
                return bad("column is not strictly increasing but sorted was claimed");
            }
        }
        Ok(SparseMat {
            nrows,
            ncols,
            col_ptr,
            row_idx,
            values,
            sorted,
        })
    }

    /// Trusted constructor for kernels that build valid storage by construction.
    pub(crate) fn from_parts_unchecked(
        nrows: usize,
        ncols: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        values: Vec<T>,
        sorted: bool,
    ) -> Self {
        debug_assert_eq!(col_ptr.len(), ncols + 1);
        debug_assert_eq!(*col_ptr.last().unwrap(), row_idx.len());
        debug_assert_eq!(row_idx.len(), values.len());
        SparseMat {
            nrows,
            ncols,
            col_ptr,
            row_idx,
            values,
            sorted,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn is_sorted(&self) -> bool {
        self.sorted
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Number of stored entries in column `j`.
    #[inline]
    pub fn col_nnz(&self, j: usize) -> usize {
        self.col_ptr[j + 1] - self.col_ptr[j]
    }

    /// Row indices and values of column `j`.
    #[inline]
    pub fn col(&self, j: usize) -> (&[usize], &[T]) {
        let range = self.col_ptr[j]..self.col_ptr[j + 1];
        (&self.row_idx[range.clone()], &self.values[range])
    }

    pub fn into_parts(self) -> (usize, usize, Vec<usize>, Vec<usize>, Vec<T>, bool) {
        (
            self.nrows,
            self.ncols,
            self.col_ptr,
            self.row_idx,
            self.values,
            self.sorted,
        )
    }
}

impl<T: Copy> SparseMat<T> {
    /// Iterates stored entries in column-major storage order.
    pub fn triples(&self) -> impl Iterator<Item = Triple<T>> + '_ {
        (0..self.ncols).flat_map(move |j| {
            let (rows, vals) = self.col(j);
            rows.iter()
                .zip(vals)
                .map(move |(&row, &val)| Triple { row, col: j, val })
        })
    }

    pub fn map_values<U>(&self, f: impl Fn(T) -> U) -> SparseMat<U> {
        SparseMat {
            nrows: self.nrows,
            ncols: self.ncols,
            col_ptr: self.col_ptr.clone(),
            row_idx: self.row_idx.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            sorted: self.sorted,
        }
    }

    /// Splits into `parts` contiguous column blocks; the first `ncols % parts`
    /// blocks are one column wider.
    pub fn col_split(&self, parts: usize) -> Result<Vec<SparseMat<T>>, MatrixError> {
        if parts == 0 {
            return Err(MatrixError::ZeroParts);
        }
        Ok((0..parts)
            .map(|p| {
                let (start, len) = block_range(self.ncols, parts, p);
                self.col_range(start, start + len)
            })
            .collect())
    }

    /// Copies columns `start..end` into a new matrix.
    pub fn col_range(&self, start: usize, end: usize) -> SparseMat<T> {
        assert!(start <= end && end <= self.ncols);
        let base = self.col_ptr[start];
        let hi = self.col_ptr[end];
        SparseMat {
            nrows: self.nrows,
            ncols: end - start,
            col_ptr: self.col_ptr[start..=end].iter().map(|&p| p - base).collect(),
            row_idx: self.row_idx[base..hi].to_vec(),
            values: self.values[base..hi].to_vec(),
            sorted: self.sorted,
        }
    }

    /// Gathers the listed columns, in the listed order.
    pub fn select_cols(&self, cols: impl IntoIterator<Item = usize>) -> SparseMat<T> {
        let mut col_ptr = vec![0];
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        for j in cols {
            let (rows, vals) = self.col(j);
            row_idx.extend_from_slice(rows);
            values.extend_from_slice(vals);
            col_ptr.push(row_idx.len());
        }
        SparseMat {
            nrows: self.nrows,
            ncols: col_ptr.len() - 1,
            col_ptr,
            row_idx,
            values,
            sorted: self.sorted,
        }
    }

    /// Restricts to rows `start..end`, renumbering them from zero.
    pub fn row_range(&self, start: usize, end: usize) -> SparseMat<T> {
        assert!(start <= end && end <= self.nrows);
        let mut col_ptr = Vec::with_capacity(self.ncols + 1);
        col_ptr.push(0);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        for j in 0..self.ncols {
            let (rows, vals) = self.col(j);
            for (&r, &v) in rows.iter().zip(vals) {
                if r >= start && r < end {
                    row_idx.push(r - start);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        SparseMat {
            nrows: end - start,
            ncols: self.ncols,
            col_ptr,
            row_idx,
            values,
            sorted: self.sorted,
        }
    }

    /// Concatenates matrices left to right.
    pub fn col_concat(parts: &[SparseMat<T>]) -> Result<SparseMat<T>, MatrixError> {
        let first = parts.first().ok_or(MatrixError::EmptyConcat)?;
        let nrows = first.nrows;
        let mut col_ptr = vec![0];
        let mut row_idx = Vec::with_capacity(parts.iter().map(|p| p.nnz()).sum());
        let mut values = Vec::with_capacity(row_idx.capacity());
        let mut sorted = true;
        for part in parts {
            if part.nrows != nrows {
                return Err(MatrixError::RowCountMismatch {
                    expected: nrows,
                    found: part.nrows,
                });
            }
            let base = row_idx.len();
            row_idx.extend_from_slice(&part.row_idx);
            values.extend_from_slice(&part.values);
            col_ptr.extend(part.col_ptr[1..].iter().map(|&p| p + base));
            sorted &= part.sorted;
        }
        Ok(SparseMat {
            nrows,
            ncols: col_ptr.len() - 1,
            col_ptr,
            row_idx,
            values,
            sorted,
        })
    }

    /// Transpose; the result is sorted whenever duplicates are absent.
    pub fn transpose(&self) -> SparseMat<T> {
        let mut counts = vec![0usize; self.nrows + 1];
        for &r in &self.row_idx {
            counts[r + 1] += 1;
        }
        for i in 0..self.nrows {
            counts[i + 1] += counts[i];
        }
        let col_ptr = counts.clone();
        let mut next = counts;
        let mut row_idx = vec![0; self.nnz()];
        let mut values = Vec::with_capacity(self.nnz());
        let mut order = vec![0usize; self.nnz()];
        for j in 0..self.ncols {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let r = self.row_idx[p];
                let dst = next[r];
                next[r] += 1;
                row_idx[dst] = j;
                order[dst] = p;
            }
        }
        values.extend(order.iter().map(|&p| self.values[p]));
        // Columns are visited in increasing order, so each output column is
        // strictly increasing unless the input carried duplicates.
        let sorted = self.sorted || (0..self.nrows).all(|r| {
            row_idx[col_ptr[r]..col_ptr[r + 1]]
                .windows(2)
                .all(|w| w[0] < w[1])
        });
        SparseMat {
            nrows: self.ncols,
            ncols: self.nrows,
            col_ptr,
            row_idx,
            values,
            sorted,
        }
    }
}

impl<T: Scalar> SparseMat<T> {
    pub fn identity(n: usize) -> Self {
        SparseMat {
            nrows: n,
            ncols: n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: vec![T::one(); n],
            sorted: true,
        }
    }

    /// Builds a sorted matrix, merging duplicates with `sr.add` and dropping
    /// entries that end up equal to the semiring zero.
    ///
    /// Duplicates are merged in input order, so exact semirings give the same
    /// matrix for any permutation of `triples`.
    pub fn from_triples<S>(
        triples: &[Triple<T>],
        nrows: usize,
        ncols: usize,
        sr: S,
    ) -> Result<Self, MatrixError>
    where
        S: Semiring<Elem = T>,
    {
        if let Some(t) = triples.iter().find(|t| t.row >= nrows || t.col >= ncols) {
            return Err(MatrixError::IndexOutOfRange {
                row: t.row,
                col: t.col,
                nrows,
                ncols,
            });
        }
        // counting sort by column, stable
        let mut starts = vec![0usize; ncols + 1];
        for t in triples {
            starts[t.col + 1] += 1;
        }
        for j in 0..ncols {
            starts[j + 1] += starts[j];
        }
        let mut next = starts.clone();
        let mut bucket = vec![0usize; triples.len()];
        for (k, t) in triples.iter().enumerate() {
            bucket[next[t.col]] = k;
            next[t.col] += 1;
        }
        let mut col_ptr = Vec::with_capacity(ncols + 1);
        col_ptr.push(0);
        let mut row_idx = Vec::with_capacity(triples.len());
        let mut values = Vec::with_capacity(triples.len());
        for j in 0..ncols {
            let col = &mut bucket[starts[j]..starts[j + 1]];
            col.sort_by_key(|&k| triples[k].row);
            let mut i = 0;
            while i < col.len() {
                let row = triples[col[i]].row;
                let mut acc = triples[col[i]].val;
                i += 1;
                while i < col.len() && triples[col[i]].row == row {
                    acc = sr.add(acc, triples[col[i]].val);
                    i += 1;
                }
                if !sr.is_zero(acc) {
                    row_idx.push(row);
                    values.push(acc);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Ok(SparseMat {
            nrows,
            ncols,
            col_ptr,
            row_idx,
            values,
            sorted: true,
        })
    }

    /// Sorted, duplicate-merged, zero-free form of this matrix.
    pub fn canonicalize<S: Semiring<Elem = T>>(&self, sr: S) -> SparseMat<T> {
        if self.sorted && !self.values.iter().any(|&v| sr.is_zero(v)) {
            return self.clone();
        }
        let triples: Vec<_> = self.triples().collect();
        Self::from_triples(&triples, self.nrows, self.ncols, sr)
            .expect("entries of a valid matrix are in range")
    }
}

/// Compares two matrices after canonicalization. Values must match exactly
/// for exact element types and within relative tolerance `tol` otherwise.
pub fn canonical_equals<S: Semiring>(
    a: &SparseMat<S::Elem>,
    b: &SparseMat<S::Elem>,
    sr: S,
    tol: f64,
) -> bool {
    if a.shape() != b.shape() {
        return false;
    }
    let (ca, cb) = (a.canonicalize(sr), b.canonicalize(sr));
    ca.col_ptr == cb.col_ptr
        && ca.row_idx == cb.row_idx
        && ca
            .values
            .iter()
            .zip(&cb.values)
            .all(|(&x, &y)| x.close(y, tol))
}

/// Default relative tolerance for floating point comparisons.
pub const DEFAULT_TOL: f64 = 1e-9;

/// `(start, len)` of block `idx` when `n` items are cut into `parts` blocks,
/// with the first `n % parts` blocks one item longer.
#[inline]
pub fn block_range(n: usize, parts: usize, idx: usize) -> (usize, usize) {
    debug_assert!(idx < parts);
    let base = n / parts;
    let rem = n % parts;
    let start = idx * base + idx.min(rem);
    let len = base + usize::from(idx < rem);
    (start, len)
}
