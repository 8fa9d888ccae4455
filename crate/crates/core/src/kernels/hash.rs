use rayon::prelude::*;

use super::{build_columns_with, HashAccumulator, PartialPile};
use crate::matrix::{check_dims, MatrixError, SparseMat};
use crate::semiring::Semiring;

fn col_flops<T>(a: &SparseMat<T>, b: &SparseMat<T>, j: usize) -> usize {
    b.col(j).0.iter().map(|&i| a.col_nnz(i)).sum()
}

/// Gustavson product with a hash accumulator per column.
///
/// Inputs may be unsorted. Each output column lists rows in the order they
/// were first produced (B's column order, then A's column order); duplicates
/// are merged, entries that cancel to zero are kept.
pub fn hash_spgemm_unsorted<S: Semiring>(
    a: &SparseMat<S::Elem>,
    b: &SparseMat<S::Elem>,
    sr: S,
) -> Result<SparseMat<S::Elem>, MatrixError> {
    check_dims(a, b)?;
    let cols = build_columns_with(
        b.ncols(),
        || HashAccumulator::with_estimate(0),
        |acc, j, rows, vals| {
            acc.reset(col_flops(a, b, j));
            let (b_rows, b_vals) = b.col(j);
            for (&i, &bv) in b_rows.iter().zip(b_vals) {
                let (a_rows, a_vals) = a.col(i);
                for (&r, &av) in a_rows.iter().zip(a_vals) {
                    acc.accumulate(r, sr.mul(av, bv), sr);
                }
            }
            acc.drain_into(rows, vals, |_| true);
            Ok(())
        },
    )
    .expect("hash multiply has no failure path");
    Ok(cols.into_matrix(a.nrows(), false))
}

/// Sums the parts of a pile column by column. Column `j` of the result is
/// built from column `j` of every part, in pile order; zero sums are dropped
/// and columns are left unsorted.
pub fn hash_merge_unsorted<S: Semiring>(pile: &PartialPile<S::Elem>, sr: S) -> SparseMat<S::Elem> {
    let (nrows, ncols) = pile.shape();
    let parts = pile.parts();
    let cols = build_columns_with(
        ncols,
        || HashAccumulator::with_estimate(0),
        |acc, j, rows, vals| {
            acc.reset(parts.iter().map(|p| p.col_nnz(j)).sum());
            for p in parts {
                let (r, v) = p.col(j);
                for (&row, &val) in r.iter().zip(v) {
                    acc.accumulate(row, val, sr);
                }
            }
            acc.drain_into(rows, vals, |v| !sr.is_zero(v));
            Ok(())
        },
    )
    .expect("hash merge has no failure path");
    cols.into_matrix(nrows, false)
}

/// Structural nonzero count of `a·b`, touching no values.
pub fn local_symbolic<T: Sync>(a: &SparseMat<T>, b: &SparseMat<T>) -> Result<usize, MatrixError> {
    Ok(local_symbolic_per_col(a, b)?.iter().sum())
}

/// Structural nonzero count of each column of `a·b`.
pub fn local_symbolic_per_col<T: Sync>(a: &SparseMat<T>, b: &SparseMat<T>) -> Result<Vec<usize>, MatrixError> {
    check_dims(a, b)?;
    let count_range = |range: std::ops::Range<usize>| -> Vec<usize> {
        let mut acc = HashAccumulator::<()>::with_estimate(0);
        range
            .map(|j| {
                acc.reset(col_flops(a, b, j));
                for &i in b.col(j).0 {
                    for &r in a.col(i).0 {
                        acc.insert_key(r, ());
                    }
                }
                acc.occupancy()
            })
            .collect()
    };
    let ncols = b.ncols();
    if ncols <= SYMBOLIC_CHUNK {
        return Ok(count_range(0..ncols));
    }
    let chunks: Vec<Vec<usize>> = (0..ncols)
        .step_by(SYMBOLIC_CHUNK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|s| count_range(s..(s + SYMBOLIC_CHUNK).min(ncols)))
        .collect();
    Ok(chunks.concat())
}

const SYMBOLIC_CHUNK: usize = 256;
