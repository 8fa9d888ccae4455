use num_rational::Ratio;
use serde::Serialize;

use super::{check_dims, MatrixError, SparseMat};
use crate::kernels::local_symbolic;

/// Work and size statistics of a product `A·B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MatStats {
    /// Structural nonzeros of the merged product.
    pub nnz: u64,
    /// Scalar multiplications needed to form the product.
    pub flops: u64,
}

impl MatStats {
    pub fn new(flops: u64, nnz: u64) -> Self {
        MatStats { nnz, flops }
    }

    /// Compression factor `flops / nnz`, exact. `None` for an empty product.
    pub fn cf(&self) -> Option<Ratio<u64>> {
        (self.nnz > 0).then(|| Ratio::new(self.flops, self.nnz))
    }
}

/// Number of multiplications to form `a·b`: for each stored `B(i, j)`,
/// the number of stored entries in `A(:, i)`.
pub fn flops<T>(a: &SparseMat<T>, b: &SparseMat<T>) -> Result<u64, MatrixError> {
    check_dims(a, b)?;
    Ok(b.row_idx().iter().map(|&i| a.col_nnz(i) as u64).sum())
}

pub fn compute_stats<T: Sync>(a: &SparseMat<T>, b: &SparseMat<T>) -> Result<MatStats, MatrixError> {
    let flops = flops(a, b)?;
    let nnz = local_symbolic(a, b)? as u64;
    Ok(MatStats { nnz, flops })
}
