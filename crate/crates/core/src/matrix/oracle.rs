//! Dense reference product used only to check the sparse kernels.

use super::{check_dims, MatrixError, SparseMat};
use crate::semiring::Semiring;

/// Largest dimension the dense oracle will materialize.
pub const ORACLE_MAX_DIM: usize = 1 << 12;

/// Exact product by a dense triple loop. Entries equal to the semiring zero
/// after accumulation are dropped; the result is sorted.
pub fn dense_multiply_oracle<S: Semiring>(
    a: &SparseMat<S::Elem>,
    b: &SparseMat<S::Elem>,
    sr: S,
) -> Result<SparseMat<S::Elem>, MatrixError> {
    dense_multiply_counted(a, b, sr).map(|(c, _)| c)
}

/// Like [`dense_multiply_oracle`], also returning the number of scalar
/// multiplications performed between stored entries.
pub fn dense_multiply_counted<S: Semiring>(
    a: &SparseMat<S::Elem>,
    b: &SparseMat<S::Elem>,
    sr: S,
) -> Result<(SparseMat<S::Elem>, u64), MatrixError> {
    check_dims(a, b)?;
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    if let Some(&dim) = [m, k, n].iter().find(|&&d| d > ORACLE_MAX_DIM) {
        return Err(MatrixError::TooLargeForOracle { dim });
    }
    let da = to_dense(a, sr);
    let db = to_dense(b, sr);
    let mut dc: Vec<Option<S::Elem>> = vec![None; m * n];
    let mut mults = 0u64;
    for j in 0..n {
        for p in 0..k {
            let Some(bv) = db[j * k + p] else { continue };
            for i in 0..m {
                if let Some(av) = da[p * m + i] {
                    let prod = sr.mul(av, bv);
                    mults += 1;
                    let slot = &mut dc[j * m + i];
                    *slot = Some(match *slot {
                        Some(acc) => sr.add(acc, prod),
                        None => prod,
                    });
                }
            }
        }
    }
    let mut col_ptr = Vec::with_capacity(n + 1);
    col_ptr.push(0);
    let mut row_idx = Vec::new();
    let mut values = Vec::new();
    for j in 0..n {
        for i in 0..m {
            if let Some(v) = dc[j * m + i] {
                if !sr.is_zero(v) {
                    row_idx.push(i);
                    values.push(v);
                }
            }
        }
        col_ptr.push(row_idx.len());
    }
    Ok((
        SparseMat::from_parts_unchecked(m, n, col_ptr, row_idx, values, true),
        mults,
    ))
}

// Column-major dense copy; duplicate entries are summed.
fn to_dense<S: Semiring>(m: &SparseMat<S::Elem>, sr: S) -> Vec<Option<S::Elem>> {
    let mut d = vec![None; m.nrows() * m.ncols()];
    for t in m.triples() {
        let slot = &mut d[t.col * m.nrows() + t.row];
        *slot = Some(match *slot {
            Some(acc) => sr.add(acc, t.val),
            None => t.val,
        });
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Triple;
    use crate::semiring::PlusTimes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SR: PlusTimes<i64> = PlusTimes::new();

    fn random(rng: &mut ChaCha8Rng, m: usize, n: usize, density: f64) -> SparseMat<i64> {
        let mut triples = Vec::new();
        for i in 0..m {
            for j in 0..n {
                if rng.gen_bool(density) {
                    triples.push(Triple::new(i, j, rng.gen_range(-9..=9)));
                }
            }
        }
        SparseMat::from_triples(&triples, m, n, SR).unwrap()
    }

    // Row-major i-j-k loop over plain integer arrays, sharing nothing with the
    // column-major oracle beyond the input triples.
    fn row_major_reference(a: &SparseMat<i64>, b: &SparseMat<i64>) -> Vec<Vec<i64>> {
        let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
        let mut da = vec![vec![0i64; k]; m];
        for t in a.triples() {
            da[t.row][t.col] += t.val;
        }
        let mut db = vec![vec![0i64; n]; k];
        for t in b.triples() {
            db[t.row][t.col] += t.val;
        }
        let mut c = vec![vec![0i64; n]; m];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i][j] += da[i][p] * db[p][j];
                }
            }
        }
        c
    }

    #[test]
    fn identity_times_b_is_b() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random(&mut rng, 3, 3, 0.6);
        let c = dense_multiply_oracle(&SparseMat::identity(3), &b, SR).unwrap();
        assert_eq!(c, b);
    }

    #[test]
    fn zero_matrix_gives_empty_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = random(&mut rng, 4, 4, 0.5);
        let c = dense_multiply_oracle(&SparseMat::empty(4, 4), &b, SR).unwrap();
        assert_eq!(c.nnz(), 0);
    }

    #[test]
    fn guards() {
        let a = SparseMat::<i64>::empty(2, 3);
        assert!(matches!(
            dense_multiply_oracle(&a, &a, SR),
            Err(MatrixError::DimMismatch { .. })
        ));
        let big = SparseMat::<i64>::empty(ORACLE_MAX_DIM + 1, 1);
        let one = SparseMat::<i64>::empty(1, 1);
        assert!(matches!(
            dense_multiply_oracle(&big, &one, SR),
            Err(MatrixError::TooLargeForOracle { .. })
        ));
    }

    #[test]
    fn agrees_with_row_major_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..100 {
            let m = rng.gen_range(1..=32);
            let k = rng.gen_range(1..=32);
            let n = rng.gen_range(1..=32);
            let d = rng.gen_range(0.02..0.5);
            let a = random(&mut rng, m, k, d);
            let b = random(&mut rng, k, n, d);
            let c = dense_multiply_oracle(&a, &b, SR).unwrap();
            let reference = row_major_reference(&a, &b);
            let mut rebuilt = vec![vec![0i64; n]; m];
            for t in c.triples() {
                rebuilt[t.row][t.col] = t.val;
            }
            assert_eq!(rebuilt, reference);
        }
    }
}
