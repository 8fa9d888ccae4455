use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{build_columns_with, KernelError, PartialPile};
use crate::matrix::{check_dims, SparseMat};
use crate::semiring::Semiring;

/// k-way merge of sorted runs. Each run yields `(row, value)` in increasing
/// row order; equal rows are combined in run order. Returns via `emit`.
fn kway_merge<T: Copy, S: Semiring<Elem = T>>(
    heap: &mut BinaryHeap<Reverse<(usize, usize)>>,
    runs: &[(&[usize], &[T], Option<T>)],
    sr: S,
    mut emit: impl FnMut(usize, T),
) {
    heap.clear();
    let mut cursor = vec![0usize; runs.len()];
    for (k, run) in runs.iter().enumerate() {
        if let Some(&r) = run.0.first() {
            heap.push(Reverse((r, k)));
        }
    }
    let value = |k: usize, pos: usize| {
        let (_, vals, scale) = runs[k];
        match scale {
            Some(s) => sr.mul(vals[pos], s),
            None => vals[pos],
        }
    };
    let mut current: Option<(usize, T)> = None;
    while let Some(Reverse((row, k))) = heap.pop() {
        let v = value(k, cursor[k]);
        current = match current {
            Some((r, acc)) if r == row => Some((r, sr.add(acc, v))),
            Some((r, acc)) => {
                emit(r, acc);
                Some((row, v))
            }
            None => Some((row, v)),
        };
        cursor[k] += 1;
        if let Some(&next) = runs[k].0.get(cursor[k]) {
            heap.push(Reverse((next, k)));
        }
    }
    if let Some((r, acc)) = current {
        emit(r, acc);
    }
}

/// Column-by-column heap product. Requires `a` sorted; the output is sorted.
/// Like the hash kernel, entries that cancel to zero are kept.
pub fn heap_spgemm_sorted<S: Semiring>(
    a: &SparseMat<S::Elem>,
    b: &SparseMat<S::Elem>,
    sr: S,
) -> Result<SparseMat<S::Elem>, KernelError> {
    check_dims(a, b)?;
    if !a.is_sorted() {
        return Err(KernelError::UnsortedInput);
    }
    let cols = build_columns_with(
        b.ncols(),
        BinaryHeap::new,
        |heap, j, rows, vals| {
            let (b_rows, b_vals) = b.col(j);
            let runs: Vec<_> = b_rows
                .iter()
                .zip(b_vals)
                .map(|(&i, &bv)| {
                    let (r, v) = a.col(i);
                    (r, v, Some(bv))
                })
                .collect();
            kway_merge(heap, &runs, sr, |r, v| {
                rows.push(r);
                vals.push(v);
            });
            Ok(())
        },
    )?;
    Ok(cols.into_matrix(a.nrows(), true))
}

/// Heap merge of sorted parts; zero sums are dropped and the output is sorted.
pub fn heap_merge_sorted<S: Semiring>(
    pile: &PartialPile<S::Elem>,
    sr: S,
) -> Result<SparseMat<S::Elem>, KernelError> {
    let parts = pile.parts();
    if parts.iter().any(|p| !p.is_sorted()) {
        return Err(KernelError::UnsortedInput);
    }
    let (nrows, ncols) = pile.shape();
    let cols = build_columns_with(ncols, BinaryHeap::new, |heap, j, rows, vals| {
        let runs: Vec<_> = parts
            .iter()
            .map(|p| {
                let (r, v) = p.col(j);
                (r, v, None)
            })
            .collect();
        kway_merge(heap, &runs, sr, |r, v| {
            if !sr.is_zero(v) {
                rows.push(r);
                vals.push(v);
            }
        });
        Ok(())
    })?;
    Ok(cols.into_matrix(nrows, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{finalize_sort, hash_merge_unsorted, hash_spgemm_unsorted};
    use crate::matrix::{canonical_equals, dense_multiply_oracle, Triple};
    use crate::semiring::PlusTimes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SR: PlusTimes<i64> = PlusTimes::new();

    fn random(rng: &mut ChaCha8Rng, m: usize, n: usize, density: f64) -> SparseMat<i64> {
        let mut triples = Vec::new();
        for j in 0..n {
            for i in 0..m {
                if rng.gen_bool(density) {
                    triples.push(Triple::new(i, j, rng.gen_range(-9..=9)));
                }
            }
        }
        SparseMat::from_triples(&triples, m, n, SR).unwrap()
    }

    #[test]
    fn identity_squared() {
        let i3 = SparseMat::<i64>::identity(3);
        assert_eq!(heap_spgemm_sorted(&i3, &i3, SR).unwrap(), i3);
    }

    #[test]
    fn single_column_b() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&mut rng, 6, 6, 0.5);
        let b = random(&mut rng, 6, 1, 0.8);
        let c = heap_spgemm_sorted(&a, &b, SR).unwrap();
        assert_eq!(c.ncols(), 1);
    }

    #[test]
    fn rejects_unsorted() {
        let u = SparseMat::from_parts(3, 1, vec![0, 2], vec![2, 0], vec![1i64, 1], false).unwrap();
        let b = SparseMat::<i64>::identity(1);
        assert_eq!(heap_spgemm_sorted(&u, &b, SR).unwrap_err(), KernelError::UnsortedInput);
        let pile = PartialPile::new(vec![u]).unwrap();
        assert_eq!(heap_merge_sorted(&pile, SR).unwrap_err(), KernelError::UnsortedInput);
    }

    #[test]
    fn agrees_with_hash_and_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100 {
            let n = rng.gen_range(1..48);
            let a = random(&mut rng, n, n, 0.1);
            let b = random(&mut rng, n, n, 0.1);
            let heap = heap_spgemm_sorted(&a, &b, SR).unwrap();
            let hash = hash_spgemm_unsorted(&a, &b, SR).unwrap();
            assert!(heap.is_sorted());
            assert_eq!(finalize_sort(&hash).unwrap(), heap);
            assert!(canonical_equals(&heap, &dense_multiply_oracle(&a, &b, SR).unwrap(), SR, 0.0));
        }
    }

    #[test]
    fn merge_cases() {
        let i3 = SparseMat::<i64>::identity(3);
        let two = heap_merge_sorted(&PartialPile::new(vec![i3.clone(), i3.clone()]).unwrap(), SR).unwrap();
        assert_eq!(two, i3.map_values(|v| 2 * v));
        let empties = PartialPile::new(vec![SparseMat::<i64>::empty(3, 3); 4]).unwrap();
        assert_eq!(heap_merge_sorted(&empties, SR).unwrap().nnz(), 0);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let parts: Vec<_> = (0..5).map(|_| random(&mut rng, 10, 10, 0.3)).collect();
            let pile = PartialPile::new(parts).unwrap();
            let heap = heap_merge_sorted(&pile, SR).unwrap();
            let hash = hash_merge_unsorted(&pile, SR);
            assert_eq!(finalize_sort(&hash).unwrap(), heap);
        }
    }

    #[test]
    fn float_sums_follow_the_same_order_in_both_kernels() {
        let fsr = PlusTimes::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..30 {
            let a = random(&mut rng, 20, 20, 0.3).map_values(|v| v as f64 * 0.1);
            let b = random(&mut rng, 20, 20, 0.3).map_values(|v| v as f64 / 3.0);
            let heap = heap_spgemm_sorted(&a, &b, fsr).unwrap();
            let hash = finalize_sort(&hash_spgemm_unsorted(&a, &b, fsr).unwrap()).unwrap();
            assert_eq!(heap, hash);
        }
    }
}
