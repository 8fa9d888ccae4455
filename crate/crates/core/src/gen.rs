//! Seeded synthetic matrices. Values are integers drawn from `1..=9`, so
//! products stay exact under integer semirings.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use thiserror::Error;

use crate::matrix::{SparseMat, Triple};
use crate::semiring::PlusTimes;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("bad generator parameters: {0}")]
    BadParams(String),
}

/// Default RMAT quadrant probabilities.
pub const RMAT_DEFAULT: [f64; 4] = [0.57, 0.19, 0.19, 0.05];

fn value<T: Scalar>(rng: &mut ChaCha8Rng) -> T {
    T::from_u64(rng.gen_range(1..=9)).expect("small integers are representable")
}

/// Erdős–Rényi `n × n`: each column draws its count from `Binomial(n, density)`
/// and then that many distinct rows.
pub fn gen_er<T: Scalar>(n: usize, density: f64, seed: u64) -> Result<SparseMat<T>, GenError> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(GenError::BadParams(format!("density {density} not in (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let binom = Binomial::new(n as u64, density).map_err(|e| GenError::BadParams(e.to_string()))?;
    let mut col_ptr = vec![0];
    let mut row_idx = Vec::new();
    let mut values = Vec::new();
    for _ in 0..n {
        let k = binom.sample(&mut rng) as usize;
        let mut rows = sample(&mut rng, n, k).into_vec();
        rows.sort_unstable();
        for r in rows {
            row_idx.push(r);
            values.push(value::<T>(&mut rng));
        }
        col_ptr.push(row_idx.len());
    }
    Ok(SparseMat::from_parts(n, n, col_ptr, row_idx, values, true).expect("generated parts are valid"))
}

/// RMAT graph with `2^scale` vertices and `edge_factor · 2^scale` sampled
/// edges. Each edge descends `scale` levels, choosing quadrant
/// top-left/top-right/bottom-left/bottom-right with probabilities
/// `a, b, c, d`. Repeated edges are summed.
pub fn gen_rmat<T: Scalar>(
    scale: u32,
    edge_factor: usize,
    probs: [f64; 4],
    seed: u64,
) -> Result<SparseMat<T>, GenError> {
    if probs.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(GenError::BadParams(format!("quadrant probabilities {probs:?} must be in [0,1] and sum to 1")));
    }
    if scale >= 40 {
        return Err(GenError::BadParams(format!("scale {scale} too large")));
    }
    let n = 1usize << scale;
    let edges = edge_factor
        .checked_mul(n)
        .ok_or_else(|| GenError::BadParams("edge count overflows".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ab, abc) = (probs[0] + probs[1], probs[0] + probs[1] + probs[2]);
    let mut triples = Vec::with_capacity(edges);
    for _ in 0..edges {
        let (mut r, mut c) = (0usize, 0usize);
        for _ in 0..scale {
            let x: f64 = rng.gen();
            let (dr, dc) = if x < probs[0] {
                (0, 0)
            } else if x < ab {
                (0, 1)
            } else if x < abc {
                (1, 0)
            } else {
                (1, 1)
            };
            r = 2 * r + dr;
            c = 2 * c + dc;
        }
        triples.push(Triple::new(r, c, value::<T>(&mut rng)));
    }
    Ok(SparseMat::from_triples(&triples, n, n, PlusTimes::<T>::new()).expect("indices are below 2^scale"))
}

/// Random `nrows × ncols` matrix with roughly `density · nrows · ncols`
/// entries, for rectangular tests.
pub fn gen_rect<T: Scalar>(nrows: usize, ncols: usize, density: f64, seed: u64) -> Result<SparseMat<T>, GenError> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(GenError::BadParams(format!("density {density} not in (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triples = Vec::new();
    for col in 0..ncols {
        for row in 0..nrows {
            if rng.gen_bool(density) {
                triples.push(Triple::new(row, col, value::<T>(&mut rng)));
            }
        }
    }
    let sr = PlusTimes::<T>::new();
    Ok(SparseMat::from_triples(&triples, nrows, ncols, sr).expect("indices in range"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_density_is_complete() {
        let m: SparseMat<i64> = gen_er(17, 1.0, 3).unwrap();
        assert_eq!(m.nnz(), 17 * 17);
    }

    #[test]
    fn seeds_are_deterministic() {
        assert_eq!(gen_er::<i64>(64, 0.1, 9).unwrap(), gen_er::<i64>(64, 0.1, 9).unwrap());
        assert_ne!(gen_er::<i64>(64, 0.1, 9).unwrap(), gen_er::<i64>(64, 0.1, 10).unwrap());
        assert_eq!(
            gen_rmat::<f64>(8, 4, RMAT_DEFAULT, 1).unwrap(),
            gen_rmat::<f64>(8, 4, RMAT_DEFAULT, 1).unwrap()
        );
    }

    #[test]
    fn er_count_within_five_sigma() {
        let (n, d) = (400usize, 0.05);
        for seed in 0..10 {
            let m: SparseMat<i64> = gen_er(n, d, seed).unwrap();
            let mean = (n * n) as f64 * d;
            let sigma = (mean * (1.0 - d)).sqrt();
            assert!((m.nnz() as f64 - mean).abs() < 5.0 * sigma, "seed {seed}: {}", m.nnz());
        }
    }

    #[test]
    fn rmat_is_skewed_toward_low_indices() {
        let m: SparseMat<i64> = gen_rmat(10, 8, RMAT_DEFAULT, 5).unwrap();
        let half = 512;
        let low: usize = (0..half).map(|j| m.col_nnz(j)).sum();
        assert!(low > m.nnz() - low);
        assert!(m.is_sorted());
    }

    #[test]
    fn bad_params() {
        assert!(gen_er::<i64>(4, 0.0, 1).is_err());
        assert!(gen_er::<i64>(4, 1.5, 1).is_err());
        assert!(gen_rmat::<i64>(4, 2, [0.5, 0.5, 0.5, 0.0], 1).is_err());
    }
}
