//! Distributed sparse matrix-matrix multiplication on a simulated 3D process
//! grid: layered SUMMA with batching under a memory budget, hash and heap
//! local kernels, a symbolic batch planner and an α-β cost model.
//!
//! Everything is generic over the element type through [`Semiring`] and
//! [`Scalar`]; the aliases below cover the common cases.

use num_rational::Ratio;

pub mod bench;
pub mod cost;
pub mod gen;
pub mod grid;
pub mod io;
pub mod kernels;
pub mod matrix;
pub mod report;
pub mod runtime;
pub mod scalar;
pub mod semiring;
pub mod summa;
pub mod verify;

pub use grid::{make_grid, DistMatrix, GridShape3D, RankCoord};
pub use kernels::Kernel;
pub use matrix::{canonical_equals, dense_multiply_oracle, MatStats, SparseMat, Triple};
pub use runtime::{CommStats, Phase, WorldConfig};
pub use scalar::Scalar;
pub use semiring::{PlusTimes, Semiring};
pub use summa::{BatchPlan, Batches, SummaConfig, SummaError};

pub type IntMat = SparseMat<i64>;
pub type FloatMat = SparseMat<f64>;
pub type F32Mat = SparseMat<f32>;
pub type RationalMat = SparseMat<Ratio<i64>>;

pub type IntSemiring = PlusTimes<i64>;
pub type FloatSemiring = PlusTimes<f64>;
pub type F32Semiring = PlusTimes<f32>;
pub type RationalSemiring = PlusTimes<Ratio<i64>>;
