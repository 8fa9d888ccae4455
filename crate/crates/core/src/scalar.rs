//! Element types that can live inside a [`SparseMat`](crate::SparseMat).

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num};

/// A numeric element type usable as matrix values.
///
/// Exact types (integers, rationals) compare bit-for-bit; floating point types
/// compare with a relative tolerance.
pub trait Scalar:
    Num + FromPrimitive + Copy + Send + Sync + Debug + Display + FromStr + PartialEq + 'static
{
    /// True when arithmetic on this type is exact (associative and free of rounding).
    const EXACT: bool;

    /// Closeness test used by canonical comparison.
    fn close(self, other: Self, rel_tol: f64) -> bool;
}

macro_rules! exact_scalar {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            const EXACT: bool = true;

            #[inline]
            fn close(self, other: Self, _rel_tol: f64) -> bool {
                self == other
            }
        }
    )*};
}

macro_rules! float_scalar {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            const EXACT: bool = false;

            #[inline]
            fn close(self, other: Self, rel_tol: f64) -> bool {
                if self == other {
                    return true;
                }
                let (a, b) = (self as f64, other as f64);
                let scale = a.abs().max(b.abs());
                (a - b).abs() <= rel_tol * scale
            }
        }
    )*};
}

exact_scalar!(i32, i64, u32, u64);
float_scalar!(f32, f64);

impl Scalar for Ratio<i64> {
    const EXACT: bool = true;

    fn close(self, other: Self, _rel_tol: f64) -> bool {
        self == other
    }
}
