//! Semirings over which products are accumulated.

use std::fmt::Debug;
use std::marker::PhantomData;

use crate::scalar::Scalar;

/// An algebraic semiring `(add, mul, zero)`.
///
/// `add` must be associative and commutative and `zero` must be absorbing
/// under `mul`. Kernels rely on nothing else.
pub trait Semiring: Copy + Send + Sync + Debug + 'static {
    type Elem: Scalar;

    fn zero(&self) -> Self::Elem;
    fn add(&self, a: Self::Elem, b: Self::Elem) -> Self::Elem;
    fn mul(&self, a: Self::Elem, b: Self::Elem) -> Self::Elem;

    #[inline]
    fn is_zero(&self, x: Self::Elem) -> bool {
        x == self.zero()
    }
}

/// The ordinary `(+, ×, 0)` semiring over a numeric type.
pub struct PlusTimes<T>(PhantomData<fn() -> T>);

impl<T> PlusTimes<T> {
    pub const fn new() -> Self {
        PlusTimes(PhantomData)
    }
}

impl<T> Default for PlusTimes<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> Clone for PlusTimes<T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T> Copy for PlusTimes<T> {}

impl<T> Debug for PlusTimes<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PlusTimes<{}>", std::any::type_name::<T>())
    }
}

impl<T: Scalar> Semiring for PlusTimes<T> {
    type Elem = T;

    #[inline]
    fn zero(&self) -> T {
        T::zero()
    }

    #[inline]
    fn add(&self, a: T, b: T) -> T {
        a + b
    }

    #[inline]
    fn mul(&self, a: T, b: T) -> T {
        a * b
    }
}
