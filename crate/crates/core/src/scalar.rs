//! Scalar abstraction and order-independent summation.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar the estimators are generic over (`f32` or `f64`).
pub trait Scalar:
    Float + FromPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal, panicking only if the type cannot represent
    /// finite values at all.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("scalar conversion from f64")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("scalar conversion from usize")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Exact running sum of floating-point values, rounded once on read.
///
/// Keeps the sum as a list of non-overlapping partials (Shewchuk's
/// algorithm), so [`ExactSum::value`] is the correctly rounded exact sum and
/// does not depend on the order values were added in.
#[derive(Debug, Clone, Default)]
pub struct ExactSum<T> {
    partials: Vec<T>,
}

impl<T: Scalar> ExactSum<T> {
    pub fn new() -> Self {
        Self { partials: Vec::new() }
    }

    pub fn add(&mut self, value: T) {
        let mut x = value;
        let mut kept = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != T::zero() {
                self.partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        self.partials.truncate(kept);
        self.partials.push(x);
    }

    /// Adds the exact value of another accumulator, negated when `negate`.
    pub fn add_sum(&mut self, other: &ExactSum<T>, negate: bool) {
        for &p in &other.partials {
            self.add(if negate { -p } else { p });
        }
    }

    /// Adds the exact absolute value of another accumulator.
    pub fn add_abs(&mut self, other: &ExactSum<T>) {
        let negate = other.value() < T::zero();
        self.add_sum(other, negate);
    }

    /// Correctly rounded value of the exact sum.
    pub fn value(&self) -> T {
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return T::zero();
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = T::zero();
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != T::zero() {
                break;
            }
        }
        // Round-half-even correction when the remaining partials push the
        // tail past a halfway point.
        if n > 0 && ((lo < T::zero() && p[n - 1] < T::zero()) || (lo > T::zero() && p[n - 1] > T::zero())) {
            let y = lo + lo;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        hi
    }
}

impl<T: Scalar> Extend<T> for ExactSum<T> {
    fn extend<I: IntoIterator<Item = T>>(&mut self, iter: I) {
        for v in iter {
            self.add(v);
        }
    }
}

/// Correctly rounded sum of a slice.
pub fn exact_sum<T: Scalar>(values: &[T]) -> T {
    let mut acc = ExactSum::new();
    acc.extend(values.iter().copied());
    acc.value()
}
