//! Scalar abstraction for the numeric core.
//!
//! All geometry, fitness and optimizer math is generic over [`Real`] so the
//! same code runs in `f32` or `f64`. The crate-root aliases pin the shipped
//! precision to `f64`.

use std::fmt::{Debug, Display};
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::distributions::uniform::SampleUniform;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar usable throughout the numeric core.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + SampleUniform
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Display
    + Debug
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Loss-tolerant conversion from an `f64` literal or constant.
    fn from_f64_const(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for converting `f64` constants into the active scalar type.
pub fn real<R: Real>(v: f64) -> R {
    R::from_f64_const(v)
}

/// Compensated (Neumaier) summation accumulator.
///
/// Error-free to 1 ulp per added term, which keeps long point sums (fitness
/// over thousands of samples) independent of summation order in practice.
#[derive(Clone, Copy, Debug)]
pub struct KahanSum<R: Real> {
    sum: R,
    compensation: R,
}

impl<R: Real> KahanSum<R> {
    pub fn new() -> Self {
        Self {
            sum: R::zero(),
            compensation: R::zero(),
        }
    }

    pub fn add(&mut self, value: R) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> R {
        self.sum + self.compensation
    }
}

impl<R: Real> Default for KahanSum<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Real> FromIterator<R> for KahanSum<R> {
    fn from_iter<I: IntoIterator<Item = R>>(iter: I) -> Self {
        let mut acc = Self::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}
