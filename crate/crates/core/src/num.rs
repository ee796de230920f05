//! Scalar abstraction and small numeric helpers shared across the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};

/// Floating-point scalar for all numeric routines: `f32` or `f64`.
///
/// The whole pipeline is generic over this trait; the crate root exports
/// `f64` aliases for the common case.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum<Self>
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lift an `f64` constant into the scalar type.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("constant not representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// log(sum(exp(x_i))) without overflow; returns -inf for an empty or all
/// -inf input.
pub fn logsumexp<T: Real>(xs: &[T]) -> T {
    let max = xs
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    if !max.is_finite() {
        return max;
    }
    let sum = xs.iter().map(|&x| (x - max).exp()).sum::<T>();
    max + sum.ln()
}

/// Softmax of a logit vector, shift-invariant and overflow-safe.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let lse = logsumexp(logits);
    logits.iter().map(|&s| (s - lse).exp()).collect()
}

/// Shannon entropy (nats) of a probability vector; 0 log 0 = 0.
pub fn entropy<T: Real>(probs: &[T]) -> T {
    probs
        .iter()
        .filter(|&&p| p > T::zero())
        .map(|&p| -p * p.ln())
        .sum()
}

pub fn clamp<T: Real>(x: T, lo: T, hi: T) -> T {
    if x < lo {
        lo
    } else if x > hi {
        hi
    } else {
        x
    }
}

/// Derive an independent sub-seed from a base seed and a salt
/// (splitmix64 finalizer), so components can own disjoint RNG streams.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
