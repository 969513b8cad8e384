//! Scalar abstraction for the time/bandwidth arithmetic.
//!
//! Byte and MAC counts are always exact `u64`. Latencies, bandwidths and
//! derived times are generic over [`Scalar`] so the same cost model and
//! pipeline simulator run in `f64` for experiments and in an exact rational
//! type when equality between independent computations has to be bit-exact.

use std::fmt::Debug;

use num_traits::{FromPrimitive, Num, ToPrimitive};

/// Numeric type usable for times, rates and their ratios.
pub trait Scalar:
    Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
    /// Converts an exact count (bytes, MACs, batch size).
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count not representable in scalar type")
    }

    /// Converts a literal constant. Panics if the value has no representation.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal not representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    fn is_non_negative(self) -> bool {
        self >= Self::zero()
    }
}

impl<T> Scalar for T where
    T: Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
}
