//! Scalar trait aliases for the generic math in this crate.
//!
//! Retrieval scoring needs a floating type (it takes logarithms); metric
//! arithmetic only needs field operations, so exact rationals qualify there
//! and let tests assert values like 7/12 without tolerance.

use num_traits::{Float, FromPrimitive, Num};

/// Floating scalar used for TF-IDF weighting and cosine scoring.
pub trait Scalar: Float + FromPrimitive + Send + Sync + std::fmt::Debug + 'static {}

impl<T> Scalar for T where T: Float + FromPrimitive + Send + Sync + std::fmt::Debug + 'static {}

/// Scalar used for evaluation metrics: rates built from integer counts.
///
/// Implemented by `f32`/`f64` and by `num_rational::Ratio` over integers.
pub trait MetricScalar: Num + FromPrimitive + PartialOrd + Clone + std::fmt::Debug {}

impl<T> MetricScalar for T where T: Num + FromPrimitive + PartialOrd + Clone + std::fmt::Debug {}

/// `num / den` as a metric scalar. Panics if the scalar cannot represent the
/// integers, which cannot happen for the types used in this crate.
pub fn frac<V: MetricScalar>(num: usize, den: usize) -> V {
    debug_assert!(den > 0);
    let n = V::from_usize(num).expect("numerator representable");
    let d = V::from_usize(den).expect("denominator representable");
    n / d
}
