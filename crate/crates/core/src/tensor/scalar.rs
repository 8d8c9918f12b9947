use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar type the tensor engine and model are generic over.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal, which always succeeds for the float types we support.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable as scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Floor applied inside every logarithm and division that can see zero.
pub const LOG_FLOOR: f64 = 1e-12;
