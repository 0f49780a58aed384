//! Element type abstraction. Tests and gradient checks run in f64; training
//! defaults to f32.

use std::fmt::{Debug, Display};

use num_traits::Float;

pub trait Scalar:
    Float + num_traits::NumAssignOps + Debug + Display + Default + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}
