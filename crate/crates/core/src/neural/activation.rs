use ndarray::{Array, ArrayView, Dimension, Zip};

use super::Scalar;

pub const LEAKY_SLOPE: f64 = 0.2;

pub fn relu<T: Scalar, D: Dimension>(x: ArrayView<T, D>) -> Array<T, D> {
    x.mapv(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of [`relu`]; the derivative at exactly zero is taken as 1.
pub fn relu_backward<T: Scalar, D: Dimension>(x: ArrayView<T, D>, grad: ArrayView<T, D>) -> Array<T, D> {
    Zip::from(&x)
        .and(&grad)
        .map_collect(|&v, &g| if v >= T::zero() { g } else { T::zero() })
}

pub fn leaky_relu<T: Scalar, D: Dimension>(x: ArrayView<T, D>, slope: T) -> Array<T, D> {
    x.mapv(|v| if v >= T::zero() { v } else { slope * v })
}

pub fn leaky_relu_backward<T: Scalar, D: Dimension>(x: ArrayView<T, D>, grad: ArrayView<T, D>, slope: T) -> Array<T, D> {
    Zip::from(&x)
        .and(&grad)
        .map_collect(|&v, &g| if v >= T::zero() { g } else { slope * g })
}
