//! Small trainable layer toolkit with hand-written backward passes.

pub mod activation;
pub mod adain;
pub mod adam;
pub mod conv;
pub mod dense;
pub mod ot;

use std::fmt::Debug;
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};

pub use activation::{leaky_relu, leaky_relu_backward, relu, relu_backward, LEAKY_SLOPE};
pub use adain::{adain_backward, adain_forward, adain_transform, instance_stats, AdainCache, EPS_ADAIN};
pub use adam::{adam_step, AdamState, LrSchedule};
pub use conv::{conv2d_backward, conv2d_forward, Conv2d, ConvGrad, Padding};
pub use dense::{dense_backward, dense_forward, Activation, Dense, DenseGrad};
pub use ot::{ot_map_gaussian, GaussianMoments};

/// Floating-point element type the layers run on (`f32` or `f64`).
pub trait Scalar:
    LinalgScalar + Float + FromPrimitive + ScalarOperand + Sum + Default + Debug + Send + Sync + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite conversion")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("float to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
