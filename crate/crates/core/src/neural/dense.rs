use ndarray::{Array1, Array2, ArrayView1};

use super::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
}

#[derive(Debug, Clone)]
pub struct DenseGrad<T> {
    pub dx: Array1<T>,
    pub dw: Array2<T>,
    pub db: Array1<T>,
}

/// Pre-activation `W x + b`.
fn affine<T: Scalar>(x: ArrayView1<T>, w: &Array2<T>, b: &Array1<T>) -> Result<Array1<T>> {
    let (out, inp) = w.dim();
    if x.len() != inp || b.len() != out {
        return Err(Error::ShapeMismatch(format!(
            "dense {out}x{inp} with input {} and bias {}",
            x.len(),
            b.len()
        )));
    }
    Ok(w.dot(&x) + b)
}

pub fn dense_forward<T: Scalar>(x: ArrayView1<T>, w: &Array2<T>, b: &Array1<T>, act: Activation) -> Result<Array1<T>> {
    let pre = affine(x, w, b)?;
    Ok(match act {
        Activation::Linear => pre,
        Activation::Relu => pre.mapv(|v| v.max(T::zero())),
    })
}

/// Backward pass; the ReLU mask is taken from the pre-activation (derivative 1 at zero).
pub fn dense_backward<T: Scalar>(
    x: ArrayView1<T>,
    w: &Array2<T>,
    b: &Array1<T>,
    act: Activation,
    grad_out: ArrayView1<T>,
) -> Result<DenseGrad<T>> {
    let pre = affine(x, w, b)?;
    if grad_out.len() != pre.len() {
        return Err(Error::ShapeMismatch("dense grad_out length".into()));
    }
    let g: Array1<T> = match act {
        Activation::Linear => grad_out.to_owned(),
        Activation::Relu => ndarray::Zip::from(&pre)
            .and(&grad_out)
            .map_collect(|&p, &g| if p >= T::zero() { g } else { T::zero() }),
    };
    let dw = Array2::from_shape_fn(w.dim(), |(i, j)| g[i] * x[j]);
    let dx = w.t().dot(&g);
    Ok(DenseGrad { dx, dw, db: g })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    pub activation: Activation,
}

impl<T: Scalar> Dense<T> {
    pub fn forward(&self, x: ArrayView1<T>) -> Result<Array1<T>> {
        dense_forward(x, &self.weight, &self.bias, self.activation)
    }

    pub fn backward(&self, x: ArrayView1<T>, grad_out: ArrayView1<T>) -> Result<DenseGrad<T>> {
        dense_backward(x, &self.weight, &self.bias, self.activation, grad_out)
    }
}
