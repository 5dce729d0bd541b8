//! Stride-1 2-D cross-correlation over `[channels][height][width]` maps,
//! computed as an im2col matrix product.

use ndarray::{linalg::general_mat_mul, Array1, Array2, Array3, Array4, ArrayView3, ArrayView4, Axis};

use super::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding that preserves the spatial size (odd kernels).
    Same,
    Valid,
}

impl Padding {
    fn amount(self, kh: usize, kw: usize) -> (usize, usize) {
        match self {
            Padding::Same => (kh / 2, kw / 2),
            Padding::Valid => (0, 0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvGrad<T> {
    pub dx: Array3<T>,
    pub dw: Array4<T>,
    pub db: Array1<T>,
}

fn out_dims(x: (usize, usize, usize), w: (usize, usize, usize, usize), pad: Padding) -> Result<(usize, usize)> {
    let (cin, h, wd) = x;
    let (_, wcin, kh, kw) = w;
    if cin != wcin {
        return Err(Error::ShapeMismatch(format!("input has {cin} channels, kernel expects {wcin}")));
    }
    let (ph, pw) = pad.amount(kh, kw);
    if h + 2 * ph < kh || wd + 2 * pw < kw {
        return Err(Error::ShapeMismatch(format!("kernel {kh}x{kw} larger than input {h}x{wd}")));
    }
    Ok((h + 2 * ph - kh + 1, wd + 2 * pw - kw + 1))
}

fn im2col<T: Scalar>(x: ArrayView3<T>, kh: usize, kw: usize, pad: Padding, ho: usize, wo: usize) -> Array2<T> {
    let (cin, h, w) = x.dim();
    let (ph, pw) = pad.amount(kh, kw);
    let mut cols = Array2::<T>::zeros((cin * kh * kw, ho * wo));
    for c in 0..cin {
        for a in 0..kh {
            for b in 0..kw {
                let row = (c * kh + a) * kw + b;
                let mut dst = cols.row_mut(row);
                for i in 0..ho {
                    let si = i as isize + a as isize - ph as isize;
                    if si < 0 || si >= h as isize {
                        continue;
                    }
                    for j in 0..wo {
                        let sj = j as isize + b as isize - pw as isize;
                        if sj >= 0 && sj < w as isize {
                            dst[i * wo + j] = x[[c, si as usize, sj as usize]];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(cols: &Array2<T>, shape: (usize, usize, usize), kh: usize, kw: usize, pad: Padding, ho: usize, wo: usize) -> Array3<T> {
    let (cin, h, w) = shape;
    let (ph, pw) = pad.amount(kh, kw);
    let mut x = Array3::<T>::zeros(shape);
    for c in 0..cin {
        for a in 0..kh {
            for b in 0..kw {
                let src = cols.row((c * kh + a) * kw + b);
                for i in 0..ho {
                    let si = i as isize + a as isize - ph as isize;
                    if si < 0 || si >= h as isize {
                        continue;
                    }
                    for j in 0..wo {
                        let sj = j as isize + b as isize - pw as isize;
                        if sj >= 0 && sj < w as isize {
                            x[[c, si as usize, sj as usize]] = x[[c, si as usize, sj as usize]] + src[i * wo + j];
                        }
                    }
                }
            }
        }
    }
    x
}

fn weight_matrix<T: Scalar>(w: ArrayView4<T>) -> Array2<T> {
    let (cout, cin, kh, kw) = w.dim();
    w.to_owned()
        .into_shape_with_order((cout, cin * kh * kw))
        .expect("contiguous weights")
}

/// `y[o][i][j] = b[o] + sum_{c,a,b} w[o][c][a][b] x[c][i + a - ph][j + b - pw]`.
pub fn conv2d_forward<T: Scalar>(x: ArrayView3<T>, w: ArrayView4<T>, b: &Array1<T>, pad: Padding) -> Result<Array3<T>> {
    let (ho, wo) = out_dims(x.dim(), w.dim(), pad)?;
    let (cout, _, kh, kw) = w.dim();
    if b.len() != cout {
        return Err(Error::ShapeMismatch(format!("bias has {} entries for {cout} outputs", b.len())));
    }
    let cols = im2col(x, kh, kw, pad, ho, wo);
    Ok(forward_cols(&cols, w, b, ho, wo))
}

fn forward_cols<T: Scalar>(cols: &Array2<T>, w: ArrayView4<T>, b: &Array1<T>, ho: usize, wo: usize) -> Array3<T> {
    let cout = w.dim().0;
    let wm = weight_matrix(w);
    let mut y = Array2::<T>::zeros((cout, ho * wo));
    for (mut row, &bias) in y.axis_iter_mut(Axis(0)).zip(b.iter()) {
        row.fill(bias);
    }
    general_mat_mul(T::one(), &wm, cols, T::one(), &mut y);
    y.into_shape_with_order((cout, ho, wo)).expect("contiguous output")
}

/// Exact gradients of [`conv2d_forward`] given the upstream gradient.
pub fn conv2d_backward<T: Scalar>(x: ArrayView3<T>, w: ArrayView4<T>, grad_out: ArrayView3<T>, pad: Padding) -> Result<ConvGrad<T>> {
    let (ho, wo) = out_dims(x.dim(), w.dim(), pad)?;
    let (cout, _, kh, kw) = w.dim();
    if grad_out.dim() != (cout, ho, wo) {
        return Err(Error::ShapeMismatch(format!(
            "grad_out {:?} vs expected {:?}",
            grad_out.dim(),
            (cout, ho, wo)
        )));
    }
    let cols = im2col(x, kh, kw, pad, ho, wo);
    Ok(backward_cols(&cols, x.dim(), w, grad_out, pad, ho, wo))
}

fn backward_cols<T: Scalar>(
    cols: &Array2<T>,
    xdim: (usize, usize, usize),
    w: ArrayView4<T>,
    grad_out: ArrayView3<T>,
    pad: Padding,
    ho: usize,
    wo: usize,
) -> ConvGrad<T> {
    let (cout, cin, kh, kw) = w.dim();
    let g = grad_out
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((cout, ho * wo))
        .expect("contiguous grad");
    let mut dwm = Array2::<T>::zeros((cout, cin * kh * kw));
    general_mat_mul(T::one(), &g, &cols.t(), T::zero(), &mut dwm);
    let db = g.sum_axis(Axis(1));
    let wm = weight_matrix(w);
    let mut dcols = Array2::<T>::zeros((cin * kh * kw, ho * wo));
    general_mat_mul(T::one(), &wm.t(), &g, T::zero(), &mut dcols);
    let dx = col2im(&dcols, xdim, kh, kw, pad, ho, wo);
    ConvGrad {
        dx,
        dw: dwm.into_shape_with_order((cout, cin, kh, kw)).expect("contiguous"),
        db,
    }
}

/// Convolution layer with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub weight: Array4<T>,
    pub bias: Array1<T>,
    pub padding: Padding,
}

/// Forward state kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    cols: Array2<T>,
    xdim: (usize, usize, usize),
    ho: usize,
    wo: usize,
}

impl<T: Scalar> Conv2d<T> {
    pub fn forward(&self, x: ArrayView3<T>) -> Result<(Array3<T>, ConvCache<T>)> {
        let (ho, wo) = out_dims(x.dim(), self.weight.dim(), self.padding)?;
        let (_, _, kh, kw) = self.weight.dim();
        let cols = im2col(x, kh, kw, self.padding, ho, wo);
        let y = forward_cols(&cols, self.weight.view(), &self.bias, ho, wo);
        Ok((
            y,
            ConvCache {
                cols,
                xdim: x.dim(),
                ho,
                wo,
            },
        ))
    }

    pub fn backward(&self, cache: &ConvCache<T>, grad_out: ArrayView3<T>) -> ConvGrad<T> {
        backward_cols(
            &cache.cols,
            cache.xdim,
            self.weight.view(),
            grad_out,
            self.padding,
            cache.ho,
            cache.wo,
        )
    }
}
