//! Adaptive instance normalization: replace each channel's mean and std
//! with target values, `(s_t / s_u) (u - m_u) + m_t`.

use ndarray::{Array1, Array3, ArrayView1, ArrayView3, Axis};

use super::Scalar;
use crate::error::{Error, Result};

/// Floor on a channel's std below which the channel is treated as constant.
pub const EPS_ADAIN: f64 = 1e-5;

/// Population mean and std (divide by the element count).
pub fn instance_stats<T: Scalar>(u: &[T]) -> (T, T) {
    assert!(!u.is_empty(), "instance_stats of an empty channel");
    let n = T::from_usize(u.len()).unwrap();
    let mean = u.iter().copied().sum::<T>() / n;
    let var = u.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    (mean, var.sqrt())
}

/// Single-channel AdaIN. Fails on a (near-)constant input channel.
pub fn adain_transform<T: Scalar>(u: &[T], target_mean: T, target_std: T) -> Result<Vec<T>> {
    let (m, s) = instance_stats(u);
    if s.to_f64_lossy() <= EPS_ADAIN {
        return Err(Error::DegenerateChannel {
            channel: 0,
            std: s.to_f64_lossy(),
        });
    }
    let k = target_std / s;
    Ok(u.iter().map(|&v| k * (v - m) + target_mean).collect())
}

/// State saved by [`adain_forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct AdainCache<T> {
    /// Normalized input `(u - m_u) / s_u` per channel.
    pub normalized: Array3<T>,
    pub std: Array1<T>,
    /// Channels whose std was clamped to [`EPS_ADAIN`].
    pub clamped: Vec<bool>,
}

impl<T> AdainCache<T> {
    pub fn degenerate_channels(&self) -> usize {
        self.clamped.iter().filter(|&&c| c).count()
    }
}

/// Channelwise AdaIN over a `[P][H][W]` feature map. Constant channels get
/// their std clamped to `EPS_ADAIN` (and are counted in the cache) instead of
/// failing, so training can proceed.
pub fn adain_forward<T: Scalar>(
    x: ArrayView3<T>,
    target_mean: ArrayView1<T>,
    target_std: ArrayView1<T>,
) -> Result<(Array3<T>, AdainCache<T>)> {
    let p = x.dim().0;
    if target_mean.len() != p || target_std.len() != p {
        return Err(Error::ShapeMismatch(format!(
            "adain code length {}/{} for {p} channels",
            target_mean.len(),
            target_std.len()
        )));
    }
    let eps = T::from_f64_lossy(EPS_ADAIN);
    let mut normalized = Array3::<T>::zeros(x.dim());
    let mut out = Array3::<T>::zeros(x.dim());
    let mut stds = Array1::<T>::zeros(p);
    let mut clamped = vec![false; p];
    for c in 0..p {
        let ch = x.index_axis(Axis(0), c);
        let vals: Vec<T> = ch.iter().copied().collect();
        let (m, mut s) = instance_stats(&vals);
        if s <= eps {
            s = eps;
            clamped[c] = true;
        }
        stds[c] = s;
        let mut nrm = normalized.index_axis_mut(Axis(0), c);
        let mut o = out.index_axis_mut(Axis(0), c);
        for ((n, y), &v) in nrm.iter_mut().zip(o.iter_mut()).zip(ch.iter()) {
            *n = (v - m) / s;
            *y = target_std[c] * *n + target_mean[c];
        }
    }
    Ok((
        out,
        AdainCache {
            normalized,
            std: stds,
            clamped,
        },
    ))
}

/// Returns `(dx, d target_mean, d target_std)`. Clamped channels treat their
/// std as a constant.
pub fn adain_backward<T: Scalar>(
    cache: &AdainCache<T>,
    target_std: ArrayView1<T>,
    grad_out: ArrayView3<T>,
) -> (Array3<T>, Array1<T>, Array1<T>) {
    let p = grad_out.dim().0;
    let mut dx = Array3::<T>::zeros(grad_out.dim());
    let mut dmean = Array1::<T>::zeros(p);
    let mut dstd = Array1::<T>::zeros(p);
    for c in 0..p {
        let g = grad_out.index_axis(Axis(0), c);
        let xn = cache.normalized.index_axis(Axis(0), c);
        let n = T::from_usize(g.len()).unwrap();
        let sum_g = g.iter().copied().sum::<T>();
        let sum_gx = g.iter().zip(xn.iter()).map(|(&a, &b)| a * b).sum::<T>();
        dmean[c] = sum_g;
        dstd[c] = sum_gx;
        let k = target_std[c] / cache.std[c];
        let mut d = dx.index_axis_mut(Axis(0), c);
        if cache.clamped[c] {
            for (o, &gv) in d.iter_mut().zip(g.iter()) {
                *o = k * gv;
            }
        } else {
            let (mg, mgx) = (sum_g / n, sum_gx / n);
            for ((o, &gv), &xv) in d.iter_mut().zip(g.iter()).zip(xn.iter()) {
                *o = k * (gv - mg - xv * mgx);
            }
        }
    }
    (dx, dmean, dstd)
}

/// Per-channel instance statistics of a `[P][H][W]` map as `(means, stds)`.
pub fn channel_stats<T: Scalar>(x: ArrayView3<T>) -> (Array1<T>, Array1<T>) {
    let p = x.dim().0;
    let mut m = Array1::<T>::zeros(p);
    let mut s = Array1::<T>::zeros(p);
    for c in 0..p {
        let vals: Vec<T> = x.index_axis(Axis(0), c).iter().copied().collect();
        let (a, b) = instance_stats(&vals);
        m[c] = a;
        s[c] = b;
    }
    (m, s)
}
