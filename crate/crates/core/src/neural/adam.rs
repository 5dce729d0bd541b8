//! Adam with an exponentially decaying learning rate.

use super::Scalar;
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// `lr(step) = lr0 * rate^(step / decay_steps)`, continuous in `step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub lr0: f64,
    pub decay_rate: f64,
    pub decay_steps: f64,
}

impl LrSchedule {
    pub fn new(lr0: f64) -> Self {
        LrSchedule {
            lr0,
            decay_rate: 0.999,
            decay_steps: 1000.0,
        }
    }

    pub fn lr(&self, step: u64) -> f64 {
        self.lr0 * self.decay_rate.powf(step as f64 / self.decay_steps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(shapes: &[usize]) -> Self {
        AdamState {
            m: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            step: 0,
        }
    }
}

/// One Adam update of every parameter tensor.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut [T]],
    grads: &[Vec<T>],
    state: &mut AdamState<T>,
    schedule: &LrSchedule,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} params, {} grads, {} state tensors",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.m[i].len() {
            return Err(Error::ShapeMismatch(format!("tensor {i}: {} vs {}", p.len(), g.len())));
        }
    }
    let lr = schedule.lr(state.step);
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - BETA1.powf(t);
    let c2 = 1.0 - BETA2.powf(t);
    let (b1, b2) = (T::from_f64_lossy(BETA1), T::from_f64_lossy(BETA2));
    let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
    let step_size = T::from_f64_lossy(lr / c1);
    let c2s = T::from_f64_lossy(c2.sqrt());
    let eps = T::from_f64_lossy(EPSILON);
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for i in 0..p.len() {
            m[i] = b1 * m[i] + one_b1 * g[i];
            v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
            p[i] = p[i] - step_size * m[i] / (v[i].sqrt() / c2s + eps);
        }
    }
    Ok(())
}
