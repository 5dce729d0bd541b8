//! Mini-batch Adam training with sampled style codes, early stopping on the
//! validation loss, and frame inference.

use std::time::{Duration, Instant};

use ndarray::{Array1, Array2, Array3};
use rand::seq::SliceRandom;
use rand::Rng;

use super::dataset::{standardized_slab, Sample};
use super::model::{Style, SwitchableModel};
use crate::beamform::ApertureCube;
use crate::envelope::{display_threshold, BModeImage};
use crate::error::{Error, Result};
use crate::neural::{adam_step, AdamState, LrSchedule, Scalar};
use crate::{par, rng};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr0: f64,
    pub patience: usize,
    pub seed: u64,
    /// Styles drawn during training and scored on validation.
    pub styles: Vec<Style>,
    /// Set the fixed output affine from the training-target mean and std.
    pub calibrate_output: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch: 32,
            lr0: 1e-4,
            patience: 20,
            seed: 0,
            styles: Style::ALL.to_vec(),
            calibrate_output: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Geometric mean of `val_per_style` over the trained styles, so that one
    /// hard style cannot drive early stopping alone.
    pub val_loss: f64,
    /// NaN for styles outside the training set.
    pub val_per_style: [f64; 4],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub steps: usize,
}

struct Prepared<T> {
    input: Array3<T>,
    targets: [Array1<T>; 4],
}

fn prepare<T: Scalar>(samples: &[Sample]) -> Vec<Prepared<T>> {
    samples
        .iter()
        .map(|s| Prepared {
            input: s.input.mapv(T::from_f64_lossy),
            targets: std::array::from_fn(|k| s.targets[k].mapv(T::from_f64_lossy)),
        })
        .collect()
}

fn mse<T: Scalar>(a: &Array1<T>, b: &Array1<T>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let d = x.to_f64_lossy() - y.to_f64_lossy();
            d * d
        })
        .sum::<f64>()
        / a.len() as f64
}

/// `m[s][t]` = mean over samples of MSE(output under code s, target t).
pub fn cross_mse<T: Scalar>(model: &SwitchableModel<T>, samples: &[Sample]) -> Result<[[f64; 4]; 4]> {
    let data = prepare::<T>(samples);
    cross_mse_prepared(model, &data)
}

fn cross_mse_prepared<T: Scalar>(model: &SwitchableModel<T>, data: &[Prepared<T>]) -> Result<[[f64; 4]; 4]> {
    let mut out = [[0.0; 4]; 4];
    if data.is_empty() {
        return Ok(out);
    }
    for s in Style::ALL {
        let code = model.code_for(s)?;
        let rows = par::map_range(data.len(), |i| -> Result<[f64; 4]> {
            let y = model.forward_with_code(data[i].input.view(), &code)?.line;
            Ok(std::array::from_fn(|t| mse(&y, &data[i].targets[t])))
        });
        for r in rows {
            let r = r?;
            for t in 0..4 {
                out[s.index()][t] += r[t] / data.len() as f64;
            }
        }
    }
    Ok(out)
}

fn add_into<T: Scalar>(acc: &mut [Vec<T>], g: &[Vec<T>]) {
    for (a, b) in acc.iter_mut().zip(g) {
        for (x, &y) in a.iter_mut().zip(b) {
            *x = *x + y;
        }
    }
}

/// Trains `model` in place and returns the loss history. The weights of the
/// epoch with the lowest validation loss are kept, and the four style codes
/// are evaluated and stored on return.
pub fn train<T: Scalar>(model: &mut SwitchableModel<T>, train_set: &[Sample], val_set: &[Sample], cfg: &TrainConfig) -> Result<TrainHistory> {
    if train_set.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    if cfg.batch == 0 || cfg.epochs == 0 || cfg.styles.is_empty() {
        return Err(Error::Config("epochs, batch and styles must be nonempty".into()));
    }
    let train_data = prepare::<T>(train_set);
    let val_data = prepare::<T>(val_set);
    if cfg.calibrate_output {
        let vals: Vec<f64> = train_set
            .iter()
            .flat_map(|s| cfg.styles.iter().flat_map(move |st| s.targets[st.index()].iter().copied()))
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let sd: f64 = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        model.output_shift = T::from_f64_lossy(mean);
        model.output_scale = T::from_f64_lossy(if sd > 0.0 { sd } else { 1.0 });
    }
    model.codes = None;

    let schedule = LrSchedule::new(cfg.lr0);
    let mut adam = AdamState::<T>::new(&model.param_sizes());
    let mut r = rng::seeded(cfg.seed);
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut history = TrainHistory::default();
    let mut best = (f64::INFINITY, model.clone());
    let mut since_best = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut r);
        let mut epoch_loss = 0.0;
        for (step_in_epoch, idx) in order.chunks(cfg.batch).enumerate() {
            let picks: Vec<(usize, Style)> = idx
                .iter()
                .map(|&i| (i, cfg.styles[r.gen_range(0..cfg.styles.len())]))
                .collect();
            let m: &SwitchableModel<T> = model;
            let per_sample = par::map_range(picks.len(), |k| -> Result<(f64, Vec<Vec<T>>)> {
                let (i, style) = picks[k];
                let s = &train_data[i];
                let (y, trace) = m.forward_train(s.input.view(), T::from_f64_lossy(style.code()))?;
                let t = &s.targets[style.index()];
                let scale = T::from_f64_lossy(2.0 / (y.len() * picks.len()) as f64);
                let g = (&y - t).mapv(|d| d * scale);
                Ok((mse(&y, t), m.backward(&trace, g.view())?))
            });
            let mut loss = 0.0;
            let mut grads: Option<Vec<Vec<T>>> = None;
            for item in per_sample {
                let (l, g) = item?;
                loss += l / picks.len() as f64;
                match &mut grads {
                    None => grads = Some(g),
                    Some(acc) => add_into(acc, &g),
                }
            }
            let grads = grads.expect("nonempty batch");
            let finite = grads.iter().all(|g| g.iter().all(|v| v.is_finite()));
            if !loss.is_finite() || !finite {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step: step_in_epoch,
                    detail: format!("batch loss {loss}, gradients finite: {finite}"),
                });
            }
            let mut params = model.params_mut();
            adam_step(&mut params, &grads, &mut adam, &schedule)?;
            epoch_loss += loss * picks.len() as f64;
            history.steps += 1;
        }
        let train_loss = epoch_loss / train_data.len() as f64;
        let mut val_per_style = [f64::NAN; 4];
        let val_loss = if val_data.is_empty() {
            train_loss
        } else {
            let cross = cross_mse_prepared(model, &val_data)?;
            for s in &cfg.styles {
                val_per_style[s.index()] = cross[s.index()][s.index()];
            }
            let log_mean = cfg.styles.iter().map(|s| val_per_style[s.index()].ln()).sum::<f64>() / cfg.styles.len() as f64;
            log_mean.exp()
        };
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                step: 0,
                detail: format!("validation loss {val_loss}"),
            });
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_per_style,
        });
        if val_loss < best.0 {
            best = (val_loss, model.clone());
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                history.stopped_early = epoch + 1 < cfg.epochs;
                break;
            }
        }
    }
    *model = best.1;
    model.refresh_codes()?;
    Ok(history)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameTiming {
    /// Forward time of each depth plane.
    pub per_plane: Vec<Duration>,
    pub total: Duration,
    /// Bottleneck channels clamped by AdaIN, summed over planes.
    pub degenerate_channels: usize,
}

/// Runs the model over every depth plane of `cube` and stacks the lines into
/// a thresholded `[N][L]` dB image.
pub fn infer_frame<T: Scalar>(
    model: &SwitchableModel<T>,
    cube: &ApertureCube,
    style: Style,
    dynamic_range: f64,
) -> Result<(BModeImage, FrameTiming)> {
    let code = model.code_for(style)?;
    let context = model.arch.depth_context;
    let start = Instant::now();
    let planes = par::map_range(cube.depth(), |n| -> Result<(Array1<T>, usize, Duration)> {
        let t0 = Instant::now();
        let (slab, _, _) = standardized_slab(cube, n, context);
        let out = model.forward_with_code(slab.mapv(T::from_f64_lossy).view(), &code)?;
        Ok((out.line, out.degenerate_channels, t0.elapsed()))
    });
    let total = start.elapsed();
    let mut db = Array2::<f64>::zeros((cube.depth(), cube.lines()));
    let mut per_plane = Vec::with_capacity(cube.depth());
    let mut degenerate = 0;
    for (n, p) in planes.into_iter().enumerate() {
        let (line, d, t) = p?;
        for (l, v) in line.iter().enumerate() {
            db[[n, l]] = v.to_f64_lossy();
        }
        per_plane.push(t);
        degenerate += d;
    }
    let img = display_threshold(&BModeImage { db, reference_max: 0.0 }, dynamic_range);
    Ok((
        img,
        FrameTiming {
            per_plane,
            total,
            degenerate_channels: degenerate,
        },
    ))
}
