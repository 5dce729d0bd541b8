//! Per-depth-plane inference timing and the linear-scaling check.

use std::time::Duration;

use ndarray::{concatenate, Axis};

use crate::beamform::ApertureCube;
use crate::error::Result;
use crate::neural::Scalar;
use crate::par;
use crate::switchable::{infer_frame, Style, SwitchableModel};

/// Accepted band for time(2N planes) / time(N planes).
pub const SCALING_BAND: (f64, f64) = (1.6, 2.4);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub samples: usize,
    pub mean: Duration,
    pub median: Duration,
    /// Nearest-rank 95th percentile.
    pub p95: Duration,
}

pub fn latency_stats(samples: &[Duration]) -> LatencyStats {
    if samples.is_empty() {
        return LatencyStats {
            samples: 0,
            mean: Duration::ZERO,
            median: Duration::ZERO,
            p95: Duration::ZERO,
        };
    }
    let mut s = samples.to_vec();
    s.sort();
    let n = s.len();
    let mean = s.iter().sum::<Duration>() / n as u32;
    let median = if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2
    };
    let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
    LatencyStats {
        samples: n,
        mean,
        median,
        p95: s[rank - 1],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub planes: usize,
    pub time_n: Duration,
    pub time_2n: Duration,
    pub ratio: f64,
}

impl Scaling {
    pub fn within_band(&self) -> bool {
        (SCALING_BAND.0..=SCALING_BAND.1).contains(&self.ratio)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub threads: usize,
    pub repeats: usize,
    pub planes: usize,
    pub per_plane: LatencyStats,
    pub frame: LatencyStats,
    pub scaling: Scaling,
}

/// The cube stacked on itself along depth, giving twice the planes.
pub fn doubled_depth(cube: &ApertureCube) -> ApertureCube {
    ApertureCube {
        data: concatenate(Axis(1), &[cube.data.view(), cube.data.view()]).expect("same shape"),
        offsets: cube.offsets.clone(),
    }
}

fn frame_times<T: Scalar>(
    model: &SwitchableModel<T>,
    cube: &ApertureCube,
    style: Style,
    repeats: usize,
) -> Result<(Vec<Duration>, Vec<Duration>)> {
    let mut planes = Vec::new();
    let mut frames = Vec::new();
    for _ in 0..repeats {
        let (_, t) = infer_frame(model, cube, style, 60.0)?;
        planes.extend(t.per_plane);
        frames.push(t.total);
    }
    Ok((planes, frames))
}

/// Times `repeats` inferences of `cube` and of its depth-doubled copy. The
/// scaling ratio compares median frame times.
pub fn bench_model<T: Scalar>(model: &SwitchableModel<T>, cube: &ApertureCube, style: Style, repeats: usize) -> Result<BenchReport> {
    let repeats = repeats.max(1);
    // one untimed pass to warm caches and the thread pool
    infer_frame(model, cube, style, 60.0)?;
    let (planes, frames) = frame_times(model, cube, style, repeats)?;
    let (_, frames_2n) = frame_times(model, &doubled_depth(cube), style, repeats)?;
    let frame = latency_stats(&frames);
    let frame_2n = latency_stats(&frames_2n);
    Ok(BenchReport {
        threads: par::threads(),
        repeats,
        planes: cube.depth(),
        per_plane: latency_stats(&planes),
        frame,
        scaling: Scaling {
            planes: cube.depth(),
            time_n: frame.median,
            time_2n: frame_2n.median,
            ratio: frame_2n.median.as_secs_f64() / frame.median.as_secs_f64().max(1e-12),
        },
    })
}
