//! Training pairs `(Z_n, o_n(c))` collected over depth planes and styles.

use ndarray::{Array1, Array3};
use rand::seq::SliceRandom;

use crate::beamform::{make_input_slab, ApertureCube};
use crate::deconv::Psf;
use crate::envelope::BModeImage;
use crate::error::{Error, Result};
use crate::pipeline::{das_envelope, style_images, PipelineParams};
use crate::rng;

/// Fraction of samples held out for validation.
pub const VAL_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Standardized slab `[J][L][D]`.
    pub input: Array3<f64>,
    /// Target lines in dB, one per style in [`super::Style::ALL`] order.
    pub targets: [Array1<f64>; 4],
    /// Mean and std removed from the raw slab.
    pub slab_mean: f64,
    pub slab_std: f64,
    pub frame: usize,
    pub depth: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.train.len() + self.val.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Zero-mean, unit-std copy of a slab with the removed statistics. A constant
/// slab divides by 1 so it maps to all zeros.
pub fn standardize(slab: &Array3<f64>) -> (Array3<f64>, f64, f64) {
    let n = slab.len() as f64;
    let mean = slab.sum() / n;
    let var = slab.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    let div = if sd > 0.0 { sd } else { 1.0 };
    (slab.mapv(|v| (v - mean) / div), mean, sd)
}

/// Standardized input slab for depth `n`.
pub fn standardized_slab(cube: &ApertureCube, n: usize, context: usize) -> (Array3<f64>, f64, f64) {
    standardize(&make_input_slab(cube, n, context).data)
}

/// Samples for every depth of one frame, given its four style images.
pub fn frame_samples(cube: &ApertureCube, images: &[BModeImage; 4], context: usize, frame: usize) -> Result<Vec<Sample>> {
    let (lines, depth) = (cube.lines(), cube.depth());
    for img in images {
        if img.db.dim() != (depth, lines) {
            return Err(Error::ShapeMismatch(format!(
                "style image {:?} for cube with {depth} depths and {lines} lines",
                img.db.dim()
            )));
        }
    }
    Ok((0..depth)
        .map(|n| {
            let (input, slab_mean, slab_std) = standardized_slab(cube, n, context);
            let targets = std::array::from_fn(|k| images[k].db.row(n).to_owned());
            Sample {
                input,
                targets,
                slab_mean,
                slab_std,
                frame,
                depth: n,
            }
        })
        .collect())
}

/// Seeded shuffle, then the last `round(VAL_FRACTION * n)` samples (at least
/// one when there are two or more) go to validation.
pub fn split(mut samples: Vec<Sample>, seed: u64) -> Dataset {
    let mut r = rng::seeded(seed);
    samples.shuffle(&mut r);
    let n = samples.len();
    let n_val = if n < 2 {
        0
    } else {
        ((VAL_FRACTION * n as f64).round() as usize).max(1)
    };
    let val = samples.split_off(n - n_val);
    Dataset { train: samples, val }
}

/// Builds style targets for every cube with the classical pipelines and
/// splits the resulting samples.
pub fn build_dataset(
    cubes: &[ApertureCube],
    psf: &Psf,
    params: &PipelineParams,
    context: usize,
    seed: u64,
) -> Result<Dataset> {
    let mut samples = Vec::new();
    for (frame, cube) in cubes.iter().enumerate() {
        let images = style_images(&das_envelope(cube), psf, params)?;
        samples.extend(frame_samples(cube, &images, context, frame)?);
    }
    Ok(split(samples, seed))
}
