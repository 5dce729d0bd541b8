//! Contrast and resolution measures on dB images: CR, CNR, GCNR, lateral
//! -6 dB width and speckle SNR. Standard deviations are population (1/n).

use ndarray::{Array2, ArrayView1};

use crate::envelope::BModeImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    pub target: Array2<bool>,
    pub background: Array2<bool>,
}

impl RegionMask {
    pub fn new(target: Array2<bool>, background: Array2<bool>) -> Result<Self> {
        if target.dim() != background.dim() {
            return Err(Error::ShapeMismatch("target and background masks differ in shape".into()));
        }
        if target.iter().zip(background.iter()).any(|(&a, &b)| a && b) {
            return Err(Error::InvalidInput("target and background masks overlap".into()));
        }
        if !target.iter().any(|&v| v) || !background.iter().any(|&v| v) {
            return Err(Error::EmptyRegion);
        }
        Ok(RegionMask { target, background })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

fn values(img: &BModeImage, mask: &Array2<bool>) -> Result<Vec<f64>> {
    if img.db.dim() != mask.dim() {
        return Err(Error::ShapeMismatch(format!(
            "image {:?} vs mask {:?}",
            img.db.dim(),
            mask.dim()
        )));
    }
    let v: Vec<f64> = img
        .db
        .iter()
        .zip(mask.iter())
        .filter(|(_, &m)| m)
        .map(|(&x, _)| x)
        .collect();
    if v.is_empty() {
        return Err(Error::EmptyRegion);
    }
    Ok(v)
}

fn stats_of(v: &[f64]) -> RegionStats {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    RegionStats {
        mean,
        std: var.sqrt(),
        count: v.len(),
    }
}

pub fn region_stats(img: &BModeImage, region: &Array2<bool>) -> Result<RegionStats> {
    Ok(stats_of(&values(img, region)?))
}

/// Contrast ratio `|mu_t - mu_b|` in dB.
pub fn cr(img: &BModeImage, mask: &RegionMask) -> Result<f64> {
    let t = region_stats(img, &mask.target)?;
    let b = region_stats(img, &mask.background)?;
    Ok((t.mean - b.mean).abs())
}

pub fn cnr(img: &BModeImage, mask: &RegionMask) -> Result<f64> {
    let t = region_stats(img, &mask.target)?;
    let b = region_stats(img, &mask.background)?;
    let denom = (t.std * t.std + b.std * b.std).sqrt();
    if denom == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((t.mean - b.mean).abs() / denom)
}

/// Generalized CNR, `1 - sum_bins min(p_t, p_b)` over a shared histogram
/// spanning the union of both regions.
pub fn gcnr(img: &BModeImage, mask: &RegionMask, bins: usize) -> Result<f64> {
    let t = values(img, &mask.target)?;
    let b = values(img, &mask.background)?;
    Ok(gcnr_samples(&t, &b, bins))
}

/// GCNR of two raw sample sets.
pub fn gcnr_samples(t: &[f64], b: &[f64], bins: usize) -> f64 {
    assert!(bins > 0);
    let lo = t.iter().chain(b).cloned().fold(f64::INFINITY, f64::min);
    let hi = t.iter().chain(b).cloned().fold(f64::NEG_INFINITY, f64::max);
    let hist = |v: &[f64]| {
        let mut h = vec![0usize; bins];
        for &x in v {
            let k = if hi > lo {
                (((x - lo) / (hi - lo)) * bins as f64).floor() as usize
            } else {
                0
            };
            h[k.min(bins - 1)] += 1;
        }
        h
    };
    let (ht, hb) = (hist(t), hist(b));
    let (nt, nb) = (t.len() as f64, b.len() as f64);
    let overlap: f64 = ht
        .iter()
        .zip(&hb)
        .map(|(&x, &y)| (x as f64 / nt).min(y as f64 / nb))
        .sum();
    (1.0 - overlap).clamp(0.0, 1.0)
}

/// Width (in scan lines) of the region around the row maximum that stays
/// above `peak + level`, with linear interpolation at the crossings.
pub fn fwhm_lateral(img: &BModeImage, row: usize, level: f64) -> Result<f64> {
    if row >= img.rows() {
        return Err(Error::InvalidInput(format!("row {row} out of range")));
    }
    width_at_level(img.db.row(row), level)
}

pub fn width_at_level(v: ArrayView1<f64>, level: f64) -> Result<f64> {
    let n = v.len();
    let peak = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() || v.iter().filter(|&&x| x == peak).count() != 1 {
        return Err(Error::NoPeak);
    }
    let p = v.iter().position(|&x| x == peak).unwrap();
    let thr = peak + level;
    let mut left = 0.0;
    let mut j = p;
    loop {
        if j == 0 {
            break;
        }
        if v[j - 1] < thr {
            left = j as f64 - (v[j] - thr) / (v[j] - v[j - 1]);
            break;
        }
        j -= 1;
    }
    let mut right = (n - 1) as f64;
    let mut j = p;
    while j + 1 < n {
        if v[j + 1] < thr {
            right = j as f64 + (v[j] - thr) / (v[j] - v[j + 1]);
            break;
        }
        j += 1;
    }
    Ok(right - left)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeckleSnr {
    pub value: f64,
    /// Set when the region has zero spread and `value` is the `f64::MAX` sentinel.
    pub saturated: bool,
}

/// `|mean| / std` of a region in the dB domain.
pub fn speckle_snr(img: &BModeImage, region: &Array2<bool>) -> Result<SpeckleSnr> {
    let s = region_stats(img, region)?;
    if s.mean == 0.0 {
        return Err(Error::ZeroMean);
    }
    if s.std == 0.0 {
        return Ok(SpeckleSnr {
            value: f64::MAX,
            saturated: true,
        });
    }
    Ok(SpeckleSnr {
        value: s.mean.abs() / s.std,
        saturated: false,
    })
}
