//! Envelope detection and B-mode display: FFT, analytic-signal envelope, log
//! compression, dynamic-range clamping and PGM output.

use std::io::Write;

use ndarray::{Array2, ArrayView2, Axis};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::par;

/// Log-compressed image, `[depth][line]` in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct BModeImage {
    pub db: Array2<f64>,
    /// Level of the normalizing maximum, `20 log10(max)`; 0 for an all-zero input.
    pub reference_max: f64,
}

impl BModeImage {
    pub fn rows(&self) -> usize {
        self.db.dim().0
    }

    pub fn cols(&self) -> usize {
        self.db.dim().1
    }
}

fn transform(x: &[Complex64], inverse: bool) -> Result<Vec<Complex64>> {
    let n = x.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::LengthNotPowerOfTwo(n));
    }
    let mut planner = FftPlanner::new();
    let plan = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    let mut buf = x.to_vec();
    plan.process(&mut buf);
    Ok(buf)
}

/// Forward DFT, `X[k] = sum x[n] e^{-2 pi i k n / N}`.
pub fn fft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    transform(x, false)
}

/// Inverse DFT including the `1/N` factor.
pub fn ifft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = x.len() as f64;
    Ok(transform(x, true)?.into_iter().map(|v| v / n).collect())
}

/// Magnitude of the analytic signal of `rf`.
pub fn hilbert_envelope(rf: &[f64]) -> Vec<f64> {
    if rf.is_empty() {
        return Vec::new();
    }
    let n = rf.len().next_power_of_two();
    let mut buf: Vec<Complex64> = rf.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(n, Complex64::new(0.0, 0.0));
    let mut spec = fft(&buf).expect("power-of-two length");
    if n > 1 {
        let half = n / 2;
        for v in &mut spec[1..half] {
            *v *= 2.0;
        }
        for v in &mut spec[half + 1..] {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    let analytic = ifft(&spec).expect("power-of-two length");
    analytic[..rf.len()].iter().map(|c| c.norm()).collect()
}

/// Envelope of every scan line of a `[line][depth]` RF-sum, returned as a
/// `[depth][line]` image.
pub fn envelope_image(rf_sum: ArrayView2<f64>) -> Array2<f64> {
    let (lines, depth) = rf_sum.dim();
    let cols: Vec<Vec<f64>> = par::map_range(lines, |l| {
        let trace: Vec<f64> = rf_sum.index_axis(Axis(0), l).to_vec();
        hilbert_envelope(&trace)
    });
    Array2::from_shape_fn((depth, lines), |(n, l)| cols[l][n])
}

/// `20 log10(env / max)` with a floor at `1e-10 * max`.
pub fn log_compress(env: ArrayView2<f64>) -> BModeImage {
    let max = env.iter().cloned().fold(0.0f64, f64::max);
    if !(max > 0.0) {
        return BModeImage {
            db: Array2::zeros(env.dim()),
            reference_max: 0.0,
        };
    }
    let floor = 1e-10 * max;
    BModeImage {
        db: env.mapv(|v| 20.0 * (v.max(floor) / max).log10()),
        reference_max: 20.0 * max.log10(),
    }
}

/// Clamps every pixel into `[-dynamic_range, 0]`.
pub fn display_threshold(img: &BModeImage, dynamic_range: f64) -> BModeImage {
    assert!(dynamic_range > 0.0, "dynamic range must be positive");
    BModeImage {
        db: img.db.mapv(|v| v.clamp(-dynamic_range, 0.0)),
        reference_max: img.reference_max,
    }
}

fn quantize(db: f64, dynamic_range: f64) -> u8 {
    let v = (255.0 * (db + dynamic_range) / dynamic_range + 0.5).floor();
    v.clamp(0.0, 255.0) as u8
}

/// Binary PGM (P5): width = lines, height = depth samples, shallow row first.
pub fn render_pgm(img: &BModeImage, dynamic_range: f64) -> Vec<u8> {
    let (h, w) = img.db.dim();
    let mut out = Vec::with_capacity(h * w + 20);
    write!(out, "P5\n{w} {h}\n255\n").expect("write to vec");
    out.extend(img.db.iter().map(|&v| quantize(v, dynamic_range)));
    out
}

/// Reads a P5 PGM written by [`render_pgm`] back into dB values.
pub fn parse_pgm(bytes: &[u8], dynamic_range: f64) -> Result<BModeImage> {
    let corrupt = |m: &str| Error::CorruptFile(format!("pgm: {m}"));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(corrupt("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| corrupt("header"))?);
    }
    if fields[0] != "P5" {
        return Err(corrupt("bad magic"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| corrupt("bad header number"));
    let (w, h, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
    if maxval != 255 {
        return Err(corrupt("maxval must be 255"));
    }
    pos += 1;
    let pixels = bytes.get(pos..pos + w * h).ok_or_else(|| corrupt("truncated payload"))?;
    let db = Array2::from_shape_fn((h, w), |(r, c)| {
        pixels[r * w + c] as f64 / 255.0 * dynamic_range - dynamic_range
    });
    Ok(BModeImage {
        db,
        reference_max: 0.0,
    })
}
