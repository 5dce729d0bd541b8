//! Linear-array geometry, point-scatterer phantoms, the transmit pulse and
//! the single-line-acquisition forward model that produces RF channel data.

use std::f64::consts::PI;

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::rng;

/// Near-field floor for the spherical spreading term, in meters.
pub const R_MIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayGeometry {
    pub element_count: usize,
    /// Element spacing in meters.
    pub pitch: f64,
    pub sound_speed: f64,
    pub sampling_freq: f64,
    pub center_freq: f64,
    /// Active receive elements per scan line.
    pub aperture_size: usize,
    pub scan_lines: usize,
    pub depth_samples: usize,
    pub focal_depth: f64,
}

impl ArrayGeometry {
    /// Small geometry used by the fixtures and the acceptance suite.
    pub fn desk() -> Self {
        ArrayGeometry {
            element_count: 47,
            pitch: 0.3e-3,
            sound_speed: 1540.0,
            sampling_freq: 10e6,
            center_freq: 2.5e6,
            aperture_size: 16,
            scan_lines: 32,
            depth_samples: 96,
            focal_depth: 5e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidGeometry(m.to_string()));
        if self.aperture_size == 0 || self.aperture_size > self.element_count {
            return bad("aperture_size must be in 1..=element_count");
        }
        if self.scan_lines == 0 {
            return bad("scan_lines must be >= 1");
        }
        if self.depth_samples == 0 {
            return bad("depth_samples must be >= 1");
        }
        if !(self.pitch > 0.0) {
            return bad("pitch must be > 0");
        }
        if !(self.sound_speed > 0.0) {
            return bad("sound_speed must be > 0");
        }
        if !(self.center_freq > 0.0) {
            return bad("center_freq must be > 0");
        }
        if !(self.sampling_freq > 2.0 * self.center_freq) {
            return bad("sampling_freq must exceed 2 * center_freq");
        }
        if !(self.focal_depth > 0.0) {
            return bad("focal_depth must be > 0");
        }
        Ok(())
    }

    /// Lateral position of element `e`; the array is centered on x = 0.
    pub fn element_x(&self, e: usize) -> f64 {
        (e as f64 - (self.element_count as f64 - 1.0) / 2.0) * self.pitch
    }

    /// First active element of scan line `l` (the detector offset d_l).
    pub fn aperture_offset(&self, l: usize) -> usize {
        let span = self.element_count - self.aperture_size;
        if self.scan_lines <= 1 {
            return 0;
        }
        let d = (l as f64 * span as f64 / (self.scan_lines as f64 - 1.0)).round();
        (d.max(0.0) as usize).min(span)
    }

    /// Lateral position of scan line `l`: the center of its active aperture
    /// before offset rounding.
    pub fn line_x(&self, l: usize) -> f64 {
        let span = (self.element_count - self.aperture_size) as f64;
        let shift = if self.scan_lines <= 1 {
            0.0
        } else {
            l as f64 * span / (self.scan_lines as f64 - 1.0)
        };
        let center = shift + (self.aperture_size as f64 - 1.0) / 2.0;
        (center - (self.element_count as f64 - 1.0) / 2.0) * self.pitch
    }

    /// Distance between neighbouring scan lines.
    pub fn line_pitch(&self) -> f64 {
        if self.scan_lines <= 1 {
            return self.pitch;
        }
        (self.element_count - self.aperture_size) as f64 * self.pitch
            / (self.scan_lines as f64 - 1.0)
    }

    /// Depth of sample `n` under the two-way travel convention.
    pub fn depth(&self, n: usize) -> f64 {
        n as f64 * self.sound_speed / (2.0 * self.sampling_freq)
    }

    /// Standard deviation of the lateral Gaussian transmit weight whose
    /// -6 dB full width is one scan-line pitch.
    pub fn transmit_sigma(&self) -> f64 {
        let pitch = if self.line_pitch() > 0.0 {
            self.line_pitch()
        } else {
            self.pitch
        };
        (pitch / 2.0) / (2.0 * 2f64.ln()).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseModel {
    pub center_freq: f64,
    pub fractional_bandwidth: f64,
    pub length_cycles: f64,
}

impl PulseModel {
    pub fn new(center_freq: f64, fractional_bandwidth: f64) -> Self {
        PulseModel {
            center_freq,
            fractional_bandwidth,
            length_cycles: 6.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.center_freq > 0.0)
            || !(self.fractional_bandwidth > 0.0 && self.fractional_bandwidth < 2.0)
            || !(self.length_cycles > 0.0)
        {
            return Err(Error::InvalidInput(format!("invalid pulse model {self:?}")));
        }
        Ok(())
    }

    /// Gaussian envelope width chosen so the -6 dB spectral width equals
    /// `fractional_bandwidth * center_freq`.
    pub fn tau(&self) -> f64 {
        (2.0 * 2f64.ln()).sqrt() / (PI * self.fractional_bandwidth * self.center_freq)
    }

    /// Half-width of the pulse support in seconds.
    pub fn half_support(&self) -> f64 {
        self.length_cycles / (2.0 * self.center_freq)
    }

    /// Closed-form energy of the untruncated pulse.
    pub fn energy(&self) -> f64 {
        let tau = self.tau();
        let w = 2.0 * PI * self.center_freq;
        tau * PI.sqrt() / 2.0 * (1.0 + (-(w * tau).powi(2)).exp())
    }
}

pub fn gaussian_pulse(model: &PulseModel, t: f64) -> f64 {
    if t.abs() > model.half_support() {
        return 0.0;
    }
    let tau = model.tau();
    (2.0 * PI * model.center_freq * t).cos() * (-t * t / (2.0 * tau * tau)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scatterer {
    pub lateral: f64,
    pub axial: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Shape {
    Rect {
        x_min: f64,
        x_max: f64,
        z_min: f64,
        z_max: f64,
    },
    Disk {
        cx: f64,
        cz: f64,
        radius: f64,
    },
}

impl Shape {
    pub fn contains(&self, x: f64, z: f64) -> bool {
        match *self {
            Shape::Rect {
                x_min,
                x_max,
                z_min,
                z_max,
            } => x >= x_min && x <= x_max && z >= z_min && z <= z_max,
            Shape::Disk { cx, cz, radius } => (x - cx).powi(2) + (z - cz).powi(2) <= radius * radius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Shape::Rect {
                x_min,
                x_max,
                z_min,
                z_max,
            } => [x_min, x_max, z_min, z_max].iter().all(|v| v.is_finite()) && x_min < x_max && z_min < z_max,
            Shape::Disk { cx, cz, radius } => cx.is_finite() && cz.is_finite() && radius.is_finite() && radius > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("degenerate shape {self:?}")))
        }
    }

    /// Area in square meters.
    pub fn area(&self) -> f64 {
        match *self {
            Shape::Rect {
                x_min,
                x_max,
                z_min,
                z_max,
            } => (x_max - x_min).max(0.0) * (z_max - z_min).max(0.0),
            Shape::Disk { radius, .. } => PI * radius * radius,
        }
    }

    fn sample(&self, rng: &mut rng::Rng64) -> (f64, f64) {
        match *self {
            Shape::Rect {
                x_min,
                x_max,
                z_min,
                z_max,
            } => (
                x_min + (x_max - x_min) * rng.gen::<f64>(),
                z_min + (z_max - z_min) * rng.gen::<f64>(),
            ),
            Shape::Disk { cx, cz, radius } => {
                let r = radius * rng.gen::<f64>().sqrt();
                let theta = 2.0 * PI * rng.gen::<f64>();
                (cx + r * theta.cos(), cz + r * theta.sin())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub label: String,
    pub shape: Shape,
    /// Amplitude multiplier applied to this region's diffuse scatterers.
    pub echogenicity: f64,
    /// Diffuse scatterers per square millimeter.
    pub density: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phantom {
    #[serde(default)]
    pub scatterers: Vec<Scatterer>,
    #[serde(default)]
    pub regions: Vec<RegionSpec>,
}

impl Phantom {
    pub fn validate(&self) -> Result<()> {
        for s in &self.scatterers {
            if !(s.axial >= 0.0) || !s.amplitude.is_finite() || !s.lateral.is_finite() {
                return Err(Error::InvalidInput(format!("invalid scatterer {s:?}")));
            }
        }
        for r in &self.regions {
            if !(r.density >= 0.0) || !r.echogenicity.is_finite() {
                return Err(Error::InvalidInput(format!("invalid region {}", r.label)));
            }
        }
        Ok(())
    }

    pub fn point(lateral: f64, axial: f64) -> Self {
        Phantom {
            scatterers: vec![Scatterer {
                lateral,
                axial,
                amplitude: 1.0,
            }],
            regions: Vec::new(),
        }
    }

    /// Union of two phantoms' scatterers and regions.
    pub fn merged(&self, other: &Phantom) -> Phantom {
        let mut out = self.clone();
        out.scatterers.extend_from_slice(&other.scatterers);
        out.regions.extend(other.regions.iter().cloned());
        out
    }
}

/// Adds `round(density * area)` uniformly placed scatterers per region with
/// standard-normal amplitudes scaled by the region's echogenicity.
///
/// Regions are painted in order: a scatterer drawn for region `i` is dropped
/// when a later region contains it, so later regions override earlier ones.
/// The region list is kept so masks can still be derived from it.
pub fn sample_diffuse_scatterers(phantom: &Phantom, seed: u64) -> Phantom {
    let mut rng = rng::seeded(seed);
    let mut out = phantom.clone();
    for (i, region) in phantom.regions.iter().enumerate() {
        let count = (region.density * region.shape.area() * 1e6).round() as usize;
        for _ in 0..count {
            let (x, z) = region.shape.sample(&mut rng);
            let amp: f64 = rng.sample(StandardNormal);
            let covered = phantom.regions[i + 1..]
                .iter()
                .any(|r| r.shape.contains(x, z));
            if !covered && z >= 0.0 {
                out.scatterers.push(Scatterer {
                    lateral: x,
                    axial: z,
                    amplitude: amp * region.echogenicity,
                });
            }
        }
    }
    out
}

/// RF channel data X, indexed `[scan line][depth sample][element]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RfCube {
    pub data: Array3<f64>,
    pub geom: ArrayGeometry,
}

impl RfCube {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.data.dim()
    }
}

/// Synthesizes focused single-line-acquisition channel data.
///
/// Each scatterer contributes a pulse delayed by the transmit depth plus the
/// receive path to the element, weighted by the lateral Gaussian transmit
/// beam and spherical spreading `1 / max(r, R_MIN)`. Elements outside the
/// active aperture of a line are left at zero.
pub fn simulate_rf(geom: &ArrayGeometry, phantom: &Phantom, pulse: &PulseModel) -> Result<RfCube> {
    geom.validate()?;
    phantom.validate()?;
    pulse.validate()?;
    if phantom.scatterers.is_empty() {
        return Err(Error::EmptyPhantom);
    }
    let (lines, depth, elements) = (geom.scan_lines, geom.depth_samples, geom.element_count);
    let fs = geom.sampling_freq;
    let c = geom.sound_speed;
    let support = pulse.half_support();
    let sigma_tx = geom.transmit_sigma();

    let slabs: Vec<Array2<f64>> = par::map_range(lines, |l| {
        let mut slab = Array2::<f64>::zeros((depth, elements));
        let xl = geom.line_x(l);
        let d = geom.aperture_offset(l);
        for s in &phantom.scatterers {
            let dx = s.lateral - xl;
            let tx = (-dx * dx / (2.0 * sigma_tx * sigma_tx)).exp();
            if tx < 1e-8 {
                continue;
            }
            for e in d..d + geom.aperture_size {
                let ex = s.lateral - geom.element_x(e);
                let rx = (ex * ex + s.axial * s.axial).sqrt();
                let delay = (s.axial + rx) / c;
                let gain = s.amplitude * tx / rx.max(R_MIN);
                let first = ((delay - support) * fs).ceil().max(0.0) as usize;
                let last = ((delay + support) * fs).floor();
                if last < 0.0 {
                    continue;
                }
                let last = (last as usize).min(depth - 1);
                for n in first..=last {
                    slab[[n, e]] += gain * gaussian_pulse(pulse, n as f64 / fs - delay);
                }
            }
        }
        slab
    });

    let mut data = Array3::<f64>::zeros((lines, depth, elements));
    for (l, slab) in slabs.into_iter().enumerate() {
        data.index_axis_mut(ndarray::Axis(0), l).assign(&slab);
    }
    Ok(RfCube {
        data,
        geom: geom.clone(),
    })
}
