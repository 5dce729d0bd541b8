//! Classical image pipelines producing the four output styles from an
//! aperture cube: DAS, deconvolution, despeckle and deconvolution followed by
//! despeckle. All images are display-thresholded.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::beamform::{beamform_cube, das, ApertureCube};
use crate::deconv::{crop_centered, deconv_target, estimate_psf, DeconvParams, Psf};
use crate::despeckle::{despeckle_target, DespeckleParams};
use crate::envelope::{display_threshold, envelope_image, log_compress, BModeImage};
use crate::error::{Error, Result};
use crate::geometry::{simulate_rf, ArrayGeometry, Phantom, PulseModel};
use crate::switchable::Style;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsfSource {
    #[default]
    Simulated,
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineParams {
    pub psf_source: PsfSource,
    /// Axial x lateral PSF window, both odd.
    pub psf_support: [usize; 2],
    pub deconv: DeconvParams,
    pub despeckle: DespeckleParams,
    pub dynamic_range: f64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            psf_source: PsfSource::Simulated,
            psf_support: [7, 3],
            deconv: DeconvParams::default(),
            despeckle: DespeckleParams::default(),
            dynamic_range: 60.0,
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        let [a, l] = self.psf_support;
        if a % 2 == 0 || l % 2 == 0 {
            return Err(Error::Config(format!("psf_support {a}x{l} must be odd")));
        }
        if !(self.dynamic_range > 0.0) {
            return Err(Error::Config("dynamic_range must be > 0".into()));
        }
        if !(self.deconv.lambda >= 0.0) || self.deconv.max_iters == 0 {
            return Err(Error::Config("deconv needs lambda >= 0 and max_iters >= 1".into()));
        }
        self.despeckle.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

/// DAS envelope (linear scale, `[N][L]`) of an aperture cube.
pub fn das_envelope(cube: &ApertureCube) -> Array2<f64> {
    envelope_image(das(cube).view())
}

/// System PSF: envelope of a simulated point scatterer at the focal depth,
/// placed on a scan line, cropped around its peak and scaled to unit maximum.
pub fn simulated_psf(geom: &ArrayGeometry, pulse: &PulseModel, support: [usize; 2]) -> Result<Psf> {
    let mut g = geom.clone();
    // keep the window clear of the cube edges
    let needed = (geom.focal_depth * 2.0 * geom.sampling_freq / geom.sound_speed).ceil() as usize + support[0];
    g.depth_samples = g.depth_samples.max(needed);
    let x = g.line_x(g.scan_lines / 2);
    let cube = simulate_rf(&g, &Phantom::point(x, geom.focal_depth), pulse)?;
    let env = das_envelope(&beamform_cube(&cube));
    let (mut pr, mut pc, mut best) = (0, 0, f64::NEG_INFINITY);
    for ((r, c), &v) in env.indexed_iter() {
        if v > best {
            (pr, pc, best) = (r, c, v);
        }
    }
    if !(best > 0.0) {
        return Err(Error::NoPeak);
    }
    let kernel = crop_centered(env.view(), pr, pc, (support[0], support[1])).mapv(|v| v / best);
    Psf::new(kernel)
}

/// PSF according to `params.psf_source`; `das_env` is only read for estimation.
pub fn resolve_psf(params: &PipelineParams, geom: &ArrayGeometry, pulse: &PulseModel, das_env: &Array2<f64>) -> Result<Psf> {
    match params.psf_source {
        PsfSource::Simulated => simulated_psf(geom, pulse, params.psf_support),
        PsfSource::Estimated => estimate_psf(das_env.view(), (params.psf_support[0], params.psf_support[1])),
    }
}

/// One style's classical image from a precomputed DAS envelope.
pub fn style_image(env: &Array2<f64>, style: Style, psf: &Psf, params: &PipelineParams) -> Result<BModeImage> {
    let dr = params.dynamic_range;
    let das_db = || display_threshold(&log_compress(env.view()), dr);
    let deconv_db = || -> Result<BModeImage> { Ok(display_threshold(&deconv_target(env.view(), psf, &params.deconv)?, dr)) };
    let img = match style {
        Style::Das => das_db(),
        Style::Deconvolution => deconv_db()?,
        Style::Despeckle => despeckle_target(&das_db(), &params.despeckle)?,
        Style::DeconvDespeckle => despeckle_target(&deconv_db()?, &params.despeckle)?,
    };
    Ok(display_threshold(&img, dr))
}

/// All four styles, in [`Style::ALL`] order; the deconvolution is solved once.
pub fn style_images(env: &Array2<f64>, psf: &Psf, params: &PipelineParams) -> Result<[BModeImage; 4]> {
    let dr = params.dynamic_range;
    let das_db = display_threshold(&log_compress(env.view()), dr);
    let deconv_db = display_threshold(&deconv_target(env.view(), psf, &params.deconv)?, dr);
    let despeckled = display_threshold(&despeckle_target(&das_db, &params.despeckle)?, dr);
    let deconv_despeckled = display_threshold(&despeckle_target(&deconv_db, &params.despeckle)?, dr);
    Ok([das_db, despeckled, deconv_db, deconv_despeckled])
}
