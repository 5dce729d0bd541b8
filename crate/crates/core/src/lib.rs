//! Switchable ultrasound beamforming.
//!
//! Synthetic RF channel data flows through delay correction, aperture
//! extraction and delay-and-sum; classical post-processing produces
//! deconvolution and despeckle targets; a single convolutional beamformer
//! with an AdaIN bottleneck reproduces any of the four output styles
//! depending on the style code fed to its code generator.

pub mod beamform;
pub mod deconv;
pub mod despeckle;
pub mod envelope;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod neural;
pub mod par;
pub mod perf;
pub mod pipeline;
pub mod rng;
pub mod svd;
pub mod switchable;

pub use error::{Error, Result};
