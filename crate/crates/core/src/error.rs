use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("phantom has no scatterers")]
    EmptyPhantom,
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("fft length {0} is not a power of two")]
    LengthNotPowerOfTwo(usize),
    #[error("psf support {support:?} too large for image {image:?}")]
    SupportTooLarge {
        support: (usize, usize),
        image: (usize, usize),
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate channel {channel}: std {std:e}")]
    DegenerateChannel { channel: usize, std: f64 },
    #[error("covariance is singular or not positive definite")]
    SingularCovariance,
    #[error("non-finite loss at epoch {epoch}, step {step}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        detail: String,
    },
    #[error("region is empty")]
    EmptyRegion,
    #[error("both regions have zero variance")]
    ZeroVariance,
    #[error("region mean is zero")]
    ZeroMean,
    #[error("row has no unique peak")]
    NoPeak,
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
