//! Metric region masks in pixel coordinates (row = depth sample, col = scan
//! line), read from a small TOML file.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::RegionMask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum PixelShape {
    /// Half-open row and column ranges.
    Rect {
        row_min: usize,
        row_max: usize,
        col_min: usize,
        col_max: usize,
    },
    Ellipse {
        row: f64,
        col: f64,
        radius_rows: f64,
        radius_cols: f64,
    },
}

impl PixelShape {
    pub fn contains(&self, r: usize, c: usize) -> bool {
        match *self {
            PixelShape::Rect {
                row_min,
                row_max,
                col_min,
                col_max,
            } => (row_min..row_max).contains(&r) && (col_min..col_max).contains(&c),
            PixelShape::Ellipse {
                row,
                col,
                radius_rows,
                radius_cols,
            } => {
                let dr = (r as f64 - row) / radius_rows;
                let dc = (c as f64 - col) / radius_cols;
                dr * dr + dc * dc <= 1.0
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PixelRegion {
    pub include: Vec<PixelShape>,
    #[serde(default)]
    pub exclude: Vec<PixelShape>,
}

impl PixelRegion {
    pub fn rasterize(&self, rows: usize, cols: usize) -> Array2<bool> {
        Array2::from_shape_fn((rows, cols), |(r, c)| {
            self.include.iter().any(|s| s.contains(r, c)) && !self.exclude.iter().any(|s| s.contains(r, c))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSpec {
    /// Span used to map 8-bit PGM levels back to dB.
    #[serde(default = "default_range")]
    pub dynamic_range: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    pub target: PixelRegion,
    pub background: PixelRegion,
}

fn default_range() -> f64 {
    60.0
}

fn default_bins() -> usize {
    256
}

impl MaskSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: MaskSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if !(spec.dynamic_range > 0.0) || spec.bins == 0 {
            return Err(Error::Config("dynamic_range and bins must be positive".into()));
        }
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Rasterized mask for an image of the given size. Overlapping regions are
    /// a configuration error; empty ones are reported as [`Error::EmptyRegion`].
    pub fn resolve(&self, rows: usize, cols: usize) -> Result<RegionMask> {
        let t = self.target.rasterize(rows, cols);
        let b = self.background.rasterize(rows, cols);
        if t.iter().zip(b.iter()).any(|(&x, &y)| x && y) {
            return Err(Error::Config("target and background masks overlap".into()));
        }
        RegionMask::new(t, b)
    }
}
