//! TOML experiment configuration. Every table rejects unknown keys, and parse
//! errors carry the offending line and field.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sample_diffuse_scatterers, ArrayGeometry, Phantom, PulseModel, RegionSpec, Scatterer};
use crate::pipeline::PipelineParams;
use crate::switchable::{ArchConfig, Style, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseConfig {
    pub fractional_bandwidth: f64,
    pub length_cycles: f64,
}

impl Default for PulseConfig {
    fn default() -> Self {
        PulseConfig {
            fractional_bandwidth: 0.6,
            length_cycles: 6.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    /// Diffuse scatterers of frame `k` are drawn with seed `seed + k`.
    pub seed: u64,
    /// Frames generated by `make-dataset`.
    pub frames: usize,
    pub scatterers: Vec<Scatterer>,
    pub regions: Vec<RegionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr0: f64,
    pub patience: usize,
    /// Seed of the train/validation shuffle.
    pub split_seed: u64,
    /// Seed of weight init, batch order and style draws.
    pub seed: u64,
    pub width: usize,
    pub bottleneck: usize,
    pub depth_context: usize,
    pub generator_hidden: [usize; 2],
    pub calibrate_output: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let a = ArchConfig::default();
        TrainingConfig {
            epochs: t.epochs,
            batch: t.batch,
            lr0: t.lr0,
            patience: t.patience,
            split_seed: 0,
            seed: t.seed,
            width: a.width,
            bottleneck: a.bottleneck,
            depth_context: a.depth_context,
            generator_hidden: a.generator_hidden,
            calibrate_output: t.calibrate_output,
        }
    }
}

fn all_styles() -> Vec<String> {
    Style::ALL.iter().map(|s| s.key().to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: ArrayGeometry,
    #[serde(default)]
    pub pulse: PulseConfig,
    #[serde(default)]
    pub phantom: PhantomConfig,
    #[serde(default)]
    pub pipeline: PipelineParams,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default = "all_styles")]
    pub styles: Vec<String>,
}

impl ExperimentConfig {
    /// Parses and validates a config document.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, e: Error| Error::Config(format!("{name}: {e}"));
        self.geometry.validate().map_err(|e| field("geometry", e))?;
        self.pulse_model().validate().map_err(|e| field("pulse", e))?;
        self.pipeline.validate()?;
        for r in &self.phantom.regions {
            r.shape.validate().map_err(|e| field(&format!("phantom.regions[{}]", r.label), e))?;
        }
        Phantom {
            scatterers: self.phantom.scatterers.clone(),
            regions: self.phantom.regions.clone(),
        }
        .validate()
        .map_err(|e| field("phantom", e))?;
        self.style_list()?;
        let t = &self.training;
        if t.epochs == 0 || t.batch == 0 {
            return Err(Error::Config("training: epochs and batch must be >= 1".into()));
        }
        if !(t.lr0 > 0.0) {
            return Err(Error::Config("training.lr0 must be > 0".into()));
        }
        if t.width == 0 || t.bottleneck == 0 || t.depth_context == 0 || t.generator_hidden.contains(&0) {
            return Err(Error::Config("training: layer widths must be >= 1".into()));
        }
        Ok(())
    }

    pub fn style_list(&self) -> Result<Vec<Style>> {
        if self.styles.is_empty() {
            return Err(Error::Config("styles: at least one style required".into()));
        }
        self.styles
            .iter()
            .map(|s| Style::from_key(s).ok_or_else(|| Error::Config(format!("styles: unknown style `{s}`"))))
            .collect()
    }

    pub fn pulse_model(&self) -> PulseModel {
        PulseModel {
            center_freq: self.geometry.center_freq,
            fractional_bandwidth: self.pulse.fractional_bandwidth,
            length_cycles: self.pulse.length_cycles,
        }
    }

    /// Explicit scatterers plus the diffuse scatterers of frame `k`.
    pub fn phantom_for_frame(&self, k: usize) -> Phantom {
        let base = Phantom {
            scatterers: self.phantom.scatterers.clone(),
            regions: self.phantom.regions.clone(),
        };
        sample_diffuse_scatterers(&base, self.phantom.seed.wrapping_add(k as u64))
    }

    pub fn arch(&self) -> ArchConfig {
        let t = &self.training;
        ArchConfig {
            in_channels: self.geometry.aperture_size,
            width: t.width,
            bottleneck: t.bottleneck,
            depth_context: t.depth_context,
            generator_hidden: t.generator_hidden,
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.training;
        Ok(TrainConfig {
            epochs: t.epochs,
            batch: t.batch,
            lr0: t.lr0,
            patience: t.patience,
            seed: t.seed,
            styles: self.style_list()?,
            calibrate_output: t.calibrate_output,
        })
    }
}
