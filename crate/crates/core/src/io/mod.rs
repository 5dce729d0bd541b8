//! File formats and configuration: URFC channel-data cubes, TOML experiment
//! configs and metric mask specs.

pub mod config;
pub mod cube;
pub mod mask;

pub use config::{ExperimentConfig, PhantomConfig, PulseConfig, TrainingConfig};
pub use cube::{read_cube, write_cube, CubeHeader};
pub use mask::MaskSpec;
