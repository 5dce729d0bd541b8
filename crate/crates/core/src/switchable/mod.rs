//! Style-switchable beamformer: model, dataset construction, training,
//! inference and weight files.

pub mod dataset;
pub mod model;
pub mod train;
pub mod weights;

pub use dataset::{build_dataset, Dataset, Sample};
pub use model::{AdaInCode, ArchConfig, BlockKind, CodeGenerator, ConvBlock, ForwardOutput, Style, SwitchableModel};
pub use train::{infer_frame, train, FrameTiming, TrainConfig, TrainHistory};
pub use weights::{load_weights, read_weights, save_weights, write_weights};
