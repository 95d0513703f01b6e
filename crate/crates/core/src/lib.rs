//! Near-field Wi-Fi activity recognition: CSI synthesis, preprocessing,
//! a small autodiff engine, the recognition network, anchor-based
//! fine-tuning and evaluation.

pub mod channel_sim;
pub mod config;
pub mod dataset_io;
pub mod infer_eval;
pub mod model;
pub mod numerics;
pub mod preprocess;
pub mod rng;
pub mod train;

pub use channel_sim::{ActivityClass, CsiSample, RadioConfig, Scene, N_CLASSES};
pub use model::{HarModel, ModelDims, Module};
pub use numerics::{Tape, Tensor, Var};
pub use preprocess::{EmbedParams, ModelInput};
