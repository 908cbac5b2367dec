//! Encoder–decoder transformer: configuration, parameters, forward pass,
//! greedy decoding and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod forward;
pub mod params;
pub mod pe;

pub use checkpoint::{load_model, read_archive, save_model, write_archive, Archive};
pub use config::{ModelConfig, FF_MULT, LAYER_NORM_EPS, MASK_VALUE};
pub use decode::{argmax, greedy_decode};
pub use forward::{bind, forward, Model};
pub use params::{count_params, param_specs, Layout, ModelParams, ParamSpec};
pub use pe::sinusoidal_pe;
