//! Raw-waveform CNN and its spectrogram baseline.

mod config;
mod network;
mod params;

pub use config::{ConvSpec, FirstLayerSpec, FrameGeometry, FrontEnd, ModelConfig, Task};
pub(crate) use network::argmax;
pub use network::{backward, build_input, forward, predict, ForwardTrace, Prediction};
pub use params::{ModelParams, NamedTensor, ParamGroup};

/// Convenience re-export for spectrogram variants.
pub fn spectrogram_variant(config: &ModelConfig) -> ModelConfig {
    config.spectrogram_variant()
}
