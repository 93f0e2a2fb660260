//! Decoding, resampling and the two-channel waveform representation.

mod resample;
mod wav;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::Label;
use crate::numerics::Tensor2;

pub use resample::resample;
pub use wav::{decode_wav, encode_wav, encode_wav_i16, quantize_i16, DecodedWav};

/// Narrow-band rate every model input is brought to.
pub const TARGET_RATE: u32 = 8000;
/// Integer full scale of 16-bit PCM.
pub const PCM16_SCALE: f64 = 32768.0;

/// A mono utterance with its metadata.
///
/// `waveform` holds floats in `[-1, 1)` until [`scale_input`] maps it to
/// model range.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSample {
    pub waveform: Vec<f64>,
    pub sample_rate: u32,
    pub language: String,
    pub label: Label,
    pub source_id: String,
}

impl AudioSample {
    pub fn new(waveform: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            waveform,
            sample_rate,
            language: String::new(),
            label: Label::None,
            source_id: String::new(),
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.waveform.len() as f64 / f64::from(self.sample_rate)
    }

    fn with_waveform(&self, waveform: Vec<f64>) -> Self {
        Self {
            waveform,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub target_rate: u32,
    /// Multiplier against the 16-bit integer amplitude scale.
    pub input_scale_k: f64,
    pub volume_rand_a: f64,
    pub augment: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            target_rate: TARGET_RATE,
            input_scale_k: 5e-4,
            volume_rand_a: 1.5,
            augment: false,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_rate == 0 {
            return Err(Error::Config("target_rate must be positive".into()));
        }
        if !(self.volume_rand_a >= 0.0 && self.volume_rand_a.is_finite()) {
            return Err(Error::Config("volume_rand_a must be finite and >= 0".into()));
        }
        if !self.input_scale_k.is_finite() {
            return Err(Error::Config("input_scale_k must be finite".into()));
        }
        Ok(())
    }
}

/// Decodes WAV bytes into an [`AudioSample`] at the file's native rate.
pub fn decode_sample(bytes: &[u8]) -> Result<AudioSample> {
    let wav = decode_wav(bytes)?;
    if wav.samples.is_empty() {
        return Err(Error::Wav("no samples in data chunk".into()));
    }
    Ok(AudioSample::new(wav.samples, wav.sample_rate))
}

pub fn resample_to_target(sample: &AudioSample, target_rate: u32) -> Result<AudioSample> {
    if sample.sample_rate == target_rate {
        return Ok(sample.clone());
    }
    let waveform = resample(&sample.waveform, sample.sample_rate, target_rate)?;
    Ok(AudioSample {
        sample_rate: target_rate,
        ..sample.with_waveform(waveform)
    })
}

/// Multiplies every amplitude by `k` taken against the 16-bit integer scale.
pub fn scale_input(sample: &AudioSample, k: f64) -> AudioSample {
    sample.with_waveform(scale_waveform(&sample.waveform, k))
}

pub(crate) fn scale_waveform(waveform: &[f64], k: f64) -> Vec<f64> {
    let gain = k * PCM16_SCALE;
    waveform.iter().map(|x| x * gain).collect()
}

/// Draws `α = 10^U(-a, a)`.
pub fn draw_volume_factor<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a == 0.0 {
        return 1.0;
    }
    10f64.powf(rng.gen_range(-a..=a))
}

/// Training-time amplitude randomization; returns the sample and the drawn `α`.
pub fn randomize_volume<R: Rng + ?Sized>(
    sample: &AudioSample,
    a: f64,
    rng: &mut R,
) -> (AudioSample, f64) {
    let alpha = draw_volume_factor(a, rng);
    let scaled = sample.with_waveform(sample.waveform.iter().map(|x| x * alpha).collect());
    (scaled, alpha)
}

/// Raw waveform in channel 0 and its square in channel 1.
pub fn to_model_channels(waveform: &[f64]) -> Tensor2 {
    let data = waveform.iter().flat_map(|&x| [x, x * x]).collect();
    Tensor2::from_vec(waveform.len(), 2, data).expect("two values per sample")
}
