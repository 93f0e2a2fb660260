//! Short-time power spectra for the spectrogram front-end.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tapered-cosine window; `taper_ratio` 0 is rectangular, 1 is Hann.
pub fn tukey_window(length: usize, taper_ratio: f64) -> Vec<f64> {
    if length <= 1 {
        return vec![1.0; length];
    }
    let alpha = taper_ratio.clamp(0.0, 1.0);
    if alpha == 0.0 {
        return vec![1.0; length];
    }
    let last = (length - 1) as f64;
    (0..length)
        .map(|n| {
            let x = n as f64 / last;
            let edge = x.min(1.0 - x);
            if edge < alpha / 2.0 {
                0.5 * (1.0 - (2.0 * PI * edge / alpha).cos())
            } else {
                1.0
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramConfig {
    pub window_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub taper_ratio: f64,
}

impl Default for SpectrogramConfig {
    fn default() -> Self {
        Self {
            window_len: 200,
            hop: 100,
            fft_size: 256,
            taper_ratio: 0.5,
        }
    }
}

impl SpectrogramConfig {
    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn frames(&self, samples: usize) -> Option<usize> {
        (samples >= self.window_len).then(|| (samples - self.window_len) / self.hop + 1)
    }

    fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.hop == 0 || self.fft_size < self.window_len {
            return Err(Error::Config(format!(
                "spectrogram needs window_len > 0, hop > 0 and fft_size >= window_len ({self:?})"
            )));
        }
        Ok(())
    }
}

/// Per-frame one-sided power spectra.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    /// Row-major `frames × bins`.
    pub power: Vec<f64>,
    pub frame_hop: usize,
    pub window_len: usize,
}

impl Spectrogram {
    pub fn frame(&self, i: usize) -> &[f64] {
        &self.power[i * self.bins..(i + 1) * self.bins]
    }
}

/// Reusable forward FFT of a fixed size.
pub(crate) struct RealFft {
    fft: Arc<dyn Fft<f64>>,
    size: usize,
}

impl RealFft {
    pub(crate) fn new(size: usize) -> Self {
        Self {
            fft: FftPlanner::new().plan_fft_forward(size),
            size,
        }
    }

    /// Full two-sided spectrum of `segment` zero-padded to the FFT size.
    pub(crate) fn spectrum(&self, segment: &[f64]) -> Vec<Complex<f64>> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.size];
        for (b, &x) in buf.iter_mut().zip(segment) {
            b.re = x;
        }
        self.fft.process(&mut buf);
        buf
    }
}

/// Power `|X_k|² / N` over all `N` bins; sums to the segment energy.
pub fn two_sided_power(segment: &[f64], fft_size: usize) -> Vec<f64> {
    let n = fft_size as f64;
    RealFft::new(fft_size)
        .spectrum(segment)
        .iter()
        .map(|c| c.norm_sqr() / n)
        .collect()
}

/// Windowed, zero-padded power spectra of each `window_len` frame hopping by `hop`.
pub fn spectrogram(waveform: &[f64], config: &SpectrogramConfig) -> Result<Spectrogram> {
    config.validate()?;
    let frames = config.frames(waveform.len()).ok_or(Error::InputTooShort {
        required: config.window_len,
        actual: waveform.len(),
    })?;
    let window = tukey_window(config.window_len, config.taper_ratio);
    let fft = RealFft::new(config.fft_size);
    let bins = config.bins();
    let norm = config.fft_size as f64;
    let mut power = Vec::with_capacity(frames * bins);
    let mut segment = vec![0.0; config.window_len];
    for f in 0..frames {
        let start = f * config.hop;
        for ((s, &x), &w) in segment
            .iter_mut()
            .zip(&waveform[start..start + config.window_len])
            .zip(&window)
        {
            *s = x * w;
        }
        let spec = fft.spectrum(&segment);
        power.extend(spec[..bins].iter().map(|c| c.norm_sqr() / norm));
    }
    Ok(Spectrogram {
        frames,
        bins,
        power,
        frame_hop: config.hop,
        window_len: config.window_len,
    })
}
