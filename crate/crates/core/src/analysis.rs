//! Introspection of trained models: filter spectra, activation traces, embeddings.

use rayon::prelude::*;

use crate::audio::{resample_to_target, AudioSample, TARGET_RATE};
use crate::error::{Error, Result};
use crate::features::RealFft;
use crate::model::{build_input, forward, ForwardTrace, ModelConfig, ModelParams};
use crate::numerics::ConvLayerParams;

pub const DEFAULT_FFT_LEN: usize = 256;
const DB_FLOOR: f64 = 1e-12;

/// Magnitude responses of first-layer filters, one block per input channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterResponse {
    /// `db[channel][filter][bin]`
    pub db: Vec<Vec<Vec<f64>>>,
    /// Frequency of the largest-magnitude bin per channel and filter.
    pub peak_hz: Vec<Vec<f64>>,
    /// Filter indices sorted by ascending peak frequency, per channel.
    pub sort_order: Vec<Vec<usize>>,
    pub bin_hz: f64,
}

impl FilterResponse {
    pub fn bins(&self) -> usize {
        self.db.first().and_then(|c| c.first()).map_or(0, Vec::len)
    }

    /// CSV `channel,filter_index,sorted_rank,peak_hz,bin_0_db..`, rows in sorted order.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["channel".to_owned(), "filter_index".into(), "sorted_rank".into(), "peak_hz".into()];
        header.extend((0..self.bins()).map(|b| format!("bin_{b}_db")));
        w.write_record(&header)?;
        for (c, order) in self.sort_order.iter().enumerate() {
            for (rank, &f) in order.iter().enumerate() {
                let mut row = vec![c.to_string(), f.to_string(), rank.to_string(), self.peak_hz[c][f].to_string()];
                row.extend(self.db[c][f].iter().map(|v| v.to_string()));
                w.write_record(&row)?;
            }
        }
        finish_csv(w)
    }
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// `20·log10(|FFT| + ε)` of every filter's taps for each input channel, zero-padded to `fft_len`.
pub fn filter_frequency_response(params: &ConvLayerParams, fft_len: usize) -> Result<FilterResponse> {
    if fft_len < params.kernel_width {
        return Err(Error::Config(format!(
            "analysis FFT length {fft_len} is shorter than the kernel ({})",
            params.kernel_width
        )));
    }
    let fft = RealFft::new(fft_len);
    let bins = fft_len / 2 + 1;
    let bin_hz = f64::from(TARGET_RATE) / fft_len as f64;
    let mut db = Vec::with_capacity(params.in_channels);
    let mut peak_hz = Vec::with_capacity(params.in_channels);
    let mut sort_order = Vec::with_capacity(params.in_channels);
    for c in 0..params.in_channels {
        let rows: Vec<(Vec<f64>, usize)> = (0..params.out_channels)
            .into_par_iter()
            .map(|o| {
                let spec = fft.spectrum(&params.filter_channel(o, c));
                let mags: Vec<f64> = spec[..bins].iter().map(|z| z.norm()).collect();
                let peak = crate::model::argmax(&mags);
                (mags.iter().map(|m| 20.0 * (m + DB_FLOOR).log10()).collect(), peak)
            })
            .collect();
        let peaks: Vec<usize> = rows.iter().map(|r| r.1).collect();
        let mut order: Vec<usize> = (0..params.out_channels).collect();
        order.sort_by_key(|&f| peaks[f]);
        peak_hz.push(peaks.iter().map(|&p| p as f64 * bin_hz).collect());
        db.push(rows.into_iter().map(|r| r.0).collect());
        sort_order.push(order);
    }
    Ok(FilterResponse {
        db,
        peak_hz,
        sort_order,
        bin_hz,
    })
}

/// RMS deviation of each frame from the layer's time-averaged output.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerActivity {
    pub w: Vec<f64>,
    /// Centre of each frame's receptive field, in seconds.
    pub frame_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub layers: Vec<LayerActivity>,
}

/// `w_t = sqrt(mean_i (x_t,i − x̄_i)²)` for one layer output.
pub fn rms_deviation(layer: &crate::numerics::Tensor2) -> Vec<f64> {
    let n = layer.channels();
    if layer.frames() == 0 || n == 0 {
        return vec![0.0; layer.frames()];
    }
    // mean accumulated relative to the first frame, so a time-constant layer gives exactly 0
    let origin = layer.row(0);
    let mut shift = vec![0.0; n];
    for row in layer.rows() {
        for ((s, x), o) in shift.iter_mut().zip(row).zip(origin) {
            *s += x - o;
        }
    }
    let avg: Vec<f64> = origin
        .iter()
        .zip(&shift)
        .map(|(o, s)| o + s / layer.frames() as f64)
        .collect();
    layer
        .rows()
        .map(|row| {
            let ss: f64 = row.iter().zip(&avg).map(|(x, m)| (x - m).powi(2)).sum();
            (ss / n as f64).sqrt()
        })
        .collect()
}

pub fn activation_rms(trace: &ForwardTrace, config: &ModelConfig) -> ActivationTrace {
    let rate = f64::from(TARGET_RATE);
    let layers = trace
        .layer_outputs
        .iter()
        .zip(config.frame_geometry())
        .map(|(out, geo)| LayerActivity {
            w: rms_deviation(out),
            frame_times: (0..out.frames())
                .map(|t| (t * geo.hop) as f64 / rate + geo.span as f64 / (2.0 * rate))
                .collect(),
        })
        .collect();
    ActivationTrace { layers }
}

/// Forward pass for analysis: resample, build the input, trace.
pub fn trace_sample(params: &ModelParams, config: &ModelConfig, sample: &AudioSample) -> Result<ForwardTrace> {
    let sample = resample_to_target(sample, TARGET_RATE)?;
    forward(params, config, &build_input(config, &sample.waveform)?)
}

/// CSV `sample_id,layer,frame_index,time_s,w_t`.
pub fn activation_csv(rows: &[(String, ActivationTrace)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample_id", "layer", "frame_index", "time_s", "w_t"])?;
    for (id, trace) in rows {
        for (l, layer) in trace.layers.iter().enumerate() {
            for (t, (v, time)) in layer.w.iter().zip(&layer.frame_times).enumerate() {
                w.write_record([id.clone(), l.to_string(), t.to_string(), time.to_string(), v.to_string()])?;
            }
        }
    }
    finish_csv(w)
}

/// Which vector to export per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingLayer {
    /// Pooled output of conv layer `i`.
    Pooled(usize),
    /// Output of the fully connected layer.
    Fc,
}

impl EmbeddingLayer {
    pub fn name(&self) -> String {
        match self {
            EmbeddingLayer::Pooled(i) => format!("pool{i}"),
            EmbeddingLayer::Fc => "fc".into(),
        }
    }

    /// Every pooled layer followed by the fc output.
    pub fn all(config: &ModelConfig) -> Vec<Self> {
        (0..config.pooled_layer_count())
            .map(EmbeddingLayer::Pooled)
            .chain(std::iter::once(EmbeddingLayer::Fc))
            .collect()
    }
}

impl std::str::FromStr for EmbeddingLayer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "fc" {
            return Ok(EmbeddingLayer::Fc);
        }
        s.strip_prefix("pool")
            .and_then(|i| i.parse().ok())
            .map(EmbeddingLayer::Pooled)
            .ok_or_else(|| Error::Config(format!("unknown embedding layer `{s}` (use poolN or fc)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub sample_id: String,
    pub language: String,
    pub label: String,
    pub layer: String,
    pub vector: Vec<f64>,
}

/// One row per sample per selected layer, samples in input order.
pub fn export_embeddings(
    params: &ModelParams,
    config: &ModelConfig,
    samples: &[AudioSample],
    layers: &[EmbeddingLayer],
) -> Result<Vec<EmbeddingRow>> {
    let pooled = config.pooled_layer_count();
    if let Some(bad) = layers.iter().find(|l| matches!(l, EmbeddingLayer::Pooled(i) if *i >= pooled)) {
        return Err(Error::Config(format!(
            "layer {} does not exist; the model pools {pooled} layers",
            bad.name()
        )));
    }
    let traces = samples
        .par_iter()
        .map(|s| trace_sample(params, config, s))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(samples.len() * layers.len());
    for (s, trace) in samples.iter().zip(traces) {
        for layer in layers {
            let vector = match layer {
                EmbeddingLayer::Pooled(i) => trace.pooled[*i].clone(),
                EmbeddingLayer::Fc => trace.fc_out.clone(),
            };
            rows.push(EmbeddingRow {
                sample_id: s.source_id.clone(),
                language: s.language.clone(),
                label: s.label.to_string(),
                layer: layer.name(),
                vector,
            });
        }
    }
    Ok(rows)
}

/// CSV `sample_id,language,label,layer,v0..`; rows shorter than the widest are blank-padded.
pub fn embeddings_csv(rows: &[EmbeddingRow]) -> Result<String> {
    let width = rows.iter().map(|r| r.vector.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["sample_id".to_owned(), "language".into(), "label".into(), "layer".into()];
    header.extend((0..width).map(|i| format!("v{i}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.sample_id.clone(), r.language.clone(), r.label.clone(), r.layer.clone()];
        rec.extend(r.vector.iter().map(|v| v.to_string()));
        rec.resize(4 + width, String::new());
        w.write_record(&rec)?;
    }
    finish_csv(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor2;

    #[test]
    fn constant_layer_has_zero_deviation() {
        let t = Tensor2::from_rows(&vec![vec![0.3, -1.0, 2.0]; 7]).unwrap();
        assert!(rms_deviation(&t).iter().all(|&w| w == 0.0));
        let one = Tensor2::from_rows(&[vec![5.0, 1.0]]).unwrap();
        assert_eq!(rms_deviation(&one), vec![0.0]);
    }

    #[test]
    fn two_frame_hand_value() {
        let t = Tensor2::from_rows(&[vec![1.0, 1.0], vec![3.0, 3.0]]).unwrap();
        assert_eq!(rms_deviation(&t), vec![1.0, 1.0]);
    }

    #[test]
    fn dc_filter_peaks_at_zero() {
        let mut p = ConvLayerParams::zeros(2, 2, 200, 100).unwrap();
        p.weights.iter_mut().for_each(|w| *w = 1.0);
        let r = filter_frequency_response(&p, DEFAULT_FFT_LEN).unwrap();
        assert_eq!(r.bin_hz, 31.25);
        assert_eq!(r.bins(), 129);
        assert!(r.peak_hz.iter().flatten().all(|&f| f == 0.0));
    }

    #[test]
    fn embedding_layer_names_parse() {
        assert_eq!("pool3".parse::<EmbeddingLayer>().unwrap(), EmbeddingLayer::Pooled(3));
        assert_eq!("fc".parse::<EmbeddingLayer>().unwrap(), EmbeddingLayer::Fc);
        assert!("conv".parse::<EmbeddingLayer>().is_err());
    }
}
