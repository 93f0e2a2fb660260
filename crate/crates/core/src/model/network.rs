use super::config::{FrontEnd, ModelConfig, Task};
use super::params::{ModelParams, ParamGroup};
use crate::audio::{resample_to_target, scale_waveform, to_model_channels, AudioSample, TARGET_RATE};
use crate::error::{Error, Result};
use crate::features::spectrogram;
use crate::numerics::{
    conv1d_backward, conv1d_backward_params, conv1d_forward, elu_grad_from_output, elu_in_place,
    fusion_backward, global_average_pool, global_average_pool_backward, sigmoid, softmax,
    weighted_average_fusion, FusionParams, Tensor2,
};

/// Every intermediate value of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Post-activation output of each conv layer.
    pub layer_outputs: Vec<Tensor2>,
    pub pooled: Vec<Vec<f64>>,
    pub fused: Vec<f64>,
    pub fc_out: Vec<f64>,
    pub logits: Vec<f64>,
    /// Class probabilities (emotion) or trait scores (personality).
    pub output: Vec<f64>,
}

/// Model output for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Emotion(Vec<f64>),
    Personality(Vec<f64>),
}

impl Prediction {
    pub fn values(&self) -> &[f64] {
        match self {
            Prediction::Emotion(v) | Prediction::Personality(v) => v,
        }
    }

    pub fn argmax(&self) -> usize {
        argmax(self.values())
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Turns an 8 kHz waveform in `[-1, 1)` into the front-end tensor.
///
/// Raw: scaled by `k·32768`, then raw and squared channels.
/// Spectrogram: power spectra of the unscaled waveform.
pub fn build_input(config: &ModelConfig, waveform: &[f64]) -> Result<Tensor2> {
    let min = config.min_input_samples();
    if waveform.len() < min {
        return Err(Error::InputTooShort {
            required: min,
            actual: waveform.len(),
        });
    }
    match config.front_end {
        FrontEnd::Raw => Ok(to_model_channels(&scale_waveform(waveform, config.input_scale_k))),
        FrontEnd::Spectrogram => {
            let spec = spectrogram(waveform, &config.spectrogram)?;
            Tensor2::from_vec(spec.frames, spec.bins, spec.power)
        }
    }
}

fn covered_samples(config: &ModelConfig, frames: usize) -> usize {
    match config.front_end {
        FrontEnd::Raw => frames,
        FrontEnd::Spectrogram if frames == 0 => 0,
        FrontEnd::Spectrogram => (frames - 1) * config.spectrogram.hop + config.spectrogram.window_len,
    }
}

/// Full forward pass keeping every intermediate output.
pub fn forward(params: &ModelParams, config: &ModelConfig, input: &Tensor2) -> Result<ForwardTrace> {
    if input.channels() != config.input_channels() {
        return Err(Error::ShapeMismatch(format!(
            "{} front-end expects {} input channels, got {}",
            config.front_end,
            config.input_channels(),
            input.channels()
        )));
    }
    if input.frames() < config.min_input_frames() {
        return Err(Error::InputTooShort {
            required: config.min_input_samples(),
            actual: covered_samples(config, input.frames()),
        });
    }
    if params.conv_stack.len() != config.pooled_layer_count() {
        return Err(Error::ShapeMismatch("parameters do not match configuration".into()));
    }

    let mut layer_outputs: Vec<Tensor2> = Vec::with_capacity(params.conv_stack.len());
    for conv in &params.conv_stack {
        let src = layer_outputs.last().unwrap_or(input);
        let mut out = conv1d_forward(src, conv)?;
        elu_in_place(out.data_mut());
        layer_outputs.push(out);
    }
    let pooled = layer_outputs
        .iter()
        .map(global_average_pool)
        .collect::<Result<Vec<_>>>()?;
    let (_, fused) = weighted_average_fusion(&pooled, &params.fusion)?;
    let mut fc_out = params.fc.forward(&fused)?;
    elu_in_place(&mut fc_out);
    let logits = params.head.forward(&fc_out)?;
    let output = match config.task {
        Task::Emotion { .. } => softmax(&logits)?,
        Task::Personality { .. } => sigmoid(&logits),
    };
    if !output.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("model output".into()));
    }
    Ok(ForwardTrace {
        layer_outputs,
        pooled,
        fused,
        fc_out,
        logits,
        output,
    })
}

/// Parameter gradients given `d loss / d logits`.
///
/// With [`ParamGroup::PostPooling`] the returned `conv_stack` is empty.
pub fn backward(
    params: &ModelParams,
    input: &Tensor2,
    trace: &ForwardTrace,
    grad_logits: &[f64],
    group: ParamGroup,
) -> Result<ModelParams> {
    let (grad_fc_out, head) = params.head.backward(&trace.fc_out, grad_logits)?;
    let grad_fc_pre: Vec<f64> = grad_fc_out
        .iter()
        .zip(&trace.fc_out)
        .map(|(g, &y)| g * elu_grad_from_output(y))
        .collect();
    let (grad_fused, fc) = params.fc.backward(&trace.fused, &grad_fc_pre)?;
    let grad_fused_pre: Vec<f64> = grad_fused
        .iter()
        .zip(&trace.fused)
        .map(|(g, &y)| g * elu_grad_from_output(y))
        .collect();
    let (grad_pooled, fusion): (Vec<Vec<f64>>, FusionParams) =
        fusion_backward(&trace.pooled, &params.fusion, &grad_fused_pre)?;

    let mut conv_stack = Vec::new();
    if group == ParamGroup::All {
        let n = params.conv_stack.len();
        conv_stack.reserve(n);
        let mut from_above: Option<Tensor2> = None;
        for l in (0..n).rev() {
            let out = &trace.layer_outputs[l];
            let mut grad = global_average_pool_backward(&grad_pooled[l], out.frames());
            if let Some(above) = from_above.take() {
                crate::numerics::axpy(grad.data_mut(), 1.0, above.data());
            }
            for (g, &y) in grad.data_mut().iter_mut().zip(out.data()) {
                *g *= elu_grad_from_output(y);
            }
            let src = if l == 0 { input } else { &trace.layer_outputs[l - 1] };
            if l == 0 {
                conv_stack.push(conv1d_backward_params(src, &params.conv_stack[l], &grad)?);
            } else {
                let (gi, gp) = conv1d_backward(src, &params.conv_stack[l], &grad)?;
                conv_stack.push(gp);
                from_above = Some(gi);
            }
        }
        conv_stack.reverse();
    }
    Ok(ModelParams {
        conv_stack,
        fusion,
        fc,
        head,
    })
}

/// Evaluation-path inference: resample, build the input, run forward.
///
/// No volume randomization is applied.
pub fn predict(params: &ModelParams, config: &ModelConfig, sample: &AudioSample) -> Result<Prediction> {
    let sample = resample_to_target(sample, TARGET_RATE)?;
    let input = build_input(config, &sample.waveform)?;
    let trace = forward(params, config, &input)?;
    Ok(match config.task {
        Task::Emotion { .. } => Prediction::Emotion(trace.output),
        Task::Personality { .. } => Prediction::Personality(trace.output),
    })
}
