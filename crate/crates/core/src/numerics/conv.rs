use serde::{Deserialize, Serialize};

use super::tensor::{axpy, dot, Tensor2};
use crate::error::{Error, Result};

/// Weights and bias of a valid-mode 1-D convolution.
///
/// `weights` is laid out `[out][kernel][in]`, so one filter is a contiguous
/// run matching a `kernel_width × in_channels` slice of a row-major input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayerParams {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_width: usize,
    pub stride: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayerParams {
    pub fn zeros(
        out_channels: usize,
        in_channels: usize,
        kernel_width: usize,
        stride: usize,
    ) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 || kernel_width == 0 || stride == 0 {
            return Err(Error::Config(format!(
                "conv geometry must be positive (out={out_channels}, in={in_channels}, kernel={kernel_width}, stride={stride})"
            )));
        }
        Ok(Self {
            out_channels,
            in_channels,
            kernel_width,
            stride,
            weights: vec![0.0; out_channels * kernel_width * in_channels],
            bias: vec![0.0; out_channels],
        })
    }

    pub fn filter_len(&self) -> usize {
        self.kernel_width * self.in_channels
    }

    pub fn filter(&self, out: usize) -> &[f64] {
        let n = self.filter_len();
        &self.weights[out * n..(out + 1) * n]
    }

    /// Kernel taps of one filter restricted to a single input channel.
    pub fn filter_channel(&self, out: usize, channel: usize) -> Vec<f64> {
        self.filter(out)
            .chunks_exact(self.in_channels)
            .map(|tap| tap[channel])
            .collect()
    }

    pub fn output_frames(&self, input_frames: usize) -> Option<usize> {
        (input_frames >= self.kernel_width)
            .then(|| (input_frames - self.kernel_width) / self.stride + 1)
    }

    fn clone_geometry(&self) -> Self {
        Self {
            out_channels: self.out_channels,
            in_channels: self.in_channels,
            kernel_width: self.kernel_width,
            stride: self.stride,
            weights: Vec::new(),
            bias: Vec::new(),
        }
    }

    fn check_input(&self, input: &Tensor2) -> Result<usize> {
        if input.channels() != self.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "conv expects {} input channels, got {}",
                self.in_channels,
                input.channels()
            )));
        }
        self.output_frames(input.frames())
            .ok_or(Error::InputTooShort {
                required: self.kernel_width,
                actual: input.frames(),
            })
    }
}

/// Pre-activation affine map of every `kernel_width` window, hopping by `stride`.
pub fn conv1d_forward(input: &Tensor2, params: &ConvLayerParams) -> Result<Tensor2> {
    let frames = params.check_input(input)?;
    let span = params.filter_len();
    let step = params.stride * params.in_channels;
    let mut out = Tensor2::zeros(frames, params.out_channels);
    for i in 0..frames {
        let window = &input.data()[i * step..i * step + span];
        let row = out.row_mut(i);
        for (o, y) in row.iter_mut().enumerate() {
            *y = params.bias[o] + dot(params.filter(o), window);
        }
    }
    Ok(out)
}

/// Gradients of `sum(upstream ⊙ conv1d_forward(input))`.
///
/// Returns the input gradient and a parameter-shaped gradient.
pub fn conv1d_backward(
    input: &Tensor2,
    params: &ConvLayerParams,
    upstream: &Tensor2,
) -> Result<(Tensor2, ConvLayerParams)> {
    let (grad_input, grad_params) = conv1d_backward_impl(input, params, upstream, true)?;
    Ok((grad_input.expect("input gradient requested"), grad_params))
}

/// Parameter gradients only; skips the input gradient of a front-end layer.
pub(crate) fn conv1d_backward_params(
    input: &Tensor2,
    params: &ConvLayerParams,
    upstream: &Tensor2,
) -> Result<ConvLayerParams> {
    conv1d_backward_impl(input, params, upstream, false).map(|(_, g)| g)
}

fn conv1d_backward_impl(
    input: &Tensor2,
    params: &ConvLayerParams,
    upstream: &Tensor2,
    want_input: bool,
) -> Result<(Option<Tensor2>, ConvLayerParams)> {
    let frames = params.check_input(input)?;
    if upstream.shape() != (frames, params.out_channels) {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient is {:?}, conv output is {:?}",
            upstream.shape(),
            (frames, params.out_channels)
        )));
    }
    let span = params.filter_len();
    let step = params.stride * params.in_channels;
    let mut grads = ConvLayerParams {
        weights: vec![0.0; params.weights.len()],
        bias: vec![0.0; params.out_channels],
        ..params.clone_geometry()
    };
    let mut grad_input = want_input.then(|| Tensor2::zeros(input.frames(), input.channels()));

    for i in 0..frames {
        let window = &input.data()[i * step..i * step + span];
        let g = upstream.row(i);
        for (o, &go) in g.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            grads.bias[o] += go;
            axpy(&mut grads.weights[o * span..(o + 1) * span], go, window);
        }
        if let Some(gi) = grad_input.as_mut() {
            let dst = &mut gi.data_mut()[i * step..i * step + span];
            for (o, &go) in g.iter().enumerate() {
                if go != 0.0 {
                    axpy(dst, go, params.filter(o));
                }
            }
        }
    }
    Ok((grad_input, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_for_one_second_at_8k() {
        let params = ConvLayerParams::zeros(1, 1, 200, 100).unwrap();
        let out = conv1d_forward(&Tensor2::zeros(8000, 1), &params).unwrap();
        assert_eq!(out.frames(), 79);
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let mut params = ConvLayerParams::zeros(2, 2, 1, 1).unwrap();
        params.weights = vec![1.0, 0.0, 0.0, 1.0];
        let input = Tensor2::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0], vec![7.0, 0.0]]).unwrap();
        assert_eq!(conv1d_forward(&input, &params).unwrap(), input);
    }

    #[test]
    fn zero_weights_emit_bias() {
        let mut params = ConvLayerParams::zeros(3, 2, 4, 2).unwrap();
        params.bias = vec![0.5, -1.0, 2.0];
        let input = Tensor2::from_vec(10, 2, (0..20).map(f64::from).collect()).unwrap();
        let out = conv1d_forward(&input, &params).unwrap();
        for row in out.rows() {
            assert_eq!(row, &[0.5, -1.0, 2.0]);
        }
    }

    #[test]
    fn short_input_reports_minimum() {
        let params = ConvLayerParams::zeros(1, 1, 200, 100).unwrap();
        match conv1d_forward(&Tensor2::zeros(150, 1), &params) {
            Err(Error::InputTooShort { required, actual }) => {
                assert_eq!((required, actual), (200, 150));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut params = ConvLayerParams::zeros(3, 2, 4, 2).unwrap();
        params.weights.iter_mut().enumerate().for_each(|(i, w)| *w = i as f64 * 0.1);
        let input = Tensor2::from_vec(10, 2, (0..20).map(|v| v as f64 * 0.3).collect()).unwrap();
        let up = Tensor2::zeros(4, 3);
        let (gi, gp) = conv1d_backward(&input, &params, &up).unwrap();
        assert!(gi.data().iter().all(|&v| v == 0.0));
        assert!(gp.weights.iter().chain(&gp.bias).all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_kernel_input_gradient() {
        let mut params = ConvLayerParams::zeros(1, 1, 1, 1).unwrap();
        params.weights = vec![-2.5];
        let input = Tensor2::from_vec(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let up = Tensor2::from_vec(4, 1, vec![0.5, -1.0, 2.0, 0.0]).unwrap();
        let (gi, _) = conv1d_backward(&input, &params, &up).unwrap();
        assert_eq!(gi.data(), &[-1.25, 2.5, -5.0, 0.0]);
    }

    #[test]
    fn upstream_shape_mismatch_is_rejected() {
        let params = ConvLayerParams::zeros(2, 1, 2, 1).unwrap();
        let input = Tensor2::zeros(5, 1);
        assert!(matches!(
            conv1d_backward(&input, &params, &Tensor2::zeros(3, 2)),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
