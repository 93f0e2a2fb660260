use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{ConvLayerParams, DenseParams, FusionParams};

/// Which parameters an update touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    All,
    /// Fusion, fully connected and head layers; the conv stack stays frozen.
    PostPooling,
}

/// A named parameter tensor with its logical dimensions.
pub struct NamedTensor<'a> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub conv_stack: Vec<ConvLayerParams>,
    pub fusion: FusionParams,
    pub fc: DenseParams,
    pub head: DenseParams,
}

fn fill_uniform<R: Rng + ?Sized>(values: &mut [f64], fan_in: usize, rng: &mut R) {
    let bound = (3.0 / fan_in as f64).sqrt();
    values
        .iter_mut()
        .for_each(|v| *v = rng.gen_range(-bound..bound));
}

impl ModelParams {
    /// All-zero parameters shaped for `config`.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let conv_stack = config
            .conv_layers()
            .into_iter()
            .map(|(k, s, cin, cout)| ConvLayerParams::zeros(cout, cin, k, s))
            .collect::<Result<Vec<_>>>()?;
        let pooled_dims: Vec<usize> = conv_stack.iter().map(|c| c.out_channels).collect();
        Ok(Self {
            fusion: FusionParams::zeros(&pooled_dims, config.hidden_width),
            fc: DenseParams::zeros(config.fc_width, config.hidden_width),
            head: DenseParams::zeros(config.task.output_dim(), config.fc_width),
            conv_stack,
        })
    }

    /// Fan-in scaled uniform weights (std `1/sqrt(fan_in)`), zero biases.
    ///
    /// Fusion matrices share one fan-in: the total width of all pooled inputs.
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        for conv in &mut p.conv_stack {
            let fan_in = conv.filter_len();
            fill_uniform(&mut conv.weights, fan_in, rng);
        }
        let fusion_fan_in: usize = p.fusion.weights.iter().map(|w| w.in_dim).sum();
        for w in &mut p.fusion.weights {
            fill_uniform(&mut w.weights, fusion_fan_in, rng);
        }
        let fan_in = p.fc.in_dim;
        fill_uniform(&mut p.fc.weights, fan_in, rng);
        let fan_in = p.head.in_dim;
        fill_uniform(&mut p.head.weights, fan_in, rng);
        Ok(p)
    }

    /// Checks that every tensor matches the shapes `config` implies.
    pub fn check_shapes(&self, config: &ModelConfig) -> Result<()> {
        let expected = Self::zeros(config)?;
        let a = self.tensors();
        let b = expected.tensors();
        if a.len() != b.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameter tensors, config implies {}",
                a.len(),
                b.len()
            )));
        }
        for (x, y) in a.iter().zip(&b) {
            if x.name != y.name || x.dims != y.dims || x.data.len() != y.data.len() {
                return Err(Error::ShapeMismatch(format!(
                    "tensor `{}` {:?} does not match `{}` {:?}",
                    x.name, x.dims, y.name, y.dims
                )));
            }
        }
        Ok(())
    }

    /// Every tensor in checkpoint order.
    pub fn tensors(&self) -> Vec<NamedTensor<'_>> {
        let mut out = Vec::new();
        for (i, c) in self.conv_stack.iter().enumerate() {
            out.push(NamedTensor {
                name: format!("conv.{i}.weight"),
                dims: vec![c.out_channels, c.kernel_width, c.in_channels],
                data: &c.weights,
            });
            out.push(NamedTensor {
                name: format!("conv.{i}.bias"),
                dims: vec![c.out_channels],
                data: &c.bias,
            });
        }
        out.extend(self.post_pooling_tensors());
        out
    }

    fn post_pooling_tensors(&self) -> Vec<NamedTensor<'_>> {
        let mut out = Vec::new();
        for (i, w) in self.fusion.weights.iter().enumerate() {
            out.push(NamedTensor {
                name: format!("fusion.{i}.weight"),
                dims: vec![w.out_dim, w.in_dim],
                data: &w.weights,
            });
        }
        out.push(NamedTensor {
            name: "fusion.bias".into(),
            dims: vec![self.fusion.bias.len()],
            data: &self.fusion.bias,
        });
        for (name, d) in [("fc", &self.fc), ("head", &self.head)] {
            out.push(NamedTensor {
                name: format!("{name}.weight"),
                dims: vec![d.out_dim, d.in_dim],
                data: &d.weights,
            });
            out.push(NamedTensor {
                name: format!("{name}.bias"),
                dims: vec![d.out_dim],
                data: &d.bias,
            });
        }
        out
    }

    /// Mutable views of the tensors in `group`, in [`Self::tensors`] order.
    pub fn group_mut(&mut self, group: ParamGroup) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        if group == ParamGroup::All {
            for (i, c) in self.conv_stack.iter_mut().enumerate() {
                out.push((format!("conv.{i}.weight"), &mut c.weights));
                out.push((format!("conv.{i}.bias"), &mut c.bias));
            }
        }
        for (i, w) in self.fusion.weights.iter_mut().enumerate() {
            out.push((format!("fusion.{i}.weight"), &mut w.weights));
        }
        out.push(("fusion.bias".into(), &mut self.fusion.bias));
        out.push(("fc.weight".into(), &mut self.fc.weights));
        out.push(("fc.bias".into(), &mut self.fc.bias));
        out.push(("head.weight".into(), &mut self.head.weights));
        out.push(("head.bias".into(), &mut self.head.bias));
        out
    }

    /// Read-only views of the tensors in `group`.
    pub fn group(&self, group: ParamGroup) -> Vec<&[f64]> {
        match group {
            ParamGroup::All => self.tensors().into_iter().map(|t| t.data).collect(),
            ParamGroup::PostPooling => self
                .post_pooling_tensors()
                .into_iter()
                .map(|t| t.data)
                .collect(),
        }
    }

    pub fn group_lengths(&self, group: ParamGroup) -> Vec<usize> {
        self.group(group).iter().map(|t| t.len()).collect()
    }

    /// Rebuilds parameters from tensors listed in [`Self::tensors`] order.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<(String, Vec<usize>, Vec<f64>)>) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let expected: Vec<(String, Vec<usize>)> =
            p.tensors().into_iter().map(|t| (t.name, t.dims)).collect();
        if expected.len() != tensors.len() {
            return Err(Error::Checkpoint(format!(
                "{} tensors stored, config implies {}",
                tensors.len(),
                expected.len()
            )));
        }
        for ((name, dims), (got_name, got_dims, _)) in expected.iter().zip(&tensors) {
            if name != got_name || dims != got_dims {
                return Err(Error::Checkpoint(format!(
                    "tensor `{got_name}` {got_dims:?} where `{name}` {dims:?} was expected"
                )));
            }
        }
        for ((_, dst), (_, _, src)) in p.group_mut(ParamGroup::All).into_iter().zip(tensors) {
            dst.copy_from_slice(&src);
        }
        Ok(p)
    }

    /// Rounds every value through 32-bit storage precision.
    pub fn quantized(&self) -> Self {
        let mut p = self.clone();
        for (_, t) in p.group_mut(ParamGroup::All) {
            t.iter_mut().for_each(|v| *v = f64::from(*v as f32));
        }
        p
    }

    /// `self += scale * other` over the tensors of `group` present in `other`.
    pub(crate) fn add_scaled(&mut self, other: &ModelParams, scale: f64, group: ParamGroup) {
        let src = other.group(group);
        for ((_, dst), s) in self.group_mut(group).into_iter().zip(src) {
            crate::numerics::axpy(dst, scale, s);
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn small() -> ModelConfig {
        ModelConfig::emotion().with_width(16)
    }

    #[test]
    fn same_seed_same_params() {
        let a = ModelParams::init(&small(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = ModelParams::init(&small(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        let c = ModelParams::init(&small(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn biases_start_at_zero() {
        let p = ModelParams::init(&small(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for t in p.tensors() {
            if t.name.ends_with("bias") {
                assert!(t.data.iter().all(|&v| v == 0.0), "{}", t.name);
            }
        }
    }

    #[test]
    fn tensor_round_trip_through_names() {
        let cfg = small();
        let p = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let owned = p
            .tensors()
            .into_iter()
            .map(|t| (t.name, t.dims, t.data.to_vec()))
            .collect();
        assert_eq!(ModelParams::from_tensors(&cfg, owned).unwrap(), p);
        p.check_shapes(&cfg).unwrap();
        assert!(p.check_shapes(&cfg.spectrogram_variant()).is_err());
    }

    #[test]
    fn post_pooling_group_excludes_conv() {
        let mut p = ModelParams::zeros(&small()).unwrap();
        let names: Vec<String> = p.group_mut(ParamGroup::PostPooling).into_iter().map(|(n, _)| n).collect();
        assert!(names.iter().all(|n| !n.starts_with("conv")));
        assert_eq!(names.len(), p.group(ParamGroup::PostPooling).len());
    }
}
