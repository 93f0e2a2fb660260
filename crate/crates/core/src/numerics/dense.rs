use serde::{Deserialize, Serialize};

use super::activation::elu_in_place;
use super::tensor::{axpy, dot};
use crate::error::{Error, Result};

/// Fully connected layer, `weights` row-major `out_dim × in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub out_dim: usize,
    pub in_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseParams {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            out_dim,
            in_dim,
            weights: vec![0.0; out_dim * in_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut p = Self::zeros(dim, dim);
        for i in 0..dim {
            p.weights[i * dim + i] = 1.0;
        }
        p
    }

    pub fn row(&self, out: usize) -> &[f64] {
        &self.weights[out * self.in_dim..(out + 1) * self.in_dim]
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.in_dim {
            return Err(Error::ShapeMismatch(format!(
                "dense layer expects {} inputs, got {}",
                self.in_dim,
                x.len()
            )));
        }
        Ok(())
    }

    /// `W x + b`
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok((0..self.out_dim)
            .map(|o| self.bias[o] + dot(self.row(o), x))
            .collect())
    }

    /// Input gradient and parameter gradient of `upstream · (W x + b)`.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, DenseParams)> {
        self.check(x)?;
        if upstream.len() != self.out_dim {
            return Err(Error::ShapeMismatch(format!(
                "dense upstream gradient has {} entries, layer has {} outputs",
                upstream.len(),
                self.out_dim
            )));
        }
        let mut grads = DenseParams::zeros(self.out_dim, self.in_dim);
        let mut grad_x = vec![0.0; self.in_dim];
        for (o, &g) in upstream.iter().enumerate() {
            grads.bias[o] = g;
            if g == 0.0 {
                continue;
            }
            axpy(&mut grads.weights[o * self.in_dim..(o + 1) * self.in_dim], g, x);
            axpy(&mut grad_x, g, self.row(o));
        }
        Ok((grad_x, grads))
    }
}

/// One weight matrix per pooled layer plus a shared bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    pub weights: Vec<DenseParams>,
    pub bias: Vec<f64>,
}

impl FusionParams {
    pub fn zeros(in_dims: &[usize], out_dim: usize) -> Self {
        Self {
            weights: in_dims.iter().map(|&d| DenseParams::zeros(out_dim, d)).collect(),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn out_dim(&self) -> usize {
        self.bias.len()
    }
}

/// Returns `(pre_activation, elu(pre_activation))` of `Σ_l W_l x_l + b`.
///
/// The per-layer matrices carry no bias of their own; only `fusion.bias` is added.
pub fn weighted_average_fusion(
    pooled: &[Vec<f64>],
    fusion: &FusionParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if pooled.len() != fusion.weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} pooled vectors but {} fusion matrices",
            pooled.len(),
            fusion.weights.len()
        )));
    }
    let mut pre = fusion.bias.clone();
    for (x, w) in pooled.iter().zip(&fusion.weights) {
        if w.out_dim != pre.len() {
            return Err(Error::ShapeMismatch(format!(
                "fusion matrix has {} outputs, expected {}",
                w.out_dim,
                pre.len()
            )));
        }
        w.check(x)?;
        for (o, p) in pre.iter_mut().enumerate() {
            *p += dot(w.row(o), x);
        }
    }
    let mut out = pre.clone();
    elu_in_place(&mut out);
    Ok((pre, out))
}

/// Backward of the fusion sum given the gradient w.r.t. its pre-activation.
///
/// Returns one input gradient per pooled vector and the parameter gradient.
pub fn fusion_backward(
    pooled: &[Vec<f64>],
    fusion: &FusionParams,
    grad_pre: &[f64],
) -> Result<(Vec<Vec<f64>>, FusionParams)> {
    let mut grads = FusionParams {
        weights: Vec::with_capacity(pooled.len()),
        bias: grad_pre.to_vec(),
    };
    let mut grad_inputs = Vec::with_capacity(pooled.len());
    for (x, w) in pooled.iter().zip(&fusion.weights) {
        let (gx, mut gw) = w.backward(x, grad_pre)?;
        gw.bias.iter_mut().for_each(|b| *b = 0.0);
        grad_inputs.push(gx);
        grads.weights.push(gw);
    }
    Ok((grad_inputs, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_identity_layer_passes_nonnegative_input() {
        let fusion = FusionParams {
            weights: vec![DenseParams::identity(3)],
            bias: vec![0.0; 3],
        };
        let p = vec![0.0, 1.5, 4.0];
        let (_, out) = weighted_average_fusion(std::slice::from_ref(&p), &fusion).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn zero_weights_give_zero() {
        let fusion = FusionParams::zeros(&[3, 3], 2);
        let (_, out) = weighted_average_fusion(&[vec![1.0; 3], vec![-4.0; 3]], &fusion).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn two_identity_layers_sum_then_elu() {
        let fusion = FusionParams {
            weights: vec![DenseParams::identity(2), DenseParams::identity(2)],
            bias: vec![0.0; 2],
        };
        let (_, out) =
            weighted_average_fusion(&[vec![1.0, -30.0], vec![2.0, -30.0]], &fusion).unwrap();
        assert_eq!(out[0], 3.0);
        assert!((out[1] - ((-60.0f64).exp() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn list_length_mismatch_is_an_error() {
        let fusion = FusionParams::zeros(&[2, 2], 2);
        assert!(weighted_average_fusion(&[vec![0.0; 2]], &fusion).is_err());
    }
}
