use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Moment estimates and hyperparameters for bias-corrected Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl AdamState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPSILON: f64 = 1e-8;

    /// Zero moments for tensors of the given lengths.
    ///
    /// A zero learning rate is accepted so that frozen or dry runs can reuse
    /// the same code path.
    pub fn new(lengths: &[usize], learning_rate: f64) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative, got {learning_rate}"
            )));
        }
        Ok(Self {
            m: lengths.iter().map(|&n| vec![0.0; n]).collect(),
            v: lengths.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
            beta1: Self::BETA1,
            beta2: Self::BETA2,
            epsilon: Self::EPSILON,
            learning_rate,
        })
    }
}

/// A parameter tensor paired with its gradient.
pub struct ParamSlot<'a> {
    pub name: String,
    pub value: &'a mut [f64],
    pub grad: &'a [f64],
}

/// One bias-corrected Adam update over every slot, in order.
///
/// Gradients are validated before any parameter is touched, so a rejected
/// step leaves both params and state unchanged.
pub fn adam_step(slots: &mut [ParamSlot<'_>], state: &mut AdamState) -> Result<()> {
    if slots.len() != state.m.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameter tensors but optimizer tracks {}",
            slots.len(),
            state.m.len()
        )));
    }
    for (slot, m) in slots.iter().zip(&state.m) {
        if slot.value.len() != slot.grad.len() || slot.value.len() != m.len() {
            return Err(Error::ShapeMismatch(format!(
                "tensor `{}`: value {}, grad {}, moments {}",
                slot.name,
                slot.value.len(),
                slot.grad.len(),
                m.len()
            )));
        }
        if slot.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("{} (gradient)", slot.name)));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let correction1 = 1.0 - b1.powi(t);
    let correction2 = 1.0 - b2.powi(t);
    let lr = state.learning_rate;
    for ((slot, m), v) in slots.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        for i in 0..slot.value.len() {
            let g = slot.grad[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let m_hat = m[i] / correction1;
            let v_hat = v[i] / correction2;
            slot.value[i] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(values: &mut [f64], grad: &[f64], state: &mut AdamState) -> Result<()> {
        let mut slots = [ParamSlot {
            name: "w".into(),
            value: values,
            grad,
        }];
        adam_step(&mut slots, state)
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut w = vec![0.5, -1.0, 2.0];
        let mut state = AdamState::new(&[3], 1e-3).unwrap();
        run(&mut w, &[0.0; 3], &mut state).unwrap();
        assert_eq!(w, vec![0.5, -1.0, 2.0]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let lr = 1e-3;
        let mut w = vec![0.0; 3];
        let mut state = AdamState::new(&[3], lr).unwrap();
        run(&mut w, &[0.7, -3.0, 1e-2], &mut state).unwrap();
        // m_hat / sqrt(v_hat) = sign(g) at step 1, up to epsilon
        assert!((w[0] + lr).abs() < 1e-10);
        assert!((w[1] - lr).abs() < 1e-10);
        assert!((w[2] + lr).abs() < 1e-8);
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let grads = [[0.3, -0.2], [0.1, 0.05], [-1.0, 4.0]];
        let go = || {
            let mut w = vec![1.0, -1.0];
            let mut state = AdamState::new(&[2], 1e-2).unwrap();
            for g in &grads {
                run(&mut w, g, &mut state).unwrap();
            }
            (w, state)
        };
        let (a, sa) = go();
        let (b, sb) = go();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(sa, sb);
    }

    #[test]
    fn non_finite_gradient_names_the_tensor() {
        let mut w = vec![0.0; 2];
        let mut state = AdamState::new(&[2], 1e-3).unwrap();
        let mut slots = [ParamSlot {
            name: "conv.0.weight".into(),
            value: &mut w,
            grad: &[1.0, f64::NAN],
        }];
        let err = adam_step(&mut slots, &mut state).unwrap_err();
        assert!(err.to_string().contains("conv.0.weight"));
        assert_eq!(state.step, 0);
    }
}
