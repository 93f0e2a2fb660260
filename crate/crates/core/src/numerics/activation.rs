//! Elementwise nonlinearities and output heads.

use crate::error::{Error, Result};

/// Exponential linear unit with unit alpha.
#[inline]
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
pub fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Derivative of ELU expressed through its output `y = elu(x)`.
#[inline]
pub(crate) fn elu_grad_from_output(y: f64) -> f64 {
    if y > 0.0 {
        1.0
    } else {
        y + 1.0
    }
}

pub fn elu_in_place(xs: &mut [f64]) {
    xs.iter_mut().for_each(|x| *x = elu(*x));
}

pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Empty("softmax logits"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|&x| sigmoid_scalar(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elu_values() {
        assert_eq!(elu(0.0), 0.0);
        assert_eq!(elu(1.0), 1.0);
        assert!((elu(-20.0) - ((-20.0f64).exp() - 1.0)).abs() < 1e-15);
        assert!((elu(-20.0) + 1.0).abs() < 1e-8);
        assert_eq!(elu_grad(2.0), 1.0);
        assert_eq!(elu_grad(0.0), 1.0);
        assert_eq!(elu_grad_from_output(elu(-0.7)), elu_grad(-0.7));
    }

    #[test]
    fn softmax_contracts() {
        let p = softmax(&[0.3; 4]).unwrap();
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));

        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] >= 0.0 && p[1] < 1e-300);

        let z = [0.1, -2.0, 3.5, 0.0];
        let shifted: Vec<f64> = z.iter().map(|v| v + 17.25).collect();
        let (a, b) = (softmax(&z).unwrap(), softmax(&shifted).unwrap());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn sigmoid_contracts() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        for x in [-5.0, -0.3, 0.01, 2.0, 30.0] {
            assert!((sigmoid_scalar(-x) - (1.0 - sigmoid_scalar(x))).abs() < 1e-12);
        }
        let s = sigmoid_scalar(36.0);
        assert!(s > 1.0 - 1e-15 && s.is_finite());
        assert!(sigmoid_scalar(-800.0) >= 0.0);
    }
}
