use super::tensor::Tensor2;
use crate::error::{Error, Result};

/// Per-channel mean over all frames.
pub fn global_average_pool(layer_output: &Tensor2) -> Result<Vec<f64>> {
    if layer_output.frames() == 0 {
        return Err(Error::Empty("global average pool over zero frames"));
    }
    let mut acc = vec![0.0; layer_output.channels()];
    for row in layer_output.rows() {
        acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
    }
    let n = layer_output.frames() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Spreads the pooled-vector gradient uniformly back over `frames`.
pub fn global_average_pool_backward(grad: &[f64], frames: usize) -> Tensor2 {
    let scale = 1.0 / frames as f64;
    let row: Vec<f64> = grad.iter().map(|g| g * scale).collect();
    let mut out = Tensor2::zeros(frames, grad.len());
    for f in 0..frames {
        out.row_mut(f).copy_from_slice(&row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_frames_pool_to_the_constant() {
        let t = Tensor2::from_rows(&vec![vec![0.25, -3.0, 7.5]; 9]).unwrap();
        assert_eq!(global_average_pool(&t).unwrap(), vec![0.25, -3.0, 7.5]);
    }

    #[test]
    fn two_point_mean() {
        let t = Tensor2::from_rows(&[vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(global_average_pool(&t).unwrap(), vec![2.0]);
    }

    #[test]
    fn zero_frames_is_an_error() {
        assert!(global_average_pool(&Tensor2::zeros(0, 3)).is_err());
    }
}
