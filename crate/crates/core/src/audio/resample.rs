//! Kaiser-windowed sinc decimator.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Stop-band attenuation the kernel is designed for, in dB.
const DESIGN_ATTENUATION_DB: f64 = 70.0;
/// Passband edge as a fraction of the target Nyquist frequency.
const PASSBAND_FRACTION: f64 = 0.85;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (half / k as f64).powi(2);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn kaiser_beta(attenuation_db: f64) -> f64 {
    if attenuation_db > 50.0 {
        0.1102 * (attenuation_db - 8.7)
    } else if attenuation_db >= 21.0 {
        0.5842 * (attenuation_db - 21.0).powf(0.4) + 0.07886 * (attenuation_db - 21.0)
    } else {
        0.0
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Low-pass filter and resample `input` from `from` Hz to `to` Hz (`to ≤ from`).
///
/// The cutoff sits midway between `0.85·to/2` and `to/2`, and the stop band
/// starts at the target Nyquist frequency.
pub fn resample(input: &[f64], from: u32, to: u32) -> Result<Vec<f64>> {
    if to > from {
        return Err(Error::Upsampling { from, to });
    }
    if to == 0 {
        return Err(Error::Config("target rate must be positive".into()));
    }
    if to == from {
        return Ok(input.to_vec());
    }
    let (from64, to64) = (u64::from(from), u64::from(to));
    let g = gcd(from64, to64);
    let (up, down) = (to64 / g, from64 / g);

    // all frequencies below are normalized to the input rate
    let nyquist = 0.5 * to as f64 / from as f64;
    let pass = PASSBAND_FRACTION * nyquist;
    let cutoff = 0.5 * (pass + nyquist);
    let transition = 2.0 * PI * (nyquist - pass);
    let taps = ((DESIGN_ATTENUATION_DB - 8.0) / (2.285 * transition)).ceil();
    let half_width = (taps / 2.0).ceil() as i64 + 1;
    let beta = kaiser_beta(DESIGN_ATTENUATION_DB);
    let i0_beta = bessel_i0(beta);
    let h = half_width as f64;

    // one kernel per fractional phase
    let kernels: Vec<Vec<f64>> = (0..up)
        .map(|phase| {
            let frac = phase as f64 / up as f64;
            let mut k: Vec<f64> = (-half_width + 1..=half_width)
                .map(|j| {
                    let tau = frac - j as f64;
                    let r = tau / h;
                    if r.abs() >= 1.0 {
                        return 0.0;
                    }
                    let w = bessel_i0(beta * (1.0 - r * r).sqrt()) / i0_beta;
                    2.0 * cutoff * sinc(2.0 * cutoff * tau) * w
                })
                .collect();
            let total: f64 = k.iter().sum();
            k.iter_mut().for_each(|v| *v /= total);
            k
        })
        .collect();

    let out_len = (input.len() as u64 * up).div_ceil(down) as usize;
    let n_in = input.len() as i64;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len as u64 {
        let pos = n * down;
        let base = (pos / up) as i64;
        let kernel = &kernels[(pos % up) as usize];
        let mut acc = 0.0;
        for (idx, &c) in kernel.iter().enumerate() {
            let k = base + idx as i64 - half_width + 1;
            if (0..n_in).contains(&k) {
                acc += c * input[k as usize];
            }
        }
        out.push(acc);
    }
    Ok(out)
}
