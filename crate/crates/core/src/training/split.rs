use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::audio::AudioSample;
use crate::labels::Label;

/// Stratum key: language plus class for emotion labels, language alone otherwise.
fn stratum(sample: &AudioSample) -> (String, Option<usize>) {
    let class = match &sample.label {
        Label::Emotion(e) => Some(e.index()),
        _ => None,
    };
    (sample.language.clone(), class)
}

/// Stratified random hold-out of `round(n·fraction)` samples per stratum.
///
/// Returns `(train, dev)` index lists, each ascending. Together they cover
/// every index exactly once.
pub fn split_dev_indices<R: Rng + ?Sized>(
    samples: &[AudioSample],
    fraction: f64,
    rng: &mut R,
) -> (Vec<usize>, Vec<usize>) {
    let mut strata: BTreeMap<(String, Option<usize>), Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        strata.entry(stratum(s)).or_default().push(i);
    }
    let mut train = Vec::with_capacity(samples.len());
    let mut dev = Vec::new();
    for members in strata.values_mut() {
        members.shuffle(rng);
        let n_dev = ((members.len() as f64) * fraction).round() as usize;
        let n_dev = n_dev.min(members.len().saturating_sub(1));
        dev.extend_from_slice(&members[..n_dev]);
        train.extend_from_slice(&members[n_dev..]);
    }
    if dev.is_empty() && train.len() >= 2 && fraction > 0.0 {
        // tiny sets: keep at least one dev sample so early stopping has a signal
        let pick = rng.gen_range(0..train.len());
        dev.push(train.swap_remove(pick));
    }
    train.sort_unstable();
    dev.sort_unstable();
    (train, dev)
}

/// [`split_dev_indices`] materialized as sample vectors.
pub fn split_dev<R: Rng + ?Sized>(
    samples: &[AudioSample],
    fraction: f64,
    rng: &mut R,
) -> (Vec<AudioSample>, Vec<AudioSample>) {
    let (train, dev) = split_dev_indices(samples, fraction, rng);
    (
        train.into_iter().map(|i| samples[i].clone()).collect(),
        dev.into_iter().map(|i| samples[i].clone()).collect(),
    )
}
