//! Per-language affine standardization of personality labels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::audio::AudioSample;
use crate::error::{Error, Result};
use crate::labels::{TraitScores, TRAITS};

/// Shared mean every language is mapped to; the center of the sigmoid range.
pub const TARGET_MEAN: f64 = 0.5;
/// Clipping bounds for training targets.
pub const TARGET_CLIP: (f64, f64) = (0.01, 0.99);
const MIN_STD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraitAffine {
    pub source_mean: f64,
    pub source_std: f64,
    pub target_mean: f64,
    pub target_std: f64,
}

impl TraitAffine {
    pub fn forward(&self, y: f64) -> f64 {
        (y - self.source_mean) / self.source_std * self.target_std + self.target_mean
    }

    pub fn inverse(&self, t: f64) -> f64 {
        (t - self.target_mean) / self.target_std * self.source_std + self.source_mean
    }
}

/// Maps each language's trait labels to a common mean and spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelTransform {
    pub languages: BTreeMap<String, Vec<TraitAffine>>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Fits source statistics per (language, trait) from the given training samples.
///
/// The target spread of each trait is the sample-size-weighted pooled standard
/// deviation across languages; the target mean is [`TARGET_MEAN`].
pub fn fit_label_transform(samples: &[AudioSample]) -> Result<LabelTransform> {
    let mut by_lang: BTreeMap<String, Vec<TraitScores>> = BTreeMap::new();
    for s in samples {
        let scores = s.label.traits().ok_or_else(|| {
            Error::Manifest(format!("sample `{}` carries no trait scores", s.source_id))
        })?;
        by_lang.entry(s.language.clone()).or_default().push(*scores);
    }
    if by_lang.is_empty() {
        return Err(Error::Empty("no labelled samples to fit a label transform"));
    }

    let mut stats: BTreeMap<String, Vec<(f64, f64, usize)>> = BTreeMap::new();
    for (lang, rows) in &by_lang {
        let mut per_trait = Vec::with_capacity(TRAITS.len());
        for (t, name) in TRAITS.iter().enumerate() {
            let column: Vec<f64> = rows.iter().map(|r| r[t]).collect();
            let (mean, std) = mean_std(&column);
            if std < MIN_STD {
                return Err(Error::DegenerateLabels {
                    language: lang.clone(),
                    trait_name: (*name).to_owned(),
                    std,
                });
            }
            per_trait.push((mean, std, rows.len()));
        }
        stats.insert(lang.clone(), per_trait);
    }

    let target_std: Vec<f64> = (0..TRAITS.len())
        .map(|t| {
            let (num, den) = stats.values().fold((0.0, 0.0), |(num, den), s| {
                let (_, std, n) = s[t];
                (num + n as f64 * std * std, den + n as f64)
            });
            (num / den).sqrt()
        })
        .collect();

    let languages = stats
        .into_iter()
        .map(|(lang, per_trait)| {
            let affines = per_trait
                .iter()
                .zip(&target_std)
                .map(|(&(mean, std, _), &tstd)| TraitAffine {
                    source_mean: mean,
                    source_std: std,
                    target_mean: TARGET_MEAN,
                    target_std: tstd,
                })
                .collect();
            (lang, affines)
        })
        .collect();
    Ok(LabelTransform { languages })
}

impl LabelTransform {
    fn affines(&self, language: &str) -> Result<&[TraitAffine]> {
        self.languages
            .get(language)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Manifest(format!("no label statistics for language `{language}`")))
    }

    pub fn forward(&self, language: &str, scores: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .affines(language)?
            .iter()
            .zip(scores)
            .map(|(a, &y)| a.forward(y))
            .collect())
    }

    pub fn inverse(&self, language: &str, scores: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .affines(language)?
            .iter()
            .zip(scores)
            .map(|(a, &t)| a.inverse(t))
            .collect())
    }

    /// Forward transform clipped into the sigmoid-reachable range.
    pub fn training_target(&self, language: &str, scores: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .forward(language, scores)?
            .into_iter()
            .map(|v| v.clamp(TARGET_CLIP.0, TARGET_CLIP.1))
            .collect())
    }
}
