//! Classification and regression metrics, reported per language and overall.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::audio::AudioSample;
use crate::error::{Error, Result};
use crate::labels::{Emotion, Label, TRAITS};
use crate::model::{argmax, predict, ModelConfig, ModelParams, Task};
use crate::training::{Checkpoint, LabelTransform};

/// Precision, recall and F1 for one class, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[truth][prediction]`
    pub confusion: Vec<Vec<usize>>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Fraction of correct predictions, in percent.
    pub accuracy: f64,
}

fn ratio_pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    values.sum::<f64>() / n as f64
}

/// Per-class precision/recall/F1 with macro averages.
///
/// A zero denominator yields 0 for that metric.
pub fn prf1(predictions: &[usize], truths: &[usize], num_classes: usize) -> Result<ClassificationReport> {
    if predictions.len() != truths.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let mut confusion = vec![vec![0usize; num_classes]; num_classes];
    for (&p, &t) in predictions.iter().zip(truths) {
        for index in [p, t] {
            if index >= num_classes {
                return Err(Error::InvalidClass {
                    index,
                    classes: num_classes,
                });
            }
        }
        confusion[t][p] += 1;
    }
    let per_class: Vec<ClassMetrics> = (0..num_classes)
        .map(|c| {
            let tp = confusion[c][c];
            let support: usize = confusion[c].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[c]).sum();
            let precision = ratio_pct(tp, predicted);
            let recall = ratio_pct(tp, support);
            ClassMetrics {
                precision,
                recall,
                f1: harmonic(precision, recall),
                support,
            }
        })
        .collect();
    let correct: usize = (0..num_classes).map(|c| confusion[c][c]).sum();
    Ok(ClassificationReport {
        macro_precision: mean(per_class.iter().map(|m| m.precision)),
        macro_recall: mean(per_class.iter().map(|m| m.recall)),
        macro_f1: mean(per_class.iter().map(|m| m.f1)),
        accuracy: ratio_pct(correct, truths.len()),
        per_class,
        confusion,
    })
}

/// Mean absolute error.
pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Empty("mae inputs"));
    }
    Ok(pred.iter().zip(truth).map(|(p, g)| (p - g).abs()).sum::<f64>() / pred.len() as f64)
}

/// `true` ("high") when the score is at or above the threshold.
pub fn binarize_by_mean(scores: &[f64], trait_mean: f64) -> Vec<bool> {
    scores.iter().map(|&s| s >= trait_mean).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraitMetrics {
    pub mae: f64,
    /// Binary metrics in percent; P/R/F1 are macro-averaged over low and high.
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Ground-truth mean used as the low/high boundary.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionReport {
    pub per_trait: Vec<TraitMetrics>,
    pub average: TraitMetrics,
}

/// MAE and mean-threshold binary metrics per trait.
///
/// `pred` and `truth` hold one trait vector per sample, in original label space.
pub fn regression_report(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<RegressionReport> {
    if pred.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Empty("regression report"));
    }
    let traits = truth[0].len();
    if pred.iter().chain(truth).any(|v| v.len() != traits) {
        return Err(Error::ShapeMismatch("ragged trait vectors".into()));
    }
    let mut per_trait = Vec::with_capacity(traits);
    for t in 0..traits {
        let p: Vec<f64> = pred.iter().map(|v| v[t]).collect();
        let g: Vec<f64> = truth.iter().map(|v| v[t]).collect();
        let threshold = g.iter().sum::<f64>() / g.len() as f64;
        let as_class = |b: Vec<bool>| -> Vec<usize> { b.into_iter().map(usize::from).collect() };
        let pb = as_class(binarize_by_mean(&p, threshold));
        let gb = as_class(binarize_by_mean(&g, threshold));
        let cls = prf1(&pb, &gb, 2)?;
        per_trait.push(TraitMetrics {
            mae: mae(&p, &g)?,
            accuracy: cls.accuracy,
            precision: cls.macro_precision,
            recall: cls.macro_recall,
            f1: cls.macro_f1,
            threshold,
        });
    }
    let avg = |f: fn(&TraitMetrics) -> f64| mean(per_trait.iter().map(f));
    let average = TraitMetrics {
        mae: avg(|m| m.mae),
        accuracy: avg(|m| m.accuracy),
        precision: avg(|m| m.precision),
        recall: avg(|m| m.recall),
        f1: avg(|m| m.f1),
        threshold: f64::NAN,
    };
    Ok(RegressionReport { per_trait, average })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum LanguageMetrics {
    Classification(ClassificationReport),
    Regression(RegressionReport),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub method: String,
    pub task: Task,
    /// One entry per language in first-appearance order, then `"overall"`.
    pub sections: Vec<(String, LanguageMetrics)>,
}

pub const OVERALL: &str = "overall";

impl EvaluationReport {
    pub fn section(&self, language: &str) -> Option<&LanguageMetrics> {
        self.sections.iter().find(|(l, _)| l == language).map(|(_, m)| m)
    }

    pub fn classification(&self, language: &str) -> Option<&ClassificationReport> {
        match self.section(language)? {
            LanguageMetrics::Classification(r) => Some(r),
            LanguageMetrics::Regression(_) => None,
        }
    }

    pub fn regression(&self, language: &str) -> Option<&RegressionReport> {
        match self.section(language)? {
            LanguageMetrics::Regression(r) => Some(r),
            LanguageMetrics::Classification(_) => None,
        }
    }

    /// Columns `method,language,class,P,R,F1` or `method,language,trait,MAE,A,P,R,F1`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let f = |v: f64| format!("{v:.4}");
        if self.task.is_emotion() {
            w.write_record(["method", "language", "class", "P", "R", "F1"])?;
        } else {
            w.write_record(["method", "language", "trait", "MAE", "A", "P", "R", "F1"])?;
        }
        for (lang, metrics) in &self.sections {
            match metrics {
                LanguageMetrics::Classification(r) => {
                    for (c, m) in r.per_class.iter().enumerate() {
                        let name = class_name(c);
                        w.write_record([&self.method, lang, &name, &f(m.precision), &f(m.recall), &f(m.f1)])?;
                    }
                    w.write_record([
                        &self.method,
                        lang,
                        "Average",
                        &f(r.macro_precision),
                        &f(r.macro_recall),
                        &f(r.macro_f1),
                    ])?;
                }
                LanguageMetrics::Regression(r) => {
                    let rows = r
                        .per_trait
                        .iter()
                        .enumerate()
                        .map(|(t, m)| (TRAITS.get(t).copied().unwrap_or("trait").to_owned(), m))
                        .chain(std::iter::once(("Average over Traits".to_owned(), &r.average)));
                    for (name, m) in rows {
                        w.write_record([
                            &self.method,
                            lang,
                            &name,
                            &f(m.mae),
                            &f(m.accuracy),
                            &f(m.precision),
                            &f(m.recall),
                            &f(m.f1),
                        ])?;
                    }
                }
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Manifest(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// Human-readable table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "method: {}  task: {}", self.method, self.task);
        for (lang, metrics) in &self.sections {
            let _ = writeln!(s, "\n[{lang}]");
            match metrics {
                LanguageMetrics::Classification(r) => {
                    let _ = writeln!(s, "{:<12} {:>7} {:>7} {:>7} {:>8}", "class", "P", "R", "F1", "support");
                    for (c, m) in r.per_class.iter().enumerate() {
                        let _ = writeln!(
                            s,
                            "{:<12} {:>7.1} {:>7.1} {:>7.1} {:>8}",
                            class_name(c),
                            m.precision,
                            m.recall,
                            m.f1,
                            m.support
                        );
                    }
                    let _ = writeln!(
                        s,
                        "{:<12} {:>7.1} {:>7.1} {:>7.1}",
                        "Average", r.macro_precision, r.macro_recall, r.macro_f1
                    );
                }
                LanguageMetrics::Regression(r) => {
                    let _ = writeln!(
                        s,
                        "{:<20} {:>7} {:>7} {:>7} {:>7} {:>7}",
                        "trait", "MAE", "A", "P", "R", "F1"
                    );
                    let rows = r
                        .per_trait
                        .iter()
                        .enumerate()
                        .map(|(t, m)| (TRAITS.get(t).copied().unwrap_or("trait"), m))
                        .chain(std::iter::once(("Average over Traits", &r.average)));
                    for (name, m) in rows {
                        let _ = writeln!(
                            s,
                            "{:<20} {:>7.4} {:>7.1} {:>7.1} {:>7.1} {:>7.1}",
                            name, m.mae, m.accuracy, m.precision, m.recall, m.f1
                        );
                    }
                }
            }
        }
        s
    }
}

fn class_name(c: usize) -> String {
    Emotion::from_index(c).map_or_else(|| format!("class{c}"), |e| e.name().to_owned())
}

fn languages_in_order(samples: &[AudioSample]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in samples {
        if !out.contains(&s.language) {
            out.push(s.language.clone());
        }
    }
    out
}

/// Runs evaluation-path inference on every sample and scores it.
///
/// Personality predictions are mapped back to the original label space with
/// `label_transform` before any metric is computed.
pub fn evaluate_params(
    params: &ModelParams,
    config: &ModelConfig,
    label_transform: Option<&LabelTransform>,
    samples: &[AudioSample],
    method: &str,
) -> Result<EvaluationReport> {
    if samples.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let outputs = samples
        .par_iter()
        .map(|s| predict(params, config, s).map(|p| p.values().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let languages = languages_in_order(samples);
    let groups = languages
        .iter()
        .map(|l| Some(l.as_str()))
        .chain(std::iter::once(None));

    let mut sections = Vec::new();
    match config.task {
        Task::Emotion { classes } => {
            let mut preds = Vec::with_capacity(samples.len());
            let mut truths = Vec::with_capacity(samples.len());
            for (s, out) in samples.iter().zip(&outputs) {
                let truth = match s.label {
                    Label::Emotion(e) => e.index(),
                    _ => return Err(Error::Manifest(format!("sample `{}` has no emotion label", s.source_id))),
                };
                preds.push(argmax(out));
                truths.push(truth);
            }
            for lang in groups {
                let idx: Vec<usize> = (0..samples.len())
                    .filter(|&i| lang.is_none_or(|l| samples[i].language == l))
                    .collect();
                let p: Vec<usize> = idx.iter().map(|&i| preds[i]).collect();
                let t: Vec<usize> = idx.iter().map(|&i| truths[i]).collect();
                let name = lang.unwrap_or(OVERALL).to_owned();
                sections.push((name, LanguageMetrics::Classification(prf1(&p, &t, classes)?)));
            }
        }
        Task::Personality { .. } => {
            let transform = label_transform
                .ok_or_else(|| Error::Config("personality evaluation needs the label transform".into()))?;
            let mut preds = Vec::with_capacity(samples.len());
            let mut truths = Vec::with_capacity(samples.len());
            for (s, out) in samples.iter().zip(&outputs) {
                let truth = s.label.traits().ok_or_else(|| {
                    Error::Manifest(format!("sample `{}` has no trait scores", s.source_id))
                })?;
                preds.push(transform.inverse(&s.language, out)?);
                truths.push(truth.to_vec());
            }
            for lang in groups {
                let idx: Vec<usize> = (0..samples.len())
                    .filter(|&i| lang.is_none_or(|l| samples[i].language == l))
                    .collect();
                let p: Vec<Vec<f64>> = idx.iter().map(|&i| preds[i].clone()).collect();
                let t: Vec<Vec<f64>> = idx.iter().map(|&i| truths[i].clone()).collect();
                let name = lang.unwrap_or(OVERALL).to_owned();
                sections.push((name, LanguageMetrics::Regression(regression_report(&p, &t)?)));
            }
        }
    }
    Ok(EvaluationReport {
        method: method.to_owned(),
        task: config.task,
        sections,
    })
}

/// Evaluates a stored checkpoint; the method name is derived from its front end and run mode.
pub fn evaluate(checkpoint: &Checkpoint, samples: &[AudioSample]) -> Result<EvaluationReport> {
    let mode = match checkpoint.run_record.as_ref().map(|r| &r.mode) {
        Some(crate::training::RunMode::Finetune { .. }) => "finetuned",
        _ if checkpoint.languages.len() > 1 => "multilingual",
        _ => "single",
    };
    let method = format!("{}-{mode}", checkpoint.config.front_end.name());
    evaluate_params(
        &checkpoint.params,
        &checkpoint.config,
        checkpoint.label_transform.as_ref(),
        samples,
        &method,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let r = prf1(&[0, 1, 2, 3, 1], &[0, 1, 2, 3, 1], 4).unwrap();
        for m in &r.per_class {
            assert_eq!((m.precision, m.recall, m.f1), (100.0, 100.0, 100.0));
        }
        assert_eq!(r.macro_f1, 100.0);
    }

    #[test]
    fn never_predicted_class_is_zero() {
        let r = prf1(&[0, 0, 1], &[0, 2, 1], 3).unwrap();
        let m = r.per_class[2];
        assert_eq!((m.precision, m.recall, m.f1, m.support), (0.0, 0.0, 0.0, 1));
    }

    #[test]
    fn equal_precision_and_recall_give_same_f1() {
        let r = prf1(&[0, 1, 1, 0], &[0, 1, 0, 1], 2).unwrap();
        assert_eq!(r.per_class[0].precision, r.per_class[0].recall);
        assert_eq!(r.per_class[0].f1, r.per_class[0].precision);
    }

    #[test]
    fn confusion_rows_sum_to_support() {
        let r = prf1(&[0, 1, 2, 2, 1], &[0, 0, 2, 1, 1], 3).unwrap();
        for (row, m) in r.confusion.iter().zip(&r.per_class) {
            assert_eq!(row.iter().sum::<usize>(), m.support);
        }
    }

    #[test]
    fn mae_examples() {
        let truth = [0.3, 0.4, 0.5, 0.6, 0.7];
        assert_eq!(mae(&truth, &truth).unwrap(), 0.0);
        let pred = [0.4, 0.3, 0.5, 0.6, 0.7];
        for (t, expect) in [0.1, 0.1, 0.0, 0.0, 0.0].iter().enumerate() {
            assert!((mae(&pred[t..=t], &truth[t..=t]).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn binarize_ties_are_high() {
        assert_eq!(binarize_by_mean(&[0.5, 0.5], 0.5), vec![true, true]);
        assert_eq!(binarize_by_mean(&[0.2, 0.8], 0.5), vec![false, true]);
    }

    #[test]
    fn ground_truth_against_itself_is_perfect() {
        let truth: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 10.0; 5]).collect();
        let r = regression_report(&truth, &truth).unwrap();
        for m in &r.per_trait {
            assert_eq!((m.mae, m.accuracy), (0.0, 100.0));
        }
        assert_eq!(r.average.accuracy, 100.0);
    }
}
