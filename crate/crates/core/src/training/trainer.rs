use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::params_digest;
use super::labels::{fit_label_transform, LabelTransform};
use super::split::split_dev_indices;
use crate::audio::{draw_volume_factor, AudioSample, TARGET_RATE};
use crate::error::{Error, Result};
use crate::labels::Label;
use crate::model::{backward, build_input, forward, ModelConfig, ModelParams, ParamGroup, Task};
use crate::numerics::{adam_step, sigmoid_mse, softmax_cross_entropy, AdamState, ParamSlot, Tensor2};

// Independent ChaCha streams derived from the run seed.
const STREAM_INIT: u64 = 0;
const STREAM_SPLIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_AUGMENT: u64 = 3;

/// ChaCha stream `stream` of the generator seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub initial_lr: f64,
    /// Epoch indices (0-based) at which the learning rate is halved.
    pub lr_halving_epochs: Vec<usize>,
    pub minibatch: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub dev_fraction: f64,
    pub seed: u64,
    /// Seed of the volume-randomization stream; defaults to `seed`.
    pub augment_seed: Option<u64>,
    pub volume_rand_a: f64,
    pub augment: bool,
}

impl TrainConfig {
    /// Defaults for `task`; multilingual runs use minibatch 2, single-language runs 1.
    pub fn for_task(task: Task, multilingual: bool) -> Self {
        Self {
            initial_lr: if task.is_emotion() { 1e-4 } else { 2e-4 },
            lr_halving_epochs: vec![25, 40],
            minibatch: if multilingual { 2 } else { 1 },
            max_epochs: 100,
            early_stop_patience: 5,
            dev_fraction: 0.10,
            seed: 0,
            augment_seed: None,
            volume_rand_a: 1.5,
            augment: true,
        }
    }

    /// Fine-tuning continues at the rate joint training stopped at, minibatch 1, no schedule.
    pub fn for_finetune(joint: &RunRecord) -> Self {
        let lr = joint
            .epochs
            .last()
            .map_or(joint.train_config.initial_lr, |e| e.lr);
        Self {
            initial_lr: lr,
            lr_halving_epochs: Vec::new(),
            minibatch: 1,
            ..joint.train_config.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dev_fraction > 0.0 && self.dev_fraction < 1.0) {
            return Err(Error::Config(format!(
                "dev_fraction must lie in (0, 1), got {}",
                self.dev_fraction
            )));
        }
        if self.minibatch == 0 {
            return Err(Error::Config("minibatch must be >= 1".into()));
        }
        if !(self.initial_lr >= 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and >= 0, got {}",
                self.initial_lr
            )));
        }
        if !(self.volume_rand_a >= 0.0 && self.volume_rand_a.is_finite()) {
            return Err(Error::Config("volume_rand_a must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Learning rate for a 0-based epoch index.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let halvings = self.lr_halving_epochs.iter().filter(|&&m| epoch >= m).count();
        self.initial_lr * 0.5f64.powi(halvings as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub dev_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Train,
    Finetune { language: String },
}

/// Reproducibility ledger of one optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub mode: RunMode,
    pub seed: u64,
    pub augment_seed: u64,
    pub train_config: TrainConfig,
    pub model_config: ModelConfig,
    pub languages: Vec<String>,
    pub dev_ids: Vec<String>,
    /// Dev loss of the starting parameters, before any update.
    pub initial_dev_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept; `None` means the starting parameters.
    pub best_epoch: Option<usize>,
    pub stopping_epoch: usize,
    pub stopped_early: bool,
    /// SHA-256 of the returned parameters at storage precision.
    pub params_digest: String,
}

impl RunRecord {
    pub fn lr_history(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.lr).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub record: RunRecord,
    pub label_transform: Option<LabelTransform>,
}

#[derive(Debug, Clone)]
enum Target {
    Class(usize),
    Scores(Vec<f64>),
}

struct Example<'a> {
    sample: &'a AudioSample,
    target: Target,
}

fn targets<'a>(
    task: Task,
    samples: &'a [AudioSample],
    transform: Option<&LabelTransform>,
) -> Result<Vec<Example<'a>>> {
    samples
        .iter()
        .map(|s| {
            let target = match (task, &s.label) {
                (Task::Emotion { classes }, Label::Emotion(e)) => {
                    if e.index() >= classes {
                        return Err(Error::InvalidClass {
                            index: e.index(),
                            classes,
                        });
                    }
                    Target::Class(e.index())
                }
                (Task::Personality { .. }, Label::Personality(t)) => {
                    let transform = transform.expect("personality runs carry a label transform");
                    Target::Scores(transform.training_target(&s.language, t)?)
                }
                (task, label) => {
                    return Err(Error::Manifest(format!(
                        "sample `{}` has label {label:?}, incompatible with the {task} task",
                        s.source_id
                    )))
                }
            };
            Ok(Example { sample: s, target })
        })
        .collect()
}

fn loss_and_grad(
    params: &ModelParams,
    config: &ModelConfig,
    input: &Tensor2,
    target: &Target,
    group: Option<ParamGroup>,
) -> Result<(f64, Option<ModelParams>)> {
    let trace = forward(params, config, input)?;
    let (loss, grad) = match target {
        Target::Class(c) => {
            let (loss, _, grad) = softmax_cross_entropy(&trace.logits, *c)?;
            (loss, grad)
        }
        Target::Scores(t) => {
            let (loss, _, grad) = sigmoid_mse(&trace.logits, t)?;
            (loss, grad)
        }
    };
    let grads = match group {
        Some(g) => Some(backward(params, input, &trace, &grad, g)?),
        None => None,
    };
    Ok((loss, grads))
}

fn mean_dev_loss(
    params: &ModelParams,
    config: &ModelConfig,
    dev: &[(Tensor2, Target)],
) -> Result<f64> {
    if dev.is_empty() {
        return Ok(f64::NAN);
    }
    let losses = dev
        .par_iter()
        .map(|(input, target)| loss_and_grad(params, config, input, target, None).map(|r| r.0))
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

fn check_samples(samples: &[AudioSample], config: &ModelConfig) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let min = config.min_input_samples();
    for s in samples {
        if s.sample_rate != TARGET_RATE {
            return Err(Error::Config(format!(
                "sample `{}` is at {} Hz; resample to {TARGET_RATE} Hz first",
                s.source_id, s.sample_rate
            )));
        }
        if s.waveform.len() < min {
            return Err(Error::InputTooShort {
                required: min,
                actual: s.waveform.len(),
            });
        }
    }
    Ok(())
}

fn languages_of(samples: &[AudioSample]) -> Vec<String> {
    let mut langs: Vec<String> = Vec::new();
    for s in samples {
        if !langs.contains(&s.language) {
            langs.push(s.language.clone());
        }
    }
    langs
}

struct LoopResult {
    params: ModelParams,
    initial_dev_loss: f64,
    epochs: Vec<EpochRecord>,
    best_epoch: Option<usize>,
    stopped_early: bool,
}

/// Minibatch Adam with per-epoch dev evaluation and patience-based early stopping.
fn optimize(
    mut params: ModelParams,
    group: ParamGroup,
    config: &ModelConfig,
    tc: &TrainConfig,
    train: &[Example<'_>],
    dev: &[(Tensor2, Target)],
    augment_seed: u64,
) -> Result<LoopResult> {
    let mut shuffle_rng = stream_rng(tc.seed, STREAM_SHUFFLE);
    let mut augment_rng = stream_rng(augment_seed, STREAM_AUGMENT);
    let mut adam = AdamState::new(&params.group_lengths(group), tc.initial_lr)?;

    let initial_dev_loss = mean_dev_loss(&params, config, dev)?;
    if !dev.is_empty() && !initial_dev_loss.is_finite() {
        return Err(Error::Training("initial dev loss is not finite".into()));
    }
    let mut best = (initial_dev_loss, None::<usize>, params.clone());
    let mut since_best = 0usize;
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..tc.max_epochs {
        let lr = tc.lr_at(epoch);
        adam.learning_rate = lr;
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;

        for batch in order.chunks(tc.minibatch) {
            // volume factors are drawn sequentially so the stream is order-stable
            let alphas: Vec<f64> = batch
                .iter()
                .map(|_| {
                    if tc.augment {
                        draw_volume_factor(tc.volume_rand_a, &mut augment_rng)
                    } else {
                        1.0
                    }
                })
                .collect();
            let results = batch
                .par_iter()
                .zip(alphas.par_iter())
                .map(|(&i, &alpha)| {
                    let ex = &train[i];
                    let wave: Vec<f64> = ex.sample.waveform.iter().map(|x| x * alpha).collect();
                    let input = build_input(config, &wave)?;
                    let (loss, grads) = loss_and_grad(&params, config, &input, &ex.target, Some(group))?;
                    if !loss.is_finite() {
                        return Err(Error::Training(format!(
                            "non-finite loss at epoch {epoch} on sample `{}` (volume factor {alpha})",
                            ex.sample.source_id
                        )));
                    }
                    Ok((loss, grads.expect("gradients requested")))
                })
                .collect::<Result<Vec<_>>>()?;

            let scale = 1.0 / results.len() as f64;
            let mut iter = results.into_iter();
            let (first_loss, mut acc) = iter.next().expect("non-empty minibatch");
            loss_sum += first_loss;
            for (loss, g) in iter {
                loss_sum += loss;
                acc.add_scaled(&g, 1.0, group);
            }
            if batch.len() > 1 {
                for (_, t) in acc.group_mut(group) {
                    t.iter_mut().for_each(|v| *v *= scale);
                }
            }
            let grads = acc.group(group);
            let mut slots: Vec<ParamSlot<'_>> = params
                .group_mut(group)
                .into_iter()
                .zip(grads)
                .map(|((name, value), grad)| ParamSlot { name, value, grad })
                .collect();
            adam_step(&mut slots, &mut adam)?;
        }

        let train_loss = loss_sum / train.len() as f64;
        let dev_loss = mean_dev_loss(&params, config, dev)?;
        if !dev.is_empty() && !dev_loss.is_finite() {
            return Err(Error::Training(format!("dev loss became non-finite at epoch {epoch}")));
        }
        epochs.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            dev_loss,
        });

        if dev.is_empty() {
            best = (f64::NAN, Some(epoch), params.clone());
            continue;
        }
        if dev_loss < best.0 {
            best = (dev_loss, Some(epoch), params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= tc.early_stop_patience.max(1) {
                stopped_early = true;
                break;
            }
        }
    }

    Ok(LoopResult {
        params: best.2,
        initial_dev_loss,
        epochs,
        best_epoch: best.1,
        stopped_early,
    })
}

fn prepare_dev(
    config: &ModelConfig,
    dev_samples: &[AudioSample],
    examples: Vec<Example<'_>>,
) -> Result<Vec<(Tensor2, Target)>> {
    debug_assert_eq!(dev_samples.len(), examples.len());
    examples
        .into_iter()
        .map(|ex| Ok((build_input(config, &ex.sample.waveform)?, ex.target)))
        .collect()
}

/// Trains a model from scratch on all `samples` (one or several languages).
///
/// A stratified dev split is held out; the parameters with the lowest dev loss
/// are returned.
pub fn train(
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    samples: &[AudioSample],
) -> Result<TrainOutcome> {
    model_config.validate()?;
    train_config.validate()?;
    if train_config.initial_lr <= 0.0 {
        return Err(Error::Config("initial learning rate must be > 0".into()));
    }
    check_samples(samples, model_config)?;

    let mut split_rng = stream_rng(train_config.seed, STREAM_SPLIT);
    let (train_idx, dev_idx) = split_dev_indices(samples, train_config.dev_fraction, &mut split_rng);
    let train_samples: Vec<AudioSample> = train_idx.iter().map(|&i| samples[i].clone()).collect();
    let dev_samples: Vec<AudioSample> = dev_idx.iter().map(|&i| samples[i].clone()).collect();

    let label_transform = match model_config.task {
        Task::Personality { .. } => Some(fit_label_transform(&train_samples)?),
        Task::Emotion { .. } => None,
    };
    let train_examples = targets(model_config.task, &train_samples, label_transform.as_ref())?;
    let dev_examples = targets(model_config.task, &dev_samples, label_transform.as_ref())?;
    let dev = prepare_dev(model_config, &dev_samples, dev_examples)?;

    let mut init_rng = stream_rng(train_config.seed, STREAM_INIT);
    let params = ModelParams::init(model_config, &mut init_rng)?;
    let augment_seed = train_config.augment_seed.unwrap_or(train_config.seed);
    let result = optimize(
        params,
        ParamGroup::All,
        model_config,
        train_config,
        &train_examples,
        &dev,
        augment_seed,
    )?;

    let record = RunRecord {
        mode: RunMode::Train,
        seed: train_config.seed,
        augment_seed,
        train_config: train_config.clone(),
        model_config: model_config.clone(),
        languages: languages_of(samples),
        dev_ids: dev_samples.iter().map(|s| s.source_id.clone()).collect(),
        initial_dev_loss: result.initial_dev_loss,
        stopping_epoch: result.epochs.last().map_or(0, |e| e.epoch),
        epochs: result.epochs,
        best_epoch: result.best_epoch,
        stopped_early: result.stopped_early,
        params_digest: params_digest(&result.params),
    };
    Ok(TrainOutcome {
        params: result.params,
        record,
        label_transform,
    })
}

/// Retrains only the post-pooling layers on one language; the conv stack is frozen.
///
/// `label_transform` must be the one the joint model was trained with
/// (personality task) so targets stay in the same space.
pub fn finetune(
    params: &ModelParams,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    samples: &[AudioSample],
    label_transform: Option<&LabelTransform>,
) -> Result<TrainOutcome> {
    model_config.validate()?;
    train_config.validate()?;
    params.check_shapes(model_config)?;
    check_samples(samples, model_config)?;
    let languages = languages_of(samples);
    if languages.len() != 1 {
        return Err(Error::Config(format!(
            "fine-tuning expects a single language, got {languages:?}"
        )));
    }
    if !model_config.task.is_emotion() && label_transform.is_none() {
        return Err(Error::Config("personality fine-tuning needs the joint label transform".into()));
    }

    let mut split_rng = stream_rng(train_config.seed, STREAM_SPLIT);
    let (train_idx, dev_idx) = split_dev_indices(samples, train_config.dev_fraction, &mut split_rng);
    let train_samples: Vec<AudioSample> = train_idx.iter().map(|&i| samples[i].clone()).collect();
    let dev_samples: Vec<AudioSample> = dev_idx.iter().map(|&i| samples[i].clone()).collect();
    let train_examples = targets(model_config.task, &train_samples, label_transform)?;
    let dev_examples = targets(model_config.task, &dev_samples, label_transform)?;
    let dev = prepare_dev(model_config, &dev_samples, dev_examples)?;

    let augment_seed = train_config.augment_seed.unwrap_or(train_config.seed);
    let result = optimize(
        params.clone(),
        ParamGroup::PostPooling,
        model_config,
        train_config,
        &train_examples,
        &dev,
        augment_seed,
    )?;
    let record = RunRecord {
        mode: RunMode::Finetune {
            language: languages[0].clone(),
        },
        seed: train_config.seed,
        augment_seed,
        train_config: train_config.clone(),
        model_config: model_config.clone(),
        languages,
        dev_ids: dev_samples.iter().map(|s| s.source_id.clone()).collect(),
        initial_dev_loss: result.initial_dev_loss,
        stopping_epoch: result.epochs.last().map_or(0, |e| e.epoch),
        epochs: result.epochs,
        best_epoch: result.best_epoch,
        stopped_early: result.stopped_early,
        params_digest: params_digest(&result.params),
    };
    Ok(TrainOutcome {
        params: result.params,
        record,
        label_transform: label_transform.cloned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_halves_at_25_and_40() {
        let tc = TrainConfig::for_task(Task::emotion(), true);
        let lrs: Vec<f64> = (0..50).map(|e| tc.lr_at(e)).collect();
        assert!(lrs[..25].iter().all(|&v| v == 1e-4));
        assert!(lrs[25..40].iter().all(|&v| v == 5e-5));
        assert!(lrs[40..].iter().all(|&v| v == 2.5e-5));
    }

    #[test]
    fn task_defaults() {
        let e = TrainConfig::for_task(Task::emotion(), true);
        assert_eq!((e.initial_lr, e.minibatch), (1e-4, 2));
        let p = TrainConfig::for_task(Task::personality(), false);
        assert_eq!((p.initial_lr, p.minibatch), (2e-4, 1));
        assert_eq!(p.dev_fraction, 0.1);
        assert_eq!(p.volume_rand_a, 1.5);
    }

    #[test]
    fn invalid_configs() {
        let mut tc = TrainConfig::for_task(Task::emotion(), true);
        tc.dev_fraction = 1.0;
        assert!(tc.validate().is_err());
        tc.dev_fraction = 0.1;
        tc.minibatch = 0;
        assert!(tc.validate().is_err());
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let cfg = ModelConfig::emotion().with_width(4);
        let tc = TrainConfig::for_task(Task::emotion(), false);
        assert!(matches!(train(&cfg, &tc, &[]), Err(Error::Empty(_))));
    }
}
