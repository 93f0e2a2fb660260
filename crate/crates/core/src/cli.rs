//! Command-line front end.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Display;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::analysis::{
    activation_csv, activation_rms, embeddings_csv, export_embeddings, filter_frequency_response, trace_sample,
    EmbeddingLayer, DEFAULT_FFT_LEN,
};
use crate::audio::{decode_sample, resample_to_target, TARGET_RATE};
use crate::error::{Error, Result};
use crate::evaluation::evaluate;
use crate::labels::{Emotion, TRAITS};
use crate::model::{predict, FrontEnd, ModelConfig, Task};
use crate::synthcorpus::{generate_corpus, CorpusSpec};
use crate::training::{finetune, train, Checkpoint, CorpusManifest, RunRecord, Split, TrainConfig};

pub const THREADS_ENV: &str = "AFFECT_E2E_THREADS";

#[derive(Debug, Parser)]
#[command(name = "affect-e2e", version, about = "End-to-end affect recognition from raw speech")]
pub struct Cli {
    /// Worker threads (falls back to AFFECT_E2E_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus (WAV files and manifest.csv).
    Synth(SynthArgs),
    /// Train a model from scratch.
    Train(TrainArgs),
    /// Retrain the post-pooling layers of a checkpoint on one language.
    Finetune(TrainArgs),
    /// Score a checkpoint on a manifest split.
    Eval(EvalArgs),
    /// Print the model output for one WAV file.
    Predict(PredictArgs),
    /// Export first-layer filter frequency responses.
    AnalyzeFilters(AnalyzeFiltersArgs),
    /// Export per-frame RMS activation traces.
    AnalyzeActivations(EvalArgs),
    /// Export pooled-layer and fc vectors for external projection.
    ExportEmbeddings(EmbeddingArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_per_class: Option<usize>,
    #[arg(long)]
    pub test_per_class: Option<usize>,
    /// Utterance length in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long)]
    pub front_end: Option<FrontEnd>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Comma-separated language tags; all languages when omitted.
    #[arg(long)]
    pub languages: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Starting checkpoint (fine-tuning only).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub minibatch: Option<usize>,
    #[arg(long)]
    pub volume_rand_a: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Width of every conv, fusion and fc layer.
    #[arg(long)]
    pub filters: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Disable volume randomization.
    #[arg(long)]
    pub no_augment: bool,
    /// key=value file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Expected task; a checkpoint for another task is rejected.
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long)]
    pub languages: Option<String>,
    /// train, test, or all.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub wav: PathBuf,
    #[arg(long)]
    pub task: Option<Task>,
}

#[derive(Debug, Args)]
pub struct AnalyzeFiltersArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = DEFAULT_FFT_LEN)]
    pub fft_len: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmbeddingArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Comma-separated layers such as `pool0,pool4,fc`; all when omitted.
    #[arg(long)]
    pub layers: Option<String>,
}

/// `key=value` lines; `#` starts a comment.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("config line {}: expected key=value", n + 1)))?;
        out.insert(k.trim().replace('_', "-"), v.trim().to_owned());
    }
    Ok(out)
}

/// Flag value, else config-file value, else default; records what was used.
struct Resolver {
    file: BTreeMap<String, String>,
    resolved: Vec<(String, String)>,
}

impl Resolver {
    fn new(config: Option<&Path>) -> Result<Self> {
        let file = match config {
            Some(p) => parse_config_file(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
            None => BTreeMap::new(),
        };
        Ok(Self {
            file,
            resolved: Vec::new(),
        })
    }

    fn opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(s) => Some(
                    s.parse::<T>()
                        .map_err(|e| Error::Config(format!("config key `{key}`: {e}")))?,
                ),
                None => None,
            },
        };
        if let Some(v) = &value {
            self.resolved.push((key.to_owned(), v.to_string()));
        }
        Ok(value)
    }

    fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display + Clone,
        T::Err: Display,
    {
        match self.opt(key, flag)? {
            Some(v) => Ok(v),
            None => {
                self.resolved.push((key.to_owned(), default.to_string()));
                Ok(default)
            }
        }
    }

    fn print(&self, command: &str) {
        let mut err = std::io::stderr().lock();
        let _ = writeln!(err, "[{command}] effective configuration:");
        for (k, v) in &self.resolved {
            let _ = writeln!(err, "  {k} = {v}");
        }
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(|v| v.trim().to_owned()).filter(|v| !v.is_empty()).collect()
}

fn parse_split(s: &str) -> Result<Option<Split>> {
    match s {
        "all" => Ok(None),
        other => other.parse().map(Some),
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn load_checkpoint(path: &Path, task: Option<Task>) -> Result<Checkpoint> {
    match task {
        Some(t) => Checkpoint::load_for_task(path, t),
        None => Checkpoint::load(path),
    }
}

fn load_split(manifest: &Path, split: Option<Split>, languages: Option<&str>) -> Result<(CorpusManifest, Vec<crate::audio::AudioSample>)> {
    let m = CorpusManifest::read(manifest)?;
    let langs = languages.map(split_list);
    let m = m.filter(split, langs.as_deref());
    let samples = m.load_samples()?;
    Ok((m, samples))
}

fn run_synth(args: SynthArgs) -> Result<()> {
    let mut r = Resolver::new(None)?;
    let task = r.get("task", args.task, Task::emotion())?;
    let seed = r.get("seed", args.seed, 0)?;
    let train_n = r.get("train-per-class", args.train_per_class, 50)?;
    let test_n = r.get("test-per-class", args.test_per_class, 10)?;
    let duration = r.get("duration", args.duration, 1.0)?;
    r.resolved.push(("out".into(), args.out.display().to_string()));
    r.print("synth");
    let mut spec = if task.is_emotion() {
        CorpusSpec::emotion(train_n, test_n, seed)
    } else {
        CorpusSpec::personality(train_n, test_n, seed)
    };
    spec.duration_s = duration;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let manifest = generate_corpus(&spec, &args.out)?;
    eprintln!("wrote {} utterances to {}", manifest.rows.len(), args.out.display());
    Ok(())
}

fn report_run(record: &RunRecord) {
    for e in &record.epochs {
        eprintln!(
            "epoch {:>3}  lr {:.2e}  train {:.5}  dev {:.5}",
            e.epoch, e.lr, e.train_loss, e.dev_loss
        );
    }
    eprintln!(
        "best epoch {:?}, stopped {} at epoch {}",
        record.best_epoch,
        if record.stopped_early { "early" } else { "at the epoch limit" },
        record.stopping_epoch
    );
}

fn run_train(args: TrainArgs) -> Result<()> {
    let mut r = Resolver::new(args.config.as_deref())?;
    let task = r.get("task", args.task, Task::emotion())?;
    let front_end = r.get("front-end", args.front_end, FrontEnd::Raw)?;
    let manifest = r
        .opt("manifest", args.manifest.map(|p| p.display().to_string()))?
        .ok_or_else(|| Error::Config("--manifest is required".into()))?;
    let out = r
        .opt("out", args.out.map(|p| p.display().to_string()))?
        .ok_or_else(|| Error::Config("--out is required".into()))?;
    let languages = r.opt("languages", args.languages)?;
    let seed = r.get("seed", args.seed, 0u64)?;
    let filters = r.get("filters", args.filters, 512usize)?;

    let (m, samples) = load_split(Path::new(&manifest), Some(Split::Train), languages.as_deref())?;
    if m.task != task {
        return Err(Error::TaskMismatch {
            expected: task.name().into(),
            found: m.task.name().into(),
        });
    }
    let multilingual = m.languages().len() > 1;
    let mut tc = TrainConfig::for_task(task, multilingual);
    tc.seed = seed;
    tc.initial_lr = r.get("lr", args.lr, tc.initial_lr)?;
    tc.minibatch = r.get("minibatch", args.minibatch, tc.minibatch)?;
    tc.volume_rand_a = r.get("volume-rand-a", args.volume_rand_a, tc.volume_rand_a)?;
    tc.max_epochs = r.get("epochs", args.epochs, tc.max_epochs)?;
    tc.early_stop_patience = r.get("patience", args.patience, tc.early_stop_patience)?;
    let no_augment = r.get("no-augment", args.no_augment.then_some(true), false)?;
    tc.augment = !no_augment;
    r.print("train");

    let config = ModelConfig::new(task).with_width(filters).with_front_end(front_end);
    let outcome = train(&config, &tc, &samples)?;
    report_run(&outcome.record);
    let ck = Checkpoint {
        config,
        params: outcome.params,
        languages: outcome.record.languages.clone(),
        label_transform: outcome.label_transform,
        run_record: Some(outcome.record),
    };
    ck.save(Path::new(&out))?;
    eprintln!("saved {out}");
    Ok(())
}

fn run_finetune(args: TrainArgs) -> Result<()> {
    let mut r = Resolver::new(args.config.as_deref())?;
    let checkpoint = r
        .opt("checkpoint", args.checkpoint.map(|p| p.display().to_string()))?
        .ok_or_else(|| Error::Config("--checkpoint is required".into()))?;
    let manifest = r
        .opt("manifest", args.manifest.map(|p| p.display().to_string()))?
        .ok_or_else(|| Error::Config("--manifest is required".into()))?;
    let out = r
        .opt("out", args.out.map(|p| p.display().to_string()))?
        .ok_or_else(|| Error::Config("--out is required".into()))?;
    let language = r
        .opt("languages", args.languages)?
        .ok_or_else(|| Error::Config("--languages must name the one language to fine-tune on".into()))?;
    let task = r.opt("task", args.task)?;
    let joint = load_checkpoint(Path::new(&checkpoint), task)?;

    let mut tc = match &joint.run_record {
        Some(rec) => TrainConfig::for_finetune(rec),
        None => {
            let mut t = TrainConfig::for_task(joint.config.task, false);
            t.lr_halving_epochs.clear();
            t
        }
    };
    tc.seed = r.get("seed", args.seed, tc.seed)?;
    tc.initial_lr = r.get("lr", args.lr, tc.initial_lr)?;
    tc.minibatch = r.get("minibatch", args.minibatch, tc.minibatch)?;
    tc.volume_rand_a = r.get("volume-rand-a", args.volume_rand_a, tc.volume_rand_a)?;
    tc.max_epochs = r.get("epochs", args.epochs, tc.max_epochs)?;
    tc.early_stop_patience = r.get("patience", args.patience, tc.early_stop_patience)?;
    if args.no_augment {
        tc.augment = false;
    }
    r.print("finetune");

    let (_, samples) = load_split(Path::new(&manifest), Some(Split::Train), Some(&language))?;
    let outcome = finetune(
        &joint.params,
        &joint.config,
        &tc,
        &samples,
        joint.label_transform.as_ref(),
    )?;
    report_run(&outcome.record);
    let ck = Checkpoint {
        config: joint.config,
        params: outcome.params,
        languages: outcome.record.languages.clone(),
        label_transform: outcome.label_transform,
        run_record: Some(outcome.record),
    };
    ck.save(Path::new(&out))?;
    eprintln!("saved {out}");
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let mut r = Resolver::new(None)?;
    r.resolved.push(("checkpoint".into(), args.checkpoint.display().to_string()));
    r.resolved.push(("manifest".into(), args.manifest.display().to_string()));
    r.resolved.push(("split".into(), args.split.clone()));
    r.print("eval");
    let ck = load_checkpoint(&args.checkpoint, args.task)?;
    let (m, samples) = load_split(&args.manifest, parse_split(&args.split)?, args.languages.as_deref())?;
    ck.expect_task(m.task)?;
    let report = evaluate(&ck, &samples)?;
    eprint!("{}", report.to_text());
    write_output(args.out.as_deref(), &report.to_csv()?)
}

fn run_predict(args: PredictArgs) -> Result<()> {
    let ck = load_checkpoint(&args.checkpoint, args.task)?;
    let bytes = std::fs::read(&args.wav).map_err(|e| Error::io(&args.wav, e))?;
    let sample = decode_sample(&bytes)?;
    let pred = predict(&ck.params, &ck.config, &sample)?;
    let mut text = String::new();
    match ck.config.task {
        Task::Emotion { .. } => {
            text.push_str("class,probability\n");
            for (i, p) in pred.values().iter().enumerate() {
                let name = Emotion::from_index(i).map_or_else(|| i.to_string(), |e| e.name().to_owned());
                text.push_str(&format!("{name},{p}\n"));
            }
        }
        Task::Personality { .. } => {
            // report in the label space of the first training language
            let values = match (&ck.label_transform, ck.languages.first()) {
                (Some(t), Some(lang)) => t.inverse(lang, pred.values())?,
                _ => pred.values().to_vec(),
            };
            text.push_str("trait,score\n");
            for (name, v) in TRAITS.iter().zip(values) {
                text.push_str(&format!("{name},{v}\n"));
            }
        }
    }
    write_output(None, &text)
}

fn run_analyze_filters(args: AnalyzeFiltersArgs) -> Result<()> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    if ck.config.front_end != FrontEnd::Raw {
        return Err(Error::Config("filter analysis needs a raw-waveform model".into()));
    }
    let response = filter_frequency_response(&ck.params.conv_stack[0], args.fft_len)?;
    write_output(args.out.as_deref(), &response.to_csv()?)
}

fn run_analyze_activations(args: EvalArgs) -> Result<()> {
    let ck = load_checkpoint(&args.checkpoint, args.task)?;
    let (_, samples) = load_split(&args.manifest, parse_split(&args.split)?, args.languages.as_deref())?;
    let rows = samples
        .iter()
        .map(|s| {
            let s = resample_to_target(s, TARGET_RATE)?;
            let trace = trace_sample(&ck.params, &ck.config, &s)?;
            Ok((s.source_id.clone(), activation_rms(&trace, &ck.config)))
        })
        .collect::<Result<Vec<_>>>()?;
    write_output(args.out.as_deref(), &activation_csv(&rows)?)
}

fn run_export_embeddings(args: EmbeddingArgs) -> Result<()> {
    let ck = load_checkpoint(&args.eval.checkpoint, args.eval.task)?;
    let layers = match &args.layers {
        Some(list) => split_list(list)
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<EmbeddingLayer>>>()?,
        None => EmbeddingLayer::all(&ck.config),
    };
    let (_, samples) = load_split(
        &args.eval.manifest,
        parse_split(&args.eval.split)?,
        args.eval.languages.as_deref(),
    )?;
    let rows = export_embeddings(&ck.params, &ck.config, &samples, &layers)?;
    write_output(args.eval.out.as_deref(), &embeddings_csv(&rows)?)
}

fn init_threads(flag: Option<usize>) -> Result<()> {
    let threads = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.parse()
                    .map_err(|_| Error::Config(format!("{THREADS_ENV} must be an integer, got `{v}`")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        // a pool built earlier in the same process wins; that only happens in tests
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        eprintln!("threads = {n}");
    }
    Ok(())
}

pub fn dispatch(cli: Cli) -> Result<()> {
    init_threads(cli.threads)?;
    match cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Train(a) => run_train(a),
        Command::Finetune(a) => run_finetune(a),
        Command::Eval(a) => run_eval(a),
        Command::Predict(a) => run_predict(a),
        Command::AnalyzeFilters(a) => run_analyze_filters(a),
        Command::AnalyzeActivations(a) => run_analyze_activations(a),
        Command::ExportEmbeddings(a) => run_export_embeddings(a),
    }
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
