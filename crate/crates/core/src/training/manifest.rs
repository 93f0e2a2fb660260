//! Corpus manifest CSV: one row per utterance.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audio::{decode_sample, resample_to_target, AudioSample, TARGET_RATE};
use crate::error::{Error, Result};
use crate::labels::{Label, TRAITS};
use crate::model::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Manifest(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub path: String,
    pub language: String,
    pub split: Split,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub task: Task,
    pub rows: Vec<ManifestRow>,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

const EMOTION_HEADER: [&str; 4] = ["path", "language", "split", "emotion"];

fn personality_header() -> Vec<&'static str> {
    let mut h = vec!["path", "language", "split"];
    h.extend(TRAITS);
    h
}

impl CorpusManifest {
    pub fn new(task: Task, base_dir: impl Into<PathBuf>) -> Self {
        Self {
            task,
            rows: Vec::new(),
            base_dir: base_dir.into(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: PathBuf) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
        let task = if header == EMOTION_HEADER {
            Task::emotion()
        } else if header == personality_header() {
            Task::personality()
        } else {
            return Err(Error::Manifest(format!(
                "unrecognized header {header:?}; expected `{}` or `{}`",
                EMOTION_HEADER.join(","),
                personality_header().join(",")
            )));
        };
        let mut rows = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let field = |i: usize| record.get(i).unwrap_or("").to_owned();
            let label = match task {
                Task::Emotion { .. } => Label::Emotion(field(3).parse()?),
                Task::Personality { .. } => {
                    let mut scores = [0.0; 5];
                    for (t, s) in scores.iter_mut().enumerate() {
                        let raw = field(3 + t);
                        *s = raw.parse::<f64>().map_err(|_| {
                            Error::Manifest(format!("row {}: `{raw}` is not a number", line + 2))
                        })?;
                        if !(0.0..=1.0).contains(s) {
                            return Err(Error::Manifest(format!(
                                "row {}: trait {} = {} outside [0, 1]",
                                line + 2,
                                TRAITS[t],
                                s
                            )));
                        }
                    }
                    Label::Personality(scores)
                }
            };
            rows.push(ManifestRow {
                path: field(0),
                language: field(1),
                split: field(2).parse()?,
                label,
            });
        }
        Ok(Self {
            task,
            rows,
            base_dir,
        })
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        match self.task {
            Task::Emotion { .. } => w.write_record(EMOTION_HEADER)?,
            Task::Personality { .. } => w.write_record(personality_header())?,
        }
        for row in &self.rows {
            let mut rec = vec![row.path.clone(), row.language.clone(), row.split.to_string()];
            match &row.label {
                Label::Emotion(e) => rec.push(e.to_string()),
                Label::Personality(t) => rec.extend(t.iter().map(|v| v.to_string())),
                Label::None => return Err(Error::Manifest(format!("row `{}` has no label", row.path))),
            }
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Manifest(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Manifest(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    /// Distinct languages in first-appearance order.
    pub fn languages(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.language) {
                out.push(r.language.clone());
            }
        }
        out
    }

    pub fn filter(&self, split: Option<Split>, languages: Option<&[String]>) -> Self {
        Self {
            task: self.task,
            base_dir: self.base_dir.clone(),
            rows: self
                .rows
                .iter()
                .filter(|r| split.is_none_or(|s| r.split == s))
                .filter(|r| languages.is_none_or(|ls| ls.contains(&r.language)))
                .cloned()
                .collect(),
        }
    }

    pub fn resolve(&self, row: &ManifestRow) -> PathBuf {
        let p = Path::new(&row.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Decodes every row and brings it to 8 kHz.
    pub fn load_samples(&self) -> Result<Vec<AudioSample>> {
        self.rows
            .iter()
            .map(|row| {
                let path = self.resolve(row);
                let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
                let decoded = decode_sample(&bytes).map_err(|e| match e {
                    Error::Wav(msg) => Error::Wav(format!("{}: {msg}", path.display())),
                    other => other,
                })?;
                let mut sample = resample_to_target(&decoded, TARGET_RATE)?;
                sample.language = row.language.clone();
                sample.label = row.label.clone();
                sample.source_id = row.path.clone();
                Ok(sample)
            })
            .collect()
    }
}
