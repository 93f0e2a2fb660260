//! Binary checkpoint: `AFE1`, version, JSON header, named f32 tensors, CRC-32.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::labels::LabelTransform;
use super::trainer::RunRecord;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams, Task};

pub const MAGIC: &[u8; 4] = b"AFE1";
pub const FORMAT_VERSION: u32 = 1;

/// Everything needed to run, evaluate, or continue a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub languages: Vec<String>,
    pub label_transform: Option<LabelTransform>,
    pub run_record: Option<RunRecord>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    task: String,
    model_config: ModelConfig,
    languages: Vec<String>,
    label_transform: Option<LabelTransform>,
    run_record: Option<RunRecord>,
    run_record_digest: Option<String>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// SHA-256 over the little-endian f32 images of every tensor, in checkpoint order.
pub fn params_digest(params: &ModelParams) -> String {
    let mut h = Sha256::new();
    for t in params.tensors() {
        h.update(t.name.as_bytes());
        for v in t.data {
            h.update((*v as f32).to_le_bytes());
        }
    }
    hex(&h.finalize())
}

fn u32_len(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Checkpoint(format!("{what} too large ({n})")))
}

impl Checkpoint {
    pub fn task(&self) -> Task {
        self.config.task
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.params.check_shapes(&self.config)?;
        let run_record_digest = match &self.run_record {
            Some(r) => Some(sha256_hex(&serde_json::to_vec(r)?)),
            None => None,
        };
        let header = Header {
            task: self.config.task.name().to_owned(),
            model_config: self.config.clone(),
            languages: self.languages.clone(),
            label_transform: self.label_transform.clone(),
            run_record: self.run_record.clone(),
            run_record_digest,
        };
        let header = serde_json::to_vec(&header)?;

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&u32_len(header.len(), "header")?.to_le_bytes());
        out.extend_from_slice(&header);
        for t in self.params.tensors() {
            out.extend_from_slice(&u32_len(t.name.len(), "tensor name")?.to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&u32_len(t.dims.len(), "rank")?.to_le_bytes());
            for &d in &t.dims {
                out.extend_from_slice(&u32_len(d, "dimension")?.to_le_bytes());
            }
            for &v in t.data {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(Error::Checkpoint("not an AFE1 checkpoint".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let version = u32::from_le_bytes(body[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        if crc32fast::hash(body) != stored {
            return Err(Error::Checkpoint("checksum mismatch: file is corrupted".into()));
        }

        let mut pos = 8;
        let mut take = |n: usize| -> Result<&[u8]> {
            let end = pos + n;
            if end > body.len() {
                return Err(Error::Checkpoint("truncated checkpoint".into()));
            }
            let s = &body[pos..end];
            pos = end;
            Ok(s)
        };
        let read_u32 = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize;

        let header_len = read_u32(take(4)?);
        let header: Header = serde_json::from_slice(take(header_len)?)?;
        if header.task != header.model_config.task.name() {
            return Err(Error::Checkpoint(format!(
                "header task `{}` disagrees with model config `{}`",
                header.task,
                header.model_config.task.name()
            )));
        }
        match (&header.run_record, &header.run_record_digest) {
            (Some(r), Some(d)) => {
                if &sha256_hex(&serde_json::to_vec(r)?) != d {
                    return Err(Error::Checkpoint("run record digest mismatch".into()));
                }
            }
            (None, None) => {}
            _ => return Err(Error::Checkpoint("run record digest missing".into())),
        }

        let mut tensors = Vec::new();
        while let Ok(len_bytes) = take(4) {
            let name_len = read_u32(len_bytes);
            let name = String::from_utf8(take(name_len)?.to_vec())
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            let rank = read_u32(take(4)?);
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(read_u32(take(4)?));
            }
            let count: usize = dims.iter().product();
            let raw = take(count * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
                .collect();
            tensors.push((name, dims, data));
        }
        let params = ModelParams::from_tensors(&header.model_config, tensors)?;
        Ok(Self {
            config: header.model_config,
            params,
            languages: header.languages,
            label_transform: header.label_transform,
            run_record: header.run_record,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads and checks that the checkpoint was trained for `task`.
    pub fn load_for_task(path: &Path, task: Task) -> Result<Self> {
        let ck = Self::load(path)?;
        ck.expect_task(task)?;
        Ok(ck)
    }

    pub fn expect_task(&self, task: Task) -> Result<()> {
        if self.config.task != task {
            return Err(Error::TaskMismatch {
                expected: task.name().into(),
                found: self.config.task.name().into(),
            });
        }
        Ok(())
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    checkpoint.save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path)
}
