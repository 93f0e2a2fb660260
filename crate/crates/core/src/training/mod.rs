//! Optimization loops, label standardization, data splits and persistence.

mod checkpoint;
mod labels;
mod manifest;
mod split;
mod trainer;

pub use checkpoint::{load_checkpoint, params_digest, save_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};
pub use labels::{fit_label_transform, LabelTransform, TraitAffine, TARGET_CLIP, TARGET_MEAN};
pub use manifest::{CorpusManifest, ManifestRow, Split};
pub use split::{split_dev, split_dev_indices};
pub use trainer::{finetune, train, EpochRecord, RunMode, RunRecord, TrainConfig, TrainOutcome};
pub use trainer::stream_rng;
