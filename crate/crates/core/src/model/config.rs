use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SpectrogramConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Emotion { classes: usize },
    Personality { traits: usize },
}

impl Task {
    pub fn emotion() -> Self {
        Task::Emotion { classes: 4 }
    }

    pub fn personality() -> Self {
        Task::Personality { traits: 5 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::Emotion { .. } => "emotion",
            Task::Personality { .. } => "personality",
        }
    }

    pub fn output_dim(&self) -> usize {
        match *self {
            Task::Emotion { classes } => classes,
            Task::Personality { traits } => traits,
        }
    }

    pub fn is_emotion(&self) -> bool {
        matches!(self, Task::Emotion { .. })
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "emotion" => Ok(Task::emotion()),
            "personality" => Ok(Task::personality()),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrontEnd {
    Raw,
    Spectrogram,
}

impl FrontEnd {
    pub fn name(&self) -> &'static str {
        match self {
            FrontEnd::Raw => "raw",
            FrontEnd::Spectrogram => "spectrogram",
        }
    }
}

impl fmt::Display for FrontEnd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FrontEnd {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(FrontEnd::Raw),
            "spectrogram" | "spec" => Ok(FrontEnd::Spectrogram),
            other => Err(Error::Config(format!("unknown front-end `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirstLayerSpec {
    pub kernel: usize,
    pub stride: usize,
    pub filters: usize,
}

/// Position of one conv layer's output frames on the waveform time axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameGeometry {
    /// Samples between consecutive output frames.
    pub hop: usize,
    /// Samples covered by one output frame.
    pub span: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub task: Task,
    pub front_end: FrontEnd,
    pub first_layer: FirstLayerSpec,
    pub higher_layers: Vec<ConvSpec>,
    pub hidden_width: usize,
    pub fc_width: usize,
    pub spectrogram: SpectrogramConfig,
    /// Input scale against the 16-bit integer amplitude (raw front-end).
    pub input_scale_k: f64,
}

impl ModelConfig {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            front_end: FrontEnd::Raw,
            first_layer: FirstLayerSpec {
                kernel: 200,
                stride: 100,
                filters: 512,
            },
            higher_layers: vec![
                ConvSpec { kernel: 8, stride: 2 },
                ConvSpec { kernel: 4, stride: 2 },
                ConvSpec { kernel: 4, stride: 2 },
                ConvSpec { kernel: 4, stride: 2 },
            ],
            hidden_width: 512,
            fc_width: 512,
            spectrogram: SpectrogramConfig::default(),
            input_scale_k: 5e-4,
        }
    }

    pub fn emotion() -> Self {
        Self::new(Task::emotion())
    }

    pub fn personality() -> Self {
        Self::new(Task::personality())
    }

    /// Same geometry with every layer width set to `filters`.
    pub fn with_width(mut self, filters: usize) -> Self {
        self.first_layer.filters = filters;
        self.hidden_width = filters;
        self.fc_width = filters;
        self
    }

    pub fn with_front_end(mut self, front_end: FrontEnd) -> Self {
        self.front_end = front_end;
        self
    }

    /// The spectrogram baseline: fixed power spectra replace the first conv layer.
    pub fn spectrogram_variant(&self) -> Self {
        self.clone().with_front_end(FrontEnd::Spectrogram)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("{what} must be >= 1")));
        if self.higher_layers.is_empty() {
            return Err(Error::Config("at least one higher conv layer is required".into()));
        }
        if self.first_layer.kernel == 0 || self.first_layer.stride == 0 {
            return bad("first-layer kernel and stride");
        }
        if self.first_layer.filters == 0 {
            return bad("first-layer filters");
        }
        if self.higher_layers.iter().any(|l| l.kernel == 0 || l.stride == 0) {
            return bad("higher-layer kernel and stride");
        }
        if self.hidden_width == 0 || self.fc_width == 0 {
            return bad("hidden and fc widths");
        }
        if self.task.output_dim() == 0 {
            return bad("task output dimension");
        }
        if self.spectrogram.fft_size < self.spectrogram.window_len
            || self.spectrogram.hop == 0
            || self.spectrogram.window_len == 0
        {
            return Err(Error::Config("invalid spectrogram geometry".into()));
        }
        Ok(())
    }

    /// Channels of the tensor fed to the conv stack.
    pub fn input_channels(&self) -> usize {
        match self.front_end {
            FrontEnd::Raw => 2,
            FrontEnd::Spectrogram => self.spectrogram.bins(),
        }
    }

    /// `(kernel, stride, in_channels, out_channels)` of every learned conv layer.
    pub fn conv_layers(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut layers = Vec::with_capacity(self.higher_layers.len() + 1);
        let mut channels = self.input_channels();
        if self.front_end == FrontEnd::Raw {
            let f = self.first_layer;
            layers.push((f.kernel, f.stride, channels, f.filters));
            channels = f.filters;
        }
        for l in &self.higher_layers {
            layers.push((l.kernel, l.stride, channels, self.hidden_width));
            channels = self.hidden_width;
        }
        layers
    }

    /// Number of conv outputs that are pooled and fused.
    pub fn pooled_layer_count(&self) -> usize {
        self.conv_layers().len()
    }

    /// Shortest input, in front-end frames, that leaves every conv layer at least one output frame.
    pub fn min_input_frames(&self) -> usize {
        self.conv_layers()
            .iter()
            .rev()
            .fold(1, |r, &(kernel, stride, _, _)| (r - 1) * stride + kernel)
    }

    /// Shortest waveform, in samples, the model accepts.
    pub fn min_input_samples(&self) -> usize {
        let frames = self.min_input_frames();
        match self.front_end {
            FrontEnd::Raw => frames,
            FrontEnd::Spectrogram => (frames - 1) * self.spectrogram.hop + self.spectrogram.window_len,
        }
    }

    /// Waveform geometry of each conv layer's output frames.
    pub fn frame_geometry(&self) -> Vec<FrameGeometry> {
        let (mut hop, mut span) = match self.front_end {
            FrontEnd::Raw => (1, 1),
            FrontEnd::Spectrogram => (self.spectrogram.hop, self.spectrogram.window_len),
        };
        self.conv_layers()
            .iter()
            .map(|&(kernel, stride, _, _)| {
                span += (kernel - 1) * hop;
                hop *= stride;
                FrameGeometry { hop, span }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn receptive_field_recursion() {
        let cfg = ModelConfig::emotion();
        // back to front: 1 -> 4 -> 10 -> 22 -> 50 -> 49*100 + 200
        assert_eq!(cfg.min_input_frames(), 5100);
        assert_eq!(cfg.min_input_samples(), 5100);
        let spec = cfg.spectrogram_variant();
        assert_eq!(spec.min_input_frames(), 50);
        assert_eq!(spec.min_input_samples(), 49 * 100 + 200);
    }

    #[test]
    fn pooled_counts() {
        let cfg = ModelConfig::emotion();
        assert_eq!(cfg.pooled_layer_count(), 5);
        let spec = cfg.spectrogram_variant();
        assert_eq!(spec.pooled_layer_count(), 4);
        assert_eq!(spec.higher_layers, cfg.higher_layers);
        assert_eq!(spec.conv_layers()[0].2, 129);
    }

    #[test]
    fn frame_geometry_matches_receptive_field() {
        let cfg = ModelConfig::emotion();
        let geo = cfg.frame_geometry();
        assert_eq!(geo[0], FrameGeometry { hop: 100, span: 200 });
        assert_eq!(geo.last().unwrap().span, cfg.min_input_samples());
    }

    #[test]
    fn task_parsing() {
        assert_eq!("emotion".parse::<Task>().unwrap(), Task::emotion());
        assert_eq!("personality".parse::<Task>().unwrap().output_dim(), 5);
        assert!("valence".parse::<Task>().is_err());
        assert_eq!("spectrogram".parse::<FrontEnd>().unwrap(), FrontEnd::Spectrogram);
    }
}
