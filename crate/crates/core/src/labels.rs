//! Affect label vocabularies shared by the corpus, training and evaluation code.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Anger,
    Sadness,
    Happiness,
    Anxiety,
}

impl Emotion {
    pub const ALL: [Emotion; 4] = [
        Emotion::Anger,
        Emotion::Sadness,
        Emotion::Happiness,
        Emotion::Anxiety,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Anger => "anger",
            Emotion::Sadness => "sadness",
            Emotion::Happiness => "happiness",
            Emotion::Anxiety => "anxiety",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s.trim())
            .ok_or_else(|| Error::Manifest(format!("unknown emotion `{s}`")))
    }
}

/// Big Five trait column names, in label-vector order.
pub const TRAITS: [&str; 5] = ["ext", "agr", "con", "neu", "ope"];

/// Five trait scores in `[0, 1]`, ordered as [`TRAITS`].
pub type TraitScores = [f64; 5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Label {
    Emotion(Emotion),
    Personality(TraitScores),
    None,
}

impl Label {
    pub fn emotion(&self) -> Option<Emotion> {
        match self {
            Label::Emotion(e) => Some(*e),
            _ => None,
        }
    }

    pub fn traits(&self) -> Option<&TraitScores> {
        match self {
            Label::Personality(t) => Some(t),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Emotion(e) => write!(f, "{e}"),
            Label::Personality(t) => {
                let parts: Vec<String> = t.iter().map(|v| v.to_string()).collect();
                f.write_str(&parts.join(";"))
            }
            Label::None => f.write_str(""),
        }
    }
}
