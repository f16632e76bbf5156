//! Named scale settings. `paper` is the full-size geometry; `toy` is small
//! enough to train on a desktop CPU.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::StftConfig;
use crate::error::{Error, Result};

/// Environment variable naming the default preset for the command line.
pub const PRESET_ENV: &str = "REVERBKIT_PRESET";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetName {
    Paper,
    Toy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: PresetName,
    pub stft: StftConfig,
    /// Side of the square RGB-D input.
    pub image_size: usize,
    /// Encoder feature length.
    pub features: usize,
    /// Noise length appended to the features.
    pub noise: usize,
    pub batch_size: usize,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub lr_encoder: f64,
    pub lambda_l1: f64,
    pub lambda_t60: f64,
}

impl Preset {
    pub const fn paper() -> Self {
        Self {
            name: PresetName::Paper,
            stft: StftConfig::paper(),
            image_size: 224,
            features: 365,
            noise: 147,
            batch_size: 16,
            lr_generator: 4e-4,
            lr_discriminator: 2e-4,
            lr_encoder: 1e-5,
            lambda_l1: 100.0,
            lambda_t60: 100.0,
        }
    }

    pub const fn toy() -> Self {
        Self {
            name: PresetName::Toy,
            stft: StftConfig::toy(),
            image_size: 64,
            features: 96,
            noise: 32,
            ..Self::paper()
        }
    }

    pub fn from_name(name: PresetName) -> Self {
        match name {
            PresetName::Paper => Self::paper(),
            PresetName::Toy => Self::toy(),
        }
    }

    pub fn latent(&self) -> usize {
        self.features + self.noise
    }

    /// `(frames, bins)` of the generated log-magnitude spectrogram.
    pub fn spectrogram_shape(&self) -> (usize, usize) {
        (self.stft.frames(), self.stft.trimmed_bins())
    }
}

impl PresetName {
    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::Paper => "paper",
            PresetName::Toy => "toy",
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(PresetName::Paper),
            "toy" => Ok(PresetName::Toy),
            other => Err(Error::invalid("preset", format!("unknown preset `{other}` (paper, toy)"))),
        }
    }
}
