//! Acoustic screening pipeline for short child-speech clips.
//!
//! The crate covers the whole classical pipeline: WAV decoding and
//! resampling ([`audio_io`]), spectral kernels ([`dsp`]), a fixed-order
//! per-clip descriptor ([`features`]), a from-scratch random forest
//! ([`forest`]), subject-grouped cross-validation ([`cv`]) and the
//! evaluation surface ([`metrics`]). [`synth`] generates labelled
//! synthetic corpora for experiments where no real recordings are at hand.

pub mod audio_io;
pub mod cli;
pub mod cv;
pub mod dsp;
pub mod features;
pub mod forest;
pub mod metrics;
pub mod synth;

mod error;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Diagnosis label attached to a clip. `Asd` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "ASD")]
    Asd,
    #[serde(rename = "NT")]
    Nt,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Asd => "ASD",
            Label::Nt => "NT",
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Asd
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Strict parse: only the exact strings `ASD` and `NT` are accepted.
impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ASD" => Ok(Label::Asd),
            "NT" => Ok(Label::Nt),
            other => Err(format!("unknown label {other:?} (expected ASD or NT)")),
        }
    }
}
