//! Beat extraction, noise injection and dataset splits.

mod container;
mod noise;
mod split;

pub use container::{read_beats, read_beats_file, write_beats, write_beats_file};
pub use noise::{inject_noise, inject_noise_all, measure_snr, snr_db, NoiseSpec};
pub use split::{balance_pool, split_dataset, split_labels, CvMode, Fold, FoldPlan};

use serde::{Deserialize, Serialize};

use crate::wfdb::{Annotation, Record, WfdbError};

/// Samples per beat window.
pub const BEAT_LEN: usize = 820;
/// Samples before the R peak; the window is `[r - 410, r + 410)`.
pub const PRE_R: usize = BEAT_LEN / 2;

pub type Result<T> = std::result::Result<T, BeatError>;

#[derive(Debug, thiserror::Error)]
pub enum BeatError {
    #[error("unknown annotation symbol {0:?}")]
    UnknownSymbol(char),
    #[error("beat has {0} samples, expected {BEAT_LEN}")]
    BadLength(usize),
    #[error("beat contains non-finite samples")]
    NonFinite,
    #[error("signal power is zero; SNR is undefined")]
    ZeroPowerSignal,
    #[error("noisy and clean signals are identical; SNR is unbounded")]
    IdenticalSignals,
    #[error("noise can only be injected into clean beats")]
    AlreadyNoisy,
    #[error("SNR {0} dB is outside [0, 60]")]
    SnrOutOfRange(f64),
    #[error("signals differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("insufficient data: need {needed} beats, have {available}")]
    InsufficientData { needed: usize, available: usize },
    #[error("invalid fold plan: {0}")]
    InvalidPlan(String),
    #[error("bad beat container: {0}")]
    Container(String),
    #[error(transparent)]
    Wfdb(#[from] WfdbError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Binary beat class. Abnormal is any beat type other than normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Abnormal,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Normal, Label::Abnormal];

    /// Class index used as network output: normal 0, abnormal 1.
    pub fn index(self) -> usize {
        match self {
            Label::Normal => 0,
            Label::Abnormal => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Normal),
            1 => Some(Label::Abnormal),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelClass {
    Beat(Label),
    Skip,
}

/// Maps a WFDB annotation mnemonic onto the binary beat classes.
pub fn map_label(symbol: char) -> Result<LabelClass> {
    match symbol {
        'N' => Ok(LabelClass::Beat(Label::Normal)),
        'L' | 'R' | 'V' | 'A' | 'F' | 'E' | '/' | 'f' | 'j' | 'a' | 'J' | 'S' | 'e' | 'Q' | '!'
        | 'n' | 'B' | 'r' => Ok(LabelClass::Beat(Label::Abnormal)),
        '+' | '~' | '|' | 'x' | '"' | 's' | 'T' | '*' | 'D' | '=' | 'p' | '^' | 't' | 'u' | '?'
        | '[' | ']' | '@' | '(' | ')' => Ok(LabelClass::Skip),
        other => Err(BeatError::UnknownSymbol(other)),
    }
}

/// One R-centered window of exactly [`BEAT_LEN`] millivolt samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beat {
    samples: Vec<f32>,
    pub label: Label,
    pub record_name: String,
    pub r_index: u64,
    /// `None` for a clean beat.
    pub snr_db: Option<f32>,
}

impl Beat {
    pub fn new(samples: Vec<f32>, label: Label, record_name: impl Into<String>, r_index: u64) -> Result<Self> {
        if samples.len() != BEAT_LEN {
            return Err(BeatError::BadLength(samples.len()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(BeatError::NonFinite);
        }
        Ok(Beat {
            samples,
            label,
            record_name: record_name.into(),
            r_index,
            snr_db: None,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn is_clean(&self) -> bool {
        self.snr_db.is_none()
    }

    pub(crate) fn with_samples(&self, samples: Vec<f32>, snr_db: Option<f32>) -> Result<Beat> {
        let mut b = Beat::new(samples, self.label, self.record_name.clone(), self.r_index)?;
        b.snr_db = snr_db;
        Ok(b)
    }
}

/// Cuts beats from channel 0 of `record`.
pub fn segment_beats(record: &Record, annotations: &[Annotation]) -> Result<Vec<Beat>> {
    segment_beats_channel(record, 0, annotations)
}

/// Cuts one beat per beat-type annotation, edge-padding near the record ends.
pub fn segment_beats_channel(
    record: &Record,
    channel: usize,
    annotations: &[Annotation],
) -> Result<Vec<Beat>> {
    let signal = record.channel(channel)?;
    let n = signal.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut beats = Vec::new();
    for ann in annotations {
        let label = match map_label(ann.symbol)? {
            LabelClass::Beat(l) => l,
            LabelClass::Skip => continue,
        };
        let start = ann.sample_index as i64 - PRE_R as i64;
        let samples = (0..BEAT_LEN as i64)
            .map(|k| signal[(start + k).clamp(0, n as i64 - 1) as usize] as f32)
            .collect();
        beats.push(Beat::new(samples, label, record.name(), ann.sample_index)?);
    }
    Ok(beats)
}

/// Counts beats per class: `(normal, abnormal)`.
pub fn class_counts(beats: &[Beat]) -> (usize, usize) {
    let abnormal = beats.iter().filter(|b| b.label == Label::Abnormal).count();
    (beats.len() - abnormal, abnormal)
}
