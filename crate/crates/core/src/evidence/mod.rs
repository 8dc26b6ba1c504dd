//! Extracted-evidence records (notes and claims), calibration payloads,
//! prediction attachment and support-probability filtering.
//!
//! Evidence files are JSON lines. A line holds one note or claim, optionally
//! with a `calibration` object keyed by backend label:
//!
//! ```json
//! {"claim_id": "c1", "...": "...", "calibration": {"unli": {"prob": 0.95, "raw": {"raw_output": "<answer>0.95</answer>"}}}}
//! ```
//!
//! The fields of the original record are carried through untouched; only the
//! `calibration` key is ever added or replaced.

mod calibration;
mod records;

use thiserror::Error;

pub use calibration::{
    attach, filter_by_threshold, parse_answer_tag, parse_calibration_block, AttachOutcome, AuditRecord,
    CalibratedArtifact, CalibrationPayload, Dropped, FilterOutcome, Orphan, OrphanReason, Prediction,
    DEFAULT_BACKEND,
};
pub use records::{
    parse_evidence_jsonl, validate, write_evidence_jsonl, Artifact, ClaimRecord, ClaimSource, EvidenceRecord,
    Modality, NoteRecord, Timestamp,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnswerTagError {
    #[error("no <answer>...</answer> tag found")]
    NoTag,
    #[error("answer tag content {0:?} is not a number")]
    NotNumeric(String),
    #[error("answer {0} is outside [0, 1]")]
    OutOfRange(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvidenceError {
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("record is neither a note (note_id) nor a claim (claim_id)")]
    UnknownRecordKind,
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("field `{0}` must not be empty")]
    EmptyField(&'static str),
    #[error("invalid identifier {0:?}")]
    InvalidId(String),
    #[error("unknown modality {0:?} (expected visual, ocr or audio)")]
    UnknownModality(String),
    #[error("unknown source {0:?} (expected video_visual, video_text or transcript)")]
    UnknownSource(String),
    #[error("confidence {0} is outside [0, 1]")]
    ConfidenceOutOfRange(f64),
    #[error("timestamp start {start} is after end {end}")]
    InvertedTimestamp { start: f64, end: f64 },
    #[error("unreadable timestamp {0:?}")]
    BadTimestamp(String),
    #[error("probability {0} is outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("threshold {0} is outside [0, 1]")]
    ThresholdOutOfRange(f64),
    #[error(transparent)]
    AnswerTag(#[from] AnswerTagError),
    #[error("prediction has neither an artifact id nor a (video_id, text) pair")]
    UnkeyedPrediction,
    #[error("prediction carries neither `prob` nor `raw_output`")]
    NoProbability,
    #[error("predictions {first} and {second} both claim artifact {artifact} for backend {backend}")]
    Conflict {
        artifact: String,
        backend: String,
        first: usize,
        second: usize,
    },
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<EvidenceError>,
    },
}

impl EvidenceError {
    pub(crate) fn at_line(self, line: usize) -> Self {
        EvidenceError::Line {
            line,
            source: Box::new(self),
        }
    }

    /// The error without any line wrapper.
    pub fn root(&self) -> &EvidenceError {
        match self {
            EvidenceError::Line { source, .. } => source.root(),
            other => other,
        }
    }
}
