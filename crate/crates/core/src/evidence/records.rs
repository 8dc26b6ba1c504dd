use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};
use serde_json::{Map, Value};

use super::EvidenceError;
use crate::ranked::{DocId, QueryId};

type Result<T> = std::result::Result<T, EvidenceError>;

/// A `(start, end)` span in seconds with `0 <= start <= end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timestamp {
    pub start: f64,
    pub end: f64,
}

impl Timestamp {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !start.is_finite() || !end.is_finite() || start < 0.0 {
            return Err(EvidenceError::BadTimestamp(format!("[{start}, {end}]")));
        }
        if start > end {
            return Err(EvidenceError::InvertedTimestamp { start, end });
        }
        Ok(Self { start, end })
    }

    /// Parses span strings such as `10s-15s`, `8-15s` or `0.5 - 3`.
    pub fn parse_span(text: &str) -> Result<Self> {
        static SPAN: OnceLock<Regex> = OnceLock::new();
        let re = SPAN.get_or_init(|| {
            Regex::new(r"^\s*(\d+(?:\.\d+)?)\s*s?\s*-\s*(\d+(?:\.\d+)?)\s*s?\s*$").expect("valid regex")
        });
        let caps = re
            .captures(text)
            .ok_or_else(|| EvidenceError::BadTimestamp(text.to_owned()))?;
        let start: f64 = caps[1].parse().map_err(|_| EvidenceError::BadTimestamp(text.to_owned()))?;
        let end: f64 = caps[2].parse().map_err(|_| EvidenceError::BadTimestamp(text.to_owned()))?;
        Self::new(start, end)
    }

    fn from_value(value: &Value) -> Result<Self> {
        match value {
            Value::String(s) => Self::parse_span(s),
            Value::Array(items) if items.len() == 2 => {
                let num = |v: &Value| v.as_f64().ok_or_else(|| EvidenceError::BadTimestamp(value.to_string()));
                Self::new(num(&items[0])?, num(&items[1])?)
            }
            other => Err(EvidenceError::BadTimestamp(other.to_string())),
        }
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(2))?;
        seq.serialize_element(&self.start)?;
        seq.serialize_element(&self.end)?;
        seq.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Visual,
    Ocr,
    Audio,
}

impl Modality {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "visual" => Ok(Self::Visual),
            "ocr" => Ok(Self::Ocr),
            "audio" => Ok(Self::Audio),
            other => Err(EvidenceError::UnknownModality(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimSource {
    VideoVisual,
    VideoText,
    Transcript,
}

impl ClaimSource {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "video_visual" => Ok(Self::VideoVisual),
            "video_text" => Ok(Self::VideoText),
            "transcript" => Ok(Self::Transcript),
            other => Err(EvidenceError::UnknownSource(other.to_owned())),
        }
    }
}

/// Query-agnostic observation about one video.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoteRecord {
    pub note_id: String,
    pub video_id: DocId,
    pub topic: String,
    pub text: String,
    pub modality: Modality,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<Timestamp>,
}

/// Query-conditioned claim about one video.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClaimRecord {
    pub claim_id: String,
    pub query_id: QueryId,
    pub video_id: DocId,
    pub topic: String,
    pub claim: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evidence: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<ClaimSource>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Artifact {
    Note(NoteRecord),
    Claim(ClaimRecord),
}

impl Artifact {
    /// `note_id` or `claim_id`.
    pub fn id(&self) -> &str {
        match self {
            Artifact::Note(n) => &n.note_id,
            Artifact::Claim(c) => &c.claim_id,
        }
    }

    pub fn video_id(&self) -> &DocId {
        match self {
            Artifact::Note(n) => &n.video_id,
            Artifact::Claim(c) => &c.video_id,
        }
    }

    /// Note `text` or claim `claim`.
    pub fn text(&self) -> &str {
        match self {
            Artifact::Note(n) => &n.text,
            Artifact::Claim(c) => &c.claim,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("in-memory serialization")
    }
}

impl fmt::Display for Artifact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_json())
    }
}

struct Fields<'a>(&'a Map<String, Value>);

impl Fields<'_> {
    fn opt_str(&self, key: &'static str) -> Result<Option<&str>> {
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(other) => Err(EvidenceError::Malformed(format!("`{key}` must be a string, found {other}"))),
        }
    }

    fn req_str(&self, key: &'static str) -> Result<&str> {
        self.opt_str(key)?.ok_or(EvidenceError::MissingField(key))
    }

    fn non_empty(&self, key: &'static str) -> Result<String> {
        let s = self.req_str(key)?;
        if s.trim().is_empty() {
            return Err(EvidenceError::EmptyField(key));
        }
        Ok(s.to_owned())
    }

    fn opt_f64(&self, key: &'static str) -> Result<Option<f64>> {
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| EvidenceError::Malformed(format!("`{key}` must be a number, found {v}"))),
        }
    }

    fn timestamp(&self) -> Result<Option<Timestamp>> {
        match self.0.get("timestamp") {
            None | Some(Value::Null) => Ok(None),
            Some(v) => Timestamp::from_value(v).map(Some),
        }
    }

    fn video_id(&self) -> Result<DocId> {
        let raw = self.req_str("video_id")?;
        DocId::new(raw).map_err(|_| EvidenceError::InvalidId(raw.to_owned()))
    }
}

impl Artifact {
    /// Checks a decoded JSON object against the note or claim schema.
    pub fn from_fields(map: &Map<String, Value>) -> Result<Self> {
        let f = Fields(map);
        if map.contains_key("note_id") {
            Ok(Artifact::Note(NoteRecord {
                note_id: f.non_empty("note_id")?,
                video_id: f.video_id()?,
                topic: f.req_str("topic")?.to_owned(),
                text: f.non_empty("text")?,
                modality: Modality::parse(f.req_str("modality")?)?,
                timestamp: f.timestamp()?,
            }))
        } else if map.contains_key("claim_id") {
            let confidence = f.opt_f64("confidence")?;
            if let Some(c) = confidence {
                if !(0.0..=1.0).contains(&c) {
                    return Err(EvidenceError::ConfidenceOutOfRange(c));
                }
            }
            let query = f.req_str("query_id")?;
            Ok(Artifact::Claim(ClaimRecord {
                claim_id: f.non_empty("claim_id")?,
                query_id: QueryId::new(query).map_err(|_| EvidenceError::InvalidId(query.to_owned()))?,
                video_id: f.video_id()?,
                topic: f.req_str("topic")?.to_owned(),
                claim: f.non_empty("claim")?,
                confidence,
                evidence: f.opt_str("evidence")?.map(str::to_owned),
                source: f.opt_str("source")?.map(ClaimSource::parse).transpose()?,
                timestamp: f.timestamp()?,
            }))
        } else {
            Err(EvidenceError::UnknownRecordKind)
        }
    }
}

fn object(bytes: &[u8]) -> Result<Map<String, Value>> {
    match serde_json::from_slice::<Value>(bytes) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(other) => Err(EvidenceError::Malformed(format!("expected a JSON object, found {other}"))),
        Err(e) => Err(EvidenceError::Malformed(e.to_string())),
    }
}

/// Parses and checks one note or claim record.
pub fn validate(bytes: &[u8]) -> Result<Artifact> {
    Artifact::from_fields(&object(bytes)?)
}

/// A validated record together with its original fields.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceRecord {
    pub artifact: Artifact,
    original: Map<String, Value>,
}

impl EvidenceRecord {
    pub fn from_map(original: Map<String, Value>) -> Result<Self> {
        Ok(Self {
            artifact: Artifact::from_fields(&original)?,
            original,
        })
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        Self::from_map(object(bytes)?)
    }

    /// The record's fields exactly as read, in their original order.
    pub fn original(&self) -> &Map<String, Value> {
        &self.original
    }

    pub fn id(&self) -> &str {
        self.artifact.id()
    }
}

/// Parses an evidence JSON-lines file. Lines may carry a `calibration`
/// block; the remaining fields must form a valid note or claim.
pub fn parse_evidence_jsonl(bytes: &[u8]) -> Result<Vec<super::CalibratedArtifact>> {
    let text = std::str::from_utf8(bytes).map_err(|_| EvidenceError::Malformed("invalid UTF-8".into()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| super::CalibratedArtifact::parse_line(line.as_bytes()).map_err(|e| e.at_line(i + 1)))
        .collect()
}

pub fn write_evidence_jsonl<'a>(items: impl IntoIterator<Item = &'a super::CalibratedArtifact>) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        out.extend_from_slice(item.to_json().as_bytes());
        out.push(b'\n');
    }
    out
}
