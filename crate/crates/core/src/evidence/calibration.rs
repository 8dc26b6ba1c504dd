use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;

use log::warn;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::records::EvidenceRecord;
use super::{AnswerTagError, EvidenceError};
use crate::ranked::DocId;

type Result<T> = std::result::Result<T, EvidenceError>;

/// Backend label used when a prediction names none.
pub const DEFAULT_BACKEND: &str = "unli";

/// Reads the probability from the first `<answer>...</answer>` tag.
/// Values outside `[0, 1]` are rejected, never clamped.
pub fn parse_answer_tag(text: &str) -> std::result::Result<f64, AnswerTagError> {
    static TAG: OnceLock<Regex> = OnceLock::new();
    let re = TAG.get_or_init(|| Regex::new(r"(?s)<answer>(.*?)</answer>").expect("valid regex"));
    let inner = re.captures(text).ok_or(AnswerTagError::NoTag)?[1].trim().to_owned();
    let value: f64 = inner.parse().map_err(|_| AnswerTagError::NotNumeric(inner.clone()))?;
    if !value.is_finite() {
        return Err(AnswerTagError::NotNumeric(inner));
    }
    if !(0.0..=1.0).contains(&value) {
        return Err(AnswerTagError::OutOfRange(value));
    }
    Ok(value)
}

/// Support probability from one calibration backend.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationPayload {
    prob: f64,
    pub backend: String,
    pub raw_output: Option<String>,
}

impl CalibrationPayload {
    pub fn new(prob: f64, backend: impl Into<String>, raw_output: Option<String>) -> Result<Self> {
        if !(0.0..=1.0).contains(&prob) {
            return Err(EvidenceError::ProbabilityOutOfRange(prob));
        }
        Ok(Self {
            prob,
            backend: backend.into(),
            raw_output,
        })
    }

    pub fn prob(&self) -> f64 {
        self.prob
    }

    fn to_value(&self) -> Value {
        let mut body = Map::new();
        body.insert("prob".into(), json!(self.prob));
        if let Some(raw) = &self.raw_output {
            body.insert("raw".into(), json!({ "raw_output": raw }));
        }
        Value::Object(body)
    }
}

/// Parses a `{"<backend>": {"prob": p, "raw": {"raw_output": "..."}}}` block.
pub fn parse_calibration_block(value: &Value) -> Result<BTreeMap<String, CalibrationPayload>> {
    let Value::Object(backends) = value else {
        return Err(EvidenceError::Malformed("`calibration` must be an object".into()));
    };
    backends
        .iter()
        .map(|(backend, body)| {
            let prob = body
                .get("prob")
                .and_then(Value::as_f64)
                .ok_or_else(|| EvidenceError::Malformed(format!("calibration `{backend}` has no numeric `prob`")))?;
            let raw_output = body
                .get("raw")
                .and_then(|r| r.get("raw_output"))
                .and_then(Value::as_str)
                .map(str::to_owned);
            Ok((backend.clone(), CalibrationPayload::new(prob, backend.clone(), raw_output)?))
        })
        .collect()
}

/// An evidence record with zero or more backend calibrations.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedArtifact {
    pub record: EvidenceRecord,
    pub calibrations: BTreeMap<String, CalibrationPayload>,
}

impl CalibratedArtifact {
    pub fn uncalibrated(record: EvidenceRecord) -> Self {
        Self {
            record,
            calibrations: BTreeMap::new(),
        }
    }

    /// Parses one evidence line, splitting off any `calibration` block.
    pub fn parse_line(bytes: &[u8]) -> Result<Self> {
        let mut map = match serde_json::from_slice::<Value>(bytes) {
            Ok(Value::Object(map)) => map,
            Ok(other) => return Err(EvidenceError::Malformed(format!("expected a JSON object, found {other}"))),
            Err(e) => return Err(EvidenceError::Malformed(e.to_string())),
        };
        let calibrations = match map.shift_remove("calibration") {
            Some(block) => parse_calibration_block(&block)?,
            None => BTreeMap::new(),
        };
        Ok(Self {
            record: EvidenceRecord::from_map(map)?,
            calibrations,
        })
    }

    pub fn prob(&self, backend: &str) -> Option<f64> {
        self.calibrations.get(backend).map(CalibrationPayload::prob)
    }

    /// Original fields, then the `calibration` block if any.
    pub fn to_value(&self) -> Value {
        let mut map = self.record.original().clone();
        if !self.calibrations.is_empty() {
            let block: Map<String, Value> = self
                .calibrations
                .iter()
                .map(|(k, p)| (k.clone(), p.to_value()))
                .collect();
            map.insert("calibration".into(), Value::Object(block));
        }
        Value::Object(map)
    }

    pub fn to_json(&self) -> String {
        self.to_value().to_string()
    }
}

/// A calibration prediction from a prediction file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(default, alias = "claim_id", alias = "note_id", skip_serializing_if = "Option::is_none")]
    pub artifact_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_id: Option<DocId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_output: Option<String>,
}

impl Prediction {
    pub fn parse_jsonl(bytes: &[u8]) -> Result<Vec<Prediction>> {
        let text = std::str::from_utf8(bytes).map_err(|_| EvidenceError::Malformed("invalid UTF-8".into()))?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| EvidenceError::Malformed(e.to_string()).at_line(i + 1))
            })
            .collect()
    }

    /// `prob` if given, otherwise the answer tag in `raw_output`.
    pub fn payload(&self, default_backend: &str) -> Result<CalibrationPayload> {
        let backend = self.backend.clone().unwrap_or_else(|| default_backend.to_owned());
        let prob = match (self.prob, &self.raw_output) {
            (Some(p), _) => p,
            (None, Some(raw)) => parse_answer_tag(raw)?,
            (None, None) => return Err(EvidenceError::NoProbability),
        };
        CalibrationPayload::new(prob, backend, self.raw_output.clone())
    }

    fn fallback_key(&self) -> Option<(&DocId, &str)> {
        Some((self.video_id.as_ref()?, self.text.as_deref()?.trim()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OrphanReason {
    /// Neither the id nor the `(video_id, text)` pair matched an artifact.
    NoMatch,
    /// The `(video_id, text)` pair matched more than one artifact.
    Ambiguous,
    /// The only text match was already calibrated through its id.
    AlreadyMatchedById,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Orphan {
    /// Position in the prediction list.
    pub index: usize,
    pub prediction: Prediction,
    pub reason: OrphanReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttachOutcome {
    /// Artifacts that received at least one prediction, in input order.
    pub attached: Vec<CalibratedArtifact>,
    /// Ids of artifacts no prediction reached.
    pub unmatched: Vec<String>,
    pub orphans: Vec<Orphan>,
}

/// Joins predictions onto artifacts: by artifact id first, then by exact
/// `(video_id, trimmed text)` for predictions whose id is absent or unknown.
/// Artifacts already reached by id are not candidates for the fallback.
pub fn attach(
    artifacts: Vec<CalibratedArtifact>,
    predictions: &[Prediction],
    default_backend: &str,
) -> Result<AttachOutcome> {
    let by_id: HashMap<&str, usize> = artifacts.iter().enumerate().map(|(i, a)| (a.record.id(), i)).collect();
    let mut by_text: HashMap<(&DocId, &str), Vec<usize>> = HashMap::new();
    for (i, a) in artifacts.iter().enumerate() {
        by_text
            .entry((a.record.artifact.video_id(), a.record.artifact.text().trim()))
            .or_default()
            .push(i);
    }

    // (artifact, backend) -> prediction index
    let mut claimed: HashMap<(usize, String), usize> = HashMap::new();
    let mut targets: Vec<Option<usize>> = vec![None; predictions.len()];
    let mut matched_by_id = vec![false; artifacts.len()];
    let mut orphans = Vec::new();

    let claim = |artifact: usize, p: usize, claimed: &mut HashMap<(usize, String), usize>| -> Result<()> {
        let backend = predictions[p].backend.clone().unwrap_or_else(|| default_backend.to_owned());
        if let Some(&first) = claimed.get(&(artifact, backend.clone())) {
            return Err(EvidenceError::Conflict {
                artifact: artifacts[artifact].record.id().to_owned(),
                backend,
                first,
                second: p,
            });
        }
        claimed.insert((artifact, backend), p);
        Ok(())
    };

    for (p, pred) in predictions.iter().enumerate() {
        if pred.artifact_id.is_none() && pred.fallback_key().is_none() {
            return Err(EvidenceError::UnkeyedPrediction.at_line(p + 1));
        }
        if let Some(&a) = pred.artifact_id.as_deref().and_then(|id| by_id.get(id)) {
            claim(a, p, &mut claimed)?;
            targets[p] = Some(a);
            matched_by_id[a] = true;
        }
    }
    for (p, pred) in predictions.iter().enumerate() {
        if targets[p].is_some() {
            continue;
        }
        let candidates = pred.fallback_key().and_then(|k| by_text.get(&k));
        let reason = match candidates.map(Vec::as_slice) {
            None | Some([]) => OrphanReason::NoMatch,
            Some(c) => {
                let open: Vec<usize> = c.iter().copied().filter(|&a| !matched_by_id[a]).collect();
                match open.as_slice() {
                    [a] => {
                        claim(*a, p, &mut claimed)?;
                        targets[p] = Some(*a);
                        continue;
                    }
                    [] => OrphanReason::AlreadyMatchedById,
                    _ => OrphanReason::Ambiguous,
                }
            }
        };
        orphans.push(Orphan {
            index: p,
            prediction: pred.clone(),
            reason,
        });
    }

    let mut payloads: BTreeMap<usize, Vec<CalibrationPayload>> = BTreeMap::new();
    for (p, target) in targets.iter().enumerate() {
        if let Some(a) = target {
            let payload = predictions[p].payload(default_backend).map_err(|e| e.at_line(p + 1))?;
            payloads.entry(*a).or_default().push(payload);
        }
    }

    let mut attached = Vec::new();
    let mut unmatched = Vec::new();
    for (i, mut artifact) in artifacts.into_iter().enumerate() {
        match payloads.remove(&i) {
            Some(list) => {
                for payload in list {
                    if artifact.calibrations.contains_key(&payload.backend) {
                        warn!("replacing {} calibration of {}", payload.backend, artifact.record.id());
                    }
                    artifact.calibrations.insert(payload.backend.clone(), payload);
                }
                attached.push(artifact);
            }
            None => unmatched.push(artifact.record.id().to_owned()),
        }
    }
    Ok(AttachOutcome {
        attached,
        unmatched,
        orphans,
    })
}

/// One line of the filter audit file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRecord {
    pub artifact_id: String,
    pub video_id: DocId,
    pub backend: String,
    pub prob: Option<f64>,
    pub threshold: f64,
    pub reason: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dropped {
    pub artifact: CalibratedArtifact,
    pub audit: AuditRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<CalibratedArtifact>,
    pub dropped: Vec<Dropped>,
}

impl FilterOutcome {
    pub fn audit_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for d in &self.dropped {
            serde_json::to_writer(&mut out, &d.audit).expect("in-memory serialization");
            out.push(b'\n');
        }
        out
    }
}

/// Keeps artifacts whose `backend` probability is at least `threshold`.
/// Artifacts without a calibration from `backend` are dropped.
pub fn filter_by_threshold(items: Vec<CalibratedArtifact>, threshold: f64, backend: &str) -> Result<FilterOutcome> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(EvidenceError::ThresholdOutOfRange(threshold));
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for item in items {
        let prob = item.prob(backend);
        if prob.is_some_and(|p| p >= threshold) {
            kept.push(item);
            continue;
        }
        let audit = AuditRecord {
            artifact_id: item.record.id().to_owned(),
            video_id: item.record.artifact.video_id().clone(),
            backend: backend.to_owned(),
            prob,
            threshold,
            reason: if prob.is_some() { "below_threshold" } else { "missing_calibration" },
        };
        dropped.push(Dropped { artifact: item, audit });
    }
    Ok(FilterOutcome { kept, dropped })
}
