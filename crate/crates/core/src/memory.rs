//! Five-slot structured memory for an iterative research controller.
//!
//! Persisted as a single JSON object with the slots `findings`, `keywords`,
//! `fact_table`, `selected_facts` and `videos`:
//!
//! ```json
//! {
//!   "findings": ["high-level insight"],
//!   "keywords": {"<video_id>": ["keyword1", "keyword2"]},
//!   "fact_table": {"<video_id>": [
//!     {"fact": "...", "timestamp": "10s-15s", "source_tool": "query_claims", "confidence": 0.8}
//!   ]},
//!   "selected_facts": ["fact text chosen for the report"],
//!   "videos": {"<video_id>": {"status": "processed", "tools_used": ["query_claims"], "path": "...", "caption": "..."}}
//! }
//! ```
//!
//! Facts are addressed by `(video_id, index)`. [`MemoryBank::flat_facts`]
//! numbers them `F#0, F#1, ...` in video-id order, then index order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ranked::DocId;

/// Default character budget of [`MemoryBank::summary`].
pub const SUMMARY_CAP: usize = 4000;

const FINDING_PREVIEW: usize = 160;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MemoryError {
    #[error("unknown video {0}")]
    UnknownVideo(String),
    #[error("fact index {index} out of range for video {video} ({len} facts)")]
    IndexOutOfRange { video: String, index: usize, len: usize },
    #[error("keyword must not be empty")]
    EmptyKeyword,
    #[error("fact text must not be empty")]
    EmptyFact,
    #[error("confidence {0} is outside [0, 1]")]
    ConfidenceOutOfRange(f64),
    #[error("unknown slot {0:?} (expected findings, keywords, fact_table, selected_facts or videos)")]
    UnknownSlot(String),
    #[error("bad fact reference {0:?}")]
    BadReference(String),
    #[error("inconsistent memory bank: {0}")]
    Inconsistent(String),
    #[error("memory bank json: {0}")]
    Json(String),
}

type Result<T> = std::result::Result<T, MemoryError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactEntry {
    pub fact: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub source_tool: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl FactEntry {
    pub fn new(fact: impl Into<String>, source_tool: impl Into<String>) -> Self {
        Self {
            fact: fact.into(),
            timestamp: None,
            source_tool: source_tool.into(),
            confidence: None,
        }
    }

    pub fn with_timestamp(mut self, span: impl Into<String>) -> Self {
        self.timestamp = Some(span.into());
        self
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = Some(confidence);
        self
    }

    fn check(&self) -> Result<()> {
        if self.fact.trim().is_empty() {
            return Err(MemoryError::EmptyFact);
        }
        match self.confidence {
            Some(c) if !(0.0..=1.0).contains(&c) => Err(MemoryError::ConfidenceOutOfRange(c)),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    #[default]
    Pending,
    Processed,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VideoStatus {
    pub status: Status,
    #[serde(default)]
    pub tools_used: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Findings,
    Keywords,
    FactTable,
    SelectedFacts,
    Videos,
}

impl Slot {
    pub const ALL: [Slot; 5] = [
        Slot::Findings,
        Slot::Keywords,
        Slot::FactTable,
        Slot::SelectedFacts,
        Slot::Videos,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Slot::Findings => "findings",
            Slot::Keywords => "keywords",
            Slot::FactTable => "fact_table",
            Slot::SelectedFacts => "selected_facts",
            Slot::Videos => "videos",
        }
    }
}

impl FromStr for Slot {
    type Err = MemoryError;

    fn from_str(s: &str) -> Result<Self> {
        Slot::ALL
            .into_iter()
            .find(|slot| slot.name() == s)
            .ok_or_else(|| MemoryError::UnknownSlot(s.to_owned()))
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Address of one fact.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FactRef {
    pub video: DocId,
    pub index: usize,
}

impl FactRef {
    pub fn new(video: DocId, index: usize) -> Self {
        Self { video, index }
    }
}

/// A fact found by [`MemoryBank::search_by_keyword`].
#[derive(Debug, Clone, PartialEq)]
pub struct FactMatch<'a> {
    pub video: &'a DocId,
    pub index: usize,
    pub entry: &'a FactEntry,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchMatches<'a> {
    /// Videos tagged with the keyword.
    pub videos: Vec<&'a DocId>,
    /// Facts whose text contains the keyword.
    pub facts: Vec<FactMatch<'a>>,
}

impl SearchMatches<'_> {
    pub fn is_empty(&self) -> bool {
        self.videos.is_empty() && self.facts.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryBank {
    #[serde(default)]
    pub findings: Vec<String>,
    #[serde(default)]
    keywords: BTreeMap<DocId, BTreeSet<String>>,
    #[serde(default)]
    fact_table: BTreeMap<DocId, Vec<FactEntry>>,
    #[serde(default)]
    selected_facts: Vec<String>,
    #[serde(default)]
    videos: BTreeMap<DocId, VideoStatus>,
}

fn normalize_keyword(keyword: &str) -> String {
    keyword.trim().to_lowercase()
}

fn preview(text: &str, limit: usize) -> String {
    if text.chars().count() <= limit {
        return text.to_owned();
    }
    let mut cut: String = text.chars().take(limit.saturating_sub(3)).collect();
    cut.push_str("...");
    cut
}

impl MemoryBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn keywords(&self) -> &BTreeMap<DocId, BTreeSet<String>> {
        &self.keywords
    }

    pub fn fact_table(&self) -> &BTreeMap<DocId, Vec<FactEntry>> {
        &self.fact_table
    }

    pub fn selected_facts(&self) -> &[String] {
        &self.selected_facts
    }

    pub fn videos(&self) -> &BTreeMap<DocId, VideoStatus> {
        &self.videos
    }

    pub fn facts(&self, video: &DocId) -> Option<&[FactEntry]> {
        self.fact_table.get(video).map(Vec::as_slice)
    }

    pub fn total_facts(&self) -> usize {
        self.fact_table.values().map(Vec::len).sum()
    }

    /// Registers `video` as pending if it is not known yet.
    pub fn register_video(&mut self, video: &DocId) -> &mut VideoStatus {
        self.videos.entry(video.clone()).or_default()
    }

    /// Records that `tool` ran on `video` and marks the video processed.
    pub fn mark_processed(&mut self, video: &DocId, tool: impl Into<String>) {
        let status = self.register_video(video);
        status.tools_used.insert(tool.into());
        status.status = Status::Processed;
    }

    pub fn set_caption(&mut self, video: &DocId, caption: impl Into<String>) {
        self.register_video(video).caption = Some(caption.into());
    }

    /// Replaces the whole findings slot.
    pub fn replace_findings(&mut self, findings: Vec<String>) {
        self.findings = findings;
    }

    /// Appends a fact to the video's list and returns its index.
    pub fn add_fact(&mut self, video: &DocId, entry: FactEntry) -> Result<usize> {
        entry.check()?;
        self.register_video(video);
        let facts = self.fact_table.entry(video.clone()).or_default();
        facts.push(entry);
        Ok(facts.len() - 1)
    }

    /// Tags a video. Keywords are stored trimmed and lower-cased.
    pub fn add_keyword(&mut self, video: &DocId, keyword: &str) -> Result<()> {
        let keyword = normalize_keyword(keyword);
        if keyword.is_empty() {
            return Err(MemoryError::EmptyKeyword);
        }
        self.register_video(video);
        self.keywords.entry(video.clone()).or_default().insert(keyword);
        Ok(())
    }

    /// Videos tagged with `keyword` and facts whose text contains it, both
    /// compared case-insensitively.
    pub fn search_by_keyword(&self, keyword: &str) -> SearchMatches<'_> {
        let needle = normalize_keyword(keyword);
        if needle.is_empty() {
            return SearchMatches::default();
        }
        let videos = self
            .keywords
            .iter()
            .filter(|(_, set)| set.contains(&needle))
            .map(|(v, _)| v)
            .collect();
        let facts = self
            .fact_table
            .iter()
            .flat_map(|(video, facts)| facts.iter().enumerate().map(move |(index, entry)| (video, index, entry)))
            .filter(|(_, _, e)| e.fact.to_lowercase().contains(&needle))
            .map(|(video, index, entry)| FactMatch { video, index, entry })
            .collect();
        SearchMatches { videos, facts }
    }

    /// Removes one fact; later facts of that video shift down by one.
    pub fn remove_fact(&mut self, video: &DocId, index: usize) -> Result<FactEntry> {
        let facts = self
            .fact_table
            .get_mut(video)
            .ok_or_else(|| MemoryError::UnknownVideo(video.to_string()))?;
        if index >= facts.len() {
            return Err(MemoryError::IndexOutOfRange {
                video: video.to_string(),
                index,
                len: facts.len(),
            });
        }
        Ok(facts.remove(index))
    }

    /// Empties the fact list of `video`, or of every video.
    pub fn clear_facts(&mut self, video: Option<&DocId>) -> Result<()> {
        match video {
            Some(v) => {
                if !self.videos.contains_key(v) {
                    return Err(MemoryError::UnknownVideo(v.to_string()));
                }
                if let Some(facts) = self.fact_table.get_mut(v) {
                    facts.clear();
                }
            }
            None => self.fact_table.values_mut().for_each(Vec::clear),
        }
        Ok(())
    }

    pub fn fact(&self, r: &FactRef) -> Result<&FactEntry> {
        let facts = self
            .fact_table
            .get(&r.video)
            .ok_or_else(|| MemoryError::UnknownVideo(r.video.to_string()))?;
        facts.get(r.index).ok_or_else(|| MemoryError::IndexOutOfRange {
            video: r.video.to_string(),
            index: r.index,
            len: facts.len(),
        })
    }

    /// Every fact with its flat number, in video-id then index order.
    pub fn flat_facts(&self) -> Vec<(usize, FactRef, &FactEntry)> {
        self.fact_table
            .iter()
            .flat_map(|(v, facts)| facts.iter().enumerate().map(move |(i, e)| (FactRef::new(v.clone(), i), e)))
            .enumerate()
            .map(|(n, (r, e))| (n, r, e))
            .collect()
    }

    /// Resolves `F#n` (or a bare `n`) through [`flat_facts`](Self::flat_facts).
    pub fn resolve_flat(&self, id: &str) -> Result<FactRef> {
        let digits = id.trim().trim_start_matches("F#");
        let n: usize = digits.parse().map_err(|_| MemoryError::BadReference(id.to_owned()))?;
        self.flat_facts()
            .into_iter()
            .nth(n)
            .map(|(_, r, _)| r)
            .ok_or_else(|| MemoryError::BadReference(id.to_owned()))
    }

    /// Replaces `selected_facts` with the referenced fact texts, in order.
    /// Nothing changes if any reference dangles.
    pub fn select_facts(&mut self, refs: &[FactRef]) -> Result<()> {
        let texts = refs
            .iter()
            .map(|r| self.fact(r).map(|e| e.fact.clone()))
            .collect::<Result<Vec<_>>>()?;
        self.selected_facts = texts;
        Ok(())
    }

    /// Compact digest capped at [`SUMMARY_CAP`] characters.
    pub fn summary(&self) -> String {
        self.summary_with_cap(SUMMARY_CAP)
    }

    pub fn summary_with_cap(&self, cap: usize) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "findings ({}):", self.findings.len());
        for f in &self.findings {
            let _ = writeln!(out, "  - {}", preview(f, FINDING_PREVIEW));
        }
        let with_facts = self.fact_table.values().filter(|f| !f.is_empty()).count();
        let _ = writeln!(out, "facts: {} across {} videos", self.total_facts(), with_facts);
        let _ = writeln!(out, "selected_facts: {}", self.selected_facts.len());
        let processed = self.videos.values().filter(|v| v.status == Status::Processed).count();
        let _ = writeln!(
            out,
            "videos ({}): {} processed, {} pending",
            self.videos.len(),
            processed,
            self.videos.len() - processed
        );
        for (video, status) in &self.videos {
            let facts = self.fact_table.get(video).map_or(0, Vec::len);
            let state = match status.status {
                Status::Processed => "processed",
                Status::Pending => "pending",
            };
            let mut line = format!("  {video}: {state}, {facts} facts");
            if !status.tools_used.is_empty() {
                let tools: Vec<&str> = status.tools_used.iter().map(String::as_str).collect();
                let _ = write!(line, ", tools {}", tools.join(","));
            }
            if let Some(kw) = self.keywords.get(video).filter(|k| !k.is_empty()) {
                let kws: Vec<&str> = kw.iter().map(String::as_str).collect();
                let _ = write!(line, ", keywords {}", kws.join(","));
            }
            out.push_str(&line);
            out.push('\n');
        }
        truncate_chars(out, cap)
    }

    /// JSON dump of the whole bank, or of one slot as `{"<slot>": ...}`.
    pub fn dump(&self, slot: Option<Slot>) -> String {
        let value = serde_json::to_value(self).expect("in-memory serialization");
        let value = match slot {
            None => value,
            Some(slot) => {
                let mut only = serde_json::Map::new();
                only.insert(slot.name().to_owned(), value[slot.name()].clone());
                serde_json::Value::Object(only)
            }
        };
        serde_json::to_string_pretty(&value).expect("in-memory serialization")
    }

    /// [`dump`](Self::dump) with the slot given by name.
    pub fn dump_slot(&self, slot: &str) -> Result<String> {
        Ok(self.dump(Some(slot.parse()?)))
    }

    /// Loads a bank and checks its cross-slot invariants.
    pub fn load(bytes: &[u8]) -> Result<Self> {
        let bank: MemoryBank = serde_json::from_slice(bytes).map_err(|e| MemoryError::Json(e.to_string()))?;
        bank.check()?;
        Ok(bank)
    }

    fn check(&self) -> Result<()> {
        for video in self.keywords.keys().chain(self.fact_table.keys()) {
            if !self.videos.contains_key(video) {
                return Err(MemoryError::Inconsistent(format!("{video} is missing from videos")));
            }
        }
        for (video, status) in &self.videos {
            if status.status == Status::Processed && status.tools_used.is_empty() {
                return Err(MemoryError::Inconsistent(format!("{video} is processed but lists no tools")));
            }
        }
        for (video, set) in &self.keywords {
            if set.iter().any(|k| k.is_empty() || *k != normalize_keyword(k)) {
                return Err(MemoryError::Inconsistent(format!("{video} has a non-normalized keyword")));
            }
        }
        self.fact_table.values().flatten().try_for_each(FactEntry::check)
    }
}

fn truncate_chars(text: String, cap: usize) -> String {
    let len = text.chars().count();
    if len <= cap {
        return text;
    }
    let marker = format!("\n[... truncated {} chars]\n", len);
    let keep = cap.saturating_sub(marker.chars().count());
    let mut out: String = text.chars().take(keep).collect();
    out.push_str(&marker);
    if out.chars().count() > cap {
        out = out.chars().take(cap).collect();
    }
    out
}
