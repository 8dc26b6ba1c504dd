//! Service boundaries of the pipeline.
//!
//! Each stage talks to one narrow trait. Replay clients answer from fixture
//! files; HTTP clients POST a JSON body and read a JSON answer:
//!
//! | service    | request body                                                   | response body                                  |
//! |------------|----------------------------------------------------------------|------------------------------------------------|
//! | decomposer | `{"query_id", "title", "language", "persona", "background", "query"}` | `{"response": "<model text>"}` or the raw text |
//! | retriever  | `{"id", "text", "depth"}`                                      | `{"results": [{"doc_id", "score"}, ...]}`      |
//! | reranker   | `{"query_id", "candidates": ["doc", ...]}`                     | `{"scores": [{"doc_id", "score"}, ...]}`       |

use std::collections::BTreeMap;
use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use super::decompose::QueryRecord;
use crate::error::{Error, Result};
use crate::ranked::{DocId, QueryId, RunSet, ScoredList, SubQuery};

pub trait Decomposer: Sync {
    /// Raw model output for `record`; parsing happens in the caller.
    fn decompose(&self, record: &QueryRecord) -> Result<String>;
}

pub trait Retriever: Sync {
    fn retrieve(&self, sub_query: &SubQuery, depth: usize) -> Result<ScoredList>;
}

pub trait Reranker: Sync {
    /// Scores for some or all of `candidates`.
    fn rerank(&self, query: &QueryId, candidates: &[DocId]) -> Result<ScoredList>;
}

/// Canned decomposer responses keyed by query id.
#[derive(Debug, Clone, Default)]
pub struct ReplayDecomposer {
    responses: BTreeMap<QueryId, String>,
}

#[derive(Deserialize)]
struct ReplayLine {
    query_id: QueryId,
    response: String,
}

impl ReplayDecomposer {
    pub fn new(responses: impl IntoIterator<Item = (QueryId, String)>) -> Self {
        Self {
            responses: responses.into_iter().collect(),
        }
    }

    /// Lines of `{"query_id": ..., "response": "<raw model text>"}`.
    pub fn parse_jsonl(bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|e| Error::parse(0, e.to_string()))?;
        let mut responses = BTreeMap::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let rec: ReplayLine = serde_json::from_str(line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
            if responses.insert(rec.query_id.clone(), rec.response).is_some() {
                return Err(Error::parse(i + 1, format!("query {} appears twice", rec.query_id)));
            }
        }
        Ok(Self { responses })
    }
}

impl Decomposer for ReplayDecomposer {
    fn decompose(&self, record: &QueryRecord) -> Result<String> {
        self.responses
            .get(&record.query_id)
            .cloned()
            .ok_or_else(|| Error::domain(format!("no recorded decomposition for query {}", record.query_id)))
    }
}

/// First-stage lists read from a run keyed by sub-query id.
#[derive(Debug, Clone)]
pub struct ReplayRetriever {
    run: RunSet,
}

impl ReplayRetriever {
    pub fn new(run: RunSet) -> Self {
        Self { run }
    }
}

impl Retriever for ReplayRetriever {
    fn retrieve(&self, sub_query: &SubQuery, depth: usize) -> Result<ScoredList> {
        self.run
            .get(&sub_query.id)
            .map(|l| l.truncate(depth))
            .ok_or_else(|| Error::MissingSubQuery(sub_query.id.to_string()))
    }
}

/// Rerank scores read from a run file. Queries without a list get no scores.
#[derive(Debug, Clone)]
pub struct ReplayReranker {
    run: RunSet,
}

impl ReplayReranker {
    pub fn new(run: RunSet) -> Self {
        Self { run }
    }
}

impl Reranker for ReplayReranker {
    fn rerank(&self, query: &QueryId, _candidates: &[DocId]) -> Result<ScoredList> {
        Ok(self.run.get(query).cloned().unwrap_or_default())
    }
}

/// A JSON-over-HTTP endpoint with bounded retry and exponential backoff.
#[derive(Debug, Clone)]
pub struct HttpEndpoint {
    url: String,
    attempts: u32,
    backoff: Duration,
    agent: ureq::Agent,
}

impl HttpEndpoint {
    pub fn new(url: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        Self {
            url: url.into(),
            attempts: 3,
            backoff: Duration::from_millis(250),
            agent,
        }
    }

    /// Total attempts (at least one) and the delay before the first retry,
    /// doubled for each further one.
    pub fn with_retry(mut self, attempts: u32, backoff: Duration) -> Self {
        self.attempts = attempts.max(1);
        self.backoff = backoff;
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn post_text(&self, body: &Value) -> Result<String> {
        let payload = body.to_string();
        let mut last = String::new();
        for attempt in 0..self.attempts {
            if attempt > 0 {
                thread::sleep(self.backoff * 2u32.saturating_pow(attempt - 1));
            }
            let sent = self
                .agent
                .post(&self.url)
                .header("Content-Type", "application/json")
                .send(payload.as_str());
            match sent {
                Ok(mut response) => {
                    return response
                        .body_mut()
                        .read_to_string()
                        .map_err(|e| Error::Transport(format!("{}: {e}", self.url)));
                }
                Err(ureq::Error::StatusCode(code)) if code < 500 && code != 429 => {
                    return Err(Error::Transport(format!("{}: HTTP {code}", self.url)));
                }
                Err(e) => {
                    log::warn!("{} attempt {} failed: {e}", self.url, attempt + 1);
                    last = e.to_string();
                }
            }
        }
        Err(Error::Transport(format!(
            "{}: giving up after {} attempts: {last}",
            self.url, self.attempts
        )))
    }

    pub fn post_json(&self, body: &Value) -> Result<Value> {
        let text = self.post_text(body)?;
        serde_json::from_str(&text).map_err(|e| Error::Transport(format!("{}: bad JSON reply: {e}", self.url)))
    }
}

#[derive(Deserialize)]
struct ScoredDoc {
    doc_id: DocId,
    score: f64,
}

fn scored_list(value: Value, field: &str, url: &str) -> Result<ScoredList> {
    let docs: Vec<ScoredDoc> = value
        .get(field)
        .cloned()
        .ok_or_else(|| Error::Transport(format!("{url}: reply has no `{field}` array")))
        .and_then(|v| serde_json::from_value(v).map_err(|e| Error::Transport(format!("{url}: {e}"))))?;
    ScoredList::from_scores(docs.into_iter().map(|d| (d.doc_id, d.score)))
}

#[derive(Debug, Clone)]
pub struct HttpDecomposer(pub HttpEndpoint);

impl Decomposer for HttpDecomposer {
    fn decompose(&self, record: &QueryRecord) -> Result<String> {
        let text = self.0.post_text(&serde_json::to_value(record)?)?;
        Ok(match serde_json::from_str::<Value>(&text) {
            Ok(Value::Object(map)) => match map.get("response") {
                Some(Value::String(s)) => s.clone(),
                _ => text,
            },
            _ => text,
        })
    }
}

#[derive(Debug, Clone)]
pub struct HttpRetriever(pub HttpEndpoint);

impl Retriever for HttpRetriever {
    fn retrieve(&self, sub_query: &SubQuery, depth: usize) -> Result<ScoredList> {
        let reply = self
            .0
            .post_json(&json!({"id": sub_query.id, "text": sub_query.text, "depth": depth}))?;
        Ok(scored_list(reply, "results", self.0.url())?.truncate(depth))
    }
}

#[derive(Debug, Clone)]
pub struct HttpReranker(pub HttpEndpoint);

impl Reranker for HttpReranker {
    fn rerank(&self, query: &QueryId, candidates: &[DocId]) -> Result<ScoredList> {
        let reply = self.0.post_json(&json!({"query_id": query, "candidates": candidates}))?;
        scored_list(reply, "scores", self.0.url())
    }
}
