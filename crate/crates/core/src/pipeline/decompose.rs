use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::clients::Decomposer;
use crate::error::{Error, Result};
use crate::ranked::{QueryId, SubQuery, SubQueryMap};

/// Upper bound on the sub-queries kept from one decomposition.
pub const MAX_SUB_QUERIES: usize = 25;

/// One information request, as given to the decomposer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: QueryId,
    #[serde(default)]
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    #[serde(default, alias = "persona_title")]
    pub persona: String,
    #[serde(default)]
    pub background: String,
    pub query: String,
}

impl QueryRecord {
    /// Reads one record per non-blank line.
    pub fn parse_jsonl(bytes: &[u8]) -> Result<Vec<QueryRecord>> {
        let text = std::str::from_utf8(bytes).map_err(|e| Error::parse(0, e.to_string()))?;
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: QueryRecord = serde_json::from_str(line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
            if record.query.trim().is_empty() {
                return Err(Error::parse(i + 1, "query text is empty"));
            }
            if !seen.insert(record.query_id.clone()) {
                return Err(Error::parse(i + 1, format!("query {} appears twice", record.query_id)));
            }
            out.push(record);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionResult {
    pub query_id: QueryId,
    pub sub_queries: Vec<String>,
    pub fallback_used: bool,
}

/// Reads a decomposer response: a JSON array of strings, blank entries
/// dropped, at most [`MAX_SUB_QUERIES`] kept. `None` when the response is
/// not such an array or has no usable entry.
pub fn parse_decomposition(response: &str) -> Option<Vec<String>> {
    let items: Vec<String> = serde_json::from_str(response.trim()).ok()?;
    let subs: Vec<String> = items
        .into_iter()
        .map(|s| s.trim().to_owned())
        .filter(|s| !s.is_empty())
        .take(MAX_SUB_QUERIES)
        .collect();
    (!subs.is_empty()).then_some(subs)
}

/// Decomposes one query. A malformed response falls back to the original
/// query text as the only sub-query; transport failures are errors.
pub fn decompose(record: &QueryRecord, client: &dyn Decomposer) -> Result<DecompositionResult> {
    let response = client.decompose(record)?;
    let (sub_queries, fallback_used) = match parse_decomposition(&response) {
        Some(subs) => (subs, false),
        None => {
            log::warn!("query {}: unusable decomposition, falling back to the query text", record.query_id);
            (vec![record.query.trim().to_owned()], true)
        }
    };
    Ok(DecompositionResult {
        query_id: record.query_id.clone(),
        sub_queries,
        fallback_used,
    })
}

/// Sub-query id of the `index`-th (0-based) entry of `query`: `<query>_<index+1>`.
pub fn sub_query_id(query: &QueryId, index: usize) -> Result<QueryId> {
    QueryId::new(format!("{query}_{}", index + 1))
}

/// Turns decompositions into a map with ids from [`sub_query_id`].
pub fn to_subquery_map(results: &[DecompositionResult]) -> Result<SubQueryMap> {
    let mut groups = BTreeMap::new();
    for r in results {
        let subs = r
            .sub_queries
            .iter()
            .enumerate()
            .map(|(i, text)| {
                Ok(SubQuery {
                    id: sub_query_id(&r.query_id, i)?,
                    text: text.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if groups.insert(r.query_id.clone(), subs).is_some() {
            return Err(Error::domain(format!("query {} decomposed twice", r.query_id)));
        }
    }
    SubQueryMap::new(groups)
}
