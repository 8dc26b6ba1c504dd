//! Sub-query maps as JSON lines:
//! `{"query_id": "10", "sub_queries": [{"id": "10-00", "text": "..."}]}`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{QueryId, SubQuery, SubQueryMap};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct GroupRecord {
    query_id: QueryId,
    sub_queries: Vec<SubQuery>,
}

pub fn parse_subquery_map(bytes: &[u8]) -> Result<SubQueryMap> {
    let text = std::str::from_utf8(bytes).map_err(|_| Error::parse(0, "invalid UTF-8"))?;
    let mut groups = BTreeMap::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: GroupRecord =
            serde_json::from_str(line).map_err(|e| Error::parse(n, e.to_string()))?;
        if record.sub_queries.is_empty() {
            return Err(Error::parse(
                n,
                format!("query {} has no sub-queries", record.query_id),
            ));
        }
        for sub in &record.sub_queries {
            if !seen.insert(sub.id.clone()) {
                return Err(Error::parse(n, format!("sub-query id {} appears more than once", sub.id)));
            }
        }
        if groups.insert(record.query_id.clone(), record.sub_queries).is_some() {
            return Err(Error::parse(n, format!("query {} appears more than once", record.query_id)));
        }
    }
    SubQueryMap::new(groups)
}

pub fn write_subquery_map(map: &SubQueryMap) -> Vec<u8> {
    let mut out = Vec::new();
    for (query, subs) in map.iter() {
        let record = GroupRecord {
            query_id: query.clone(),
            sub_queries: subs.to_vec(),
        };
        serde_json::to_writer(&mut out, &record).expect("in-memory serialization");
        out.push(b'\n');
    }
    out
}

/// Group-size statistics of a sub-query map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionStats {
    pub queries: usize,
    pub total: usize,
    pub min: usize,
    pub mean: f64,
    pub max: usize,
}

impl fmt::Display for ExpansionStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "queries {}  total {}  min {}  avg {:.2}  max {}",
            self.queries, self.total, self.min, self.mean, self.max
        )
    }
}

pub fn expansion_stats(map: &SubQueryMap) -> Result<ExpansionStats> {
    let sizes: Vec<usize> = map.iter().map(|(_, s)| s.len()).collect();
    let (Some(&min), Some(&max)) = (sizes.iter().min(), sizes.iter().max()) else {
        return Err(Error::domain("expansion statistics need at least one query"));
    };
    let total: usize = sizes.iter().sum();
    Ok(ExpansionStats {
        queries: sizes.len(),
        total,
        min,
        mean: total as f64 / sizes.len() as f64,
        max,
    })
}
