//! Ranked retrieval data model: identifiers, scored lists, run sets,
//! relevance judgments and sub-query maps, plus their file formats.
//!
//! Every [`ScoredList`] is kept in canonical order: descending score, ties
//! broken by ascending document id. Ranks are positions in that order,
//! starting at 1. Rank columns found in input files are never trusted.

mod subquery;
mod trec;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use subquery::{expansion_stats, parse_subquery_map, write_subquery_map, ExpansionStats};
pub use trec::{parse_qrels, parse_run, write_qrels, write_run};

macro_rules! token_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(value: impl Into<String>) -> Result<Self> {
                let value = value.into();
                if value.is_empty() || value.chars().any(char::is_whitespace) {
                    return Err(Error::InvalidId(value));
                }
                Ok(Self(value))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl TryFrom<String> for $name {
            type Error = Error;

            fn try_from(value: String) -> Result<Self> {
                Self::new(value)
            }
        }

        impl TryFrom<&str> for $name {
            type Error = Error;

            fn try_from(value: &str) -> Result<Self> {
                Self::new(value)
            }
        }

        impl From<$name> for String {
            fn from(id: $name) -> String {
                id.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl std::str::FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                Self::new(s)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

token_id!(
    /// Document (video) identifier.
    DocId
);
token_id!(
    /// Query or sub-query identifier.
    QueryId
);

/// Canonical ordering of scored entries: score descending, then id ascending.
pub(crate) fn canonical_order(a: &(DocId, f64), b: &(DocId, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

/// One query's ranked `(document, score)` sequence.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ScoredList {
    entries: Vec<(DocId, f64)>,
}

impl ScoredList {
    /// Builds a list from unordered scores. Rejects duplicate documents and
    /// non-finite scores.
    pub fn from_scores(scores: impl IntoIterator<Item = (DocId, f64)>) -> Result<Self> {
        let mut entries: Vec<(DocId, f64)> = scores.into_iter().collect();
        let mut seen = HashSet::with_capacity(entries.len());
        for (doc, score) in &entries {
            if !score.is_finite() {
                return Err(Error::domain(format!("non-finite score {score} for document {doc}")));
            }
            if !seen.insert(doc) {
                return Err(Error::domain(format!("duplicate document {doc} in ranked list")));
            }
        }
        entries.sort_by(canonical_order);
        Ok(Self { entries })
    }

    /// Builds a list whose order is given by position: the head gets the
    /// highest score. Scores are `len - position`.
    pub fn from_ranking(docs: impl IntoIterator<Item = DocId>) -> Result<Self> {
        let docs: Vec<DocId> = docs.into_iter().collect();
        let n = docs.len();
        Self::from_scores(docs.into_iter().enumerate().map(|(i, d)| (d, (n - i) as f64)))
    }

    pub(crate) fn from_canonical(entries: Vec<(DocId, f64)>) -> Self {
        debug_assert!(entries
            .windows(2)
            .all(|w| canonical_order(&w[0], &w[1]) == Ordering::Less));
        Self { entries }
    }

    pub fn entries(&self) -> &[(DocId, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn docs(&self) -> impl Iterator<Item = &DocId> {
        self.entries.iter().map(|(d, _)| d)
    }

    /// Iterates `(rank, doc, score)` with 1-based ranks.
    pub fn ranked(&self) -> impl Iterator<Item = (usize, &DocId, f64)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, (d, s))| (i + 1, d, *s))
    }

    /// 1-based rank of `doc`, if present.
    pub fn rank_of(&self, doc: &DocId) -> Option<usize> {
        self.entries.iter().position(|(d, _)| d == doc).map(|i| i + 1)
    }

    pub fn score_of(&self, doc: &DocId) -> Option<f64> {
        self.entries.iter().find(|(d, _)| d == doc).map(|(_, s)| *s)
    }

    /// First `min(depth, len)` entries.
    pub fn truncate(&self, depth: usize) -> ScoredList {
        Self {
            entries: self.entries.iter().take(depth).cloned().collect(),
        }
    }
}

/// Free-function form of [`ScoredList::truncate`].
pub fn truncate(list: &ScoredList, depth: usize) -> ScoredList {
    list.truncate(depth)
}

/// Per-query ranked lists under one run tag.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSet {
    pub tag: String,
    pub lists: BTreeMap<QueryId, ScoredList>,
}

impl RunSet {
    pub fn new(tag: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            lists: BTreeMap::new(),
        }
    }

    pub fn with_lists(tag: impl Into<String>, lists: BTreeMap<QueryId, ScoredList>) -> Self {
        Self {
            tag: tag.into(),
            lists,
        }
    }

    pub fn get(&self, query: &QueryId) -> Option<&ScoredList> {
        self.lists.get(query)
    }

    pub fn insert(&mut self, query: QueryId, list: ScoredList) -> Option<ScoredList> {
        self.lists.insert(query, list)
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn queries(&self) -> impl Iterator<Item = &QueryId> {
        self.lists.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&QueryId, &ScoredList)> {
        self.lists.iter()
    }

    /// Truncates every list to `depth`.
    pub fn truncate(&self, depth: usize) -> RunSet {
        RunSet {
            tag: self.tag.clone(),
            lists: self
                .lists
                .iter()
                .map(|(q, l)| (q.clone(), l.truncate(depth)))
                .collect(),
        }
    }
}

/// Graded relevance judgments.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<QueryId, BTreeMap<DocId, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a judgment. A pair may only be judged once.
    pub fn insert(&mut self, query: QueryId, doc: DocId, grade: u32) -> Result<()> {
        let per_query = self.judgments.entry(query.clone()).or_default();
        if per_query.contains_key(&doc) {
            return Err(Error::Duplicate {
                query: query.to_string(),
                doc: doc.to_string(),
            });
        }
        per_query.insert(doc, grade);
        Ok(())
    }

    /// Grade of `(query, doc)`; unjudged documents are grade 0.
    pub fn grade(&self, query: &QueryId, doc: &DocId) -> u32 {
        self.judgments
            .get(query)
            .and_then(|m| m.get(doc))
            .copied()
            .unwrap_or(0)
    }

    pub fn for_query(&self, query: &QueryId) -> Option<&BTreeMap<DocId, u32>> {
        self.judgments.get(query)
    }

    pub fn contains_query(&self, query: &QueryId) -> bool {
        self.judgments.contains_key(query)
    }

    pub fn queries(&self) -> impl Iterator<Item = &QueryId> {
        self.judgments.keys()
    }

    /// Number of `(query, doc)` pairs.
    pub fn len(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (&QueryId, &DocId, u32)> {
        self.judgments
            .iter()
            .flat_map(|(q, m)| m.iter().map(move |(d, g)| (q, d, *g)))
    }
}

/// One decomposed sub-query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubQuery {
    pub id: QueryId,
    pub text: String,
}

/// Original query id to its ordered sub-queries.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubQueryMap {
    groups: BTreeMap<QueryId, Vec<SubQuery>>,
}

impl SubQueryMap {
    /// Validates that every group is non-empty and that sub-query ids are
    /// unique across the whole map.
    pub fn new(groups: BTreeMap<QueryId, Vec<SubQuery>>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (query, subs) in &groups {
            if subs.is_empty() {
                return Err(Error::domain(format!("query {query} has no sub-queries")));
            }
            for sub in subs {
                if !seen.insert(&sub.id) {
                    return Err(Error::domain(format!("sub-query id {} appears more than once", sub.id)));
                }
            }
        }
        Ok(Self { groups })
    }

    pub fn groups(&self) -> &BTreeMap<QueryId, Vec<SubQuery>> {
        &self.groups
    }

    pub fn group(&self, query: &QueryId) -> Option<&[SubQuery]> {
        self.groups.get(query).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Total number of sub-queries.
    pub fn total(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&QueryId, &[SubQuery])> {
        self.groups.iter().map(|(q, s)| (q, s.as_slice()))
    }
}
