//! Fusion of per-sub-query ranked lists into one ranking per query.
//!
//! Five strategies are provided. For a document `v` and sub-lists
//! `q_1..q_N`, with `rank` the 1-based position and `s` the list score:
//!
//! | strategy       | fused score                               |
//! |----------------|-------------------------------------------|
//! | `rrf`          | `Σ_i 1 / (K + rank(v, q_i))`              |
//! | `weighted_rrf` | `Σ_i s(v, q_i) / (K + rank(v, q_i))`      |
//! | `sum_sim`      | `Σ_i s(v, q_i)`                           |
//! | `max_sim`      | `max_i s(v, q_i)`                         |
//! | `mean_sim`     | `(1/N) Σ_i s(v, q_i)`                     |
//!
//! A list that does not contain `v` contributes nothing to a sum and is
//! skipped by the max. `mean_sim` always divides by the total list count `N`.
//!
//! Sums are accumulated in exact rational arithmetic over the `f64` inputs
//! and rounded once. The fused score therefore does not depend on the order
//! of the sub-lists, and mathematically tied documents stay tied.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranked::{canonical_order, DocId, QueryId, RunSet, ScoredList, SubQueryMap};

/// Smoothing constant used when a strategy string omits one.
pub const DEFAULT_RRF_K: u32 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FusionStrategy {
    Rrf { k: u32 },
    WeightedRrf { k: u32 },
    SumSim,
    MaxSim,
    MeanSim,
}

impl FusionStrategy {
    /// Builds a strategy from its kind name and an optional constant, which
    /// is required to be positive for the RRF kinds and ignored otherwise.
    pub fn from_parts(kind: &str, k: Option<i64>) -> Result<Self> {
        let rrf_k = || -> Result<u32> {
            let k = k.unwrap_or(DEFAULT_RRF_K as i64);
            u32::try_from(k)
                .ok()
                .filter(|k| *k > 0)
                .ok_or_else(|| Error::domain(format!("RRF constant must be a positive integer, got {k}")))
        };
        match kind.to_ascii_lowercase().replace('-', "_").as_str() {
            "rrf" => Ok(Self::Rrf { k: rrf_k()? }),
            "weighted_rrf" | "wrrf" => Ok(Self::WeightedRrf { k: rrf_k()? }),
            "sum_sim" | "sum" => Ok(Self::SumSim),
            "max_sim" | "max" => Ok(Self::MaxSim),
            "mean_sim" | "mean" => Ok(Self::MeanSim),
            other => Err(Error::domain(format!("unknown fusion strategy {other:?}"))),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Rrf { .. } => "rrf",
            Self::WeightedRrf { .. } => "weighted_rrf",
            Self::SumSim => "sum_sim",
            Self::MaxSim => "max_sim",
            Self::MeanSim => "mean_sim",
        }
    }

    pub fn k(&self) -> Option<u32> {
        match self {
            Self::Rrf { k } | Self::WeightedRrf { k } => Some(*k),
            _ => None,
        }
    }
}

impl fmt::Display for FusionStrategy {
    /// `rrf-k10`, `weighted_rrf-k60`, `max_sim`, ...
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.k() {
            Some(k) => write!(f, "{}-k{k}", self.kind()),
            None => f.write_str(self.kind()),
        }
    }
}

impl FromStr for FusionStrategy {
    type Err = Error;

    /// Accepts the [`Display`](fmt::Display) form as well as bare kind names.
    fn from_str(s: &str) -> Result<Self> {
        match s.rsplit_once("-k") {
            Some((kind, k)) if !k.is_empty() && k.chars().all(|c| c.is_ascii_digit()) => {
                let k: i64 = k
                    .parse()
                    .map_err(|_| Error::domain(format!("bad RRF constant in {s:?}")))?;
                Self::from_parts(kind, Some(k))
            }
            _ => Self::from_parts(s, None),
        }
    }
}

/// The sub-query lists of one original query.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionInput {
    pub query: QueryId,
    sub_lists: Vec<ScoredList>,
}

impl FusionInput {
    pub fn new(query: QueryId, sub_lists: Vec<ScoredList>) -> Result<Self> {
        if sub_lists.is_empty() {
            return Err(Error::domain(format!("query {query}: fusion needs at least one sub-list")));
        }
        Ok(Self { query, sub_lists })
    }

    pub fn sub_lists(&self) -> &[ScoredList] {
        &self.sub_lists
    }

    /// `N`, the number of sub-lists.
    pub fn n(&self) -> usize {
        self.sub_lists.len()
    }
}

type Exact = BigRational;

/// Collects each document's per-list contributions.
fn contributions<T, F>(input: &FusionInput, mut contribution: F) -> HashMap<&DocId, Vec<T>>
where
    F: FnMut(usize, f64) -> T,
{
    let mut by_doc: HashMap<&DocId, Vec<T>> = HashMap::new();
    for list in &input.sub_lists {
        for (rank, doc, score) in list.ranked() {
            by_doc.entry(doc).or_default().push(contribution(rank, score));
        }
    }
    by_doc
}

fn exact(score: f64) -> Exact {
    Exact::from_float(score).expect("list scores are finite")
}

fn rounded(value: &Exact) -> f64 {
    value.to_f64().expect("a ratio of integers converts to f64")
}

fn into_list(scores: impl IntoIterator<Item = (DocId, f64)>) -> ScoredList {
    let mut entries: Vec<(DocId, f64)> = scores.into_iter().collect();
    entries.sort_by(canonical_order);
    ScoredList::from_canonical(entries)
}

fn check_k(k: u32) -> Result<u32> {
    if k == 0 {
        return Err(Error::domain("RRF constant K must be positive"));
    }
    Ok(k)
}

/// Sums contributions exactly and rounds once, so documents whose scores
/// are mathematically equal receive the same `f64` and fall back to the
/// document id order.
fn summed<F>(input: &FusionInput, contribution: F) -> Vec<(DocId, f64)>
where
    F: FnMut(usize, f64) -> Exact,
{
    contributions(input, contribution)
        .into_iter()
        .map(|(doc, parts)| {
            let total: Exact = parts.into_iter().sum();
            (doc.clone(), rounded(&total))
        })
        .collect()
}

fn reciprocal(k: u32, rank: usize, numerator: Exact) -> Exact {
    numerator / Exact::from_integer(BigInt::from(u64::from(k) + rank as u64))
}

/// Reciprocal rank fusion.
pub fn rrf(input: &FusionInput, k: u32) -> Result<ScoredList> {
    let k = check_k(k)?;
    Ok(into_list(summed(input, |rank, _| reciprocal(k, rank, Exact::one()))))
}

/// Reciprocal rank fusion with each contribution weighted by the list score.
pub fn weighted_rrf(input: &FusionInput, k: u32) -> Result<ScoredList> {
    let k = check_k(k)?;
    Ok(into_list(summed(input, |rank, score| reciprocal(k, rank, exact(score)))))
}

pub fn sum_sim(input: &FusionInput) -> ScoredList {
    into_list(summed(input, |_, score| exact(score)))
}

pub fn max_sim(input: &FusionInput) -> ScoredList {
    into_list(contributions(input, |_, score| score).into_iter().map(|(doc, parts)| {
        let best = parts.into_iter().fold(f64::NEG_INFINITY, f64::max);
        (doc.clone(), best)
    }))
}

/// `sum_sim` divided by `N`; the division happens on the rounded sum, so
/// `mean_sim == sum_sim / N` holds bit for bit.
pub fn mean_sim(input: &FusionInput) -> ScoredList {
    let n = input.n() as f64;
    into_list(
        summed(input, |_, score| exact(score))
            .into_iter()
            .map(|(doc, sum)| (doc, sum / n)),
    )
}

/// Applies `strategy` and truncates the result to `output_depth`.
pub fn fuse(input: &FusionInput, strategy: FusionStrategy, output_depth: usize) -> Result<ScoredList> {
    let fused = match strategy {
        FusionStrategy::Rrf { k } => rrf(input, k)?,
        FusionStrategy::WeightedRrf { k } => weighted_rrf(input, k)?,
        FusionStrategy::SumSim => sum_sim(input),
        FusionStrategy::MaxSim => max_sim(input),
        FusionStrategy::MeanSim => mean_sim(input),
    };
    Ok(fused.truncate(output_depth))
}

/// Assembles the fusion input of `query` from a run keyed by sub-query id.
pub fn gather_input(map: &SubQueryMap, sub_runs: &RunSet, query: &QueryId) -> Result<FusionInput> {
    let group = map
        .group(query)
        .ok_or_else(|| Error::domain(format!("query {query} is not in the sub-query map")))?;
    let lists = group
        .iter()
        .map(|sub| {
            sub_runs
                .get(&sub.id)
                .cloned()
                .ok_or_else(|| Error::MissingSubQuery(sub.id.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    FusionInput::new(query.clone(), lists)
}

/// Fuses every query of `map`. `sub_runs` is keyed by sub-query id; the
/// output run is keyed by original query id and tagged `tag`.
pub fn fuse_run_set(
    map: &SubQueryMap,
    sub_runs: &RunSet,
    strategy: FusionStrategy,
    output_depth: usize,
    tag: impl Into<String>,
) -> Result<RunSet> {
    let mut out = RunSet::new(tag);
    for (query, _) in map.iter() {
        let input = gather_input(map, sub_runs, query)?;
        out.insert(query.clone(), fuse(&input, strategy, output_depth)?);
    }
    Ok(out)
}
