//! nDCG@k and Recall@k, per query and averaged over queries.
//!
//! nDCG uses exponential gain `2^grade - 1` and a `log2(rank + 1)` discount
//! by default; the ideal ranking is built from every judged document of the
//! query. Unjudged documents count as grade 0. Queries without any relevant
//! document score 0 on both measures.

mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranked::{Qrels, QueryId, RunSet, ScoredList};

pub use report::{
    delta_report, parse_report_records, render_delta_table, render_table, write_report_records, Delta,
    DeltaReport, ReportRecord,
};

/// Strictly increasing evaluation depths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Cutoffs(Vec<usize>);

impl Cutoffs {
    pub fn new(values: Vec<usize>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("at least one cutoff is required"));
        }
        if values.iter().any(|&k| k == 0) {
            return Err(Error::domain("cutoffs must be positive"));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain(format!("cutoffs must be strictly increasing: {values:?}")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[usize] {
        &self.0
    }

    /// The set used for retrieval tables: 10, 20, 100.
    pub fn standard() -> Self {
        Self(vec![10, 20, 100])
    }

    /// Every `(measure, k)` combination, nDCG first.
    pub fn metrics(&self) -> impl Iterator<Item = Metric> + '_ {
        self.0
            .iter()
            .map(|&k| Metric::Ndcg(k))
            .chain(self.0.iter().map(|&k| Metric::Recall(k)))
    }
}

impl TryFrom<Vec<usize>> for Cutoffs {
    type Error = Error;

    fn try_from(values: Vec<usize>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<Cutoffs> for Vec<usize> {
    fn from(c: Cutoffs) -> Self {
        c.0
    }
}

impl FromStr for Cutoffs {
    type Err = Error;

    /// Comma-separated list, e.g. `10,20,100`.
    fn from_str(s: &str) -> Result<Self> {
        let values = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::domain(format!("bad cutoff {p:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(values)
    }
}

/// A measure at a depth. Orders nDCG before recall, then by depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Metric {
    Ndcg(usize),
    Recall(usize),
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Ndcg(k) => write!(f, "nDCG@{k}"),
            Metric::Recall(k) => write!(f, "R@{k}"),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::domain(format!("unknown metric {s:?}"));
        let (name, k) = s.split_once('@').ok_or_else(bad)?;
        let k: usize = k.parse().map_err(|_| bad())?;
        if k == 0 {
            return Err(bad());
        }
        match name {
            "nDCG" | "ndcg" | "ndcg_cut" => Ok(Metric::Ndcg(k)),
            "R" | "Recall" | "recall" => Ok(Metric::Recall(k)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for Metric {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Metric> for String {
    fn from(m: Metric) -> String {
        m.to_string()
    }
}

/// Gain applied to a relevance grade in nDCG.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gain {
    /// `2^grade - 1`.
    #[default]
    Exponential,
    /// `grade`, as `trec_eval` computes it.
    Linear,
}

impl Gain {
    fn of(self, grade: u32) -> f64 {
        match self {
            Gain::Exponential => 2f64.powi(grade as i32) - 1.0,
            Gain::Linear => f64::from(grade),
        }
    }
}

fn dcg(grades: impl Iterator<Item = u32>, gain: Gain) -> f64 {
    grades
        .enumerate()
        .map(|(i, g)| gain.of(g) / ((i + 2) as f64).log2())
        .sum()
}

/// nDCG@k with an explicit gain function.
pub fn ndcg_at_k_with(list: &ScoredList, qrels: &Qrels, query: &QueryId, k: usize, gain: Gain) -> f64 {
    let Some(judged) = qrels.for_query(query) else {
        return 0.0;
    };
    let mut ideal: Vec<u32> = judged.values().copied().filter(|&g| g > 0).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(ideal.into_iter().take(k), gain);
    if idcg <= 0.0 {
        return 0.0;
    }
    let actual = dcg(list.docs().take(k).map(|d| qrels.grade(query, d)), gain);
    actual / idcg
}

pub fn ndcg_at_k(list: &ScoredList, qrels: &Qrels, query: &QueryId, k: usize) -> f64 {
    ndcg_at_k_with(list, qrels, query, k, Gain::Exponential)
}

/// Fraction of the query's relevant documents (grade > 0) found in the top `k`.
pub fn recall_at_k(list: &ScoredList, qrels: &Qrels, query: &QueryId, k: usize) -> f64 {
    let relevant = qrels
        .for_query(query)
        .map_or(0, |m| m.values().filter(|&&g| g > 0).count());
    if relevant == 0 {
        return 0.0;
    }
    let found = list
        .docs()
        .take(k)
        .filter(|d| qrels.grade(query, d) > 0)
        .count();
    found as f64 / relevant as f64
}

/// What to do with a run query that has no judgments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MismatchPolicy {
    #[default]
    Error,
    Skip,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub on_mismatch: MismatchPolicy,
    /// Leave queries whose judgments contain no relevant document out of the
    /// report instead of scoring them 0.
    pub exclude_no_relevant: bool,
    pub gain: Gain,
}

/// Per-query and mean metric values for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run: String,
    pub per_query: BTreeMap<QueryId, BTreeMap<Metric, f64>>,
    pub aggregate: BTreeMap<Metric, f64>,
}

impl EvalReport {
    /// A report that carries only means, e.g. values copied from a table.
    pub fn from_aggregate(run: impl Into<String>, aggregate: BTreeMap<Metric, f64>) -> Self {
        Self {
            run: run.into(),
            per_query: BTreeMap::new(),
            aggregate,
        }
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        self.aggregate.get(&metric).copied()
    }

    pub fn metrics(&self) -> impl Iterator<Item = Metric> + '_ {
        self.aggregate.keys().copied()
    }
}

/// Arithmetic mean over per-query values, in query-id order.
fn mean_of(per_query: &BTreeMap<QueryId, BTreeMap<Metric, f64>>, metric: Metric) -> f64 {
    let values: Vec<f64> = per_query.values().filter_map(|m| m.get(&metric).copied()).collect();
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn evaluate(run: &RunSet, qrels: &Qrels, cutoffs: &Cutoffs) -> Result<EvalReport> {
    evaluate_with(run, qrels, cutoffs, EvalOptions::default())
}

pub fn evaluate_with(run: &RunSet, qrels: &Qrels, cutoffs: &Cutoffs, options: EvalOptions) -> Result<EvalReport> {
    if run.is_empty() {
        return Err(Error::domain("cannot evaluate an empty run"));
    }
    let mut per_query = BTreeMap::new();
    for (query, list) in run.iter() {
        let Some(judged) = qrels.for_query(query) else {
            match options.on_mismatch {
                MismatchPolicy::Error => return Err(Error::UnjudgedQuery(query.to_string())),
                MismatchPolicy::Skip => {
                    warn!("run query {query} has no judgments; skipped");
                    continue;
                }
            }
        };
        if options.exclude_no_relevant && judged.values().all(|&g| g == 0) {
            continue;
        }
        let values: BTreeMap<Metric, f64> = cutoffs
            .metrics()
            .map(|m| {
                let v = match m {
                    Metric::Ndcg(k) => ndcg_at_k_with(list, qrels, query, k, options.gain),
                    Metric::Recall(k) => recall_at_k(list, qrels, query, k),
                };
                (m, v)
            })
            .collect();
        per_query.insert(query.clone(), values);
    }
    if per_query.is_empty() {
        return Err(Error::domain("no run query could be evaluated"));
    }
    let aggregate = cutoffs.metrics().map(|m| (m, mean_of(&per_query, m))).collect();
    Ok(EvalReport {
        run: run.tag.clone(),
        per_query,
        aggregate,
    })
}
