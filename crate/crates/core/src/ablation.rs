//! Sub-query retention ablation: keep `k` random sub-queries per query,
//! fuse, evaluate, and summarize each metric as mean and population
//! standard deviation over seeds.
//!
//! Sampling is uniform without replacement and fully determined by
//! `(seed, query id)`. Each group draws from its own ChaCha8 stream seeded
//! with `SHA-256("subfuse/subsample" || seed as u64 LE || query id bytes)`,
//! so adding or removing a query never changes another query's draw.
//! Survivors keep their original order.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fusion::{fuse_run_set, FusionStrategy};
use crate::metrics::{evaluate_with, Cutoffs, EvalOptions, EvalReport, Metric};
use crate::ranked::{Qrels, QueryId, RunSet, SubQueryMap};

/// How many sub-queries each query keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum KeepCount {
    Random(usize),
    All,
}

impl fmt::Display for KeepCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeepCount::Random(k) => write!(f, "{k}"),
            KeepCount::All => f.write_str("all"),
        }
    }
}

impl FromStr for KeepCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(KeepCount::All);
        }
        match s.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(KeepCount::Random(k)),
            _ => Err(Error::domain(format!("keep count must be a positive integer or `all`, got {s:?}"))),
        }
    }
}

impl TryFrom<String> for KeepCount {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<KeepCount> for String {
    fn from(k: KeepCount) -> String {
        k.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub keep_counts: Vec<KeepCount>,
    pub seeds: Vec<u64>,
    pub strategy: FusionStrategy,
    /// Depth of each fused list before evaluation.
    pub depth: usize,
    #[serde(default)]
    pub eval: EvalOptions,
}

impl AblationConfig {
    pub fn new(keep_counts: Vec<KeepCount>, seeds: Vec<u64>, strategy: FusionStrategy, depth: usize) -> Result<Self> {
        if keep_counts.is_empty() {
            return Err(Error::domain("ablation needs at least one keep count"));
        }
        if seeds.is_empty() {
            return Err(Error::domain("ablation needs at least one seed"));
        }
        Ok(Self {
            keep_counts,
            seeds,
            strategy,
            depth,
            eval: EvalOptions::default(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population statistics. The mean is accumulated as offsets from the
    /// first value, so identical inputs give that value and a zero spread.
    pub fn of(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "statistics of an empty sample");
        let n = values.len() as f64;
        let first = values[0];
        let mean = first + values.iter().map(|v| v - first).sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub keep: KeepCount,
    pub values: BTreeMap<Metric, MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub strategy: FusionStrategy,
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, keep: KeepCount) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.keep == keep)
    }

    /// Renders the `kept | metric ...` table with `mean ± std` cells. The
    /// `All` row shows the plain value.
    pub fn render(&self) -> String {
        let metrics: Vec<Metric> = self
            .rows
            .first()
            .map(|r| r.values.keys().copied().collect())
            .unwrap_or_default();
        let mut rows: Vec<Vec<String>> = vec![std::iter::once("Sub-queries kept".to_owned())
            .chain(metrics.iter().map(Metric::to_string))
            .collect()];
        for row in &self.rows {
            let mut cells = vec![match row.keep {
                KeepCount::Random(k) => format!("{k} random"),
                KeepCount::All => "All".to_owned(),
            }];
            for m in &metrics {
                let s = row.values[m];
                cells.push(match row.keep {
                    KeepCount::All => format!("{:.3}", s.mean),
                    KeepCount::Random(_) => format!("{:.3} ± {:.3}", s.mean, s.std),
                });
            }
            rows.push(cells);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for r in &rows {
            let mut line = format!("{:<w$}", r[0], w = widths[0]);
            for (c, cell) in r.iter().enumerate().skip(1) {
                let _ = write!(line, "  {cell:>w$}", w = widths[c]);
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}

fn group_rng(seed: u64, query: &QueryId) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(b"subfuse/subsample");
    h.update(seed.to_le_bytes());
    h.update(query.as_str().as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Reduces each group to `min(keep, size)` sub-queries.
pub fn subsample(map: &SubQueryMap, keep: usize, seed: u64) -> Result<SubQueryMap> {
    if keep == 0 {
        return Err(Error::domain("keep count must be at least 1"));
    }
    let groups = map
        .iter()
        .map(|(query, subs)| {
            if keep >= subs.len() {
                return (query.clone(), subs.to_vec());
            }
            let mut rng = group_rng(seed, query);
            let mut picked = rand::seq::index::sample(&mut rng, subs.len(), keep).into_vec();
            picked.sort_unstable();
            (query.clone(), picked.into_iter().map(|i| subs[i].clone()).collect())
        })
        .collect();
    SubQueryMap::new(groups)
}

fn fuse_and_evaluate(
    map: &SubQueryMap,
    sub_runs: &RunSet,
    qrels: &Qrels,
    config: &AblationConfig,
    cutoffs: &Cutoffs,
) -> Result<EvalReport> {
    let fused = fuse_run_set(map, sub_runs, config.strategy, config.depth, config.strategy.to_string())?;
    evaluate_with(&fused, qrels, cutoffs, config.eval)
}

pub fn run_ablation(
    map: &SubQueryMap,
    sub_runs: &RunSet,
    qrels: &Qrels,
    config: &AblationConfig,
    cutoffs: &Cutoffs,
) -> Result<AblationReport> {
    if let Some(missing) = map
        .iter()
        .flat_map(|(_, subs)| subs)
        .find(|s| sub_runs.get(&s.id).is_none())
    {
        return Err(Error::MissingSubQuery(missing.id.to_string()));
    }
    let mut rows = Vec::with_capacity(config.keep_counts.len());
    for &keep in &config.keep_counts {
        let reports: Vec<EvalReport> = match keep {
            KeepCount::All => vec![fuse_and_evaluate(map, sub_runs, qrels, config, cutoffs)?],
            KeepCount::Random(k) => config
                .seeds
                .iter()
                .map(|&seed| fuse_and_evaluate(&subsample(map, k, seed)?, sub_runs, qrels, config, cutoffs))
                .collect::<Result<_>>()?,
        };
        let values = cutoffs
            .metrics()
            .map(|m| {
                let sample: Vec<f64> = reports.iter().map(|r| r.aggregate[&m]).collect();
                (m, MeanStd::of(&sample))
            })
            .collect();
        rows.push(AblationRow { keep, values });
    }
    Ok(AblationReport {
        strategy: config.strategy,
        seeds: config.seeds.clone(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranked::{parse_subquery_map, SubQuery};

    fn map(sizes: &[usize]) -> SubQueryMap {
        let groups = sizes
            .iter()
            .enumerate()
            .map(|(q, &n)| {
                let subs = (0..n)
                    .map(|j| SubQuery {
                        id: format!("{q}-{j}").parse().unwrap(),
                        text: format!("probe {j}"),
                    })
                    .collect();
                (format!("{q}").parse().unwrap(), subs)
            })
            .collect();
        SubQueryMap::new(groups).unwrap()
    }

    #[test]
    fn keep_all_or_more_is_identity() {
        let m = map(&[25, 1, 7]);
        assert_eq!(subsample(&m, 25, 3).unwrap(), m);
        let small = map(&[1]);
        assert_eq!(subsample(&small, 5, 3).unwrap(), small);
    }

    #[test]
    fn subsample_is_deterministic_and_order_preserving() {
        let m = map(&[25, 20, 9]);
        let a = subsample(&m, 5, 42).unwrap();
        assert_eq!(a, subsample(&m, 5, 42).unwrap());
        for (q, subs) in a.iter() {
            assert_eq!(subs.len(), 5);
            let original = m.group(q).unwrap();
            let positions: Vec<usize> = subs
                .iter()
                .map(|s| original.iter().position(|o| o.id == s.id).unwrap())
                .collect();
            assert!(positions.windows(2).all(|w| w[0] < w[1]));
        }
        assert_ne!(a, subsample(&m, 5, 43).unwrap());
    }

    #[test]
    fn adding_a_query_does_not_perturb_other_groups() {
        let two = map(&[25, 20]);
        let three = map(&[25, 20, 14]);
        let a = subsample(&two, 3, 7).unwrap();
        let b = subsample(&three, 3, 7).unwrap();
        for (q, subs) in a.iter() {
            assert_eq!(b.group(q).unwrap(), subs);
        }
    }

    #[test]
    fn zero_keep_is_rejected() {
        assert!(subsample(&map(&[3]), 0, 1).is_err());
        assert!("0".parse::<KeepCount>().is_err());
        assert_eq!("ALL".parse::<KeepCount>().unwrap(), KeepCount::All);
    }

    #[test]
    fn mean_std_of_constants_is_exact() {
        let s = MeanStd::of(&[0.1 + 0.2; 5]);
        assert_eq!(s.mean, 0.1 + 0.2);
        assert_eq!(s.std, 0.0);
        let s = MeanStd::of(&[1.0, 3.0]);
        assert_eq!((s.mean, s.std), (2.0, 1.0));
    }

    #[test]
    fn missing_sub_query_is_named() {
        let m = parse_subquery_map(br#"{"query_id":"q","sub_queries":[{"id":"s9","text":"a"}]}"#).unwrap();
        let config = AblationConfig::new(vec![KeepCount::All], vec![0], FusionStrategy::MaxSim, 100).unwrap();
        let err = run_ablation(&m, &RunSet::new("t"), &Qrels::new(), &config, &Cutoffs::standard()).unwrap_err();
        assert!(matches!(err, Error::MissingSubQuery(ref s) if s == "s9"));
    }

    #[test]
    fn config_requires_seeds_and_counts() {
        assert!(AblationConfig::new(vec![], vec![0], FusionStrategy::MaxSim, 10).is_err());
        assert!(AblationConfig::new(vec![KeepCount::All], vec![], FusionStrategy::MaxSim, 10).is_err());
    }
}
