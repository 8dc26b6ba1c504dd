#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{ToPrimitive, Zero};
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use subfuse::fusion::{FusionInput, FusionStrategy};
use subfuse::ranked::{DocId, QueryId, ScoredList};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture(rel: &str) -> PathBuf {
    fixtures().join(rel)
}

pub fn read_fixture(rel: &str) -> Vec<u8> {
    std::fs::read(fixture(rel)).unwrap_or_else(|e| panic!("reading fixture {rel}: {e}"))
}

pub fn doc(s: &str) -> DocId {
    s.parse().expect("valid doc id")
}

pub fn query(s: &str) -> QueryId {
    s.parse().expect("valid query id")
}

/// A fusion instance as plain data: each list is an unordered bag of
/// `(doc, score)` pairs.
#[derive(Debug, Clone)]
pub struct Instance {
    pub lists: Vec<Vec<(String, f64)>>,
}

impl Instance {
    /// Up to 10 documents and up to 5 lists with scores in `[0, 1]`. A
    /// third of the lists draw scores from a coarse grid so that score ties
    /// within a list and coincident fused scores both occur.
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let universe = rng.random_range(1..=10usize);
        let n_lists = rng.random_range(1..=5usize);
        let mut lists = Vec::with_capacity(n_lists);
        for _ in 0..n_lists {
            let coarse = rng.random_bool(0.35);
            let mut list = Vec::new();
            for d in 0..universe {
                if !rng.random_bool(0.7) {
                    continue;
                }
                let score = if coarse {
                    [0.0, 0.25, 0.5, 0.75, 1.0][rng.random_range(0..5usize)]
                } else {
                    rng.random::<f64>()
                };
                list.push((format!("d{d}"), score));
            }
            lists.push(list);
        }
        Instance { lists }
    }

    /// Three lists where `a` sits at ranks (8, 8, 8) and `z` at (5, 10, 10).
    /// Under K = 10 both fused scores equal 1/6 exactly, while the two sums of
    /// rounded reciprocals differ in the last bit.
    pub fn rrf_tie() -> Self {
        let list = |a: usize, z: usize| {
            let mut fillers = (0..).map(|i| format!("f{i}"));
            (1..=10)
                .map(|rank| {
                    let d = if rank == a {
                        "a".to_owned()
                    } else if rank == z {
                        "z".to_owned()
                    } else {
                        fillers.next().unwrap()
                    };
                    (d, 1.0 - rank as f64 / 20.0)
                })
                .collect()
        };
        Instance {
            lists: vec![list(8, 5), list(8, 10), list(8, 10)],
        }
    }

    pub fn with_unit_scores(&self) -> Self {
        Instance {
            lists: self
                .lists
                .iter()
                .map(|l| l.iter().map(|(d, _)| (d.clone(), 1.0)).collect())
                .collect(),
        }
    }

    pub fn to_input(&self) -> FusionInput {
        let lists = self
            .lists
            .iter()
            .map(|l| ScoredList::from_scores(l.iter().map(|(d, s)| (doc(d), *s))).expect("valid list"))
            .collect();
        FusionInput::new(query("q"), lists).expect("at least one list")
    }
}

/// Ranks of one list: score descending, ties by document id ascending,
/// numbered from 1.
fn ranks(list: &[(String, f64)]) -> Vec<(String, usize, f64)> {
    let mut sorted = list.to_vec();
    sorted.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    sorted.into_iter().enumerate().map(|(i, (d, s))| (d, i + 1, s)).collect()
}

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap()
}

/// Brute-force fused scores in exact arithmetic, sorted by value
/// descending and document id ascending.
pub fn oracle(instance: &Instance, strategy: FusionStrategy) -> Vec<(String, BigRational)> {
    let n = instance.lists.len();
    let mut by_doc: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
    for list in &instance.lists {
        for (d, rank, s) in ranks(list) {
            by_doc.entry(d).or_default().push((rank, s));
        }
    }
    let mut scored: Vec<(String, BigRational)> = by_doc
        .into_iter()
        .map(|(d, hits)| {
            let mut total = BigRational::zero();
            let value = match strategy {
                FusionStrategy::Rrf { k } => {
                    for (rank, _) in &hits {
                        total += BigRational::new(BigInt::from(1), BigInt::from(k as usize + rank));
                    }
                    total
                }
                FusionStrategy::WeightedRrf { k } => {
                    for (rank, s) in &hits {
                        total += exact(*s) / BigRational::from_integer(BigInt::from(k as usize + rank));
                    }
                    total
                }
                FusionStrategy::SumSim => {
                    for (_, s) in &hits {
                        total += exact(*s);
                    }
                    total
                }
                FusionStrategy::MaxSim => hits.iter().map(|(_, s)| exact(*s)).max().unwrap(),
                FusionStrategy::MeanSim => {
                    for (_, s) in &hits {
                        total += exact(*s);
                    }
                    total / BigRational::from_integer(BigInt::from(n))
                }
            };
            (d, value)
        })
        .collect();
    scored.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored
}

pub fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap()
}

pub fn all_strategies() -> Vec<FusionStrategy> {
    vec![
        FusionStrategy::Rrf { k: 10 },
        FusionStrategy::Rrf { k: 60 },
        FusionStrategy::Rrf { k: 100 },
        FusionStrategy::WeightedRrf { k: 60 },
        FusionStrategy::SumSim,
        FusionStrategy::MaxSim,
        FusionStrategy::MeanSim,
    ]
}

/// Compares a fused list with the oracle. Returns a description of the
/// first disagreement.
pub fn compare_with_oracle(instance: &Instance, strategy: FusionStrategy, fused: &ScoredList) -> Result<(), String> {
    let expected = oracle(instance, strategy);
    let got: Vec<(String, f64)> = fused.entries().iter().map(|(d, s)| (d.to_string(), *s)).collect();
    let want_docs: Vec<&str> = expected.iter().map(|(d, _)| d.as_str()).collect();
    let got_docs: Vec<&str> = got.iter().map(|(d, _)| d.as_str()).collect();
    if want_docs != got_docs {
        return Err(format!("{strategy}: order {got_docs:?}, oracle {want_docs:?} on {instance:?}"));
    }
    for ((d, want), (_, have)) in expected.iter().zip(&got) {
        let want = to_f64(want);
        if (want - have).abs() > 1e-12 {
            return Err(format!("{strategy}: {d} scored {have}, oracle {want}"));
        }
    }
    Ok(())
}

/// Plain TREC column parsing for oracles that must not share the crate's
/// parser.
pub fn trec_columns(bytes: &[u8]) -> Vec<Vec<String>> {
    String::from_utf8_lossy(bytes)
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(str::to_owned).collect())
        .collect()
}

/// nDCG@k with `2^g - 1` gain and `log2(i + 1)` discount, and recall@k,
/// computed directly from run and qrels columns. Keys are `(query, metric)`.
pub fn hand_metrics(run: &[u8], qrels: &[u8], cutoffs: &[usize]) -> BTreeMap<(String, String), f64> {
    let mut judged: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
    for cols in trec_columns(qrels) {
        judged.entry(cols[0].clone()).or_default().insert(cols[2].clone(), cols[3].parse().unwrap());
    }
    let mut ranked: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for cols in trec_columns(run) {
        ranked.entry(cols[0].clone()).or_default().push((cols[2].clone(), cols[4].parse().unwrap()));
    }
    let mut out = BTreeMap::new();
    for (q, mut docs) in ranked {
        docs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        let grades = &judged[&q];
        let gain = |g: u32| 2f64.powi(g as i32) - 1.0;
        let mut ideal: Vec<u32> = grades.values().copied().collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let relevant = grades.values().filter(|g| **g > 0).count();
        for &k in cutoffs {
            let dcg: f64 = docs
                .iter()
                .take(k)
                .enumerate()
                .map(|(i, (d, _))| gain(grades.get(d).copied().unwrap_or(0)) / ((i + 2) as f64).log2())
                .sum();
            let idcg: f64 = ideal.iter().take(k).enumerate().map(|(i, g)| gain(*g) / ((i + 2) as f64).log2()).sum();
            let ndcg = if idcg > 0.0 { dcg / idcg } else { 0.0 };
            let found = docs.iter().take(k).filter(|(d, _)| grades.get(d).is_some_and(|g| *g > 0)).count();
            let recall = if relevant > 0 { found as f64 / relevant as f64 } else { 0.0 };
            out.insert((q.clone(), format!("nDCG@{k}")), ndcg);
            out.insert((q.clone(), format!("R@{k}")), recall);
        }
    }
    out
}
pub mod memory_ops;
