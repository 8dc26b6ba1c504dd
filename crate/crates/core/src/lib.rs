//! Multi-stage retrieval over decomposed queries.
//!
//! A query is split into sub-queries, each sub-query is retrieved on its
//! own, and the per-sub-query rankings are fused into one ranking per
//! original query before a reranker reorders the head. The crate covers
//! each step and the tooling around it:
//!
//! - [`ranked`]: document and query ids, canonical scored lists, TREC run
//!   and qrels files, sub-query maps
//! - [`fusion`]: RRF, weighted RRF and the sum/max/mean score strategies
//! - [`metrics`]: nDCG and recall, report records and percentage deltas
//! - [`ablation`]: seeded random sub-query dropping
//! - [`pipeline`]: decomposition, retrieval and rerank clients, the staged
//!   driver and its manifest
//! - [`evidence`]: note and claim records, calibration attachment and
//!   threshold filtering
//! - [`memory`]: a slot-structured memory bank for video agents
//!
//! ```
//! use subfuse::fusion::{fuse, FusionInput, FusionStrategy};
//! use subfuse::ranked::ScoredList;
//!
//! let a = ScoredList::from_ranking(["v1", "v2"].map(|d| d.parse().unwrap()))?;
//! let b = ScoredList::from_ranking(["v2", "v3"].map(|d| d.parse().unwrap()))?;
//! let input = FusionInput::new("q1".parse()?, vec![a, b])?;
//! let fused = fuse(&input, FusionStrategy::Rrf { k: 60 }, 10)?;
//! assert_eq!(fused.docs().next().unwrap().as_str(), "v2");
//! # Ok::<(), subfuse::Error>(())
//! ```
//!
//! The guide under `book/` walks through each module; its snippets are
//! compiled as doctests of this crate.

pub mod ablation;
pub mod error;
pub mod evidence;
pub mod fusion;
pub mod memory;
pub mod metrics;
pub mod pipeline;
pub mod ranked;

pub use error::{Error, ErrorKind, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/ranked-lists.md")]
    mod ranked_lists {}
    #[doc = include_str!("../../../book/src/fusion.md")]
    mod fusion {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/ablation.md")]
    mod ablation {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/evidence.md")]
    mod evidence {}
    #[doc = include_str!("../../../book/src/memory.md")]
    mod memory {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
