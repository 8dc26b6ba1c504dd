use std::collections::HashMap;

use log::warn;

use crate::error::Result;
use crate::ranked::{DocId, RunSet, ScoredList};

/// Reorders the top `depth` documents of every fused list by external
/// rerank scores.
///
/// Documents in the head that carry a rerank score come first, by descending
/// rerank score (equal scores keep their fused order). Unscored head
/// documents follow in fused order, then the untouched tail. Scores for
/// documents outside the head are ignored with a warning.
///
/// A query whose head receives no usable score is copied through unchanged.
/// Otherwise the output scores are `len - position`, which encodes the new
/// order and nothing else.
pub fn inject_rerank(fused: &RunSet, rerank: &RunSet, depth: usize) -> Result<RunSet> {
    for query in rerank.queries() {
        if fused.get(query).is_none() {
            warn!("rerank scores for query {query}, which is not in the fused run; ignored");
        }
    }
    let mut out = RunSet::new(fused.tag.clone());
    for (query, list) in fused.iter() {
        let reordered = match rerank.get(query) {
            Some(scores) => rerank_list(query.as_str(), list, scores, depth)?,
            None => list.clone(),
        };
        out.insert(query.clone(), reordered);
    }
    Ok(out)
}

fn rerank_list(query: &str, list: &ScoredList, scores: &ScoredList, depth: usize) -> Result<ScoredList> {
    let head_len = depth.min(list.len());
    let head: HashMap<&DocId, usize> = list.docs().take(head_len).enumerate().map(|(i, d)| (d, i)).collect();

    let mut scored: Vec<(usize, f64)> = Vec::new();
    for (doc, score) in scores.entries() {
        match head.get(doc) {
            Some(&pos) => scored.push((pos, *score)),
            None => warn!("query {query}: rerank score for {doc} outside the top {depth}; ignored"),
        }
    }
    if scored.is_empty() {
        return Ok(list.clone());
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut placed = vec![false; head_len];
    let mut order: Vec<usize> = Vec::with_capacity(list.len());
    for (pos, _) in scored {
        placed[pos] = true;
        order.push(pos);
    }
    order.extend((0..head_len).filter(|p| !placed[*p]));
    order.extend(head_len..list.len());

    let entries = list.entries();
    ScoredList::from_ranking(order.into_iter().map(|p| entries[p].0.clone()))
}
