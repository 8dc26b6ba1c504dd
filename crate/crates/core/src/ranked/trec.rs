//! TREC run (`qid Q0 docid rank score tag`) and qrels (`qid 0 docid grade`)
//! formats.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use super::{DocId, Qrels, QueryId, RunSet, ScoredList};
use crate::error::{Error, Result};

/// Splits input into `(1-based line number, trimmed line)`, skipping blank lines.
fn lines(bytes: &[u8]) -> impl Iterator<Item = Result<(usize, &str)>> {
    bytes
        .split(|b| *b == b'\n')
        .enumerate()
        .filter_map(|(i, raw)| match std::str::from_utf8(raw) {
            Ok(line) => {
                let line = line.trim();
                (!line.is_empty()).then_some(Ok((i + 1, line)))
            }
            Err(_) => Some(Err(Error::parse(i + 1, "invalid UTF-8"))),
        })
}

fn id_field<T: TryFrom<String, Error = Error>>(line: usize, value: &str) -> Result<T> {
    T::try_from(value.to_owned()).map_err(|e| Error::parse(line, e.to_string()))
}

/// Parses a TREC run file. Lists are re-sorted by score; the rank column is
/// ignored. The run tag is taken from the first line.
pub fn parse_run(bytes: &[u8]) -> Result<RunSet> {
    let mut tag: Option<String> = None;
    let mut per_query: BTreeMap<QueryId, Vec<(DocId, f64)>> = BTreeMap::new();
    let mut seen: HashSet<(QueryId, DocId)> = HashSet::new();

    for item in lines(bytes) {
        let (n, line) = item?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::parse(
                n,
                format!("expected 6 fields `qid Q0 docid rank score tag`, found {}", fields.len()),
            ));
        }
        let query: QueryId = id_field(n, fields[0])?;
        let doc: DocId = id_field(n, fields[2])?;
        let score: f64 = fields[4]
            .parse()
            .map_err(|_| Error::parse(n, format!("non-numeric score {:?}", fields[4])))?;
        if !score.is_finite() {
            return Err(Error::parse(n, format!("non-finite score {:?}", fields[4])));
        }
        if !seen.insert((query.clone(), doc.clone())) {
            return Err(Error::Duplicate {
                query: query.to_string(),
                doc: doc.to_string(),
            });
        }
        tag.get_or_insert_with(|| fields[5].to_owned());
        per_query.entry(query).or_default().push((doc, score));
    }

    let mut run = RunSet::new(tag.unwrap_or_default());
    for (query, entries) in per_query {
        run.insert(query, ScoredList::from_scores(entries)?);
    }
    Ok(run)
}

/// Writes at most `depth` lines per query, queries in id order.
pub fn write_run(run: &RunSet, depth: usize) -> Vec<u8> {
    let tag = if run.tag.is_empty() { "-" } else { run.tag.as_str() };
    let mut out = String::new();
    for (query, list) in run.iter() {
        for (rank, doc, score) in list.ranked().take(depth) {
            // f64 Display is the shortest representation that round-trips.
            let _ = writeln!(out, "{query} Q0 {doc} {rank} {score} {tag}");
        }
    }
    out.into_bytes()
}

/// Parses `qid iter docid grade` lines. Grade-0 lines are kept.
pub fn parse_qrels(bytes: &[u8]) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for item in lines(bytes) {
        let (n, line) = item?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                n,
                format!("expected 4 fields `qid 0 docid grade`, found {}", fields.len()),
            ));
        }
        let query: QueryId = id_field(n, fields[0])?;
        let doc: DocId = id_field(n, fields[2])?;
        let grade: u32 = fields[3].parse().map_err(|_| {
            Error::parse(n, format!("grade must be a non-negative integer, found {:?}", fields[3]))
        })?;
        qrels.insert(query, doc, grade)?;
    }
    Ok(qrels)
}

pub fn write_qrels(qrels: &Qrels) -> Vec<u8> {
    let mut out = String::new();
    for (q, d, g) in qrels.iter() {
        let _ = writeln!(out, "{q} 0 {d} {g}");
    }
    out.into_bytes()
}
