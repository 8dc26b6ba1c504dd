use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::{EvalReport, Metric};
use crate::error::{Error, Result};
use crate::ranked::QueryId;

/// Percentage change of one metric. `None` renders as `N/A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Delta(pub Option<f64>);

impl Delta {
    pub fn between(baseline: f64, candidate: f64) -> Self {
        if baseline <= 0.0 || candidate == baseline {
            return Delta(None);
        }
        Delta(Some(100.0 * (candidate - baseline) / baseline))
    }

    /// The percentage rounded to two decimals, as displayed.
    pub fn rounded(&self) -> Option<f64> {
        self.0.map(|p| format!("{p:.2}").parse().expect("formatted float"))
    }
}

impl fmt::Display for Delta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(p) => write!(f, "{p:+.2}"),
            None => f.write_str("N/A"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub baseline: EvalReport,
    pub candidate: EvalReport,
    pub deltas: BTreeMap<Metric, Delta>,
}

/// Percentage change of every aggregate metric from `baseline` to `candidate`.
pub fn delta_report(baseline: &EvalReport, candidate: &EvalReport) -> Result<DeltaReport> {
    let a: Vec<Metric> = baseline.metrics().collect();
    let b: Vec<Metric> = candidate.metrics().collect();
    if a != b {
        let show = |v: &[Metric]| v.iter().map(Metric::to_string).collect::<Vec<_>>().join(",");
        return Err(Error::MetricMismatch(format!(
            "{} has [{}], {} has [{}]",
            baseline.run,
            show(&a),
            candidate.run,
            show(&b)
        )));
    }
    let deltas = baseline
        .aggregate
        .iter()
        .map(|(m, &base)| (*m, Delta::between(base, candidate.aggregate[m])))
        .collect();
    Ok(DeltaReport {
        baseline: baseline.clone(),
        candidate: candidate.clone(),
        deltas,
    })
}

/// One line of the machine-readable report format. Rows without `query`
/// hold the run mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub run: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<QueryId>,
    pub metric: Metric,
    pub value: f64,
}

pub fn write_report_records(reports: &[EvalReport], per_query: bool) -> Vec<u8> {
    let mut out = Vec::new();
    let mut push = |record: ReportRecord| {
        serde_json::to_writer(&mut out, &record).expect("in-memory serialization");
        out.push(b'\n');
    };
    for report in reports {
        for (metric, value) in &report.aggregate {
            push(ReportRecord {
                run: report.run.clone(),
                query: None,
                metric: *metric,
                value: *value,
            });
        }
        if per_query {
            for (query, values) in &report.per_query {
                for (metric, value) in values {
                    push(ReportRecord {
                        run: report.run.clone(),
                        query: Some(query.clone()),
                        metric: *metric,
                        value: *value,
                    });
                }
            }
        }
    }
    out
}

/// Reads report records back into reports, one per run, in order of first
/// appearance. A run with per-query rows but no mean rows gets its means
/// computed.
pub fn parse_report_records(bytes: &[u8]) -> Result<Vec<EvalReport>> {
    let text = std::str::from_utf8(bytes).map_err(|_| Error::parse(0, "invalid UTF-8"))?;
    let mut reports: Vec<EvalReport> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: ReportRecord =
            serde_json::from_str(line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        let idx = match reports.iter().position(|r| r.run == record.run) {
            Some(idx) => idx,
            None => {
                reports.push(EvalReport::from_aggregate(record.run.clone(), BTreeMap::new()));
                reports.len() - 1
            }
        };
        let report = &mut reports[idx];
        let slot = match record.query {
            Some(q) => report.per_query.entry(q).or_default().insert(record.metric, record.value),
            None => report.aggregate.insert(record.metric, record.value),
        };
        if slot.is_some() {
            return Err(Error::parse(i + 1, format!("repeated {} row for run {}", record.metric, report.run)));
        }
    }
    for report in &mut reports {
        if report.aggregate.is_empty() {
            let metrics: Vec<Metric> = report
                .per_query
                .values()
                .flat_map(|m| m.keys().copied())
                .collect();
            for m in metrics {
                report.aggregate.insert(m, super::mean_of(&report.per_query, m));
            }
        }
    }
    Ok(reports)
}

fn metric_header(metrics: &[Metric]) -> Vec<String> {
    metrics.iter().map(Metric::to_string).collect()
}

fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c == 0 {
                let _ = write!(line, "{cell:<w$}", w = widths[0]);
            } else {
                let _ = write!(line, "  {cell:>w$}", w = widths[c]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// Plain-text table of run means, three decimals per cell.
pub fn render_table(reports: &[EvalReport]) -> String {
    let metrics: Vec<Metric> = reports
        .iter()
        .flat_map(|r| r.metrics())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut rows = vec![std::iter::once("Run".to_owned()).chain(metric_header(&metrics)).collect::<Vec<_>>()];
    for report in reports {
        let mut row = vec![report.run.clone()];
        row.extend(metrics.iter().map(|m| report.get(*m).map_or("-".to_owned(), |v| format!("{v:.3}"))));
        rows.push(row);
    }
    aligned(&rows)
}

/// Each candidate row followed by a row of percentage changes.
pub fn render_delta_table(deltas: &[DeltaReport]) -> String {
    let metrics: Vec<Metric> = deltas
        .first()
        .map(|d| d.deltas.keys().copied().collect())
        .unwrap_or_default();
    let mut rows = vec![std::iter::once("Run".to_owned()).chain(metric_header(&metrics)).collect::<Vec<_>>()];
    for d in deltas {
        let mut values = vec![d.candidate.run.clone()];
        values.extend(metrics.iter().map(|m| d.candidate.get(*m).map_or("-".to_owned(), |v| format!("{v:.3}"))));
        rows.push(values);
        let mut changes = vec![format!("  vs {}", d.baseline.run)];
        changes.extend(metrics.iter().map(|m| d.deltas.get(m).map_or("-".to_owned(), Delta::to_string)));
        rows.push(changes);
    }
    aligned(&rows)
}
