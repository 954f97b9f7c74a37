//! The estimates document shared by the command line and the HTTP service.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimators::{estimate_metric, Estimate, Globals, Metric};
use crate::labeling::BenchmarkSet;
use crate::metrics::ErrorTable;
use crate::model::Clustering;
use crate::sampling::ClusterSample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReportEntry {
    Estimate(Estimate),
    Failed { metric: String, error: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatesReport {
    pub v: u32,
    pub design: String,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_records: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_pred_clusters: Option<usize>,
    pub estimates: Vec<ReportEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateOptions {
    pub metrics: Vec<Metric>,
    pub beta: f64,
    /// Clamp reported points into `[0, 1]`.
    pub clamp: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            metrics: Metric::ALL.to_vec(),
            beta: 1.0,
            clamp: false,
        }
    }
}

/// Parses a comma-separated metric list; empty or `all` selects every
/// metric.
pub fn parse_metrics(s: &str) -> Result<Vec<Metric>> {
    let s = s.trim();
    if s.is_empty() || s == "all" {
        return Ok(Metric::ALL.to_vec());
    }
    s.split(',').map(|m| Metric::parse(m.trim())).collect()
}

/// Estimates each requested metric from an error table. Per-metric
/// failures are reported inline, including metrics that need `globals`
/// when none are given.
pub fn estimates_from_table(
    table: &ErrorTable,
    design: &str,
    globals: Option<Globals>,
    opts: &EstimateOptions,
) -> EstimatesReport {
    let estimates = opts
        .metrics
        .iter()
        .map(|&m| match estimate_metric(&table.rows, m, opts.beta, globals) {
            Ok(mut e) => {
                e.design = Some(design.to_string());
                ReportEntry::Estimate(if opts.clamp { e.clamped() } else { e })
            }
            Err(err) => ReportEntry::Failed {
                metric: m.as_str().into(),
                error: err.to_string(),
            },
        })
        .collect();
    EstimatesReport {
        v: 1,
        design: design.into(),
        k: table.len(),
        n_records: globals.map(|g| g.n_records),
        n_pred_clusters: globals.map(|g| g.n_pred_clusters),
        estimates,
    }
}

/// Error table plus estimates for a benchmark sample against a prediction.
pub fn estimates_report(
    sample: &ClusterSample,
    prediction: &Clustering,
    opts: &EstimateOptions,
) -> Result<EstimatesReport> {
    let table = ErrorTable::from_sample(sample, prediction)?;
    let globals = Globals {
        n_records: prediction.len(),
        n_pred_clusters: prediction.num_clusters(),
    };
    Ok(estimates_from_table(&table, sample.design.as_str(), Some(globals), opts))
}

/// Estimates for a benchmark file's draws.
pub fn benchmark_report(
    benchmark: &BenchmarkSet,
    prediction: &Clustering,
    opts: &EstimateOptions,
) -> Result<EstimatesReport> {
    estimates_report(&benchmark.to_sample()?, prediction, opts)
}

/// Canonical bytes of a report: compact or pretty JSON plus a newline.
pub fn to_json_bytes<T: Serialize>(doc: &T, pretty: bool) -> Result<Vec<u8>> {
    let mut out = if pretty {
        serde_json::to_vec_pretty(doc)?
    } else {
        serde_json::to_vec(doc)?
    };
    out.push(b'\n');
    Ok(out)
}
