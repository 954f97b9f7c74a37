use std::fs;
use std::path::{Path, PathBuf};

use erval_core::report::ReportEntry;
use erval_core::stats::{default_hill_grid, estimate_summary, parse_hill_grid, SummaryReport, SummaryStat};
use erval_core::{AttributeTable, Error, NameIndex};
use serde::Serialize;

use super::{read_attributes, read_benchmark, read_ids, read_membership};
use crate::args::StatsArgs;
use crate::error::{CliError, CliResult};
use crate::output::{emit, estimate_rows, num, table, ESTIMATE_HEADERS};

#[derive(Serialize)]
struct Release {
    release: String,
    report: SummaryReport,
}

#[derive(Serialize)]
struct Series {
    v: u32,
    series: Vec<Release>,
}

#[derive(Serialize)]
struct SampleEstimates {
    v: u32,
    design: String,
    k: usize,
    estimates: Vec<ReportEntry>,
}

pub fn run(a: StatsArgs, pretty: bool) -> CliResult<()> {
    let attrs = a.attributes.as_deref().map(read_attributes).transpose()?;
    if let Some(path) = &a.truth_sample {
        if a.hill_grid.is_some() {
            return Err(Error::Unsupported(
                "Hill numbers cannot be estimated from a sample; compute them on a full clustering with --membership"
                    .into(),
            )
            .into());
        }
        return estimate(path, &a.estimate, attrs.as_ref(), a.json_out.as_deref(), pretty);
    }

    let grid = match &a.hill_grid {
        Some(g) => parse_hill_grid(g)?,
        None => default_hill_grid(),
    };
    let subset = a.subset.as_deref().map(read_ids).transpose()?;
    let report_for = |path: &Path| -> CliResult<SummaryReport> {
        let mut c = read_membership(path)?;
        if let Some(keep) = &subset {
            c = c.restrict(keep)?;
        }
        let names = attrs.as_ref().map(|t| NameIndex::for_clustering(t, &c)).transpose()?;
        Ok(SummaryReport::compute(&c, names.as_ref(), &grid)?)
    };

    if let Some(dir) = &a.series {
        let series = release_files(dir)?
            .into_iter()
            .map(|p| {
                Ok(Release {
                    release: p.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                    report: report_for(&p)?,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let t = pretty.then(|| series_table(&series));
        return emit(&Series { v: 1, series }, a.json_out.as_deref(), t);
    }

    let path = a.membership.as_deref().expect("clap enforces one input");
    let report = report_for(path)?;
    let t = pretty.then(|| report_table(&report));
    emit(&report, a.json_out.as_deref(), t)
}

fn release_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::unreadable(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv"))
        .collect();
    if files.is_empty() {
        return Err(CliError::Usage(format!("no .csv files in `{}`", dir.display())));
    }
    files.sort();
    Ok(files)
}

fn estimate(
    path: &Path,
    which: &str,
    attrs: Option<&AttributeTable>,
    json_out: Option<&Path>,
    pretty: bool,
) -> CliResult<()> {
    let sample = read_benchmark(path)?.to_sample()?;
    let stats = which
        .split(',')
        .map(|s| SummaryStat::parse(s.trim()))
        .collect::<erval_core::Result<Vec<_>>>()?;
    let names = attrs.map(NameIndex::build);
    let estimates = stats
        .into_iter()
        .map(|s| match estimate_summary(&sample, s, names.as_ref()) {
            Ok(e) => ReportEntry::Estimate(e),
            Err(e) => ReportEntry::Failed {
                metric: s.as_str().into(),
                error: e.to_string(),
            },
        })
        .collect();
    let doc = SampleEstimates {
        v: 1,
        design: sample.design.as_str().into(),
        k: sample.len(),
        estimates,
    };
    let t = pretty.then(|| table(&ESTIMATE_HEADERS, &estimate_rows(&doc.estimates)));
    emit(&doc, json_out, t)
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_else(|| "-".into())
}

fn report_table(r: &SummaryReport) -> String {
    let mut rows = vec![
        vec!["records".into(), r.n_records.to_string()],
        vec!["clusters".into(), r.n_clusters.to_string()],
        vec!["average cluster size".into(), num(r.avg_cluster_size)],
        vec!["matching rate".into(), num(r.matching_rate)],
        vec!["homonymy rate".into(), opt(r.homonymy_rate)],
        vec!["name variation rate".into(), opt(r.name_variation_rate)],
    ];
    rows.extend(r.hill.iter().map(|h| vec![if h.q.is_finite() { format!("H_{}", h.q) } else { "H_inf".into() }, num(h.value)]));
    table(&["statistic", "value"], &rows)
}

fn series_table(series: &[Release]) -> String {
    let rows: Vec<Vec<String>> = series
        .iter()
        .map(|s| {
            let r = &s.report;
            vec![
                s.release.clone(),
                r.n_records.to_string(),
                r.n_clusters.to_string(),
                num(r.avg_cluster_size),
                num(r.matching_rate),
                opt(r.homonymy_rate),
                opt(r.name_variation_rate),
            ]
        })
        .collect();
    table(
        &["release", "records", "clusters", "avg size", "matching", "homonymy", "name variation"],
        &rows,
    )
}
