use erval_core::report::{
    benchmark_report, estimates_from_table, estimates_report, parse_metrics, EstimateOptions, EstimatesReport,
};
use erval_core::{Design, ErrorTable, Globals};

use super::{read_benchmark, read_error_table, read_membership};
use crate::args::{EstimateArgs, Weights};
use crate::error::{CliError, CliResult};
use crate::output::{create_file, emit, estimate_rows, table, ESTIMATE_HEADERS};

pub fn run(a: EstimateArgs, pretty: bool) -> CliResult<()> {
    if !(a.beta > 0.0 && a.beta.is_finite()) {
        return Err(CliError::Usage("--beta must be positive".into()));
    }
    let opts = EstimateOptions {
        metrics: parse_metrics(&a.metrics)?,
        beta: a.beta,
        clamp: a.clamp,
    };
    let prediction = a.prediction.as_deref().map(read_membership).transpose()?;

    let report = if let Some(path) = &a.truth_sample {
        let prediction = prediction.as_ref().expect("clap requires --prediction");
        let benchmark = read_benchmark(path)?;
        let mut sample = benchmark.to_sample()?;
        let report = match a.weights {
            // the same code path as the service
            Weights::File => benchmark_report(&benchmark, prediction, &opts)?,
            w => {
                let design = if w == Weights::Uniform {
                    Design::UniformCluster
                } else {
                    Design::PpsRecord
                };
                sample.reweight(design, prediction.len())?;
                estimates_report(&sample, prediction, &opts)?
            }
        };
        if let Some(out) = &a.table_out {
            ErrorTable::from_sample(&sample, prediction)?.write_csv(create_file(out)?)?;
        }
        report
    } else {
        let path = a.error_table.as_deref().expect("clap enforces one input");
        let mut table = read_error_table(path)?;
        let globals = match (&prediction, a.n_records, a.n_pred_clusters) {
            (Some(p), _, _) => Some(Globals {
                n_records: p.len(),
                n_pred_clusters: p.num_clusters(),
            }),
            (None, Some(n_records), Some(n_pred_clusters)) => Some(Globals {
                n_records,
                n_pred_clusters,
            }),
            (None, None, None) => None,
            _ => {
                return Err(CliError::Usage(
                    "--n-records and --n-pred-clusters go together".into(),
                ))
            }
        };
        let mut design = a.design.clone();
        match a.weights {
            Weights::File => {}
            Weights::Uniform => {
                table.rows.iter_mut().for_each(|r| r.p_c = 1.0);
                design = Design::UniformCluster.as_str().into();
            }
            Weights::ClusterSize => {
                let n = globals
                    .map(|g| g.n_records)
                    .ok_or_else(|| CliError::Usage("--weights cluster_size needs N: pass --prediction or --n-records".into()))?;
                table.rows.iter_mut().for_each(|r| r.p_c = r.size as f64 / n as f64);
                design = Design::PpsRecord.as_str().into();
            }
        }
        if let Some(out) = &a.table_out {
            table.write_csv(create_file(out)?)?;
        }
        estimates_from_table(&table, &design, globals, &opts)
    };
    let t = pretty.then(|| pretty_report(&report));
    emit(&report, a.json_out.as_deref(), t)
}

fn pretty_report(r: &EstimatesReport) -> String {
    format!(
        "design {}, k = {}\n\n{}",
        r.design,
        r.k,
        table(&ESTIMATE_HEADERS, &estimate_rows(&r.estimates))
    )
}
