use std::sync::Arc;

use erval_core::labeling::QcConfig;
use erval_service::{serve, AppState, ServiceConfig, TOKEN_ENV};

use super::{read_attributes, read_benchmark, read_membership};
use crate::args::ServeArgs;
use crate::error::{CliError, CliResult};

pub fn run(a: ServeArgs, threads: Option<usize>) -> CliResult<()> {
    let token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.trim().is_empty());
    if token.is_none() && !a.insecure_no_auth {
        return Err(CliError::Usage(format!(
            "set {TOKEN_ENV} to the bearer token, or pass --insecure-no-auth"
        )));
    }
    let config = ServiceConfig {
        data_dir: a.data_dir.clone(),
        prediction: read_membership(&a.prediction)?,
        prediction_snapshot: a.snapshot_id.clone().unwrap_or_else(|| {
            a.prediction
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
        }),
        attributes: a.attributes.as_deref().map(read_attributes).transpose()?,
        benchmark: a.truth_sample.as_deref().map(read_benchmark).transpose()?,
        token,
        qc: QcConfig {
            blocking_key: a.blocking_key,
            ..QcConfig::default()
        },
    };
    let state = Arc::new(AppState::open(config)?);

    let mut rt = tokio::runtime::Builder::new_multi_thread();
    if let Some(n) = threads {
        rt.worker_threads(n);
    }
    let rt = rt.enable_all().build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port))
            .await
            .map_err(|e| CliError::Runtime(format!("cannot listen on {}:{}: {e}", a.host, a.port)))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        serve(state, listener).await?;
        Ok(())
    })
}
