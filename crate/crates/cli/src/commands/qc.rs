use erval_core::labeling::{qc_check, BenchmarkSet, QcConfig, QcFlag, Severity, TaskStatus};
use serde::Serialize;

use super::{read_attributes, read_session};
use crate::args::QcArgs;
use crate::error::{CliError, CliResult};
use crate::output::{create_file, emit, table};

#[derive(Serialize)]
struct QcReport {
    v: u32,
    session_id: String,
    tasks: usize,
    finalized: usize,
    hard: usize,
    soft: usize,
    flags: Vec<QcFlag>,
}

pub fn run(a: QcArgs, pretty: bool) -> CliResult<()> {
    let session = read_session(&a.journal, a.snapshot.as_deref())?;
    let attrs = a.attributes.as_deref().map(read_attributes).transpose()?;
    let config = QcConfig {
        token_overlap: !a.no_token_overlap,
        blocking_key: a.blocking_key,
    };
    let flags = qc_check(&session, attrs.as_ref(), &config);
    let hard = flags.iter().filter(|f| f.severity == Severity::Hard).count();
    if let Some(out) = &a.export {
        BenchmarkSet::export(&session)?.write_jsonl(create_file(out)?)?;
    }
    let report = QcReport {
        v: 1,
        session_id: session.session_id.clone(),
        tasks: session.tasks.len(),
        finalized: session
            .tasks
            .iter()
            .filter(|t| t.status == TaskStatus::Finalized)
            .count(),
        hard,
        soft: flags.len() - hard,
        flags,
    };
    let t = pretty.then(|| {
        let rows: Vec<Vec<String>> = report
            .flags
            .iter()
            .map(|f| {
                vec![
                    f.task_id.clone(),
                    format!("{:?}", f.severity).to_lowercase(),
                    f.code.clone(),
                    f.record.clone().unwrap_or_default(),
                    f.message.clone(),
                ]
            })
            .collect();
        format!(
            "session {}: {}/{} tasks finalized, {} hard and {} soft flags\n\n{}",
            report.session_id,
            report.finalized,
            report.tasks,
            report.hard,
            report.soft,
            table(&["task", "severity", "code", "record", "message"], &rows)
        )
    });
    emit(&report, a.json_out.as_deref(), t)?;
    if a.strict && hard > 0 {
        return Err(CliError::Usage(format!("{hard} hard QC flag(s)")));
    }
    Ok(())
}
