use erval_core::labeling::audit::{read_tags_csv, write_tags_csv};
use erval_core::labeling::{audit_frequencies, TagFrequency};
use serde::Serialize;

use super::{open, read_session};
use crate::args::AuditArgs;
use crate::error::{CliError, CliResult};
use crate::output::{create_file, emit, num, table};

#[derive(Serialize)]
struct AuditReport {
    v: u32,
    tags: usize,
    frequencies: Vec<TagFrequency>,
}

pub fn run(a: AuditArgs, pretty: bool) -> CliResult<()> {
    let tags = match (&a.tags, &a.journal) {
        (Some(p), _) => read_tags_csv(open(p)?).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        (None, Some(j)) => read_session(j, None)?.tags,
        (None, None) => unreachable!("clap enforces one input"),
    };
    if let Some(out) = &a.tags_out {
        write_tags_csv(&tags, create_file(out)?)?;
    }
    let report = AuditReport {
        v: 1,
        tags: tags.len(),
        frequencies: audit_frequencies(&tags)?,
    };
    let t = pretty.then(|| {
        let rows: Vec<Vec<String>> = report
            .frequencies
            .iter()
            .map(|f| {
                vec![
                    f.direction.as_str().into(),
                    f.label.clone(),
                    f.count.to_string(),
                    num(f.weight),
                    num(f.frequency),
                ]
            })
            .collect();
        table(&["direction", "label", "tags", "weight", "frequency"], &rows)
    });
    emit(&report, a.json_out.as_deref(), t)
}
