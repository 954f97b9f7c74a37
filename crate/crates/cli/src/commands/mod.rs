mod audit;
mod estimate;
mod qc;
mod sample;
mod serve;
mod simulate;
mod stats;

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use erval_core::labeling::journal::{load_session, read_entries};
use erval_core::labeling::{BenchmarkSet, LabelingSession};
use erval_core::{AttributeTable, Clustering, ErrorTable, RecordId};

use crate::args::{Cli, Command};
use crate::error::{CliError, CliResult};

pub fn run(cli: Cli) -> CliResult<()> {
    let pretty = cli.pretty;
    match cli.command {
        Command::Stats(a) => stats::run(a, pretty),
        Command::Estimate(a) => estimate::run(a, pretty),
        Command::Sample(a) => sample::run(a, pretty),
        Command::Simulate(a) => simulate::run(a, pretty),
        Command::Qc(a) => qc::run(a, pretty),
        Command::Serve(a) => serve::run(a, cli.threads),
        Command::AuditReport(a) => audit::run(a, pretty),
    }
}

/// The given seed, or a fresh one announced on stderr.
pub fn seed_or_draw(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s: u64 = rand::random();
        eprintln!("seed: {s}");
        s
    })
}

pub fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::unreadable(path, e))
}

/// Input errors name the file they came from.
fn in_file<T>(path: &Path, r: erval_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| match e {
        erval_core::Error::Io(io) => CliError::unreadable(path, io),
        e => CliError::Usage(format!("{}: {e}", path.display())),
    })
}

pub fn read_membership(path: &Path) -> CliResult<Clustering> {
    in_file(path, Clustering::read_csv(open(path)?))
}

pub fn read_attributes(path: &Path) -> CliResult<AttributeTable> {
    in_file(path, AttributeTable::read_csv(open(path)?))
}

pub fn read_benchmark(path: &Path) -> CliResult<BenchmarkSet> {
    in_file(path, BenchmarkSet::read_jsonl(open(path)?))
}

pub fn read_error_table(path: &Path) -> CliResult<ErrorTable> {
    in_file(path, ErrorTable::read_csv(open(path)?))
}

pub fn read_session(journal: &Path, snapshot: Option<&Path>) -> CliResult<LabelingSession> {
    let (entries, _) = in_file(journal, read_entries(journal))?;
    in_file(journal, load_session(&entries, snapshot))
}

/// One record id per non-blank line.
pub fn read_ids(path: &Path) -> CliResult<std::collections::BTreeSet<RecordId>> {
    let mut ids = std::collections::BTreeSet::new();
    for line in open(path)?.lines() {
        let line = line.map_err(|e| CliError::unreadable(path, e))?;
        let id = line.trim();
        if !id.is_empty() {
            ids.insert(RecordId::from(id));
        }
    }
    Ok(ids)
}

pub fn parse_list<T>(s: &str, what: &str, parse: impl Fn(&str) -> Option<T>) -> CliResult<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| parse(t).ok_or_else(|| CliError::Usage(format!("bad {what} `{t}`"))))
        .collect()
}
