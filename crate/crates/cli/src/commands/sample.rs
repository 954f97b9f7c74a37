use std::fs;
use std::io;

use chrono::Utc;
use erval_core::labeling::{BenchmarkDraw, BenchmarkSet, Journal, LabelingSession, SessionSpec};
use erval_core::sampling::{
    expected_error_weights, sample_by_record_weight, sample_pps, sample_uniform, PairProbabilities,
};
use erval_core::Design;
use erval_service::state::validate_session_id;
use serde::Serialize;

use super::{open, read_membership, seed_or_draw};
use crate::args::SampleArgs;
use crate::error::{CliError, CliResult};
use crate::output::{create_file, emit, table};

#[derive(Serialize)]
struct SessionStarted {
    v: u32,
    session_id: String,
    design: Design,
    rng_seed: u64,
    tasks: usize,
    journal: String,
}

pub fn run(a: SampleArgs, pretty: bool) -> CliResult<()> {
    let prediction = read_membership(&a.membership)?;
    let design = Design::parse(&a.design)?;
    let weights = match (design, &a.match_probs) {
        (Design::ExpectedError, Some(p)) => {
            let probs = PairProbabilities::read_csv(open(p)?)
                .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            Some(expected_error_weights(&prediction, &probs))
        }
        (Design::ExpectedError, None) => {
            return Err(CliError::Usage("--design expected_error needs --match-probs".into()))
        }
        (_, Some(_)) => return Err(CliError::Usage("--match-probs only applies to --design expected_error".into())),
        _ => None,
    };
    let seed = seed_or_draw(a.seed);

    if let (Some(id), Some(dir)) = (&a.session, &a.data_dir) {
        validate_session_id(id)?;
        let spec = SessionSpec {
            session_id: id.clone(),
            design,
            k: a.k,
            rng_seed: seed,
            prediction_snapshot: a
                .membership
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            record_weights: weights.as_ref(),
        };
        let (session, first) = LabelingSession::create(spec, &prediction, Utc::now())?;
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("{id}.jsonl"));
        if path.exists() {
            return Err(CliError::Usage(format!("session journal `{}` already exists", path.display())));
        }
        Journal::create(&path, &first)?;
        let doc = SessionStarted {
            v: 1,
            session_id: id.clone(),
            design,
            rng_seed: seed,
            tasks: session.tasks.len(),
            journal: path.display().to_string(),
        };
        let t = pretty.then(|| {
            let rows: Vec<Vec<String>> = session
                .tasks
                .iter()
                .map(|t| vec![t.task_id.clone(), t.seed_record.to_string(), t.predicted_cluster.len().to_string()])
                .collect();
            table(&["task", "seed record", "predicted size"], &rows)
        });
        return emit(&doc, None, t);
    }

    let sample = match design {
        Design::PpsRecord => sample_pps(&prediction, a.k, seed)?,
        Design::UniformCluster => sample_uniform(&prediction, a.k, seed)?,
        Design::ExpectedError => sample_by_record_weight(&prediction, weights.as_ref().expect("checked above"), a.k, seed)?,
        Design::External => return Err(CliError::Usage("the external design cannot be sampled".into())),
    };
    let draws = sample
        .draws
        .into_iter()
        .map(|d| {
            let mut members = d.members;
            members.sort();
            BenchmarkDraw {
                seed_record: d.seed_record,
                members,
                p_c: d.p_c,
                design,
                finalized_at: None,
                labeler: None,
                session_id: None,
                prediction_snapshot: None,
                rng_seed: Some(seed),
            }
        })
        .collect();
    let set = BenchmarkSet::new(draws)?;
    match &a.out {
        Some(p) => set.write_jsonl(create_file(p)?)?,
        None => set.write_jsonl(io::stdout().lock())?,
    }
    Ok(())
}
