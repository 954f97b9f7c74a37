use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use chrono::{DateTime, Utc};
use erval_core::labeling::journal::{load_session, write_snapshot};
use erval_core::labeling::{Journal, JournalEntry, LabelingSession, QcConfig, SessionSpec, TokenIndex};
use erval_core::{AttributeTable, Clustering, Error, RecordId, Result};

use crate::error::{ApiError, ApiResult};

/// A snapshot is written after every this many journal events.
pub const SNAPSHOT_EVERY: u64 = 100;

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

/// Everything the service needs at startup.
pub struct ServiceConfig {
    /// Directory holding one journal per session.
    pub data_dir: PathBuf,
    pub prediction: Clustering,
    /// Identifier recorded in new sessions, e.g. the prediction file name.
    pub prediction_snapshot: String,
    pub attributes: Option<AttributeTable>,
    /// Benchmark served by `/estimates` when no session is named.
    pub benchmark: Option<erval_core::labeling::BenchmarkSet>,
    /// Required bearer token. `None` disables authentication.
    pub token: Option<String>,
    pub qc: QcConfig,
}

struct Stored {
    session: LabelingSession,
    journal: Journal,
}

#[derive(Default)]
struct Sessions {
    by_id: BTreeMap<String, Stored>,
    /// task id -> session id
    task_owner: HashMap<String, String>,
}

impl Sessions {
    fn insert(&mut self, stored: Stored) {
        let id = stored.session.session_id.clone();
        for t in &stored.session.tasks {
            self.task_owner.insert(t.task_id.clone(), id.clone());
        }
        self.by_id.insert(id, stored);
    }
}

pub struct AppState {
    pub prediction: Clustering,
    pub prediction_snapshot: String,
    pub attributes: Option<AttributeTable>,
    pub search: Option<TokenIndex>,
    pub benchmark: Option<erval_core::labeling::BenchmarkSet>,
    pub token: Option<String>,
    pub qc: QcConfig,
    pub clock: Clock,
    dir: PathBuf,
    sessions: Mutex<Sessions>,
}

fn journal_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.jsonl"))
}

fn snapshot_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.snapshot.json"))
}

/// Session ids become file names and task id prefixes, so they are limited
/// to ASCII letters, digits and `_`.
pub fn validate_session_id(id: &str) -> Result<()> {
    let ok = !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_');
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "session id `{id}` must be 1 to 64 ASCII letters, digits or `_`"
        )))
    }
}

impl AppState {
    /// Loads every session journal found in the data directory.
    pub fn open(config: ServiceConfig) -> Result<Self> {
        fs::create_dir_all(&config.data_dir)?;
        let mut sessions = Sessions::default();
        let mut paths: Vec<PathBuf> = fs::read_dir(&config.data_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let (journal, entries) = Journal::open(&path)?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let session = load_session(&entries, Some(&snapshot_path(&config.data_dir, stem)))?;
            sessions.insert(Stored { session, journal });
        }
        let search = config.attributes.as_ref().map(TokenIndex::build);
        Ok(Self {
            prediction: config.prediction,
            prediction_snapshot: config.prediction_snapshot,
            attributes: config.attributes,
            search,
            benchmark: config.benchmark,
            token: config.token,
            qc: config.qc,
            clock: Arc::new(Utc::now),
            dir: config.data_dir,
            sessions: Mutex::new(sessions),
        })
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn now(&self) -> DateTime<Utc> {
        (self.clock)()
    }

    fn lock(&self) -> MutexGuard<'_, Sessions> {
        // a panic while holding the lock cannot leave a half-applied event:
        // state is only replaced after the journal append succeeded
        self.sessions.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn create_session(
        &self,
        spec: SessionSpec<'_>,
        seeds: Option<Vec<RecordId>>,
    ) -> ApiResult<LabelingSession> {
        validate_session_id(&spec.session_id)?;
        let mut guard = self.lock();
        let path = journal_path(&self.dir, &spec.session_id);
        if guard.by_id.contains_key(&spec.session_id) || path.exists() {
            return Err(ApiError::conflict(format!(
                "session `{}` already exists",
                spec.session_id
            )));
        }
        let now = self.now();
        let (session, first) = match seeds {
            Some(seeds) => LabelingSession::from_seeds(spec, &self.prediction, seeds, now)?,
            None => LabelingSession::create(spec, &self.prediction, now)?,
        };
        let journal = Journal::create(&path, &first)?;
        let out = session.clone();
        guard.insert(Stored { session, journal });
        Ok(out)
    }

    /// Runs `f` on the session.
    pub fn read<R>(&self, session_id: &str, f: impl FnOnce(&LabelingSession) -> R) -> ApiResult<R> {
        let guard = self.lock();
        let s = guard
            .by_id
            .get(session_id)
            .ok_or_else(|| ApiError::not_found("session", session_id))?;
        Ok(f(&s.session))
    }

    /// Runs `f` on every session, in id order.
    pub fn read_all<R>(&self, mut f: impl FnMut(&LabelingSession) -> R) -> Vec<R> {
        self.lock().by_id.values().map(|s| f(&s.session)).collect()
    }

    pub fn session_of_task(&self, task_id: &str) -> ApiResult<String> {
        self.lock()
            .task_owner
            .get(task_id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("task", task_id))
    }

    /// Applies one state change. `change` runs on a copy of the session and
    /// returns the event it produced; the copy replaces the live state only
    /// once the event is durably journaled.
    pub fn mutate<R>(
        &self,
        session_id: &str,
        change: impl FnOnce(&mut LabelingSession, DateTime<Utc>) -> Result<JournalEntry>,
        view: impl FnOnce(&LabelingSession) -> R,
    ) -> ApiResult<R> {
        let now = self.now();
        let mut guard = self.lock();
        let stored = guard
            .by_id
            .get_mut(session_id)
            .ok_or_else(|| ApiError::not_found("session", session_id))?;
        let mut next = stored.session.clone();
        let entry = change(&mut next, now)?;
        stored.journal.append(&entry)?;
        stored.session = next;
        if entry.seq % SNAPSHOT_EVERY == 0 {
            write_snapshot(snapshot_path(&self.dir, session_id), &stored.session)?;
        }
        Ok(view(&stored.session))
    }
}
