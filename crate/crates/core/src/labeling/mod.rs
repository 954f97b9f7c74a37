//! Human labeling of sampled clusters.
//!
//! A labeler starts from the predicted cluster `ĉ(r)` of each sampled seed
//! record `r`, marks the extraneous records `A_r` and the missing records
//! `B_r`, and finalizes the true cluster `c(r) = (ĉ(r) \ A_r) ∪ B_r`. All
//! state changes are journal events ([`JournalEntry`]); replaying the journal
//! rebuilds the session exactly.

pub mod audit;
pub mod benchmark;
pub mod journal;
pub mod qc;
pub mod search;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Clustering, RecordId};
use crate::sampling::{sample_by_record_weight, sample_pps, Design};

pub use audit::{audit_frequencies, AuditTag, Direction, TagFrequency};
pub use benchmark::{BenchmarkDraw, BenchmarkSet};
pub use journal::Journal;
pub use qc::{qc_check, qc_task, QcConfig, QcFlag, Severity};
pub use search::{SearchHit, TokenIndex};

/// Default task lease.
pub const LEASE_MINUTES: i64 = 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    InProgress,
    Finalized,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lease {
    pub labeler: String,
    pub expires_at: DateTime<Utc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelingTask {
    pub task_id: String,
    pub seed_record: RecordId,
    /// Frozen snapshot of `ĉ(seed)` at session creation.
    pub predicted_cluster: BTreeSet<RecordId>,
    /// `A_r`: records to remove from the predicted cluster.
    pub removed: BTreeSet<RecordId>,
    /// `B_r`: records to add to the predicted cluster.
    pub added: BTreeSet<RecordId>,
    pub status: TaskStatus,
    pub labeler: Option<String>,
    pub lease: Option<Lease>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub finalized_at: Option<DateTime<Utc>>,
    pub p_c: Option<f64>,
}

impl LabelingTask {
    fn new(task_id: String, seed_record: RecordId, predicted: BTreeSet<RecordId>, at: DateTime<Utc>) -> Self {
        Self {
            task_id,
            seed_record,
            predicted_cluster: predicted,
            removed: BTreeSet::new(),
            added: BTreeSet::new(),
            status: TaskStatus::Pending,
            labeler: None,
            lease: None,
            created_at: at,
            updated_at: at,
            finalized_at: None,
            p_c: None,
        }
    }

    /// `(ĉ \ A_r) ∪ B_r`.
    pub fn resolved_cluster(&self) -> BTreeSet<RecordId> {
        self.predicted_cluster
            .difference(&self.removed)
            .chain(&self.added)
            .cloned()
            .collect()
    }

    fn lease_holder(&self, now: DateTime<Utc>) -> Option<&str> {
        self.lease
            .as_ref()
            .filter(|l| l.expires_at > now)
            .map(|l| l.labeler.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditOp {
    /// Put a record into `B_r`.
    Add,
    /// Put a record into `A_r`.
    Remove,
    /// Take a record back out of `A_r` or `B_r`.
    Revert,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSeed {
    pub task_id: String,
    pub seed_record: RecordId,
    pub predicted_cluster: BTreeSet<RecordId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    SessionCreated {
        session_id: String,
        design: Design,
        rng_seed: u64,
        prediction_snapshot: String,
        universe_size: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        record_weights: Option<BTreeMap<RecordId, f64>>,
        tasks: Vec<TaskSeed>,
    },
    TaskLeased {
        task_id: String,
        labeler: String,
        expires_at: DateTime<Utc>,
    },
    TaskReleased {
        task_id: String,
        labeler: String,
    },
    EditApplied {
        task_id: String,
        labeler: String,
        op: EditOp,
        record: RecordId,
    },
    TaskFinalized {
        task_id: String,
        labeler: String,
        p_c: f64,
    },
    TagRecorded {
        tag: AuditTag,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub v: u32,
    pub seq: u64,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub event: Event,
}

/// Mutable state of one labeling pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelingSession {
    pub v: u32,
    pub session_id: String,
    pub design: Design,
    pub rng_seed: u64,
    pub prediction_snapshot: String,
    /// `N`, frozen at creation.
    pub universe_size: usize,
    /// Record weights of an expected-error design, frozen at creation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_weights: Option<BTreeMap<RecordId, f64>>,
    pub tasks: Vec<LabelingTask>,
    pub tags: Vec<AuditTag>,
    pub created_at: DateTime<Utc>,
    pub last_seq: u64,
}

/// Parameters of a new session.
#[derive(Clone, Debug)]
pub struct SessionSpec<'a> {
    pub session_id: String,
    pub design: Design,
    pub k: usize,
    pub rng_seed: u64,
    pub prediction_snapshot: String,
    /// Required for [`Design::ExpectedError`].
    pub record_weights: Option<&'a HashMap<RecordId, f64>>,
}

impl LabelingSession {
    /// Samples `k` seed records from the prediction and creates one task per
    /// draw.
    pub fn create(
        spec: SessionSpec<'_>,
        prediction: &Clustering,
        at: DateTime<Utc>,
    ) -> Result<(Self, JournalEntry)> {
        if spec.k < 1 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        let sample = match spec.design {
            Design::PpsRecord => sample_pps(prediction, spec.k, spec.rng_seed)?,
            Design::ExpectedError => {
                let w = spec.record_weights.ok_or_else(|| {
                    Error::InvalidParameter("expected-error design needs record weights".into())
                })?;
                sample_by_record_weight(prediction, w, spec.k, spec.rng_seed)?
            }
            other => {
                return Err(Error::Unsupported(format!(
                    "design `{}` cannot be realized by sampling seed records",
                    other.as_str()
                )))
            }
        };
        let seeds = sample
            .draws
            .into_iter()
            .map(|d| d.seed_record.expect("record designs set seeds"))
            .collect();
        Self::from_seeds(spec, prediction, seeds, at)
    }

    /// Creates a session from an explicit sequence of seed records.
    pub fn from_seeds(
        spec: SessionSpec<'_>,
        prediction: &Clustering,
        seeds: Vec<RecordId>,
        at: DateTime<Utc>,
    ) -> Result<(Self, JournalEntry)> {
        if seeds.is_empty() {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        let record_weights = match spec.design {
            Design::ExpectedError => Some(
                spec.record_weights
                    .ok_or_else(|| {
                        Error::InvalidParameter("expected-error design needs record weights".into())
                    })?
                    .iter()
                    .filter(|(_, &w)| w > 0.0)
                    .map(|(r, &w)| (r.clone(), w))
                    .collect(),
            ),
            Design::PpsRecord => None,
            other => {
                return Err(Error::Unsupported(format!(
                    "design `{}` cannot be realized by sampling seed records",
                    other.as_str()
                )))
            }
        };
        let width = seeds.len().to_string().len().max(4);
        let tasks = seeds
            .into_iter()
            .enumerate()
            .map(|(i, seed)| {
                let (_, members) = prediction
                    .cluster_members_of(seed.as_str())
                    .ok_or_else(|| Error::MissingFromPrediction(seed.to_string()))?;
                Ok(TaskSeed {
                    task_id: format!("{}-{:0width$}", spec.session_id, i + 1),
                    seed_record: seed,
                    predicted_cluster: members.iter().cloned().collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let entry = JournalEntry {
            v: 1,
            seq: 1,
            at,
            event: Event::SessionCreated {
                session_id: spec.session_id,
                design: spec.design,
                rng_seed: spec.rng_seed,
                prediction_snapshot: spec.prediction_snapshot,
                universe_size: prediction.len(),
                record_weights,
                tasks,
            },
        };
        let session = Self::replay(std::slice::from_ref(&entry))?;
        Ok((session, entry))
    }

    /// Rebuilds a session from its journal.
    pub fn replay(entries: &[JournalEntry]) -> Result<Self> {
        let (first, rest) = entries
            .split_first()
            .ok_or(Error::Empty("journal"))?;
        let mut session = match &first.event {
            Event::SessionCreated {
                session_id,
                design,
                rng_seed,
                prediction_snapshot,
                universe_size,
                record_weights,
                tasks,
            } => Self {
                v: 1,
                session_id: session_id.clone(),
                design: *design,
                rng_seed: *rng_seed,
                prediction_snapshot: prediction_snapshot.clone(),
                universe_size: *universe_size,
                record_weights: record_weights.clone(),
                tasks: tasks
                    .iter()
                    .map(|t| {
                        LabelingTask::new(
                            t.task_id.clone(),
                            t.seed_record.clone(),
                            t.predicted_cluster.clone(),
                            first.at,
                        )
                    })
                    .collect(),
                tags: Vec::new(),
                created_at: first.at,
                last_seq: first.seq,
            },
            _ => return Err(Error::InvalidState("journal must start with session_created".into())),
        };
        for e in rest {
            session.apply(e)?;
        }
        Ok(session)
    }

    /// Applies a journaled event to the state. Policy checks (leases, QC)
    /// happen when the event is produced, not here.
    pub fn apply(&mut self, entry: &JournalEntry) -> Result<()> {
        if entry.seq != self.last_seq + 1 {
            return Err(Error::InvalidState(format!(
                "journal sequence gap: expected {}, found {}",
                self.last_seq + 1,
                entry.seq
            )));
        }
        let at = entry.at;
        match &entry.event {
            Event::SessionCreated { .. } => {
                return Err(Error::InvalidState("duplicate session_created".into()))
            }
            Event::TaskLeased {
                task_id,
                labeler,
                expires_at,
            } => {
                let t = self.task_mut(task_id)?;
                t.lease = Some(Lease {
                    labeler: labeler.clone(),
                    expires_at: *expires_at,
                });
                t.labeler = Some(labeler.clone());
                if t.status == TaskStatus::Pending {
                    t.status = TaskStatus::InProgress;
                }
                t.updated_at = at;
            }
            Event::TaskReleased { task_id, .. } => {
                let t = self.task_mut(task_id)?;
                t.lease = None;
                t.updated_at = at;
            }
            Event::EditApplied {
                task_id,
                labeler,
                op,
                record,
            } => {
                let t = self.task_mut(task_id)?;
                match op {
                    EditOp::Add => {
                        t.added.insert(record.clone());
                    }
                    EditOp::Remove => {
                        t.removed.insert(record.clone());
                    }
                    EditOp::Revert => {
                        t.added.remove(record);
                        t.removed.remove(record);
                    }
                }
                t.labeler = Some(labeler.clone());
                t.status = TaskStatus::InProgress;
                t.updated_at = at;
            }
            Event::TaskFinalized {
                task_id,
                labeler,
                p_c,
            } => {
                let t = self.task_mut(task_id)?;
                t.status = TaskStatus::Finalized;
                t.labeler = Some(labeler.clone());
                t.lease = None;
                t.p_c = Some(*p_c);
                t.finalized_at = Some(at);
                t.updated_at = at;
            }
            Event::TagRecorded { tag } => self.tags.push(tag.clone()),
        }
        self.last_seq = entry.seq;
        Ok(())
    }

    pub fn task(&self, task_id: &str) -> Result<&LabelingTask> {
        self.tasks
            .iter()
            .find(|t| t.task_id == task_id)
            .ok_or_else(|| Error::NotFound {
                kind: "task",
                id: task_id.into(),
            })
    }

    fn task_mut(&mut self, task_id: &str) -> Result<&mut LabelingTask> {
        self.tasks
            .iter_mut()
            .find(|t| t.task_id == task_id)
            .ok_or_else(|| Error::NotFound {
                kind: "task",
                id: task_id.into(),
            })
    }

    fn emit(&mut self, at: DateTime<Utc>, event: Event) -> Result<JournalEntry> {
        let entry = JournalEntry {
            v: 1,
            seq: self.last_seq + 1,
            at,
            event,
        };
        self.apply(&entry)?;
        Ok(entry)
    }

    fn require_lease(&self, task_id: &str, labeler: &str, now: DateTime<Utc>) -> Result<&LabelingTask> {
        let t = self.task(task_id)?;
        if t.status == TaskStatus::Finalized {
            return Err(Error::InvalidState(format!("task `{task_id}` is finalized")));
        }
        match t.lease_holder(now) {
            Some(h) if h == labeler => Ok(t),
            Some(h) => Err(Error::LeaseConflict {
                task: task_id.into(),
                holder: h.into(),
            }),
            None => Err(Error::LeaseConflict {
                task: task_id.into(),
                holder: "nobody (lease missing or expired)".into(),
            }),
        }
    }

    /// Takes (or renews) the lease on a task.
    pub fn lease_task(
        &mut self,
        task_id: &str,
        labeler: &str,
        now: DateTime<Utc>,
        ttl: Duration,
    ) -> Result<JournalEntry> {
        let t = self.task(task_id)?;
        if t.status == TaskStatus::Finalized {
            return Err(Error::InvalidState(format!("task `{task_id}` is finalized")));
        }
        if let Some(h) = t.lease_holder(now) {
            if h != labeler {
                return Err(Error::LeaseConflict {
                    task: task_id.into(),
                    holder: h.into(),
                });
            }
        }
        self.emit(
            now,
            Event::TaskLeased {
                task_id: task_id.into(),
                labeler: labeler.into(),
                expires_at: now + ttl,
            },
        )
    }

    pub fn release_task(&mut self, task_id: &str, labeler: &str, now: DateTime<Utc>) -> Result<JournalEntry> {
        self.require_lease(task_id, labeler, now)?;
        self.emit(
            now,
            Event::TaskReleased {
                task_id: task_id.into(),
                labeler: labeler.into(),
            },
        )
    }

    /// The next task `labeler` should work on: one they already hold, else
    /// the first unfinalized task without a live lease.
    pub fn next_task(&self, labeler: &str, now: DateTime<Utc>) -> Option<&LabelingTask> {
        let open = || self.tasks.iter().filter(|t| t.status != TaskStatus::Finalized);
        open()
            .find(|t| t.lease_holder(now) == Some(labeler))
            .or_else(|| open().find(|t| t.lease_holder(now).is_none()))
    }

    /// Records one edit of `A_r` or `B_r`.
    pub fn apply_edit(
        &mut self,
        task_id: &str,
        labeler: &str,
        op: EditOp,
        record: &RecordId,
        now: DateTime<Utc>,
    ) -> Result<JournalEntry> {
        let t = self.require_lease(task_id, labeler, now)?;
        let in_predicted = t.predicted_cluster.contains(record);
        match op {
            EditOp::Remove if *record == t.seed_record => {
                return Err(Error::Qc("seed record is immovable".into()))
            }
            EditOp::Remove if !in_predicted => {
                return Err(Error::Qc(format!(
                    "record `{record}` is not in the predicted cluster"
                )))
            }
            EditOp::Add if in_predicted => {
                return Err(Error::Qc(format!(
                    "record `{record}` is already in the predicted cluster"
                )))
            }
            EditOp::Revert if !t.added.contains(record) && !t.removed.contains(record) => {
                return Err(Error::Qc(format!("record `{record}` has no pending edit")))
            }
            _ => {}
        }
        self.emit(
            now,
            Event::EditApplied {
                task_id: task_id.into(),
                labeler: labeler.into(),
                op,
                record: record.clone(),
            },
        )
    }

    /// Single-draw weight of a resolved cluster under the frozen design.
    pub fn weight_of(&self, cluster: &BTreeSet<RecordId>) -> Result<f64> {
        match self.design {
            Design::PpsRecord => Ok(cluster.len() as f64 / self.universe_size as f64),
            Design::ExpectedError => {
                let w = self
                    .record_weights
                    .as_ref()
                    .ok_or_else(|| Error::InvalidState("missing frozen record weights".into()))?;
                let total: f64 = w.values().sum();
                let mass: f64 = cluster.iter().filter_map(|r| w.get(r)).sum();
                Ok(mass / total)
            }
            other => Err(Error::Unsupported(format!("design `{}`", other.as_str()))),
        }
    }

    /// Finalizes a task; refused while it has hard QC flags.
    pub fn finalize(&mut self, task_id: &str, labeler: &str, now: DateTime<Utc>) -> Result<JournalEntry> {
        let t = self.require_lease(task_id, labeler, now)?;
        let hard: Vec<String> = qc_task(t, None, &QcConfig::default())
            .into_iter()
            .filter(|f| f.severity == Severity::Hard)
            .map(|f| f.message)
            .collect();
        if !hard.is_empty() {
            return Err(Error::Qc(hard.join("; ")));
        }
        let p_c = self.weight_of(&t.resolved_cluster())?;
        if !(p_c > 0.0) {
            return Err(Error::InvalidState(format!(
                "resolved cluster of `{task_id}` has zero sampling weight"
            )));
        }
        self.emit(
            now,
            Event::TaskFinalized {
                task_id: task_id.into(),
                labeler: labeler.into(),
                p_c,
            },
        )
    }

    /// Journals an audit tag.
    pub fn record_tag(&mut self, tag: AuditTag, now: DateTime<Utc>) -> Result<JournalEntry> {
        self.emit(now, Event::TagRecorded { tag })
    }

    pub fn is_complete(&self) -> bool {
        self.tasks.iter().all(|t| t.status == TaskStatus::Finalized)
    }

    /// Deterministic serialization of the full state.
    pub fn to_canonical_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }
}
