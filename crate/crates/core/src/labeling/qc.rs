//! Consistency checks on labeled tasks.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{LabelingSession, LabelingTask};
use crate::model::AttributeTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    /// The label set is inconsistent and cannot be finalized.
    Hard,
    /// Worth a second look; never blocks.
    Soft,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QcFlag {
    pub task_id: String,
    pub severity: Severity,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<String>,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct QcConfig {
    /// Flag additions that share no label token with the seed.
    pub token_overlap: bool,
    /// Flag additions whose blocking key differs from the seed's. The key is
    /// the first case-folded label token.
    pub blocking_key: bool,
}

impl Default for QcConfig {
    fn default() -> Self {
        Self {
            token_overlap: true,
            blocking_key: false,
        }
    }
}

pub(crate) fn tokens(label: &str) -> HashSet<String> {
    label.split_whitespace().map(str::to_lowercase).collect()
}

fn blocking_key(label: &str) -> Option<String> {
    label.split_whitespace().next().map(str::to_lowercase)
}

/// Checks one task. Soft checks need `attrs` for labels and are skipped
/// without it.
pub fn qc_task(task: &LabelingTask, attrs: Option<&AttributeTable>, config: &QcConfig) -> Vec<QcFlag> {
    let mut flags = Vec::new();
    let mut hard = |code: &str, record: Option<&str>, message: String| {
        flags.push(QcFlag {
            task_id: task.task_id.clone(),
            severity: Severity::Hard,
            code: code.into(),
            record: record.map(Into::into),
            message,
        })
    };
    for r in task.removed.difference(&task.predicted_cluster) {
        hard(
            "removal_outside_prediction",
            Some(r.as_str()),
            format!("removed record `{r}` is not in the predicted cluster"),
        );
    }
    if task.removed.contains(&task.seed_record) {
        hard(
            "seed_removed",
            Some(task.seed_record.as_str()),
            "seed record is immovable".into(),
        );
    }
    for r in task.added.intersection(&task.predicted_cluster) {
        hard(
            "addition_inside_prediction",
            Some(r.as_str()),
            format!("added record `{r}` is already in the predicted cluster"),
        );
    }
    for r in task.added.intersection(&task.removed) {
        hard(
            "added_and_removed",
            Some(r.as_str()),
            format!("record `{r}` is both added and removed"),
        );
    }

    let Some(attrs) = attrs else { return flags };
    let Some(seed_label) = attrs.label(task.seed_record.as_str()) else {
        return flags;
    };
    let seed_tokens = tokens(seed_label);
    let seed_key = blocking_key(seed_label);
    for r in &task.added {
        let Some(label) = attrs.label(r.as_str()) else {
            continue;
        };
        if config.token_overlap && tokens(label).is_disjoint(&seed_tokens) {
            flags.push(QcFlag {
                task_id: task.task_id.clone(),
                severity: Severity::Soft,
                code: "no_shared_token".into(),
                record: Some(r.to_string()),
                message: format!("`{label}` shares no name token with seed `{seed_label}`"),
            });
        }
        if config.blocking_key && blocking_key(label) != seed_key {
            flags.push(QcFlag {
                task_id: task.task_id.clone(),
                severity: Severity::Soft,
                code: "different_block".into(),
                record: Some(r.to_string()),
                message: format!("`{label}` is outside the seed's block"),
            });
        }
    }
    flags
}

/// Checks every task in a session.
pub fn qc_check(session: &LabelingSession, attrs: Option<&AttributeTable>, config: &QcConfig) -> Vec<QcFlag> {
    session
        .tasks
        .iter()
        .flat_map(|t| qc_task(t, attrs, config))
        .collect()
}
