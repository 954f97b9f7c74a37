//! Audit tags describing the cause of observed errors, and their
//! inverse-probability-weighted frequencies.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ClusterErrors;

/// Editable starting vocabulary for tag labels.
pub const DEFAULT_TAXONOMY: &[&str] = &[
    "same name",
    "middle name",
    "nickname",
    "hyphenation",
    "last name order",
    "typo in name",
    "invalid character",
    "typo in organization",
    "different topics",
    "unknown",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Overclustering,
    Underclustering,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Overclustering => "overclustering",
            Direction::Underclustering => "underclustering",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "overclustering" | "over" | "oce" => Ok(Direction::Overclustering),
            "underclustering" | "under" | "uce" => Ok(Direction::Underclustering),
            other => Err(Error::InvalidParameter(format!("unknown direction `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditTag {
    pub cluster_id: String,
    pub direction: Direction,
    pub label: String,
    #[serde(default)]
    pub note: String,
    pub p_c: f64,
}

/// Tags a benchmark cluster. The direction must match an observed error.
pub fn record_audit_tag(
    errors: &ClusterErrors,
    direction: Direction,
    label: &str,
    note: &str,
) -> Result<AuditTag> {
    let label = label.trim();
    if label.is_empty() {
        return Err(Error::InvalidParameter("tag label is empty".into()));
    }
    let count = match direction {
        Direction::Overclustering => errors.oce,
        Direction::Underclustering => errors.uce,
    };
    if count <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "cluster `{}` has no {} errors",
            errors.cluster_id,
            direction.as_str()
        )));
    }
    if !(errors.p_c > 0.0 && errors.p_c.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "cluster `{}` has a non-positive p_c",
            errors.cluster_id
        )));
    }
    Ok(AuditTag {
        cluster_id: errors.cluster_id.to_string(),
        direction,
        label: label.into(),
        note: note.into(),
        p_c: errors.p_c,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TagFrequency {
    pub direction: Direction,
    pub label: String,
    pub count: usize,
    /// Sum of `1/p_c` over the tags.
    pub weight: f64,
    /// `weight` normalized within the direction.
    pub frequency: f64,
}

/// Weighted relative frequency of each `(direction, label)`.
pub fn audit_frequencies(tags: &[AuditTag]) -> Result<Vec<TagFrequency>> {
    let mut acc: BTreeMap<(Direction, &str), (usize, f64)> = BTreeMap::new();
    for t in tags {
        if !(t.p_c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tag on `{}` has non-positive p_c",
                t.cluster_id
            )));
        }
        let e = acc.entry((t.direction, t.label.as_str())).or_default();
        e.0 += 1;
        e.1 += 1.0 / t.p_c;
    }
    let mut totals: BTreeMap<Direction, f64> = BTreeMap::new();
    for (&(d, _), &(_, w)) in &acc {
        *totals.entry(d).or_default() += w;
    }
    Ok(acc
        .into_iter()
        .map(|((direction, label), (count, weight))| TagFrequency {
            direction,
            label: label.into(),
            count,
            weight,
            frequency: weight / totals[&direction],
        })
        .collect())
}

#[derive(Serialize, Deserialize)]
struct TagRow {
    cluster_id: String,
    direction: String,
    label: String,
    note: String,
    p_c: f64,
}

pub fn write_tags_csv<W: Write>(tags: &[AuditTag], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for t in tags {
        w.serialize(TagRow {
            cluster_id: t.cluster_id.clone(),
            direction: t.direction.as_str().into(),
            label: t.label.clone(),
            note: t.note.clone(),
            p_c: t.p_c,
        })?;
    }
    if tags.is_empty() {
        w.write_record(["cluster_id", "direction", "label", "note", "p_c"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tags_csv<R: Read>(reader: R) -> Result<Vec<AuditTag>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["cluster_id", "direction", "label", "note", "p_c"] {
        return Err(Error::parse(1, "expected header `cluster_id,direction,label,note,p_c`"));
    }
    let mut tags = Vec::new();
    for (i, row) in r.deserialize::<TagRow>().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(|e| Error::parse(line, e.to_string()))?;
        if !(row.p_c > 0.0 && row.p_c.is_finite()) {
            return Err(Error::parse(line, "p_c must be positive"));
        }
        let direction = Direction::parse(&row.direction).map_err(|e| Error::parse(line, e.to_string()))?;
        tags.push(AuditTag {
            cluster_id: row.cluster_id,
            direction,
            label: row.label,
            note: row.note,
            p_c: row.p_c,
        });
    }
    Ok(tags)
}
