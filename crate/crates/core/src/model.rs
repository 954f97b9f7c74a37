//! Records, clusterings and record attributes.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(RecordId);
string_id!(ClusterId);

/// A partition of a record universe into non-empty clusters.
///
/// Cluster members are kept sorted, and clusters are iterated in cluster id
/// order, so every traversal of a clustering is deterministic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Clustering {
    membership: HashMap<RecordId, ClusterId>,
    clusters: BTreeMap<ClusterId, Vec<RecordId>>,
}

impl Clustering {
    /// Builds a clustering from `(record, cluster)` assignments.
    pub fn from_assignments<I>(assignments: I) -> Result<Self>
    where
        I: IntoIterator<Item = (RecordId, ClusterId)>,
    {
        let mut membership = HashMap::new();
        let mut clusters: BTreeMap<ClusterId, Vec<RecordId>> = BTreeMap::new();
        for (record, cluster) in assignments {
            if record.as_str().is_empty() {
                return Err(Error::InvalidParameter("empty record id".into()));
            }
            if membership.contains_key(&record) {
                return Err(Error::DuplicateRecord(record.0));
            }
            clusters.entry(cluster.clone()).or_default().push(record.clone());
            membership.insert(record, cluster);
        }
        for members in clusters.values_mut() {
            members.sort_unstable();
        }
        Ok(Self {
            membership,
            clusters,
        })
    }

    /// Builds a clustering from groups of record ids. Cluster ids are the
    /// smallest member of each group.
    pub fn from_groups<G, S>(groups: G) -> Result<Self>
    where
        G: IntoIterator,
        G::Item: IntoIterator<Item = S>,
        S: Into<RecordId>,
    {
        let mut assignments = Vec::new();
        for group in groups {
            let members: Vec<RecordId> = group.into_iter().map(Into::into).collect();
            let Some(min) = members.iter().min().cloned() else {
                continue;
            };
            let cid = ClusterId(min.0);
            assignments.extend(members.into_iter().map(|r| (r, cid.clone())));
        }
        Self::from_assignments(assignments)
    }

    /// Number of records `N`.
    pub fn len(&self) -> usize {
        self.membership.len()
    }

    pub fn is_empty(&self) -> bool {
        self.membership.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster_of(&self, record: &str) -> Option<&ClusterId> {
        self.membership.get(record)
    }

    pub fn contains(&self, record: &str) -> bool {
        self.membership.contains_key(record)
    }

    pub fn members(&self, cluster: &str) -> Option<&[RecordId]> {
        self.clusters.get(cluster).map(Vec::as_slice)
    }

    /// Members of the cluster containing `record`.
    pub fn cluster_members_of(&self, record: &str) -> Option<(&ClusterId, &[RecordId])> {
        let cid = self.membership.get(record)?;
        Some((cid, self.clusters[cid].as_slice()))
    }

    pub fn clusters(&self) -> impl Iterator<Item = (&ClusterId, &[RecordId])> {
        self.clusters.iter().map(|(k, v)| (k, v.as_slice()))
    }

    /// All records, in cluster order and then member order.
    pub fn records(&self) -> impl Iterator<Item = &RecordId> {
        self.clusters.values().flatten()
    }

    pub fn sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.clusters.values().map(Vec::len)
    }

    /// Restricts the clustering to `keep`, dropping clusters that become empty.
    pub fn restrict(&self, keep: &BTreeSet<RecordId>) -> Result<Self> {
        let unknown: Vec<String> = keep
            .iter()
            .filter(|r| !self.membership.contains_key(*r))
            .map(|r| r.0.clone())
            .collect();
        if !unknown.is_empty() {
            return Err(Error::UnknownRecords(unknown));
        }
        let mut clusters: BTreeMap<ClusterId, Vec<RecordId>> = BTreeMap::new();
        let mut membership = HashMap::with_capacity(keep.len());
        for r in keep {
            let cid = &self.membership[r];
            clusters.entry(cid.clone()).or_default().push(r.clone());
            membership.insert(r.clone(), cid.clone());
        }
        Ok(Self {
            membership,
            clusters,
        })
    }

    /// Reads a membership file: CSV with header `record_id,cluster_id`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "record_id" || &headers[1] != "cluster_id" {
            return Err(Error::parse(1, "expected header `record_id,cluster_id`"));
        }
        let mut rows = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let line = i as u64 + 2;
            if row.len() != 2 {
                return Err(Error::parse(line, "expected 2 fields"));
            }
            if row[0].is_empty() || row[1].is_empty() {
                return Err(Error::parse(line, "empty id"));
            }
            rows.push((RecordId::from(&row[0]), ClusterId::from(&row[1])));
        }
        if rows.is_empty() {
            return Err(Error::Empty("membership file has no rows"));
        }
        Self::from_assignments(rows)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().from_writer(writer);
        wtr.write_record(["record_id", "cluster_id"])?;
        for (cid, members) in &self.clusters {
            for r in members {
                wtr.write_record([r.as_str(), cid.as_str()])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Normalizes a label for equality comparison: NFC, then trimmed.
pub fn normalize_label(label: &str) -> String {
    let nfc: String = label.nfc().collect();
    nfc.trim().to_owned()
}

/// Per-record label and named string attributes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AttributeTable {
    columns: Vec<String>,
    index: HashMap<RecordId, usize>,
    ids: Vec<RecordId>,
    labels: Vec<String>,
    values: Vec<Vec<String>>,
}

impl AttributeTable {
    pub fn new(columns: Vec<String>) -> Self {
        Self {
            columns,
            ..Self::default()
        }
    }

    pub fn insert(
        &mut self,
        record: RecordId,
        label: impl Into<String>,
        values: Vec<String>,
    ) -> Result<()> {
        if values.len() != self.columns.len() {
            return Err(Error::InvalidParameter(format!(
                "record `{record}` has {} attribute values, expected {}",
                values.len(),
                self.columns.len()
            )));
        }
        if self.index.contains_key(&record) {
            return Err(Error::DuplicateRecord(record.0));
        }
        self.index.insert(record.clone(), self.ids.len());
        self.ids.push(record);
        self.labels.push(label.into());
        self.values.push(values);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Attribute column names, excluding `record_id` and `label`.
    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn label(&self, record: &str) -> Option<&str> {
        self.index.get(record).map(|&i| self.labels[i].as_str())
    }

    pub fn get(&self, record: &str, column: &str) -> Option<&str> {
        let col = self.columns.iter().position(|c| c == column)?;
        self.index.get(record).map(|&i| self.values[i][col].as_str())
    }

    /// All attributes of a record as `(column, value)` pairs.
    pub fn attributes(&self, record: &str) -> Option<Vec<(&str, &str)>> {
        let i = *self.index.get(record)?;
        Some(
            self.columns
                .iter()
                .map(String::as_str)
                .zip(self.values[i].iter().map(String::as_str))
                .collect(),
        )
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RecordId, &str, &[String])> {
        self.ids
            .iter()
            .zip(&self.labels)
            .zip(&self.values)
            .map(|((id, l), v)| (id, l.as_str(), v.as_slice()))
    }

    /// Reads an attribute file: CSV with header `record_id,label,<attr>...`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "record_id" || &headers[1] != "label" {
            return Err(Error::parse(1, "expected header `record_id,label,...`"));
        }
        let columns: Vec<String> = headers.iter().skip(2).map(str::to_owned).collect();
        let mut table = Self::new(columns);
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let line = i as u64 + 2;
            if row.len() != headers.len() {
                return Err(Error::parse(line, "wrong number of fields"));
            }
            if row[0].is_empty() {
                return Err(Error::parse(line, "empty record id"));
            }
            let values = row.iter().skip(2).map(str::to_owned).collect();
            table.insert(RecordId::from(&row[0]), &row[1], values)?;
        }
        Ok(table)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().from_writer(writer);
        let mut header = vec!["record_id".to_owned(), "label".to_owned()];
        header.extend(self.columns.iter().cloned());
        wtr.write_record(&header)?;
        for (id, label, values) in self.iter() {
            let mut row = vec![id.as_str(), label];
            row.extend(values.iter().map(String::as_str));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Exact-equality grouping of records by normalized label; gives `n(r)`.
#[derive(Clone, Debug, Default)]
pub struct NameIndex {
    groups: HashMap<String, Vec<RecordId>>,
    key_of: HashMap<RecordId, String>,
}

impl NameIndex {
    /// Indexes every record of the table.
    pub fn build(attrs: &AttributeTable) -> Self {
        let mut index = Self::default();
        for (id, label, _) in attrs.iter() {
            index.add(id.clone(), normalize_label(label));
        }
        index.finish();
        index
    }

    /// Indexes exactly the records of `scope`, failing on any record without
    /// a label.
    pub fn for_clustering(attrs: &AttributeTable, scope: &Clustering) -> Result<Self> {
        let mut index = Self::default();
        for r in scope.records() {
            let label = attrs
                .label(r.as_str())
                .ok_or_else(|| Error::MissingLabel(r.0.clone()))?;
            index.add(r.clone(), normalize_label(label));
        }
        index.finish();
        Ok(index)
    }

    fn add(&mut self, id: RecordId, key: String) {
        self.groups.entry(key.clone()).or_default().push(id.clone());
        self.key_of.insert(id, key);
    }

    fn finish(&mut self) {
        for v in self.groups.values_mut() {
            v.sort_unstable();
        }
    }

    /// Normalized label of a record.
    pub fn key(&self, record: &str) -> Option<&str> {
        self.key_of.get(record).map(String::as_str)
    }

    /// `n(r)`: all records sharing the label of `record`.
    pub fn same_label(&self, record: &str) -> Option<&[RecordId]> {
        self.key_of.get(record).map(|k| self.groups[k].as_slice())
    }

    pub fn group(&self, label: &str) -> Option<&[RecordId]> {
        self.groups.get(&normalize_label(label)).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn groups(&self) -> impl Iterator<Item = (&str, &[RecordId])> {
        self.groups.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}
