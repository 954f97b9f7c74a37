//! Record-wise and cluster-wise error metrics of a predicted clustering
//! against ground-truth clusters.
//!
//! For a record `r` with true cluster `c(r)` and predicted cluster `ĉ(r)`:
//!
//! * `OCE(r) = |ĉ(r) \ c(r)|` counts extraneous records (overclustering),
//! * `UCE(r) = |c(r) \ ĉ(r)|` counts missing records (underclustering),
//! * `SDE(r) = |ĉ(r)| - |c(r)| = OCE(r) - UCE(r)`,
//! * `EI(r)` is 1 unless `c(r) = ĉ(r)`,
//! * `ROCE`/`RUCE` normalize by the predicted and true cluster sizes,
//! * `H(r) = ln(|c(r) ∩ ĉ(r)| / |ĉ(r)|)` is the conditional entropy term.
//!
//! Cluster-wise metrics average the record-wise ones over a true cluster.

use std::collections::HashMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClusterId, Clustering, RecordId};
use crate::sampling::ClusterSample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordErrors {
    pub record: RecordId,
    #[serde(rename = "EI")]
    pub ei: u8,
    #[serde(rename = "SDE")]
    pub sde: i64,
    #[serde(rename = "OCE")]
    pub oce: u64,
    #[serde(rename = "UCE")]
    pub uce: u64,
    #[serde(rename = "ROCE")]
    pub roce: f64,
    #[serde(rename = "RUCE")]
    pub ruce: f64,
    #[serde(rename = "H")]
    pub h: f64,
}

/// One row of an [`ErrorTable`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterErrors {
    pub cluster_id: ClusterId,
    pub size: usize,
    /// Sampling weight, up to a global constant. 1.0 outside of a sample.
    pub p_c: f64,
    #[serde(rename = "EI")]
    pub ei: u8,
    #[serde(rename = "SDE")]
    pub sde: f64,
    #[serde(rename = "OCE")]
    pub oce: f64,
    #[serde(rename = "UCE")]
    pub uce: f64,
    #[serde(rename = "ROCE")]
    pub roce: f64,
    #[serde(rename = "RUCE")]
    pub ruce: f64,
    #[serde(rename = "H")]
    pub h: f64,
}

impl ClusterErrors {
    /// Correctness indicator: 1 when the cluster is predicted exactly.
    pub fn ci(&self) -> f64 {
        f64::from(1 - self.ei)
    }
}

/// Record-wise errors for each member of a true cluster.
pub fn record_errors(truth_cluster: &[RecordId], prediction: &Clustering) -> Result<Vec<RecordErrors>> {
    let mut predicted = Vec::with_capacity(truth_cluster.len());
    let mut overlap: HashMap<&ClusterId, u64> = HashMap::new();
    for r in truth_cluster {
        let (cid, members) = prediction
            .cluster_members_of(r.as_str())
            .ok_or_else(|| Error::MissingFromPrediction(r.to_string()))?;
        *overlap.entry(cid).or_default() += 1;
        predicted.push((cid, members.len() as u64));
    }
    let true_size = truth_cluster.len() as u64;
    Ok(truth_cluster
        .iter()
        .zip(predicted)
        .map(|(r, (cid, pred_size))| {
            let shared = overlap[cid];
            let oce = pred_size - shared;
            let uce = true_size - shared;
            RecordErrors {
                record: r.clone(),
                ei: u8::from(oce != 0 || uce != 0),
                sde: oce as i64 - uce as i64,
                oce,
                uce,
                roce: oce as f64 / pred_size as f64,
                ruce: uce as f64 / true_size as f64,
                h: (shared as f64 / pred_size as f64).ln(),
            }
        })
        .collect())
}

/// Cluster-wise errors of one true cluster: means of its record-wise errors.
pub fn cluster_errors(
    cluster_id: ClusterId,
    truth_cluster: &[RecordId],
    prediction: &Clustering,
) -> Result<ClusterErrors> {
    if truth_cluster.is_empty() {
        return Err(Error::Empty("true cluster"));
    }
    let rows = record_errors(truth_cluster, prediction)?;
    let n = rows.len() as f64;
    let mean = |f: fn(&RecordErrors) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let ei = rows[0].ei;
    debug_assert!(rows.iter().all(|r| r.ei == ei));
    Ok(ClusterErrors {
        cluster_id,
        size: rows.len(),
        p_c: 1.0,
        ei,
        sde: mean(|r| r.sde as f64),
        oce: mean(|r| r.oce as f64),
        uce: mean(|r| r.uce as f64),
        roce: mean(|r| r.roce),
        ruce: mean(|r| r.ruce),
        h: mean(|r| r.h),
    })
}

/// Cluster-wise error metrics for a sample of true clusters, one row per draw.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub rows: Vec<ClusterErrors>,
}

const HEADER: [&str; 10] = [
    "cluster_id", "size", "p_c", "EI", "SDE", "OCE", "UCE", "ROCE", "RUCE", "H",
];

impl ErrorTable {
    pub fn new(rows: Vec<ClusterErrors>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Builds the table for a sample. Repeated draws of a cluster stay as
    /// separate rows; rows are ordered by cluster id, then draw index.
    pub fn from_sample(sample: &ClusterSample, prediction: &Clustering) -> Result<Self> {
        for d in &sample.draws {
            if !(d.p_c > 0.0 && d.p_c.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "nonpositive sampling weight {} for cluster `{}`",
                    d.p_c, d.cluster_id
                )));
            }
        }
        let mut rows = sample
            .draws
            .par_iter()
            .map(|d| {
                let mut row = cluster_errors(d.cluster_id.clone(), &d.members, prediction)?;
                row.p_c = d.p_c;
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        rows.sort_by(|a, b| a.cluster_id.cmp(&b.cluster_id));
        Ok(Self { rows })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().from_writer(writer);
        wtr.write_record(HEADER)?;
        for r in &self.rows {
            wtr.write_record([
                r.cluster_id.to_string(),
                r.size.to_string(),
                r.p_c.to_string(),
                r.ei.to_string(),
                r.sde.to_string(),
                r.oce.to_string(),
                r.uce.to_string(),
                r.roce.to_string(),
                r.ruce.to_string(),
                r.h.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().ne(HEADER) {
            return Err(Error::parse(1, format!("expected header `{}`", HEADER.join(","))));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i as u64 + 2;
            if rec.len() != HEADER.len() {
                return Err(Error::parse(line, "wrong number of fields"));
            }
            let real = |j: usize| -> Result<f64> {
                let v: f64 = rec[j]
                    .parse()
                    .map_err(|_| Error::parse(line, format!("bad {} `{}`", HEADER[j], &rec[j])))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::parse(line, format!("non-finite {}", HEADER[j])))
                }
            };
            let size: usize = rec[1]
                .parse()
                .map_err(|_| Error::parse(line, "bad size"))?;
            let ei: u8 = match &rec[3] {
                "0" => 0,
                "1" => 1,
                _ => return Err(Error::parse(line, "EI must be 0 or 1")),
            };
            let row = ClusterErrors {
                cluster_id: ClusterId::from(&rec[0]),
                size,
                p_c: real(2)?,
                ei,
                sde: real(4)?,
                oce: real(5)?,
                uce: real(6)?,
                roce: real(7)?,
                ruce: real(8)?,
                h: real(9)?,
            };
            if row.cluster_id.as_str().is_empty() || size == 0 {
                return Err(Error::parse(line, "empty cluster"));
            }
            if row.p_c <= 0.0 {
                return Err(Error::parse(line, "p_c must be positive"));
            }
            if !(0.0..=1.0).contains(&row.roce) || !(0.0..=1.0).contains(&row.ruce) {
                return Err(Error::parse(line, "ROCE and RUCE must lie in [0, 1]"));
            }
            if row.oce < 0.0 || row.uce < 0.0 || row.h > 0.0 {
                return Err(Error::parse(line, "negative error count or positive H"));
            }
            rows.push(row);
        }
        Ok(Self { rows })
    }
}
