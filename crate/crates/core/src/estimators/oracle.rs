//! Exact metrics from a full truth and prediction, computed from the
//! contingency table of the two clusterings. Independent of the error-table
//! path; used to check estimators and to score simulation replicates.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Metric;
use crate::error::{Error, Result};
use crate::model::{ClusterId, Clustering};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleMetrics {
    pub n_records: usize,
    pub n_true_clusters: usize,
    pub n_pred_clusters: usize,
    /// `|T|`, `|P|` and `|T ∩ P|`.
    pub true_pairs: u64,
    pub pred_pairs: u64,
    pub shared_pairs: u64,
    /// `|C ∩ Ĉ|`.
    pub exact_clusters: usize,
    pub bcubed_precision: f64,
    pub bcubed_recall: f64,
    /// `H(C | Ĉ)` and `H(C)`, natural log.
    pub conditional_entropy: f64,
    pub entropy: f64,
}

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| num / den)
}

fn harmonic(p: f64, r: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    (1.0 + b2) / (1.0 / p + b2 / r)
}

/// Exact metrics of `prediction` against `truth` over the same universe.
pub fn oracle_metrics(truth: &Clustering, prediction: &Clustering) -> Result<OracleMetrics> {
    if truth.is_empty() {
        return Err(Error::Empty("truth clustering"));
    }
    if truth.len() != prediction.len() {
        return Err(Error::InvalidParameter(format!(
            "truth covers {} records, prediction {}",
            truth.len(),
            prediction.len()
        )));
    }
    let n = truth.len() as f64;
    let mut shared_pairs = 0u64;
    let mut exact = 0usize;
    let (mut bp, mut br) = (0.0, 0.0);
    let (mut cond, mut ent) = (0.0, 0.0);
    let mut cell: HashMap<&ClusterId, u64> = HashMap::new();
    for (_, members) in truth.clusters() {
        cell.clear();
        for r in members {
            let p = prediction
                .cluster_of(r.as_str())
                .ok_or_else(|| Error::MissingFromPrediction(r.to_string()))?;
            *cell.entry(p).or_default() += 1;
        }
        let size = members.len() as f64;
        let (mut sp, mut sr) = (0.0, 0.0);
        for (&p, &count) in &cell {
            let pred_size = prediction.members(p.as_str()).map_or(0, <[_]>::len) as f64;
            let c = count as f64;
            shared_pairs += pairs(count);
            sp += c * c / pred_size;
            sr += c * c / size;
            cond -= c / n * (c / pred_size).ln();
            if count as usize == members.len() && pred_size == size {
                exact += 1;
            }
        }
        bp += sp / size;
        br += sr / size;
        ent -= size / n * (size / n).ln();
    }
    let k = truth.num_clusters() as f64;
    Ok(OracleMetrics {
        n_records: truth.len(),
        n_true_clusters: truth.num_clusters(),
        n_pred_clusters: prediction.num_clusters(),
        true_pairs: truth.sizes().map(|s| pairs(s as u64)).sum(),
        pred_pairs: prediction.sizes().map(|s| pairs(s as u64)).sum(),
        shared_pairs,
        exact_clusters: exact,
        bcubed_precision: bp / k,
        bcubed_recall: br / k,
        conditional_entropy: cond,
        entropy: ent,
    })
}

impl OracleMetrics {
    pub fn pairwise_precision(&self) -> Option<f64> {
        ratio(self.shared_pairs as f64, self.pred_pairs as f64)
    }

    pub fn pairwise_recall(&self) -> Option<f64> {
        ratio(self.shared_pairs as f64, self.true_pairs as f64)
    }

    /// `(1 + β²)|T ∩ P| / (β²|T| + |P|)`, the harmonic mean of precision
    /// and recall where both exist, and 0 when only one side has pairs.
    pub fn pairwise_f(&self, beta: f64) -> Option<f64> {
        let b2 = beta * beta;
        ratio(
            (1.0 + b2) * self.shared_pairs as f64,
            b2 * self.true_pairs as f64 + self.pred_pairs as f64,
        )
    }

    pub fn cluster_precision(&self) -> f64 {
        self.exact_clusters as f64 / self.n_pred_clusters as f64
    }

    pub fn cluster_recall(&self) -> f64 {
        self.exact_clusters as f64 / self.n_true_clusters as f64
    }

    pub fn cluster_f(&self, beta: f64) -> f64 {
        let (p, r) = (self.cluster_precision(), self.cluster_recall());
        if p == 0.0 || r == 0.0 {
            return 0.0;
        }
        harmonic(p, r, beta)
    }

    pub fn homogeneity(&self) -> Option<f64> {
        if self.entropy == 0.0 {
            return None;
        }
        Some(1.0 - self.conditional_entropy / self.entropy)
    }

    /// The exact value of `metric`, `None` where it is undefined.
    pub fn value(&self, metric: Metric, beta: f64) -> Option<f64> {
        match metric {
            Metric::PairwisePrecision => self.pairwise_precision(),
            Metric::PairwiseRecall => self.pairwise_recall(),
            Metric::PairwiseF => self.pairwise_f(beta),
            Metric::ClusterPrecision => Some(self.cluster_precision()),
            Metric::ClusterRecall => Some(self.cluster_recall()),
            Metric::ClusterF => Some(self.cluster_f(beta)),
            Metric::BcubedPrecision => Some(self.bcubed_precision),
            Metric::BcubedRecall => Some(self.bcubed_recall),
            Metric::Homogeneity => self.homogeneity(),
        }
    }
}
