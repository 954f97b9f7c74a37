//! Summary statistics of a clustering, and their estimation for the ground
//! truth from a weighted cluster sample.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::estimators::{ratio_estimate_values, Estimate};
use crate::model::{Clustering, NameIndex, RecordId};
use crate::sampling::ClusterSample;

fn non_empty(c: &Clustering) -> Result<()> {
    if c.is_empty() {
        Err(Error::Empty("clustering"))
    } else {
        Ok(())
    }
}

/// `N / |C|`.
pub fn avg_cluster_size(c: &Clustering) -> Result<f64> {
    non_empty(c)?;
    Ok(c.len() as f64 / c.num_clusters() as f64)
}

/// Share of records in clusters of size at least two.
pub fn matching_rate(c: &Clustering) -> Result<f64> {
    non_empty(c)?;
    let matched: usize = c.sizes().filter(|&s| s > 1).sum();
    Ok(matched as f64 / c.len() as f64)
}

/// Cluster size distribution `P(|c| = i)`, ordered by size.
pub fn size_distribution(c: &Clustering) -> BTreeMap<usize, f64> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for s in c.sizes() {
        *counts.entry(s).or_default() += 1;
    }
    let total = c.num_clusters() as f64;
    counts.into_iter().map(|(s, n)| (s, n as f64 / total)).collect()
}

/// Hill number of order `q` of a probability vector with positive entries.
/// `q = f64::INFINITY` gives `1 / max p`.
pub fn hill_of_distribution(probs: &[f64], q: f64) -> Result<f64> {
    if q.is_nan() || q < 0.0 {
        return Err(Error::InvalidParameter(format!("Hill order must be >= 0, got {q}")));
    }
    if probs.is_empty() {
        return Err(Error::Empty("distribution"));
    }
    Ok(if q == 0.0 {
        probs.len() as f64
    } else if q == 1.0 {
        (-probs.iter().map(|p| p * p.ln()).sum::<f64>()).exp()
    } else if q.is_infinite() {
        1.0 / probs.iter().copied().fold(0.0, f64::max)
    } else {
        let s: f64 = probs.iter().map(|p| p.powf(q)).sum();
        (s.ln() / (1.0 - q)).exp()
    })
}

/// Hill number of the cluster size distribution.
pub fn hill_number(c: &Clustering, q: f64) -> Result<f64> {
    non_empty(c)?;
    let probs: Vec<f64> = size_distribution(c).into_values().collect();
    hill_of_distribution(&probs, q)
}

/// `q ∈ {0, 0.25, …, 2} ∪ {∞}`.
pub fn default_hill_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (0..=8).map(|i| i as f64 * 0.25).collect();
    grid.push(f64::INFINITY);
    grid
}

/// Parses a comma-separated grid; `inf` denotes infinity.
pub fn parse_hill_grid(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            let q = match t {
                "inf" | "Inf" | "infinity" | "∞" => f64::INFINITY,
                _ => t
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("bad Hill order `{t}`")))?,
            };
            if q.is_nan() || q < 0.0 {
                return Err(Error::InvalidParameter(format!("Hill order must be >= 0, got {t}")));
            }
            Ok(q)
        })
        .collect()
}

/// Label counts within one cluster, keyed by normalized label.
fn label_counts<'a>(members: &[RecordId], names: &'a NameIndex) -> Result<HashMap<&'a str, usize>> {
    let mut counts = HashMap::new();
    for r in members {
        let key = names
            .key(r.as_str())
            .ok_or_else(|| Error::MissingLabel(r.to_string()))?;
        *counts.entry(key).or_default() += 1;
    }
    Ok(counts)
}

/// Whether some member's label also occurs outside the cluster.
fn shares_label_outside(members: &[RecordId], names: &NameIndex) -> Result<bool> {
    let counts = label_counts(members, names)?;
    Ok(counts
        .iter()
        .any(|(key, &n)| names.group(key).map_or(0, <[_]>::len) > n))
}

/// Whether the cluster carries more than one distinct label.
fn has_label_variation(members: &[RecordId], names: &NameIndex) -> Result<bool> {
    Ok(label_counts(members, names)?.len() > 1)
}

/// Share of clusters containing a record whose label also occurs in
/// another cluster.
pub fn homonymy_rate(c: &Clustering, names: &NameIndex) -> Result<f64> {
    non_empty(c)?;
    let mut hits = 0usize;
    for (_, members) in c.clusters() {
        hits += usize::from(shares_label_outside(members, names)?);
    }
    Ok(hits as f64 / c.num_clusters() as f64)
}

/// Share of clusters whose records do not all share one label.
pub fn name_variation_rate(c: &Clustering, names: &NameIndex) -> Result<f64> {
    non_empty(c)?;
    let mut hits = 0usize;
    for (_, members) in c.clusters() {
        hits += usize::from(has_label_variation(members, names)?);
    }
    Ok(hits as f64 / c.num_clusters() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HillPoint {
    #[serde(serialize_with = "ser_order", deserialize_with = "de_order")]
    pub q: f64,
    pub value: f64,
}

fn ser_order<S: Serializer>(q: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if q.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*q)
    }
}

fn de_order<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Order {
        Num(f64),
        Text(String),
    }
    match Order::deserialize(d)? {
        Order::Num(q) => Ok(q),
        Order::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Order::Text(t) => Err(serde::de::Error::custom(format!("bad Hill order `{t}`"))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub v: u32,
    pub n_records: usize,
    pub n_clusters: usize,
    pub avg_cluster_size: f64,
    pub matching_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub homonymy_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name_variation_rate: Option<f64>,
    pub hill: Vec<HillPoint>,
}

impl SummaryReport {
    /// Label-based rates are included only when `names` is given.
    pub fn compute(c: &Clustering, names: Option<&NameIndex>, hill_grid: &[f64]) -> Result<Self> {
        non_empty(c)?;
        let probs: Vec<f64> = size_distribution(c).into_values().collect();
        let hill = hill_grid
            .iter()
            .map(|&q| {
                Ok(HillPoint {
                    q,
                    value: hill_of_distribution(&probs, q)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            v: 1,
            n_records: c.len(),
            n_clusters: c.num_clusters(),
            avg_cluster_size: avg_cluster_size(c)?,
            matching_rate: matching_rate(c)?,
            homonymy_rate: names.map(|n| homonymy_rate(c, n)).transpose()?,
            name_variation_rate: names.map(|n| name_variation_rate(c, n)).transpose()?,
            hill,
        })
    }
}

/// Ground-truth statistics estimable from a cluster sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryStat {
    AvgSize,
    MatchingRate,
    HomonymyRate,
    NameVariationRate,
}

impl SummaryStat {
    pub fn as_str(self) -> &'static str {
        match self {
            SummaryStat::AvgSize => "avg_size",
            SummaryStat::MatchingRate => "matching_rate",
            SummaryStat::HomonymyRate => "homonymy_rate",
            SummaryStat::NameVariationRate => "name_variation_rate",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "avg_size" | "avg_cluster_size" => SummaryStat::AvgSize,
            "matching_rate" => SummaryStat::MatchingRate,
            "homonymy_rate" => SummaryStat::HomonymyRate,
            "name_variation_rate" => SummaryStat::NameVariationRate,
            s if s.starts_with("hill") => {
                return Err(Error::Unsupported(
                    "Hill numbers cannot be estimated from a cluster sample; \
                     compute them on a full clustering instead"
                        .into(),
                ))
            }
            other => return Err(Error::InvalidParameter(format!("unknown statistic `{other}`"))),
        })
    }
}

/// Estimates a ground-truth summary statistic from a weighted sample of true
/// clusters. Label-based statistics need a name index over the whole record
/// universe.
pub fn estimate_summary(
    sample: &ClusterSample,
    which: SummaryStat,
    names: Option<&NameIndex>,
) -> Result<Estimate> {
    if sample.is_empty() {
        return Err(Error::Empty("sample"));
    }
    let needs_names = matches!(which, SummaryStat::HomonymyRate | SummaryStat::NameVariationRate);
    let names = match (needs_names, names) {
        (true, None) => {
            return Err(Error::InvalidParameter(format!(
                "`{}` needs record labels",
                which.as_str()
            )))
        }
        (_, n) => n,
    };
    let mut f = Vec::with_capacity(sample.len());
    let mut g = Vec::with_capacity(sample.len());
    for d in &sample.draws {
        if !(d.p_c > 0.0 && d.p_c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "nonpositive sampling weight for cluster `{}`",
                d.cluster_id
            )));
        }
        let size = d.members.len() as f64;
        let (num, den) = match which {
            SummaryStat::AvgSize => (size, 1.0),
            SummaryStat::MatchingRate => (if size > 1.0 { size } else { 0.0 }, size),
            SummaryStat::HomonymyRate => {
                (f64::from(u8::from(shares_label_outside(&d.members, names.unwrap())?)), 1.0)
            }
            SummaryStat::NameVariationRate => {
                (f64::from(u8::from(has_label_variation(&d.members, names.unwrap())?)), 1.0)
            }
        };
        f.push(num / d.p_c);
        g.push(den / d.p_c);
    }
    let v = ratio_estimate_values(&f, &g).map_err(|e| match e {
        Error::ZeroDenominator(_) => Error::ZeroDenominator(which.as_str().into()),
        other => other,
    })?;
    Ok(Estimate {
        metric: which.as_str().into(),
        point: v.point,
        std: v.variance.sqrt(),
        k: sample.len(),
        design: Some(sample.design.as_str().into()),
        beta: None,
        degenerate: v.degenerate,
    })
}
