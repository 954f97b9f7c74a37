//! Cluster sampling designs.
//!
//! All designs sample with replacement. A draw records the sampled cluster
//! and its single-draw selection weight `p_c`, known up to a global constant.

use std::collections::HashMap;
use std::io::Read;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClusterId, Clustering, RecordId};

/// Portable seeded generator used for every random choice in the crate.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// Uniform record draws; `p_c = |c| / N`.
    PpsRecord,
    /// Uniform cluster draws; `p_c = 1`.
    UniformCluster,
    /// Record draws proportional to expected labeling error.
    ExpectedError,
    /// Weights supplied by the caller.
    External,
}

impl Design {
    pub fn as_str(self) -> &'static str {
        match self {
            Design::PpsRecord => "pps_record",
            Design::UniformCluster => "uniform_cluster",
            Design::ExpectedError => "expected_error",
            Design::External => "external",
        }
    }

    /// Accepts the canonical names and the short CLI aliases.
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "pps_record" | "pps" | "cluster_size" => Design::PpsRecord,
            "uniform_cluster" | "uniform" => Design::UniformCluster,
            "expected_error" => Design::ExpectedError,
            "external" | "file" => Design::External,
            other => return Err(Error::InvalidParameter(format!("unknown design `{other}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub cluster_id: ClusterId,
    pub members: Vec<RecordId>,
    pub p_c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_record: Option<RecordId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSample {
    pub design: Design,
    pub rng_seed: u64,
    pub draws: Vec<Draw>,
}

impl ClusterSample {
    pub fn new(design: Design, rng_seed: u64, draws: Vec<Draw>) -> Self {
        Self {
            design,
            rng_seed,
            draws,
        }
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Every cluster of `truth` exactly once, weighted per `design`.
    pub fn census(truth: &Clustering, design: Design) -> Self {
        let n = truth.len() as f64;
        let draws = truth
            .clusters()
            .map(|(cid, members)| Draw {
                cluster_id: cid.clone(),
                members: members.to_vec(),
                p_c: match design {
                    Design::PpsRecord => members.len() as f64 / n,
                    _ => 1.0,
                },
                seed_record: None,
            })
            .collect();
        Self::new(design, 0, draws)
    }

    /// Replaces every weight according to `design` (`N` is the universe size).
    pub fn reweight(&mut self, design: Design, universe_size: usize) -> Result<()> {
        match design {
            Design::PpsRecord => {
                if universe_size == 0 {
                    return Err(Error::Empty("record universe"));
                }
                for d in &mut self.draws {
                    d.p_c = d.members.len() as f64 / universe_size as f64;
                }
            }
            Design::UniformCluster => self.draws.iter_mut().for_each(|d| d.p_c = 1.0),
            Design::ExpectedError | Design::External => {
                return Err(Error::InvalidParameter(format!(
                    "cannot recompute weights for design `{}`",
                    design.as_str()
                )))
            }
        }
        self.design = design;
        Ok(())
    }
}

fn check_k(truth: &Clustering, k: usize) -> Result<()> {
    if truth.is_empty() {
        return Err(Error::Empty("clustering"));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("sample size k must be at least 1".into()));
    }
    Ok(())
}

/// Probability-proportional-to-size sample: `k` uniform record draws, each
/// mapped to its cluster.
pub fn sample_pps(truth: &Clustering, k: usize, rng_seed: u64) -> Result<ClusterSample> {
    check_k(truth, k)?;
    let mut rng = rng_from_seed(rng_seed);
    let records: Vec<&RecordId> = truth.records().collect();
    let n = records.len() as f64;
    let draws = (0..k)
        .map(|_| {
            let r = records[rng.random_range(0..records.len())];
            let (cid, members) = truth.cluster_members_of(r.as_str()).expect("record in truth");
            Draw {
                cluster_id: cid.clone(),
                members: members.to_vec(),
                p_c: members.len() as f64 / n,
                seed_record: Some(r.clone()),
            }
        })
        .collect();
    Ok(ClusterSample::new(Design::PpsRecord, rng_seed, draws))
}

/// Uniform cluster sample with `p_c = 1`.
pub fn sample_uniform(truth: &Clustering, k: usize, rng_seed: u64) -> Result<ClusterSample> {
    check_k(truth, k)?;
    let mut rng = rng_from_seed(rng_seed);
    let clusters: Vec<(&ClusterId, &[RecordId])> = truth.clusters().collect();
    let draws = (0..k)
        .map(|_| {
            let (cid, members) = clusters[rng.random_range(0..clusters.len())];
            Draw {
                cluster_id: cid.clone(),
                members: members.to_vec(),
                p_c: 1.0,
                seed_record: None,
            }
        })
        .collect();
    Ok(ClusterSample::new(Design::UniformCluster, rng_seed, draws))
}

/// Record draws proportional to `weights`; a true cluster's weight is the
/// sum of its members' weights.
pub fn sample_by_record_weight(
    truth: &Clustering,
    weights: &HashMap<RecordId, f64>,
    k: usize,
    rng_seed: u64,
) -> Result<ClusterSample> {
    check_k(truth, k)?;
    let records: Vec<&RecordId> = truth.records().collect();
    let w: Vec<f64> = records
        .iter()
        .map(|r| weights.get(r.as_str()).copied().unwrap_or(0.0))
        .collect();
    let total: f64 = w.iter().sum();
    let dist = WeightedIndex::new(&w)
        .map_err(|e| Error::InvalidParameter(format!("record weights: {e}")))?;
    let mut rng = rng_from_seed(rng_seed);
    let draws = (0..k)
        .map(|_| {
            let r = records[dist.sample(&mut rng)];
            let (cid, members) = truth.cluster_members_of(r.as_str()).expect("record in truth");
            let mass: f64 = members
                .iter()
                .map(|m| weights.get(m.as_str()).copied().unwrap_or(0.0))
                .sum();
            Draw {
                cluster_id: cid.clone(),
                members: members.to_vec(),
                p_c: mass / total,
                seed_record: Some(r.clone()),
            }
        })
        .collect();
    Ok(ClusterSample::new(Design::ExpectedError, rng_seed, draws))
}

/// Sparse symmetric source of pairwise match probabilities `p_{r,r'}`.
/// Pairs absent from the source have probability 0.
#[derive(Clone, Debug, Default)]
pub struct PairProbabilities {
    adjacency: HashMap<RecordId, Vec<(RecordId, f64)>>,
}

impl PairProbabilities {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, a: RecordId, b: RecordId, p: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!(
                "match probability {p} for ({a}, {b}) outside [0, 1]"
            )));
        }
        if a == b {
            return Ok(());
        }
        self.adjacency.entry(a.clone()).or_default().push((b.clone(), p));
        self.adjacency.entry(b).or_default().push((a, p));
        Ok(())
    }

    pub fn from_triples<I>(triples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (RecordId, RecordId, f64)>,
    {
        let mut out = Self::new();
        for (a, b, p) in triples {
            out.insert(a, b, p)?;
        }
        Ok(out)
    }

    /// Reads a CSV with header `record_a,record_b,p`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["record_a", "record_b", "p"] {
            return Err(Error::parse(1, "expected header `record_a,record_b,p`"));
        }
        let mut out = Self::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let line = i as u64 + 2;
            if row.len() != 3 {
                return Err(Error::parse(line, "expected 3 fields"));
            }
            if row[0].is_empty() || row[1].is_empty() {
                return Err(Error::parse(line, "empty id"));
            }
            let p: f64 = row[2]
                .trim()
                .parse()
                .map_err(|_| Error::parse(line, format!("bad probability `{}`", &row[2])))?;
            out.insert(RecordId::from(&row[0]), RecordId::from(&row[1]), p)?;
        }
        Ok(out)
    }

    fn neighbors(&self, r: &str) -> &[(RecordId, f64)] {
        self.adjacency.get(r).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Expected labeling effort per record: `E|A_r| + E|B_r|`, where
/// `E|A_r| = Σ_{r' ∈ ĉ(r), r' ≠ r} (1 - p_{r,r'})` and
/// `E|B_r| = Σ_{r' ∉ ĉ(r)} p_{r,r'}`.
pub fn expected_error_weights(
    prediction: &Clustering,
    probs: &PairProbabilities,
) -> HashMap<RecordId, f64> {
    let mut out = HashMap::with_capacity(prediction.len());
    for (cid, members) in prediction.clusters() {
        for r in members {
            let mut inside: HashMap<&str, f64> = HashMap::new();
            let mut outside = 0.0;
            for (other, p) in probs.neighbors(r.as_str()) {
                if prediction.cluster_of(other.as_str()) == Some(cid) {
                    inside.insert(other.as_str(), *p);
                } else {
                    outside += p;
                }
            }
            let over: f64 = members
                .iter()
                .filter(|m| *m != r)
                .map(|m| 1.0 - inside.get(m.as_str()).copied().unwrap_or(0.0))
                .sum();
            out.insert(r.clone(), over + outside);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_probabilities_csv() {
        let p = PairProbabilities::read_csv("record_a,record_b,p\nr1,r2,0.9\nr1,r3,0.2\n".as_bytes()).unwrap();
        assert_eq!(p.neighbors("r1").len(), 2);
        assert_eq!(p.neighbors("r3"), &[(RecordId::from("r1"), 0.2)]);
        assert!(PairProbabilities::read_csv("a,b,p\n".as_bytes()).is_err());
        assert!(PairProbabilities::read_csv("record_a,record_b,p\nr1,r2,1.5\n".as_bytes()).is_err());
        assert!(PairProbabilities::read_csv("record_a,record_b,p\nr1,r2,x\n".as_bytes()).is_err());
    }

    fn canonical_truth() -> Clustering {
        Clustering::from_groups([vec!["r1", "r2", "r3"], vec!["r4", "r5"]]).unwrap()
    }

    #[test]
    fn single_cluster_pps_repeats_it() {
        let t = Clustering::from_groups([vec!["a", "b", "c"]]).unwrap();
        let s = sample_pps(&t, 7, 3).unwrap();
        assert_eq!(s.len(), 7);
        assert!(s.draws.iter().all(|d| d.p_c == 1.0 && d.members.len() == 3));
    }

    #[test]
    fn pps_frequency_matches_size_share() {
        let s = sample_pps(&canonical_truth(), 100_000, 11).unwrap();
        let big = s.draws.iter().filter(|d| d.members.len() == 3).count() as f64;
        assert!((big / 100_000.0 - 0.6).abs() < 0.01);
        assert!(s.draws.iter().all(|d| d.seed_record.is_some()));
    }

    #[test]
    fn uniform_frequency_is_flat() {
        let s = sample_uniform(&canonical_truth(), 100_000, 11).unwrap();
        let big = s.draws.iter().filter(|d| d.members.len() == 3).count() as f64;
        assert!((big / 100_000.0 - 0.5).abs() < 0.01);
        assert!(s.draws.iter().all(|d| d.p_c == 1.0));
    }

    #[test]
    fn samples_are_reproducible() {
        let t = canonical_truth();
        assert_eq!(sample_pps(&t, 50, 9).unwrap(), sample_pps(&t, 50, 9).unwrap());
        assert_eq!(sample_uniform(&t, 50, 9).unwrap(), sample_uniform(&t, 50, 9).unwrap());
        assert_ne!(sample_pps(&t, 50, 9).unwrap(), sample_pps(&t, 50, 10).unwrap());
    }

    #[test]
    fn sampling_rejects_bad_input() {
        assert!(sample_pps(&Clustering::default(), 3, 0).is_err());
        assert!(sample_pps(&canonical_truth(), 0, 0).is_err());
        assert!(sample_uniform(&Clustering::default(), 3, 0).is_err());
    }

    #[test]
    fn expected_error_weights_examples() {
        // confident and correct
        let pred = Clustering::from_groups([vec!["a", "b"], vec!["c"]]).unwrap();
        let probs = PairProbabilities::from_triples([("a".into(), "b".into(), 1.0)]).unwrap();
        let w = expected_error_weights(&pred, &probs);
        assert!(w.values().all(|&x| x == 0.0));

        // singleton with one external candidate
        let probs = PairProbabilities::from_triples([("c".into(), "a".into(), 0.4)]).unwrap();
        let w = expected_error_weights(&pred, &probs);
        assert!((w["c"] - 0.4).abs() < 1e-12);

        // cluster of three, internal probabilities 0.9 and 0.2
        let pred = Clustering::from_groups([vec!["x", "y", "z"]]).unwrap();
        let probs = PairProbabilities::from_triples([
            ("x".into(), "y".into(), 0.9),
            ("x".into(), "z".into(), 0.2),
        ])
        .unwrap();
        let w = expected_error_weights(&pred, &probs);
        assert!((w["x"] - 0.9).abs() < 1e-12);

        assert!(PairProbabilities::from_triples([("a".into(), "b".into(), 1.2)]).is_err());
    }

    #[test]
    fn record_weight_design_sums_member_weights() {
        let t = canonical_truth();
        let w: HashMap<RecordId, f64> =
            [("r1", 1.0), ("r2", 1.0), ("r4", 2.0)].into_iter().map(|(r, x)| (r.into(), x)).collect();
        let s = sample_by_record_weight(&t, &w, 200, 1).unwrap();
        for d in &s.draws {
            let expect = if d.members.len() == 3 { 0.5 } else { 0.5 };
            assert!((d.p_c - expect).abs() < 1e-12);
            assert_ne!(d.seed_record.as_ref().unwrap().as_str(), "r3");
        }
    }
}
