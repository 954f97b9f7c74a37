//! Finalized benchmark clusters, one JSON line per draw.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{LabelingSession, TaskStatus};
use crate::error::{Error, Result};
use crate::model::{ClusterId, RecordId};
use crate::sampling::{ClusterSample, Design, Draw};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkDraw {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_record: Option<RecordId>,
    /// Sorted members of the true cluster.
    pub members: Vec<RecordId>,
    pub p_c: f64,
    pub design: Design,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finalized_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labeler: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction_snapshot: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
}

impl BenchmarkDraw {
    /// Benchmark clusters are named after their smallest member.
    pub fn cluster_id(&self) -> ClusterId {
        ClusterId::new(self.members[0].as_str())
    }
}

/// Sampled true clusters with their selection weights. Repeated draws of
/// the same cluster stay as separate entries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchmarkSet {
    pub draws: Vec<BenchmarkDraw>,
}

impl BenchmarkSet {
    pub fn new(draws: Vec<BenchmarkDraw>) -> Result<Self> {
        let set = Self { draws };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Collects the finalized tasks of a session. Fails while tasks are
    /// open or when two resolved clusters overlap without being identical.
    pub fn export(session: &LabelingSession) -> Result<Self> {
        let open: Vec<&str> = session
            .tasks
            .iter()
            .filter(|t| t.status != TaskStatus::Finalized)
            .map(|t| t.task_id.as_str())
            .collect();
        if !open.is_empty() {
            return Err(Error::InvalidState(format!(
                "unfinalized tasks: {}",
                open.join(", ")
            )));
        }
        let draws = session
            .tasks
            .iter()
            .map(|t| BenchmarkDraw {
                seed_record: Some(t.seed_record.clone()),
                members: t.resolved_cluster().into_iter().collect(),
                p_c: t.p_c.expect("finalized tasks carry p_c"),
                design: session.design,
                finalized_at: t.finalized_at,
                labeler: t.labeler.clone(),
                session_id: Some(session.session_id.clone()),
                prediction_snapshot: Some(session.prediction_snapshot.clone()),
                rng_seed: Some(session.rng_seed),
            })
            .collect();
        Self::new(draws)
    }

    fn validate(&self) -> Result<()> {
        let mut owner: HashMap<&RecordId, usize> = HashMap::new();
        let mut conflicts = BTreeSet::new();
        for (i, d) in self.draws.iter().enumerate() {
            if d.members.is_empty() {
                return Err(Error::InvalidParameter(format!("draw {} has no members", i + 1)));
            }
            if !d.members.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::InvalidParameter(format!(
                    "draw {} members must be sorted and distinct",
                    i + 1
                )));
            }
            if !(d.p_c > 0.0 && d.p_c.is_finite()) {
                return Err(Error::InvalidParameter(format!("draw {} has non-positive p_c", i + 1)));
            }
            if let Some(seed) = &d.seed_record {
                if d.members.binary_search(seed).is_err() {
                    return Err(Error::InvalidParameter(format!(
                        "draw {} does not contain its seed `{seed}`",
                        i + 1
                    )));
                }
            }
            for r in &d.members {
                match owner.get(r) {
                    Some(&j) if self.draws[j].members != d.members => {
                        conflicts.insert(format!("record `{r}` in draws {} and {}", j + 1, i + 1));
                    }
                    Some(_) => {}
                    None => {
                        owner.insert(r, i);
                    }
                }
            }
        }
        if conflicts.is_empty() {
            Ok(())
        } else {
            Err(Error::OverlapConflict(conflicts.into_iter().collect()))
        }
    }

    /// Distinct clusters with the number of times each was drawn.
    pub fn distinct_clusters(&self) -> Vec<(&[RecordId], usize)> {
        let mut seen: Vec<(&[RecordId], usize)> = Vec::new();
        let mut at: HashMap<&RecordId, usize> = HashMap::new();
        for d in &self.draws {
            match at.get(&d.members[0]) {
                Some(&i) => seen[i].1 += 1,
                None => {
                    at.insert(&d.members[0], seen.len());
                    seen.push((&d.members, 1));
                }
            }
        }
        seen
    }

    /// The draws as a cluster sample, in file order.
    pub fn to_sample(&self) -> Result<ClusterSample> {
        let first = self.draws.first().ok_or(Error::Empty("benchmark"))?;
        let design = first.design;
        if self.draws.iter().any(|d| d.design != design) {
            return Err(Error::InvalidParameter("benchmark mixes sampling designs".into()));
        }
        let draws = self
            .draws
            .iter()
            .map(|d| Draw {
                cluster_id: d.cluster_id(),
                members: d.members.clone(),
                p_c: d.p_c,
                seed_record: d.seed_record.clone(),
            })
            .collect();
        Ok(ClusterSample::new(design, first.rng_seed.unwrap_or(0), draws))
    }

    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<()> {
        for d in &self.draws {
            serde_json::to_writer(&mut writer, d)?;
            writer.write_all(b"\n")?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Reads one draw per non-blank line. Members are sorted on input.
    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut draws = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = i as u64 + 1;
            let mut d: BenchmarkDraw =
                serde_json::from_str(&line).map_err(|e| Error::parse(lineno, e.to_string()))?;
            d.members.sort();
            draws.push(d);
        }
        if draws.is_empty() {
            return Err(Error::Empty("benchmark"));
        }
        Self::new(draws)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::tests::{canonical_prediction, spec, t0};
    use crate::labeling::EditOp;
    use chrono::Duration;

    fn rid(s: &str) -> RecordId {
        s.into()
    }

    fn draw(members: &[&str], p_c: f64) -> BenchmarkDraw {
        BenchmarkDraw {
            seed_record: Some(rid(members[0])),
            members: members.iter().map(|&m| rid(m)).collect(),
            p_c,
            design: Design::PpsRecord,
            finalized_at: None,
            labeler: None,
            session_id: None,
            prediction_snapshot: None,
            rng_seed: None,
        }
    }

    #[test]
    fn identical_clusters_are_kept_as_draws() {
        let b = BenchmarkSet::new(vec![draw(&["r1", "r2"], 0.4), draw(&["r1", "r2"], 0.4)]).unwrap();
        assert_eq!(b.distinct_clusters(), vec![(&b.draws[0].members[..], 2)]);
        assert_eq!(b.to_sample().unwrap().len(), 2);
    }

    #[test]
    fn overlapping_clusters_fail() {
        let err = BenchmarkSet::new(vec![draw(&["r1", "r2"], 0.4), draw(&["r2", "r3"], 0.4)]).unwrap_err();
        match err {
            Error::OverlapConflict(c) => assert_eq!(c, vec!["record `r2` in draws 1 and 2".to_string()]),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn rejects_bad_draws() {
        assert!(BenchmarkSet::new(vec![draw(&["r1"], 0.0)]).is_err());
        assert!(BenchmarkSet::new(vec![draw(&["r2", "r1"], 0.5)]).is_err());
        let mut d = draw(&["r1"], 0.5);
        d.seed_record = Some(rid("r9"));
        assert!(BenchmarkSet::new(vec![d]).is_err());
        assert!(BenchmarkSet::read_jsonl("\n".as_bytes()).is_err());
        assert!(BenchmarkSet::read_jsonl("{\"members\":[]}\n".as_bytes()).is_err());
    }

    #[test]
    fn export_requires_finalized_tasks() {
        let pred = canonical_prediction();
        let (mut s, _) = LabelingSession::from_seeds(spec("s"), &pred, vec![rid("r3"), rid("r1")], t0()).unwrap();
        assert!(BenchmarkSet::export(&s).is_err());
        let ttl = Duration::minutes(15);
        let a = s.tasks[0].task_id.clone();
        s.lease_task(&a, "ann", t0(), ttl).unwrap();
        s.apply_edit(&a, "ann", EditOp::Remove, &rid("r5"), t0()).unwrap();
        s.finalize(&a, "ann", t0()).unwrap();
        let b = s.tasks[1].task_id.clone();
        s.lease_task(&b, "ann", t0(), ttl).unwrap();
        s.finalize(&b, "ann", t0()).unwrap();
        // {r3, r4} and {r1, r2} are disjoint
        let set = BenchmarkSet::export(&s).unwrap();
        assert_eq!(set.draws[0].members, vec![rid("r3"), rid("r4")]);
        assert_eq!(set.draws[0].p_c, 2.0 / 5.0);

        let mut buf = Vec::new();
        set.write_jsonl(&mut buf).unwrap();
        assert_eq!(BenchmarkSet::read_jsonl(buf.as_slice()).unwrap(), set);
    }
}
