//! Monte-Carlo harness measuring bias, RMSE and coverage of the estimators
//! under repeated cluster sampling from a known truth.
//!
//! Replicate `i` draws from a ChaCha8 generator keyed by `(seed, i)`; each
//! (design, sample size) cell of the replicate reads its own stream of that
//! generator, so results do not depend on execution order or worker count.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{oracle_metrics, ratio_estimate_values, Globals, Metric, RatioTarget};
use crate::metrics::{cluster_errors, ClusterErrors};
use crate::model::Clustering;
use crate::sampling::{Design, SimRng};

const CHECKPOINT_EVERY: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub designs: Vec<Design>,
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub metrics: Vec<Metric>,
    pub beta: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            designs: vec![Design::PpsRecord, Design::UniformCluster],
            sizes: vec![200, 400, 800],
            reps: 1000,
            metrics: vec![Metric::PairwisePrecision, Metric::PairwiseRecall],
            beta: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimCell {
    pub metric: Metric,
    pub design: Design,
    pub k: usize,
    pub truth: f64,
    pub bias: f64,
    pub rmse: f64,
    pub coverage_2: f64,
    pub mean_std: f64,
    pub successes: usize,
    /// Replicates where the estimator failed (e.g. zero denominator). They
    /// are excluded from bias and RMSE and count as not covering.
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub v: u32,
    pub seed: u64,
    pub replications: usize,
    pub cells: Vec<SimCell>,
}

impl SimReport {
    pub fn cell(&self, metric: Metric, design: Design, k: usize) -> Option<&SimCell> {
        self.cells
            .iter()
            .find(|c| c.metric == metric && c.design == design && c.k == k)
    }

    /// Tidy CSV, one row per metric × design × size.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record([
            "metric", "design", "k", "truth", "bias", "rmse", "coverage_2", "mean_std",
            "successes", "failures",
        ])?;
        for c in &self.cells {
            wtr.write_record([
                c.metric.as_str().to_owned(),
                c.design.as_str().to_owned(),
                c.k.to_string(),
                c.truth.to_string(),
                c.bias.to_string(),
                c.rmse.to_string(),
                c.coverage_2.to_string(),
                c.mean_std.to_string(),
                c.successes.to_string(),
                c.failures.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `(point, std)` as raw bits so checkpoints reload bit-exactly.
type Outcome = Option<(u64, u64)>;

/// Outcomes of one replicate, indexed `[cell][metric]`.
type RepOutcome = Vec<Vec<Outcome>>;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    config: SimConfig,
    outcomes: Vec<RepOutcome>,
}

/// Everything a replicate needs, precomputed once.
struct Population {
    rows: Vec<ClusterErrors>,
    cluster_of_record: Vec<u32>,
    n_records: f64,
}

pub struct Simulation<'a> {
    truth: &'a Clustering,
    prediction: &'a Clustering,
    config: SimConfig,
    checkpoint: Option<PathBuf>,
}

impl<'a> Simulation<'a> {
    pub fn new(truth: &'a Clustering, prediction: &'a Clustering, config: SimConfig) -> Self {
        Self {
            truth,
            prediction,
            config,
            checkpoint: None,
        }
    }

    /// Persist progress every 100 replicates to `path`, resuming from it when
    /// it holds a checkpoint of the same configuration.
    pub fn checkpoint(mut self, path: impl Into<PathBuf>) -> Self {
        self.checkpoint = Some(path.into());
        self
    }

    pub fn run(&self) -> Result<SimReport> {
        let cfg = &self.config;
        if cfg.reps == 0 || cfg.designs.is_empty() || cfg.sizes.is_empty() || cfg.metrics.is_empty() {
            return Err(Error::InvalidParameter(
                "simulation needs reps, designs, sizes and metrics".into(),
            ));
        }
        if let Some(d) = cfg
            .designs
            .iter()
            .find(|d| !matches!(d, Design::PpsRecord | Design::UniformCluster))
        {
            return Err(Error::Unsupported(format!(
                "design `{}` in simulations",
                d.as_str()
            )));
        }
        if cfg.sizes.contains(&0) {
            return Err(Error::InvalidParameter("sample sizes must be positive".into()));
        }

        let oracle = oracle_metrics(self.truth, self.prediction)?;
        let truths: Vec<f64> = cfg
            .metrics
            .iter()
            .map(|&m| {
                oracle.value(m, cfg.beta).ok_or_else(|| {
                    Error::InvalidParameter(format!("`{m}` is undefined on this population"))
                })
            })
            .collect::<Result<_>>()?;
        let globals = Globals {
            n_records: self.truth.len(),
            n_pred_clusters: self.prediction.num_clusters(),
        };
        let targets: Vec<RatioTarget> = cfg
            .metrics
            .iter()
            .map(|&m| RatioTarget::for_metric(m, cfg.beta, Some(globals)))
            .collect::<Result<_>>()?;
        let pop = self.population()?;

        let cells: Vec<(Design, usize)> = cfg
            .designs
            .iter()
            .flat_map(|&d| cfg.sizes.iter().map(move |&k| (d, k)))
            .collect();

        let mut outcomes = self.resume()?;
        while outcomes.len() < cfg.reps {
            let start = outcomes.len();
            let end = (start + CHECKPOINT_EVERY).min(cfg.reps);
            let chunk: Vec<RepOutcome> = (start..end)
                .into_par_iter()
                .map(|rep| replicate(&pop, &targets, &cells, cfg.seed, rep))
                .collect();
            outcomes.extend(chunk);
            self.save(&outcomes)?;
        }

        let mut report_cells = Vec::new();
        for (ci, &(design, k)) in cells.iter().enumerate() {
            for (mi, &metric) in cfg.metrics.iter().enumerate() {
                let theta = truths[mi];
                let (mut err, mut sq, mut std_sum) = (0.0, 0.0, 0.0);
                let (mut ok, mut covered) = (0usize, 0usize);
                for rep in &outcomes {
                    if let Some((p, s)) = rep[ci][mi] {
                        let (point, std) = (f64::from_bits(p), f64::from_bits(s));
                        ok += 1;
                        err += point - theta;
                        sq += (point - theta) * (point - theta);
                        std_sum += std;
                        covered += usize::from((point - theta).abs() <= 2.0 * std);
                    }
                }
                let n = ok.max(1) as f64;
                report_cells.push(SimCell {
                    metric,
                    design,
                    k,
                    truth: theta,
                    bias: if ok > 0 { err / n } else { f64::NAN },
                    rmse: if ok > 0 { (sq / n).sqrt() } else { f64::NAN },
                    coverage_2: covered as f64 / cfg.reps as f64,
                    mean_std: if ok > 0 { std_sum / n } else { f64::NAN },
                    successes: ok,
                    failures: cfg.reps - ok,
                });
            }
        }
        Ok(SimReport {
            v: 1,
            seed: cfg.seed,
            replications: cfg.reps,
            cells: report_cells,
        })
    }

    fn population(&self) -> Result<Population> {
        let mut rows = Vec::with_capacity(self.truth.num_clusters());
        let mut cluster_of_record = Vec::with_capacity(self.truth.len());
        for (i, (cid, members)) in self.truth.clusters().enumerate() {
            rows.push(cluster_errors(cid.clone(), members, self.prediction)?);
            cluster_of_record.extend(std::iter::repeat_n(i as u32, members.len()));
        }
        Ok(Population {
            rows,
            cluster_of_record,
            n_records: self.truth.len() as f64,
        })
    }

    fn resume(&self) -> Result<Vec<RepOutcome>> {
        let Some(path) = &self.checkpoint else {
            return Ok(Vec::new());
        };
        let Ok(bytes) = fs::read(path) else {
            return Ok(Vec::new());
        };
        let cp: Checkpoint = serde_json::from_slice(&bytes)?;
        if cp.config != self.config {
            return Err(Error::InvalidState(format!(
                "checkpoint {} was written for a different configuration",
                path.display()
            )));
        }
        let mut outcomes = cp.outcomes;
        outcomes.truncate(self.config.reps);
        Ok(outcomes)
    }

    fn save(&self, outcomes: &[RepOutcome]) -> Result<()> {
        let Some(path) = &self.checkpoint else {
            return Ok(());
        };
        let tmp = path.with_extension("tmp");
        let cp = Checkpoint {
            config: self.config.clone(),
            outcomes: outcomes.to_vec(),
        };
        fs::write(&tmp, serde_json::to_vec(&cp)?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }
}

fn replicate_rng(seed: u64, rep: usize, cell: usize) -> SimRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(rep as u64).to_le_bytes());
    let mut rng = SimRng::from_seed(key);
    rng.set_stream(cell as u64);
    rng
}

fn replicate(
    pop: &Population,
    targets: &[RatioTarget],
    cells: &[(Design, usize)],
    seed: u64,
    rep: usize,
) -> RepOutcome {
    let mut out = Vec::with_capacity(cells.len());
    let mut picks: Vec<(usize, f64)> = Vec::new();
    let (mut f, mut g) = (Vec::new(), Vec::new());
    for (ci, &(design, k)) in cells.iter().enumerate() {
        let mut rng = replicate_rng(seed, rep, ci);
        picks.clear();
        for _ in 0..k {
            let pick = match design {
                Design::PpsRecord => {
                    let r = rng.random_range(0..pop.cluster_of_record.len());
                    let c = pop.cluster_of_record[r] as usize;
                    (c, pop.rows[c].size as f64 / pop.n_records)
                }
                _ => (rng.random_range(0..pop.rows.len()), 1.0),
            };
            picks.push(pick);
        }
        let mut per_metric = Vec::with_capacity(targets.len());
        for t in targets {
            f.clear();
            g.clear();
            for &(c, p) in &picks {
                f.push(t.f(&pop.rows[c]) / p);
                g.push(t.g(&pop.rows[c]) / p);
            }
            let outcome = ratio_estimate_values(&f, &g)
                .ok()
                .map(|v| (t.report(v.point).to_bits(), v.variance.sqrt().to_bits()));
            per_metric.push(outcome);
        }
        out.push(per_metric);
    }
    out
}

/// Runs a simulation without checkpointing.
pub fn run_simulation(truth: &Clustering, prediction: &Clustering, config: SimConfig) -> Result<SimReport> {
    Simulation::new(truth, prediction, config).run()
}
