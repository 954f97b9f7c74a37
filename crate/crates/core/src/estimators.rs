//! Ratio estimators of performance metrics from an [`ErrorTable`].
//!
//! Every supported metric can be written as `θ = E[f(c)/p_c] / E[g(c)/p_c]`
//! where `c` is a true cluster drawn with probability proportional to `p_c`
//! and `f`, `g` are functions of its cluster-wise error metrics. A sample of
//! `k` draws gives the bias-adjusted ratio estimate
//!
//! ```text
//! θ̂ = (f̄/ḡ) · {1 + 1/(k(k-1)) · Σ (g_i/ḡ)(f_i/f̄ − g_i/ḡ)}
//! V̂ = (f̄/ḡ)² · 1/(k(k-1)) · Σ (g_i/ḡ − f_i/f̄)²
//! ```
//!
//! with `f_i = f(c_i)/p_{c_i}` and `g_i = g(c_i)/p_{c_i}`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ClusterErrors;

pub mod oracle;

pub use oracle::{oracle_metrics, OracleMetrics};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    PairwisePrecision,
    PairwiseRecall,
    PairwiseF,
    ClusterPrecision,
    ClusterRecall,
    ClusterF,
    BcubedPrecision,
    BcubedRecall,
    Homogeneity,
}

impl Metric {
    pub const ALL: [Metric; 9] = [
        Metric::PairwisePrecision,
        Metric::PairwiseRecall,
        Metric::PairwiseF,
        Metric::ClusterPrecision,
        Metric::ClusterRecall,
        Metric::ClusterF,
        Metric::BcubedPrecision,
        Metric::BcubedRecall,
        Metric::Homogeneity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::PairwisePrecision => "pairwise_precision",
            Metric::PairwiseRecall => "pairwise_recall",
            Metric::PairwiseF => "pairwise_f",
            Metric::ClusterPrecision => "cluster_precision",
            Metric::ClusterRecall => "cluster_recall",
            Metric::ClusterF => "cluster_f",
            Metric::BcubedPrecision => "bcubed_precision",
            Metric::BcubedRecall => "bcubed_recall",
            Metric::Homogeneity => "homogeneity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown metric `{s}`")))
    }

    /// Whether the metric takes an F-score `beta`.
    pub fn uses_beta(self) -> bool {
        matches!(self, Metric::PairwiseF | Metric::ClusterF)
    }

    /// Whether the metric needs `N` or `|Ĉ|`.
    pub fn needs_globals(self) -> bool {
        matches!(
            self,
            Metric::ClusterPrecision | Metric::ClusterF | Metric::Homogeneity
        )
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Population-level quantities some targets need: `N` and `|Ĉ|`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Globals {
    pub n_records: usize,
    pub n_pred_clusters: usize,
}

type RowFn = Arc<dyn Fn(&ClusterErrors) -> f64 + Send + Sync>;

/// A ratio `E[f(c)/p_c] / E[g(c)/p_c]`. `f` and `g` are evaluated on a row
/// before the inverse-probability weighting.
#[derive(Clone)]
pub struct RatioTarget {
    pub name: String,
    pub beta: Option<f64>,
    f: RowFn,
    g: RowFn,
    /// Report `1 - θ` instead of `θ` (homogeneity).
    complement: bool,
}

impl fmt::Debug for RatioTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RatioTarget")
            .field("name", &self.name)
            .field("beta", &self.beta)
            .field("complement", &self.complement)
            .finish_non_exhaustive()
    }
}

impl RatioTarget {
    pub fn new<F, G>(name: impl Into<String>, f: F, g: G) -> Self
    where
        F: Fn(&ClusterErrors) -> f64 + Send + Sync + 'static,
        G: Fn(&ClusterErrors) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            beta: None,
            f: Arc::new(f),
            g: Arc::new(g),
            complement: false,
        }
    }

    pub fn f(&self, row: &ClusterErrors) -> f64 {
        (self.f)(row)
    }

    pub fn g(&self, row: &ClusterErrors) -> f64 {
        (self.g)(row)
    }

    /// Builds the target of a standard metric.
    pub fn for_metric(metric: Metric, beta: f64, globals: Option<Globals>) -> Result<Self> {
        if metric.uses_beta() && !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        let globals = if metric.needs_globals() {
            let g = globals.ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "`{metric}` needs the record count and the number of predicted clusters"
                ))
            })?;
            if g.n_records == 0 || g.n_pred_clusters == 0 {
                return Err(Error::InvalidParameter("globals must be positive".into()));
            }
            Some((g.n_records as f64, g.n_pred_clusters as f64))
        } else {
            None
        };
        let name = metric.as_str();
        let shared = |r: &ClusterErrors| {
            let s = r.size as f64;
            s * (s - 1.0 - r.uce)
        };
        let mut t = match metric {
            Metric::PairwisePrecision => RatioTarget::new(name, shared, |r| {
                let s = r.size as f64;
                s * (s - 1.0 + r.sde)
            }),
            Metric::PairwiseRecall => RatioTarget::new(name, shared, |r| {
                let s = r.size as f64;
                s * (s - 1.0)
            }),
            Metric::PairwiseF => {
                let w = 1.0 / (1.0 + beta * beta);
                RatioTarget::new(name, shared, move |r| {
                    let s = r.size as f64;
                    s * (s - 1.0 + w * r.sde)
                })
            }
            Metric::ClusterPrecision => {
                let (n, m) = globals.unwrap();
                RatioTarget::new(name, ClusterErrors::ci, move |r| r.size as f64 * m / n)
            }
            Metric::ClusterRecall => RatioTarget::new(name, ClusterErrors::ci, |_| 1.0),
            Metric::ClusterF => {
                let (n, m) = globals.unwrap();
                let b2 = beta * beta;
                RatioTarget::new(
                    name,
                    move |r| n * (1.0 + b2) * r.ci(),
                    move |r| n * b2 + m * r.size as f64,
                )
            }
            Metric::BcubedPrecision => RatioTarget::new(name, |r| 1.0 - r.roce, |_| 1.0),
            Metric::BcubedRecall => RatioTarget::new(name, |r| 1.0 - r.ruce, |_| 1.0),
            Metric::Homogeneity => {
                let (n, _) = globals.unwrap();
                let mut t = RatioTarget::new(
                    name,
                    |r| r.size as f64 * r.h,
                    move |r| {
                        let s = r.size as f64;
                        s * (s / n).ln()
                    },
                );
                t.complement = true;
                t
            }
        };
        if metric.uses_beta() {
            t.beta = Some(beta);
        }
        Ok(t)
    }

    /// Maps an estimate of the ratio to the reported metric value.
    pub fn report(&self, theta: f64) -> f64 {
        if self.complement {
            1.0 - theta
        } else {
            theta
        }
    }

    /// `Σ f / Σ g` over a census (every true cluster exactly once). Equals
    /// the population metric for any positive weights.
    pub fn census_value(&self, rows: &[ClusterErrors]) -> f64 {
        let f: f64 = rows.iter().map(|r| self.f(r)).sum();
        let g: f64 = rows.iter().map(|r| self.g(r)).sum();
        self.report(f / g)
    }
}

/// A point estimate with its estimated standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub metric: String,
    pub point: f64,
    pub std: f64,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Set when no sampled cluster contributed to the numerator; the point
    /// is then the unadjusted ratio 0 and the standard deviation is 0.
    #[serde(default)]
    pub degenerate: bool,
}

impl Estimate {
    /// `point ± 2·std`.
    pub fn interval(&self) -> (f64, f64) {
        (self.point - 2.0 * self.std, self.point + 2.0 * self.std)
    }

    pub fn covers(&self, truth: f64) -> bool {
        (self.point - truth).abs() <= 2.0 * self.std
    }

    /// Clamps the point into `[0, 1]` for reporting.
    pub fn clamped(mut self) -> Self {
        self.point = self.point.clamp(0.0, 1.0);
        self
    }
}

/// Result of the bias-adjusted ratio estimator on raw values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatioValue {
    pub point: f64,
    pub variance: f64,
    /// Unadjusted `f̄/ḡ`.
    pub ratio: f64,
    pub degenerate: bool,
}

/// Bias-adjusted ratio estimate of `E[f]/E[g]` from paired draws.
pub fn ratio_estimate_values(f: &[f64], g: &[f64]) -> Result<RatioValue> {
    assert_eq!(f.len(), g.len(), "f and g must be paired");
    let k = f.len();
    if k < 2 {
        return Err(Error::InsufficientSample(k));
    }
    if f.iter().chain(g).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite ratio contribution".into()));
    }
    let kf = k as f64;
    let f_bar = f.iter().sum::<f64>() / kf;
    let g_bar = g.iter().sum::<f64>() / kf;
    if g_bar == 0.0 {
        return Err(Error::ZeroDenominator(String::new()));
    }
    let ratio = f_bar / g_bar;
    let norm = 1.0 / (kf * (kf - 1.0));
    if f_bar == 0.0 {
        // f_i/f̄ is taken as 0; the leading (f̄/ḡ)² factor zeroes the variance.
        return Ok(RatioValue {
            point: 0.0,
            variance: 0.0,
            ratio: 0.0,
            degenerate: true,
        });
    }
    let (mut adj, mut var) = (0.0, 0.0);
    for (fi, gi) in f.iter().zip(g) {
        let a = gi / g_bar;
        let b = fi / f_bar;
        adj += a * (b - a);
        var += (a - b) * (a - b);
    }
    Ok(RatioValue {
        point: ratio * (1.0 + norm * adj),
        variance: ratio * ratio * norm * var,
        ratio,
        degenerate: false,
    })
}

/// Estimates `target` from sampled rows (with-replacement draws).
pub fn ratio_estimate(rows: &[ClusterErrors], target: &RatioTarget) -> Result<Estimate> {
    let mut f = Vec::with_capacity(rows.len());
    let mut g = Vec::with_capacity(rows.len());
    for r in rows {
        if !(r.p_c > 0.0 && r.p_c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "nonpositive sampling weight for cluster `{}`",
                r.cluster_id
            )));
        }
        f.push(target.f(r) / r.p_c);
        g.push(target.g(r) / r.p_c);
    }
    let v = ratio_estimate_values(&f, &g).map_err(|e| match e {
        Error::ZeroDenominator(_) if target.complement => Error::HomogeneityUndefined,
        Error::ZeroDenominator(_) => Error::ZeroDenominator(target.name.clone()),
        other => other,
    })?;
    let point = target.report(v.point);
    Ok(Estimate {
        metric: target.name.clone(),
        point,
        std: v.variance.sqrt(),
        k: rows.len(),
        design: None,
        beta: target.beta,
        degenerate: v.degenerate,
    })
}

/// Estimate restricted to the true clusters selected by `keep`.
pub fn subgroup_estimate<P>(rows: &[ClusterErrors], keep: P, target: &RatioTarget) -> Result<Estimate>
where
    P: Fn(&ClusterErrors) -> bool,
{
    let subset: Vec<ClusterErrors> = rows.iter().filter(|r| keep(r)).cloned().collect();
    ratio_estimate(&subset, target)
}

/// Convenience wrapper for a standard metric.
pub fn estimate_metric(
    rows: &[ClusterErrors],
    metric: Metric,
    beta: f64,
    globals: Option<Globals>,
) -> Result<Estimate> {
    ratio_estimate(rows, &RatioTarget::for_metric(metric, beta, globals)?)
}

pub fn pairwise_precision(rows: &[ClusterErrors]) -> Result<Estimate> {
    estimate_metric(rows, Metric::PairwisePrecision, 1.0, None)
}

pub fn pairwise_recall(rows: &[ClusterErrors]) -> Result<Estimate> {
    estimate_metric(rows, Metric::PairwiseRecall, 1.0, None)
}

pub fn pairwise_f(rows: &[ClusterErrors], beta: f64) -> Result<Estimate> {
    estimate_metric(rows, Metric::PairwiseF, beta, None)
}

pub fn cluster_precision(rows: &[ClusterErrors], globals: Globals) -> Result<Estimate> {
    estimate_metric(rows, Metric::ClusterPrecision, 1.0, Some(globals))
}

pub fn cluster_recall(rows: &[ClusterErrors]) -> Result<Estimate> {
    estimate_metric(rows, Metric::ClusterRecall, 1.0, None)
}

pub fn cluster_f(rows: &[ClusterErrors], beta: f64, globals: Globals) -> Result<Estimate> {
    estimate_metric(rows, Metric::ClusterF, beta, Some(globals))
}

pub fn bcubed_precision(rows: &[ClusterErrors]) -> Result<Estimate> {
    estimate_metric(rows, Metric::BcubedPrecision, 1.0, None)
}

pub fn bcubed_recall(rows: &[ClusterErrors]) -> Result<Estimate> {
    estimate_metric(rows, Metric::BcubedRecall, 1.0, None)
}

pub fn homogeneity(rows: &[ClusterErrors], n_records: usize) -> Result<Estimate> {
    let globals = Globals {
        n_records,
        n_pred_clusters: 1,
    };
    estimate_metric(rows, Metric::Homogeneity, 1.0, Some(globals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ErrorTable;
    use crate::model::Clustering;
    use crate::sampling::{ClusterSample, Design};

    fn canonical_rows() -> Vec<ClusterErrors> {
        let truth = Clustering::from_groups([vec!["r1", "r2", "r3"], vec!["r4", "r5"]]).unwrap();
        let pred = Clustering::from_groups([vec!["r1", "r2"], vec!["r3", "r4", "r5"]]).unwrap();
        ErrorTable::from_sample(&ClusterSample::census(&truth, Design::PpsRecord), &pred)
            .unwrap()
            .rows
    }

    const G5: Globals = Globals {
        n_records: 5,
        n_pred_clusters: 2,
    };

    #[test]
    fn hand_case() {
        let v = ratio_estimate_values(&[2.0, 4.0], &[4.0, 4.0]).unwrap();
        assert_eq!(v.point, 0.75);
        assert_eq!(v.variance, 1.0 / 16.0);
    }

    #[test]
    fn identical_ratios_have_no_spread() {
        let v = ratio_estimate_values(&[1.0, 3.0, 2.0], &[1.0, 3.0, 2.0]).unwrap();
        assert_eq!((v.point, v.variance), (1.0, 0.0));
        let v = ratio_estimate_values(&[2.0, 2.0], &[5.0, 5.0]).unwrap();
        assert_eq!((v.point, v.variance), (0.4, 0.0));
    }

    #[test]
    fn estimator_error_paths() {
        assert!(matches!(
            ratio_estimate_values(&[1.0], &[1.0]),
            Err(Error::InsufficientSample(1))
        ));
        assert!(matches!(
            ratio_estimate_values(&[1.0, 1.0], &[1.0, -1.0]),
            Err(Error::ZeroDenominator(_))
        ));
        let v = ratio_estimate_values(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(v.degenerate);
        assert_eq!((v.point, v.variance), (0.0, 0.0));
    }

    #[test]
    fn canonical_census_ratios() {
        let rows = canonical_rows();
        let t = RatioTarget::for_metric(Metric::PairwisePrecision, 1.0, None).unwrap();
        let f: f64 = rows.iter().map(|r| t.f(r)).sum();
        let g: f64 = rows.iter().map(|r| t.g(r)).sum();
        assert!((f - 4.0).abs() < 1e-12 && (g - 8.0).abs() < 1e-12);
        let check = |m: Metric, beta: f64, want: f64| {
            let t = RatioTarget::for_metric(m, beta, Some(G5)).unwrap();
            let got = t.census_value(&rows);
            assert!((got - want).abs() < 1e-12, "{m}: {got} vs {want}");
        };
        check(Metric::PairwisePrecision, 1.0, 0.5);
        check(Metric::PairwiseRecall, 1.0, 0.5);
        check(Metric::PairwiseF, 1.0, 0.5);
        check(Metric::ClusterPrecision, 1.0, 0.0);
        check(Metric::ClusterRecall, 1.0, 0.0);
        check(Metric::BcubedPrecision, 1.0, 13.0 / 18.0);
        check(Metric::BcubedRecall, 1.0, 7.0 / 9.0);
    }

    #[test]
    fn small_beta_approaches_precision() {
        let rows = canonical_rows();
        let mut rows2 = rows.clone();
        rows2[0].uce = 0.5;
        rows2[0].sde = 1.5;
        let p = RatioTarget::for_metric(Metric::PairwisePrecision, 1.0, None).unwrap();
        let f = RatioTarget::for_metric(Metric::PairwiseF, 1e-9, None).unwrap();
        assert!((p.census_value(&rows2) - f.census_value(&rows2)).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let truth = Clustering::from_groups([vec!["r1", "r2", "r3"], vec!["r4", "r5"]]).unwrap();
        let rows = ErrorTable::from_sample(&ClusterSample::census(&truth, Design::PpsRecord), &truth)
            .unwrap()
            .rows;
        // cluster precision and cluster F have g not proportional to f even
        // without errors, so their sample estimates vary
        for m in Metric::ALL.into_iter().filter(|m| !matches!(m, Metric::ClusterPrecision | Metric::ClusterF)) {
            let e = estimate_metric(&rows, m, 1.0, Some(G5)).unwrap();
            assert!((e.point - 1.0).abs() < 1e-12, "{m} {}", e.point);
            assert!(e.std.abs() < 1e-12, "{m}");
        }
    }

    #[test]
    fn homogeneity_degenerate_cases() {
        let truth = Clustering::from_groups([vec!["a", "b", "c"]]).unwrap();
        let split = Clustering::from_groups([vec!["a"], vec!["b", "c"]]).unwrap();
        let s = ClusterSample::census(&truth, Design::PpsRecord);
        let mut rows = ErrorTable::from_sample(&s, &split).unwrap().rows;
        rows.push(rows[0].clone());
        assert!(matches!(homogeneity(&rows, 3), Err(Error::HomogeneityUndefined)));

        let truth = Clustering::from_groups([vec!["a", "b"], vec!["c"], vec!["d", "e"]]).unwrap();
        let merged = Clustering::from_groups([vec!["a", "b", "c", "d", "e"]]).unwrap();
        let rows = ErrorTable::from_sample(&ClusterSample::census(&truth, Design::PpsRecord), &merged)
            .unwrap()
            .rows;
        let t = RatioTarget::for_metric(Metric::Homogeneity, 1.0, Some(G5)).unwrap();
        assert!(t.census_value(&rows).abs() < 1e-12);
    }

    #[test]
    fn subgroup_filters_rows() {
        let rows = canonical_rows();
        let all = subgroup_estimate(&rows, |_| true, &RatioTarget::for_metric(Metric::BcubedRecall, 1.0, None).unwrap())
            .unwrap();
        assert_eq!(all, bcubed_recall(&rows).unwrap());

        let t = RatioTarget::for_metric(Metric::BcubedRecall, 1.0, None).unwrap();
        let only_b = |r: &ClusterErrors| r.cluster_id.as_str() == "r4";
        assert!(matches!(subgroup_estimate(&rows, only_b, &t), Err(Error::InsufficientSample(1))));
        let mut doubled = rows.clone();
        doubled.push(rows[1].clone());
        let e = subgroup_estimate(&doubled, only_b, &t).unwrap();
        assert_eq!((e.point, e.k), (1.0, 2));
        assert!(subgroup_estimate(&rows, |_| false, &t).is_err());
    }

    #[test]
    fn weights_are_scale_free() {
        let rows = canonical_rows();
        let mut scaled = rows.clone();
        scaled.iter_mut().for_each(|r| r.p_c *= 37.5);
        for m in Metric::ALL {
            let a = estimate_metric(&rows, m, 2.0, Some(G5));
            let b = estimate_metric(&scaled, m, 2.0, Some(G5));
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    assert!((a.point - b.point).abs() < 1e-12);
                    assert!((a.std - b.std).abs() < 1e-12);
                }
                (a, b) => assert_eq!(a.is_err(), b.is_err()),
            }
        }
    }

    #[test]
    fn needs_globals_and_valid_beta() {
        assert!(RatioTarget::for_metric(Metric::ClusterPrecision, 1.0, None).is_err());
        assert!(RatioTarget::for_metric(Metric::PairwiseF, 0.0, None).is_err());
        assert!(Metric::parse("nope").is_err());
        assert_eq!(Metric::parse("bcubed_recall").unwrap(), Metric::BcubedRecall);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn adjustment_vanishes_for_proportional_rows(
                g in proptest::collection::vec(0.1f64..10.0, 2..30),
                c in 0.01f64..5.0,
            ) {
                let f: Vec<f64> = g.iter().map(|x| c * x).collect();
                let v = ratio_estimate_values(&f, &g).unwrap();
                prop_assert!((v.point - v.ratio).abs() <= 1e-9 * v.ratio.abs());
                prop_assert!(v.variance <= 1e-12 * v.ratio * v.ratio);
            }
        }
    }
}
