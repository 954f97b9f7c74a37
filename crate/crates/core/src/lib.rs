//! Evaluation of entity resolution systems from probability samples of
//! fully resolved ground-truth clusters.
//!
//! The crate is organized around a single table of cluster-wise error
//! metrics ([`metrics::ErrorTable`]). Labeling produces the sampled clusters,
//! [`metrics`] turns them into error rows, and [`estimators`] turns the rows
//! into bias-adjusted ratio estimates with standard deviations.

pub mod error;
pub mod estimators;
pub mod labeling;
pub mod metrics;
pub mod model;
pub mod report;
pub mod sampling;
pub mod sim;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use estimators::{Estimate, Globals, Metric, RatioTarget};
pub use metrics::{ClusterErrors, ErrorTable, RecordErrors};
pub use model::{AttributeTable, ClusterId, Clustering, NameIndex, RecordId};
pub use sampling::{ClusterSample, Design, Draw};
