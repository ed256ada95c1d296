//! Synthetic datasets, accuracy metrics and parameter sweeps.

mod metrics;
mod names;
mod sweep;

use thiserror::Error;

pub use metrics::{evaluate, evaluate_pairs, Confusion, MetricsReport};
pub use names::{
    generate_dataset, perturb, Dataset, LabeledQuery, NameStyle, NamePool, NamePools, NegativeFilter,
    SyntheticDatasetSpec,
};
pub use sweep::{
    coverage_csv, is_non_increasing, markdown_cost_table, points_csv, sweep_clusters, sweep_ld, sweep_threshold,
    verdict_pairs, ClusterPoint, CostRow, Experiment, ExperimentConfig, LdPoint, SweepPoint,
};

use crate::clustering::ClusterError;
use crate::encoding::EncodingError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("name pool exhausted: {0}")]
    PoolExhausted(String),
    #[error("name pool: {0}")]
    Pool(String),
    #[error("{verdicts} verdicts for {truth} labels")]
    LengthMismatch { verdicts: usize, truth: usize },
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}
