use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, evaluate_pairs, generate_dataset, Dataset, EvalError, MetricsReport, NamePools, SyntheticDatasetSpec};
use crate::clustering::{build_model, coverage, ClusterConfig, ClusterModel, CoverageCurve};
use crate::encoding::{DualEncoder, EncodingParams};
use crate::protocol::{MatchVerdict, PlaintextMatcher, QueryEncoder, QueryVectors, ReferenceVerdict, SetupInfo};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub encoding: EncodingParams,
    pub centroid_len: usize,
    pub match_len: usize,
    /// `k = 0` selects linear mode.
    pub cluster: ClusterConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            encoding: EncodingParams::default(),
            centroid_len: 200,
            match_len: 50,
            cluster: ClusterConfig {
                k: 0,
                iterations: 20,
                seed: 7,
            },
        }
    }
}

impl ExperimentConfig {
    pub fn linear(&self) -> bool {
        self.cluster.k == 0
    }
}

/// A dataset with its responder model and plaintext query vectors.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub dataset: Dataset,
    pub model: ClusterModel,
    pub queries: Vec<QueryVectors>,
}

impl Experiment {
    pub fn build(dataset: Dataset, config: ExperimentConfig) -> Result<Self, EvalError> {
        let enc = DualEncoder::new(&config.encoding, config.centroid_len, config.match_len)?;
        let sketches = dataset
            .responder
            .par_iter()
            .map(|n| enc.encode(n))
            .collect::<Result<Vec<_>, _>>()?;
        let mut cfg = config.cluster.clone();
        cfg.k = cfg.k.max(1);
        let model = build_model(&sketches, &config.encoding, &cfg)?;
        let info = SetupInfo::from_model(&model, 0.0).expect("model has metadata");
        let qe = QueryEncoder::new(&info)?;
        let queries = dataset
            .queries
            .par_iter()
            .map(|q| qe.encode(&q.name))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            config,
            dataset,
            model,
            queries,
        })
    }

    pub fn linear(&self) -> bool {
        self.config.linear()
    }

    pub fn matcher(&self, tau: f64) -> PlaintextMatcher<'_> {
        PlaintextMatcher::new(&self.model, tau)
    }

    /// Exact per-query outcomes at `tau`.
    pub fn reference(&self, tau: f64) -> Vec<ReferenceVerdict> {
        let m = self.matcher(tau);
        self.queries
            .par_iter()
            .map(|q| if self.linear() { m.linear(q) } else { m.clustered(q) })
            .collect()
    }

    /// Pair- and query-level metrics of the reference outcomes at `tau`.
    pub fn metrics(&self, tau: f64) -> SweepPoint {
        score_point(self, &self.reference(tau), tau)
    }

    /// Metrics of protocol verdicts (which carry their positive columns).
    pub fn metrics_of(&self, verdicts: &[MatchVerdict], tau: f64) -> Result<SweepPoint, EvalError> {
        let truth = self.dataset.truth();
        let pairs = verdict_pairs(&self.matcher(tau), verdicts);
        let flags: Vec<bool> = verdicts.iter().map(|v| v.matched).collect();
        let labels: Vec<bool> = truth.iter().map(Option::is_some).collect();
        Ok(SweepPoint {
            tau,
            pair: evaluate_pairs(&pairs, &truth, self.model.num_records())?,
            query: evaluate(&flags, &labels)?,
        })
    }
}

/// Record ids behind each verdict's positive columns.
pub fn verdict_pairs(matcher: &PlaintextMatcher<'_>, verdicts: &[MatchVerdict]) -> Vec<Vec<u32>> {
    verdicts
        .iter()
        .map(|v| {
            v.positive_columns
                .iter()
                .filter_map(|&j| matcher.record_at(v.cluster, j))
                .collect()
        })
        .collect()
}

fn score_point(exp: &Experiment, refs: &[ReferenceVerdict], tau: f64) -> SweepPoint {
    let m = exp.matcher(tau);
    let truth = exp.dataset.truth();
    let pairs: Vec<Vec<u32>> = refs
        .iter()
        .map(|r| {
            (0..r.cosines.len())
                .filter(|&j| r.cosines[j] > tau)
                .filter_map(|j| m.record_at(r.cluster, j))
                .collect()
        })
        .collect();
    let flags: Vec<bool> = pairs.iter().map(|p| !p.is_empty()).collect();
    let labels: Vec<bool> = truth.iter().map(Option::is_some).collect();
    SweepPoint {
        tau,
        pair: evaluate_pairs(&pairs, &truth, exp.model.num_records()).expect("aligned"),
        query: evaluate(&flags, &labels).expect("aligned"),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: f64,
    /// Over all `(query, record)` pairs.
    pub pair: MetricsReport,
    /// One verdict per query.
    pub query: MetricsReport,
}

/// Metrics at each threshold; cosines are computed once.
pub fn sweep_threshold(exp: &Experiment, taus: &[f64]) -> Vec<SweepPoint> {
    // Cluster choice does not depend on tau.
    let refs = exp.reference(0.0);
    taus.iter().map(|&t| score_point(exp, &refs, t)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterPoint {
    /// 0 for linear mode.
    pub k: usize,
    /// Column scores a full session streams.
    pub columns: usize,
    pub metrics: SweepPoint,
    pub coverage: CoverageCurve,
}

/// One model per `k` over the same dataset; `k = 0` is linear mode.
pub fn sweep_clusters(
    dataset: &Dataset,
    base: &ExperimentConfig,
    ks: &[usize],
    tau: f64,
) -> Result<Vec<ClusterPoint>, EvalError> {
    ks.iter()
        .map(|&k| {
            let mut cfg = base.clone();
            cfg.cluster.k = k;
            let exp = Experiment::build(dataset.clone(), cfg)?;
            let columns = if k == 0 {
                exp.model.num_records()
            } else {
                exp.model.num_columns()
            };
            Ok(ClusterPoint {
                k,
                columns,
                metrics: exp.metrics(tau),
                coverage: coverage(&exp.model),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdPoint {
    pub ld: usize,
    pub metrics: SweepPoint,
}

/// A fresh dataset per edit distance, otherwise identical.
pub fn sweep_ld(
    spec: &SyntheticDatasetSpec,
    pools: &NamePools,
    levels: &[usize],
    cfg: &ExperimentConfig,
    tau: f64,
) -> Result<Vec<LdPoint>, EvalError> {
    levels
        .iter()
        .map(|&ld| {
            let s = SyntheticDatasetSpec { ld, ..spec.clone() };
            let exp = Experiment::build(generate_dataset(&s, pools)?, cfg.clone())?;
            Ok(LdPoint {
                ld,
                metrics: exp.metrics(tau),
            })
        })
        .collect()
}

pub fn is_non_increasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] <= w[0])
}

/// One CSV row per sweep point: `label` names the swept variable, which
/// replaces the `tau` column when it is `"tau"` itself.
pub fn points_csv(label: &str, rows: &[(f64, &SweepPoint)]) -> String {
    let lead = if label == "tau" { String::new() } else { format!("{label},") };
    let mut out = format!(
        "{lead}tau,precision,recall,f1,accuracy,tp,fp,fn,query_precision,query_recall,query_f1,query_accuracy\n"
    );
    for (x, p) in rows {
        let c = p.pair.confusion;
        if label != "tau" {
            let _ = write!(out, "{x},");
        }
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{},{},{},{:.6},{:.6},{:.6},{:.6}",
            p.tau,
            p.pair.precision,
            p.pair.recall,
            p.pair.f1,
            p.pair.accuracy,
            c.tp,
            c.fp,
            c.fn_,
            p.query.precision,
            p.query.recall,
            p.query.f1,
            p.query.accuracy
        );
    }
    out
}

pub fn coverage_csv(points: &[ClusterPoint]) -> String {
    let mut out = String::from("k,column,covered\n");
    for p in points {
        for (j, c) in p.coverage.cumulative.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", p.k, j + 1, c);
        }
    }
    out
}

/// One row of a cost table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub data_size: usize,
    pub clusters: usize,
    pub total_cols: usize,
    pub first_round_s: Option<f64>,
    pub time_per_col_s: Option<f64>,
    pub comm_per_col_bytes: usize,
}

pub fn markdown_cost_table(rows: &[CostRow]) -> String {
    let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3}"));
    let mut out = String::from(
        "| data size | clusters | total cols | first round (s) | time/col (s) | comm/col (KB) |\n|---|---|---|---|---|---|\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {:.1} |",
            r.data_size,
            r.clusters,
            r.total_cols,
            fmt(r.first_round_s),
            fmt(r.time_per_col_s),
            r.comm_per_col_bytes as f64 / 1024.0
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::NameStyle;

    fn small() -> Dataset {
        let spec = SyntheticDatasetSpec {
            n_names: 400,
            n_positives: 40,
            n_negatives: 40,
            ld: 1,
            style: NameStyle::ThreePart,
            seed: 3,
            negative_filter: None,
        };
        generate_dataset(&spec, &NamePools::default()).unwrap()
    }

    #[test]
    fn exact_queries_match_at_high_threshold() {
        let spec = SyntheticDatasetSpec {
            n_names: 200,
            n_positives: 20,
            n_negatives: 0,
            ld: 0,
            ..Default::default()
        };
        let d = generate_dataset(&spec, &NamePools::default()).unwrap();
        let exp = Experiment::build(d, ExperimentConfig::default()).unwrap();
        let p = exp.metrics(0.99);
        assert_eq!(p.pair.recall, 1.0);
        assert_eq!(p.query.recall, 1.0);
    }

    #[test]
    fn recall_is_non_increasing_in_tau() {
        let exp = Experiment::build(small(), ExperimentConfig::default()).unwrap();
        let taus: Vec<f64> = (0..10).map(|i| 0.5 + 0.05 * i as f64).collect();
        let pts = sweep_threshold(&exp, &taus);
        assert!(is_non_increasing(&pts.iter().map(|p| p.pair.recall).collect::<Vec<_>>()));
        assert!(is_non_increasing(&pts.iter().map(|p| p.query.recall).collect::<Vec<_>>()));
        let csv = points_csv("tau", &pts.iter().map(|p| (p.tau, p)).collect::<Vec<_>>());
        assert_eq!(csv.lines().count(), 11);
        assert!(csv.starts_with("tau,precision,"));
    }

    #[test]
    fn clustering_only_removes_candidates() {
        let d = small();
        let pts = sweep_clusters(&d, &ExperimentConfig::default(), &[0, 20], 0.8).unwrap();
        let (lin, clu) = (&pts[0].metrics.pair, &pts[1].metrics.pair);
        assert!(clu.recall <= lin.recall);
        assert!(clu.confusion.fp <= lin.confusion.fp);
        assert_eq!(pts[0].columns, 400);
        assert_eq!(*pts[1].coverage.cumulative.last().unwrap(), 400);
    }

    #[test]
    fn cost_table_renders() {
        let t = markdown_cost_table(&[CostRow {
            data_size: 10_000,
            clusters: 50,
            total_cols: 308,
            first_round_s: Some(1.53),
            time_per_col_s: None,
            comm_per_col_bytes: 131_102,
        }]);
        assert!(t.contains("| 10000 | 50 | 308 | 1.530 | - | 128.0 |"));
    }
}
