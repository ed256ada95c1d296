use std::sync::Arc;

use clap::{Args, ValueEnum};
use hefuzz_core::ckks::{CkksBackend, CkksSecret};
use hefuzz_core::encoding::EncodingParams;
use hefuzz_core::eval::{
    coverage_csv, generate_dataset, is_non_increasing, markdown_cost_table, points_csv, sweep_clusters, sweep_ld,
    sweep_threshold, CostRow, Experiment, ExperimentConfig, NamePools, NameStyle, NegativeFilter, SyntheticDatasetSpec,
};
use hefuzz_core::protocol::{run_protocol, Querier, Responder, SessionOptions};
use hefuzz_core::transport::{reduction_factor, transcript_json};
use serde_json::json;

use crate::commands::{out_path, write_report};
use crate::config::Config;
use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    /// Metrics across thresholds 0.50..0.95.
    Threshold,
    /// Linear mode against each cluster count.
    Clusters,
    /// Recall and precision by edit distance 0..5.
    Ld,
    /// Encrypted sessions with the communication and time figures.
    Cost,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Style {
    ThreePart,
    TwoPart,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    pub scenario: Scenario,
    /// Responder names.
    #[arg(long, default_value_t = 1000)]
    pub names: usize,
    /// Queries, half of them perturbed members.
    #[arg(long, default_value_t = 200)]
    pub queries: usize,
    /// Edit distance of positive queries.
    #[arg(long, default_value_t = 1)]
    pub ld: usize,
    /// Defaults to three-part names, or two-part for the `ld` scenario.
    #[arg(long, value_enum)]
    pub style: Option<Style>,
    /// Cluster counts; 0 is linear mode. Defaults to 0 and round(sqrt(n)).
    #[arg(long, value_delimiter = ',')]
    pub ks: Vec<usize>,
    /// `cost` scenario: also run the linear baseline.
    #[arg(long)]
    pub with_linear: bool,
}

impl BenchArgs {
    fn spec(&self, cfg: &Config) -> SyntheticDatasetSpec {
        let style = match (self.style, self.scenario) {
            (Some(Style::TwoPart), _) | (None, Scenario::Ld) => NameStyle::TwoPart,
            _ => NameStyle::ThreePart,
        };
        let negative_filter = (self.scenario == Scenario::Ld).then(|| NegativeFilter {
            encoding: EncodingParams {
                first_index: cfg.encoding.centroid_len,
                num_permutations: cfg.encoding.match_len,
                ..cfg.encoding.params.clone()
            },
            tau: cfg.protocol.tau,
        });
        SyntheticDatasetSpec {
            n_names: self.names,
            n_positives: self.queries / 2,
            n_negatives: self.queries - self.queries / 2,
            ld: self.ld,
            style,
            seed: cfg.seed,
            negative_filter,
        }
    }

    fn ks(&self) -> Vec<usize> {
        if self.ks.is_empty() {
            vec![0, hefuzz_core::clustering::ClusterConfig::default_k(self.names)]
        } else {
            self.ks.clone()
        }
    }
}

fn experiment_config(cfg: &Config, n: usize, k: usize) -> ExperimentConfig {
    let mut cluster = cfg.cluster_config(n);
    cluster.k = k;
    ExperimentConfig {
        encoding: cfg.base_encoding(),
        centroid_len: cfg.encoding.centroid_len,
        match_len: cfg.encoding.match_len,
        cluster,
    }
}

fn write_csv(cfg: &Config, name: &str, text: &str) -> Result<(), CliError> {
    let path = out_path(cfg, name)?;
    std::fs::write(&path, text)?;
    Ok(())
}

pub fn run(cfg: &Config, args: &BenchArgs) -> Result<(), CliError> {
    let spec = args.spec(cfg);
    let pools = NamePools::default();
    let tau = cfg.protocol.tau;
    let report = match args.scenario {
        Scenario::Threshold => {
            let k = args.ks.first().copied().unwrap_or(0);
            let exp = Experiment::build(generate_dataset(&spec, &pools).map_err(anyhow::Error::from)?, experiment_config(cfg, args.names, k))
                .map_err(anyhow::Error::from)?;
            let taus: Vec<f64> = (0..10).map(|i| 0.5 + 0.05 * i as f64).collect();
            let pts = sweep_threshold(&exp, &taus);
            write_csv(cfg, "threshold.csv", &points_csv("tau", &pts.iter().map(|p| (p.tau, p)).collect::<Vec<_>>()))?;
            let recalls: Vec<f64> = pts.iter().map(|p| p.pair.recall).collect();
            json!({ "scenario": "threshold", "k": k, "points": pts, "recall_non_increasing": is_non_increasing(&recalls) })
        }
        Scenario::Clusters => {
            let mut ks = args.ks();
            if !ks.contains(&0) {
                ks.insert(0, 0);
            }
            let d = generate_dataset(&spec, &pools).map_err(anyhow::Error::from)?;
            let pts = sweep_clusters(&d, &experiment_config(cfg, args.names, 0), &ks, tau).map_err(anyhow::Error::from)?;
            let rows: Vec<_> = pts.iter().map(|p| (p.k as f64, &p.metrics)).collect();
            write_csv(cfg, "clusters.csv", &points_csv("k", &rows))?;
            write_csv(cfg, "coverage.csv", &coverage_csv(&pts))?;
            let lin = pts.iter().find(|p| p.k == 0).expect("linear point").metrics.pair;
            let checks: Vec<_> = pts
                .iter()
                .filter(|p| p.k != 0)
                .map(|p| {
                    let m = p.metrics.pair;
                    json!({
                        "k": p.k,
                        "precision_preserved": m.precision >= lin.precision - 0.02,
                        "recall_not_above_linear": m.recall <= lin.recall,
                    })
                })
                .collect();
            json!({ "scenario": "clusters", "points": pts, "checks": checks })
        }
        Scenario::Ld => {
            let k = args.ks.first().copied().unwrap_or(0);
            let levels: Vec<usize> = (0..=5).collect();
            let pts = sweep_ld(&spec, &pools, &levels, &experiment_config(cfg, args.names, k), tau).map_err(anyhow::Error::from)?;
            let rows: Vec<_> = pts.iter().map(|p| (p.ld as f64, &p.metrics)).collect();
            write_csv(cfg, "ld.csv", &points_csv("ld", &rows))?;
            let recalls: Vec<f64> = pts.iter().map(|p| p.metrics.pair.recall).collect();
            json!({ "scenario": "ld", "k": k, "points": pts, "recall_decreasing_in_ld": is_non_increasing(&recalls) })
        }
        Scenario::Cost => cost(cfg, args, &spec, &pools)?,
    };
    let path = write_report(cfg, &format!("bench-{}.json", scenario_name(args.scenario)), report)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn scenario_name(s: Scenario) -> &'static str {
    match s {
        Scenario::Threshold => "threshold",
        Scenario::Clusters => "clusters",
        Scenario::Ld => "ld",
        Scenario::Cost => "cost",
    }
}

fn cost(cfg: &Config, args: &BenchArgs, spec: &SyntheticDatasetSpec, pools: &NamePools) -> Result<serde_json::Value, CliError> {
    let k = args.ks.iter().copied().find(|&k| k > 0).unwrap_or_else(|| hefuzz_core::clustering::ClusterConfig::default_k(args.names));
    let exp = Experiment::build(generate_dataset(spec, pools).map_err(anyhow::Error::from)?, experiment_config(cfg, args.names, k))
        .map_err(anyhow::Error::from)?;
    let names = exp.dataset.query_names();
    let model = Arc::new(exp.model.clone());
    let secret = CkksSecret::generate(cfg.he.clone(), cfg.seed).map_err(|e| CliError::Config(e.to_string()))?;
    let modes: &[bool] = if args.with_linear { &[false, true] } else { &[false] };
    let mut logs = Vec::new();
    let mut rows = Vec::new();
    for &linear in modes {
        let options = SessionOptions {
            early_exit: false,
            linear,
            compress: cfg.transport.compress,
        };
        let mut q = Querier::new(secret.clone(), options, cfg.seed);
        let mut r = Responder::<CkksBackend>::new(model.clone(), cfg.protocol.tau, cfg.seed)?.with_threads(cfg.protocol.threads);
        let run = run_protocol(&mut q, &mut r, &names)?;
        let c = run.querier_log.report();
        rows.push(CostRow {
            data_size: args.names,
            clusters: if linear { 0 } else { k },
            total_cols: c.columns,
            first_round_s: c.first_round_ms.map(|m| m / 1000.0),
            time_per_col_s: c.per_column_ms.map(|m| m / 1000.0),
            comm_per_col_bytes: c.max_column_bytes.unwrap_or(0),
        });
        write_csv(cfg, &format!("cost-{}.csv", if linear { "linear" } else { "clustered" }), &run.querier_log.to_csv())?;
        logs.push(run.querier_log);
    }
    let reduction = (logs.len() == 2).then(|| reduction_factor(&logs[1].report(), &logs[0].report()));
    write_csv(cfg, "cost.md", &markdown_cost_table(&rows))?;
    Ok(json!({
        "scenario": "cost",
        "k": k,
        "columns": exp.model.num_columns(),
        "rows": rows,
        "clustered": transcript_json(&logs[0], reduction),
        "expected_reduction": exp.model.num_records() as f64 / exp.model.num_columns() as f64,
    }))
}
