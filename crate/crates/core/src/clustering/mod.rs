//! Cosine k-means over standardized centroid-space sketches, and the padded
//! cluster matrix of match-space sketches served column by column.

mod model_file;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{self, DualSignature, EncodingError, EncodingParams, ScalerParams};

pub use model_file::{read_model, write_model, MODEL_MAGIC};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("{n} points cannot form {k} clusters")]
    TooFewPoints { n: usize, k: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("column {index} out of range (M = {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("model file: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub k: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl ClusterConfig {
    /// `k = round(sqrt(n))`, at least 1.
    pub fn default_k(n: usize) -> usize {
        ((n as f64).sqrt().round() as usize).max(1)
    }
}

/// Parameters the responder publishes alongside a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub encoding: EncodingParams,
    pub centroid_len: usize,
    pub match_len: usize,
    pub scaler: ScalerParams,
    pub cluster: ClusterConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterModel {
    /// `k` centroids in the clustering input space.
    pub centroids: Vec<Vec<f64>>,
    /// `k` rows of `M` match-space vectors; dummies are all-zero.
    pub cells: Vec<Vec<Vec<f64>>>,
    pub pad_mask: Vec<Vec<bool>>,
    /// Dataset index stored in each cell, `None` for dummies.
    pub record_ids: Vec<Vec<Option<u32>>>,
    /// Dataset index to `(row, column)`.
    pub assignment: Vec<(usize, usize)>,
    pub max_cluster_size: usize,
    /// Objective after each iteration (sum of one minus cosine).
    pub objective_history: Vec<f64>,
    pub metadata: Option<ModelMetadata>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageCurve {
    pub cumulative: Vec<usize>,
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = encoding::dot(v, v).sqrt();
    if n == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

/// Index of the highest cosine; ties go to the lowest index.
fn argmax_cos(unit_point: &[f64], unit_centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, c) in unit_centroids.iter().enumerate() {
        let s = encoding::dot(unit_point, c);
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}

pub fn nearest_centroid(query: &[f64], centroids: &[Vec<f64>]) -> Result<usize, ClusterError> {
    let dim = centroids.first().map_or(query.len(), |c| c.len());
    if query.len() != dim || centroids.iter().any(|c| c.len() != dim) {
        return Err(ClusterError::DimensionMismatch {
            expected: dim,
            got: query.len(),
        });
    }
    let units: Vec<Vec<f64>> = centroids.iter().map(|c| unit(c)).collect();
    Ok(argmax_cos(&unit(query), &units).0)
}

fn kmeans_pp<R: Rng>(units: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<usize> {
    let n = units.len();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut dist: Vec<f64> = units
        .iter()
        .map(|u| (1.0 - encoding::dot(u, &units[chosen[0]])).max(0.0))
        .collect();
    while chosen.len() < k {
        let weights: Vec<f64> = dist.iter().map(|d| d * d).collect();
        let next = match WeightedIndex::new(&weights) {
            Ok(w) => w.sample(rng),
            // every point coincides with a chosen centre: take the first unused
            Err(_) => (0..n).find(|i| !chosen.contains(i)).expect("k <= n"),
        };
        chosen.push(next);
        for (d, u) in dist.iter_mut().zip(units) {
            *d = d.min((1.0 - encoding::dot(u, &units[next])).max(0.0));
        }
    }
    chosen
}

fn mean_of(points: &[Vec<f64>], members: impl Iterator<Item = usize>, dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    let mut count = 0usize;
    for i in members {
        for (a, x) in acc.iter_mut().zip(&points[i]) {
            *a += x;
        }
        count += 1;
    }
    if count > 0 {
        acc.iter_mut().for_each(|a| *a /= count as f64);
    }
    acc
}

/// Lloyd iterations with cosine assignment and arithmetic-mean centroids.
pub fn cluster(
    centroid_space: &[Vec<f64>],
    match_space: &[Vec<f64>],
    cfg: &ClusterConfig,
) -> Result<ClusterModel, ClusterError> {
    let n = centroid_space.len();
    if match_space.len() != n {
        return Err(ClusterError::DimensionMismatch {
            expected: n,
            got: match_space.len(),
        });
    }
    if cfg.k == 0 || n < cfg.k {
        return Err(ClusterError::TooFewPoints { n, k: cfg.k });
    }
    let dim = centroid_space[0].len();
    if let Some(bad) = centroid_space.iter().find(|v| v.len() != dim) {
        return Err(ClusterError::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    let match_dim = match_space[0].len();
    if let Some(bad) = match_space.iter().find(|v| v.len() != match_dim) {
        return Err(ClusterError::DimensionMismatch {
            expected: match_dim,
            got: bad.len(),
        });
    }
    let k = cfg.k;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let units: Vec<Vec<f64>> = centroid_space.iter().map(|v| unit(v)).collect();
    let mut centroids: Vec<Vec<f64>> = kmeans_pp(&units, k, &mut rng)
        .into_iter()
        .map(|i| centroid_space[i].clone())
        .collect();

    let mut labels: Vec<usize> = vec![usize::MAX; n];
    let mut history = Vec::new();
    for _ in 0..cfg.iterations.max(1) {
        let unit_centroids: Vec<Vec<f64>> = centroids.iter().map(|c| unit(c)).collect();
        let assigned: Vec<(usize, f64)> = units
            .par_iter()
            .map(|u| argmax_cos(u, &unit_centroids))
            .collect();
        let mut new_labels: Vec<usize> = assigned.iter().map(|a| a.0).collect();
        let mut sims: Vec<f64> = assigned.iter().map(|a| a.1).collect();

        // empty clusters take the globally worst-fitting point from a cluster
        // that can spare one
        let mut sizes = vec![0usize; k];
        for &l in &new_labels {
            sizes[l] += 1;
        }
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            let victim = (0..n)
                .filter(|&i| sizes[new_labels[i]] > 1)
                .min_by(|&a, &b| sims[a].total_cmp(&sims[b]).then(a.cmp(&b)))
                .expect("n >= k guarantees a donor");
            sizes[new_labels[victim]] -= 1;
            new_labels[victim] = c;
            sizes[c] = 1;
            sims[victim] = 1.0;
        }

        let changed = new_labels != labels;
        labels = new_labels;
        centroids = (0..k)
            .map(|c| mean_of(centroid_space, (0..n).filter(|&i| labels[i] == c), dim))
            .collect();
        let unit_centroids: Vec<Vec<f64>> = centroids.iter().map(|c| unit(c)).collect();
        let objective: f64 = (0..n)
            .map(|i| 1.0 - encoding::dot(&units[i], &unit_centroids[labels[i]]))
            .sum();
        history.push(objective);
        if !changed {
            break;
        }
    }

    Ok(build_matrix(centroids, &labels, match_space, history))
}

fn build_matrix(
    centroids: Vec<Vec<f64>>,
    labels: &[usize],
    match_space: &[Vec<f64>],
    history: Vec<f64>,
) -> ClusterModel {
    let k = centroids.len();
    let match_dim = match_space[0].len();
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        rows[l].push(i);
    }
    let m = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut assignment = vec![(0, 0); labels.len()];
    let mut cells = Vec::with_capacity(k);
    let mut pad_mask = Vec::with_capacity(k);
    let mut record_ids = Vec::with_capacity(k);
    for (r, members) in rows.iter().enumerate() {
        let mut row = Vec::with_capacity(m);
        let mut mask = Vec::with_capacity(m);
        let mut ids = Vec::with_capacity(m);
        for (c, &i) in members.iter().enumerate() {
            row.push(match_space[i].clone());
            mask.push(false);
            ids.push(Some(i as u32));
            assignment[i] = (r, c);
        }
        while row.len() < m {
            row.push(vec![0.0; match_dim]);
            mask.push(true);
            ids.push(None);
        }
        cells.push(row);
        pad_mask.push(mask);
        record_ids.push(ids);
    }
    ClusterModel {
        centroids,
        cells,
        pad_mask,
        record_ids,
        assignment,
        max_cluster_size: m,
        objective_history: history,
        metadata: None,
    }
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn num_columns(&self) -> usize {
        self.max_cluster_size
    }

    pub fn num_records(&self) -> usize {
        self.assignment.len()
    }

    pub fn match_dim(&self) -> usize {
        self.cells
            .first()
            .and_then(|r| r.first())
            .map_or(0, Vec::len)
    }

    pub fn centroid_dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    /// The `j`-th cell of every row, dummies included.
    pub fn column(&self, j: usize) -> Result<Vec<&[f64]>, ClusterError> {
        if j >= self.max_cluster_size {
            return Err(ClusterError::IndexOutOfRange {
                index: j,
                len: self.max_cluster_size,
            });
        }
        Ok(self.cells.iter().map(|row| row[j].as_slice()).collect())
    }

    pub fn row_sizes(&self) -> Vec<usize> {
        self.pad_mask
            .iter()
            .map(|r| r.iter().filter(|d| !**d).count())
            .collect()
    }

    /// Centroids scaled to unit length (zero centroids stay zero).
    pub fn unit_centroids(&self) -> Vec<Vec<f64>> {
        self.centroids.iter().map(|c| unit(c)).collect()
    }

    /// Real records in dataset order, as stored in the matrix.
    pub fn records(&self) -> Vec<(u32, &[f64])> {
        let mut out: Vec<(u32, &[f64])> = self
            .assignment
            .iter()
            .enumerate()
            .map(|(i, &(r, c))| (i as u32, self.cells[r][c].as_slice()))
            .collect();
        out.sort_by_key(|x| x.0);
        out
    }
}

pub fn coverage(model: &ClusterModel) -> CoverageCurve {
    let sizes = model.row_sizes();
    let cumulative = (0..model.max_cluster_size)
        .map(|j| sizes.iter().map(|&s| s.min(j + 1)).sum())
        .collect();
    CoverageCurve { cumulative }
}

/// The responder's offline pipeline: fit the scaler on centroid-space
/// sketches, cluster their standardized directions, store match sketches.
pub fn build_model(
    sketches: &[DualSignature],
    encoding: &EncodingParams,
    cfg: &ClusterConfig,
) -> Result<ClusterModel, ClusterError> {
    let centroid_raw: Vec<_> = sketches.iter().map(|s| s.centroid.clone()).collect();
    let scaler = encoding::fit_scaler(&centroid_raw).map_err(|e| match e {
        EncodingError::EmptyDataset => ClusterError::TooFewPoints { n: 0, k: cfg.k },
        other => other.into(),
    })?;
    let centroid_space: Vec<Vec<f64>> = centroid_raw
        .iter()
        .map(|s| encoding::standardize(s, &scaler).map(|v| unit(&v)))
        .collect::<Result<_, _>>()?;
    let match_space: Vec<Vec<f64>> = sketches.iter().map(|s| s.matching.values.clone()).collect();
    let mut model = cluster(&centroid_space, &match_space, cfg)?;
    model.metadata = Some(ModelMetadata {
        encoding: encoding.clone(),
        centroid_len: centroid_raw[0].values.len(),
        match_len: match_space[0].len(),
        scaler,
        cluster: cfg.clone(),
    });
    Ok(model)
}
