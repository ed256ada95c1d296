use super::QueryVectors;
use crate::clustering::ClusterModel;
use crate::encoding::{cosine, dot};

/// Exact-arithmetic outcome for one query.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceVerdict {
    pub matched: bool,
    pub cluster: Option<usize>,
    /// Cosine of the query with every candidate, in column order.
    pub cosines: Vec<f64>,
    pub positive_columns: Vec<usize>,
    /// Smallest `|cos - tau|` over all candidates.
    pub margin: f64,
}

impl ReferenceVerdict {
    fn from_cosines(cosines: Vec<f64>, tau: f64, cluster: Option<usize>) -> Self {
        let positive_columns: Vec<usize> = (0..cosines.len()).filter(|&j| cosines[j] > tau).collect();
        let margin = cosines.iter().map(|c| (c - tau).abs()).fold(f64::INFINITY, f64::min);
        Self {
            matched: !positive_columns.is_empty(),
            cluster,
            cosines,
            positive_columns,
            margin,
        }
    }

    /// Columns the querier would read before stopping.
    pub fn columns_consumed(&self, early_exit: bool) -> usize {
        match (early_exit, self.positive_columns.first()) {
            (true, Some(&j)) => j + 1,
            _ => self.cosines.len(),
        }
    }
}

/// The protocol's decisions computed in the clear, over the same model.
pub struct PlaintextMatcher<'a> {
    model: &'a ClusterModel,
    unit_centroids: Vec<Vec<f64>>,
    tau: f64,
}

impl<'a> PlaintextMatcher<'a> {
    pub fn new(model: &'a ClusterModel, tau: f64) -> Self {
        Self {
            unit_centroids: model.unit_centroids(),
            model,
            tau,
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Centroid scores and the chosen cluster (ties to the lowest index).
    pub fn select(&self, q: &QueryVectors) -> (usize, Vec<f64>) {
        let scores: Vec<f64> = self.unit_centroids.iter().map(|c| dot(&q.centroid, c)).collect();
        let mut best = 0;
        for (c, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = c;
            }
        }
        (best, scores)
    }

    /// Candidates of the chosen row, dummies included (their cosine is 0).
    pub fn clustered(&self, q: &QueryVectors) -> ReferenceVerdict {
        let (row, _) = self.select(q);
        let cosines = self.model.cells[row].iter().map(|cell| cosine(&q.matching, cell)).collect();
        ReferenceVerdict::from_cosines(cosines, self.tau, Some(row))
    }

    /// Every record, in record-id order.
    pub fn linear(&self, q: &QueryVectors) -> ReferenceVerdict {
        let cosines = self.model.records().iter().map(|(_, cell)| cosine(&q.matching, cell)).collect();
        ReferenceVerdict::from_cosines(cosines, self.tau, None)
    }

    /// Record id behind column `j` of `verdict`, if it is not a dummy.
    pub fn record_at(&self, cluster: Option<usize>, j: usize) -> Option<u32> {
        match cluster {
            Some(row) => self.model.record_ids[row].get(j).copied().flatten(),
            None => (j < self.model.num_records()).then_some(j as u32),
        }
    }
}
