use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::MsgType;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    QuerierToResponder,
    ResponderToQuerier,
}

impl Direction {
    pub fn reverse(self) -> Self {
        match self {
            Direction::QuerierToResponder => Direction::ResponderToQuerier,
            Direction::ResponderToQuerier => Direction::QuerierToResponder,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Direction::QuerierToResponder => "A->B",
            Direction::ResponderToQuerier => "B->A",
        }
    }
}

/// Protocol phase a message type belongs to, for cost breakdowns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Setup,
    CentroidRound,
    ColumnRound,
    Control,
}

impl Phase {
    pub fn of(t: MsgType) -> Self {
        match t {
            MsgType::Setup => Phase::Setup,
            MsgType::CentroidQuery | MsgType::CentroidScores => Phase::CentroidRound,
            MsgType::ColumnQuery | MsgType::ColumnScore => Phase::ColumnRound,
            MsgType::Done | MsgType::Error => Phase::Control,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub seq: usize,
    pub direction: Direction,
    pub msg_type: MsgType,
    pub bytes: usize,
    /// Milliseconds since the log was created.
    pub millis: f64,
}

#[derive(Clone, Debug)]
pub struct TranscriptLog {
    start: Instant,
    entries: Vec<TranscriptEntry>,
    totals: [u64; 2],
}

impl Default for TranscriptLog {
    fn default() -> Self {
        Self::new()
    }
}

impl TranscriptLog {
    pub fn new() -> Self {
        Self {
            start: Instant::now(),
            entries: Vec::new(),
            totals: [0; 2],
        }
    }

    pub fn record(&mut self, direction: Direction, msg_type: MsgType, bytes: usize) {
        self.entries.push(TranscriptEntry {
            seq: self.entries.len(),
            direction,
            msg_type,
            bytes,
            millis: self.start.elapsed().as_secs_f64() * 1e3,
        });
        self.totals[direction as usize] += bytes as u64;
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    /// Bytes sent querier-to-responder and responder-to-querier.
    pub fn totals(&self) -> (u64, u64) {
        (self.totals[0], self.totals[1])
    }

    pub fn total(&self, direction: Direction) -> u64 {
        self.totals[direction as usize]
    }

    /// `(direction, msg_type, bytes)` per entry: everything but the timings.
    pub fn shape(&self) -> Vec<(Direction, MsgType, usize)> {
        self.entries.iter().map(|e| (e.direction, e.msg_type, e.bytes)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("seq,direction,msg_type,bytes,millis\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.3}",
                e.seq,
                e.direction.label(),
                e.msg_type.name(),
                e.bytes,
                e.millis
            );
        }
        out
    }

    /// Per-phase totals and the derived per-column figures.
    pub fn report(&self) -> CostSummary {
        let mut phase_bytes = BTreeMap::new();
        for e in &self.entries {
            *phase_bytes.entry(Phase::of(e.msg_type)).or_insert(0u64) += e.bytes as u64;
        }
        let scores: Vec<&TranscriptEntry> = self
            .entries
            .iter()
            .filter(|e| e.msg_type == MsgType::ColumnScore)
            .collect();
        let last_of = |t: MsgType| self.entries.iter().rev().find(|e| e.msg_type == t).map(|e| e.millis);
        let first_of = |t: MsgType| self.entries.iter().find(|e| e.msg_type == t).map(|e| e.millis);
        let setup = last_of(MsgType::Setup).unwrap_or(0.0);
        let first_round_ms = last_of(MsgType::CentroidScores).map(|t| t - setup);
        let per_column_ms = match (first_of(MsgType::ColumnQuery), scores.last()) {
            (Some(t0), Some(last)) => Some((last.millis - t0) / scores.len() as f64),
            _ => None,
        };
        CostSummary {
            querier_bytes: self.totals[0],
            responder_bytes: self.totals[1],
            response_bytes: scores.iter().map(|e| e.bytes as u64).sum(),
            columns: scores.len(),
            min_column_bytes: scores.iter().map(|e| e.bytes).min(),
            max_column_bytes: scores.iter().map(|e| e.bytes).max(),
            first_round_ms,
            per_column_ms,
            phase_bytes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub phase_bytes: BTreeMap<Phase, u64>,
    pub querier_bytes: u64,
    pub responder_bytes: u64,
    /// Bytes of all column-score frames.
    pub response_bytes: u64,
    pub columns: usize,
    pub min_column_bytes: Option<usize>,
    pub max_column_bytes: Option<usize>,
    pub first_round_ms: Option<f64>,
    pub per_column_ms: Option<f64>,
}

impl CostSummary {
    /// Whether every column-score frame had the same size.
    pub fn constant_column_size(&self) -> bool {
        self.min_column_bytes == self.max_column_bytes
    }
}

/// Response bytes without clustering divided by response bytes with it.
pub fn reduction_factor(linear: &CostSummary, clustered: &CostSummary) -> f64 {
    linear.response_bytes as f64 / clustered.response_bytes as f64
}

/// JSON summary of a session: phase totals, per-column figures and, when
/// known, the clustering reduction factor.
pub fn transcript_json(log: &TranscriptLog, reduction: Option<f64>) -> serde_json::Value {
    let r = log.report();
    serde_json::json!({
        "phase_totals": r.phase_bytes,
        "querier_bytes": r.querier_bytes,
        "responder_bytes": r.responder_bytes,
        "response_bytes": r.response_bytes,
        "columns": r.columns,
        "column_bytes": r.max_column_bytes,
        "constant_column_size": r.constant_column_size(),
        "first_round_ms": r.first_round_ms,
        "per_column_ms": r.per_column_ms,
        "messages": log.entries().len(),
        "reduction_factor": reduction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(cols: usize, col_bytes: usize) -> TranscriptLog {
        let mut log = TranscriptLog::new();
        log.record(Direction::QuerierToResponder, MsgType::Setup, 100);
        log.record(Direction::ResponderToQuerier, MsgType::Setup, 50);
        log.record(Direction::QuerierToResponder, MsgType::CentroidQuery, 1000);
        log.record(Direction::ResponderToQuerier, MsgType::CentroidScores, 300);
        log.record(Direction::QuerierToResponder, MsgType::ColumnQuery, 700);
        for _ in 0..cols {
            log.record(Direction::ResponderToQuerier, MsgType::ColumnScore, col_bytes);
        }
        log.record(Direction::ResponderToQuerier, MsgType::Done, 5);
        log
    }

    #[test]
    fn clustered_response_is_columns_times_frame() {
        let r = sample(7, 131_102).report();
        assert_eq!(r.columns, 7);
        assert_eq!(r.response_bytes, 7 * 131_102);
        assert!(r.constant_column_size());
        assert_eq!(r.phase_bytes[&Phase::Setup], 150);
        assert_eq!(r.phase_bytes[&Phase::CentroidRound], 1300);
    }

    #[test]
    fn reduction_is_ratio_of_column_counts() {
        let linear = sample(1000, 64).report();
        let clustered = sample(20, 64).report();
        assert!((reduction_factor(&linear, &clustered) - 50.0).abs() < 1e-12);
    }

    #[test]
    fn csv_has_one_row_per_entry() {
        let log = sample(2, 10);
        let csv = log.to_csv();
        assert_eq!(csv.lines().count(), 1 + log.entries().len());
        assert!(csv.lines().nth(1).unwrap().starts_with("0,A->B,setup,100,"));
        let j = transcript_json(&log, Some(2.5));
        assert_eq!(j["reduction_factor"], 2.5);
        assert_eq!(j["phase_totals"]["column_round"], 720);
    }

    proptest! {
        #[test]
        fn totals_equal_sum_of_entries(msgs in prop::collection::vec((any::<bool>(), 0usize..7, 0usize..1_000_000), 0..60)) {
            let mut log = TranscriptLog::new();
            for &(up, t, b) in &msgs {
                let d = if up { Direction::QuerierToResponder } else { Direction::ResponderToQuerier };
                log.record(d, MsgType::ALL[t], b);
            }
            let (a, b) = log.totals();
            let sum = |d: Direction| log.entries().iter().filter(|e| e.direction == d).map(|e| e.bytes as u64).sum::<u64>();
            prop_assert_eq!(a, sum(Direction::QuerierToResponder));
            prop_assert_eq!(b, sum(Direction::ResponderToQuerier));
            let r = log.report();
            prop_assert_eq!(r.phase_bytes.values().sum::<u64>(), a + b);
            prop_assert!(log.entries().windows(2).all(|w| w[0].seq + 1 == w[1].seq && w[0].millis <= w[1].millis));
        }
    }
}
