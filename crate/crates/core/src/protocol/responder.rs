use std::marker::PhantomData;
use std::sync::{Arc, Mutex};

use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use super::{
    decode_cts, draw_mask, encode_column_score, encode_cts, rng_from, ProtocolError, SessionOptions, SetupInfo,
};
use crate::bytes::Reader;
use crate::ckks::HeBackend;
use crate::clustering::ClusterModel;
use crate::transport::{Channel, Direction, Frame, LoggedChannel, MsgType, TranscriptLog};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResponderPhase {
    Idle,
    ServedCentroids,
    StreamingColumns,
}

impl ResponderPhase {
    fn name(self) -> &'static str {
        match self {
            ResponderPhase::Idle => "idle",
            ResponderPhase::ServedCentroids => "served-centroids",
            ResponderPhase::StreamingColumns => "streaming-columns",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SessionKind {
    /// Empty `Setup` answered with the public setup info.
    Probe,
    Clustered { columns_sent: usize },
    Linear { columns_sent: usize },
}

/// Party B. Generic over a public-key backend, so it has no way to decrypt.
pub struct Responder<B: HeBackend> {
    model: Arc<ClusterModel>,
    info: SetupInfo,
    unit_centroids: Vec<Vec<f64>>,
    rng: Mutex<ChaCha20Rng>,
    threads: usize,
    phase: ResponderPhase,
    _backend: PhantomData<fn() -> B>,
}

impl<B: HeBackend> Responder<B> {
    pub fn new(model: Arc<ClusterModel>, tau: f64, seed: u64) -> Result<Self, ProtocolError> {
        let info = SetupInfo::from_model(&model, tau)?;
        Ok(Self {
            unit_centroids: model.unit_centroids(),
            model,
            info,
            rng: Mutex::new(rng_from(seed)),
            threads: 1,
            phase: ResponderPhase::Idle,
            _backend: PhantomData,
        })
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads.max(1);
        self
    }

    pub fn info(&self) -> &SetupInfo {
        &self.info
    }

    pub fn model(&self) -> &ClusterModel {
        &self.model
    }

    pub fn phase(&self) -> ResponderPhase {
        self.phase
    }

    /// One score per centroid: the query's inner product with the unit
    /// centroid, returned at the lowest level.
    pub fn compare_to_centroids(&self, backend: &B, query: &[B::Ciphertext]) -> Result<Vec<B::Ciphertext>, ProtocolError> {
        if query.len() != self.info.centroid_len {
            return Err(ProtocolError::Malformed(format!(
                "{} centroid-space ciphertexts, expected {}",
                query.len(),
                self.info.centroid_len
            )));
        }
        self.unit_centroids
            .iter()
            .map(|c| {
                let s = backend.dot_ct_pt(query, c)?;
                Ok(backend.drop_to_level(&s, 0)?)
            })
            .collect()
    }

    /// Encrypted cells of column `j` in the rows picked by `indicator`:
    /// coordinate `i` is `sum_row indicator[row] * cell[row][j][i]`.
    pub fn select_column(&self, backend: &B, indicator: &[B::Ciphertext], j: usize) -> Result<Vec<B::Ciphertext>, ProtocolError> {
        let column = self.model.column(j)?;
        (0..self.info.match_len)
            .map(|i| {
                let weights: Vec<f64> = column.iter().map(|cell| cell[i]).collect();
                Ok(backend.dot_ct_pt(indicator, &weights)?)
            })
            .collect()
    }

    /// `(cos - tau) * r` for column `j`, with `r` given per slot.
    pub fn column_score(
        &self,
        backend: &B,
        indicator: &[B::Ciphertext],
        query: &[B::Ciphertext],
        j: usize,
        mask: &[f64],
    ) -> Result<B::Ciphertext, ProtocolError> {
        let selected = self.select_column(backend, indicator, j)?;
        let level = backend.level(&selected[0]);
        let query: Vec<B::Ciphertext> = query
            .iter()
            .map(|q| backend.drop_to_level(q, level))
            .collect::<Result<_, _>>()?;
        let score = backend.dot_ct_ct(&selected, &query)?;
        self.mask(backend, &score, mask)
    }

    /// Linear-mode score of record `id` against the match-space query.
    pub fn record_score(&self, backend: &B, query: &[B::Ciphertext], cell: &[f64], mask: &[f64]) -> Result<B::Ciphertext, ProtocolError> {
        let score = backend.dot_ct_pt(query, cell)?;
        self.mask(backend, &score, mask)
    }

    /// Draws the next per-slot mask from the responder's generator.
    pub fn next_mask(&self, slots: usize) -> Vec<f64> {
        draw_mask(&mut self.rng.lock().expect("rng lock"), slots)
    }

    fn mask(&self, backend: &B, score: &B::Ciphertext, mask: &[f64]) -> Result<B::Ciphertext, ProtocolError> {
        let shifted = backend.add_const(score, -self.info.tau)?;
        let masked = backend.mul_plain(&shifted, mask)?;
        Ok(backend.drop_to_level(&masked, 0)?)
    }

    /// Serves one session over `chan`. Failures are reported to the peer
    /// with an `Error` frame before being returned.
    pub fn serve<C: Channel>(&mut self, chan: C) -> Result<(SessionKind, TranscriptLog), ProtocolError> {
        let mut chan = LoggedChannel::new(chan, Direction::ResponderToQuerier);
        let result = self.serve_logged(&mut chan);
        self.phase = ResponderPhase::Idle;
        if let Err(e) = &result {
            if !matches!(e, ProtocolError::Transport(_) | ProtocolError::Remote(_)) {
                let _ = chan.send(&Frame::new(MsgType::Error, e.to_string().into_bytes()));
            }
        }
        result.map(|k| (k, chan.into_parts().1))
    }

    fn expect(&self, frame: &Frame, t: MsgType) -> Result<(), ProtocolError> {
        if frame.msg_type == MsgType::Error {
            return Err(ProtocolError::Remote(String::from_utf8_lossy(&frame.payload).into_owned()));
        }
        if frame.msg_type != t {
            return Err(ProtocolError::PhaseViolation {
                phase: self.phase.name(),
                got: frame.msg_type,
            });
        }
        Ok(())
    }

    fn serve_logged<C: Channel>(&mut self, chan: &mut C) -> Result<SessionKind, ProtocolError> {
        self.phase = ResponderPhase::Idle;
        let f = chan.recv()?;
        self.expect(&f, MsgType::Setup)?;
        if f.payload.is_empty() {
            chan.send(&Frame::new(MsgType::Setup, serde_json::to_vec(&self.info).expect("setup serializes")))?;
            return Ok(SessionKind::Probe);
        }
        let (opts, backend) = parse_hello::<B>(&f.payload)?;
        let mut info = self.info.clone();
        info.he_params = Some(backend.params().clone());
        chan.send(&Frame::new(MsgType::Setup, serde_json::to_vec(&info).expect("setup serializes")))?;

        let k = if opts.linear { 0 } else { self.info.k };
        if !opts.linear {
            let f = chan.recv()?;
            self.expect(&f, MsgType::CentroidQuery)?;
            let query = decode_cts(&backend, &f.payload)?;
            let scores = self.compare_to_centroids(&backend, &query)?;
            chan.send(&Frame::new(MsgType::CentroidScores, encode_cts(&backend, &scores, opts.compress)))?;
            self.phase = ResponderPhase::ServedCentroids;
        }

        let f = chan.recv()?;
        self.expect(&f, MsgType::ColumnQuery)?;
        let cts = decode_cts(&backend, &f.payload)?;
        if cts.len() != k + self.info.match_len {
            return Err(ProtocolError::Malformed(format!(
                "column query with {} ciphertexts, expected {}",
                cts.len(),
                k + self.info.match_len
            )));
        }
        let (indicator, query) = cts.split_at(k);
        self.phase = ResponderPhase::StreamingColumns;

        let total = self.info.total_columns(opts.linear);
        let records = self.model.records();
        let slots = backend.slots();
        let score = |j: usize, mask: &[f64]| -> Result<B::Ciphertext, ProtocolError> {
            if opts.linear {
                self.record_score(&backend, query, records[j].1, mask)
            } else {
                self.column_score(&backend, indicator, query, j, mask)
            }
        };

        let mut sent = 0;
        if opts.early_exit || self.threads == 1 {
            for j in 0..total {
                let mask = self.next_mask(slots);
                let ct = score(j, &mask)?;
                chan.send(&Frame::new(MsgType::ColumnScore, encode_column_score(&backend, j, &ct, opts.compress)))?;
                sent += 1;
                if opts.early_exit && j + 1 < total {
                    let f = chan.recv()?;
                    if f.msg_type == MsgType::Done {
                        break;
                    }
                    self.expect(&f, MsgType::ColumnQuery)?;
                    if decode_cts(&backend, &f.payload)?.len() != 0 {
                        return Err(ProtocolError::Malformed("non-empty continuation".into()));
                    }
                }
            }
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.threads)
                .build()
                .map_err(|e| ProtocolError::Malformed(format!("thread pool: {e}")))?;
            let block = self.threads * 2;
            for start in (0..total).step_by(block) {
                let end = (start + block).min(total);
                let masks: Vec<Vec<f64>> = (start..end).map(|_| self.next_mask(slots)).collect();
                let cts: Vec<B::Ciphertext> = pool.install(|| {
                    (start..end)
                        .into_par_iter()
                        .map(|j| score(j, &masks[j - start]))
                        .collect::<Result<_, _>>()
                })?;
                for (j, ct) in (start..end).zip(&cts) {
                    chan.send(&Frame::new(MsgType::ColumnScore, encode_column_score(&backend, j, ct, opts.compress)))?;
                    sent += 1;
                }
            }
        }
        chan.send(&Frame::empty(MsgType::Done))?;
        Ok(if opts.linear {
            SessionKind::Linear { columns_sent: sent }
        } else {
            SessionKind::Clustered { columns_sent: sent }
        })
    }
}

fn parse_hello<B: HeBackend>(payload: &[u8]) -> Result<(SessionOptions, B), ProtocolError> {
    let mut r = Reader::new(payload);
    let len = r.u32().map_err(|_| ProtocolError::Malformed("short setup".into()))? as usize;
    let json = r.take(len).map_err(|_| ProtocolError::Malformed("short setup".into()))?;
    let opts: SessionOptions =
        serde_json::from_slice(json).map_err(|e| ProtocolError::Malformed(format!("session options: {e}")))?;
    let backend = B::import_public(&payload[r.position()..])?;
    Ok((opts, backend))
}
