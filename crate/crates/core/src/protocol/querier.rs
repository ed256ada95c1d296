use rand_chacha::ChaCha20Rng;

use super::{
    decode_column_score, decode_cts, encode_cts, rng_from, MatchVerdict, ProtocolError, QueryEncoder, SessionOptions,
    SetupInfo,
};
use crate::bytes::put_u32;
use crate::ckks::{HeBackend, SecretBackend};
use crate::transport::{Channel, Direction, Frame, LoggedChannel, MsgType, TranscriptLog};

type Ct<S> = <<S as SecretBackend>::Public as HeBackend>::Ciphertext;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuerierPhase {
    Init,
    AwaitCentroidScores,
    AwaitColumnScores,
    Done,
}

impl QuerierPhase {
    fn name(self) -> &'static str {
        match self {
            QuerierPhase::Init => "init",
            QuerierPhase::AwaitCentroidScores => "await-centroid-scores",
            QuerierPhase::AwaitColumnScores => "await-column-scores",
            QuerierPhase::Done => "done",
        }
    }
}

/// One-hot choice of cluster for a single query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndicatorVector {
    pub bits: Vec<bool>,
}

impl IndicatorVector {
    pub fn one_hot(k: usize, index: usize) -> Self {
        let mut bits = vec![false; k];
        bits[index] = true;
        Self { bits }
    }

    pub fn index(&self) -> usize {
        self.bits.iter().position(|&b| b).expect("one-hot")
    }
}

/// Argmax per query over decrypted centroid scores (`scores[c][b]` is the
/// score of query `b` against centroid `c`); ties go to the lowest index.
pub fn select_cluster(scores: &[Vec<f64>], batch: usize) -> Vec<IndicatorVector> {
    let k = scores.len();
    (0..batch)
        .map(|b| {
            let mut best = 0;
            for c in 1..k {
                if scores[c][b] > scores[best][b] {
                    best = c;
                }
            }
            IndicatorVector::one_hot(k, best)
        })
        .collect()
}

/// Row `c` of the result has a 1 in slot `b` iff query `b` chose cluster `c`.
pub fn encrypt_indicators<B: HeBackend>(
    backend: &B,
    indicators: &[IndicatorVector],
    k: usize,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<B::Ciphertext>, ProtocolError> {
    (0..k)
        .map(|c| {
            let row: Vec<f64> = indicators.iter().map(|i| if i.bits[c] { 1.0 } else { 0.0 }).collect();
            Ok(backend.encrypt(&row, rng)?)
        })
        .collect()
}

/// Encrypted query batch, one ciphertext per coordinate, query `b` in slot `b`.
#[derive(Clone, Debug)]
pub struct PreparedQuery<C> {
    pub centroid: Vec<C>,
    pub matching: Vec<C>,
    pub batch: usize,
}

/// Coordinate-major view of a batch: row `i` holds coordinate `i` of every query.
fn transpose<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Vec<Vec<f64>> {
    let rows: Vec<&[f64]> = rows.collect();
    let dim = rows.first().map_or(0, |r| r.len());
    (0..dim).map(|i| rows.iter().map(|r| r[i]).collect()).collect()
}

/// Accumulates verdicts from decrypted column scores.
#[derive(Clone, Debug)]
pub struct Judge {
    early_exit: bool,
    matched: Vec<bool>,
    consumed: Vec<usize>,
    positives: Vec<Vec<usize>>,
}

impl Judge {
    pub fn new(batch: usize, early_exit: bool) -> Self {
        Self {
            early_exit,
            matched: vec![false; batch],
            consumed: vec![0; batch],
            positives: vec![Vec::new(); batch],
        }
    }

    /// Takes column `column`'s decrypted slots. Returns true once every
    /// query is settled and no further columns are needed.
    pub fn observe(&mut self, column: usize, values: &[f64]) -> bool {
        for b in 0..self.matched.len() {
            if self.early_exit && self.matched[b] {
                continue;
            }
            self.consumed[b] = column + 1;
            if values[b] > 0.0 {
                self.matched[b] = true;
                self.positives[b].push(column);
            }
        }
        self.early_exit && self.matched.iter().all(|&m| m)
    }

    pub fn finish(self, clusters: Option<Vec<usize>>) -> Vec<MatchVerdict> {
        (0..self.matched.len())
            .map(|b| MatchVerdict {
                query_id: b,
                matched: self.matched[b],
                columns_consumed: self.consumed[b],
                cluster: clusters.as_ref().map(|c| c[b]),
                positive_columns: self.positives[b].clone(),
            })
            .collect()
    }
}

/// Party A. Owns the key set; the secret half never leaves this struct.
pub struct Querier<S: SecretBackend> {
    secret: S,
    options: SessionOptions,
    setup: Option<SetupInfo>,
    encoder: Option<QueryEncoder>,
    phase: QuerierPhase,
    rng: ChaCha20Rng,
}

impl<S: SecretBackend> Querier<S> {
    pub fn new(secret: S, options: SessionOptions, seed: u64) -> Self {
        Self {
            secret,
            options,
            setup: None,
            encoder: None,
            phase: QuerierPhase::Init,
            rng: rng_from(seed),
        }
    }

    pub fn phase(&self) -> QuerierPhase {
        self.phase
    }

    pub fn setup(&self) -> Option<&SetupInfo> {
        self.setup.as_ref()
    }

    pub fn options(&self) -> SessionOptions {
        self.options
    }

    pub fn backend(&self) -> &S::Public {
        self.secret.public()
    }

    pub fn secret(&self) -> &S {
        &self.secret
    }

    /// The opening `Setup` frame: options plus public key material.
    pub fn hello(&self) -> Frame {
        let opts = serde_json::to_vec(&self.options).expect("options serialize");
        let mut payload = Vec::new();
        put_u32(&mut payload, opts.len() as u32);
        payload.extend_from_slice(&opts);
        payload.extend_from_slice(&self.backend().export_public());
        Frame::new(MsgType::Setup, payload)
    }

    pub fn accept_setup(&mut self, info: SetupInfo) -> Result<(), ProtocolError> {
        if info.match_len == 0 || info.centroid_len == 0 {
            return Err(ProtocolError::Malformed("zero-length sketches in setup".into()));
        }
        if !self.options.linear && info.k == 0 {
            return Err(ProtocolError::Malformed("clustered session against k = 0".into()));
        }
        self.encoder = Some(QueryEncoder::new(&info)?);
        self.setup = Some(info);
        Ok(())
    }

    fn encoder(&self) -> Result<&QueryEncoder, ProtocolError> {
        self.encoder.as_ref().ok_or(ProtocolError::PhaseViolation {
            phase: "init",
            got: MsgType::CentroidQuery,
        })
    }

    /// Encodes and encrypts a batch. Needs the responder's setup first.
    pub fn prepare_query(&mut self, names: &[String]) -> Result<PreparedQuery<Ct<S>>, ProtocolError> {
        let slots = self.backend().slots();
        if names.is_empty() {
            return Err(ProtocolError::EmptyBatch);
        }
        if names.len() > slots {
            return Err(ProtocolError::BatchTooLarge {
                given: names.len(),
                max: slots,
            });
        }
        let enc = self.encoder()?;
        let vecs = names
            .iter()
            .enumerate()
            .map(|(index, n)| enc.encode(n).map_err(|source| ProtocolError::Name { index, source }))
            .collect::<Result<Vec<_>, _>>()?;
        let centroid_cols = transpose(vecs.iter().map(|v| v.centroid.as_slice()));
        let match_cols = transpose(vecs.iter().map(|v| v.matching.as_slice()));
        let backend = self.secret.public();
        let rng = &mut self.rng;
        let centroid = centroid_cols
            .iter()
            .map(|c| backend.encrypt(c, rng))
            .collect::<Result<Vec<_>, _>>()?;
        let matching = match_cols
            .iter()
            .map(|c| backend.encrypt(c, rng))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PreparedQuery {
            centroid,
            matching,
            batch: names.len(),
        })
    }

    /// Decrypts centroid scores into `scores[c][b]`.
    pub fn decrypt_scores(&self, cts: &[Ct<S>]) -> Vec<Vec<f64>> {
        cts.iter().map(|c| self.secret.decrypt(c)).collect()
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

    /// Drives a full session over `chan`.
    pub fn run<C: Channel>(
        &mut self,
        chan: C,
        names: &[String],
    ) -> Result<(Vec<MatchVerdict>, TranscriptLog), ProtocolError> {
        let mut chan = LoggedChannel::new(chan, Direction::QuerierToResponder);
        let result = self.run_logged(&mut chan, names);
        if let Err(e) = &result {
            if !matches!(e, ProtocolError::Transport(_) | ProtocolError::Remote(_)) {
                let _ = chan.send(&Frame::new(MsgType::Error, e.to_string().into_bytes()));
            }
        }
        result.map(|v| (v, chan.into_parts().1))
    }

    fn run_logged<C: Channel>(&mut self, chan: &mut C, names: &[String]) -> Result<Vec<MatchVerdict>, ProtocolError> {
        self.phase = QuerierPhase::Init;
        if names.is_empty() {
            return Err(ProtocolError::EmptyBatch);
        }
        chan.send(&self.hello())?;
        let f = chan.recv()?;
        self.expect(&f, MsgType::Setup)?;
        let info: SetupInfo =
            serde_json::from_slice(&f.payload).map_err(|e| ProtocolError::Malformed(format!("setup: {e}")))?;
        self.accept_setup(info)?;
        let query = self.prepare_query(names)?;
        let compress = self.options.compress;
        let linear = self.options.linear;
        let info = self.setup.clone().expect("set above");

        let (indicators, clusters) = if linear {
            (Vec::new(), None)
        } else {
            let payload = encode_cts(self.backend(), &query.centroid, compress);
            chan.send(&Frame::new(MsgType::CentroidQuery, payload))?;
            self.phase = QuerierPhase::AwaitCentroidScores;
            let f = chan.recv()?;
            self.expect(&f, MsgType::CentroidScores)?;
            let cts = decode_cts(self.backend(), &f.payload)?;
            if cts.len() != info.k {
                return Err(ProtocolError::Malformed(format!("{} centroid scores for k = {}", cts.len(), info.k)));
            }
            let chosen = select_cluster(&self.decrypt_scores(&cts), query.batch);
            let clusters = chosen.iter().map(IndicatorVector::index).collect();
            let backend = self.secret.public();
            (encrypt_indicators(backend, &chosen, info.k, &mut self.rng)?, Some(clusters))
        };

        let mut column_query = indicators;
        column_query.extend(query.matching.iter().cloned());
        chan.send(&Frame::new(
            MsgType::ColumnQuery,
            encode_cts(self.backend(), &column_query, compress),
        ))?;
        self.phase = QuerierPhase::AwaitColumnScores;

        let total = info.total_columns(linear);
        let mut judge = Judge::new(query.batch, self.options.early_exit);
        let mut next = 0;
        loop {
            let f = chan.recv()?;
            if f.msg_type == MsgType::Done {
                break;
            }
            self.expect(&f, MsgType::ColumnScore)?;
            let (column, ct) = decode_column_score(self.backend(), &f.payload)?;
            if column != next || column >= total {
                return Err(ProtocolError::Malformed(format!("column {column} out of order")));
            }
            next += 1;
            let settled = judge.observe(column, &self.secret.decrypt(&ct));
            if self.options.early_exit && next < total {
                let reply = if settled {
                    Frame::empty(MsgType::Done)
                } else {
                    Frame::new(MsgType::ColumnQuery, encode_cts(self.backend(), &[], compress))
                };
                chan.send(&reply)?;
            }
        }
        self.phase = QuerierPhase::Done;
        Ok(judge.finish(clusters))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_picks_highest() {
        let s = vec![vec![0.1], vec![0.9], vec![0.3]];
        assert_eq!(select_cluster(&s, 1)[0].bits, vec![false, true, false]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let s = vec![vec![0.5], vec![0.5], vec![0.5]];
        assert_eq!(select_cluster(&s, 1)[0].index(), 0);
    }

    proptest::proptest! {
        #[test]
        fn argmax_is_shift_invariant(v in proptest::collection::vec(-1.0f64..1.0, 1..20), c in -10.0f64..10.0) {
            let s: Vec<Vec<f64>> = v.iter().map(|&x| vec![x]).collect();
            let shifted: Vec<Vec<f64>> = v.iter().map(|&x| vec![x + c]).collect();
            let a = select_cluster(&s, 1)[0].index();
            let b = select_cluster(&shifted, 1)[0].index();
            // Shifting can merge values that differ by less than an ulp.
            proptest::prop_assume!(v.iter().filter(|&&x| (x - v[a]).abs() < 1e-9).count() == 1);
            proptest::prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn judge_without_early_exit_consumes_every_column() {
        let mut j = Judge::new(2, false);
        for c in 0..4 {
            assert!(!j.observe(c, &[if c == 1 { 0.3 } else { -1.0 }, -2.0]));
        }
        let v = j.finish(None);
        assert!(v[0].matched && !v[1].matched);
        assert_eq!(v[0].positive_columns, vec![1]);
        assert_eq!((v[0].columns_consumed, v[1].columns_consumed), (4, 4));
    }

    #[test]
    fn judge_with_early_exit_stops_at_first_positive() {
        let mut j = Judge::new(1, true);
        assert!(j.observe(0, &[0.01]));
        let v = j.finish(Some(vec![2]));
        assert_eq!(v[0].columns_consumed, 1);
        assert_eq!(v[0].cluster, Some(2));
    }
}
