//! The two-party matching protocol.
//!
//! The querier (A) holds the key set and a batch of names; the responder
//! (B) holds a [`ClusterModel`](crate::clustering::ClusterModel) and only
//! the querier's public keys. A message sequence for one session:
//!
//! ```text
//! A -> B  Setup          session options + public/relin keys
//! B -> A  Setup          encoding params, scaler, tau, k, M
//! A -> B  CentroidQuery  centroid-space query, one ciphertext per coordinate
//! B -> A  CentroidScores one ciphertext per centroid
//! A -> B  ColumnQuery    k encrypted indicator rows + match-space query
//! B -> A  ColumnScore    one masked score per column ...
//! B -> A  Done
//! ```
//!
//! In linear mode the centroid round is skipped, the column query carries no
//! indicator rows, and the responder scores every record in turn. With early
//! exit on, the querier pulls each column with an empty `ColumnQuery` and may
//! stop with `Done`.

mod querier;
mod reference;
mod responder;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bytes::{put_u16, put_u32, Reader};
use crate::ckks::{HeBackend, HeError, HeParams, SecretBackend};
use crate::clustering::{ClusterError, ClusterModel};
use crate::encoding::{self, DualEncoder, EncodingError, EncodingParams, ScalerParams};
use crate::transport::{memory_pair, MsgType, TranscriptLog, TransportError};

pub use querier::{encrypt_indicators, select_cluster, IndicatorVector, Judge, PreparedQuery, Querier, QuerierPhase};
pub use reference::{PlaintextMatcher, ReferenceVerdict};
pub use responder::{Responder, ResponderPhase, SessionKind};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("unexpected {got:?} message in phase {phase}")]
    PhaseViolation { phase: &'static str, got: MsgType },
    #[error(transparent)]
    He(#[from] HeError),
    #[error("name #{index}: {source}")]
    Name { index: usize, source: EncodingError },
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("batch of {given} names exceeds {max} slots")]
    BatchTooLarge { given: usize, max: usize },
    #[error("empty query batch")]
    EmptyBatch,
    #[error("responder has no cluster model")]
    ModelMissing,
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("peer reported error: {0}")]
    Remote(String),
}

/// Session-level settings shared by both parties.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub tau: f64,
    pub early_exit: bool,
    /// Score every record instead of one cluster's columns.
    pub linear: bool,
    /// Worker threads the responder may use for independent columns.
    pub threads: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            tau: 0.9,
            early_exit: true,
            linear: false,
            threads: 1,
        }
    }
}

/// What the querier asks for when opening a session.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionOptions {
    pub early_exit: bool,
    pub linear: bool,
    pub compress: bool,
}

/// The responder's half of the setup exchange. Everything here is public.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetupInfo {
    pub encoding: EncodingParams,
    pub centroid_len: usize,
    pub match_len: usize,
    pub scaler: ScalerParams,
    pub tau: f64,
    pub k: usize,
    pub columns: usize,
    pub records: usize,
    /// Echo of the parameters the responder accepted; absent for probes.
    pub he_params: Option<HeParams>,
}

impl SetupInfo {
    pub fn from_model(model: &ClusterModel, tau: f64) -> Result<Self, ProtocolError> {
        let meta = model.metadata.as_ref().ok_or(ProtocolError::ModelMissing)?;
        Ok(Self {
            encoding: meta.encoding.clone(),
            centroid_len: meta.centroid_len,
            match_len: meta.match_len,
            scaler: meta.scaler.clone(),
            tau,
            k: model.k(),
            columns: model.num_columns(),
            records: model.num_records(),
            he_params: None,
        })
    }

    /// Number of column scores a full session streams.
    pub fn total_columns(&self, linear: bool) -> usize {
        if linear {
            self.records
        } else {
            self.columns
        }
    }
}

/// A name's plaintext vectors: unit standardized centroid-space sketch and
/// normalized match-space sketch.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryVectors {
    pub centroid: Vec<f64>,
    pub matching: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct QueryEncoder {
    dual: DualEncoder,
    scaler: ScalerParams,
}

impl QueryEncoder {
    pub fn new(info: &SetupInfo) -> Result<Self, EncodingError> {
        Ok(Self {
            dual: DualEncoder::new(&info.encoding, info.centroid_len, info.match_len)?,
            scaler: info.scaler.clone(),
        })
    }

    pub fn dual(&self) -> &DualEncoder {
        &self.dual
    }

    pub fn encode(&self, name: &str) -> Result<QueryVectors, EncodingError> {
        self.from_sketches(&self.dual.encode(name)?)
    }

    pub fn from_sketches(&self, s: &encoding::DualSignature) -> Result<QueryVectors, EncodingError> {
        let std = encoding::standardize(&s.centroid, &self.scaler)?;
        Ok(QueryVectors {
            centroid: unit(&std),
            matching: s.matching.values.clone(),
        })
    }
}

pub(crate) fn unit(v: &[f64]) -> Vec<f64> {
    let n = encoding::dot(v, v).sqrt();
    if n == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

/// Per-query outcome as seen by the querier.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchVerdict {
    pub query_id: usize,
    pub matched: bool,
    pub columns_consumed: usize,
    /// Cluster the querier selected; `None` in linear mode.
    pub cluster: Option<usize>,
    /// Columns whose score decrypted positive.
    pub positive_columns: Vec<usize>,
}

pub(crate) fn encode_cts<B: HeBackend>(backend: &B, cts: &[B::Ciphertext], compress: bool) -> Vec<u8> {
    let mut out = Vec::new();
    put_u16(&mut out, cts.len() as u16);
    for c in cts {
        out.extend_from_slice(&backend.serialize(c, compress));
    }
    out
}

pub(crate) fn decode_cts<B: HeBackend>(backend: &B, bytes: &[u8]) -> Result<Vec<B::Ciphertext>, ProtocolError> {
    let mut r = Reader::new(bytes);
    let count = r.u16().map_err(|_| ProtocolError::Malformed("missing count".into()))? as usize;
    let mut pos = r.position();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let (ct, used) = backend.deserialize(&bytes[pos..])?;
        pos += used;
        out.push(ct);
    }
    if pos != bytes.len() {
        return Err(ProtocolError::Malformed("trailing bytes after ciphertexts".into()));
    }
    Ok(out)
}

pub(crate) fn encode_column_score<B: HeBackend>(backend: &B, column: usize, ct: &B::Ciphertext, compress: bool) -> Vec<u8> {
    let mut out = Vec::new();
    put_u32(&mut out, column as u32);
    out.extend_from_slice(&encode_cts(backend, std::slice::from_ref(ct), compress));
    out
}

pub(crate) fn decode_column_score<B: HeBackend>(backend: &B, bytes: &[u8]) -> Result<(usize, B::Ciphertext), ProtocolError> {
    if bytes.len() < 4 {
        return Err(ProtocolError::Malformed("short column score".into()));
    }
    let column = u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
    let mut cts = decode_cts(backend, &bytes[4..])?;
    if cts.len() != 1 {
        return Err(ProtocolError::Malformed(format!("{} ciphertexts in a column score", cts.len())));
    }
    Ok((column, cts.pop().expect("one")))
}

/// Everything a completed in-process session produced.
#[derive(Debug)]
pub struct ProtocolRun {
    pub verdicts: Vec<MatchVerdict>,
    pub querier_log: TranscriptLog,
    pub responder_log: TranscriptLog,
}

/// Runs one session between `querier` and `responder` over an in-memory
/// channel, the responder on a scoped thread.
pub fn run_protocol<S>(
    querier: &mut Querier<S>,
    responder: &mut Responder<S::Public>,
    names: &[String],
) -> Result<ProtocolRun, ProtocolError>
where
    S: SecretBackend,
{
    let (a, b) = memory_pair();
    std::thread::scope(|scope| {
        let server = scope.spawn(move || responder.serve(b));
        let q = querier.run(a, names);
        let r = server.join().expect("responder thread panicked");
        match (q, r) {
            (Ok((verdicts, querier_log)), Ok((_, responder_log))) => Ok(ProtocolRun {
                verdicts,
                querier_log,
                responder_log,
            }),
            (Err(e), _) | (Ok(_), Err(e)) => Err(e),
        }
    })
}

/// Fresh per-slot masks drawn uniformly from `[1, 100]`.
pub(crate) fn draw_mask(rng: &mut ChaCha20Rng, slots: usize) -> Vec<f64> {
    use rand::Rng;
    (0..slots).map(|_| rng.gen_range(1.0..=100.0)).collect()
}

pub(crate) fn rng_from(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}
