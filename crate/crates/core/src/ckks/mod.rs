//! Leveled approximate homomorphic encryption over `Z[X]/(X^N + 1)` with an
//! RNS modulus chain, plus a plaintext backend with the same interface.

mod backend;
mod ciphertext;
mod encoder;
mod evaluator;
mod keys;
pub mod modarith;
pub mod noise;
pub mod ntt;
mod oracle;
mod params;
pub mod poly;
pub mod serialize;

use thiserror::Error;

pub use backend::{CkksBackend, CkksSecret, HeBackend, SecretBackend};
pub use ciphertext::{Ciphertext, Plaintext};
pub use encoder::Encoder;
pub use evaluator::{CkksDecryptor, CkksEvaluator};
pub use keys::{KeySet, PublicKey, RelinKey, SecretKey};
pub use noise::{NoiseEstimate, NoiseReport};
pub use oracle::{OracleBackend, PlainCt};
pub use params::{Context, HeParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeError {
    #[error("invalid HE parameters: {0}")]
    InvalidParams(String),
    #[error("{given} values exceed the {slots} available slots")]
    TooManySlots { given: usize, slots: usize },
    #[error("no level left for multiplication (level {level})")]
    LevelExhausted { level: usize },
    #[error("level mismatch: {left} vs {right}")]
    LevelMismatch { left: usize, right: usize },
    #[error("scale mismatch: {left} vs {right}")]
    ScaleMismatch { left: f64, right: f64 },
    #[error("scale {scale} out of the representable range")]
    ScaleOverflow { scale: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("relinearization key required for ciphertext multiplication")]
    MissingRelinKey,
    #[error("malformed serialized data: {0}")]
    Malformed(String),
}
