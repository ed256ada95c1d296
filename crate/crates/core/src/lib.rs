//! Fuzzy name matching between two parties: MinHash signatures, a k-means
//! column layout over the responder's records, and leveled approximate HE
//! for the encrypted scoring.

mod bytes;
pub mod ckks;
pub mod clustering;
pub mod encoding;
pub mod eval;
pub mod protocol;
pub mod transport;

pub use ckks::{Ciphertext, CkksBackend, CkksSecret, HeBackend, HeError, HeParams, SecretBackend};
pub use clustering::{ClusterConfig, ClusterModel};
pub use encoding::{DualEncoder, EncodingParams, MinHashSignature, MinHasher};
pub use protocol::{run_protocol, MatchVerdict, ProtocolConfig, ProtocolError, Querier, Responder, SessionOptions};
pub use transport::{Channel, ChannelConfig, Frame, MsgType, TranscriptLog};
