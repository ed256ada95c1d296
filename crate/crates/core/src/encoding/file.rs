//! `MHSG` signature files: a 16-byte header followed by `u32` values.
//!
//! Header: magic `MHSG`, version u16, P u16, max_hash u32, fingerprint u32.

use std::io::{Read, Write};

use super::{EncodingError, EncodingParams, MinHashSignature};
use crate::bytes::{put_u16, put_u32, Reader};

pub const SIGNATURE_MAGIC: &[u8; 4] = b"MHSG";
const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignatureFile {
    pub num_permutations: usize,
    pub max_hash: u32,
    pub fingerprint: u32,
    pub signatures: Vec<Vec<u32>>,
}

impl SignatureFile {
    pub fn new(params: &EncodingParams, signatures: Vec<Vec<u32>>) -> Self {
        Self {
            num_permutations: params.num_permutations,
            max_hash: params.max_hash,
            fingerprint: params.fingerprint(),
            signatures,
        }
    }

    /// Whether the file was produced with `params`.
    pub fn matches(&self, params: &EncodingParams) -> bool {
        self.fingerprint == params.fingerprint()
            && self.num_permutations == params.num_permutations
            && self.max_hash == params.max_hash
    }

    pub fn to_signatures(&self) -> Vec<MinHashSignature> {
        self.signatures
            .iter()
            .map(|v| MinHashSignature {
                values: v.clone(),
                params_fingerprint: self.fingerprint,
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.num_permutations * self.signatures.len());
        out.extend_from_slice(SIGNATURE_MAGIC);
        put_u16(&mut out, VERSION);
        put_u16(&mut out, self.num_permutations as u16);
        put_u32(&mut out, self.max_hash);
        put_u32(&mut out, self.fingerprint);
        for s in &self.signatures {
            debug_assert_eq!(s.len(), self.num_permutations);
            for &v in s {
                put_u32(&mut out, v);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EncodingError> {
        let fmt = |m: &str| EncodingError::Format(m.to_string());
        let mut r = Reader::new(bytes);
        let short = |_| fmt("truncated header");
        if r.take(4).map_err(short)? != SIGNATURE_MAGIC {
            return Err(fmt("bad magic"));
        }
        let version = r.u16().map_err(short)?;
        if version != VERSION {
            return Err(fmt("unsupported version"));
        }
        let p = r.u16().map_err(short)? as usize;
        let max_hash = r.u32().map_err(short)?;
        let fingerprint = r.u32().map_err(short)?;
        if p == 0 {
            return Err(fmt("zero signature length"));
        }
        let body = r.remaining();
        if body % (4 * p) != 0 {
            return Err(fmt("body is not a whole number of signatures"));
        }
        let mut signatures = Vec::with_capacity(body / (4 * p));
        for _ in 0..body / (4 * p) {
            let sig: Vec<u32> = (0..p).map(|_| r.u32().expect("length checked")).collect();
            if sig.iter().any(|&v| v >= max_hash) {
                return Err(fmt("value outside hash range"));
            }
            signatures.push(sig);
        }
        Ok(Self {
            num_permutations: p,
            max_hash,
            fingerprint,
            signatures,
        })
    }
}

pub fn write_signatures<W: Write>(w: &mut W, file: &SignatureFile) -> Result<(), EncodingError> {
    w.write_all(&file.to_bytes())
        .map_err(|e| EncodingError::Io(e.to_string()))
}

pub fn read_signatures<R: Read>(r: &mut R) -> Result<SignatureFile, EncodingError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)
        .map_err(|e| EncodingError::Io(e.to_string()))?;
    SignatureFile::from_bytes(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::MinHasher;

    #[test]
    fn roundtrip_and_header_layout() {
        let params = EncodingParams {
            num_permutations: 4,
            ..EncodingParams::default()
        };
        let h = MinHasher::new(params.clone()).unwrap();
        let sigs: Vec<Vec<u32>> = ["ann lee", "bo li", "cy young"]
            .iter()
            .map(|n| h.signature(n).unwrap().values)
            .collect();
        let f = SignatureFile::new(&params, sigs);
        let bytes = f.to_bytes();
        assert_eq!(bytes.len(), 16 + 3 * 4 * 4);
        assert_eq!(&bytes[..4], b"MHSG");
        assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 4);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), params.fingerprint());
        let back = SignatureFile::from_bytes(&bytes).unwrap();
        assert_eq!(back, f);
        assert!(back.matches(&params));
        assert!(!back.matches(&EncodingParams { seed: 1, ..params }));
    }

    #[test]
    fn empty_file_is_valid() {
        let f = SignatureFile::new(&EncodingParams::default(), vec![]);
        assert_eq!(f.to_bytes().len(), 16);
        assert!(SignatureFile::from_bytes(&f.to_bytes()).unwrap().signatures.is_empty());
    }

    #[test]
    fn rejects_garbage() {
        assert!(SignatureFile::from_bytes(b"MHS").is_err());
        let mut b = SignatureFile::new(&EncodingParams { num_permutations: 2, ..Default::default() }, vec![vec![1, 2]]).to_bytes();
        b.pop();
        assert!(SignatureFile::from_bytes(&b).is_err());
    }
}
