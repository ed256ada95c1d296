//! Plaintext stand-in for the HE engine: exact arithmetic, same level,
//! scale and error semantics. Used for differential testing only; it
//! provides no confidentiality.

use rand_chacha::ChaCha20Rng;

use super::backend::{HeBackend, SecretBackend};
use super::{HeError, HeParams};
use crate::bytes::{put_f64, put_u16, put_u32, Reader};

const ORACLE_CT_MAGIC: &[u8; 4] = b"PLCT";
const ORACLE_PK_MAGIC: &[u8; 4] = b"PLPK";

/// Slot values in the clear; slots past `values.len()` are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct PlainCt {
    pub values: Vec<f64>,
    pub level: usize,
    pub scale: f64,
}

#[derive(Clone, Debug)]
pub struct OracleBackend {
    params: HeParams,
    chain: Vec<u64>,
}

impl OracleBackend {
    pub fn new(params: HeParams) -> Result<Self, HeError> {
        params.validate()?;
        let (chain, _) = params.primes();
        Ok(Self { params, chain })
    }

    fn same(a: &PlainCt, b: &PlainCt) -> Result<(), HeError> {
        if a.level != b.level {
            return Err(HeError::LevelMismatch {
                left: a.level,
                right: b.level,
            });
        }
        if a.scale != b.scale {
            return Err(HeError::ScaleMismatch {
                left: a.scale,
                right: b.scale,
            });
        }
        Ok(())
    }

    fn need_level(a: &PlainCt) -> Result<(), HeError> {
        if a.level == 0 {
            Err(HeError::LevelExhausted { level: 0 })
        } else {
            Ok(())
        }
    }

    fn zip_with(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let n = a.len().max(b.len());
        (0..n)
            .map(|i| f(a.get(i).copied().unwrap_or(0.0), b.get(i).copied().unwrap_or(0.0)))
            .collect()
    }
}

impl HeBackend for OracleBackend {
    type Ciphertext = PlainCt;

    fn params(&self) -> &HeParams {
        &self.params
    }

    fn encrypt(&self, values: &[f64], _rng: &mut ChaCha20Rng) -> Result<PlainCt, HeError> {
        if values.len() > self.slots() {
            return Err(HeError::TooManySlots {
                given: values.len(),
                slots: self.slots(),
            });
        }
        Ok(PlainCt {
            values: values.to_vec(),
            level: self.max_level(),
            scale: self.params.scale,
        })
    }

    fn add(&self, a: &PlainCt, b: &PlainCt) -> Result<PlainCt, HeError> {
        Self::same(a, b)?;
        Ok(PlainCt {
            values: Self::zip_with(&a.values, &b.values, |x, y| x + y),
            ..a.clone()
        })
    }

    fn add_const(&self, a: &PlainCt, c: f64) -> Result<PlainCt, HeError> {
        let mut values = a.values.clone();
        values.resize(self.slots(), 0.0);
        values.iter_mut().for_each(|v| *v += c);
        Ok(PlainCt { values, ..a.clone() })
    }

    fn mul_const(&self, a: &PlainCt, c: f64) -> Result<PlainCt, HeError> {
        Self::need_level(a)?;
        Ok(PlainCt {
            values: a.values.iter().map(|v| v * c).collect(),
            level: a.level - 1,
            scale: a.scale,
        })
    }

    fn mul_plain(&self, a: &PlainCt, values: &[f64]) -> Result<PlainCt, HeError> {
        Self::need_level(a)?;
        if values.len() > self.slots() {
            return Err(HeError::TooManySlots {
                given: values.len(),
                slots: self.slots(),
            });
        }
        Ok(PlainCt {
            values: Self::zip_with(&a.values, values, |x, y| x * y),
            level: a.level - 1,
            scale: a.scale,
        })
    }

    fn mul(&self, a: &PlainCt, b: &PlainCt) -> Result<PlainCt, HeError> {
        self.dot_ct_ct(std::slice::from_ref(a), std::slice::from_ref(b))
    }

    fn dot_ct_pt(&self, cts: &[PlainCt], plains: &[f64]) -> Result<PlainCt, HeError> {
        if cts.len() != plains.len() || cts.is_empty() {
            return Err(HeError::DimensionMismatch {
                left: cts.len(),
                right: plains.len(),
            });
        }
        for c in &cts[1..] {
            Self::same(&cts[0], c)?;
        }
        Self::need_level(&cts[0])?;
        let mut acc: Vec<f64> = Vec::new();
        for (c, &w) in cts.iter().zip(plains) {
            acc = Self::zip_with(&acc, &c.values, |x, y| x + w * y);
        }
        Ok(PlainCt {
            values: acc,
            level: cts[0].level - 1,
            scale: cts[0].scale,
        })
    }

    fn dot_ct_ct(&self, a: &[PlainCt], b: &[PlainCt]) -> Result<PlainCt, HeError> {
        if a.len() != b.len() || a.is_empty() {
            return Err(HeError::DimensionMismatch {
                left: a.len(),
                right: b.len(),
            });
        }
        let level = a[0].level;
        let (sa, sb) = (a[0].scale, b[0].scale);
        for (x, y) in a.iter().zip(b) {
            if x.level != level || y.level != level {
                return Err(HeError::LevelMismatch {
                    left: x.level,
                    right: y.level,
                });
            }
            if x.scale != sa || y.scale != sb {
                return Err(HeError::ScaleMismatch {
                    left: x.scale,
                    right: y.scale,
                });
            }
        }
        Self::need_level(&a[0])?;
        let new_scale = sa * sb / self.chain[level] as f64;
        if !(1.0..self.chain[0] as f64 / 16.0).contains(&new_scale) {
            return Err(HeError::ScaleOverflow { scale: new_scale });
        }
        let mut acc: Vec<f64> = Vec::new();
        for (x, y) in a.iter().zip(b) {
            let prod = Self::zip_with(&x.values, &y.values, |p, q| p * q);
            acc = Self::zip_with(&acc, &prod, |p, q| p + q);
        }
        Ok(PlainCt {
            values: acc,
            level: level - 1,
            scale: new_scale,
        })
    }

    fn drop_to_level(&self, a: &PlainCt, level: usize) -> Result<PlainCt, HeError> {
        if level > a.level {
            return Err(HeError::LevelMismatch {
                left: a.level,
                right: level,
            });
        }
        Ok(PlainCt { level, ..a.clone() })
    }

    fn level(&self, a: &PlainCt) -> usize {
        a.level
    }

    fn serialize(&self, a: &PlainCt, _compress: bool) -> Vec<u8> {
        let mut out = Vec::with_capacity(17 + 8 * a.values.len());
        out.extend_from_slice(ORACLE_CT_MAGIC);
        out.push(a.level as u8);
        put_f64(&mut out, a.scale);
        put_u32(&mut out, a.values.len() as u32);
        for &v in &a.values {
            put_f64(&mut out, v);
        }
        out
    }

    fn deserialize(&self, bytes: &[u8]) -> Result<(PlainCt, usize), HeError> {
        let short = |_| HeError::Malformed("truncated oracle ciphertext".into());
        let mut r = Reader::new(bytes);
        if r.take(4).map_err(short)? != ORACLE_CT_MAGIC {
            return Err(HeError::Malformed("bad oracle magic".into()));
        }
        let level = r.u8().map_err(short)? as usize;
        let scale = r.f64().map_err(short)?;
        let len = r.u32().map_err(short)? as usize;
        if level > self.max_level() || len > self.slots() {
            return Err(HeError::Malformed("oracle header out of range".into()));
        }
        let values = (0..len).map(|_| r.f64().map_err(short)).collect::<Result<_, _>>()?;
        Ok((PlainCt { values, level, scale }, r.position()))
    }

    fn export_public(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(ORACLE_PK_MAGIC);
        put_u16(&mut out, 1);
        out.extend_from_slice(&serde_json::to_vec(&self.params).expect("params serialize"));
        out
    }

    fn import_public(bytes: &[u8]) -> Result<Self, HeError> {
        if bytes.len() < 6 || &bytes[..4] != ORACLE_PK_MAGIC {
            return Err(HeError::Malformed("bad oracle key magic".into()));
        }
        let params: HeParams = serde_json::from_slice(&bytes[6..])
            .map_err(|e| HeError::Malformed(format!("params: {e}")))?;
        Self::new(params)
    }
}

impl SecretBackend for OracleBackend {
    type Public = OracleBackend;

    fn public(&self) -> &OracleBackend {
        self
    }

    fn decrypt(&self, ct: &PlainCt) -> Vec<f64> {
        let mut v = ct.values.clone();
        v.resize(self.slots(), 0.0);
        v
    }
}
