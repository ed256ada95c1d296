//! Binary encodings of ciphertexts and key material.
//!
//! Ciphertext (`CKCT`): magic, version u16, flags u8, N u32, level u8,
//! scale f64, num_moduli u8, then `c0` and `c1` residues (u64 LE, modulus
//! by modulus). With the zstd flag the residue block is compressed and
//! preceded by its compressed length (u32).

use std::io::Read as _;

use super::ciphertext::Ciphertext;
use super::keys::{KeySet, PublicKey, RelinKey, SecretKey};
use super::noise::NoiseEstimate;
use super::params::{Context, HeParams};
use super::poly::RnsPoly;
use super::HeError;
use crate::bytes::{put_f64, put_u16, put_u32, put_u64, Reader, ShortRead};

pub const CIPHERTEXT_MAGIC: &[u8; 4] = b"CKCT";
pub const PUBLIC_MAGIC: &[u8; 4] = b"CKPK";
pub const KEYFILE_MAGIC: &[u8; 4] = b"CKKY";
pub const VERSION: u16 = 1;
pub const FLAG_ZSTD: u8 = 1;
pub const FLAG_NTT: u8 = 2;
const HEADER_LEN: usize = 4 + 2 + 1 + 4 + 1 + 8 + 1;

impl From<ShortRead> for HeError {
    fn from(_: ShortRead) -> Self {
        HeError::Malformed("unexpected end of data".into())
    }
}

fn malformed(msg: impl Into<String>) -> HeError {
    HeError::Malformed(msg.into())
}

/// Uncompressed size of a ciphertext at `level`.
pub fn ciphertext_len(n: usize, level: usize) -> usize {
    HEADER_LEN + 2 * (level + 1) * n * 8
}

fn put_residues(out: &mut Vec<u8>, polys: &[&RnsPoly]) {
    for p in polys {
        for r in &p.residues {
            for &x in r {
                put_u64(out, x);
            }
        }
    }
}

pub fn serialize_ciphertext(ct: &Ciphertext, compress: bool) -> Vec<u8> {
    let n = ct.c0.residues[0].len();
    let mut out = Vec::with_capacity(ciphertext_len(n, ct.level));
    out.extend_from_slice(CIPHERTEXT_MAGIC);
    put_u16(&mut out, VERSION);
    out.push(FLAG_NTT | if compress { FLAG_ZSTD } else { 0 });
    put_u32(&mut out, n as u32);
    out.push(ct.level as u8);
    put_f64(&mut out, ct.scale);
    out.push(ct.num_moduli() as u8);
    if compress {
        let mut body = Vec::with_capacity(2 * ct.num_moduli() * n * 8);
        put_residues(&mut body, &[&ct.c0, &ct.c1]);
        let packed = zstd::bulk::compress(&body, 3).expect("in-memory compression");
        put_u32(&mut out, packed.len() as u32);
        out.extend_from_slice(&packed);
    } else {
        put_residues(&mut out, &[&ct.c0, &ct.c1]);
    }
    out
}

fn read_residues(r: &mut Reader<'_>, ctx: &Context, count: usize, n: usize) -> Result<Vec<Vec<u64>>, HeError> {
    (0..count)
        .map(|j| {
            let q = ctx.moduli[j].value();
            let raw = r.take(n * 8)?;
            raw.chunks_exact(8)
                .map(|c| {
                    let x = u64::from_le_bytes(c.try_into().expect("8 bytes"));
                    if x < q {
                        Ok(x)
                    } else {
                        Err(malformed("residue out of range"))
                    }
                })
                .collect()
        })
        .collect()
}

/// Parses one ciphertext from the front of `bytes`; returns it with the
/// number of bytes consumed.
pub fn deserialize_ciphertext(ctx: &Context, bytes: &[u8]) -> Result<(Ciphertext, usize), HeError> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != CIPHERTEXT_MAGIC {
        return Err(malformed("bad ciphertext magic"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(malformed(format!("unsupported ciphertext version {version}")));
    }
    let flags = r.u8()?;
    let n = r.u32()? as usize;
    if n != ctx.n {
        return Err(malformed(format!("ring degree {n} does not match {}", ctx.n)));
    }
    let level = r.u8()? as usize;
    let scale = r.f64()?;
    let num_moduli = r.u8()? as usize;
    if level > ctx.max_level() || num_moduli != level + 1 {
        return Err(malformed("inconsistent level"));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(malformed("bad scale"));
    }
    if flags & FLAG_NTT == 0 {
        return Err(malformed("coefficient-form ciphertexts are not supported"));
    }
    let (c0, c1) = if flags & FLAG_ZSTD != 0 {
        let len = r.u32()? as usize;
        let packed = r.take(len)?;
        let expected = 2 * num_moduli * n * 8;
        let mut body = Vec::with_capacity(expected);
        zstd::stream::read::Decoder::new(packed)
            .and_then(|d| d.take(expected as u64 + 1).read_to_end(&mut body))
            .map_err(|e| malformed(format!("zstd: {e}")))?;
        if body.len() != expected {
            return Err(malformed("decompressed size mismatch"));
        }
        let mut br = Reader::new(&body);
        let c0 = read_residues(&mut br, ctx, num_moduli, n)?;
        let c1 = read_residues(&mut br, ctx, num_moduli, n)?;
        (c0, c1)
    } else {
        let c0 = read_residues(&mut r, ctx, num_moduli, n)?;
        let c1 = read_residues(&mut r, ctx, num_moduli, n)?;
        (c0, c1)
    };
    let ct = Ciphertext {
        c0: RnsPoly { residues: c0, ntt: true },
        c1: RnsPoly { residues: c1, ntt: true },
        level,
        scale,
        used_slots: ctx.slots(),
        noise: NoiseEstimate::UNKNOWN,
    };
    Ok((ct, r.position()))
}

fn put_poly(out: &mut Vec<u8>, p: &RnsPoly) {
    out.push(p.num_moduli() as u8);
    put_residues(out, &[p]);
}

fn read_poly(r: &mut Reader<'_>, n: usize, moduli: &[u64]) -> Result<RnsPoly, HeError> {
    let count = r.u8()? as usize;
    if count != moduli.len() {
        return Err(malformed("unexpected modulus count"));
    }
    let residues = moduli
        .iter()
        .map(|&q| {
            let raw = r.take(n * 8)?;
            raw.chunks_exact(8)
                .map(|c| {
                    let x = u64::from_le_bytes(c.try_into().expect("8 bytes"));
                    if x < q {
                        Ok(x)
                    } else {
                        Err(malformed("key residue out of range"))
                    }
                })
                .collect()
        })
        .collect::<Result<_, HeError>>()?;
    Ok(RnsPoly { residues, ntt: true })
}

fn put_params(out: &mut Vec<u8>, params: &HeParams) {
    let json = serde_json::to_vec(params).expect("params serialize");
    put_u32(out, json.len() as u32);
    out.extend_from_slice(&json);
}

fn read_params(r: &mut Reader<'_>) -> Result<HeParams, HeError> {
    let len = r.u32()? as usize;
    let params: HeParams =
        serde_json::from_slice(r.take(len)?).map_err(|e| malformed(format!("params: {e}")))?;
    params.validate()?;
    Ok(params)
}

fn put_public(out: &mut Vec<u8>, pk: &PublicKey, rlk: Option<&RelinKey>) {
    put_poly(out, &pk.b);
    put_poly(out, &pk.a);
    match rlk {
        Some(rlk) => {
            out.push(rlk.digits.len() as u8);
            for (b, a) in &rlk.digits {
                put_poly(out, b);
                put_poly(out, a);
            }
        }
        None => out.push(0),
    }
}

fn read_public(r: &mut Reader<'_>, params: &HeParams) -> Result<(PublicKey, Option<RelinKey>), HeError> {
    let n = params.ring_degree;
    let (chain, special) = params.primes();
    let b = read_poly(r, n, &chain)?;
    let a = read_poly(r, n, &chain)?;
    let digits = r.u8()? as usize;
    let rlk = if digits == 0 {
        None
    } else {
        if digits != chain.len() {
            return Err(malformed("relinearization key digit count"));
        }
        let mut full = chain.clone();
        full.push(special);
        let digits = (0..digits)
            .map(|_| Ok((read_poly(r, n, &full)?, read_poly(r, n, &full)?)))
            .collect::<Result<_, HeError>>()?;
        Some(RelinKey { digits })
    };
    Ok((PublicKey { b, a }, rlk))
}

/// Parameters, public key and relinearization key, as sent by the querier.
pub fn serialize_public(params: &HeParams, pk: &PublicKey, rlk: Option<&RelinKey>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(PUBLIC_MAGIC);
    put_u16(&mut out, VERSION);
    put_params(&mut out, params);
    put_public(&mut out, pk, rlk);
    out
}

pub fn deserialize_public(bytes: &[u8]) -> Result<(HeParams, PublicKey, Option<RelinKey>), HeError> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != PUBLIC_MAGIC {
        return Err(malformed("bad public key magic"));
    }
    if r.u16()? != VERSION {
        return Err(malformed("unsupported public key version"));
    }
    let params = read_params(&mut r)?;
    let (pk, rlk) = read_public(&mut r, &params)?;
    if r.remaining() != 0 {
        return Err(malformed("trailing bytes after public key"));
    }
    Ok((params, pk, rlk))
}

/// Key file; the secret key is included only when `include_secret` is set.
pub fn serialize_keyset(params: &HeParams, keys: &KeySet, include_secret: bool) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(KEYFILE_MAGIC);
    put_u16(&mut out, VERSION);
    put_params(&mut out, params);
    put_public(&mut out, &keys.public, Some(&keys.relin));
    out.push(include_secret as u8);
    if include_secret {
        out.extend(keys.secret.coefficients().iter().map(|&c| c as i8 as u8));
    }
    out
}

/// Parsed key file contents.
pub struct KeyFile {
    pub params: HeParams,
    pub public: PublicKey,
    pub relin: Option<RelinKey>,
    pub secret: Option<SecretKey>,
}

pub fn deserialize_keyset(bytes: &[u8]) -> Result<KeyFile, HeError> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != KEYFILE_MAGIC {
        return Err(malformed("bad key file magic"));
    }
    if r.u16()? != VERSION {
        return Err(malformed("unsupported key file version"));
    }
    let params = read_params(&mut r)?;
    let (public, relin) = read_public(&mut r, &params)?;
    let secret = if r.u8()? == 1 {
        let raw = r.take(params.ring_degree)?;
        let coeffs: Vec<i64> = raw.iter().map(|&b| b as i8 as i64).collect();
        if coeffs.iter().any(|c| c.abs() > 1) {
            return Err(malformed("secret key is not ternary"));
        }
        let ctx = Context::new(params.clone())?;
        Some(SecretKey::from_coeffs(&ctx, coeffs))
    } else {
        None
    };
    Ok(KeyFile {
        params,
        public,
        relin,
        secret,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckks::{CkksDecryptor, CkksEvaluator};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::sync::Arc;

    fn small() -> (Arc<Context>, KeySet) {
        let ctx = Arc::new(
            Context::new(HeParams {
                ring_degree: 256,
                ..HeParams::default()
            })
            .unwrap(),
        );
        let keys = KeySet::generate(&ctx, 3);
        (ctx, keys)
    }

    #[test]
    fn ciphertext_roundtrip_both_modes() {
        let (ctx, keys) = small();
        let ev = CkksEvaluator::from_keys(ctx.clone(), &keys);
        let dec = CkksDecryptor::from_keys(ctx.clone(), &keys);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let ct = ev.encrypt(&[0.25, -0.5], &mut rng).unwrap();
        let ct = ev.mul_const(&ct, 2.0).unwrap();
        for compress in [false, true] {
            let bytes = serialize_ciphertext(&ct, compress);
            if !compress {
                assert_eq!(bytes.len(), ciphertext_len(256, ct.level));
            }
            let (back, used) = deserialize_ciphertext(&ctx, &bytes).unwrap();
            assert_eq!(used, bytes.len());
            assert_eq!(back.c0, ct.c0);
            assert_eq!(back.c1, ct.c1);
            assert_eq!(back.scale, ct.scale);
            let v = dec.decrypt(&back);
            assert!((v[0] - 0.5).abs() < 1e-6 && (v[1] + 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn truncated_and_corrupt_rejected() {
        let (ctx, keys) = small();
        let ev = CkksEvaluator::from_keys(ctx.clone(), &keys);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let bytes = serialize_ciphertext(&ev.encrypt(&[1.0], &mut rng).unwrap(), false);
        assert!(deserialize_ciphertext(&ctx, &bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(deserialize_ciphertext(&ctx, &bad).is_err());
        let mut bad = bytes;
        bad[HEADER_LEN..HEADER_LEN + 8].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(deserialize_ciphertext(&ctx, &bad).is_err());
    }

    #[test]
    fn key_material_roundtrip() {
        let (ctx, keys) = small();
        let bytes = serialize_public(&ctx.params, &keys.public, Some(&keys.relin));
        let (params, pk, rlk) = deserialize_public(&bytes).unwrap();
        assert_eq!(params, ctx.params);
        assert_eq!(pk, keys.public);
        assert_eq!(rlk.unwrap(), keys.relin);

        let public_only = serialize_keyset(&ctx.params, &keys, false);
        assert!(deserialize_keyset(&public_only).unwrap().secret.is_none());
        let with_secret = serialize_keyset(&ctx.params, &keys, true);
        let kf = deserialize_keyset(&with_secret).unwrap();
        assert_eq!(kf.secret.unwrap().coefficients(), keys.secret.coefficients());
    }
}
