//! MinHash signatures over character shingles, plus the normalization and
//! standardization steps applied before encryption.

mod file;

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use file::{read_signatures, write_signatures, SignatureFile, SIGNATURE_MAGIC};

/// Modulus of the universal hash family (`2^61 - 1`).
pub const HASH_PRIME: u64 = (1 << 61) - 1;

/// Floor applied to per-coordinate standard deviations.
pub const STD_FLOOR: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodingError {
    #[error("name {name:?} has {len} characters, fewer than the shingle size {shingle_size}")]
    NameTooShort {
        name: String,
        len: usize,
        shingle_size: usize,
    },
    #[error("cannot normalize an all-zero vector")]
    ZeroVector,
    #[error("cannot fit a scaler on an empty dataset")]
    EmptyDataset,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid encoding parameters: {0}")]
    InvalidParams(String),
    #[error("signature file: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
}

/// Shared MinHash configuration.
///
/// `first_index` selects which members of the seeded hash family are used:
/// hashes `first_index .. first_index + num_permutations`. Two encodings
/// with the same seed and disjoint index ranges are independent sketches of
/// the same shingle set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodingParams {
    pub shingle_size: usize,
    pub num_permutations: usize,
    pub max_hash: u32,
    pub seed: u64,
    #[serde(default)]
    pub first_index: usize,
}

impl Default for EncodingParams {
    fn default() -> Self {
        Self {
            shingle_size: 3,
            num_permutations: 200,
            max_hash: 1 << 20,
            seed: 0x5eed,
            first_index: 0,
        }
    }
}

impl EncodingParams {
    pub fn validate(&self) -> Result<(), EncodingError> {
        if self.shingle_size == 0 {
            return Err(EncodingError::InvalidParams("shingle_size must be >= 1".into()));
        }
        if self.num_permutations == 0 || self.num_permutations > u16::MAX as usize {
            return Err(EncodingError::InvalidParams(
                "num_permutations must be in 1..=65535".into(),
            ));
        }
        if self.max_hash < 2 {
            return Err(EncodingError::InvalidParams("max_hash must be >= 2".into()));
        }
        Ok(())
    }

    /// Same family, a different index window.
    pub fn window(&self, first_index: usize, num_permutations: usize) -> Self {
        Self {
            first_index,
            num_permutations,
            ..self.clone()
        }
    }

    /// Sorted `key=value` lines; the input to the fingerprint digest.
    pub fn canonical_text(&self) -> String {
        format!(
            "first_index={}\nmax_hash={}\nnum_permutations={}\nseed={}\nshingle_size={}\n",
            self.first_index, self.max_hash, self.num_permutations, self.seed, self.shingle_size
        )
    }

    /// First four bytes (little-endian) of SHA-256 of the canonical text.
    pub fn fingerprint(&self) -> u32 {
        let d = Sha256::digest(self.canonical_text().as_bytes());
        u32::from_le_bytes([d[0], d[1], d[2], d[3]])
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShingleSet {
    pub shingles: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MinHashSignature {
    pub values: Vec<u32>,
    pub params_fingerprint: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedSignature {
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// Trims surrounding whitespace and lowercases.
pub fn preprocess(name: &str) -> String {
    name.trim().to_lowercase()
}

/// All windows of `shingle_size` characters, exactly as given.
pub fn generate_shingles(name: &str, params: &EncodingParams) -> Result<ShingleSet, EncodingError> {
    let chars: Vec<char> = name.chars().collect();
    let s = params.shingle_size;
    if chars.len() < s {
        return Err(EncodingError::NameTooShort {
            name: name.to_string(),
            len: chars.len(),
            shingle_size: s,
        });
    }
    let shingles = chars.windows(s).map(|w| w.iter().collect()).collect();
    Ok(ShingleSet { shingles })
}

/// SHA-256 of the shingle's UTF-8 bytes, first eight bytes little-endian.
pub fn base_hash(shingle: &str) -> u64 {
    let d = Sha256::digest(shingle.as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

/// Precomputed hash family for one [`EncodingParams`].
#[derive(Clone, Debug)]
pub struct MinHasher {
    params: EncodingParams,
    coeffs: Vec<(u64, u64)>,
    fingerprint: u32,
}

impl MinHasher {
    pub fn new(params: EncodingParams) -> Result<Self, EncodingError> {
        params.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
        let total = params.first_index + params.num_permutations;
        let all: Vec<(u64, u64)> = (0..total)
            .map(|_| (rng.gen_range(1..HASH_PRIME), rng.gen_range(0..HASH_PRIME)))
            .collect();
        Ok(Self {
            fingerprint: params.fingerprint(),
            coeffs: all[params.first_index..].to_vec(),
            params,
        })
    }

    pub fn params(&self) -> &EncodingParams {
        &self.params
    }

    #[inline]
    fn hash(&self, i: usize, x: u64) -> u32 {
        let (a, b) = self.coeffs[i];
        let h = (a as u128 * x as u128 + b as u128) % HASH_PRIME as u128;
        (h % self.params.max_hash as u128) as u32
    }

    /// Signature of an already-shingled set.
    pub fn signature_of(&self, set: &ShingleSet) -> MinHashSignature {
        let bases: Vec<u64> = set.shingles.iter().map(|s| base_hash(s)).collect();
        let values = (0..self.params.num_permutations)
            .map(|i| bases.iter().map(|&x| self.hash(i, x)).min().expect("non-empty set"))
            .collect();
        MinHashSignature {
            values,
            params_fingerprint: self.fingerprint,
        }
    }

    /// Preprocesses, shingles and hashes `name`.
    pub fn signature(&self, name: &str) -> Result<MinHashSignature, EncodingError> {
        let set = generate_shingles(&preprocess(name), &self.params)?;
        Ok(self.signature_of(&set))
    }
}

/// One-shot signature; prefer [`MinHasher`] when encoding many names.
pub fn minhash_signature(name: &str, params: &EncodingParams) -> Result<MinHashSignature, EncodingError> {
    MinHasher::new(params.clone())?.signature(name)
}

pub fn normalize(sig: &MinHashSignature) -> Result<NormalizedSignature, EncodingError> {
    let v: Vec<f64> = sig.values.iter().map(|&x| x as f64).collect();
    normalize_vec(&v)
}

pub fn normalize_vec(v: &[f64]) -> Result<NormalizedSignature, EncodingError> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(EncodingError::ZeroVector);
    }
    Ok(NormalizedSignature {
        values: v.iter().map(|x| x / norm).collect(),
    })
}

/// Per-coordinate mean and population standard deviation.
pub fn fit_scaler(dataset: &[NormalizedSignature]) -> Result<ScalerParams, EncodingError> {
    let first = dataset.first().ok_or(EncodingError::EmptyDataset)?;
    let p = first.values.len();
    let n = dataset.len() as f64;
    let mut means = vec![0.0; p];
    for s in dataset {
        if s.values.len() != p {
            return Err(EncodingError::DimensionMismatch {
                expected: p,
                got: s.values.len(),
            });
        }
        for (m, x) in means.iter_mut().zip(&s.values) {
            *m += x;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut vars = vec![0.0; p];
    for s in dataset {
        for ((v, x), m) in vars.iter_mut().zip(&s.values).zip(&means) {
            *v += (x - m) * (x - m);
        }
    }
    let stds = vars.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
    Ok(ScalerParams { means, stds })
}

/// `(x - mean) / std` per coordinate; not re-normalized.
pub fn standardize(sig: &NormalizedSignature, scaler: &ScalerParams) -> Result<Vec<f64>, EncodingError> {
    if sig.values.len() != scaler.means.len() || scaler.means.len() != scaler.stds.len() {
        return Err(EncodingError::DimensionMismatch {
            expected: scaler.means.len(),
            got: sig.values.len(),
        });
    }
    Ok(sig
        .values
        .iter()
        .zip(&scaler.means)
        .zip(&scaler.stds)
        .map(|((x, m), s)| (x - m) / s)
        .collect())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity; zero when either side is the zero vector.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// The two sketches every name carries: a long one for clustering and
/// centroid selection, and a short one, from a disjoint hash window, for
/// the final encrypted comparison.
#[derive(Clone, Debug)]
pub struct DualEncoder {
    pub centroid: MinHasher,
    pub matching: MinHasher,
}

/// Both sketches of one name, normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct DualSignature {
    pub centroid: NormalizedSignature,
    pub matching: NormalizedSignature,
}

impl DualEncoder {
    /// `base` supplies shingle size, hash range and seed; the centroid
    /// window is `0..centroid_len`, the match window follows it.
    pub fn new(base: &EncodingParams, centroid_len: usize, match_len: usize) -> Result<Self, EncodingError> {
        Ok(Self {
            centroid: MinHasher::new(base.window(0, centroid_len))?,
            matching: MinHasher::new(base.window(centroid_len, match_len))?,
        })
    }

    /// Params of the combined window `0..centroid_len + match_len`.
    pub fn combined_params(&self) -> EncodingParams {
        let c = self.centroid.params();
        c.window(0, c.num_permutations + self.matching.params().num_permutations)
    }

    pub fn encode(&self, name: &str) -> Result<DualSignature, EncodingError> {
        let set = generate_shingles(&preprocess(name), self.centroid.params())?;
        Ok(DualSignature {
            centroid: normalize(&self.centroid.signature_of(&set))?,
            matching: normalize(&self.matching.signature_of(&set))?,
        })
    }

    /// Splits a signature over the combined window into both sketches.
    pub fn split(&self, combined: &MinHashSignature) -> Result<DualSignature, EncodingError> {
        let c = self.centroid.params().num_permutations;
        let m = self.matching.params().num_permutations;
        if combined.values.len() != c + m {
            return Err(EncodingError::DimensionMismatch {
                expected: c + m,
                got: combined.values.len(),
            });
        }
        let part = |v: &[u32]| normalize_vec(&v.iter().map(|&x| x as f64).collect::<Vec<_>>());
        Ok(DualSignature {
            centroid: part(&combined.values[..c])?,
            matching: part(&combined.values[c..])?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn set(v: &[&str]) -> BTreeSet<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn jaccard(a: &ShingleSet, b: &ShingleSet) -> f64 {
        let inter = a.shingles.intersection(&b.shingles).count() as f64;
        let uni = a.shingles.union(&b.shingles).count() as f64;
        inter / uni
    }

    fn agreement(a: &MinHashSignature, b: &MinHashSignature) -> f64 {
        a.values.iter().zip(&b.values).filter(|(x, y)| x == y).count() as f64 / a.values.len() as f64
    }

    #[test]
    fn shingles_keep_case_and_spaces() {
        let p = EncodingParams::default();
        let s = generate_shingles("Mary Janes", &p).unwrap();
        assert_eq!(s.shingles, set(&["Mar", "ary", "ry ", "y J", " Ja", "Jan", "ane", "nes"]));
        assert_eq!(generate_shingles("abc", &p).unwrap().shingles, set(&["abc"]));
        assert_eq!(generate_shingles("aaaa", &p).unwrap().shingles, set(&["aaa"]));
    }

    #[test]
    fn shingles_count_characters_not_bytes() {
        let p = EncodingParams::default();
        let s = generate_shingles("zoë", &p).unwrap();
        assert_eq!(s.shingles, set(&["zoë"]));
    }

    #[test]
    fn too_short() {
        let p = EncodingParams::default();
        assert!(matches!(
            generate_shingles("ab", &p),
            Err(EncodingError::NameTooShort { len: 2, .. })
        ));
        // preprocessing trims before the length check
        assert!(minhash_signature("  ab  ", &p).is_err());
    }

    #[test]
    fn signature_shape_and_determinism() {
        let p = EncodingParams {
            num_permutations: 50,
            ..EncodingParams::default()
        };
        let a = minhash_signature("Mary Janes", &p).unwrap();
        let b = minhash_signature("Mary Janes", &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.values.len(), 50);
        assert!(a.values.iter().all(|&v| v < 1 << 20));
        assert_eq!(a, minhash_signature("  MARY JANES ", &p).unwrap());
    }

    #[test]
    fn universal_hash_matches_independent_formula() {
        let p = EncodingParams {
            num_permutations: 3,
            ..EncodingParams::default()
        };
        let mut rng = ChaCha20Rng::seed_from_u64(p.seed);
        let coeffs: Vec<(u64, u64)> = (0..3)
            .map(|_| (rng.gen_range(1..HASH_PRIME), rng.gen_range(0..HASH_PRIME)))
            .collect();
        let shingles = ["abc", "bcd"];
        let sig = minhash_signature("abcd", &p).unwrap();
        for (i, (a, b)) in coeffs.iter().enumerate() {
            let expected = shingles
                .iter()
                .map(|s| {
                    let x = base_hash(s) as u128;
                    (((*a as u128 * x + *b as u128) % HASH_PRIME as u128) % (1 << 20)) as u32
                })
                .min()
                .unwrap();
            assert_eq!(sig.values[i], expected);
        }
    }

    #[test]
    fn windows_are_disjoint_slices_of_one_family() {
        let base = EncodingParams::default();
        let whole = MinHasher::new(base.window(0, 250)).unwrap().signature("jane doe").unwrap();
        let dual = DualEncoder::new(&base, 200, 50).unwrap();
        let d = dual.encode("jane doe").unwrap();
        assert_eq!(dual.split(&whole).unwrap(), d);
        assert_eq!(dual.combined_params().num_permutations, 250);
    }

    #[test]
    fn fingerprint_depends_on_every_field() {
        let p = EncodingParams::default();
        let variants = [
            EncodingParams { shingle_size: 2, ..p.clone() },
            EncodingParams { num_permutations: 50, ..p.clone() },
            EncodingParams { max_hash: 1 << 16, ..p.clone() },
            EncodingParams { seed: 1, ..p.clone() },
            EncodingParams { first_index: 200, ..p.clone() },
        ];
        for v in variants {
            assert_ne!(v.fingerprint(), p.fingerprint());
        }
        assert!(p.canonical_text().starts_with("first_index=0\nmax_hash=1048576\n"));
    }

    #[test]
    fn jaccard_estimate_for_close_names() {
        let p = EncodingParams::default();
        let a = generate_shingles(&preprocess("Mary Janes"), &p).unwrap();
        let b = generate_shingles(&preprocess("Marie Jones"), &p).unwrap();
        let h = MinHasher::new(p).unwrap();
        let est = agreement(&h.signature_of(&a), &h.signature_of(&b));
        assert!((est - jaccard(&a, &b)).abs() <= 0.15, "{est} vs {}", jaccard(&a, &b));
    }

    #[test]
    fn estimator_error_band() {
        use rand::distributions::Alphanumeric;
        let p = EncodingParams::default();
        let h = MinHasher::new(p.clone()).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let mut total = 0.0;
        let trials = 150;
        for _ in 0..trials {
            let base: String = (0..12).map(|_| rng.sample(Alphanumeric) as char).collect();
            // share a random prefix so Jaccard values spread over (0, 1)
            let keep = rng.gen_range(3..12);
            let tail: String = (0..12 - keep).map(|_| rng.sample(Alphanumeric) as char).collect();
            let other = format!("{}{}", &base[..keep], tail);
            let a = generate_shingles(&preprocess(&base), &p).unwrap();
            let b = generate_shingles(&preprocess(&other), &p).unwrap();
            total += (agreement(&h.signature_of(&a), &h.signature_of(&b)) - jaccard(&a, &b)).abs();
        }
        let mae = total / trials as f64;
        assert!(mae <= 1.5 / (200f64).sqrt(), "{mae}");
    }

    #[test]
    fn normalize_examples() {
        let sig = MinHashSignature {
            values: vec![3, 4],
            params_fingerprint: 0,
        };
        let n = normalize(&sig).unwrap();
        assert!((n.values[0] - 0.6).abs() < 1e-12 && (n.values[1] - 0.8).abs() < 1e-12);
        assert_eq!(normalize_vec(&n.values).unwrap(), n);
        assert_eq!(normalize_vec(&[0.0, 0.0]), Err(EncodingError::ZeroVector));
    }

    #[test]
    fn scaler_examples() {
        let one = NormalizedSignature { values: vec![0.6, 0.8] };
        let s = fit_scaler(std::slice::from_ref(&one)).unwrap();
        assert_eq!(s.means, one.values);
        assert_eq!(s.stds, vec![STD_FLOOR; 2]);

        let d = [
            NormalizedSignature { values: vec![1.0, 0.0] },
            NormalizedSignature { values: vec![0.0, 1.0] },
        ];
        let s = fit_scaler(&d).unwrap();
        assert_eq!(s.means, vec![0.5, 0.5]);
        assert_eq!(s.stds, vec![0.5, 0.5]);
        assert_eq!(fit_scaler(&[]), Err(EncodingError::EmptyDataset));

        let at_mean = NormalizedSignature { values: s.means.clone() };
        assert_eq!(standardize(&at_mean, &s).unwrap(), vec![0.0, 0.0]);
        let ident = ScalerParams { means: vec![0.0; 2], stds: vec![1.0; 2] };
        assert_eq!(standardize(&d[0], &ident).unwrap(), d[0].values);
        assert!(matches!(
            standardize(&NormalizedSignature { values: vec![1.0] }, &s),
            Err(EncodingError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn standardize_matches_two_pass_reference() {
        let h = MinHasher::new(EncodingParams { num_permutations: 20, ..Default::default() }).unwrap();
        let names = ["alice smith", "bob jones", "carol white", "dan brown", "eve black", "fay green"];
        let data: Vec<NormalizedSignature> =
            names.iter().map(|n| normalize(&h.signature(n).unwrap()).unwrap()).collect();
        let scaler = fit_scaler(&data).unwrap();
        // independent two-pass statistics
        let p = 20;
        let n = data.len() as f64;
        for i in 0..p {
            let col: Vec<f64> = data.iter().map(|d| d.values[i]).collect();
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            for d in &data {
                let z = standardize(d, &scaler).unwrap()[i];
                assert!((z - (d.values[i] - mean) / var.sqrt()).abs() < 1e-9);
            }
        }
        for i in 0..p {
            let mean: f64 = data.iter().map(|d| standardize(d, &scaler).unwrap()[i]).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn cosine_of_zero_is_zero() {
        assert_eq!(cosine(&[1.0, 2.0], &[0.0, 0.0]), 0.0);
    }

    proptest! {
        #[test]
        fn normalized_has_unit_norm(name in "[a-z ]{3,40}") {
            prop_assume!(name.trim().chars().count() >= 3);
            let h = MinHasher::new(EncodingParams { num_permutations: 50, ..Default::default() }).unwrap();
            let n = normalize(&h.signature(&name).unwrap()).unwrap();
            prop_assert!((dot(&n.values, &n.values).sqrt() - 1.0).abs() < 1e-9);
            prop_assert!((cosine(&n.values, &n.values) - 1.0).abs() < 1e-9);
        }

        #[test]
        fn shingles_are_substrings(name in "\\PC{3,30}") {
            let p = EncodingParams::default();
            let s = generate_shingles(&name, &p).unwrap();
            prop_assert!(s.shingles.len() <= name.chars().count() - 2);
            for sh in &s.shingles {
                prop_assert!(name.contains(sh.as_str()));
                prop_assert_eq!(sh.chars().count(), 3);
            }
        }
    }
}
