use std::fmt::Debug;
use std::sync::Arc;

use rand_chacha::ChaCha20Rng;

use super::serialize::{deserialize_ciphertext, deserialize_public, serialize_ciphertext, serialize_public, KeyFile};
use super::{Ciphertext, CkksDecryptor, CkksEvaluator, Context, HeError, HeParams, KeySet};

/// Operations available to a party holding only public key material.
///
/// Implemented by the real engine and by a plaintext oracle so protocol code
/// can be run against both and compared.
pub trait HeBackend: Send + Sync + Sized {
    type Ciphertext: Clone + Send + Sync + Debug;

    fn params(&self) -> &HeParams;
    fn slots(&self) -> usize {
        self.params().slots()
    }
    fn max_level(&self) -> usize {
        self.params().max_level()
    }

    fn encrypt(&self, values: &[f64], rng: &mut ChaCha20Rng) -> Result<Self::Ciphertext, HeError>;
    fn add(&self, a: &Self::Ciphertext, b: &Self::Ciphertext) -> Result<Self::Ciphertext, HeError>;
    fn add_const(&self, a: &Self::Ciphertext, c: f64) -> Result<Self::Ciphertext, HeError>;
    fn mul_const(&self, a: &Self::Ciphertext, c: f64) -> Result<Self::Ciphertext, HeError>;
    fn mul_plain(&self, a: &Self::Ciphertext, values: &[f64]) -> Result<Self::Ciphertext, HeError>;
    fn mul(&self, a: &Self::Ciphertext, b: &Self::Ciphertext) -> Result<Self::Ciphertext, HeError>;
    fn dot_ct_pt(&self, cts: &[Self::Ciphertext], plains: &[f64]) -> Result<Self::Ciphertext, HeError>;
    fn dot_ct_ct(&self, a: &[Self::Ciphertext], b: &[Self::Ciphertext]) -> Result<Self::Ciphertext, HeError>;
    fn drop_to_level(&self, a: &Self::Ciphertext, level: usize) -> Result<Self::Ciphertext, HeError>;
    fn level(&self, a: &Self::Ciphertext) -> usize;

    fn serialize(&self, a: &Self::Ciphertext, compress: bool) -> Vec<u8>;
    /// Parses one ciphertext from the front of `bytes`, returning bytes consumed.
    fn deserialize(&self, bytes: &[u8]) -> Result<(Self::Ciphertext, usize), HeError>;

    /// Parameters and evaluation keys, for transfer to the other party.
    fn export_public(&self) -> Vec<u8>;
    fn import_public(bytes: &[u8]) -> Result<Self, HeError>;
}

/// A key holder: can decrypt, and exposes its public half.
pub trait SecretBackend: Send + Sync {
    type Public: HeBackend;

    fn public(&self) -> &Self::Public;
    fn decrypt(&self, ct: &<Self::Public as HeBackend>::Ciphertext) -> Vec<f64>;
}

/// The lattice engine as seen by a public-key holder.
#[derive(Clone, Debug)]
pub struct CkksBackend {
    eval: CkksEvaluator,
}

impl CkksBackend {
    pub fn new(eval: CkksEvaluator) -> Self {
        Self { eval }
    }

    pub fn evaluator(&self) -> &CkksEvaluator {
        &self.eval
    }
}

impl HeBackend for CkksBackend {
    type Ciphertext = Ciphertext;

    fn params(&self) -> &HeParams {
        &self.eval.context().params
    }
    fn encrypt(&self, values: &[f64], rng: &mut ChaCha20Rng) -> Result<Ciphertext, HeError> {
        self.eval.encrypt(values, rng)
    }
    fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
        self.eval.add(a, b)
    }
    fn add_const(&self, a: &Ciphertext, c: f64) -> Result<Ciphertext, HeError> {
        self.eval.add_const(a, c)
    }
    fn mul_const(&self, a: &Ciphertext, c: f64) -> Result<Ciphertext, HeError> {
        self.eval.mul_const(a, c)
    }
    fn mul_plain(&self, a: &Ciphertext, values: &[f64]) -> Result<Ciphertext, HeError> {
        self.eval.mul_plain(a, values)
    }
    fn mul(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
        self.eval.mul(a, b)
    }
    fn dot_ct_pt(&self, cts: &[Ciphertext], plains: &[f64]) -> Result<Ciphertext, HeError> {
        self.eval.dot_ct_pt(cts, plains)
    }
    fn dot_ct_ct(&self, a: &[Ciphertext], b: &[Ciphertext]) -> Result<Ciphertext, HeError> {
        self.eval.dot_ct_ct(a, b)
    }
    fn drop_to_level(&self, a: &Ciphertext, level: usize) -> Result<Ciphertext, HeError> {
        self.eval.drop_to_level(a, level)
    }
    fn level(&self, a: &Ciphertext) -> usize {
        a.level
    }
    fn serialize(&self, a: &Ciphertext, compress: bool) -> Vec<u8> {
        serialize_ciphertext(a, compress)
    }
    fn deserialize(&self, bytes: &[u8]) -> Result<(Ciphertext, usize), HeError> {
        deserialize_ciphertext(self.eval.context(), bytes)
    }
    fn export_public(&self) -> Vec<u8> {
        serialize_public(self.params(), self.eval.public_key(), self.eval.relin_key())
    }
    fn import_public(bytes: &[u8]) -> Result<Self, HeError> {
        let (params, pk, rlk) = deserialize_public(bytes)?;
        let ctx = Arc::new(Context::new(params)?);
        Ok(Self::new(CkksEvaluator::new(ctx, pk, rlk)))
    }
}

/// Full key set: public operations plus decryption.
#[derive(Clone, Debug)]
pub struct CkksSecret {
    backend: CkksBackend,
    dec: CkksDecryptor,
}

impl CkksSecret {
    pub fn generate(params: HeParams, seed: u64) -> Result<Self, HeError> {
        let ctx = Arc::new(Context::new(params)?);
        let keys = KeySet::generate(&ctx, seed);
        Ok(Self::from_keys(ctx, &keys))
    }

    pub fn from_keys(ctx: Arc<Context>, keys: &KeySet) -> Self {
        Self {
            backend: CkksBackend::new(CkksEvaluator::from_keys(ctx.clone(), keys)),
            dec: CkksDecryptor::from_keys(ctx, keys),
        }
    }

    /// Rebuilds a key holder from a parsed key file; the file must carry
    /// the secret and relinearization keys.
    pub fn from_key_file(file: KeyFile) -> Result<Self, HeError> {
        let secret = file.secret.ok_or_else(|| HeError::Malformed("key file has no secret key".into()))?;
        let relin = file
            .relin
            .ok_or_else(|| HeError::Malformed("key file has no relinearization key".into()))?;
        let ctx = Arc::new(Context::new(file.params)?);
        Ok(Self::from_keys(
            ctx,
            &KeySet {
                secret,
                public: file.public,
                relin,
            },
        ))
    }

    pub fn decryptor(&self) -> &CkksDecryptor {
        &self.dec
    }
}

impl SecretBackend for CkksSecret {
    type Public = CkksBackend;

    fn public(&self) -> &CkksBackend {
        &self.backend
    }
    fn decrypt(&self, ct: &Ciphertext) -> Vec<f64> {
        self.dec.decrypt(ct)
    }
}
