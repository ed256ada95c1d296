use super::noise::NoiseEstimate;
use super::poly::RnsPoly;

/// Encoded message at a given level and scale.
#[derive(Clone, Debug)]
pub struct Plaintext {
    /// NTT form over `q_0..q_level`.
    pub poly: RnsPoly,
    pub scale: f64,
    pub level: usize,
    /// Canonical norm of the encoded polynomial.
    pub norm: f64,
    pub used_slots: usize,
}

/// A degree-one ciphertext `(c0, c1)` in NTT form over `q_0..q_level`.
#[derive(Clone, Debug)]
pub struct Ciphertext {
    pub c0: RnsPoly,
    pub c1: RnsPoly,
    pub level: usize,
    pub scale: f64,
    /// Number of leading slots carrying logical values; the rest are zero.
    pub used_slots: usize,
    pub noise: NoiseEstimate,
}

impl Ciphertext {
    pub fn num_moduli(&self) -> usize {
        self.level + 1
    }
}
