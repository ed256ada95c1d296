//! High-probability noise bounds in the canonical embedding.
//!
//! All quantities are in integer units of the plaintext polynomial, i.e. a
//! slot value `v` at scale `s` contributes `|v| * s`.

use serde::{Deserialize, Serialize};

use super::params::Context;

/// Running bounds carried by every ciphertext.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimate {
    /// Bound on the canonical norm of the plaintext polynomial.
    pub message: f64,
    /// Bound on the canonical norm of the noise polynomial.
    pub noise: f64,
}

impl NoiseEstimate {
    /// Used for ciphertexts whose history is unknown (e.g. deserialized).
    pub const UNKNOWN: Self = Self {
        message: f64::INFINITY,
        noise: f64::INFINITY,
    };
}

/// Measured noise against the tracked bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub measured_noise: f64,
    pub bound: f64,
}

impl NoiseReport {
    pub fn within_bound(&self) -> bool {
        self.measured_noise <= self.bound
    }
}

/// Fresh encryption: `8*sqrt(2)*sigma*N + 6*sigma*sqrt(N) + 16*sigma*sqrt(h*N)`.
pub fn b_clean(ctx: &Context) -> f64 {
    let n = ctx.n as f64;
    let sigma = ctx.params.error_stddev;
    let h = ctx.params.secret_hamming_weight as f64;
    8.0 * 2f64.sqrt() * sigma * n + 6.0 * sigma * n.sqrt() + 16.0 * sigma * (h * n).sqrt()
}

/// Rounding error of a rescale: `sqrt(N/3) * (3 + 8*sqrt(h))`.
pub fn b_scale(ctx: &Context) -> f64 {
    let n = ctx.n as f64;
    let h = ctx.params.secret_hamming_weight as f64;
    (n / 3.0).sqrt() * (3.0 + 8.0 * h.sqrt())
}

/// Key-switching error per unit of decomposed modulus: `8*sigma*N/sqrt(3)`.
pub fn b_ks(ctx: &Context) -> f64 {
    8.0 * ctx.params.error_stddev * ctx.n as f64 / 3f64.sqrt()
}

/// Relinearization error at `level`: `P^{-1} * (sum of digit moduli) * B_ks + B_scale`.
///
/// With RNS digit decomposition each digit is bounded by its own prime, so
/// the single-modulus `q_l` factor becomes the sum of the chain primes.
pub fn b_mult(ctx: &Context, level: usize) -> f64 {
    let digits: f64 = ctx.moduli[..=level].iter().map(|m| m.value() as f64).sum();
    digits / ctx.special.value() as f64 * b_ks(ctx) + b_scale(ctx)
}

/// Noise of a ciphertext product before relinearization: `v1*B2 + v2*B1 + B1*B2`.
pub fn b_mu(a: &NoiseEstimate, b: &NoiseEstimate) -> f64 {
    a.message * b.noise + b.message * a.noise + a.noise * b.noise
}

/// Dot product with plaintext weights, before rescale: `d * max||a||can * B`.
pub fn dot_plain_bound(d: usize, max_weight_norm: f64, max_noise: f64) -> f64 {
    d as f64 * max_weight_norm * max_noise
}

/// Dot product of ciphertexts, before rescale: `d * B_mu + d * B_mult(l)`.
pub fn dot_cipher_bound(ctx: &Context, d: usize, max_b_mu: f64, level: usize) -> f64 {
    d as f64 * max_b_mu + d as f64 * b_mult(ctx, level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckks::params::HeParams;

    #[test]
    fn default_constants() {
        let ctx = Context::new(HeParams::default()).unwrap();
        let n = 8192f64;
        let expected = 8.0 * 2f64.sqrt() * 3.2 * n + 6.0 * 3.2 * n.sqrt() + 16.0 * 3.2 * (64.0 * n).sqrt();
        assert!((b_clean(&ctx) - expected).abs() < 1e-6);
        assert!((b_scale(&ctx) - (n / 3.0).sqrt() * 67.0).abs() < 1e-9);
        assert!((b_ks(&ctx) - 8.0 * 3.2 * n / 3f64.sqrt()).abs() < 1e-9);
        assert!(b_mult(&ctx, 2) > b_scale(&ctx));
    }
}
