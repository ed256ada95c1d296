use serde::{Deserialize, Serialize};

use super::encoder::Encoder;
use super::modarith::{ntt_primes, Modulus};
use super::ntt::NttTable;
use super::HeError;

/// Public parameters of the approximate HE scheme.
///
/// `modulus_bits` lists the ciphertext modulus chain from `q_0` (the base
/// prime that survives to level 0) up to the top prime. The key-switching
/// prime is separate and sized by `special_modulus_bits`. A chain of length
/// `L + 1` supports `L` rescales.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeParams {
    pub ring_degree: usize,
    pub scale: f64,
    pub modulus_bits: Vec<u32>,
    pub error_stddev: f64,
    pub secret_hamming_weight: usize,
    pub special_modulus_bits: u32,
}

impl Default for HeParams {
    fn default() -> Self {
        Self {
            ring_degree: 8192,
            scale: (1u64 << 40) as f64,
            modulus_bits: vec![60, 40, 40, 60],
            error_stddev: 3.2,
            secret_hamming_weight: 64,
            special_modulus_bits: 60,
        }
    }
}

/// Largest `log2(QP)` admitting 128-bit security for ternary secrets, by ring degree.
const SECURITY_TABLE_128: [(usize, u32); 6] = [
    (1024, 27),
    (2048, 54),
    (4096, 109),
    (8192, 218),
    (16384, 438),
    (32768, 881),
];

impl HeParams {
    pub fn validate(&self) -> Result<(), HeError> {
        let bad = |msg: &str| Err(HeError::InvalidParams(msg.to_string()));
        if !self.ring_degree.is_power_of_two() || self.ring_degree < 8 {
            return bad("ring degree must be a power of two >= 8");
        }
        if self.modulus_bits.len() < 2 {
            return bad("modulus chain needs at least two primes");
        }
        if self
            .modulus_bits
            .iter()
            .chain(std::iter::once(&self.special_modulus_bits))
            .any(|&b| !(20..=61).contains(&b))
        {
            return bad("prime sizes must be between 20 and 61 bits");
        }
        if !(self.scale > 1.0 && self.scale.is_finite()) {
            return bad("scale must be finite and > 1");
        }
        if self.scale.log2() >= self.modulus_bits[0] as f64 - 1.0 {
            return bad("scale must be smaller than the base prime");
        }
        if self.error_stddev <= 0.0 {
            return bad("error stddev must be positive");
        }
        if self.secret_hamming_weight == 0 || self.secret_hamming_weight > self.ring_degree {
            return bad("secret hamming weight must be in 1..=N");
        }
        Ok(())
    }

    pub fn slots(&self) -> usize {
        self.ring_degree / 2
    }

    pub fn max_level(&self) -> usize {
        self.modulus_bits.len() - 1
    }

    /// Total bits of the key-switching modulus `Q * P`.
    pub fn log_qp(&self) -> u32 {
        self.modulus_bits.iter().sum::<u32>() + self.special_modulus_bits
    }

    /// Chain primes `q_0..q_L` and the special prime, deterministically derived.
    pub fn primes(&self) -> (Vec<u64>, u64) {
        let n = self.ring_degree;
        let mut used: Vec<u64> = Vec::new();
        for &bits in &self.modulus_bits {
            let p = ntt_primes(bits, n, 1, &used)[0];
            used.push(p);
        }
        let special = ntt_primes(self.special_modulus_bits, n, 1, &used)[0];
        (used, special)
    }

    /// Whether `log_qp` is within the 128-bit column of the standard table.
    pub fn meets_128_bit_table(&self) -> bool {
        SECURITY_TABLE_128
            .iter()
            .find(|(n, _)| *n == self.ring_degree)
            .is_some_and(|(_, max)| self.log_qp() <= *max)
    }
}

/// Precomputed tables shared by all keys and ciphertexts of one parameter set.
#[derive(Debug)]
pub struct Context {
    pub params: HeParams,
    pub n: usize,
    /// Chain primes `q_0..q_L`.
    pub moduli: Vec<Modulus>,
    pub special: Modulus,
    pub ntt: Vec<NttTable>,
    pub ntt_special: NttTable,
    pub encoder: Encoder,
    /// `q_l^{-1} mod q_j` for `j < l`, indexed `[l][j]`.
    pub(crate) q_inv: Vec<Vec<u64>>,
    /// `P^{-1} mod q_j`.
    pub(crate) p_inv: Vec<u64>,
    /// `P mod q_j`.
    pub(crate) p_mod: Vec<u64>,
}

impl Context {
    pub fn new(params: HeParams) -> Result<Self, HeError> {
        params.validate()?;
        let n = params.ring_degree;
        let (chain, special) = params.primes();
        let moduli: Vec<Modulus> = chain.iter().map(|&q| Modulus::new(q)).collect();
        let special = Modulus::new(special);
        let ntt = moduli.iter().map(|&m| NttTable::new(m, n)).collect();
        let ntt_special = NttTable::new(special, n);
        let q_inv = (0..moduli.len())
            .map(|l| {
                (0..l)
                    .map(|j| moduli[j].inv(moduli[j].reduce(moduli[l].value())))
                    .collect()
            })
            .collect();
        let p_inv = moduli
            .iter()
            .map(|m| m.inv(m.reduce(special.value())))
            .collect();
        let p_mod = moduli.iter().map(|m| m.reduce(special.value())).collect();
        Ok(Self {
            encoder: Encoder::new(n),
            params,
            n,
            moduli,
            special,
            ntt,
            ntt_special,
            q_inv,
            p_inv,
            p_mod,
        })
    }

    pub fn slots(&self) -> usize {
        self.n / 2
    }

    pub fn max_level(&self) -> usize {
        self.moduli.len() - 1
    }

    pub fn scale(&self) -> f64 {
        self.params.scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_chain_has_three_levels() {
        let p = HeParams::default();
        assert_eq!(p.max_level(), 3);
        assert_eq!(p.slots(), 4096);
        assert_eq!(p.log_qp(), 260);
        // four ciphertext primes plus the special prime exceed the 128-bit row
        assert!(!p.meets_128_bit_table());
    }

    #[test]
    fn two_level_chain_is_within_table() {
        let p = HeParams {
            modulus_bits: vec![60, 40, 40],
            special_modulus_bits: 60,
            ..HeParams::default()
        };
        assert!(p.meets_128_bit_table());
    }

    #[test]
    fn primes_are_distinct() {
        let ctx = Context::new(HeParams {
            ring_degree: 1024,
            ..HeParams::default()
        })
        .unwrap();
        let mut all: Vec<u64> = ctx.moduli.iter().map(|m| m.value()).collect();
        all.push(ctx.special.value());
        let before = all.len();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), before);
        assert_eq!(ctx.moduli[0].bits(), 60);
        assert_eq!(ctx.moduli[1].bits(), 40);
    }

    #[test]
    fn invalid_params_rejected() {
        for p in [
            HeParams { ring_degree: 1000, ..HeParams::default() },
            HeParams { modulus_bits: vec![60], ..HeParams::default() },
            HeParams { scale: (2f64).powi(61), ..HeParams::default() },
            HeParams { secret_hamming_weight: 0, ..HeParams::default() },
        ] {
            assert!(matches!(p.validate(), Err(HeError::InvalidParams(_))));
        }
    }
}
