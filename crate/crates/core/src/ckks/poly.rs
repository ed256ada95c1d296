//! Polynomials in RNS representation, one residue vector per prime.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::modarith::Modulus;
use super::params::Context;

/// Residues modulo `q_0..q_l` (and optionally the special prime, stored last).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RnsPoly {
    pub residues: Vec<Vec<u64>>,
    /// Evaluation (NTT) form.
    pub ntt: bool,
}

impl RnsPoly {
    pub fn zero(n: usize, num_moduli: usize, ntt: bool) -> Self {
        Self {
            residues: vec![vec![0; n]; num_moduli],
            ntt,
        }
    }

    pub fn num_moduli(&self) -> usize {
        self.residues.len()
    }

    /// Builds residues of small signed coefficients for the given moduli.
    pub fn from_signed(coeffs: &[i64], moduli: &[Modulus]) -> Self {
        Self {
            residues: moduli
                .iter()
                .map(|m| coeffs.iter().map(|&c| m.from_i64(c)).collect())
                .collect(),
            ntt: false,
        }
    }

    pub fn from_i128(coeffs: &[i128], moduli: &[Modulus]) -> Self {
        Self {
            residues: moduli
                .iter()
                .map(|m| coeffs.iter().map(|&c| m.from_i128(c)).collect())
                .collect(),
            ntt: false,
        }
    }

    pub fn truncate(&mut self, num_moduli: usize) {
        self.residues.truncate(num_moduli);
    }

    pub fn add_assign(&mut self, other: &Self, moduli: &[Modulus]) {
        debug_assert_eq!(self.ntt, other.ntt);
        for ((a, b), m) in self.residues.iter_mut().zip(&other.residues).zip(moduli) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = m.add(*x, *y);
            }
        }
    }

    pub fn sub_assign(&mut self, other: &Self, moduli: &[Modulus]) {
        debug_assert_eq!(self.ntt, other.ntt);
        for ((a, b), m) in self.residues.iter_mut().zip(&other.residues).zip(moduli) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = m.sub(*x, *y);
            }
        }
    }

    pub fn neg_assign(&mut self, moduli: &[Modulus]) {
        for (a, m) in self.residues.iter_mut().zip(moduli) {
            for x in a.iter_mut() {
                *x = m.neg(*x);
            }
        }
    }

    /// Pointwise product; both operands must be in NTT form.
    pub fn mul(&self, other: &Self, moduli: &[Modulus]) -> Self {
        debug_assert!(self.ntt && other.ntt);
        Self {
            residues: self
                .residues
                .iter()
                .zip(&other.residues)
                .zip(moduli)
                .map(|((a, b), m)| a.iter().zip(b).map(|(x, y)| m.mul(*x, *y)).collect())
                .collect(),
            ntt: true,
        }
    }

    /// `self += a * b` pointwise (NTT form).
    pub fn mul_add_assign(&mut self, a: &Self, b: &Self, moduli: &[Modulus]) {
        for (((acc, x), y), m) in self
            .residues
            .iter_mut()
            .zip(&a.residues)
            .zip(&b.residues)
            .zip(moduli)
        {
            for ((o, p), q) in acc.iter_mut().zip(x).zip(y) {
                *o = m.add(*o, m.mul(*p, *q));
            }
        }
    }

    /// Multiplies residue `i` by the scalar `c[i]`.
    pub fn mul_scalar_rns(&self, c: &[u64], moduli: &[Modulus]) -> Self {
        Self {
            residues: self
                .residues
                .iter()
                .zip(c)
                .zip(moduli)
                .map(|((a, &s), m)| {
                    let ss = m.shoup(s);
                    a.iter().map(|&x| m.mul_shoup(x, s, ss)).collect()
                })
                .collect(),
            ntt: self.ntt,
        }
    }

    /// Converts to NTT form using the first `num_moduli` chain tables, and
    /// the special-prime table for one extra trailing residue if present.
    pub fn to_ntt(&mut self, ctx: &Context, with_special: bool) {
        if self.ntt {
            return;
        }
        let chain = self.residues.len() - with_special as usize;
        for (i, r) in self.residues.iter_mut().enumerate() {
            if i < chain {
                ctx.ntt[i].forward(r);
            } else {
                ctx.ntt_special.forward(r);
            }
        }
        self.ntt = true;
    }

    pub fn to_coeff(&mut self, ctx: &Context, with_special: bool) {
        if !self.ntt {
            return;
        }
        let chain = self.residues.len() - with_special as usize;
        for (i, r) in self.residues.iter_mut().enumerate() {
            if i < chain {
                ctx.ntt[i].inverse(r);
            } else {
                ctx.ntt_special.inverse(r);
            }
        }
        self.ntt = false;
    }
}

/// Sparse ternary vector with exactly `h` nonzero entries.
pub fn sample_hwt<R: Rng + ?Sized>(rng: &mut R, n: usize, h: usize) -> Vec<i64> {
    let mut out = vec![0i64; n];
    let idx = rand::seq::index::sample(rng, n, h);
    for i in idx.iter() {
        out[i] = if rng.gen::<bool>() { 1 } else { -1 };
    }
    out
}

/// Ternary vector with P(0) = 1/2 and P(+1) = P(-1) = 1/4.
pub fn sample_zo<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<i64> {
    (0..n)
        .map(|_| match rng.gen_range(0..4u8) {
            0 => 1,
            1 => -1,
            _ => 0,
        })
        .collect()
}

/// Rounded Gaussian, truncated at six standard deviations.
pub fn sample_gaussian<R: Rng + ?Sized>(rng: &mut R, n: usize, sigma: f64) -> Vec<i64> {
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    let bound = (6.0 * sigma).ceil();
    (0..n)
        .map(|_| loop {
            let x: f64 = normal.sample(rng);
            if x.abs() <= bound {
                break x.round() as i64;
            }
        })
        .collect()
}

/// Uniform residues for each modulus, produced directly in NTT form.
pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R, n: usize, moduli: &[Modulus]) -> RnsPoly {
    RnsPoly {
        residues: moduli
            .iter()
            .map(|m| (0..n).map(|_| rng.gen_range(0..m.value())).collect())
            .collect(),
        ntt: true,
    }
}
