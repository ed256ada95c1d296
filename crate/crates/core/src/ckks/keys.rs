use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::modarith::Modulus;
use super::params::Context;
use super::poly::{sample_gaussian, sample_hwt, sample_uniform, RnsPoly};

/// Sparse ternary secret, kept in NTT form over the chain and special prime.
#[derive(Clone, Debug)]
pub struct SecretKey {
    pub(crate) coeffs: Vec<i64>,
    pub(crate) poly: RnsPoly,
}

impl SecretKey {
    pub fn hamming_weight(&self) -> usize {
        self.coeffs.iter().filter(|&&c| c != 0).count()
    }

    pub fn coefficients(&self) -> &[i64] {
        &self.coeffs
    }

    pub(crate) fn from_coeffs(ctx: &Context, coeffs: Vec<i64>) -> Self {
        let mut poly = RnsPoly::from_signed(&coeffs, &all_moduli(ctx));
        poly.to_ntt(ctx, true);
        Self { coeffs, poly }
    }
}

/// `(b, a)` with `b = -a*s + e` over the full chain, NTT form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    pub b: RnsPoly,
    pub a: RnsPoly,
}

/// One key-switching pair per chain prime (digit), over chain + special prime.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelinKey {
    pub digits: Vec<(RnsPoly, RnsPoly)>,
}

#[derive(Clone, Debug)]
pub struct KeySet {
    pub secret: SecretKey,
    pub public: PublicKey,
    pub relin: RelinKey,
}

pub(crate) fn all_moduli(ctx: &Context) -> Vec<Modulus> {
    let mut m = ctx.moduli.clone();
    m.push(ctx.special);
    m
}

fn small_poly(ctx: &Context, coeffs: &[i64], moduli: &[Modulus], with_special: bool) -> RnsPoly {
    let mut p = RnsPoly::from_signed(coeffs, moduli);
    p.to_ntt(ctx, with_special);
    p
}

impl KeySet {
    pub fn generate(ctx: &Context, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let n = ctx.n;
        let sigma = ctx.params.error_stddev;
        let s = sample_hwt(&mut rng, n, ctx.params.secret_hamming_weight);
        let secret = SecretKey::from_coeffs(ctx, s);

        let chain = &ctx.moduli;
        let a = sample_uniform(&mut rng, n, chain);
        let e = small_poly(ctx, &sample_gaussian(&mut rng, n, sigma), chain, false);
        let mut s_chain = secret.poly.clone();
        s_chain.truncate(chain.len());
        let mut b = a.mul(&s_chain, chain);
        b.neg_assign(chain);
        b.add_assign(&e, chain);
        let public = PublicKey { b, a };

        let full = all_moduli(ctx);
        let s2 = secret.poly.mul(&secret.poly, &full);
        let digits = (0..chain.len())
            .map(|i| {
                let a = sample_uniform(&mut rng, n, &full);
                let e = small_poly(ctx, &sample_gaussian(&mut rng, n, sigma), &full, true);
                let mut b = a.mul(&secret.poly, &full);
                b.neg_assign(&full);
                b.add_assign(&e, &full);
                // + (P mod q_i) * s^2 in residue i only
                let m = &full[i];
                let p_mod = ctx.p_mod[i];
                let pm_shoup = m.shoup(p_mod);
                for (x, &y) in b.residues[i].iter_mut().zip(&s2.residues[i]) {
                    *x = m.add(*x, m.mul_shoup(y, p_mod, pm_shoup));
                }
                (b, a)
            })
            .collect();
        Self {
            secret,
            public,
            relin: RelinKey { digits },
        }
    }
}
