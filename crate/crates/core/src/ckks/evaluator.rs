//! Homomorphic operations with rescale-after-multiply semantics.

use std::sync::Arc;

use rand::Rng;

use super::ciphertext::{Ciphertext, Plaintext};
use super::keys::{KeySet, PublicKey, RelinKey, SecretKey};
use super::modarith::Modulus;
use super::noise::{self, NoiseEstimate, NoiseReport};
use super::params::Context;
use super::poly::{sample_gaussian, sample_zo, RnsPoly};
use super::HeError;

/// Public-key side: everything except decryption.
#[derive(Clone, Debug)]
pub struct CkksEvaluator {
    ctx: Arc<Context>,
    public: PublicKey,
    relin: Option<RelinKey>,
}

/// Secret-key side: decryption and noise measurement.
#[derive(Clone, Debug)]
pub struct CkksDecryptor {
    ctx: Arc<Context>,
    secret: SecretKey,
}

// Lazy accumulation of 120-bit products must be reduced before u128 overflows.
const LAZY_TERMS: usize = 64;

impl CkksEvaluator {
    pub fn new(ctx: Arc<Context>, public: PublicKey, relin: Option<RelinKey>) -> Self {
        Self { ctx, public, relin }
    }

    pub fn from_keys(ctx: Arc<Context>, keys: &KeySet) -> Self {
        Self::new(ctx, keys.public.clone(), Some(keys.relin.clone()))
    }

    pub fn context(&self) -> &Arc<Context> {
        &self.ctx
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.public
    }

    pub fn relin_key(&self) -> Option<&RelinKey> {
        self.relin.as_ref()
    }

    fn moduli(&self, level: usize) -> &[Modulus] {
        &self.ctx.moduli[..=level]
    }

    /// Encodes `values` at `scale` for the given level.
    pub fn encode(&self, values: &[f64], scale: f64, level: usize) -> Result<Plaintext, HeError> {
        if level > self.ctx.max_level() {
            return Err(HeError::LevelExhausted { level });
        }
        let coeffs = self.ctx.encoder.encode(values, scale)?;
        let as_f64: Vec<f64> = coeffs.iter().map(|&c| c as f64).collect();
        let norm = self.ctx.encoder.canonical_norm(&as_f64);
        let mut poly = RnsPoly::from_i128(&coeffs, self.moduli(level));
        poly.to_ntt(&self.ctx, false);
        Ok(Plaintext {
            poly,
            scale,
            level,
            norm,
            used_slots: values.len(),
        })
    }

    pub fn encrypt_plaintext<R: Rng + ?Sized>(&self, pt: &Plaintext, rng: &mut R) -> Ciphertext {
        let ctx = &*self.ctx;
        let level = pt.level;
        let moduli = self.moduli(level);
        let n = ctx.n;
        let sigma = ctx.params.error_stddev;
        let mut v = RnsPoly::from_signed(&sample_zo(rng, n), moduli);
        v.to_ntt(ctx, false);
        let mut e0 = RnsPoly::from_signed(&sample_gaussian(rng, n, sigma), moduli);
        e0.to_ntt(ctx, false);
        let mut e1 = RnsPoly::from_signed(&sample_gaussian(rng, n, sigma), moduli);
        e1.to_ntt(ctx, false);

        let mut b = self.public.b.clone();
        b.truncate(level + 1);
        let mut a = self.public.a.clone();
        a.truncate(level + 1);
        let mut c0 = v.mul(&b, moduli);
        c0.add_assign(&e0, moduli);
        c0.add_assign(&pt.poly, moduli);
        let mut c1 = v.mul(&a, moduli);
        c1.add_assign(&e1, moduli);
        Ciphertext {
            c0,
            c1,
            level,
            scale: pt.scale,
            used_slots: pt.used_slots,
            noise: NoiseEstimate {
                message: pt.norm,
                noise: noise::b_clean(ctx),
            },
        }
    }

    /// Encrypts at the top level and default scale.
    pub fn encrypt<R: Rng + ?Sized>(&self, values: &[f64], rng: &mut R) -> Result<Ciphertext, HeError> {
        let pt = self.encode(values, self.ctx.scale(), self.ctx.max_level())?;
        Ok(self.encrypt_plaintext(&pt, rng))
    }

    fn check_same(&self, a: &Ciphertext, b: &Ciphertext) -> Result<(), HeError> {
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

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
        self.check_same(a, b)?;
        let moduli = self.moduli(a.level);
        let mut out = a.clone();
        out.c0.add_assign(&b.c0, moduli);
        out.c1.add_assign(&b.c1, moduli);
        out.used_slots = a.used_slots.max(b.used_slots);
        out.noise = NoiseEstimate {
            message: a.noise.message + b.noise.message,
            noise: a.noise.noise + b.noise.noise,
        };
        Ok(out)
    }

    /// Adds a plaintext encoded at the ciphertext's level and scale.
    pub fn add_plain(&self, a: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext, HeError> {
        if pt.level != a.level {
            return Err(HeError::LevelMismatch {
                left: a.level,
                right: pt.level,
            });
        }
        if pt.scale != a.scale {
            return Err(HeError::ScaleMismatch {
                left: a.scale,
                right: pt.scale,
            });
        }
        let mut out = a.clone();
        out.c0.add_assign(&pt.poly, self.moduli(a.level));
        out.used_slots = a.used_slots.max(pt.used_slots);
        out.noise.message += pt.norm;
        Ok(out)
    }

    /// Adds the constant `c` to every slot.
    pub fn add_const(&self, a: &Ciphertext, c: f64) -> Result<Ciphertext, HeError> {
        let k = (c * a.scale).round() as i128;
        let mut out = a.clone();
        for (r, m) in out.c0.residues.iter_mut().zip(self.moduli(a.level)) {
            // a constant polynomial evaluates to itself at every root
            let km = m.from_i128(k);
            for x in r.iter_mut() {
                *x = m.add(*x, km);
            }
        }
        out.noise.message += k.unsigned_abs() as f64;
        out.used_slots = self.ctx.slots();
        Ok(out)
    }

    fn require_level(&self, a: &Ciphertext) -> Result<(), HeError> {
        if a.level == 0 {
            Err(HeError::LevelExhausted { level: 0 })
        } else {
            Ok(())
        }
    }

    /// Integer representative of `c * q_level`, the plaintext multiplier that
    /// leaves the scale unchanged after rescaling.
    fn const_weight(&self, c: f64, level: usize) -> i128 {
        (c * self.ctx.moduli[level].value() as f64).round() as i128
    }

    /// Multiplies every slot by `c`, then rescales.
    pub fn mul_const(&self, a: &Ciphertext, c: f64) -> Result<Ciphertext, HeError> {
        self.dot_ct_pt(std::slice::from_ref(a), &[c])
    }

    /// Slot-wise product with a plaintext vector, then rescales.
    pub fn mul_plain(&self, a: &Ciphertext, values: &[f64]) -> Result<Ciphertext, HeError> {
        self.require_level(a)?;
        let q = self.ctx.moduli[a.level].value() as f64;
        let pt = self.encode(values, q, a.level)?;
        let moduli = self.moduli(a.level);
        let raw = Ciphertext {
            c0: a.c0.mul(&pt.poly, moduli),
            c1: a.c1.mul(&pt.poly, moduli),
            level: a.level,
            scale: a.scale * q,
            used_slots: a.used_slots.min(pt.used_slots),
            noise: NoiseEstimate {
                message: a.noise.message * pt.norm,
                noise: a.noise.noise * pt.norm,
            },
        };
        Ok(self.rescale_with_scale(&raw, a.scale))
    }

    /// `sum_i cts[i] * plains[i]`, accumulated before a single rescale.
    pub fn dot_ct_pt(&self, cts: &[Ciphertext], plains: &[f64]) -> Result<Ciphertext, HeError> {
        let raw = self.dot_ct_pt_raw(cts, plains)?;
        Ok(self.rescale_with_scale(&raw, cts[0].scale))
    }

    /// [`dot_ct_pt`](Self::dot_ct_pt) without the final rescale.
    pub fn dot_ct_pt_raw(&self, cts: &[Ciphertext], plains: &[f64]) -> Result<Ciphertext, HeError> {
        if cts.len() != plains.len() || cts.is_empty() {
            return Err(HeError::DimensionMismatch {
                left: cts.len(),
                right: plains.len(),
            });
        }
        for ct in &cts[1..] {
            self.check_same(&cts[0], ct)?;
        }
        let first = &cts[0];
        self.require_level(first)?;
        let level = first.level;
        let moduli = self.moduli(level);
        let weights: Vec<i128> = plains.iter().map(|&p| self.const_weight(p, level)).collect();
        let n = self.ctx.n;

        let accumulate = |pick: fn(&Ciphertext) -> &RnsPoly| -> RnsPoly {
            let residues = moduli
                .iter()
                .enumerate()
                .map(|(j, m)| {
                    let mut acc = vec![0u128; n];
                    for (i, (ct, &w)) in cts.iter().zip(&weights).enumerate() {
                        let w = m.from_i128(w) as u128;
                        for (o, &x) in acc.iter_mut().zip(&pick(ct).residues[j]) {
                            *o += x as u128 * w;
                        }
                        if i % LAZY_TERMS == LAZY_TERMS - 1 {
                            for o in acc.iter_mut() {
                                *o = m.reduce_u128(*o) as u128;
                            }
                        }
                    }
                    acc.into_iter().map(|x| m.reduce_u128(x)).collect()
                })
                .collect();
            RnsPoly { residues, ntt: true }
        };

        let mut message = 0.0;
        let mut noise_sum = 0.0;
        for (ct, &w) in cts.iter().zip(&weights) {
            let wn = w.unsigned_abs() as f64;
            message += ct.noise.message * wn;
            noise_sum += ct.noise.noise * wn;
        }
        Ok(Ciphertext {
            c0: accumulate(|c| &c.c0),
            c1: accumulate(|c| &c.c1),
            level,
            scale: first.scale * moduli[level].value() as f64,
            used_slots: cts.iter().map(|c| c.used_slots).max().unwrap_or(0),
            noise: NoiseEstimate {
                message,
                noise: noise_sum,
            },
        })
    }

    /// Ciphertext product with relinearization, then rescale.
    pub fn mul(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
        self.dot_ct_ct(std::slice::from_ref(a), std::slice::from_ref(b))
    }

    /// `sum_i a[i] * b[i]`, tensored lazily, relinearized and rescaled once.
    pub fn dot_ct_ct(&self, a: &[Ciphertext], b: &[Ciphertext]) -> Result<Ciphertext, HeError> {
        let raw = self.dot_ct_ct_raw(a, b)?;
        self.rescale(&raw)
    }

    /// [`dot_ct_ct`](Self::dot_ct_ct) without the final rescale.
    pub fn dot_ct_ct_raw(&self, a: &[Ciphertext], b: &[Ciphertext]) -> Result<Ciphertext, HeError> {
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
        self.require_level(&a[0])?;
        let relin = self.relin.as_ref().ok_or(HeError::MissingRelinKey)?;
        let new_scale = sa * sb / self.ctx.moduli[level].value() as f64;
        if !(1.0..self.ctx.moduli[0].value() as f64 / 16.0).contains(&new_scale) {
            return Err(HeError::ScaleOverflow { scale: new_scale });
        }

        let moduli = self.moduli(level);
        let n = self.ctx.n;
        let mut d0 = RnsPoly::zero(n, level + 1, true);
        let mut d1 = RnsPoly::zero(n, level + 1, true);
        let mut d2 = RnsPoly::zero(n, level + 1, true);
        for (j, m) in moduli.iter().enumerate() {
            let mut acc0 = vec![0u128; n];
            let mut acc1 = vec![0u128; n];
            let mut acc2 = vec![0u128; n];
            for (i, (x, y)) in a.iter().zip(b).enumerate() {
                let (x0, x1) = (&x.c0.residues[j], &x.c1.residues[j]);
                let (y0, y1) = (&y.c0.residues[j], &y.c1.residues[j]);
                for k in 0..n {
                    let (p0, p1, q0, q1) = (x0[k] as u128, x1[k] as u128, y0[k] as u128, y1[k] as u128);
                    acc0[k] += p0 * q0;
                    acc1[k] += p0 * q1 + p1 * q0;
                    acc2[k] += p1 * q1;
                }
                if i % (LAZY_TERMS / 2) == LAZY_TERMS / 2 - 1 {
                    for acc in [&mut acc0, &mut acc1, &mut acc2] {
                        for o in acc.iter_mut() {
                            *o = m.reduce_u128(*o) as u128;
                        }
                    }
                }
            }
            d0.residues[j] = acc0.into_iter().map(|x| m.reduce_u128(x)).collect();
            d1.residues[j] = acc1.into_iter().map(|x| m.reduce_u128(x)).collect();
            d2.residues[j] = acc2.into_iter().map(|x| m.reduce_u128(x)).collect();
        }

        let (k0, k1) = self.key_switch(&d2, level, relin);
        d0.add_assign(&k0, moduli);
        d1.add_assign(&k1, moduli);

        let mut message = 0.0;
        let mut noise_sum = 0.0;
        for (x, y) in a.iter().zip(b) {
            message += x.noise.message * y.noise.message;
            noise_sum += noise::b_mu(&x.noise, &y.noise);
        }
        noise_sum += noise::b_mult(&self.ctx, level);
        Ok(Ciphertext {
            c0: d0,
            c1: d1,
            level,
            scale: sa * sb,
            used_slots: a
                .iter()
                .zip(b)
                .map(|(x, y)| x.used_slots.min(y.used_slots))
                .max()
                .unwrap_or(0),
            noise: NoiseEstimate {
                message,
                noise: noise_sum,
            },
        })
    }

    /// Switches `d2` (a multiple of `s^2`) to a pair under `s`.
    fn key_switch(&self, d2: &RnsPoly, level: usize, relin: &RelinKey) -> (RnsPoly, RnsPoly) {
        let ctx = &*self.ctx;
        let n = ctx.n;
        let num = level + 1;
        let special_idx = ctx.moduli.len();
        let mut targets: Vec<Modulus> = ctx.moduli[..num].to_vec();
        targets.push(ctx.special);

        let mut acc_b = RnsPoly::zero(n, num + 1, true);
        let mut acc_a = RnsPoly::zero(n, num + 1, true);
        for i in 0..num {
            let mut digit = d2.residues[i].clone();
            ctx.ntt[i].inverse(&mut digit);
            let (kb, ka) = &relin.digits[i];
            for (t, m) in targets.iter().enumerate() {
                let key_idx = if t == num { special_idx } else { t };
                let mut lifted: Vec<u64> = digit.iter().map(|&x| m.reduce(x)).collect();
                if t == num {
                    ctx.ntt_special.forward(&mut lifted);
                } else {
                    ctx.ntt[t].forward(&mut lifted);
                }
                let (rb, ra) = (&kb.residues[key_idx], &ka.residues[key_idx]);
                let ob = &mut acc_b.residues[t];
                for k in 0..n {
                    ob[k] = m.add(ob[k], m.mul(lifted[k], rb[k]));
                }
                let oa = &mut acc_a.residues[t];
                for k in 0..n {
                    oa[k] = m.add(oa[k], m.mul(lifted[k], ra[k]));
                }
            }
        }
        (self.mod_down(acc_b, level), self.mod_down(acc_a, level))
    }

    /// Divides a polynomial over `q_0..q_level, P` by `P`, rounding.
    fn mod_down(&self, mut x: RnsPoly, level: usize) -> RnsPoly {
        let ctx = &*self.ctx;
        let mut last = x.residues.pop().expect("special residue");
        ctx.ntt_special.inverse(&mut last);
        let p = ctx.special;
        let centered: Vec<i64> = last.iter().map(|&v| p.center(v)).collect();
        for (j, r) in x.residues.iter_mut().enumerate().take(level + 1) {
            let m = &ctx.moduli[j];
            let mut lift: Vec<u64> = centered.iter().map(|&v| m.from_i64(v)).collect();
            ctx.ntt[j].forward(&mut lift);
            let pinv = ctx.p_inv[j];
            let pinv_s = m.shoup(pinv);
            for (o, l) in r.iter_mut().zip(&lift) {
                *o = m.mul_shoup(m.sub(*o, *l), pinv, pinv_s);
            }
        }
        x
    }

    /// Divides by the top prime of the ciphertext's level and drops it.
    pub fn rescale(&self, a: &Ciphertext) -> Result<Ciphertext, HeError> {
        self.require_level(a)?;
        let q = self.ctx.moduli[a.level].value() as f64;
        Ok(self.rescale_with_scale(a, a.scale / q))
    }

    fn rescale_with_scale(&self, a: &Ciphertext, new_scale: f64) -> Ciphertext {
        let ctx = &*self.ctx;
        let level = a.level;
        let ql = ctx.moduli[level];
        let rescale_poly = |p: &RnsPoly| -> RnsPoly {
            let mut p = p.clone();
            let mut last = p.residues.pop().expect("nonempty");
            ctx.ntt[level].inverse(&mut last);
            let centered: Vec<i64> = last.iter().map(|&v| ql.center(v)).collect();
            for (j, r) in p.residues.iter_mut().enumerate() {
                let m = &ctx.moduli[j];
                let mut lift: Vec<u64> = centered.iter().map(|&v| m.from_i64(v)).collect();
                ctx.ntt[j].forward(&mut lift);
                let inv = ctx.q_inv[level][j];
                let inv_s = m.shoup(inv);
                for (o, l) in r.iter_mut().zip(&lift) {
                    *o = m.mul_shoup(m.sub(*o, *l), inv, inv_s);
                }
            }
            p
        };
        let q = ql.value() as f64;
        Ciphertext {
            c0: rescale_poly(&a.c0),
            c1: rescale_poly(&a.c1),
            level: level - 1,
            scale: new_scale,
            used_slots: a.used_slots,
            noise: NoiseEstimate {
                message: a.noise.message / q,
                noise: a.noise.noise / q + noise::b_scale(ctx),
            },
        }
    }

    /// Drops residues down to `level` without changing the scale.
    pub fn drop_to_level(&self, a: &Ciphertext, level: usize) -> Result<Ciphertext, HeError> {
        if level > a.level {
            return Err(HeError::LevelMismatch {
                left: a.level,
                right: level,
            });
        }
        let mut out = a.clone();
        out.c0.truncate(level + 1);
        out.c1.truncate(level + 1);
        out.level = level;
        Ok(out)
    }
}

impl CkksDecryptor {
    pub fn new(ctx: Arc<Context>, secret: SecretKey) -> Self {
        Self { ctx, secret }
    }

    pub fn from_keys(ctx: Arc<Context>, keys: &KeySet) -> Self {
        Self::new(ctx, keys.secret.clone())
    }

    /// `c0 + c1*s` in NTT form over the ciphertext's moduli.
    pub fn decrypt_poly(&self, ct: &Ciphertext) -> RnsPoly {
        let moduli = &self.ctx.moduli[..=ct.level];
        let mut s = self.secret.poly.clone();
        s.truncate(ct.level + 1);
        let mut m = ct.c1.mul(&s, moduli);
        m.add_assign(&ct.c0, moduli);
        m
    }

    /// Centered integer coefficients of an NTT-form polynomial, recovered
    /// from `q_0` alone or from `q_0 * q_1` when `wide` and available.
    pub fn centered_coeffs(&self, poly: &RnsPoly, wide: bool) -> Vec<f64> {
        let ctx = &*self.ctx;
        let q0 = ctx.moduli[0];
        let mut r0 = poly.residues[0].clone();
        if poly.ntt {
            ctx.ntt[0].inverse(&mut r0);
        }
        if !wide || poly.residues.len() < 2 {
            return r0.iter().map(|&x| q0.center(x) as f64).collect();
        }
        let q1 = ctx.moduli[1];
        let mut r1 = poly.residues[1].clone();
        if poly.ntt {
            ctx.ntt[1].inverse(&mut r1);
        }
        let q0_inv = q1.inv(q1.reduce(q0.value()));
        let big = q0.value() as u128 * q1.value() as u128;
        r0.iter()
            .zip(&r1)
            .map(|(&x0, &x1)| {
                let t = q1.mul(q1.sub(x1, q1.reduce(x0)), q0_inv);
                let x = x0 as u128 + q0.value() as u128 * t as u128;
                if x > big / 2 {
                    -((big - x) as f64)
                } else {
                    x as f64
                }
            })
            .collect()
    }

    pub fn decrypt(&self, ct: &Ciphertext) -> Vec<f64> {
        let poly = self.decrypt_poly(ct);
        let q0_bits = self.ctx.moduli[0].bits() as f64;
        // a 60-bit base prime leaves ~20 bits of headroom at the default scale
        let wide = ct.scale.log2() + 12.0 > q0_bits - 1.0;
        let coeffs = self.centered_coeffs(&poly, wide);
        self.ctx.encoder.decode(&coeffs, ct.scale)
    }

    /// Canonical norm of `decrypt(ct) - expected`, where `expected` is an
    /// NTT-form plaintext polynomial over at least the first two chain primes
    /// (or one at level 0).
    pub fn measure_noise_poly(&self, ct: &Ciphertext, expected: &RnsPoly) -> NoiseReport {
        let ctx = &*self.ctx;
        let mut diff = self.decrypt_poly(ct);
        let k = diff.num_moduli().min(2);
        diff.truncate(k);
        let mut exp = expected.clone();
        exp.truncate(k);
        diff.sub_assign(&exp, &ctx.moduli[..k]);
        let coeffs = self.centered_coeffs(&diff, true);
        NoiseReport {
            measured_noise: ctx.encoder.canonical_norm(&coeffs),
            bound: ct.noise.noise,
        }
    }

    /// Noise relative to `expected` slot values encoded at the ciphertext scale.
    pub fn measure_noise(&self, ct: &Ciphertext, expected: &[f64]) -> Result<NoiseReport, HeError> {
        let ctx = &*self.ctx;
        let coeffs = ctx.encoder.encode(expected, ct.scale)?;
        let mut poly = RnsPoly::from_i128(&coeffs, &ctx.moduli[..=ct.level]);
        poly.to_ntt(ctx, false);
        Ok(self.measure_noise_poly(ct, &poly))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckks::params::HeParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn setup(n: usize) -> (CkksEvaluator, CkksDecryptor, ChaCha20Rng) {
        let ctx = Arc::new(
            Context::new(HeParams {
                ring_degree: n,
                ..HeParams::default()
            })
            .unwrap(),
        );
        let keys = KeySet::generate(&ctx, 7);
        (
            CkksEvaluator::from_keys(ctx.clone(), &keys),
            CkksDecryptor::from_keys(ctx, &keys),
            ChaCha20Rng::seed_from_u64(11),
        )
    }

    fn max_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_roundtrip() {
        let (ev, dec, mut rng) = setup(1024);
        let ct = ev.encrypt(&[0.0; 512], &mut rng).unwrap();
        assert!(dec.decrypt(&ct).iter().all(|x| x.abs() < 1e-5));
    }

    #[test]
    fn randomized_encryption() {
        let (ev, _, mut rng) = setup(1024);
        let pt = ev.encode(&[0.3, 0.1], ev.context().scale(), 3).unwrap();
        let a = ev.encrypt_plaintext(&pt, &mut rng);
        let b = ev.encrypt_plaintext(&pt, &mut rng);
        assert_ne!(a.c0, b.c0);
    }

    #[test]
    fn add_and_const() {
        let (ev, dec, mut rng) = setup(1024);
        let v: Vec<f64> = (0..512).map(|i| (i as f64 / 512.0) - 0.5).collect();
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let a = ev.encrypt(&v, &mut rng).unwrap();
        let b = ev.encrypt(&neg, &mut rng).unwrap();
        let sum = ev.add(&a, &b).unwrap();
        assert!(dec.decrypt(&sum).iter().all(|x| x.abs() < 1e-5));
        let twice = ev.add(&a, &a).unwrap();
        let doubled: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
        assert!(max_err(&dec.decrypt(&twice), &doubled) < 1e-5);
        let shifted = ev.add_const(&a, -0.9).unwrap();
        let expected: Vec<f64> = v.iter().map(|x| x - 0.9).collect();
        assert!(max_err(&dec.decrypt(&shifted), &expected) < 1e-5);
    }

    #[test]
    fn mismatches_are_errors() {
        let (ev, _, mut rng) = setup(1024);
        let a = ev.encrypt(&[0.1], &mut rng).unwrap();
        let b = ev.drop_to_level(&a, 2).unwrap();
        assert!(matches!(ev.add(&a, &b), Err(HeError::LevelMismatch { .. })));
        let mut c = a.clone();
        c.scale *= 2.0;
        assert!(matches!(ev.add(&a, &c), Err(HeError::ScaleMismatch { .. })));
        assert!(matches!(
            ev.dot_ct_pt(&[a.clone(), a.clone()], &[1.0]),
            Err(HeError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn const_and_plain_multiplication() {
        let (ev, dec, mut rng) = setup(1024);
        let v: Vec<f64> = (0..512).map(|i| ((i * 37) % 100) as f64 / 100.0 - 0.5).collect();
        let a = ev.encrypt(&v, &mut rng).unwrap();
        let one = ev.mul_const(&a, 1.0).unwrap();
        assert_eq!(one.level, a.level - 1);
        assert_eq!(one.scale, a.scale);
        assert!(max_err(&dec.decrypt(&one), &v) < 1e-6);
        let w: Vec<f64> = (0..512).map(|i| 1.0 + (i % 99) as f64).collect();
        let prod = ev.mul_plain(&a, &w).unwrap();
        let expected: Vec<f64> = v.iter().zip(&w).map(|(x, y)| x * y).collect();
        assert!(max_err(&dec.decrypt(&prod), &expected) < 1e-4);
    }

    #[test]
    fn dot_with_plain_weights() {
        let (ev, dec, mut rng) = setup(1024);
        let cols: Vec<Vec<f64>> = (0..5)
            .map(|c| (0..512).map(|i| ((i + 13 * c) % 17) as f64 / 17.0).collect())
            .collect();
        let cts: Vec<_> = cols.iter().map(|v| ev.encrypt(v, &mut rng).unwrap()).collect();
        let sel = ev.dot_ct_pt(&cts, &[0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(max_err(&dec.decrypt(&sel), &cols[2]) < 1e-6);
        let zero = ev.dot_ct_pt(&cts, &[0.0; 5]).unwrap();
        assert!(dec.decrypt(&zero).iter().all(|x| x.abs() < 1e-5));
    }

    #[test]
    fn ciphertext_product() {
        let (ev, dec, mut rng) = setup(1024);
        let v: Vec<f64> = (0..512).map(|i| ((i * 31) % 200) as f64 / 100.0 - 1.0).collect();
        let w: Vec<f64> = (0..512).map(|i| ((i * 17) % 200) as f64 / 100.0 - 1.0).collect();
        let a = ev.drop_to_level(&ev.encrypt(&v, &mut rng).unwrap(), 2).unwrap();
        let b = ev.drop_to_level(&ev.encrypt(&w, &mut rng).unwrap(), 2).unwrap();
        let p = ev.mul(&a, &b).unwrap();
        assert_eq!(p.level, 1);
        let expected: Vec<f64> = v.iter().zip(&w).map(|(x, y)| x * y).collect();
        assert!(max_err(&dec.decrypt(&p), &expected) < 1e-4);
    }

    #[test]
    fn three_levels_then_exhausted() {
        let (ev, dec, mut rng) = setup(1024);
        let a = ev.encrypt(&[0.5], &mut rng).unwrap();
        let b = ev.mul_const(&a, 1.0).unwrap();
        let c = ev.mul(&b, &ev.drop_to_level(&ev.encrypt(&[0.5], &mut rng).unwrap(), 2).unwrap()).unwrap();
        let d = ev.mul_plain(&c, &[2.0]).unwrap();
        assert_eq!(d.level, 0);
        assert!((dec.decrypt(&d)[0] - 0.5).abs() < 1e-4);
        assert!(matches!(ev.mul_const(&d, 1.0), Err(HeError::LevelExhausted { .. })));
        assert!(matches!(ev.mul(&d, &d), Err(HeError::LevelExhausted { .. })));
    }

    #[test]
    fn fresh_noise_measured() {
        let (ev, dec, mut rng) = setup(1024);
        let v: Vec<f64> = (0..512).map(|i| (i as f64).sin()).collect();
        let ct = ev.encrypt(&v, &mut rng).unwrap();
        let r = dec.measure_noise(&ct, &v).unwrap();
        assert!(r.measured_noise > 0.0);
        assert!(r.within_bound(), "{r:?}");
    }
}
