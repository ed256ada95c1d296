//! Word-sized modular arithmetic for NTT-friendly primes below 2^62.

use serde::{Deserialize, Serialize};

/// A prime modulus with precomputed Barrett constants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "u64", into = "u64")]
pub struct Modulus {
    value: u64,
    // floor(2^128 / value) split into (low, high) words
    ratio: [u64; 2],
}

impl From<u64> for Modulus {
    fn from(value: u64) -> Self {
        Self::new(value)
    }
}

impl From<Modulus> for u64 {
    fn from(m: Modulus) -> u64 {
        m.value
    }
}

#[inline(always)]
fn mul_wide(a: u64, b: u64) -> (u64, u64) {
    let p = (a as u128) * (b as u128);
    (p as u64, (p >> 64) as u64)
}

impl Modulus {
    pub fn new(value: u64) -> Self {
        assert!(value > 1 && value < (1 << 62), "modulus out of range");
        // 2^128 / q computed as (2^128 - 1) / q, exact unless q is a power of two
        let ratio = u128::MAX / value as u128;
        Self {
            value,
            ratio: [ratio as u64, (ratio >> 64) as u64],
        }
    }

    #[inline(always)]
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn bits(&self) -> u32 {
        64 - self.value.leading_zeros()
    }

    #[inline(always)]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.value {
            s - self.value
        } else {
            s
        }
    }

    #[inline(always)]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.value - b
        }
    }

    #[inline(always)]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.value - a
        }
    }

    /// Barrett reduction of a 128-bit value.
    #[inline(always)]
    pub fn reduce_u128(&self, x: u128) -> u64 {
        let x0 = x as u64;
        let x1 = (x >> 64) as u64;
        let [r0, r1] = self.ratio;

        let carry = mul_wide(x0, r0).1;
        let (t2_lo, t2_hi) = mul_wide(x0, r1);
        let (tmp1, c) = t2_lo.overflowing_add(carry);
        let tmp3 = t2_hi + c as u64;

        let (t2_lo, t2_hi) = mul_wide(x1, r0);
        let (_, c) = tmp1.overflowing_add(t2_lo);
        let q_est = x1
            .wrapping_mul(r1)
            .wrapping_add(tmp3)
            .wrapping_add(t2_hi)
            .wrapping_add(c as u64);

        let r = x0.wrapping_sub(q_est.wrapping_mul(self.value));
        if r >= self.value {
            r - self.value
        } else {
            r
        }
    }

    #[inline(always)]
    pub fn reduce(&self, a: u64) -> u64 {
        if a >= self.value {
            self.reduce_u128(a as u128)
        } else {
            a
        }
    }

    #[inline(always)]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce_u128((a as u128) * (b as u128))
    }

    /// Precomputes `floor(w * 2^64 / q)` for repeated multiplication by `w`.
    #[inline(always)]
    pub fn shoup(&self, w: u64) -> u64 {
        (((w as u128) << 64) / self.value as u128) as u64
    }

    /// `a * w mod q` given `w_shoup = self.shoup(w)`.
    #[inline(always)]
    pub fn mul_shoup(&self, a: u64, w: u64, w_shoup: u64) -> u64 {
        let q = mul_wide(a, w_shoup).1;
        let r = a.wrapping_mul(w).wrapping_sub(q.wrapping_mul(self.value));
        if r >= self.value {
            r - self.value
        } else {
            r
        }
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1u64;
        base = self.reduce(base);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Inverse by Fermat; `a` must be nonzero mod q.
    pub fn inv(&self, a: u64) -> u64 {
        let a = self.reduce(a);
        assert!(a != 0, "zero has no inverse");
        self.pow(a, self.value - 2)
    }

    /// Maps a signed integer into [0, q).
    #[inline(always)]
    pub fn from_i64(&self, a: i64) -> u64 {
        if a >= 0 {
            self.reduce(a as u64)
        } else {
            self.neg(self.reduce(a.unsigned_abs()))
        }
    }

    pub fn from_i128(&self, a: i128) -> u64 {
        let m = a.unsigned_abs() % self.value as u128;
        if a >= 0 {
            m as u64
        } else {
            self.neg(m as u64)
        }
    }

    /// Centered representative in (-q/2, q/2].
    #[inline(always)]
    pub fn center(&self, a: u64) -> i64 {
        if a > self.value / 2 {
            a as i64 - self.value as i64
        } else {
            a as i64
        }
    }
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const SMALL: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in SMALL {
        if n % p == 0 {
            return n == p;
        }
    }
    let mulmod = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let powmod = |mut b: u64, mut e: u64| {
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = mulmod(acc, b);
            }
            b = mulmod(b, b);
            e >>= 1;
        }
        acc
    };
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for a in SMALL {
        let mut x = powmod(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Largest primes `q < 2^bits` with `q ≡ 1 (mod 2n)`, skipping any in `exclude`.
pub fn ntt_primes(bits: u32, n: usize, count: usize, exclude: &[u64]) -> Vec<u64> {
    assert!((2..=61).contains(&bits));
    let step = 2 * n as u64;
    let mut out = Vec::with_capacity(count);
    let mut candidate = (1u64 << bits) - step + 1;
    while out.len() < count {
        if is_prime(candidate) && !exclude.contains(&candidate) {
            out.push(candidate);
        }
        candidate = candidate
            .checked_sub(step)
            .expect("ran out of NTT-friendly primes");
        assert!(candidate > (1u64 << (bits - 1)), "ran out of primes of {bits} bits");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const Q60: u64 = 1152921504606830593; // 2^60 - 2^14 + 1 is prime and NTT-friendly for N=8192

    #[test]
    fn known_prime() {
        assert!(is_prime(Q60));
        assert!(!is_prime(Q60 + 2));
        assert!(is_prime((1 << 61) - 1));
        assert!(!is_prime(1));
        assert!(is_prime(2));
    }

    #[test]
    fn primes_are_ntt_friendly_and_distinct() {
        let ps = ntt_primes(40, 8192, 3, &[]);
        assert_eq!(ps.len(), 3);
        for &p in &ps {
            assert_eq!(p % 16384, 1);
            assert_eq!(64 - p.leading_zeros(), 40);
        }
        assert!(ps[0] > ps[1] && ps[1] > ps[2]);
        let more = ntt_primes(40, 8192, 1, &ps);
        assert!(!ps.contains(&more[0]));
    }

    #[test]
    fn inverse() {
        let m = Modulus::new(Q60);
        let a = 123456789;
        assert_eq!(m.mul(a, m.inv(a)), 1);
    }

    proptest! {
        #[test]
        fn barrett_matches_u128_rem(a in any::<u64>(), b in any::<u64>(), q in 3u64..(1 << 62)) {
            let m = Modulus::new(q);
            let (a, b) = (a % q, b % q);
            prop_assert_eq!(m.mul(a, b), ((a as u128 * b as u128) % q as u128) as u64);
        }

        #[test]
        fn reduce_any_u128(x in any::<u128>(), q in 3u64..(1 << 62)) {
            let m = Modulus::new(q);
            prop_assert_eq!(m.reduce_u128(x), (x % q as u128) as u64);
        }

        #[test]
        fn shoup_matches(a in any::<u64>(), w in any::<u64>()) {
            let m = Modulus::new(Q60);
            let (a, w) = (a % Q60, w % Q60);
            prop_assert_eq!(m.mul_shoup(a, w, m.shoup(w)), m.mul(a, w));
        }

        #[test]
        fn signed_roundtrip(a in -(1i64 << 58)..(1i64 << 58)) {
            let m = Modulus::new(Q60);
            prop_assert_eq!(m.center(m.from_i64(a)), a);
            prop_assert_eq!(m.from_i128(a as i128), m.from_i64(a));
        }
    }
}
