//! Negacyclic number-theoretic transform over `Z_q[X]/(X^N + 1)`.

use super::modarith::Modulus;

/// Twiddle tables for one prime and ring degree.
#[derive(Clone, Debug)]
pub struct NttTable {
    pub modulus: Modulus,
    n: usize,
    psi_rev: Vec<u64>,
    psi_rev_shoup: Vec<u64>,
    psi_inv_rev: Vec<u64>,
    psi_inv_rev_shoup: Vec<u64>,
    n_inv: u64,
    n_inv_shoup: u64,
}

fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}

/// Smallest primitive `2n`-th root of unity mod q.
fn minimal_primitive_root(m: &Modulus, n: usize) -> u64 {
    let q = m.value();
    let order = 2 * n as u64;
    assert_eq!((q - 1) % order, 0, "modulus {q} is not 1 mod {order}");
    let cofactor = (q - 1) / order;
    let mut candidates = Vec::new();
    for g in 2.. {
        let r = m.pow(g, cofactor);
        // primitive iff r^n == -1
        if m.pow(r, n as u64) == q - 1 {
            candidates.push(r);
            break;
        }
    }
    let root = candidates[0];
    // the smallest generator among odd powers of `root`
    let root_sq = m.mul(root, root);
    let mut best = root;
    let mut cur = root;
    for _ in 0..n {
        cur = m.mul(cur, root_sq);
        best = best.min(cur);
    }
    best
}

impl NttTable {
    pub fn new(modulus: Modulus, n: usize) -> Self {
        assert!(n.is_power_of_two() && n >= 2);
        let m = modulus;
        let log_n = n.trailing_zeros();
        let psi = minimal_primitive_root(&m, n);
        let psi_inv = m.inv(psi);
        let mut psi_rev = vec![0u64; n];
        let mut psi_inv_rev = vec![0u64; n];
        let (mut p, mut pi) = (1u64, 1u64);
        for i in 0..n {
            let r = bit_reverse(i, log_n);
            psi_rev[r] = p;
            psi_inv_rev[r] = pi;
            p = m.mul(p, psi);
            pi = m.mul(pi, psi_inv);
        }
        let psi_rev_shoup = psi_rev.iter().map(|&w| m.shoup(w)).collect();
        let psi_inv_rev_shoup = psi_inv_rev.iter().map(|&w| m.shoup(w)).collect();
        let n_inv = m.inv(n as u64);
        Self {
            modulus,
            n,
            psi_rev,
            psi_rev_shoup,
            psi_inv_rev,
            psi_inv_rev_shoup,
            n_inv,
            n_inv_shoup: m.shoup(n_inv),
        }
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    /// In-place forward transform; output in bit-reversed evaluation order.
    pub fn forward(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let m = &self.modulus;
        let mut t = self.n;
        let mut groups = 1;
        while groups < self.n {
            t >>= 1;
            for i in 0..groups {
                let w = self.psi_rev[groups + i];
                let ws = self.psi_rev_shoup[groups + i];
                let start = 2 * i * t;
                let (lo, hi) = a[start..start + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let u = *x;
                    let v = m.mul_shoup(*y, w, ws);
                    *x = m.add(u, v);
                    *y = m.sub(u, v);
                }
            }
            groups <<= 1;
        }
    }

    /// In-place inverse of [`forward`](Self::forward).
    pub fn inverse(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let m = &self.modulus;
        let mut t = 1;
        let mut groups = self.n;
        while groups > 1 {
            let half = groups >> 1;
            for i in 0..half {
                let w = self.psi_inv_rev[half + i];
                let ws = self.psi_inv_rev_shoup[half + i];
                let start = 2 * i * t;
                let (lo, hi) = a[start..start + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let (u, v) = (*x, *y);
                    *x = m.add(u, v);
                    *y = m.mul_shoup(m.sub(u, v), w, ws);
                }
            }
            t <<= 1;
            groups = half;
        }
        for x in a.iter_mut() {
            *x = m.mul_shoup(*x, self.n_inv, self.n_inv_shoup);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckks::modarith::ntt_primes;
    use proptest::prelude::*;

    fn naive_negacyclic(a: &[u64], b: &[u64], m: &Modulus) -> Vec<u64> {
        let n = a.len();
        let mut out = vec![0u64; n];
        for i in 0..n {
            for j in 0..n {
                let p = m.mul(a[i], b[j]);
                let k = i + j;
                if k < n {
                    out[k] = m.add(out[k], p);
                } else {
                    out[k - n] = m.sub(out[k - n], p);
                }
            }
        }
        out
    }

    fn table(n: usize, bits: u32) -> NttTable {
        NttTable::new(Modulus::new(ntt_primes(bits, n, 1, &[])[0]), n)
    }

    #[test]
    fn root_is_primitive() {
        let t = table(16, 30);
        let m = t.modulus;
        let psi = t.psi_rev[1 << 3]; // bitrev(1) in 4 bits is 8
        assert_eq!(m.pow(psi, 16), m.value() - 1);
    }

    #[test]
    fn x_times_x_pow_n_minus_1_is_minus_one() {
        let n = 32;
        let t = table(n, 40);
        let m = t.modulus;
        let mut a = vec![0u64; n];
        let mut b = vec![0u64; n];
        a[1] = 1;
        b[n - 1] = 1;
        t.forward(&mut a);
        t.forward(&mut b);
        let mut c: Vec<u64> = a.iter().zip(&b).map(|(x, y)| m.mul(*x, *y)).collect();
        t.inverse(&mut c);
        assert_eq!(c[0], m.value() - 1);
        assert!(c[1..].iter().all(|&x| x == 0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn roundtrip(seed in any::<u64>()) {
            let n = 1024;
            let t = table(n, 60);
            let q = t.modulus.value();
            let mut s = seed;
            let a: Vec<u64> = (0..n).map(|_| { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); s % q }).collect();
            let mut b = a.clone();
            t.forward(&mut b);
            t.inverse(&mut b);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn convolution_matches_naive(a in proptest::collection::vec(any::<u64>(), 64), b in proptest::collection::vec(any::<u64>(), 64)) {
            let t = table(64, 50);
            let m = t.modulus;
            let a: Vec<u64> = a.into_iter().map(|x| m.reduce(x)).collect();
            let b: Vec<u64> = b.into_iter().map(|x| m.reduce(x)).collect();
            let expected = naive_negacyclic(&a, &b, &m);
            let (mut fa, mut fb) = (a.clone(), b.clone());
            t.forward(&mut fa);
            t.forward(&mut fb);
            let mut c: Vec<u64> = fa.iter().zip(&fb).map(|(x, y)| m.mul(*x, *y)).collect();
            t.inverse(&mut c);
            prop_assert_eq!(c, expected);
        }
    }
}
