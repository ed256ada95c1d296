//! Canonical-embedding encoder: real slot vectors to integer polynomials.
//!
//! Slot `j` holds the evaluation of the message polynomial at `zeta^(5^j)`,
//! `zeta = exp(i*pi/N)`. The transform is the special FFT restricted to
//! the orbit of 5 in `(Z/2N)^*`.

use num_complex::Complex64;
use std::f64::consts::PI;

use super::HeError;

#[derive(Clone, Debug)]
pub struct Encoder {
    n: usize,
    m: usize,
    rot_group: Vec<usize>,
    ksi_pows: Vec<Complex64>,
}

fn bit_reverse_in_place<T>(v: &mut [T]) {
    let n = v.len();
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            v.swap(i, j);
        }
    }
}

impl Encoder {
    pub fn new(n: usize) -> Self {
        let m = 2 * n;
        let slots = n / 2;
        let mut rot_group = Vec::with_capacity(slots);
        let mut g = 1usize;
        for _ in 0..slots {
            rot_group.push(g);
            g = g * 5 % m;
        }
        let ksi_pows = (0..=m)
            .map(|k| {
                let angle = 2.0 * PI * k as f64 / m as f64;
                Complex64::new(angle.cos(), angle.sin())
            })
            .collect();
        Self {
            n,
            m,
            rot_group,
            ksi_pows,
        }
    }

    pub fn slots(&self) -> usize {
        self.n / 2
    }

    /// Polynomial-to-slots transform (evaluation at the slot roots).
    pub fn embed(&self, vals: &mut [Complex64]) {
        let size = vals.len();
        bit_reverse_in_place(vals);
        let mut len = 2;
        while len <= size {
            let lenh = len >> 1;
            let lenq = len << 2;
            for i in (0..size).step_by(len) {
                for j in 0..lenh {
                    let idx = (self.rot_group[j] % lenq) * self.m / lenq;
                    let u = vals[i + j];
                    let v = vals[i + j + lenh] * self.ksi_pows[idx];
                    vals[i + j] = u + v;
                    vals[i + j + lenh] = u - v;
                }
            }
            len <<= 1;
        }
    }

    /// Inverse of [`embed`](Self::embed).
    pub fn embed_inv(&self, vals: &mut [Complex64]) {
        let size = vals.len();
        let mut len = size;
        while len >= 2 {
            let lenh = len >> 1;
            let lenq = len << 2;
            for i in (0..size).step_by(len) {
                for j in 0..lenh {
                    let idx = (lenq - (self.rot_group[j] % lenq)) * self.m / lenq;
                    let u = vals[i + j] + vals[i + j + lenh];
                    let v = (vals[i + j] - vals[i + j + lenh]) * self.ksi_pows[idx];
                    vals[i + j] = u;
                    vals[i + j + lenh] = v;
                }
            }
            len >>= 1;
        }
        bit_reverse_in_place(vals);
        let inv = 1.0 / size as f64;
        for v in vals.iter_mut() {
            *v *= inv;
        }
    }

    /// Encodes up to N/2 reals into integer coefficients at `scale`.
    pub fn encode(&self, values: &[f64], scale: f64) -> Result<Vec<i128>, HeError> {
        let slots = self.slots();
        if values.len() > slots {
            return Err(HeError::TooManySlots {
                given: values.len(),
                slots,
            });
        }
        let mut z: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        z.resize(slots, Complex64::new(0.0, 0.0));
        self.embed_inv(&mut z);
        let mut coeffs = vec![0i128; self.n];
        for (i, c) in z.iter().enumerate() {
            coeffs[i] = (c.re * scale).round() as i128;
            coeffs[i + slots] = (c.im * scale).round() as i128;
        }
        Ok(coeffs)
    }

    /// Decodes real coefficients (already centered) at `scale` into slot values.
    pub fn decode(&self, coeffs: &[f64], scale: f64) -> Vec<f64> {
        self.slot_values(coeffs)
            .into_iter()
            .map(|z| z.re / scale)
            .collect()
    }

    /// Complex slot evaluations of a real-coefficient polynomial.
    pub fn slot_values(&self, coeffs: &[f64]) -> Vec<Complex64> {
        let slots = self.slots();
        debug_assert_eq!(coeffs.len(), self.n);
        let mut z: Vec<Complex64> = (0..slots)
            .map(|i| Complex64::new(coeffs[i], coeffs[i + slots]))
            .collect();
        self.embed(&mut z);
        z
    }

    /// Canonical-embedding infinity norm of a real-coefficient polynomial.
    ///
    /// The slot roots and their conjugates cover every primitive 2N-th root,
    /// and a real polynomial takes conjugate values on conjugate roots.
    pub fn canonical_norm(&self, coeffs: &[f64]) -> f64 {
        self.slot_values(coeffs)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Evaluates `sum_i c_i * zeta^(5^j * i)` directly.
    fn direct_eval(coeffs: &[f64]) -> Vec<Complex64> {
        let n = coeffs.len();
        let m = 2 * n;
        let mut g = 1usize;
        let mut out = Vec::new();
        for _ in 0..n / 2 {
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, &c) in coeffs.iter().enumerate() {
                let e = (g * i) % m;
                let a = 2.0 * PI * e as f64 / m as f64;
                acc += Complex64::new(a.cos(), a.sin()) * c;
            }
            out.push(acc);
            g = g * 5 % m;
        }
        out
    }

    #[test]
    fn embedding_matches_direct_evaluation() {
        let n = 32;
        let enc = Encoder::new(n);
        let coeffs: Vec<f64> = (0..n).map(|i| ((i * 7919) % 23) as f64 - 11.0).collect();
        let fast = enc.slot_values(&coeffs);
        let slow = direct_eval(&coeffs);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn canonical_norm_covers_all_roots() {
        let n = 16;
        let enc = Encoder::new(n);
        let coeffs: Vec<f64> = (0..n).map(|i| (i as f64).sin() * 5.0).collect();
        let mut best: f64 = 0.0;
        for k in (1..2 * n).step_by(2) {
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, &c) in coeffs.iter().enumerate() {
                let a = PI * (k * i) as f64 / n as f64;
                acc += Complex64::new(a.cos(), a.sin()) * c;
            }
            best = best.max(acc.norm());
        }
        assert!((enc.canonical_norm(&coeffs) - best).abs() < 1e-9);
    }

    #[test]
    fn small_vector_roundtrip() {
        let enc = Encoder::new(8192);
        let v = [0.5, -0.25, 1.0];
        let scale = 2f64.powi(40);
        let c: Vec<f64> = enc.encode(&v, scale).unwrap().iter().map(|&x| x as f64).collect();
        let out = enc.decode(&c, scale);
        for (i, x) in v.iter().enumerate() {
            assert!((out[i] - x).abs() < 2f64.powi(-20));
        }
        assert!(out[3..].iter().all(|x| x.abs() < 2f64.powi(-20)));
    }

    #[test]
    fn zero_encodes_to_zero_polynomial() {
        let enc = Encoder::new(64);
        assert!(enc.encode(&[0.0; 32], 1e12).unwrap().iter().all(|&c| c == 0));
    }

    #[test]
    fn too_many_slots() {
        let enc = Encoder::new(16);
        assert!(matches!(
            enc.encode(&[0.0; 9], 1.0),
            Err(HeError::TooManySlots { given: 9, slots: 8 })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn encoding_is_additive(v in proptest::collection::vec(-1.0f64..1.0, 1..512), w in proptest::collection::vec(-1.0f64..1.0, 512)) {
            let enc = Encoder::new(1024);
            let scale = 2f64.powi(40);
            let w = &w[..v.len()];
            let a = enc.encode(&v, scale).unwrap();
            let b = enc.encode(w, scale).unwrap();
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x + y) as f64).collect();
            let out = enc.decode(&sum, scale);
            for i in 0..v.len() {
                prop_assert!((out[i] - (v[i] + w[i])).abs() < 2f64.powi(-19));
            }
        }

        #[test]
        fn embed_inv_is_inverse(re in proptest::collection::vec(-10.0f64..10.0, 64), im in proptest::collection::vec(-10.0f64..10.0, 64)) {
            let enc = Encoder::new(128);
            let orig: Vec<Complex64> = re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect();
            let mut z = orig.clone();
            enc.embed_inv(&mut z);
            enc.embed(&mut z);
            for (a, b) in z.iter().zip(&orig) {
                prop_assert!((a - b).norm() < 1e-9);
            }
        }
    }
}
