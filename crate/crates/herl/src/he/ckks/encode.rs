//! Canonical-embedding encoder for real slot vectors.
//!
//! A message polynomial `m` of degree `< n` represents `n/2` real slots:
//! slot `t` is the real part of `m(zeta^(e_t))`, where `zeta = exp(i pi / n)`
//! is a primitive `2n`-th root of unity and `e_t = 5^t mod 2n` walks half of
//! the odd residues. The other half are their conjugates, so real slot data
//! yields real coefficients. Walking the orbit of 5 makes the ring
//! automorphism `X -> X^(5^r)` act on slots as a cyclic left rotation by `r`.
//!
//! Encoding inverts the evaluation map exactly (the orbit's cosine vectors
//! are orthogonal), scales by `2^scale_log2` and rounds each coefficient to
//! the nearest integer. Decoding evaluates at the orbit points and divides
//! the scale back out. Both are plain `O(n^2)` transforms; ring degrees here
//! are tiny.

use super::poly::{center, from_centered};

pub(crate) struct Encoder {
    n: usize,
    slots: usize,
    /// `e_t = 5^t mod 2n` for `t` in `0..slots`.
    orbit: Vec<usize>,
    /// `cos(pi k / n)` for `k` in `0..2n`.
    cos: Vec<f64>,
}

/// `5^exp mod 2n`.
pub(crate) fn rotation_exponent(n: usize, exp: usize) -> usize {
    let two_n = 2 * n as u64;
    let mut result = 1u64;
    let mut base = 5u64 % two_n;
    let mut e = exp as u64;
    while e > 0 {
        if e & 1 == 1 {
            result = result * base % two_n;
        }
        base = base * base % two_n;
        e >>= 1;
    }
    result as usize
}

impl Encoder {
    pub(crate) fn new(n: usize) -> Self {
        debug_assert!(n >= 4 && n.is_power_of_two());
        let slots = n / 2;
        let orbit = (0..slots).map(|t| rotation_exponent(n, t)).collect();
        let cos = (0..2 * n)
            .map(|k| (std::f64::consts::PI * k as f64 / n as f64).cos())
            .collect();
        Self {
            n,
            slots,
            orbit,
            cos,
        }
    }

    /// Encodes `slots` real values (length exactly `n/2`) at scale
    /// `2^scale_log2` into integer coefficients mod `2^bits`.
    pub(crate) fn encode(&self, values: &[f64], scale_log2: u32, bits: u32) -> Vec<u128> {
        debug_assert_eq!(values.len(), self.slots);
        let mask = super::poly::mask_for_bits(bits);
        let scale = 2f64.powi(scale_log2 as i32);
        let norm = 2.0 / self.n as f64;
        (0..self.n)
            .map(|j| {
                let mut acc = 0.0;
                for (t, &z) in values.iter().enumerate() {
                    acc += z * self.cos[(self.orbit[t] * j) % (2 * self.n)];
                }
                from_centered((acc * norm * scale).round() as i128, mask)
            })
            .collect()
    }

    /// Decodes coefficients mod `2^bits` at scale `2^scale_log2` back to the
    /// `n/2` real slot values (imaginary parts are discarded; the contract
    /// only covers real messages).
    pub(crate) fn decode(&self, coeffs: &[u128], bits: u32, scale_log2: i16) -> Vec<f64> {
        debug_assert_eq!(coeffs.len(), self.n);
        let scale = 2f64.powi(scale_log2 as i32);
        let m: Vec<f64> = coeffs.iter().map(|&v| center(v, bits) as f64).collect();
        (0..self.slots)
            .map(|t| {
                let mut acc = 0.0;
                for (j, &mj) in m.iter().enumerate() {
                    acc += mj * self.cos[(self.orbit[t] * j) % (2 * self.n)];
                }
                acc / scale
            })
            .collect()
    }
}
