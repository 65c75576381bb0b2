//! Arithmetic in `Z_q[X] / (X^n + 1)` for power-of-two `q` up to 126 bits.
//!
//! Coefficients are `u128` values reduced modulo `2^bits`, stored low bits
//! only. Because every modulus is a power of two, reduction is a mask and
//! wrapping `u128` arithmetic is exact: the low `bits` of a wrapped product
//! equal the product modulo `2^bits`.

/// `2^bits - 1`. Valid for `bits <= 127`.
pub(crate) fn mask_for_bits(bits: u32) -> u128 {
    debug_assert!((1..=127).contains(&bits));
    (1u128 << bits) - 1
}

/// Lifts a residue to the centered representative in `[-2^(bits-1), 2^(bits-1))`.
pub(crate) fn center(v: u128, bits: u32) -> i128 {
    let half = 1u128 << (bits - 1);
    if v >= half {
        v as i128 - (1i128 << bits)
    } else {
        v as i128
    }
}

/// Reduces a centered (possibly negative) value modulo `2^bits`.
pub(crate) fn from_centered(x: i128, mask: u128) -> u128 {
    (x as u128) & mask
}

pub(crate) fn poly_add(a: &[u128], b: &[u128], mask: u128) -> Vec<u128> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.wrapping_add(*y) & mask)
        .collect()
}

pub(crate) fn poly_neg(a: &[u128], mask: u128) -> Vec<u128> {
    a.iter().map(|x| x.wrapping_neg() & mask).collect()
}

/// Schoolbook negacyclic product: `X^n = -1`.
pub(crate) fn negacyclic_mul(a: &[u128], b: &[u128], mask: u128) -> Vec<u128> {
    let n = a.len();
    debug_assert_eq!(b.len(), n);
    let mut acc = vec![0u128; n];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            let p = ai.wrapping_mul(bj);
            let k = i + j;
            if k < n {
                acc[k] = acc[k].wrapping_add(p);
            } else {
                acc[k - n] = acc[k - n].wrapping_sub(p);
            }
        }
    }
    for v in &mut acc {
        *v &= mask;
    }
    acc
}

/// Applies `X -> X^exp` for odd `exp`, a ring automorphism of the
/// negacyclic quotient. `X^t` with `t >= n` picks up a sign via `X^n = -1`.
pub(crate) fn apply_automorphism(a: &[u128], exp: usize, mask: u128) -> Vec<u128> {
    let n = a.len();
    debug_assert!(exp % 2 == 1);
    let two_n = 2 * n;
    let mut out = vec![0u128; n];
    for (j, &aj) in a.iter().enumerate() {
        let t = (j * exp) % two_n;
        if t < n {
            out[t] = aj & mask;
        } else {
            out[t - n] = aj.wrapping_neg() & mask;
        }
    }
    out
}

/// Base-`2^digit_bits` decomposition of every coefficient, low digit first.
/// Exact as long as `digits * digit_bits` covers the coefficient width.
pub(crate) fn decompose(a: &[u128], digit_bits: u32, digits: usize) -> Vec<Vec<u128>> {
    let digit_mask = mask_for_bits(digit_bits);
    (0..digits)
        .map(|t| {
            a.iter()
                .map(|&v| (v >> (t as u32 * digit_bits)) & digit_mask)
                .collect()
        })
        .collect()
}

/// Centered division by `2^shift_bits` with rounding, mapping residues mod
/// `2^from_bits` to residues mod `2^(from_bits - shift_bits)`. This is both
/// the rescale step and the key-switch modulus removal.
pub(crate) fn divide_round(a: &[u128], from_bits: u32, shift_bits: u32) -> Vec<u128> {
    debug_assert!(shift_bits >= 1 && shift_bits < from_bits);
    let to_mask = mask_for_bits(from_bits - shift_bits);
    let half = 1i128 << (shift_bits - 1);
    a.iter()
        .map(|&v| {
            let c = center(v, from_bits);
            let rounded = (c + half) >> shift_bits;
            from_centered(rounded, to_mask)
        })
        .collect()
}
