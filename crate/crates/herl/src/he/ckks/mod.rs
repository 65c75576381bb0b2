//! A miniature CKKS-style approximate scheme, written from scratch.
//!
//! Plaintexts are real slot vectors canonically embedded into
//! `Z_q[X]/(X^n + 1)` at a fixed power-of-two scale. Ciphertexts are RLWE
//! pairs `(c0, c1)` with `c0 + c1 s = encode(m) + e` for a ternary secret
//! `s`. The modulus ladder consists of powers of two, so every rescale is an
//! exact shift-and-round by the scale itself and ciphertext scales never
//! drift. Multiplication relinearizes the `s^2` term through hybrid key
//! switching (digit decomposition against an auxiliary power-of-two modulus)
//! and consumes one ladder level; slot rotations apply the Galois
//! automorphism `X -> X^(5^r)` followed by a key switch, composed from
//! power-of-two rotation keys.
//!
//! The "bootstrap" is a recryption oracle: evaluation keys carry a copy of
//! the secret key, decrypt internally, re-encrypt fresh at the top level and
//! inject bounded uniform slot noise. That is a deliberate, documented
//! security hole; it stands in for real bootstrapping so that noise
//! accounting over long runs can be studied. Parameters are toy-sized.
//! Nothing here protects data against anyone.

mod encode;
pub(crate) mod poly;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use self::encode::{rotation_exponent, Encoder};
use self::poly::{
    apply_automorphism, center, decompose, divide_round, from_centered, mask_for_bits,
    negacyclic_mul, poly_add, poly_neg,
};
use super::{
    check_same_shape, validate_message, BackendKind, BackendParams, Ciphertext, EvalInner,
    EvalKeys, HeBackend, HeError, KeyMaterial, NoiseStream, Payload, PublicInner, PublicKey,
    SecretInner, SecretKey,
};

/// Digit width for key-switching decomposition.
const DIGIT_BITS: u32 = 12;
/// Recryption noise scale: the injected slot noise has magnitude
/// `2^BOOT_PRECISION_LOSS_BITS * n / scale`, modeling the output precision
/// of real bootstrapping (roughly 15 fractional bits at these sizes) rather
/// than the much cleaner decrypt-reencrypt roundtrip the oracle would
/// otherwise have.
const BOOT_PRECISION_LOSS_BITS: u32 = 6;
/// Most bits the auxiliary key-switching modulus will take.
const MAX_AUX_BITS: u32 = 22;
/// Hard ceiling on ladder bits plus auxiliary bits (u128 working width,
/// minus headroom for centered lifts).
const WIDTH_BUDGET: u32 = 126;

/// One key-switching key: per digit, a pair of polynomials modulo the
/// extended modulus `P * Q`.
#[derive(Clone)]
pub(crate) struct KsKey {
    pub(crate) k0: Vec<Vec<u128>>,
    pub(crate) k1: Vec<Vec<u128>>,
}

/// Lattice evaluation keys: relinearization, power-of-two rotations, and the
/// recryption token (secret-key copy plus injected-noise magnitude) that
/// implements the toy bootstrap.
#[derive(Clone)]
pub(crate) struct CkksEvalKeys {
    pub(crate) relin: KsKey,
    /// `(step, key)` for each power-of-two rotation step.
    pub(crate) rot: Vec<(usize, KsKey)>,
    pub(crate) token_s: Vec<u128>,
    pub(crate) boot_noise: f64,
    pub(crate) aux_bits: u32,
}

/// Widens residues mod `2^from_bits` to residues mod a larger power of two,
/// preserving the centered value.
fn lift_poly(a: &[u128], from_bits: u32, to_mask: u128) -> Vec<u128> {
    a.iter()
        .map(|&v| from_centered(center(v, from_bits), to_mask))
        .collect()
}

pub struct ToyCkks {
    params: BackendParams,
    chain_bits: Vec<u32>,
    total_bits: u32,
    aux_bits: u32,
    encoder: Encoder,
}

impl ToyCkks {
    pub fn new(params: BackendParams) -> Result<Self, HeError> {
        params.validate()?;
        let chain_bits = params.chain_bits()?;
        let total_bits: u32 = chain_bits.iter().sum();
        let aux_bits = MAX_AUX_BITS.min(WIDTH_BUDGET - total_bits);
        let encoder = Encoder::new(params.ring_degree);
        Ok(Self {
            params,
            chain_bits,
            total_bits,
            aux_bits,
            encoder,
        })
    }

    fn n(&self) -> usize {
        self.params.ring_degree
    }

    fn bits_at(&self, level: usize) -> u32 {
        self.chain_bits[..=level].iter().sum()
    }

    fn mask_at(&self, level: usize) -> u128 {
        mask_for_bits(self.bits_at(level))
    }

    fn mask_max(&self) -> u128 {
        mask_for_bits(self.total_bits)
    }

    fn keygen_rng(&self) -> ChaCha20Rng {
        let mut seed = [0u8; 32];
        seed[..8].copy_from_slice(&self.params.seed.to_le_bytes());
        seed[16..].copy_from_slice(b"toy-ckks-keygen\0");
        use rand::SeedableRng;
        ChaCha20Rng::from_seed(seed)
    }

    fn sample_uniform(&self, rng: &mut ChaCha20Rng, mask: u128) -> Vec<u128> {
        (0..self.n())
            .map(|_| {
                let lo = rng.gen::<u64>() as u128;
                let hi = rng.gen::<u64>() as u128;
                ((hi << 64) | lo) & mask
            })
            .collect()
    }

    fn sample_ternary(&self, rng: &mut ChaCha20Rng, mask: u128) -> Vec<u128> {
        (0..self.n())
            .map(|_| from_centered(rng.gen_range(-1i128..=1), mask))
            .collect()
    }

    fn sample_gaussian(&self, rng: &mut ChaCha20Rng, mask: u128) -> Result<Vec<u128>, HeError> {
        let normal = Normal::new(0.0, self.params.noise_stddev)
            .map_err(|e| HeError::InvalidParams(format!("noise stddev: {e}")))?;
        Ok((0..self.n())
            .map(|_| from_centered(normal.sample(rng).round() as i128, mask))
            .collect())
    }

    /// Builds a key switching from `source_key` to `s`, both given modulo
    /// the extended modulus.
    fn make_ks_key(
        &self,
        rng: &mut ChaCha20Rng,
        s_ext: &[u128],
        source_key: &[u128],
        digits: usize,
        ext_mask: u128,
    ) -> Result<KsKey, HeError> {
        let mut k0 = Vec::with_capacity(digits);
        let mut k1 = Vec::with_capacity(digits);
        for t in 0..digits {
            let a = self.sample_uniform(rng, ext_mask);
            let e = self.sample_gaussian(rng, ext_mask)?;
            let shift = self.aux_bits + DIGIT_BITS * t as u32;
            let payload: Vec<u128> = source_key.iter().map(|&v| (v << shift) & ext_mask).collect();
            let body = poly_add(
                &poly_add(&poly_neg(&negacyclic_mul(&a, s_ext, ext_mask), ext_mask), &e, ext_mask),
                &payload,
                ext_mask,
            );
            k0.push(body);
            k1.push(a);
        }
        Ok(KsKey { k0, k1 })
    }

    /// Switches the given polynomial (a `c1`-like term modulo `2^bits`) onto
    /// the main secret key, returning the ciphertext components to add.
    fn key_switch(&self, d: &[u128], key: &KsKey, bits: u32) -> (Vec<u128>, Vec<u128>) {
        let ext_bits = bits + self.aux_bits;
        let ext_mask = mask_for_bits(ext_bits);
        let digits = bits.div_ceil(DIGIT_BITS) as usize;
        debug_assert!(digits <= key.k0.len());
        let n = self.n();
        let mut acc0 = vec![0u128; n];
        let mut acc1 = vec![0u128; n];
        for (t, digit) in decompose(d, DIGIT_BITS, digits).iter().enumerate() {
            let k0: Vec<u128> = key.k0[t].iter().map(|&v| v & ext_mask).collect();
            let k1: Vec<u128> = key.k1[t].iter().map(|&v| v & ext_mask).collect();
            acc0 = poly_add(&acc0, &negacyclic_mul(digit, &k0, ext_mask), ext_mask);
            acc1 = poly_add(&acc1, &negacyclic_mul(digit, &k1, ext_mask), ext_mask);
        }
        (
            divide_round(&acc0, ext_bits, self.aux_bits),
            divide_round(&acc1, ext_bits, self.aux_bits),
        )
    }

    fn components<'a>(&self, ct: &'a Ciphertext) -> Result<(&'a [u128], &'a [u128]), HeError> {
        match &ct.payload {
            Payload::Ckks { c0, c1 } => Ok((c0, c1)),
            Payload::Sim(_) => Err(HeError::BackendMismatch {
                expected: BackendKind::Ckks.name(),
                got: BackendKind::Sim.name(),
            }),
        }
    }

    fn eval_keys<'a>(&self, eval: &'a EvalKeys) -> Result<&'a CkksEvalKeys, HeError> {
        match &eval.inner {
            EvalInner::Ckks(keys) => Ok(keys),
            EvalInner::Sim { .. } => Err(HeError::BackendMismatch {
                expected: BackendKind::Ckks.name(),
                got: BackendKind::Sim.name(),
            }),
        }
    }

    fn wrap(&self, c0: Vec<u128>, c1: Vec<u128>, level: usize) -> Ciphertext {
        Ciphertext {
            payload: Payload::Ckks { c0, c1 },
            level,
            scale_log2: self.params.scale_log2 as i16,
            slot_count: self.params.slot_count(),
        }
    }

    /// Masks both components down to a lower level's modulus.
    fn at_level(&self, c: &[u128], level: usize) -> Vec<u128> {
        let mask = self.mask_at(level);
        c.iter().map(|&v| v & mask).collect()
    }
}

impl HeBackend for ToyCkks {
    fn params(&self) -> &BackendParams {
        &self.params
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Ckks
    }

    fn keygen(&self) -> Result<KeyMaterial, HeError> {
        let mut rng = self.keygen_rng();
        let mask_max = self.mask_max();
        let ext_mask = mask_for_bits(self.total_bits + self.aux_bits);

        let s = self.sample_ternary(&mut rng, mask_max);
        let a = self.sample_uniform(&mut rng, mask_max);
        let e = self.sample_gaussian(&mut rng, mask_max)?;
        let b = poly_add(
            &poly_neg(&negacyclic_mul(&a, &s, mask_max), mask_max),
            &e,
            mask_max,
        );

        let s_ext = lift_poly(&s, self.total_bits, ext_mask);
        let digits = self.total_bits.div_ceil(DIGIT_BITS) as usize;
        let s_sq = negacyclic_mul(&s_ext, &s_ext, ext_mask);
        let relin = self.make_ks_key(&mut rng, &s_ext, &s_sq, digits, ext_mask)?;

        let mut rot = Vec::new();
        let mut step = 1usize;
        while step < self.params.slot_count() {
            let exp = rotation_exponent(self.n(), step);
            let s_rot = apply_automorphism(&s_ext, exp, ext_mask);
            rot.push((step, self.make_ks_key(&mut rng, &s_ext, &s_rot, digits, ext_mask)?));
            step *= 2;
        }

        let boot_noise = 2f64.powi(BOOT_PRECISION_LOSS_BITS as i32) * self.n() as f64
            / 2f64.powi(self.params.scale_log2 as i32);
        Ok(KeyMaterial {
            secret: SecretKey {
                inner: SecretInner::Ckks { s: s.clone() },
            },
            public: PublicKey {
                inner: PublicInner::Ckks { b, a },
            },
            eval: EvalKeys {
                inner: EvalInner::Ckks(Box::new(CkksEvalKeys {
                    relin,
                    rot,
                    token_s: s,
                    boot_noise,
                    aux_bits: self.aux_bits,
                })),
                stream: NoiseStream::new(self.params.seed),
            },
        })
    }

    fn enc(&self, x: &[f64], keys: &KeyMaterial) -> Result<Ciphertext, HeError> {
        validate_message(x, &self.params)?;
        let (pk_b, pk_a) = match &keys.public.inner {
            PublicInner::Ckks { b, a } => (b, a),
            PublicInner::Sim { .. } => {
                return Err(HeError::BackendMismatch {
                    expected: BackendKind::Ckks.name(),
                    got: BackendKind::Sim.name(),
                })
            }
        };
        let mut padded = x.to_vec();
        padded.resize(self.params.slot_count(), 0.0);
        let mask_max = self.mask_max();
        let m = self.encoder.encode(&padded, self.params.scale_log2, self.total_bits);

        let mut rng = keys.eval.stream.next_rng();
        let u = self.sample_ternary(&mut rng, mask_max);
        let e0 = self.sample_gaussian(&mut rng, mask_max)?;
        let e1 = self.sample_gaussian(&mut rng, mask_max)?;
        let c0 = poly_add(
            &poly_add(&negacyclic_mul(pk_b, &u, mask_max), &e0, mask_max),
            &m,
            mask_max,
        );
        let c1 = poly_add(&negacyclic_mul(pk_a, &u, mask_max), &e1, mask_max);
        Ok(self.wrap(c0, c1, self.params.levels()))
    }

    fn dec(&self, ct: &Ciphertext, secret: &SecretKey) -> Result<Vec<f64>, HeError> {
        let (c0, c1) = self.components(ct)?;
        let s = match &secret.inner {
            SecretInner::Ckks { s } => s,
            SecretInner::Sim { .. } => {
                return Err(HeError::BackendMismatch {
                    expected: BackendKind::Ckks.name(),
                    got: BackendKind::Sim.name(),
                })
            }
        };
        let bits = self.bits_at(ct.level);
        let mask = self.mask_at(ct.level);
        let s_here = self.at_level(s, ct.level);
        let phase = poly_add(c0, &negacyclic_mul(c1, &s_here, mask), mask);
        Ok(self.encoder.decode(&phase, bits, ct.scale_log2))
    }

    fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
        check_same_shape(a, b)?;
        let level = a.level.min(b.level);
        let mask = self.mask_at(level);
        let (a0, a1) = self.components(a)?;
        let (b0, b1) = self.components(b)?;
        let c0 = poly_add(&self.at_level(a0, level), &self.at_level(b0, level), mask);
        let c1 = poly_add(&self.at_level(a1, level), &self.at_level(b1, level), mask);
        Ok(self.wrap(c0, c1, level))
    }

    fn mult(&self, a: &Ciphertext, b: &Ciphertext, eval: &EvalKeys) -> Result<Ciphertext, HeError> {
        check_same_shape(a, b)?;
        let keys = self.eval_keys(eval)?;
        let level = a.level.min(b.level);
        if level == 0 {
            return Err(HeError::LevelExhausted { level });
        }
        let bits = self.bits_at(level);
        let mask = self.mask_at(level);
        let (a0_full, a1_full) = self.components(a)?;
        let (b0_full, b1_full) = self.components(b)?;
        let (a0, a1) = (self.at_level(a0_full, level), self.at_level(a1_full, level));
        let (b0, b1) = (self.at_level(b0_full, level), self.at_level(b1_full, level));

        let d0 = negacyclic_mul(&a0, &b0, mask);
        let d1 = poly_add(
            &negacyclic_mul(&a0, &b1, mask),
            &negacyclic_mul(&a1, &b0, mask),
            mask,
        );
        let d2 = negacyclic_mul(&a1, &b1, mask);
        let (r0, r1) = self.key_switch(&d2, &keys.relin, bits);
        let h0 = poly_add(&d0, &r0, mask);
        let h1 = poly_add(&d1, &r1, mask);

        let shift = self.chain_bits[level];
        let c0 = divide_round(&h0, bits, shift);
        let c1 = divide_round(&h1, bits, shift);
        Ok(self.wrap(c0, c1, level - 1))
    }

    fn rotate(
        &self,
        ct: &Ciphertext,
        amount: usize,
        eval: &EvalKeys,
    ) -> Result<Ciphertext, HeError> {
        let slots = self.params.slot_count();
        if amount >= slots {
            return Err(HeError::RotationOutOfRange { amount, slots });
        }
        if amount == 0 {
            return Ok(ct.clone());
        }
        let keys = self.eval_keys(eval)?;
        let bits = self.bits_at(ct.level);
        let mask = self.mask_at(ct.level);
        let (c0, c1) = self.components(ct)?;
        let mut cur0 = c0.to_vec();
        let mut cur1 = c1.to_vec();
        let mut remaining = amount;
        let mut step = 1usize;
        while remaining > 0 {
            if remaining & 1 == 1 {
                let key = keys
                    .rot
                    .iter()
                    .find(|(st, _)| *st == step)
                    .map(|(_, k)| k)
                    .ok_or_else(|| {
                        HeError::Internal(format!("missing rotation key for step {step}"))
                    })?;
                let exp = rotation_exponent(self.n(), step);
                let rot0 = apply_automorphism(&cur0, exp, mask);
                let rot1 = apply_automorphism(&cur1, exp, mask);
                let (k0, k1) = self.key_switch(&rot1, key, bits);
                cur0 = poly_add(&rot0, &k0, mask);
                cur1 = k1;
            }
            remaining >>= 1;
            step *= 2;
        }
        Ok(self.wrap(cur0, cur1, ct.level))
    }

    fn bootstrap(&self, ct: &Ciphertext, eval: &EvalKeys) -> Result<Ciphertext, HeError> {
        let keys = self.eval_keys(eval)?;
        let (c0, c1) = self.components(ct)?;
        let bits = self.bits_at(ct.level);
        let mask = self.mask_at(ct.level);
        let mask_max = self.mask_max();

        // Recryption: read the noisy message with the embedded token, then
        // produce a fresh symmetric encryption at the top level.
        let s_here = self.at_level(&keys.token_s, ct.level);
        let phase = poly_add(c0, &negacyclic_mul(c1, &s_here, mask), mask);
        let lifted = lift_poly(&phase, bits, mask_max);

        let mut rng = eval.stream.next_rng();
        let a = self.sample_uniform(&mut rng, mask_max);
        let e = self.sample_gaussian(&mut rng, mask_max)?;
        let body = poly_add(
            &poly_add(
                &poly_neg(&negacyclic_mul(&a, &keys.token_s, mask_max), mask_max),
                &e,
                mask_max,
            ),
            &lifted,
            mask_max,
        );

        let slot_noise: Vec<f64> = (0..self.params.slot_count())
            .map(|_| rng.gen_range(-keys.boot_noise..=keys.boot_noise))
            .collect();
        let noise_poly = self
            .encoder
            .encode(&slot_noise, self.params.scale_log2, self.total_bits);
        let c0 = poly_add(&body, &noise_poly, mask_max);
        Ok(self.wrap(c0, a, self.params.levels()))
    }
}
