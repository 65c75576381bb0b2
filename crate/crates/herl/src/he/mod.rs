//! Homomorphic-encryption backends behind one slot-vector interface.
//!
//! Two backends implement [`HeBackend`]:
//!
//! * [`sim::NoiseSim`] carries plaintext slots and injects seeded error of
//!   configurable magnitude per operation. It is the fast reference for
//!   studying error propagation, and with a zero noise model it reproduces
//!   plaintext arithmetic bit for bit.
//! * [`ckks::ToyCkks`] is a from-scratch approximate lattice scheme over a
//!   negacyclic ring with power-of-two moduli: canonical-embedding encoding,
//!   RLWE encryption, relinearized slotwise multiplication, Galois slot
//!   rotations and an explicitly insecure recryption bootstrap.
//!
//! Both operate on [`Ciphertext`] values holding `ring_degree / 2` slots.
//! All randomness (key generation, encryption, injected noise) derives from
//! the seed in [`BackendParams`], and evaluation-time draws come from a
//! counted tape carried inside [`EvalKeys`], so runs reproduce exactly even
//! when evaluation happens in another process.
//!
//! Neither backend offers real security: parameters are tiny and the
//! bootstrap holds secret material. They exist to measure noise, not to
//! protect data.

pub mod ckks;
pub mod serial;
pub mod sim;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Wire-format version for ciphertext and key serialization.
pub const FORMAT_VERSION: u16 = 1;

/// Minimum trials accepted by [`calibrate_noise_bounds`].
pub const MIN_CALIBRATION_TRIALS: usize = 100;

/// Calibrated bounds are the observed per-operation maximum times this.
pub const SAFETY_FACTOR: f64 = 2.0;

#[derive(Debug, Error)]
pub enum HeError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("message has {len} entries but the backend offers {slots} slots")]
    MessageTooLong { len: usize, slots: usize },
    #[error("message entry {value} exceeds the advertised bound {bound}")]
    MessageOutOfRange { value: f64, bound: f64 },
    #[error("message entry {index} is not finite")]
    NonFiniteMessage { index: usize },
    #[error("slot counts differ: {a} vs {b}")]
    SlotMismatch { a: usize, b: usize },
    #[error("operand scales differ: 2^{a} vs 2^{b}")]
    ScaleMismatch { a: i16, b: i16 },
    #[error("no rescale level left at level {level}; bootstrap before multiplying again")]
    LevelExhausted { level: usize },
    #[error("rotation by {amount} out of range for {slots} slots")]
    RotationOutOfRange { amount: usize, slots: usize },
    #[error("expected a {expected} value, got {got}")]
    BackendMismatch {
        expected: &'static str,
        got: &'static str,
    },
    #[error("serialization: {0}")]
    Serialization(String),
    #[error("internal invariant broken: {0}")]
    Internal(String),
}

/// Which backend produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Sim,
    Ckks,
}

impl BackendKind {
    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Sim => "noise-sim",
            BackendKind::Ckks => "toy-ckks",
        }
    }

    pub fn byte(self) -> u8 {
        match self {
            BackendKind::Sim => 0x01,
            BackendKind::Ckks => 0x02,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self, HeError> {
        match b {
            0x01 => Ok(BackendKind::Sim),
            0x02 => Ok(BackendKind::Ckks),
            other => Err(HeError::Serialization(format!(
                "unknown backend tag {other:#04x}"
            ))),
        }
    }
}

/// Shared backend parameters. The modulus ladder is a list of power-of-two
/// moduli: the first entry is the base modulus and every later entry is the
/// rescale divisor consumed by one multiplication, which must equal the
/// scaling factor exactly so that ciphertext scales stay at one fixed power
/// of two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendParams {
    /// Ring degree `N`, a power of two. Slot count is `N / 2`.
    pub ring_degree: usize,
    /// Scaling factor exponent: messages are encoded at `2^scale_log2`.
    pub scale_log2: u32,
    /// Modulus ladder, largest first.
    pub modulus_chain: Vec<u64>,
    /// Standard deviation of lattice error terms.
    pub noise_stddev: f64,
    /// Largest message magnitude callers may encrypt.
    pub message_bound: f64,
    /// Master seed for keys and every noise draw.
    pub seed: u64,
}

/// Bit budget available to the ladder plus the key-switching modulus.
const TOTAL_BIT_BUDGET: u32 = 126;
/// Bits reserved for the key-switching modulus at minimum.
const MIN_AUX_BITS: u32 = 8;

impl BackendParams {
    /// Parameters with the stock ladder `[2^(s+8), 2^s, 2^s]`, supporting
    /// multiplicative depth 2 between bootstraps.
    pub fn new(ring_degree: usize, scale_log2: u32, seed: u64) -> Self {
        let s = scale_log2 as u64;
        Self {
            ring_degree,
            scale_log2,
            modulus_chain: vec![1u64 << (s + 8).min(63), 1u64 << s.min(63), 1u64 << s.min(63)],
            noise_stddev: 3.2,
            message_bound: 2.0,
            seed,
        }
    }

    pub fn slot_count(&self) -> usize {
        self.ring_degree / 2
    }

    /// Highest level, i.e. number of rescales a fresh ciphertext can absorb.
    pub fn levels(&self) -> usize {
        self.modulus_chain.len() - 1
    }

    /// Log2 of each ladder entry, validated as exact powers of two.
    pub fn chain_bits(&self) -> Result<Vec<u32>, HeError> {
        self.modulus_chain
            .iter()
            .map(|&q| {
                if q >= 2 && q.is_power_of_two() {
                    Ok(q.trailing_zeros())
                } else {
                    Err(HeError::InvalidParams(format!(
                        "modulus {q} is not a power of two >= 2"
                    )))
                }
            })
            .collect()
    }

    /// Total modulus bits available at a level (ladder entries `0..=level`).
    pub fn modulus_bits_at(&self, level: usize) -> Result<u32, HeError> {
        let bits = self.chain_bits()?;
        if level >= bits.len() {
            return Err(HeError::InvalidParams(format!(
                "level {level} outside a ladder of {} moduli",
                bits.len()
            )));
        }
        Ok(bits[..=level].iter().sum())
    }

    pub fn validate(&self) -> Result<(), HeError> {
        if self.ring_degree < 8 || !self.ring_degree.is_power_of_two() {
            return Err(HeError::InvalidParams(format!(
                "ring degree {} must be a power of two >= 8",
                self.ring_degree
            )));
        }
        if self.scale_log2 < 10 {
            return Err(HeError::InvalidParams(format!(
                "scale exponent {} below the minimum of 10",
                self.scale_log2
            )));
        }
        if self.modulus_chain.len() < 3 {
            return Err(HeError::InvalidParams(String::from(
                "modulus ladder must allow at least two rescales before a bootstrap",
            )));
        }
        let bits = self.chain_bits()?;
        for (i, &b) in bits.iter().enumerate().skip(1) {
            if b != self.scale_log2 {
                return Err(HeError::InvalidParams(format!(
                    "ladder entry {i} has {b} bits; rescale moduli must equal the scale exactly"
                )));
            }
        }
        if bits[0] < self.scale_log2 + 2 {
            return Err(HeError::InvalidParams(String::from(
                "base modulus leaves no headroom above the scale",
            )));
        }
        let total: u32 = bits.iter().sum();
        if total + MIN_AUX_BITS > TOTAL_BIT_BUDGET {
            return Err(HeError::InvalidParams(format!(
                "ladder uses {total} bits, over the {} available",
                TOTAL_BIT_BUDGET - MIN_AUX_BITS
            )));
        }
        if !(self.noise_stddev.is_finite() && self.noise_stddev >= 0.0) {
            return Err(HeError::InvalidParams(format!(
                "noise stddev {} must be finite and nonnegative",
                self.noise_stddev
            )));
        }
        if !(self.message_bound.is_finite() && self.message_bound > 0.0) {
            return Err(HeError::InvalidParams(format!(
                "message bound {} must be positive and finite",
                self.message_bound
            )));
        }
        Ok(())
    }
}

/// Per-operation noise magnitudes the simulator injects (uniform in
/// `[-magnitude, +magnitude]` per slot). Also reusable as a hand-set bound
/// description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub enc: f64,
    pub mult: f64,
    pub rot: f64,
    pub boot: f64,
}

impl NoiseModel {
    /// No injected noise: the simulator becomes exact plaintext arithmetic.
    pub fn zero() -> Self {
        Self {
            enc: 0.0,
            mult: 0.0,
            rot: 0.0,
            boot: 0.0,
        }
    }

    /// Default magnitudes, proportional to `N / scale` like the lattice
    /// backend's observed noise.
    pub fn default_for(params: &BackendParams) -> Self {
        let unit = params.ring_degree as f64 / 2f64.powi(params.scale_log2 as i32);
        Self {
            enc: 0.5 * unit,
            mult: unit,
            rot: unit,
            boot: 4.0 * unit,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            enc: self.enc * factor,
            mult: self.mult * factor,
            rot: self.rot * factor,
            boot: self.boot * factor,
        }
    }

    pub fn validate(&self) -> Result<(), HeError> {
        for (name, v) in [
            ("enc", self.enc),
            ("mult", self.mult),
            ("rot", self.rot),
            ("boot", self.boot),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(HeError::InvalidParams(format!(
                    "noise magnitude {name} = {v} must be finite and nonnegative"
                )));
            }
        }
        Ok(())
    }
}

/// Empirical per-operation error bounds, from [`calibrate_noise_bounds`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBounds {
    pub enc: f64,
    pub mult: f64,
    pub rot: f64,
    pub boot: f64,
}

/// Deterministic tape of per-operation RNGs. Every noisy backend operation
/// consumes one counter tick and derives an independent stream from
/// `(master seed, tick)`, so results depend only on the seed and the order
/// of operations, not on process boundaries. Zero-magnitude draws are
/// skipped entirely and leave the tape untouched.
#[derive(Debug)]
pub struct NoiseStream {
    master_seed: u64,
    counter: AtomicU64,
}

impl NoiseStream {
    pub(crate) fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            counter: AtomicU64::new(0),
        }
    }

    pub(crate) fn resume(master_seed: u64, cursor: u64) -> Self {
        Self {
            master_seed,
            counter: AtomicU64::new(cursor),
        }
    }

    pub(crate) fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Ticks consumed so far.
    pub fn cursor(&self) -> u64 {
        self.counter.load(Ordering::Relaxed)
    }

    pub(crate) fn next_rng(&self) -> ChaCha20Rng {
        let tick = self.counter.fetch_add(1, Ordering::Relaxed);
        let mut seed = [0u8; 32];
        seed[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        seed[8..16].copy_from_slice(&tick.to_le_bytes());
        seed[16..].copy_from_slice(b"op-noise-stream\0");
        ChaCha20Rng::from_seed(seed)
    }
}

impl Clone for NoiseStream {
    fn clone(&self) -> Self {
        Self {
            master_seed: self.master_seed,
            counter: AtomicU64::new(self.cursor()),
        }
    }
}

#[derive(Clone)]
pub(crate) enum SecretInner {
    Sim { key_id: u64 },
    Ckks { s: Vec<u128> },
}

/// Decryption key. Holders of this value can read every ciphertext produced
/// under the matching key material; it never travels to the evaluator.
#[derive(Clone)]
pub struct SecretKey {
    pub(crate) inner: SecretInner,
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(<redacted>)")
    }
}

#[derive(Debug, Clone)]
pub(crate) enum PublicInner {
    Sim { key_id: u64 },
    Ckks { b: Vec<u128>, a: Vec<u128> },
}

/// Encryption key.
#[derive(Debug, Clone)]
pub struct PublicKey {
    pub(crate) inner: PublicInner,
}

#[derive(Clone)]
pub(crate) enum EvalInner {
    Sim { model: NoiseModel },
    Ckks(Box<ckks::CkksEvalKeys>),
}

/// Evaluation key material: everything the (untrusted) evaluator needs to
/// add, multiply, rotate and bootstrap. Carries the noise tape so evaluation
/// stays deterministic across processes.
///
/// For the lattice backend this includes the recryption token that powers
/// the toy bootstrap, which embeds secret material. That is the documented
/// security hole of the prototype.
pub struct EvalKeys {
    pub(crate) inner: EvalInner,
    pub(crate) stream: NoiseStream,
}

impl EvalKeys {
    pub fn kind(&self) -> BackendKind {
        match self.inner {
            EvalInner::Sim { .. } => BackendKind::Sim,
            EvalInner::Ckks(_) => BackendKind::Ckks,
        }
    }

    /// The simulator's injected-noise model, if this is simulator material.
    pub fn sim_model(&self) -> Option<&NoiseModel> {
        match &self.inner {
            EvalInner::Sim { model } => Some(model),
            EvalInner::Ckks(_) => None,
        }
    }

    pub fn stream_cursor(&self) -> u64 {
        self.stream.cursor()
    }
}

impl Clone for EvalKeys {
    fn clone(&self) -> Self {
        Self {
            inner: self.inner.clone(),
            stream: self.stream.clone(),
        }
    }
}

impl fmt::Debug for EvalKeys {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EvalKeys({}, cursor {})", self.kind().name(), self.stream_cursor())
    }
}

/// Full key set from [`HeBackend::keygen`].
#[derive(Debug, Clone)]
pub struct KeyMaterial {
    pub secret: SecretKey,
    pub public: PublicKey,
    pub eval: EvalKeys,
}

#[derive(Clone, PartialEq)]
pub(crate) enum Payload {
    Sim(Vec<f64>),
    Ckks { c0: Vec<u128>, c1: Vec<u128> },
}

impl Payload {
    fn kind(&self) -> BackendKind {
        match self {
            Payload::Sim(_) => BackendKind::Sim,
            Payload::Ckks { .. } => BackendKind::Ckks,
        }
    }
}

/// An encrypted slot vector. The payload is opaque outside the backend
/// layer; levels and scales are visible because evaluators schedule around
/// them.
#[derive(Clone, PartialEq)]
pub struct Ciphertext {
    pub(crate) payload: Payload,
    pub(crate) level: usize,
    pub(crate) scale_log2: i16,
    pub(crate) slot_count: usize,
}

impl Ciphertext {
    pub fn kind(&self) -> BackendKind {
        self.payload.kind()
    }

    /// Rescale operations left before a bootstrap is needed.
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn scale_log2(&self) -> i16 {
        self.scale_log2
    }

    pub fn slot_count(&self) -> usize {
        self.slot_count
    }
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Ciphertext({}, {} slots, level {}, scale 2^{})",
            self.kind().name(),
            self.slot_count,
            self.level,
            self.scale_log2
        )
    }
}

/// The backend contract. All operations are value-semantic: inputs are
/// borrowed, outputs are fresh ciphertexts.
///
/// * `add` is exact (no injected or lattice noise beyond representation).
/// * `mult` and `rotate` take evaluation keys; `mult` consumes one level.
/// * `rotate` by 0 is a plain copy and draws no randomness.
/// * `bootstrap` restores the full level budget.
pub trait HeBackend {
    fn params(&self) -> &BackendParams;
    fn kind(&self) -> BackendKind;
    fn keygen(&self) -> Result<KeyMaterial, HeError>;
    fn enc(&self, x: &[f64], keys: &KeyMaterial) -> Result<Ciphertext, HeError>;
    fn dec(&self, ct: &Ciphertext, secret: &SecretKey) -> Result<Vec<f64>, HeError>;
    fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError>;
    fn mult(&self, a: &Ciphertext, b: &Ciphertext, eval: &EvalKeys) -> Result<Ciphertext, HeError>;
    fn rotate(&self, ct: &Ciphertext, amount: usize, eval: &EvalKeys)
        -> Result<Ciphertext, HeError>;
    fn bootstrap(&self, ct: &Ciphertext, eval: &EvalKeys) -> Result<Ciphertext, HeError>;
}

/// Constructs a backend by kind. `sim_model` configures the simulator's
/// injected noise (defaulting to [`NoiseModel::default_for`]) and must be
/// `None` for the lattice backend.
pub fn make_backend(
    kind: BackendKind,
    params: BackendParams,
    sim_model: Option<NoiseModel>,
) -> Result<Box<dyn HeBackend>, HeError> {
    match kind {
        BackendKind::Sim => {
            let model = sim_model.unwrap_or_else(|| NoiseModel::default_for(&params));
            Ok(Box::new(sim::NoiseSim::new(params, model)?))
        }
        BackendKind::Ckks => {
            if sim_model.is_some() {
                return Err(HeError::InvalidParams(String::from(
                    "injected-noise model only applies to the simulator backend",
                )));
            }
            Ok(Box::new(ckks::ToyCkks::new(params)?))
        }
    }
}

pub(crate) fn validate_message(x: &[f64], params: &BackendParams) -> Result<(), HeError> {
    if x.len() > params.slot_count() {
        return Err(HeError::MessageTooLong {
            len: x.len(),
            slots: params.slot_count(),
        });
    }
    for (index, &v) in x.iter().enumerate() {
        if !v.is_finite() {
            return Err(HeError::NonFiniteMessage { index });
        }
        if v.abs() > params.message_bound {
            return Err(HeError::MessageOutOfRange {
                value: v,
                bound: params.message_bound,
            });
        }
    }
    Ok(())
}

pub(crate) fn check_same_shape(a: &Ciphertext, b: &Ciphertext) -> Result<(), HeError> {
    if a.kind() != b.kind() {
        return Err(HeError::BackendMismatch {
            expected: a.kind().name(),
            got: b.kind().name(),
        });
    }
    if a.slot_count != b.slot_count {
        return Err(HeError::SlotMismatch {
            a: a.slot_count,
            b: b.slot_count,
        });
    }
    if a.scale_log2 != b.scale_log2 {
        return Err(HeError::ScaleMismatch {
            a: a.scale_log2,
            b: b.scale_log2,
        });
    }
    Ok(())
}

/// Measures per-operation error envelopes empirically: `trials` random
/// messages per operation, comparing each operation against its plaintext
/// reference on decrypted operands, keeping the maximum slotwise deviation,
/// and multiplying by [`SAFETY_FACTOR`]. Addition is not calibrated because
/// the contract requires it exact.
pub fn calibrate_noise_bounds(
    backend: &dyn HeBackend,
    keys: &KeyMaterial,
    trials: usize,
    seed: u64,
) -> Result<NoiseBounds, HeError> {
    if trials < MIN_CALIBRATION_TRIALS {
        return Err(HeError::InvalidParams(format!(
            "calibration needs at least {MIN_CALIBRATION_TRIALS} trials, got {trials}"
        )));
    }
    let params = backend.params();
    let slots = params.slot_count();
    let bound = params.message_bound;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sample = |rng: &mut ChaCha20Rng| -> Vec<f64> {
        (0..slots).map(|_| rng.gen_range(-bound..bound)).collect()
    };
    let max_abs_diff = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };

    let (mut enc_max, mut mult_max, mut rot_max, mut boot_max) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..trials {
        let xs = sample(&mut rng);
        let ys = sample(&mut rng);

        let cx = backend.enc(&xs, keys)?;
        let dx = backend.dec(&cx, &keys.secret)?;
        enc_max = enc_max.max(max_abs_diff(&dx, &xs));

        let cy = backend.enc(&ys, keys)?;
        let dy = backend.dec(&cy, &keys.secret)?;
        let prod = backend.mult(&cx, &cy, &keys.eval)?;
        let dprod = backend.dec(&prod, &keys.secret)?;
        let reference: Vec<f64> = xs.iter().zip(&dy).map(|(x, y)| x * y).collect();
        mult_max = mult_max.max(max_abs_diff(&dprod, &reference));

        let amount = rng.gen_range(1..slots);
        let rotated = backend.rotate(&cx, amount, &keys.eval)?;
        let drot = backend.dec(&rotated, &keys.secret)?;
        let reference = crate::rerl::rot_vec(&dx, amount);
        rot_max = rot_max.max(max_abs_diff(&drot, &reference));

        let booted = backend.bootstrap(&cx, &keys.eval)?;
        let dboot = backend.dec(&booted, &keys.secret)?;
        boot_max = boot_max.max(max_abs_diff(&dboot, &dx));
    }
    Ok(NoiseBounds {
        enc: SAFETY_FACTOR * enc_max,
        mult: SAFETY_FACTOR * mult_max,
        rot: SAFETY_FACTOR * rot_max,
        boot: SAFETY_FACTOR * boot_max,
    })
}

/// Operation totals recorded by [`CountingBackend`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct OpCounts {
    pub enc: u64,
    pub dec: u64,
    pub add: u64,
    pub mult: u64,
    pub rotate: u64,
    pub bootstrap: u64,
}

/// Transparent wrapper that counts operations flowing into a backend.
pub struct CountingBackend<'a> {
    inner: &'a dyn HeBackend,
    enc: AtomicU64,
    dec: AtomicU64,
    add: AtomicU64,
    mult: AtomicU64,
    rotate: AtomicU64,
    bootstrap: AtomicU64,
}

impl<'a> CountingBackend<'a> {
    pub fn new(inner: &'a dyn HeBackend) -> Self {
        Self {
            inner,
            enc: AtomicU64::new(0),
            dec: AtomicU64::new(0),
            add: AtomicU64::new(0),
            mult: AtomicU64::new(0),
            rotate: AtomicU64::new(0),
            bootstrap: AtomicU64::new(0),
        }
    }

    pub fn counts(&self) -> OpCounts {
        OpCounts {
            enc: self.enc.load(Ordering::Relaxed),
            dec: self.dec.load(Ordering::Relaxed),
            add: self.add.load(Ordering::Relaxed),
            mult: self.mult.load(Ordering::Relaxed),
            rotate: self.rotate.load(Ordering::Relaxed),
            bootstrap: self.bootstrap.load(Ordering::Relaxed),
        }
    }
}

impl HeBackend for CountingBackend<'_> {
    fn params(&self) -> &BackendParams {
        self.inner.params()
    }

    fn kind(&self) -> BackendKind {
        self.inner.kind()
    }

    fn keygen(&self) -> Result<KeyMaterial, HeError> {
        self.inner.keygen()
    }

    fn enc(&self, x: &[f64], keys: &KeyMaterial) -> Result<Ciphertext, HeError> {
        self.enc.fetch_add(1, Ordering::Relaxed);
        self.inner.enc(x, keys)
    }

    fn dec(&self, ct: &Ciphertext, secret: &SecretKey) -> Result<Vec<f64>, HeError> {
        self.dec.fetch_add(1, Ordering::Relaxed);
        self.inner.dec(ct, secret)
    }

    fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
        self.add.fetch_add(1, Ordering::Relaxed);
        self.inner.add(a, b)
    }

    fn mult(&self, a: &Ciphertext, b: &Ciphertext, eval: &EvalKeys) -> Result<Ciphertext, HeError> {
        self.mult.fetch_add(1, Ordering::Relaxed);
        self.inner.mult(a, b, eval)
    }

    fn rotate(
        &self,
        ct: &Ciphertext,
        amount: usize,
        eval: &EvalKeys,
    ) -> Result<Ciphertext, HeError> {
        self.rotate.fetch_add(1, Ordering::Relaxed);
        self.inner.rotate(ct, amount, eval)
    }

    fn bootstrap(&self, ct: &Ciphertext, eval: &EvalKeys) -> Result<Ciphertext, HeError> {
        self.bootstrap.fetch_add(1, Ordering::Relaxed);
        self.inner.bootstrap(ct, eval)
    }
}
