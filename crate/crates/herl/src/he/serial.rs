//! Binary wire format for ciphertexts and key files.
//!
//! Everything is little-endian and starts with the magic `HERL` plus a
//! format version. Ciphertext layout:
//!
//! ```text
//! magic      4 bytes  "HERL"
//! version    u16
//! ring       u32      ring degree N
//! slots      u32      N / 2
//! level      u8
//! scale      i16      log2 of the scaling factor
//! mod_count  u8       0 for the simulator, level+1 active moduli otherwise
//! moduli     u64 * mod_count
//! payload    simulator: slots * u64 (f64 bits)
//!            lattice:   2 components * N coefficients, each
//!                       ceil(active_bits / 64) u64 limbs, low limb first
//! ```
//!
//! Key files share the magic and version, then a type byte (`0x53` secret,
//! `0x45` evaluation), a backend byte, a full parameter echo, and the
//! key-specific payload. Evaluation key files embed the noise-tape cursor,
//! so an evaluator process resumed from a file continues the exact random
//! stream of the process that wrote it.
//!
//! Readers validate the parameter echo against the parameters the caller
//! expects; a file written under different parameters is rejected rather
//! than reinterpreted.

use std::io::{Read, Write};

use super::ckks::poly::mask_for_bits;
use super::ckks::{CkksEvalKeys, KsKey};
use super::{
    BackendKind, BackendParams, Ciphertext, EvalInner, EvalKeys, HeError, NoiseModel, NoiseStream,
    Payload, PublicInner, PublicKey, SecretInner, SecretKey, FORMAT_VERSION,
};

const MAGIC: &[u8; 4] = b"HERL";
const TYPE_SECRET: u8 = 0x53;
const TYPE_EVAL: u8 = 0x45;
const TYPE_PUBLIC: u8 = 0x50;

/// Sanity caps applied while reading, so corrupt headers fail fast instead
/// of attempting enormous allocations.
const MAX_RING: u32 = 1 << 16;
const MAX_MODULI: u8 = 32;
const MAX_DIGITS: u16 = 64;
const MAX_ROT_KEYS: u16 = 64;

fn io_err(context: &str, e: std::io::Error) -> HeError {
    HeError::Serialization(format!("{context}: {e}"))
}

fn put(w: &mut dyn Write, bytes: &[u8]) -> Result<(), HeError> {
    w.write_all(bytes).map_err(|e| io_err("write", e))
}

fn take(r: &mut dyn Read, buf: &mut [u8]) -> Result<(), HeError> {
    r.read_exact(buf).map_err(|e| io_err("read", e))
}

macro_rules! scalar_io {
    ($wname:ident, $rname:ident, $ty:ty, $len:expr) => {
        fn $wname(w: &mut dyn Write, v: $ty) -> Result<(), HeError> {
            put(w, &v.to_le_bytes())
        }
        fn $rname(r: &mut dyn Read) -> Result<$ty, HeError> {
            let mut buf = [0u8; $len];
            take(r, &mut buf)?;
            Ok(<$ty>::from_le_bytes(buf))
        }
    };
}

scalar_io!(put_u16, take_u16, u16, 2);
scalar_io!(put_u32, take_u32, u32, 4);
scalar_io!(put_u64, take_u64, u64, 8);
scalar_io!(put_i16, take_i16, i16, 2);
scalar_io!(put_f64, take_f64, f64, 8);

fn put_u8(w: &mut dyn Write, v: u8) -> Result<(), HeError> {
    put(w, &[v])
}

fn take_u8(r: &mut dyn Read) -> Result<u8, HeError> {
    let mut buf = [0u8; 1];
    take(r, &mut buf)?;
    Ok(buf[0])
}

fn limbs_for_bits(bits: u32) -> usize {
    bits.div_ceil(64) as usize
}

fn put_poly(w: &mut dyn Write, poly: &[u128], bits: u32) -> Result<(), HeError> {
    let limbs = limbs_for_bits(bits);
    for &v in poly {
        put_u64(w, v as u64)?;
        if limbs == 2 {
            put_u64(w, (v >> 64) as u64)?;
        }
    }
    Ok(())
}

fn take_poly(r: &mut dyn Read, n: usize, bits: u32) -> Result<Vec<u128>, HeError> {
    let limbs = limbs_for_bits(bits);
    let mask = mask_for_bits(bits);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let lo = take_u64(r)? as u128;
        let hi = if limbs == 2 { take_u64(r)? as u128 } else { 0 };
        out.push(((hi << 64) | lo) & mask);
    }
    Ok(out)
}

fn put_magic_version(w: &mut dyn Write) -> Result<(), HeError> {
    put(w, MAGIC)?;
    put_u16(w, FORMAT_VERSION)
}

fn take_magic_version(r: &mut dyn Read) -> Result<(), HeError> {
    let mut magic = [0u8; 4];
    take(r, &mut magic)?;
    if &magic != MAGIC {
        return Err(HeError::Serialization(format!(
            "bad magic {magic:02x?}, expected {MAGIC:02x?}"
        )));
    }
    let version = take_u16(r)?;
    if version != FORMAT_VERSION {
        return Err(HeError::Serialization(format!(
            "format version {version} unsupported (this build reads {FORMAT_VERSION})"
        )));
    }
    Ok(())
}

pub fn write_ciphertext(
    w: &mut dyn Write,
    ct: &Ciphertext,
    params: &BackendParams,
) -> Result<(), HeError> {
    put_magic_version(w)?;
    put_u32(w, params.ring_degree as u32)?;
    put_u32(w, ct.slot_count as u32)?;
    put_u8(w, u8::try_from(ct.level).map_err(|_| {
        HeError::Serialization(format!("level {} too large for the format", ct.level))
    })?)?;
    put_i16(w, ct.scale_log2)?;
    match &ct.payload {
        Payload::Sim(slots) => {
            put_u8(w, 0)?;
            if slots.len() != ct.slot_count {
                return Err(HeError::Internal(format!(
                    "simulator payload holds {} slots, header says {}",
                    slots.len(),
                    ct.slot_count
                )));
            }
            for &v in slots {
                put_u64(w, v.to_bits())?;
            }
        }
        Payload::Ckks { c0, c1 } => {
            let active = &params.modulus_chain[..=ct.level];
            put_u8(w, active.len() as u8)?;
            for &q in active {
                put_u64(w, q)?;
            }
            let bits = params.modulus_bits_at(ct.level)?;
            if c0.len() != params.ring_degree || c1.len() != params.ring_degree {
                return Err(HeError::Internal(String::from(
                    "lattice payload does not match the ring degree",
                )));
            }
            put_poly(w, c0, bits)?;
            put_poly(w, c1, bits)?;
        }
    }
    Ok(())
}

pub fn read_ciphertext(r: &mut dyn Read, params: &BackendParams) -> Result<Ciphertext, HeError> {
    take_magic_version(r)?;
    let ring = take_u32(r)?;
    if ring > MAX_RING {
        return Err(HeError::Serialization(format!("ring degree {ring} too large")));
    }
    if ring as usize != params.ring_degree {
        return Err(HeError::Serialization(format!(
            "ciphertext ring degree {ring} does not match expected {}",
            params.ring_degree
        )));
    }
    let slots = take_u32(r)? as usize;
    if slots != params.slot_count() {
        return Err(HeError::Serialization(format!(
            "ciphertext slot count {slots} does not match expected {}",
            params.slot_count()
        )));
    }
    let level = take_u8(r)? as usize;
    if level > params.levels() {
        return Err(HeError::Serialization(format!(
            "level {level} above the ladder's maximum {}",
            params.levels()
        )));
    }
    let scale_log2 = take_i16(r)?;
    let mod_count = take_u8(r)?;
    if mod_count > MAX_MODULI {
        return Err(HeError::Serialization(format!("{mod_count} moduli is too many")));
    }
    let payload = if mod_count == 0 {
        let mut slots_vec = Vec::with_capacity(slots);
        for _ in 0..slots {
            slots_vec.push(f64::from_bits(take_u64(r)?));
        }
        Payload::Sim(slots_vec)
    } else {
        if mod_count as usize != level + 1 {
            return Err(HeError::Serialization(format!(
                "{mod_count} moduli written for level {level}; expected {}",
                level + 1
            )));
        }
        for i in 0..mod_count as usize {
            let q = take_u64(r)?;
            if q != params.modulus_chain[i] {
                return Err(HeError::Serialization(format!(
                    "ladder entry {i} is {q}, expected {}",
                    params.modulus_chain[i]
                )));
            }
        }
        let bits = params.modulus_bits_at(level)?;
        let c0 = take_poly(r, ring as usize, bits)?;
        let c1 = take_poly(r, ring as usize, bits)?;
        Payload::Ckks { c0, c1 }
    };
    Ok(Ciphertext {
        payload,
        level,
        scale_log2,
        slot_count: slots,
    })
}

pub fn ciphertext_to_bytes(ct: &Ciphertext, params: &BackendParams) -> Result<Vec<u8>, HeError> {
    let mut buf = Vec::new();
    write_ciphertext(&mut buf, ct, params)?;
    Ok(buf)
}

pub fn ciphertext_from_bytes(bytes: &[u8], params: &BackendParams) -> Result<Ciphertext, HeError> {
    let mut cursor = bytes;
    let ct = read_ciphertext(&mut cursor, params)?;
    if !cursor.is_empty() {
        return Err(HeError::Serialization(format!(
            "{} trailing bytes after the ciphertext",
            cursor.len()
        )));
    }
    Ok(ct)
}

fn put_params(w: &mut dyn Write, params: &BackendParams) -> Result<(), HeError> {
    put_u32(w, params.ring_degree as u32)?;
    put_u32(w, params.scale_log2)?;
    put_u8(w, params.modulus_chain.len() as u8)?;
    for &q in &params.modulus_chain {
        put_u64(w, q)?;
    }
    put_f64(w, params.noise_stddev)?;
    put_f64(w, params.message_bound)?;
    put_u64(w, params.seed)
}

fn take_params(r: &mut dyn Read) -> Result<BackendParams, HeError> {
    let ring_degree = take_u32(r)?;
    if ring_degree > MAX_RING {
        return Err(HeError::Serialization(format!(
            "ring degree {ring_degree} too large"
        )));
    }
    let scale_log2 = take_u32(r)?;
    let mod_count = take_u8(r)?;
    if mod_count > MAX_MODULI {
        return Err(HeError::Serialization(format!("{mod_count} moduli is too many")));
    }
    let mut modulus_chain = Vec::with_capacity(mod_count as usize);
    for _ in 0..mod_count {
        modulus_chain.push(take_u64(r)?);
    }
    Ok(BackendParams {
        ring_degree: ring_degree as usize,
        scale_log2,
        modulus_chain,
        noise_stddev: take_f64(r)?,
        message_bound: take_f64(r)?,
        seed: take_u64(r)?,
    })
}

fn check_params(found: &BackendParams, expected: &BackendParams) -> Result<(), HeError> {
    if found != expected {
        return Err(HeError::Serialization(String::from(
            "key file parameters do not match the expected backend parameters",
        )));
    }
    Ok(())
}

fn key_header(
    w: &mut dyn Write,
    type_byte: u8,
    kind: BackendKind,
    params: &BackendParams,
) -> Result<(), HeError> {
    put_magic_version(w)?;
    put_u8(w, type_byte)?;
    put_u8(w, kind.byte())?;
    put_params(w, params)
}

fn read_key_header(
    r: &mut dyn Read,
    want_type: u8,
    expected: &BackendParams,
) -> Result<BackendKind, HeError> {
    take_magic_version(r)?;
    let type_byte = take_u8(r)?;
    if type_byte != want_type {
        return Err(HeError::Serialization(format!(
            "key file type {type_byte:#04x}, expected {want_type:#04x}"
        )));
    }
    let kind = BackendKind::from_byte(take_u8(r)?)?;
    let params = take_params(r)?;
    check_params(&params, expected)?;
    Ok(kind)
}

pub fn write_secret_key(
    w: &mut dyn Write,
    key: &SecretKey,
    params: &BackendParams,
) -> Result<(), HeError> {
    match &key.inner {
        SecretInner::Sim { key_id } => {
            key_header(w, TYPE_SECRET, BackendKind::Sim, params)?;
            put_u64(w, *key_id)
        }
        SecretInner::Ckks { s } => {
            key_header(w, TYPE_SECRET, BackendKind::Ckks, params)?;
            let bits = params.modulus_bits_at(params.levels())?;
            put_poly(w, s, bits)
        }
    }
}

pub fn read_secret_key(r: &mut dyn Read, expected: &BackendParams) -> Result<SecretKey, HeError> {
    let kind = read_key_header(r, TYPE_SECRET, expected)?;
    let inner = match kind {
        BackendKind::Sim => SecretInner::Sim { key_id: take_u64(r)? },
        BackendKind::Ckks => {
            let bits = expected.modulus_bits_at(expected.levels())?;
            SecretInner::Ckks {
                s: take_poly(r, expected.ring_degree, bits)?,
            }
        }
    };
    Ok(SecretKey { inner })
}

pub fn write_public_key(
    w: &mut dyn Write,
    key: &PublicKey,
    params: &BackendParams,
) -> Result<(), HeError> {
    match &key.inner {
        PublicInner::Sim { key_id } => {
            key_header(w, TYPE_PUBLIC, BackendKind::Sim, params)?;
            put_u64(w, *key_id)
        }
        PublicInner::Ckks { b, a } => {
            key_header(w, TYPE_PUBLIC, BackendKind::Ckks, params)?;
            let bits = params.modulus_bits_at(params.levels())?;
            put_poly(w, b, bits)?;
            put_poly(w, a, bits)
        }
    }
}

pub fn read_public_key(r: &mut dyn Read, expected: &BackendParams) -> Result<PublicKey, HeError> {
    let kind = read_key_header(r, TYPE_PUBLIC, expected)?;
    let inner = match kind {
        BackendKind::Sim => PublicInner::Sim { key_id: take_u64(r)? },
        BackendKind::Ckks => {
            let bits = expected.modulus_bits_at(expected.levels())?;
            PublicInner::Ckks {
                b: take_poly(r, expected.ring_degree, bits)?,
                a: take_poly(r, expected.ring_degree, bits)?,
            }
        }
    };
    Ok(PublicKey { inner })
}

fn put_ks_key(w: &mut dyn Write, key: &KsKey, ext_bits: u32) -> Result<(), HeError> {
    put_u16(w, key.k0.len() as u16)?;
    for (k0, k1) in key.k0.iter().zip(&key.k1) {
        put_poly(w, k0, ext_bits)?;
        put_poly(w, k1, ext_bits)?;
    }
    Ok(())
}

fn take_ks_key(r: &mut dyn Read, n: usize, ext_bits: u32) -> Result<KsKey, HeError> {
    let digits = take_u16(r)?;
    if digits > MAX_DIGITS {
        return Err(HeError::Serialization(format!(
            "{digits} key-switch digits is too many"
        )));
    }
    let mut k0 = Vec::with_capacity(digits as usize);
    let mut k1 = Vec::with_capacity(digits as usize);
    for _ in 0..digits {
        k0.push(take_poly(r, n, ext_bits)?);
        k1.push(take_poly(r, n, ext_bits)?);
    }
    Ok(KsKey { k0, k1 })
}

pub fn write_eval_keys(
    w: &mut dyn Write,
    keys: &EvalKeys,
    params: &BackendParams,
) -> Result<(), HeError> {
    key_header(w, TYPE_EVAL, keys.kind(), params)?;
    put_u64(w, keys.stream.master_seed())?;
    put_u64(w, keys.stream.cursor())?;
    match &keys.inner {
        EvalInner::Sim { model } => {
            put_f64(w, model.enc)?;
            put_f64(w, model.mult)?;
            put_f64(w, model.rot)?;
            put_f64(w, model.boot)
        }
        EvalInner::Ckks(ck) => {
            let total_bits = params.modulus_bits_at(params.levels())?;
            let ext_bits = total_bits + ck.aux_bits;
            put_u32(w, ck.aux_bits)?;
            put_ks_key(w, &ck.relin, ext_bits)?;
            put_u16(w, ck.rot.len() as u16)?;
            for (step, key) in &ck.rot {
                put_u32(w, *step as u32)?;
                put_ks_key(w, key, ext_bits)?;
            }
            put_poly(w, &ck.token_s, total_bits)?;
            put_f64(w, ck.boot_noise)
        }
    }
}

pub fn read_eval_keys(r: &mut dyn Read, expected: &BackendParams) -> Result<EvalKeys, HeError> {
    let kind = read_key_header(r, TYPE_EVAL, expected)?;
    let master_seed = take_u64(r)?;
    let cursor = take_u64(r)?;
    let inner = match kind {
        BackendKind::Sim => {
            let model = NoiseModel {
                enc: take_f64(r)?,
                mult: take_f64(r)?,
                rot: take_f64(r)?,
                boot: take_f64(r)?,
            };
            model.validate()?;
            EvalInner::Sim { model }
        }
        BackendKind::Ckks => {
            let total_bits = expected.modulus_bits_at(expected.levels())?;
            let aux_bits = take_u32(r)?;
            if aux_bits < 8 || total_bits + aux_bits > 126 {
                return Err(HeError::Serialization(format!(
                    "auxiliary modulus of {aux_bits} bits is outside the working range"
                )));
            }
            let ext_bits = total_bits + aux_bits;
            let n = expected.ring_degree;
            let relin = take_ks_key(r, n, ext_bits)?;
            let rot_count = take_u16(r)?;
            if rot_count > MAX_ROT_KEYS {
                return Err(HeError::Serialization(format!(
                    "{rot_count} rotation keys is too many"
                )));
            }
            let mut rot = Vec::with_capacity(rot_count as usize);
            for _ in 0..rot_count {
                let step = take_u32(r)? as usize;
                rot.push((step, take_ks_key(r, n, ext_bits)?));
            }
            let token_s = take_poly(r, n, total_bits)?;
            let boot_noise = take_f64(r)?;
            if !(boot_noise.is_finite() && boot_noise >= 0.0) {
                return Err(HeError::Serialization(format!(
                    "recryption noise magnitude {boot_noise} is invalid"
                )));
            }
            EvalInner::Ckks(Box::new(CkksEvalKeys {
                relin,
                rot,
                token_s,
                boot_noise,
                aux_bits,
            }))
        }
    };
    Ok(EvalKeys {
        inner,
        stream: NoiseStream::resume(master_seed, cursor),
    })
}
