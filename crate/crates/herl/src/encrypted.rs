//! The outsourced value iteration: evaluating the desirability update on
//! encrypted data.
//!
//! The client encrypts the model once, slotwise: each matrix row, the source
//! vector and one basis selector per interior state. The evaluator then runs
//! the rotation form of the update without seeing any plaintext. One step
//! computes, for each row `i`, the product `p = row_i * z`, folds all slots
//! of `p` into every slot by a rotate-and-add ladder, masks out slot `i`
//! with the selector, and accumulates onto the encrypted source vector. A
//! bootstrap closes the step so the next one starts with a full level
//! budget.
//!
//! Messages are padded with zeros beyond the model dimension, so the rotate
//! amounts are not simply `1..dim`: folding slot `j` into slot `i` must skip
//! the padding region, which [`rotation_amount`] accounts for. With a
//! noiseless backend the result equals the plaintext rotation-form iterate
//! bit for bit.
//!
//! Each step costs exactly `2*dim` multiplications, `dim^2` rotations
//! (counting the initial copy per row), `dim^2` additions and one bootstrap,
//! independent of the data.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::he::{Ciphertext, EvalKeys, HeBackend, HeError, KeyMaterial, SecretKey};
use crate::mdp::DeterministicMdp;
use crate::rerl::{reconstruct_policy, Desirability, LinearSystem, Policy, RerlError};

/// Decrypted desirability entries below this are clamped up before the log
/// transform, which would reject zero or negative values.
pub const CLAMP_FLOOR: f64 = 1e-12;

/// If more than this fraction of decrypted entries is nonpositive, the run
/// is declared failed instead of silently clamped.
pub const MAX_NONPOSITIVE_FRACTION: f64 = 0.1;

#[derive(Debug, Error)]
pub enum EncError {
    #[error("model with {dim} states needs {dim} slots but the backend offers {slots}")]
    Capacity { dim: usize, slots: usize },
    #[error(transparent)]
    He(#[from] HeError),
    #[error(transparent)]
    Rerl(#[from] RerlError),
    #[error("vector has {got} entries, the encrypted model has {dim}")]
    Dimension { got: usize, dim: usize },
    #[error("iteration count must be at least 1")]
    ZeroIterations,
    #[error(
        "decrypted desirability is unusable: {nonpositive} of {dim} entries are not positive"
    )]
    SynthesisFailure { nonpositive: usize, dim: usize },
}

/// The client-encrypted linear system: one ciphertext per matrix row, the
/// source vector, and one slot-selector per row for re-assembling the next
/// iterate.
pub struct EncryptedModel {
    rows: Vec<Ciphertext>,
    w: Ciphertext,
    selectors: Vec<Ciphertext>,
    dim: usize,
}

impl EncryptedModel {
    pub fn from_parts(
        rows: Vec<Ciphertext>,
        w: Ciphertext,
        selectors: Vec<Ciphertext>,
        dim: usize,
    ) -> Result<Self, EncError> {
        if dim == 0 || rows.len() != dim || selectors.len() != dim {
            return Err(EncError::Dimension {
                got: rows.len().min(selectors.len()),
                dim,
            });
        }
        Ok(Self {
            rows,
            w,
            selectors,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[Ciphertext] {
        &self.rows
    }

    pub fn w(&self) -> &Ciphertext {
        &self.w
    }

    pub fn selectors(&self) -> &[Ciphertext] {
        &self.selectors
    }
}

/// Encrypts the system for outsourcing. Row order, then source, then
/// selectors; callers relying on deterministic noise tapes get the same
/// bytes for the same order.
pub fn encrypt_model(
    backend: &dyn HeBackend,
    sys: &LinearSystem,
    keys: &KeyMaterial,
) -> Result<EncryptedModel, EncError> {
    let dim = sys.dim();
    let slots = backend.params().slot_count();
    if dim > slots {
        return Err(EncError::Capacity { dim, slots });
    }
    let mut rows = Vec::with_capacity(dim);
    for i in 0..dim {
        rows.push(backend.enc(sys.row(i), keys)?);
    }
    let w = backend.enc(sys.source(), keys)?;
    let mut selectors = Vec::with_capacity(dim);
    for i in 0..dim {
        let mut basis = vec![0.0; dim];
        basis[i] = 1.0;
        selectors.push(backend.enc(&basis, keys)?);
    }
    Ok(EncryptedModel {
        rows,
        w,
        selectors,
        dim,
    })
}

/// Rotation amount that brings plaintext slot `(index + r) mod dim` into
/// slot `index`, on a vector padded with zeros from `dim` to `slots`. Within
/// the first `dim - index` offsets a plain left rotation works; beyond that
/// the wrap must jump over the padding region.
pub fn rotation_amount(slots: usize, dim: usize, index: usize, r: usize) -> usize {
    debug_assert!(dim >= 1 && dim <= slots && index < dim && r < dim);
    if r < dim - index {
        r
    } else {
        slots - dim + r
    }
}

/// Wall-clock cost of one encrypted step, with the bootstrap portion broken
/// out.
#[derive(Debug, Clone, Copy)]
pub struct StepTiming {
    pub wall: Duration,
    pub bootstrap: Duration,
}

/// One encrypted desirability update followed by a bootstrap. Requires only
/// evaluation keys; this is the code an untrusted server runs.
pub fn encrypted_step(
    backend: &dyn HeBackend,
    model: &EncryptedModel,
    z: &Ciphertext,
    eval: &EvalKeys,
) -> Result<(Ciphertext, StepTiming), EncError> {
    let start = Instant::now();
    let slots = backend.params().slot_count();
    let dim = model.dim;
    let mut acc = model.w.clone();
    for i in 0..dim {
        let p = backend.mult(&model.rows[i], z, eval)?;
        let mut fold = backend.rotate(&p, 0, eval)?;
        for r in 1..dim {
            let rotated = backend.rotate(&p, rotation_amount(slots, dim, i, r), eval)?;
            fold = backend.add(&fold, &rotated)?;
        }
        let masked = backend.mult(&model.selectors[i], &fold, eval)?;
        acc = backend.add(&acc, &masked)?;
    }
    let boot_start = Instant::now();
    let refreshed = backend.bootstrap(&acc, eval)?;
    let bootstrap = boot_start.elapsed();
    Ok((
        refreshed,
        StepTiming {
            wall: start.elapsed(),
            bootstrap,
        },
    ))
}

/// Runs `iterations` encrypted steps server-side. The caller holds only
/// evaluation keys and learns nothing but ciphertexts and timings.
pub fn iterate_encrypted(
    backend: &dyn HeBackend,
    model: &EncryptedModel,
    z0: &Ciphertext,
    iterations: usize,
    eval: &EvalKeys,
) -> Result<(Ciphertext, Vec<StepTiming>), EncError> {
    if iterations == 0 {
        return Err(EncError::ZeroIterations);
    }
    let mut z = z0.clone();
    let mut timings = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let (next, timing) = encrypted_step(backend, model, &z, eval)?;
        z = next;
        timings.push(timing);
    }
    Ok((z, timings))
}

/// Whether a run keeps decrypted per-step snapshots (for error analysis) or
/// stays fully outsourced.
pub enum RunMode<'a> {
    /// No decryption during the run; only the final ciphertext comes back.
    Outsourced,
    /// Decrypt after encryption and after every step, for offline analysis.
    /// This is an instrumentation mode, not part of the outsourcing story.
    Traced { secret: &'a SecretKey },
}

pub struct EncryptedRun {
    pub z_final: Ciphertext,
    pub timings: Vec<StepTiming>,
    /// `iterations + 1` decrypted iterates (index 0 is the freshly encrypted
    /// start), truncated to the model dimension. `None` when outsourced.
    pub snapshots: Option<Vec<Vec<f64>>>,
}

/// Client-driven encrypted value iteration from a plaintext start vector.
pub fn run_encrypted_vi(
    backend: &dyn HeBackend,
    model: &EncryptedModel,
    z0: &[f64],
    iterations: usize,
    keys: &KeyMaterial,
    mode: RunMode<'_>,
) -> Result<EncryptedRun, EncError> {
    if iterations == 0 {
        return Err(EncError::ZeroIterations);
    }
    if z0.len() != model.dim {
        return Err(EncError::Dimension {
            got: z0.len(),
            dim: model.dim,
        });
    }
    let mut z = backend.enc(z0, keys)?;
    let mut snapshots = match &mode {
        RunMode::Outsourced => None,
        RunMode::Traced { secret } => {
            let mut first = backend.dec(&z, secret)?;
            first.truncate(model.dim);
            Some(vec![first])
        }
    };
    let mut timings = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let (next, timing) = encrypted_step(backend, model, &z, &keys.eval)?;
        z = next;
        timings.push(timing);
        if let (Some(snaps), RunMode::Traced { secret }) = (&mut snapshots, &mode) {
            let mut snap = backend.dec(&z, secret)?;
            snap.truncate(model.dim);
            snaps.push(snap);
        }
    }
    Ok(EncryptedRun {
        z_final: z,
        timings,
        snapshots,
    })
}

/// What the client recovers at the end of an outsourced run.
#[derive(Debug)]
pub struct SynthesisOutput {
    pub desirability: Desirability,
    pub policy: Policy,
    /// Entries pushed up to [`CLAMP_FLOOR`] before the policy transform.
    pub clamped: usize,
}

/// Decrypts the final iterate and turns it into a policy. Fails rather than
/// fabricating a policy when too much of the vector has been destroyed by
/// noise; isolated nonpositive entries are clamped to a tiny floor (keeping
/// the log transform finite) and reported. A clamped entry that materially
/// changes the vector still fails downstream, because the policy transform
/// checks that its rows are consistent with a fixed point.
pub fn client_finish(
    backend: &dyn HeBackend,
    mdp: &DeterministicMdp,
    lambda: f64,
    z_final: &Ciphertext,
    secret: &SecretKey,
) -> Result<SynthesisOutput, EncError> {
    let dim = mdp.num_interior();
    let raw = backend.dec(z_final, secret)?;
    if raw.len() < dim {
        return Err(EncError::Dimension {
            got: raw.len(),
            dim,
        });
    }
    let mut z = raw[..dim].to_vec();
    let nonpositive = z.iter().filter(|v| **v <= 0.0).count();
    if nonpositive as f64 > MAX_NONPOSITIVE_FRACTION * dim as f64 {
        return Err(EncError::SynthesisFailure { nonpositive, dim });
    }
    let mut clamped = 0;
    for v in &mut z {
        if *v < CLAMP_FLOOR {
            *v = CLAMP_FLOOR;
            clamped += 1;
        }
    }
    let desirability = Desirability::new(z)?;
    let policy = reconstruct_policy(mdp, &desirability, lambda)?;
    Ok(SynthesisOutput {
        desirability,
        policy,
        clamped,
    })
}
