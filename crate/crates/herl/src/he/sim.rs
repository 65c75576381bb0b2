//! Plaintext-carrying backend with injected, seeded noise.
//!
//! Slots hold their cleartext values; each operation applies the exact
//! plaintext arithmetic and then adds independent uniform noise of the
//! magnitude its [`NoiseModel`] entry prescribes. Levels and scales mimic
//! the lattice backend's bookkeeping so evaluator code behaves identically
//! on either. With [`NoiseModel::zero`] the simulator is exact, making it
//! the cross-check oracle for the lattice backend and for the plaintext
//! iteration reference.

use rand::Rng;

use super::{
    check_same_shape, validate_message, BackendKind, BackendParams, Ciphertext, EvalInner,
    EvalKeys, HeBackend, HeError, KeyMaterial, NoiseModel, NoiseStream, Payload, PublicInner,
    PublicKey, SecretInner, SecretKey,
};

pub struct NoiseSim {
    params: BackendParams,
    model: NoiseModel,
}

impl NoiseSim {
    pub fn new(params: BackendParams, model: NoiseModel) -> Result<Self, HeError> {
        params.validate()?;
        model.validate()?;
        Ok(Self { params, model })
    }

    /// Simulator with magnitudes matched to the lattice backend's profile.
    pub fn with_default_noise(params: BackendParams) -> Result<Self, HeError> {
        let model = NoiseModel::default_for(&params);
        Self::new(params, model)
    }

    pub fn model(&self) -> &NoiseModel {
        &self.model
    }

    fn slots_of<'a>(&self, ct: &'a Ciphertext) -> Result<&'a [f64], HeError> {
        match &ct.payload {
            Payload::Sim(v) => Ok(v),
            Payload::Ckks { .. } => Err(HeError::BackendMismatch {
                expected: BackendKind::Sim.name(),
                got: BackendKind::Ckks.name(),
            }),
        }
    }

    fn model_of<'a>(&self, eval: &'a EvalKeys) -> Result<&'a NoiseModel, HeError> {
        match &eval.inner {
            EvalInner::Sim { model } => Ok(model),
            EvalInner::Ckks(_) => Err(HeError::BackendMismatch {
                expected: BackendKind::Sim.name(),
                got: BackendKind::Ckks.name(),
            }),
        }
    }

    /// Adds one fresh uniform draw per slot. Magnitude 0 skips the tape.
    fn inject(&self, mut slots: Vec<f64>, magnitude: f64, stream: &NoiseStream) -> Vec<f64> {
        if magnitude > 0.0 {
            let mut rng = stream.next_rng();
            for v in &mut slots {
                *v += rng.gen_range(-magnitude..=magnitude);
            }
        }
        slots
    }

    fn wrap(&self, slots: Vec<f64>, level: usize) -> Ciphertext {
        Ciphertext {
            payload: Payload::Sim(slots),
            level,
            scale_log2: self.params.scale_log2 as i16,
            slot_count: self.params.slot_count(),
        }
    }
}

impl HeBackend for NoiseSim {
    fn params(&self) -> &BackendParams {
        &self.params
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Sim
    }

    fn keygen(&self) -> Result<KeyMaterial, HeError> {
        Ok(KeyMaterial {
            secret: SecretKey {
                inner: SecretInner::Sim {
                    key_id: self.params.seed,
                },
            },
            public: PublicKey {
                inner: PublicInner::Sim {
                    key_id: self.params.seed,
                },
            },
            eval: EvalKeys {
                inner: EvalInner::Sim { model: self.model },
                stream: NoiseStream::new(self.params.seed),
            },
        })
    }

    fn enc(&self, x: &[f64], keys: &KeyMaterial) -> Result<Ciphertext, HeError> {
        validate_message(x, &self.params)?;
        let mut slots = x.to_vec();
        slots.resize(self.params.slot_count(), 0.0);
        let model = self.model_of(&keys.eval)?;
        let slots = self.inject(slots, model.enc, &keys.eval.stream);
        Ok(self.wrap(slots, self.params.levels()))
    }

    fn dec(&self, ct: &Ciphertext, secret: &SecretKey) -> Result<Vec<f64>, HeError> {
        match secret.inner {
            SecretInner::Sim { .. } => {}
            SecretInner::Ckks { .. } => {
                return Err(HeError::BackendMismatch {
                    expected: BackendKind::Sim.name(),
                    got: BackendKind::Ckks.name(),
                })
            }
        }
        Ok(self.slots_of(ct)?.to_vec())
    }

    fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
        check_same_shape(a, b)?;
        let va = self.slots_of(a)?;
        let vb = self.slots_of(b)?;
        let sum: Vec<f64> = va.iter().zip(vb).map(|(x, y)| x + y).collect();
        Ok(self.wrap(sum, a.level.min(b.level)))
    }

    fn mult(&self, a: &Ciphertext, b: &Ciphertext, eval: &EvalKeys) -> Result<Ciphertext, HeError> {
        check_same_shape(a, b)?;
        let level = a.level.min(b.level);
        if level == 0 {
            return Err(HeError::LevelExhausted { level });
        }
        let va = self.slots_of(a)?;
        let vb = self.slots_of(b)?;
        let prod: Vec<f64> = va.iter().zip(vb).map(|(x, y)| x * y).collect();
        let model = self.model_of(eval)?;
        let prod = self.inject(prod, model.mult, &eval.stream);
        Ok(self.wrap(prod, level - 1))
    }

    fn rotate(
        &self,
        ct: &Ciphertext,
        amount: usize,
        eval: &EvalKeys,
    ) -> Result<Ciphertext, HeError> {
        let slots = self.slots_of(ct)?;
        if amount >= slots.len() {
            return Err(HeError::RotationOutOfRange {
                amount,
                slots: slots.len(),
            });
        }
        if amount == 0 {
            return Ok(ct.clone());
        }
        let rotated = crate::rerl::rot_vec(slots, amount);
        let model = self.model_of(eval)?;
        let rotated = self.inject(rotated, model.rot, &eval.stream);
        Ok(self.wrap(rotated, ct.level))
    }

    fn bootstrap(&self, ct: &Ciphertext, eval: &EvalKeys) -> Result<Ciphertext, HeError> {
        let slots = self.slots_of(ct)?.to_vec();
        let model = self.model_of(eval)?;
        let refreshed = self.inject(slots, model.boot, &eval.stream);
        Ok(self.wrap(refreshed, self.params.levels()))
    }
}
