//! Policy synthesis for linearly-solvable MDPs where the value iteration runs
//! on homomorphically encrypted data.
//!
//! The pipeline, end to end:
//!
//! 1. [`mdp`] builds a deterministic shortest-path MDP (typically a grid
//!    world) with a single absorbing goal state.
//! 2. [`rerl`] converts it to the linear desirability system `Z = A Z + w`,
//!    solves it in the clear (direct elimination and fixed-point iteration),
//!    and turns a desirability vector back into values and a stochastic
//!    policy.
//! 3. [`he`] provides two interchangeable backends behind one trait: a noise
//!    simulator that carries plaintext slots plus injected error, and a toy
//!    CKKS-style lattice engine. Neither is secure; both expose the same
//!    slot-vector API (encrypt, add, multiply, rotate, bootstrap).
//! 4. [`encrypted`] runs the fixed-point iteration entirely on ciphertexts:
//!    the model owner encrypts `A` row by row together with `w` and one-hot
//!    selector vectors, an untrusted evaluator applies the iteration map with
//!    rotations and slotwise products, and the client decrypts only the final
//!    iterate.
//! 5. [`analysis`] bounds the error the encrypted run can introduce:
//!    per-operation noise bounds are calibrated empirically, composed into a
//!    per-iteration budget, and folded into a closed-form trajectory bound
//!    that a verification pass checks against measured runs.
//!
//! Everything is deterministic under a fixed seed, including injected noise,
//! so encrypted runs reproduce bit-for-bit across process and transport
//! boundaries.
//!
//! # Security
//!
//! This crate is a research prototype for studying noise growth and error
//! propagation. Parameters are far below any accepted security level and the
//! bootstrap is a recryption oracle that holds a copy of the secret key.
//! Do not protect real data with it.

pub mod analysis;
pub mod encrypted;
pub mod he;
pub mod mdp;
pub mod rerl;
