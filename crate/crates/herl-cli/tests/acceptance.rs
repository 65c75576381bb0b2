//! Release acceptance suite. Each test covers one numbered criterion, runs
//! it at the stated tolerance and prints a single verdict line
//! (`ACCEPTANCE criterion NN <name>: PASS/FAIL (details)`) before asserting,
//! so a full run doubles as a checklist:
//!
//! ```text
//! cargo test -p herl-cli --test acceptance -- --nocapture --test-threads=1
//! ```
//!
//! Criterion 02 is expected to fail: with uniform default actions over the
//! nine moves and stage cost 0.5 at lambda 10, every iteration-matrix row on
//! these grids sums to at least 6/9 * exp(-0.05) = 0.634, so the step
//! differences cannot fall below 1e-10 in fewer than 45 sweeps. The test
//! asserts the sub-30 target as stated and reports the measured counts.

use std::fs;
use std::net::TcpListener;
use std::path::Path;
use std::sync::OnceLock;
use std::thread;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use tempfile::TempDir;

use herl::analysis::{compute_beta, verify_run};
use herl::encrypted::{client_finish, encrypt_model, iterate_encrypted, run_encrypted_vi,
    EncError, RunMode};
use herl::he::{
    calibrate_noise_bounds, make_backend, serial, BackendKind, BackendParams, HeBackend,
    KeyMaterial, NoiseBounds, NoiseModel,
};
use herl::mdp::{build_grid_world, GridWorld, GridWorldSpec, GRID_ACTIONS};
use herl::rerl::{
    bellman_fixed_point_oracle, build_linear_system, desirability_to_value, min_vi_minimizers,
    reconstruct_policy, rot_vec, solve_direct, standard_min_vi, value_iterate, LinearSystem,
};
use herl_cli::config::{ExperimentConfig, ModeKind};
use herl_cli::experiment::{run_experiment, RunOutcome, CALIBRATION_TRIALS};
use herl_cli::protocol::{self, JobFrames};

const LAMBDA: f64 = 10.0;
const BENCH_SIZES: [usize; 4] = [1, 3, 7, 15];

/// Prints the verdict line for one criterion and hands the flag back for the
/// assert. The line, not the panic message, is the reviewable record.
fn verdict(number: u32, name: &str, pass: bool, details: &str) -> bool {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE criterion {number:02} {name}: {status} ({details})");
    pass
}

/// Benchmark layout with the given number of interior states.
fn bench_world(states: usize) -> GridWorld {
    let spec = match states {
        1 => GridWorldSpec::new(2, 1, (0, 1)),
        3 => GridWorldSpec::new(2, 2, (0, 0)),
        7 => GridWorldSpec::new(3, 3, (1, 1)).with_obstacles([(0, 0)]),
        15 => GridWorldSpec::new(4, 4, (0, 0)),
        n => panic!("no benchmark layout with {n} interior states"),
    };
    build_grid_world(spec, GRID_ACTIONS).unwrap()
}

fn inf_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn criterion_01_plaintext_solvers_agree() {
    let start = Instant::now();
    let mut worst_vi = 0.0f64;
    let mut worst_value = 0.0f64;
    for states in BENCH_SIZES {
        for lambda in [0.5, LAMBDA] {
            let world = bench_world(states);
            let sys = build_linear_system(&world.mdp, lambda).unwrap();
            let direct = solve_direct(&sys).unwrap();
            let vi = value_iterate(&sys, &vec![1.0; sys.dim()], 200_000, 1e-12).unwrap();
            assert!(vi.converged, "S={states} lambda={lambda} ran out of budget");
            worst_vi = worst_vi.max(inf_norm_diff(&vi.z, direct.values()));

            let values = desirability_to_value(&direct, lambda).unwrap();
            let oracle = bellman_fixed_point_oracle(&world.mdp, lambda, 1e-13, 1_000_000).unwrap();
            worst_value = worst_value.max(inf_norm_diff(&values, oracle.values()));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let details = format!(
        "8 configs: max |iterate - direct| = {worst_vi:.2e} (tol 1e-9), \
         max |log transform - softmin oracle| = {worst_value:.2e} (tol 1e-7), {elapsed:.2}s"
    );
    let pass = worst_vi < 1e-9 && worst_value < 1e-7 && elapsed < 1.0;
    assert!(verdict(1, "plaintext solvers agree", pass, &details), "{details}");
}

#[test]
fn criterion_02_convergence_under_thirty_iterations() {
    let start = Instant::now();
    let mut counts = Vec::new();
    for states in BENCH_SIZES {
        let world = bench_world(states);
        let sys = build_linear_system(&world.mdp, LAMBDA).unwrap();
        let vi = value_iterate(&sys, &vec![1.0; sys.dim()], 200_000, 1e-10).unwrap();
        assert!(vi.converged);
        counts.push((states, vi.iterations));
    }
    let elapsed = start.elapsed().as_secs_f64();
    let listed = counts
        .iter()
        .map(|(s, k)| format!("S={s}: {k}"))
        .collect::<Vec<_>>()
        .join(", ");
    let details = format!(
        "iterations to a 1e-10 step at lambda 10, cost 0.5: {listed}; target < 30, {elapsed:.2}s"
    );
    let pass = counts.iter().all(|&(_, k)| k < 30) && elapsed < 1.0;
    assert!(
        verdict(2, "convergence in under 30 iterations", pass, &details),
        "{details}; every row of the iteration matrix on these grids sums to at least \
         6/9 * exp(-0.05) = 0.634, and from an all-ones start the step differences decay \
         at exactly that rate, so no layout in this family can reach 1e-10 in under 45 sweeps"
    );
}

/// Shared fixture for criteria 03 and 04: one hundred independently seeded
/// simulator runs per grid size, audited against bounds calibrated once per
/// size, plus one overdriven control run audited against the honest bounds.
struct SimAudit {
    states: usize,
    bounds: NoiseBounds,
    beta: f64,
    runs: usize,
    residual_violations: usize,
    bound_violations: usize,
    max_residual: f64,
    min_bound_headroom: f64,
}

struct SimSweep {
    audits: Vec<SimAudit>,
    control_residual_violations: usize,
    control_bound_violations: usize,
    build_seconds: f64,
}

const SIM_RING: usize = 64;
const SIM_SCALE: u32 = 28;
const SIM_TRIAL_RUNS: usize = 100;
const SIM_STEPS: usize = 50;

fn sim_trial(
    sys: &LinearSystem,
    seed: u64,
    noise: Option<NoiseModel>,
) -> herl::analysis::ErrorReport {
    let params = BackendParams::new(SIM_RING, SIM_SCALE, seed);
    let backend = make_backend(BackendKind::Sim, params, noise).unwrap();
    let keys = backend.keygen().unwrap();
    let model = encrypt_model(backend.as_ref(), sys, &keys).unwrap();
    let z0 = vec![1.0; sys.dim()];
    let run = run_encrypted_vi(
        backend.as_ref(),
        &model,
        &z0,
        SIM_STEPS,
        &keys,
        RunMode::Traced {
            secret: &keys.secret,
        },
    )
    .unwrap();
    let snapshots = run.snapshots.unwrap();
    verify_run(sys, &z0, &snapshots, &sim_bounds(sys.dim()), 1.0).unwrap()
}

/// Calibrated envelopes per grid size, computed once on a dedicated probe
/// backend so every trial run starts from a fresh noise tape.
fn sim_bounds(dim: usize) -> NoiseBounds {
    static BOUNDS: OnceLock<Vec<(usize, NoiseBounds)>> = OnceLock::new();
    BOUNDS
        .get_or_init(|| {
            [3usize, 7]
                .iter()
                .map(|&states| {
                    let params =
                        BackendParams::new(SIM_RING, SIM_SCALE, 29_000 + states as u64);
                    let backend = make_backend(BackendKind::Sim, params, None).unwrap();
                    let keys = backend.keygen().unwrap();
                    let bounds = calibrate_noise_bounds(
                        backend.as_ref(),
                        &keys,
                        CALIBRATION_TRIALS,
                        29_100 + states as u64,
                    )
                    .unwrap();
                    (states, bounds)
                })
                .collect()
        })
        .iter()
        .find(|(states, _)| *states == dim)
        .map(|(_, bounds)| *bounds)
        .unwrap_or_else(|| panic!("no calibrated bounds for dimension {dim}"))
}

fn sim_sweep() -> &'static SimSweep {
    static SWEEP: OnceLock<SimSweep> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let start = Instant::now();
        let mut audits = Vec::new();
        for (states, seed_base) in [(3usize, 30_000u64), (7, 32_000)] {
            let world = bench_world(states);
            let sys = build_linear_system(&world.mdp, LAMBDA).unwrap();
            let bounds = sim_bounds(states);
            let (_, beta) = compute_beta(states, &bounds);
            let mut audit = SimAudit {
                states,
                bounds,
                beta,
                runs: SIM_TRIAL_RUNS,
                residual_violations: 0,
                bound_violations: 0,
                max_residual: 0.0,
                min_bound_headroom: f64::INFINITY,
            };
            for trial in 0..SIM_TRIAL_RUNS {
                let report = sim_trial(&sys, seed_base + trial as u64, None);
                audit.residual_violations += report.residual_violations;
                audit.bound_violations += report.bound_violations;
                audit.max_residual = audit
                    .max_residual
                    .max(report.residuals.iter().copied().fold(0.0, f64::max));
                let headroom = report
                    .bounds
                    .iter()
                    .zip(&report.deviations)
                    .map(|(b, d)| b - d)
                    .fold(f64::INFINITY, f64::min);
                audit.min_bound_headroom = audit.min_bound_headroom.min(headroom);
            }
            audits.push(audit);
        }

        // Control: same grid and audit, ten times the injected noise. The
        // envelopes stay calibrated at honest magnitudes, so the audit must
        // flag this run.
        let world = bench_world(3);
        let sys = build_linear_system(&world.mdp, LAMBDA).unwrap();
        let params = BackendParams::new(SIM_RING, SIM_SCALE, 34_000);
        let hot = NoiseModel::default_for(&params).scaled(10.0);
        let report = sim_trial(&sys, 34_000, Some(hot));
        SimSweep {
            audits,
            control_residual_violations: report.residual_violations,
            control_bound_violations: report.bound_violations,
            build_seconds: start.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn criterion_03_per_step_noise_envelope() {
    let start = Instant::now();
    let sweep = sim_sweep();
    let mut pass = true;
    let mut parts = Vec::new();
    for audit in &sweep.audits {
        // The envelope the audit applies must equal the closed form
        // dim * (2 b_mult + b_rot) + b_enc + b_boot.
        let manual = audit.states as f64 * (2.0 * audit.bounds.mult + audit.bounds.rot)
            + audit.bounds.enc
            + audit.bounds.boot;
        let formula_ok = (audit.beta - manual).abs() <= 1e-12 * manual;
        pass &= formula_ok && audit.residual_violations == 0;
        parts.push(format!(
            "S={}: {} runs x {} steps, max residual {:.2e} vs beta {:.2e}, {} violations",
            audit.states,
            audit.runs,
            SIM_STEPS,
            audit.max_residual,
            audit.beta,
            audit.residual_violations,
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    let details = format!(
        "{}; sweep built in {:.1}s, {elapsed:.1}s total",
        parts.join("; "),
        sweep.build_seconds
    );
    pass &= elapsed < 30.0;
    assert!(
        verdict(3, "per-step residuals stay inside the envelope", pass, &details),
        "{details}"
    );
}

#[test]
fn criterion_04_deviation_bound_with_negative_control() {
    let start = Instant::now();
    let sweep = sim_sweep();
    let mut pass = true;
    let mut parts = Vec::new();
    for audit in &sweep.audits {
        pass &= audit.bound_violations == 0;
        parts.push(format!(
            "S={}: {} runs, every k <= {} under the bound ({} violations, min headroom {:.2e})",
            audit.states, audit.runs, SIM_STEPS, audit.bound_violations, audit.min_bound_headroom,
        ));
    }
    let control = sweep.control_residual_violations + sweep.control_bound_violations;
    pass &= control >= 1;
    parts.push(format!(
        "10x noise control flagged with {} residual and {} deviation violations",
        sweep.control_residual_violations, sweep.control_bound_violations,
    ));
    let elapsed = start.elapsed().as_secs_f64();
    let details = format!("{}; {elapsed:.1}s", parts.join("; "));
    pass &= elapsed < 30.0;
    assert!(
        verdict(4, "trajectories respect the deviation bound", pass, &details),
        "{details}"
    );
}

/// Shared fixture for criteria 05, 06 and 07: full lattice-backend runs at
/// ring degree 2^7, traced and audited, with artifacts in a temp directory.
struct CkksRun {
    states: usize,
    scale_log2: u32,
    outcome: RunOutcome,
}

struct CkksFixture {
    _dir: TempDir,
    /// Scale sweep at 100 iterations: (S=3, 2^28), (S=3, 2^30), (S=7, 2^28),
    /// (S=7, 2^32).
    sweep: Vec<CkksRun>,
    /// The magnitude-check run: S=3, scale 2^28, 50 iterations.
    magnitude: CkksRun,
    build_seconds: f64,
}

fn ckks_cfg(states: usize, scale: u32, iters: usize, seed: u64, out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    match states {
        3 => {
            cfg.width = 2;
            cfg.height = 2;
            cfg.goal = (0, 0);
            cfg.obstacles.clear();
        }
        7 => {
            cfg.width = 3;
            cfg.height = 3;
            cfg.goal = (1, 1);
            cfg.obstacles = vec![(0, 0)];
        }
        n => panic!("no lattice benchmark with {n} states"),
    }
    cfg.backend = BackendKind::Ckks;
    cfg.ring_n = 128;
    cfg.scale_log2 = scale;
    cfg.iters = iters;
    cfg.seed = seed;
    cfg.mode = ModeKind::Traced;
    cfg.out = out.to_path_buf();
    cfg
}

fn ckks_fixture() -> &'static CkksFixture {
    static FIXTURE: OnceLock<CkksFixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let start = Instant::now();
        let dir = tempfile::tempdir().unwrap();
        let mut sweep = Vec::new();
        for (states, scale, seed) in [(3usize, 28u32, 1002u64), (3, 30, 1003), (7, 28, 1004), (7, 32, 1005)]
        {
            let out = dir.path().join(format!("s{states}_scale{scale}"));
            let cfg = ckks_cfg(states, scale, 100, seed, &out);
            let outcome = run_experiment(&cfg).unwrap();
            sweep.push(CkksRun {
                states,
                scale_log2: scale,
                outcome,
            });
        }
        let out = dir.path().join("magnitude");
        let cfg = ckks_cfg(3, 28, 50, 1001, &out);
        let magnitude = CkksRun {
            states: 3,
            scale_log2: 28,
            outcome: run_experiment(&cfg).unwrap(),
        };
        CkksFixture {
            _dir: dir,
            sweep,
            magnitude,
            build_seconds: start.elapsed().as_secs_f64(),
        }
    })
}

fn sweep_err(fixture: &CkksFixture, states: usize, scale: u32) -> f64 {
    fixture
        .sweep
        .iter()
        .find(|run| run.states == states && run.scale_log2 == scale)
        .unwrap_or_else(|| panic!("no sweep run for S={states} at scale {scale}"))
        .outcome
        .report
        .err_final
}

#[test]
fn criterion_05_scale_sweep_trend() {
    let start = Instant::now();
    let fixture = ckks_fixture();
    let e3_28 = sweep_err(fixture, 3, 28);
    let e3_30 = sweep_err(fixture, 3, 30);
    let e7_28 = sweep_err(fixture, 7, 28);
    let e7_32 = sweep_err(fixture, 7, 32);
    let factor = e3_28 / e3_30;
    let elapsed = start.elapsed().as_secs_f64();
    let details = format!(
        "S=3: {e3_28:.2e} -> {e3_30:.2e} (factor {factor:.2}, accepted 2..20); \
         S=7: {e7_28:.2e} -> {e7_32:.2e}; fixture {:.0}s, {elapsed:.0}s total",
        fixture.build_seconds
    );
    let pass = e3_30 < e3_28
        && e7_32 < e7_28
        && (2.0..=20.0).contains(&factor)
        && elapsed < 600.0;
    assert!(
        verdict(5, "error drops as the scale grows", pass, &details),
        "{details}"
    );
}

#[test]
fn criterion_06_lattice_error_magnitude() {
    let fixture = ckks_fixture();
    let err = fixture.magnitude.outcome.report.err_final;
    let details = format!(
        "S=3, ring 2^7, scale 2^28, 50 iterations: final relative error {err:.2e}, \
         accepted 1e-5..1e-2"
    );
    let pass = (1e-5..=1e-2).contains(&err);
    assert!(
        verdict(6, "lattice error magnitude in the accepted band", pass, &details),
        "{details}"
    );
}

#[test]
fn criterion_07_policy_fidelity() {
    let fixture = ckks_fixture();
    let mut pass = true;
    let mut checked_states = 0usize;
    let mut runs = 0usize;
    for run in fixture.sweep.iter().chain([&fixture.magnitude]) {
        runs += 1;
        let world = &run.outcome.world;
        let reference = reconstruct_policy(&world.mdp, &run.outcome.z_star, LAMBDA).unwrap();
        for state in world.mdp.interior_states() {
            checked_states += 1;
            if run.outcome.synthesis.policy.greedy(state) != reference.greedy(state) {
                pass = false;
            }
        }
    }
    let details = format!(
        "decrypted greedy action equals the plaintext greedy action at all \
         {checked_states} states across {runs} lattice runs"
    );
    assert!(
        verdict(7, "decrypted policy matches the plaintext policy", pass, &details),
        "{details}"
    );
}

#[test]
fn criterion_08_operation_noise_contract() {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();

    // Notation check: rotation is a cyclic left shift.
    let rotated = rot_vec(&[1.0, 2.0, 3.0, 4.0, 5.0], 2);
    pass &= rotated == [3.0, 4.0, 5.0, 1.0, 2.0];
    parts.push(format!("rot_vec([1 2 3 4 5], 2) = {rotated:?}"));

    for (kind, seed) in [(BackendKind::Sim, 2101u64), (BackendKind::Ckks, 2102)] {
        let params = BackendParams::new(64, 28, seed);
        let backend = make_backend(kind, params.clone(), None).unwrap();
        let keys = backend.keygen().unwrap();
        let bounds =
            calibrate_noise_bounds(backend.as_ref(), &keys, CALIBRATION_TRIALS, seed + 50).unwrap();

        // 100 fresh trials per operation against the calibrated envelopes,
        // measured exactly the way calibration measures them.
        let slots = params.slot_count();
        let mut rng = ChaCha20Rng::seed_from_u64(seed + 99);
        let sample = |rng: &mut ChaCha20Rng| -> Vec<f64> {
            (0..slots)
                .map(|_| rng.gen_range(-params.message_bound..params.message_bound))
                .collect()
        };
        let mut op_violations = 0usize;
        let mut add_worst = 0.0f64;
        let mut add_exact = true;
        for _ in 0..100 {
            let xs = sample(&mut rng);
            let ys = sample(&mut rng);
            let cx = backend.enc(&xs, &keys).unwrap();
            let dx = backend.dec(&cx, &keys.secret).unwrap();
            if inf_norm_diff(&dx, &xs) > bounds.enc {
                op_violations += 1;
            }

            let cy = backend.enc(&ys, &keys).unwrap();
            let dy = backend.dec(&cy, &keys.secret).unwrap();
            let prod = backend.mult(&cx, &cy, &keys.eval).unwrap();
            let dprod = backend.dec(&prod, &keys.secret).unwrap();
            let reference: Vec<f64> = xs.iter().zip(&dy).map(|(x, y)| x * y).collect();
            if inf_norm_diff(&dprod, &reference) > bounds.mult {
                op_violations += 1;
            }

            let amount = rng.gen_range(1..slots);
            let rot = backend.rotate(&cx, amount, &keys.eval).unwrap();
            let drot = backend.dec(&rot, &keys.secret).unwrap();
            if inf_norm_diff(&drot, &rot_vec(&dx, amount)) > bounds.rot {
                op_violations += 1;
            }

            let boot = backend.bootstrap(&cx, &keys.eval).unwrap();
            let dboot = backend.dec(&boot, &keys.secret).unwrap();
            if inf_norm_diff(&dboot, &dx) > bounds.boot {
                op_violations += 1;
            }

            // Addition must be exact: decrypting a ciphertext sum gives the
            // sum of the decryptions (bitwise on the simulator, float
            // resolution through the lattice decoder).
            let sum = backend.add(&cx, &cy).unwrap();
            let dsum = backend.dec(&sum, &keys.secret).unwrap();
            let gap = inf_norm_diff(
                &dsum,
                &dx.iter().zip(&dy).map(|(a, b)| a + b).collect::<Vec<_>>(),
            );
            add_worst = add_worst.max(gap);
            match kind {
                BackendKind::Sim => add_exact &= gap == 0.0,
                BackendKind::Ckks => add_exact &= gap <= 1e-12,
            }
        }
        pass &= op_violations == 0 && add_exact;
        parts.push(format!(
            "{}: 100 trials/op, {op_violations} envelope violations, additive gap {add_worst:.1e}",
            kind.name(),
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    let details = format!("{}; {elapsed:.1}s", parts.join("; "));
    assert!(
        verdict(8, "operation noise stays inside calibrated envelopes", pass, &details),
        "{details}"
    );
}

/// Client-side preparation of an outsourcing job: identical op order to a
/// local run so the noise tape lines up (model rows, source, selectors, then
/// the start vector; evaluation keys serialized last).
fn prepare_job(
    seed: u64,
    sys: &LinearSystem,
    iters: usize,
) -> (Box<dyn HeBackend>, KeyMaterial, JobFrames, BackendParams) {
    let params = BackendParams::new(64, 28, seed);
    let backend = make_backend(BackendKind::Sim, params.clone(), None).unwrap();
    let keys = backend.keygen().unwrap();
    let model = encrypt_model(backend.as_ref(), sys, &keys).unwrap();
    let z0 = backend.enc(&vec![1.0; sys.dim()], &keys).unwrap();
    let frames = JobFrames::build(backend.as_ref(), &model, &keys.eval, &z0, iters).unwrap();
    (backend, keys, frames, params)
}

#[test]
fn criterion_09_outsourcing_roundtrip_and_tamper() {
    const ITERS: usize = 20;
    let world = bench_world(3);
    let sys = build_linear_system(&world.mdp, LAMBDA).unwrap();

    // In-process reference, seed 42.
    let params = BackendParams::new(64, 28, 42);
    let backend = make_backend(BackendKind::Sim, params.clone(), None).unwrap();
    let keys = backend.keygen().unwrap();
    let model = encrypt_model(backend.as_ref(), &sys, &keys).unwrap();
    let z0 = backend.enc(&vec![1.0; sys.dim()], &keys).unwrap();
    let (local_ct, _) =
        iterate_encrypted(backend.as_ref(), &model, &z0, ITERS, &keys.eval).unwrap();
    let local_bytes = serial::ciphertext_to_bytes(&local_ct, &params).unwrap();
    let local_slots = backend.dec(&local_ct, &keys.secret).unwrap();

    // The same job under the same seed, served over a real socket.
    let (client_backend, client_keys, frames, client_params) = prepare_job(42, &sys, ITERS);
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let server = thread::spawn(move || protocol::serve_tcp(&listener, true));
    let remote_ct = protocol::outsource_tcp(&addr, &frames, &client_params).unwrap();
    server.join().unwrap().unwrap();
    let remote_bytes = serial::ciphertext_to_bytes(&remote_ct, &client_params).unwrap();
    let remote_slots = client_backend
        .dec(&remote_ct, &client_keys.secret)
        .unwrap();

    let bytes_equal = remote_bytes == local_bytes;
    let bits_equal = local_slots
        .iter()
        .zip(&remote_slots)
        .all(|(a, b)| a.to_bits() == b.to_bits())
        && local_slots.len() == remote_slots.len();

    // File transport with a corrupted result: flip the sign bit of each
    // interior slot in result.msg. The decrypted vector turns negative and
    // the positivity check must refuse to synthesize a policy.
    let (tamper_backend, tamper_keys, tamper_frames, tamper_params) = prepare_job(43, &sys, ITERS);
    let dir = tempfile::tempdir().unwrap();
    protocol::write_job_dir(dir.path(), &tamper_frames).unwrap();
    protocol::serve_dir(dir.path()).unwrap();
    let result_path = dir.path().join(protocol::RESULT_FILE);
    let mut bytes = fs::read(&result_path).unwrap();
    // Frame header is 5 bytes (length + type), the ciphertext header 18, and
    // slot j is a little-endian f64 at 18 + 8j whose sign bit sits in the
    // last byte.
    for slot in 0..sys.dim() {
        bytes[5 + 18 + 8 * slot + 7] ^= 0x80;
    }
    fs::write(&result_path, &bytes).unwrap();
    let tampered = protocol::read_result_dir(dir.path(), &tamper_params).unwrap();
    let refusal = client_finish(
        tamper_backend.as_ref(),
        &world.mdp,
        LAMBDA,
        &tampered,
        &tamper_keys.secret,
    );
    let detected = matches!(refusal, Err(EncError::SynthesisFailure { .. }));

    let details = format!(
        "socket run matches the local run: ciphertext bytes equal = {bytes_equal}, \
         decrypted bits equal = {bits_equal} ({} bytes); sign-flipped result.msg \
         rejected by the positivity check = {detected}",
        local_bytes.len()
    );
    let pass = bytes_equal && bits_equal && detected;
    assert!(
        verdict(9, "outsourcing reproduces locally and detects tampering", pass, &details),
        "{details}"
    );
}

#[test]
fn criterion_10_low_temperature_agreement() {
    let lambda = 0.05;
    let world = build_grid_world(GridWorldSpec::new(3, 3, (1, 1)), GRID_ACTIONS).unwrap();
    let sys = build_linear_system(&world.mdp, lambda).unwrap();
    let z = solve_direct(&sys).unwrap();
    let policy = reconstruct_policy(&world.mdp, &z, lambda).unwrap();
    let min_vi = standard_min_vi(&world.mdp, 0.0, 10_000).unwrap();
    assert!(min_vi.converged);

    let mut pass = true;
    let mut states = 0usize;
    for state in world.mdp.interior_states() {
        states += 1;
        let greedy = policy.greedy(state);
        let minimizers = min_vi_minimizers(&world.mdp, &min_vi.values, state, 1e-9);
        if !minimizers.contains(&greedy) {
            pass = false;
        }
    }
    let details = format!(
        "lambda 0.05 on the 3x3 center-goal grid: the argmax action is a shortest-path \
         minimizer at all {states} states"
    );
    assert!(
        verdict(10, "low-temperature policy matches min value iteration", pass, &details),
        "{details}"
    );
}
