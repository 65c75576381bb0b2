//! One full benchmark run: grid world to encrypted iteration to decrypted
//! policy, with every artifact written to disk and a serializable report of
//! what happened.

use std::fs;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use herl::analysis::{compute_beta, err_metric, verify_run, ErrorReport, ReportSummary};
use herl::encrypted::{client_finish, encrypt_model, run_encrypted_vi, RunMode, SynthesisOutput};
use herl::he::{
    calibrate_noise_bounds, make_backend, CountingBackend, HeBackend, KeyMaterial, NoiseBounds,
    OpCounts,
};
use herl::mdp::{build_grid_world, GridWorld, StateId, GRID_ACTIONS};
use herl::rerl::{
    build_linear_system, contractivity_check, desirability_to_value, solve_direct, value_iterate,
    ContractivityReport, Desirability, LinearSystem, Policy,
};

use crate::config::{ExperimentConfig, ModeKind};

/// Calibration trial count used everywhere in the harness.
pub const CALIBRATION_TRIALS: usize = 100;
/// Iteration cap for the plaintext reference solve.
const PLAINTEXT_ITER_CAP: usize = 200_000;

/// Probe seed for calibration, derived from the experiment seed so repeat
/// runs are identical without reusing the key seed itself.
pub fn calibration_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PlaintextReference {
    /// Plain iterations until the step norm fell below the configured
    /// tolerance.
    pub iterations_to_tol: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TimingSummary {
    pub total_wall_seconds: f64,
    pub total_boot_seconds: f64,
    pub mean_step_seconds: f64,
}

/// Everything a run reports; serialized as `report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub states: usize,
    pub slots: usize,
    pub contractivity: ContractivityReport,
    pub plaintext: PlaintextReference,
    pub noise_bounds: NoiseBounds,
    pub beta0: f64,
    pub beta: f64,
    /// Mean relative error of the final decrypted iterate against the
    /// direct solution.
    pub err_final: f64,
    pub clamped: usize,
    pub ops: OpCounts,
    pub timing: TimingSummary,
    /// Trajectory audit, present for traced runs only.
    pub trajectory: Option<ReportSummary>,
}

/// A finished run with the pieces callers may want to inspect further.
pub struct RunOutcome {
    pub report: RunReport,
    pub synthesis: SynthesisOutput,
    pub world: GridWorld,
    pub z_star: Desirability,
    pub error_report: Option<ErrorReport>,
}

/// Runs one experiment end to end and writes `report.json`, `trace.csv`,
/// `desirability.csv`, `policy.csv` and (when traced) `results.csv` into
/// the configured output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let world = build_grid_world(cfg.grid_spec(), GRID_ACTIONS).context("building grid world")?;
    let sys = build_linear_system(&world.mdp, cfg.lambda).context("building linear system")?;
    let dim = sys.dim();

    let contractivity = contractivity_check(&sys);
    if !contractivity.contractive {
        bail!(
            "iteration map is not a contraction (max row sum {}); refusing to run",
            contractivity.max_row_sum
        );
    }

    let z_star = solve_direct(&sys).context("direct reference solve")?;
    let z0 = vec![1.0; dim];
    let plain = value_iterate(&sys, &z0, PLAINTEXT_ITER_CAP, cfg.tol)
        .context("plaintext reference iteration")?;

    let params = cfg.backend_params();
    let noise = cfg.sim_noise(&params);
    let backend =
        make_backend(cfg.backend, params.clone(), noise).context("constructing backend")?;
    let keys = backend.keygen().context("key generation")?;
    let bounds = calibrate_noise_bounds(
        backend.as_ref(),
        &keys,
        CALIBRATION_TRIALS,
        calibration_seed(cfg.seed),
    )
    .context("noise calibration")?;
    let (beta0, beta) = compute_beta(dim, &bounds);

    let counter = CountingBackend::new(backend.as_ref());
    let model = encrypt_model(&counter, &sys, &keys).context("encrypting the model")?;
    let mode = match cfg.mode {
        ModeKind::Outsourced => RunMode::Outsourced,
        ModeKind::Traced => RunMode::Traced {
            secret: &keys.secret,
        },
    };
    let run = run_encrypted_vi(&counter, &model, &z0, cfg.iters, &keys, mode)
        .context("encrypted iteration")?;
    let synthesis = client_finish(&counter, &world.mdp, cfg.lambda, &run.z_final, &keys.secret)
        .context("decrypting and reconstructing the policy")?;
    let err_final = err_metric(synthesis.desirability.values(), z_star.values())?;

    let error_report = match &run.snapshots {
        Some(snapshots) => {
            Some(verify_run(&sys, &z0, snapshots, &bounds, 1.0).context("trajectory audit")?)
        }
        None => None,
    };

    let total_wall: f64 = run.timings.iter().map(|t| t.wall.as_secs_f64()).sum();
    let total_boot: f64 = run.timings.iter().map(|t| t.bootstrap.as_secs_f64()).sum();
    let report = RunReport {
        config: cfg.clone(),
        states: dim,
        slots: params.slot_count(),
        contractivity,
        plaintext: PlaintextReference {
            iterations_to_tol: plain.iterations,
            converged: plain.converged,
        },
        noise_bounds: bounds,
        beta0,
        beta,
        err_final,
        clamped: synthesis.clamped,
        ops: counter.counts(),
        timing: TimingSummary {
            total_wall_seconds: total_wall,
            total_boot_seconds: total_boot,
            mean_step_seconds: total_wall / cfg.iters as f64,
        },
        trajectory: error_report.as_ref().map(|r| r.summary()),
    };

    write_artifacts(cfg, &report, &world, &synthesis, &run.timings, &error_report)?;
    Ok(RunOutcome {
        report,
        synthesis,
        world,
        z_star,
        error_report,
    })
}

/// Runs the decrypt-and-finish half of an outsourced job. Key material is
/// re-derived from the configured seed, which is what makes the stateless
/// submit/collect split work; a real deployment would store keys instead.
/// `bounds` must come from a calibration at a fresh noise tape so reports
/// match what a local run of the same config records.
pub fn finish_outsourced(
    cfg: &ExperimentConfig,
    backend: &dyn HeBackend,
    keys: &KeyMaterial,
    world: &GridWorld,
    sys: &LinearSystem,
    z_final: &herl::he::Ciphertext,
    bounds: NoiseBounds,
) -> Result<RunOutcome> {
    let dim = sys.dim();
    let contractivity = contractivity_check(sys);
    let z_star = solve_direct(sys)?;
    let z0 = vec![1.0; dim];
    let plain = value_iterate(sys, &z0, PLAINTEXT_ITER_CAP, cfg.tol)?;
    let (beta0, beta) = compute_beta(dim, &bounds);

    let synthesis = client_finish(backend, &world.mdp, cfg.lambda, z_final, &keys.secret)
        .context("decrypting and reconstructing the policy")?;
    let err_final = err_metric(synthesis.desirability.values(), z_star.values())?;

    let report = RunReport {
        config: cfg.clone(),
        states: dim,
        slots: backend.params().slot_count(),
        contractivity,
        plaintext: PlaintextReference {
            iterations_to_tol: plain.iterations,
            converged: plain.converged,
        },
        noise_bounds: bounds,
        beta0,
        beta,
        err_final,
        clamped: synthesis.clamped,
        ops: OpCounts::default(),
        timing: TimingSummary {
            total_wall_seconds: 0.0,
            total_boot_seconds: 0.0,
            mean_step_seconds: 0.0,
        },
        trajectory: None,
    };
    write_artifacts(cfg, &report, world, &synthesis, &[], &None)?;
    Ok(RunOutcome {
        report,
        synthesis,
        world: world.clone(),
        z_star,
        error_report: None,
    })
}

fn write_artifacts(
    cfg: &ExperimentConfig,
    report: &RunReport,
    world: &GridWorld,
    synthesis: &SynthesisOutput,
    timings: &[herl::encrypted::StepTiming],
    error_report: &Option<ErrorReport>,
) -> Result<()> {
    fs::create_dir_all(&cfg.out)
        .with_context(|| format!("creating output directory {}", cfg.out.display()))?;

    let json = serde_json::to_string_pretty(report)?;
    fs::write(cfg.out.join("report.json"), json).context("writing report.json")?;

    write_desirability_csv(
        &cfg.out.join("desirability.csv"),
        world,
        &synthesis.desirability,
        cfg.lambda,
    )?;
    write_policy_csv(&cfg.out.join("policy.csv"), world, &synthesis.policy)?;
    if !timings.is_empty() {
        write_trace_csv(&cfg.out.join("trace.csv"), timings)?;
    }
    if let Some(er) = error_report {
        let mut out = BufWriter::new(File::create(cfg.out.join("results.csv"))?);
        herl::analysis::write_csv(er, &mut out).context("writing results.csv")?;
    }
    Ok(())
}

fn write_desirability_csv(
    path: &Path,
    world: &GridWorld,
    z: &Desirability,
    lambda: f64,
) -> Result<()> {
    let values = desirability_to_value(z, lambda)?;
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "state,row,col,z,value")?;
    for (x, value) in values.iter().enumerate() {
        let (row, col) = world.cell_of(StateId(x));
        let zi = z.values().get(x).copied().unwrap_or(1.0);
        writeln!(out, "{x},{row},{col},{zi},{value}")?;
    }
    Ok(())
}

fn write_policy_csv(path: &Path, world: &GridWorld, policy: &Policy) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "state,row,col,action,dr,dc,prob,greedy")?;
    for x in world.mdp.interior_states() {
        let (row, col) = world.cell_of(x);
        let greedy = policy.greedy(x);
        for u in world.mdp.actions() {
            let (dr, dc) = GridWorld::delta_of(u);
            writeln!(
                out,
                "{},{row},{col},{},{dr},{dc},{},{}",
                x.0,
                u.0,
                policy.prob(x, u),
                u8::from(u == greedy)
            )?;
        }
    }
    Ok(())
}

fn write_trace_csv(path: &Path, timings: &[herl::encrypted::StepTiming]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "k,wall_seconds,boot_seconds")?;
    for (k, t) in timings.iter().enumerate() {
        writeln!(
            out,
            "{},{},{}",
            k + 1,
            t.wall.as_secs_f64(),
            t.bootstrap.as_secs_f64()
        )?;
    }
    Ok(())
}

/// One row of `sweep_summary.csv`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepRow {
    pub scale_log2: u32,
    pub err_final: f64,
    pub beta: f64,
    pub limsup_bound: Option<f64>,
    pub bound_violations: Option<usize>,
    pub residual_violations: Option<usize>,
    pub total_wall_seconds: f64,
}

/// Repeats the experiment across encoding scales, writing each run into
/// `out/scale_<s>/` and aggregating `sweep.csv` (per-iterate error curves)
/// plus `sweep_summary.csv` under the base output directory.
pub fn run_sweep(base: &ExperimentConfig, scales: &[u32]) -> Result<(Vec<RunOutcome>, Vec<SweepRow>)> {
    if scales.is_empty() {
        bail!("sweep needs at least one scale_log2 value");
    }
    fs::create_dir_all(&base.out)?;
    let mut outcomes = Vec::with_capacity(scales.len());
    let mut rows = Vec::with_capacity(scales.len());

    let mut curves = BufWriter::new(File::create(base.out.join("sweep.csv"))?);
    writeln!(curves, "scale_log2,k,err,bound")?;
    for &scale in scales {
        let mut cfg = base.clone();
        cfg.scale_log2 = scale;
        cfg.out = base.out.join(format!("scale_{scale}"));
        let outcome = run_experiment(&cfg).with_context(|| format!("scale_log2 = {scale}"))?;

        if let Some(er) = &outcome.error_report {
            for k in 0..er.errs.len() {
                writeln!(curves, "{scale},{k},{},{}", er.errs[k], er.bounds[k])?;
            }
        }
        rows.push(SweepRow {
            scale_log2: scale,
            err_final: outcome.report.err_final,
            beta: outcome.report.beta,
            limsup_bound: outcome.report.trajectory.as_ref().map(|t| t.limsup_bound),
            bound_violations: outcome.report.trajectory.as_ref().map(|t| t.bound_violations),
            residual_violations: outcome
                .report
                .trajectory
                .as_ref()
                .map(|t| t.residual_violations),
            total_wall_seconds: outcome.report.timing.total_wall_seconds,
        });
        outcomes.push(outcome);
    }
    curves.flush()?;

    let mut summary = BufWriter::new(File::create(base.out.join("sweep_summary.csv"))?);
    writeln!(
        summary,
        "scale_log2,err_final,beta,limsup_bound,bound_violations,residual_violations,total_wall_seconds"
    )?;
    for row in &rows {
        writeln!(
            summary,
            "{},{},{},{},{},{},{}",
            row.scale_log2,
            row.err_final,
            row.beta,
            row.limsup_bound.map(|v| v.to_string()).unwrap_or_default(),
            row.bound_violations.map(|v| v.to_string()).unwrap_or_default(),
            row.residual_violations.map(|v| v.to_string()).unwrap_or_default(),
            row.total_wall_seconds
        )?;
    }
    summary.flush()?;
    Ok((outcomes, rows))
}
