//! Command-line front end: run experiments, sweep encoding scales, measure
//! noise envelopes, and serve or submit outsourced jobs.

use std::io::Write;
use std::net::TcpListener;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use herl::encrypted::encrypt_model;
use herl::he::{calibrate_noise_bounds, make_backend};
use herl::mdp::{build_grid_world, GRID_ACTIONS};
use herl::rerl::build_linear_system;

use herl_cli::config::{parse_override, ExperimentConfig};
use herl_cli::experiment::{
    calibration_seed, finish_outsourced, run_experiment, run_sweep, CALIBRATION_TRIALS,
};
use herl_cli::protocol;

#[derive(Parser)]
#[command(
    name = "herl",
    version,
    about = "Encrypted policy synthesis benchmark harness"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let overrides = self
            .set
            .iter()
            .map(|s| parse_override(s))
            .collect::<Result<Vec<_>>>()?;
        ExperimentConfig::from_sources(self.config.as_deref(), &overrides)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one encrypted synthesis experiment and write its artifacts.
    Synth(ConfigArgs),
    /// Repeat an experiment across encoding scales.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated scale_log2 values.
        #[arg(long, value_delimiter = ',', required = true)]
        scales: Vec<u32>,
    },
    /// Measure per-operation noise envelopes for the configured backend.
    Calibrate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = CALIBRATION_TRIALS)]
        trials: usize,
    },
    /// Solve incoming encrypted jobs, over TCP or from a job directory.
    Serve {
        /// TCP port to listen on; 0 picks an ephemeral port.
        #[arg(long, conflicts_with = "dir")]
        port: Option<u16>,
        /// Process `model.msg` and `state.msg` in this directory instead.
        #[arg(long)]
        dir: Option<PathBuf>,
        /// Handle a single TCP session, then exit.
        #[arg(long)]
        once: bool,
    },
    /// Ship an encrypted job to a solver and turn the result into a policy.
    Outsource {
        #[command(flatten)]
        config: ConfigArgs,
        /// Solver address, host:port; runs the full round trip.
        #[arg(long, conflicts_with = "dir")]
        addr: Option<String>,
        /// Job directory for the file transport.
        #[arg(long)]
        dir: Option<PathBuf>,
        /// With --dir: write `model.msg` and `state.msg`, then exit.
        #[arg(long)]
        submit: bool,
        /// With --dir: read `result.msg` and finish the synthesis.
        #[arg(long, conflicts_with = "submit")]
        collect: bool,
    },
}

fn main() {
    eprintln!("herl: research prototype, toy parameters, no real cryptographic security");
    if let Err(e) = run() {
        let line = serde_json::json!({ "error": format!("{e:#}") });
        eprintln!("{line}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Synth(config) => synth(&config.load()?),
        Cmd::Sweep { config, scales } => sweep(&config.load()?, &scales),
        Cmd::Calibrate { config, trials } => calibrate(&config.load()?, trials),
        Cmd::Serve { port, dir, once } => serve(port, dir, once),
        Cmd::Outsource {
            config,
            addr,
            dir,
            submit,
            collect,
        } => outsource(&config.load()?, addr, dir, submit, collect),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer(&mut stdout, value)?;
    stdout.write_all(b"\n")?;
    Ok(())
}

fn synth(cfg: &ExperimentConfig) -> Result<()> {
    let outcome = run_experiment(cfg)?;
    print_json(&outcome.report)
}

fn sweep(cfg: &ExperimentConfig, scales: &[u32]) -> Result<()> {
    let (_outcomes, rows) = run_sweep(cfg, scales)?;
    print_json(&serde_json::json!({
        "out": cfg.out,
        "rows": rows,
    }))
}

fn calibrate(cfg: &ExperimentConfig, trials: usize) -> Result<()> {
    let params = cfg.backend_params();
    let noise = cfg.sim_noise(&params);
    let backend = make_backend(cfg.backend, params.clone(), noise)?;
    let keys = backend.keygen()?;
    let bounds =
        calibrate_noise_bounds(backend.as_ref(), &keys, trials, calibration_seed(cfg.seed))?;
    print_json(&serde_json::json!({
        "backend": cfg.backend,
        "ring_n": cfg.ring_n,
        "scale_log2": cfg.scale_log2,
        "trials": trials,
        "bounds": bounds,
    }))
}

fn serve(port: Option<u16>, dir: Option<PathBuf>, once: bool) -> Result<()> {
    match (port, dir) {
        (Some(port), None) => {
            let listener = TcpListener::bind(("127.0.0.1", port)).context("binding listener")?;
            let actual = listener.local_addr()?.port();
            println!("LISTENING {actual}");
            std::io::stdout().flush()?;
            protocol::serve_tcp(&listener, once)
        }
        (None, Some(dir)) => {
            protocol::serve_dir(&dir)?;
            print_json(&serde_json::json!({ "served": dir }))
        }
        (None, None) => bail!("serve needs --port or --dir"),
        (Some(_), Some(_)) => unreachable!("clap forbids --port with --dir"),
    }
}

fn outsource(
    cfg: &ExperimentConfig,
    addr: Option<String>,
    dir: Option<PathBuf>,
    submit: bool,
    collect: bool,
) -> Result<()> {
    // Outsourcing never decrypts mid-run, whatever the config says. All key
    // material is re-derived from the configured seed, so submit and collect
    // can run as separate processes.
    let world = build_grid_world(cfg.grid_spec(), GRID_ACTIONS)?;
    let sys = build_linear_system(&world.mdp, cfg.lambda)?;
    let params = cfg.backend_params();
    let backend = make_backend(cfg.backend, params.clone(), cfg.sim_noise(&params))?;
    let keys = backend.keygen()?;
    // Calibration runs before encryption in every flow, so the noise-tape
    // cursor lines up between a local `synth` run and an outsourced one.
    let bounds = calibrate_noise_bounds(
        backend.as_ref(),
        &keys,
        CALIBRATION_TRIALS,
        calibration_seed(cfg.seed),
    )?;

    match (addr, dir) {
        (Some(addr), None) => {
            let model = encrypt_model(backend.as_ref(), &sys, &keys)?;
            let z0 = backend.enc(&vec![1.0; sys.dim()], &keys)?;
            let frames = protocol::JobFrames::build(
                backend.as_ref(),
                &model,
                &keys.eval,
                &z0,
                cfg.iters,
            )?;
            let z_final = protocol::outsource_tcp(&addr, &frames, &params)?;
            let outcome =
                finish_outsourced(cfg, backend.as_ref(), &keys, &world, &sys, &z_final, bounds)?;
            print_json(&outcome.report)
        }
        (None, Some(dir)) => {
            if submit == collect {
                bail!("--dir mode needs exactly one of --submit or --collect");
            }
            if submit {
                let model = encrypt_model(backend.as_ref(), &sys, &keys)?;
                let z0 = backend.enc(&vec![1.0; sys.dim()], &keys)?;
                let frames = protocol::JobFrames::build(
                    backend.as_ref(),
                    &model,
                    &keys.eval,
                    &z0,
                    cfg.iters,
                )?;
                protocol::write_job_dir(&dir, &frames)?;
                print_json(&serde_json::json!({ "submitted": dir }))
            } else {
                let z_final = protocol::read_result_dir(&dir, &params)?;
                let outcome =
                    finish_outsourced(cfg, backend.as_ref(), &keys, &world, &sys, &z_final, bounds)?;
                print_json(&outcome.report)
            }
        }
        (None, None) => bail!("outsource needs --addr or --dir"),
        (Some(_), Some(_)) => unreachable!("clap forbids --addr with --dir"),
    }
}
