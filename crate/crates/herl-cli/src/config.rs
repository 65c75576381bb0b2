//! Flat `key = value` experiment configuration. A config file sets any
//! subset of the keys; `--set key=value` command-line pairs override the
//! file; everything else keeps the defaults below.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use herl::he::{BackendKind, BackendParams, NoiseModel};
use herl::mdp::GridWorldSpec;
use serde::Serialize;

/// Whether the encrypted run decrypts intermediate iterates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeKind {
    /// Only the final ciphertext is decrypted; this is the outsourcing
    /// deployment shape.
    Outsourced,
    /// Every iterate is decrypted for offline error analysis.
    Traced,
}

impl FromStr for ModeKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "outsourced" => Ok(Self::Outsourced),
            "traced" => Ok(Self::Traced),
            other => bail!("unknown mode {other:?}, expected outsourced or traced"),
        }
    }
}

impl fmt::Display for ModeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Outsourced => "outsourced",
            Self::Traced => "traced",
        })
    }
}

/// One fully specified experiment.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub width: usize,
    pub height: usize,
    /// Goal cell as `(row, col)`.
    pub goal: (usize, usize),
    pub obstacles: Vec<(usize, usize)>,
    pub stage_cost: f64,
    pub lambda: f64,
    pub backend: BackendKind,
    pub ring_n: usize,
    pub scale_log2: u32,
    pub seed: u64,
    /// Encrypted iterations to run.
    pub iters: usize,
    /// Stop tolerance for the plaintext reference iteration.
    pub tol: f64,
    pub mode: ModeKind,
    /// Directory all artifacts are written into.
    pub out: PathBuf,
    /// Multiplier on the simulator's default noise magnitudes.
    pub noise_scale: f64,
    pub noise_enc: Option<f64>,
    pub noise_mult: Option<f64>,
    pub noise_rot: Option<f64>,
    pub noise_boot: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            width: 3,
            height: 3,
            goal: (1, 1),
            obstacles: vec![(0, 0)],
            stage_cost: 0.5,
            lambda: 10.0,
            backend: BackendKind::Sim,
            ring_n: 128,
            scale_log2: 28,
            seed: 42,
            iters: 50,
            tol: 1e-10,
            mode: ModeKind::Traced,
            out: PathBuf::from("herl-out"),
            noise_scale: 1.0,
            noise_enc: None,
            noise_mult: None,
            noise_rot: None,
            noise_boot: None,
        }
    }
}

fn parse_cell(value: &str) -> Result<(usize, usize)> {
    let (r, c) = value
        .split_once(',')
        .with_context(|| format!("expected ROW,COL, got {value:?}"))?;
    Ok((
        r.trim().parse().with_context(|| format!("bad row in {value:?}"))?,
        c.trim().parse().with_context(|| format!("bad col in {value:?}"))?,
    ))
}

fn parse_cells(value: &str) -> Result<Vec<(usize, usize)>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(';').map(parse_cell).collect()
}

impl ExperimentConfig {
    /// Builds a config from an optional file plus override pairs, in that
    /// precedence order.
    pub fn from_sources(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').with_context(|| {
                    format!("{}:{}: expected key = value", path.display(), lineno + 1)
                })?;
                cfg.set(key.trim(), value.trim()).with_context(|| {
                    format!("{}:{}", path.display(), lineno + 1)
                })?;
            }
        }
        for (key, value) in overrides {
            cfg.set(key, value)
                .with_context(|| format!("override {key}={value}"))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one key. Unknown keys are rejected so typos surface instead
    /// of silently keeping a default.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "width" => self.width = value.parse().context("width")?,
            "height" => self.height = value.parse().context("height")?,
            "goal" => self.goal = parse_cell(value)?,
            "obstacles" => self.obstacles = parse_cells(value)?,
            "stage_cost" => self.stage_cost = value.parse().context("stage_cost")?,
            "lambda" => self.lambda = value.parse().context("lambda")?,
            "backend" => {
                self.backend = match value {
                    "noise-sim" | "sim" => BackendKind::Sim,
                    "toy-ckks" | "ckks" => BackendKind::Ckks,
                    other => bail!("unknown backend {other:?}, expected noise-sim or toy-ckks"),
                }
            }
            "ring_n" => self.ring_n = value.parse().context("ring_n")?,
            "scale_log2" => self.scale_log2 = value.parse().context("scale_log2")?,
            "seed" => self.seed = value.parse().context("seed")?,
            "iters" => self.iters = value.parse().context("iters")?,
            "tol" => self.tol = value.parse().context("tol")?,
            "mode" => self.mode = value.parse()?,
            "out" => self.out = PathBuf::from(value),
            "noise_scale" => self.noise_scale = value.parse().context("noise_scale")?,
            "noise_enc" => self.noise_enc = Some(value.parse().context("noise_enc")?),
            "noise_mult" => self.noise_mult = Some(value.parse().context("noise_mult")?),
            "noise_rot" => self.noise_rot = Some(value.parse().context("noise_rot")?),
            "noise_boot" => self.noise_boot = Some(value.parse().context("noise_boot")?),
            other => bail!(
                "unknown config key {other:?} (known: width, height, goal, obstacles, \
                 stage_cost, lambda, backend, ring_n, scale_log2, seed, iters, tol, mode, \
                 out, noise_scale, noise_enc, noise_mult, noise_rot, noise_boot)"
            ),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            bail!("iters must be positive");
        }
        let explicit = [self.noise_enc, self.noise_mult, self.noise_rot, self.noise_boot];
        let given = explicit.iter().filter(|v| v.is_some()).count();
        if given != 0 && given != 4 {
            bail!("set all four noise_* magnitudes or none");
        }
        if self.backend == BackendKind::Ckks && (given != 0 || self.noise_scale != 1.0) {
            bail!("noise_* keys apply only to the noise-sim backend");
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            bail!("noise_scale must be a finite nonnegative number");
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> GridWorldSpec {
        GridWorldSpec::new(self.width, self.height, self.goal)
            .with_obstacles(self.obstacles.iter().copied())
            .with_stage_cost(self.stage_cost)
    }

    pub fn backend_params(&self) -> BackendParams {
        BackendParams::new(self.ring_n, self.scale_log2, self.seed)
    }

    /// Simulator noise model implied by the config; `None` for the lattice
    /// backend, which derives its noise from ring arithmetic.
    pub fn sim_noise(&self, params: &BackendParams) -> Option<NoiseModel> {
        match self.backend {
            BackendKind::Ckks => None,
            BackendKind::Sim => {
                if let (Some(enc), Some(mult), Some(rot), Some(boot)) =
                    (self.noise_enc, self.noise_mult, self.noise_rot, self.noise_boot)
                {
                    Some(NoiseModel { enc, mult, rot, boot })
                } else {
                    Some(NoiseModel::default_for(params).scaled(self.noise_scale))
                }
            }
        }
    }
}

/// Splits a `key=value` command-line pair.
pub fn parse_override(pair: &str) -> Result<(String, String)> {
    let (k, v) = pair
        .split_once('=')
        .with_context(|| format!("expected key=value, got {pair:?}"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}
