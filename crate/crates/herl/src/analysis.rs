//! Error accounting for noisy desirability iterations.
//!
//! The plaintext update is an affine contraction with factor `alpha` (the
//! maximum row sum of the system matrix). Each encrypted step additionally
//! injects bounded per-slot noise: at most `beta = dim * (2*b_mult + b_rot)
//! + b_enc + b_boot` per step given per-operation envelopes, and at most
//! `beta0 = b_enc` at encryption time. Unrolling the contraction gives the
//! deviation bound implemented by [`convergence_bound`]:
//!
//! ```text
//! |Z~_k - Z*|_inf <= c * (alpha^k * (|Z_0 - Z*|_inf + beta0) + beta / (1 - alpha))
//! ```
//!
//! so noisy iterates converge geometrically into a ball of radius
//! `c * beta / (1 - alpha)` around the fixed point instead of to the point
//! itself. [`verify_run`] checks a decrypted trajectory against this bound
//! and against the per-step residual envelope, turning the inequality into a
//! falsifiable runtime assertion.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::he::NoiseBounds;
use crate::rerl::{encryption_friendly_step, solve_direct, LinearSystem, RerlError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("parameter {name} = {value} is outside its valid range")]
    BadParam { name: &'static str, value: f64 },
    #[error("vectors have different lengths: {a} vs {b}")]
    MismatchedLengths { a: usize, b: usize },
    #[error("iterate {index} has {got} entries, expected {expected}")]
    BadIterate {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("trajectory must contain at least the initial iterate")]
    EmptyTrajectory,
    #[error("reference vector mean must be positive")]
    DegenerateReference,
    #[error(transparent)]
    Rerl(#[from] RerlError),
    #[error("writing report: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-step and initial noise envelopes implied by per-operation bounds,
/// for a system of `dim` states: one step touches each slot with `2*dim`
/// multiplications' and `dim` rotations' worth of error plus the source
/// vector's encryption error and one bootstrap, while encryption alone
/// perturbs the start by at most the encryption envelope.
///
/// Returns `(beta0, beta)`.
pub fn compute_beta(dim: usize, bounds: &NoiseBounds) -> (f64, f64) {
    let beta0 = bounds.enc;
    let beta = dim as f64 * (2.0 * bounds.mult + bounds.rot) + bounds.enc + bounds.boot;
    (beta0, beta)
}

/// Inputs to [`convergence_bound`], validated once at construction.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundParams {
    pub c: f64,
    pub alpha: f64,
    pub beta0: f64,
    pub beta: f64,
    pub z0_gap: f64,
}

impl BoundParams {
    pub fn new(
        c: f64,
        alpha: f64,
        beta0: f64,
        beta: f64,
        z0_gap: f64,
    ) -> Result<Self, AnalysisError> {
        if !(c.is_finite() && c > 0.0) {
            return Err(AnalysisError::BadParam {
                name: "c",
                value: c,
            });
        }
        if !(alpha.is_finite() && (0.0..1.0).contains(&alpha)) {
            return Err(AnalysisError::BadParam {
                name: "alpha",
                value: alpha,
            });
        }
        for (name, value) in [("beta0", beta0), ("beta", beta), ("z0_gap", z0_gap)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(AnalysisError::BadParam { name, value });
            }
        }
        Ok(Self {
            c,
            alpha,
            beta0,
            beta,
            z0_gap,
        })
    }

    /// The radius noisy iterates never escape in the limit.
    pub fn limsup_bound(&self) -> f64 {
        self.c * self.beta / (1.0 - self.alpha)
    }
}

/// Worst-case deviation of the noisy iterate `k` from the fixed point.
pub fn convergence_bound(p: &BoundParams, k: usize) -> f64 {
    let k = i32::try_from(k).unwrap_or(i32::MAX);
    p.c * (p.alpha.powi(k) * (p.z0_gap + p.beta0) + p.beta / (1.0 - p.alpha))
}

/// Relative error of an approximate desirability vector: mean absolute
/// deviation divided by the mean of the reference.
pub fn err_metric(z_tilde: &[f64], z_star: &[f64]) -> Result<f64, AnalysisError> {
    if z_tilde.len() != z_star.len() {
        return Err(AnalysisError::MismatchedLengths {
            a: z_tilde.len(),
            b: z_star.len(),
        });
    }
    if z_star.is_empty() {
        return Err(AnalysisError::DegenerateReference);
    }
    let n = z_star.len() as f64;
    let mean_dev = z_tilde
        .iter()
        .zip(z_star)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n;
    let mean_star = z_star.iter().sum::<f64>() / n;
    if !(mean_star.is_finite() && mean_star > 0.0) {
        return Err(AnalysisError::DegenerateReference);
    }
    Ok(mean_dev / mean_star)
}

fn inf_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Everything [`verify_run`] measures about one decrypted trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub params: BoundParams,
    /// Relative error of each iterate against the direct solution.
    pub errs: Vec<f64>,
    /// Sup-norm deviation of each iterate from the direct solution.
    pub deviations: Vec<f64>,
    /// Sup-norm gap between each consecutive iterate and one exact plaintext
    /// step from its predecessor; entry `k` covers the step `k -> k+1`.
    pub residuals: Vec<f64>,
    /// The deviation bound evaluated at each iterate.
    pub bounds: Vec<f64>,
    pub limsup_bound: f64,
    /// Iterates whose deviation exceeds the bound.
    pub bound_violations: usize,
    /// Steps whose residual exceeds the per-step envelope `beta`.
    pub residual_violations: usize,
}

impl ErrorReport {
    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            iterations: self.residuals.len(),
            alpha: self.params.alpha,
            c: self.params.c,
            beta0: self.params.beta0,
            beta: self.params.beta,
            z0_gap: self.params.z0_gap,
            limsup_bound: self.limsup_bound,
            final_err: *self.errs.last().expect("reports hold at least one iterate"),
            max_residual: self.residuals.iter().copied().fold(0.0, f64::max),
            bound_violations: self.bound_violations,
            residual_violations: self.residual_violations,
        }
    }
}

/// Compact serializable digest of an [`ErrorReport`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReportSummary {
    pub iterations: usize,
    pub alpha: f64,
    pub c: f64,
    pub beta0: f64,
    pub beta: f64,
    pub z0_gap: f64,
    pub limsup_bound: f64,
    pub final_err: f64,
    pub max_residual: f64,
    pub bound_violations: usize,
    pub residual_violations: usize,
}

/// Audits a decrypted trajectory (`snapshots[0]` is the decrypted fresh
/// encryption of `z0`, `snapshots[k]` the decryption after step `k`)
/// against the deviation bound built from `bounds` and against the per-step
/// noise envelope. The fixed point is recomputed here by direct elimination,
/// independently of however the trajectory was produced.
pub fn verify_run(
    sys: &LinearSystem,
    z0: &[f64],
    snapshots: &[Vec<f64>],
    bounds: &NoiseBounds,
    c: f64,
) -> Result<ErrorReport, AnalysisError> {
    let dim = sys.dim();
    if snapshots.is_empty() {
        return Err(AnalysisError::EmptyTrajectory);
    }
    if z0.len() != dim {
        return Err(AnalysisError::BadIterate {
            index: 0,
            expected: dim,
            got: z0.len(),
        });
    }
    for (index, snap) in snapshots.iter().enumerate() {
        if snap.len() != dim {
            return Err(AnalysisError::BadIterate {
                index,
                expected: dim,
                got: snap.len(),
            });
        }
    }

    let z_star = solve_direct(sys)?;
    let z_star = z_star.values();
    let alpha = sys.max_row_sum();
    let (beta0, beta) = compute_beta(dim, bounds);
    let z0_gap = inf_norm_diff(z0, z_star);
    let params = BoundParams::new(c, alpha, beta0, beta, z0_gap)?;

    let mut errs = Vec::with_capacity(snapshots.len());
    let mut deviations = Vec::with_capacity(snapshots.len());
    let mut bound_values = Vec::with_capacity(snapshots.len());
    for (k, snap) in snapshots.iter().enumerate() {
        errs.push(err_metric(snap, z_star)?);
        deviations.push(inf_norm_diff(snap, z_star));
        bound_values.push(convergence_bound(&params, k));
    }
    let residuals: Vec<f64> = snapshots
        .windows(2)
        .map(|pair| inf_norm_diff(&pair[1], &encryption_friendly_step(sys, &pair[0])))
        .collect();

    let bound_violations = deviations
        .iter()
        .zip(&bound_values)
        .filter(|(d, b)| d > b)
        .count();
    let residual_violations = residuals.iter().filter(|r| **r > beta).count();
    Ok(ErrorReport {
        limsup_bound: params.limsup_bound(),
        params,
        errs,
        deviations,
        residuals,
        bounds: bound_values,
        bound_violations,
        residual_violations,
    })
}

/// Writes `k,err,residual,bound` rows; the final iterate has no outgoing
/// step, so its residual field is empty.
pub fn write_csv(report: &ErrorReport, w: &mut dyn Write) -> Result<(), AnalysisError> {
    writeln!(w, "k,err,residual,bound")?;
    for k in 0..report.errs.len() {
        let residual = report
            .residuals
            .get(k)
            .map(|r| r.to_string())
            .unwrap_or_default();
        writeln!(w, "{k},{},{residual},{}", report.errs[k], report.bounds[k])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{build_grid_world, GridWorldSpec, GRID_ACTIONS};
    use crate::rerl::{build_linear_system, encryption_friendly_iterate};

    fn sample_bounds() -> NoiseBounds {
        NoiseBounds {
            enc: 1e-7,
            mult: 1e-6,
            rot: 1e-6,
            boot: 1e-5,
        }
    }

    fn grid_system() -> LinearSystem {
        let world = build_grid_world(GridWorldSpec::new(2, 2, (0, 0)), GRID_ACTIONS).unwrap();
        build_linear_system(&world.mdp, 10.0).unwrap()
    }

    #[test]
    fn beta_formula_matches_reference_values() {
        let (beta0, beta) = compute_beta(3, &sample_bounds());
        assert_eq!(beta0, 1e-7);
        assert_eq!(beta, 1.9100000000000003e-5);
    }

    #[test]
    fn bound_matches_reference_values() {
        let p = BoundParams::new(1.0, 0.9512, 1e-7, 1e-5, 1.0).unwrap();
        assert!((convergence_bound(&p, 50) - 0.08216306373607135).abs() < 1e-15);
        assert!((convergence_bound(&p, 0) - 1.000205018032787).abs() < 1e-15);
        assert!((p.limsup_bound() - 1e-5 / (1.0 - 0.9512)).abs() < 1e-18);
        // Monotone decreasing toward the limit radius.
        let mut prev = f64::INFINITY;
        for k in 0..200 {
            let b = convergence_bound(&p, k);
            assert!(b <= prev && b >= p.limsup_bound());
            prev = b;
        }
    }

    #[test]
    fn bound_params_are_validated() {
        assert!(BoundParams::new(1.0, 1.0, 0.0, 0.0, 1.0).is_err());
        assert!(BoundParams::new(1.0, -0.1, 0.0, 0.0, 1.0).is_err());
        assert!(BoundParams::new(0.0, 0.5, 0.0, 0.0, 1.0).is_err());
        assert!(BoundParams::new(1.0, 0.5, -1e-9, 0.0, 1.0).is_err());
        assert!(BoundParams::new(1.0, 0.5, 0.0, f64::NAN, 1.0).is_err());
        assert!(BoundParams::new(1.0, 0.5, 0.0, 0.0, 1.0).is_ok());
    }

    #[test]
    fn err_metric_matches_reference_sample() {
        let z_star = [0.024295, 0.041524, 0.035592, 0.037762];
        let z_tilde = [0.024290, 0.041518, 0.035588, 0.037758];
        let err = err_metric(&z_tilde, &z_star).unwrap();
        assert!((err - 1.3652073318815228e-4).abs() < 1e-18);

        // A uniform shift of a unit-mean vector is the shift itself.
        let base = [1.5, 0.5, 1.0];
        let shifted: Vec<f64> = base.iter().map(|v| v + 0.01).collect();
        assert!((err_metric(&shifted, &base).unwrap() - 0.01).abs() < 1e-15);

        assert!(err_metric(&[1.0], &[1.0, 2.0]).is_err());
        assert!(err_metric(&[0.0], &[0.0]).is_err());
    }

    #[test]
    fn clean_trajectory_verifies_with_zero_residuals() {
        let sys = grid_system();
        let z0 = vec![1.0; sys.dim()];
        let snapshots: Vec<Vec<f64>> = (0..=40)
            .map(|k| encryption_friendly_iterate(&sys, &z0, k).unwrap())
            .collect();
        let report = verify_run(&sys, &z0, &snapshots, &sample_bounds(), 1.0).unwrap();
        assert_eq!(report.bound_violations, 0);
        assert_eq!(report.residual_violations, 0);
        for r in &report.residuals {
            assert_eq!(*r, 0.0);
        }
        assert!(report.errs[40] < report.errs[0]);
        assert!(report.deviations[40] <= report.bounds[40]);
        assert!((report.limsup_bound - report.params.limsup_bound()).abs() == 0.0);
    }

    #[test]
    fn corrupted_trajectory_is_flagged() {
        let sys = grid_system();
        let z0 = vec![1.0; sys.dim()];
        let mut snapshots: Vec<Vec<f64>> = (0..=10)
            .map(|k| encryption_friendly_iterate(&sys, &z0, k).unwrap())
            .collect();
        snapshots[5][0] += 1.0;
        let report = verify_run(&sys, &z0, &snapshots, &sample_bounds(), 1.0).unwrap();
        assert!(report.bound_violations >= 1);
        // Both the step into iterate 5 and the step out of it break the
        // envelope.
        assert_eq!(report.residual_violations, 2);
    }

    #[test]
    fn verify_run_validates_inputs() {
        let sys = grid_system();
        let z0 = vec![1.0; sys.dim()];
        assert!(matches!(
            verify_run(&sys, &z0, &[], &sample_bounds(), 1.0),
            Err(AnalysisError::EmptyTrajectory)
        ));
        assert!(matches!(
            verify_run(&sys, &z0, &[vec![1.0; 2]], &sample_bounds(), 1.0),
            Err(AnalysisError::BadIterate { .. })
        ));
        assert!(matches!(
            verify_run(&sys, &[1.0], &[vec![1.0; 3]], &sample_bounds(), 1.0),
            Err(AnalysisError::BadIterate { .. })
        ));
    }

    #[test]
    fn csv_layout_is_stable() {
        let sys = grid_system();
        let z0 = vec![1.0; sys.dim()];
        let snapshots: Vec<Vec<f64>> = (0..=2)
            .map(|k| encryption_friendly_iterate(&sys, &z0, k).unwrap())
            .collect();
        let report = verify_run(&sys, &z0, &snapshots, &sample_bounds(), 1.0).unwrap();
        let mut buf = Vec::new();
        write_csv(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "k,err,residual,bound");
        assert!(lines[1].starts_with("0,"));
        // Last row has an empty residual column.
        let fields: Vec<&str> = lines[3].split(',').collect();
        assert_eq!(fields.len(), 4);
        assert_eq!(fields[0], "2");
        assert!(fields[2].is_empty());
        // Interior rows carry the exact zero residual of a noiseless run.
        assert_eq!(lines[1].split(',').nth(2), Some("0"));
    }
}
