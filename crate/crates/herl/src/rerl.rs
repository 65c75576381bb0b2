//! Desirability transform for relative-entropy-regularized control.
//!
//! For a deterministic MDP with absorbing goal, default policy `b`, stage
//! costs `C` and temperature `lambda`, the optimal value function satisfies a
//! softmin recursion. Substituting `z(x) = exp(-V(x)/lambda)` makes it
//! linear: over the interior states,
//!
//! ```text
//! z = A z + w,   a_ij = sum over u with F(x_i,u) = x_j of b(u|x_i) exp(-C(x_i,u)/lambda)
//!                w_i  = the same sum over u with F(x_i,u) absorbing
//! ```
//!
//! with `z = 1` pinned at the goal. This module builds `(A, w)`, solves the
//! system directly and by fixed-point iteration, exposes a rotation-based
//! formulation of the iteration step that matches what the encrypted
//! evaluator computes, and maps desirability vectors back to values and
//! policies. Two independent oracles guard it: direct elimination and a
//! softmin value iteration that never leaves value space.

use serde::Serialize;
use thiserror::Error;

use crate::mdp::{validate_assumptions, ActionId, DeterministicMdp, StateId};

/// Maximum tolerated deviation of a reconstructed policy row sum from 1
/// before normalization. Larger deviations indicate the desirability vector
/// is too corrupted to induce a distribution.
pub const POLICY_CONSISTENCY_TOL: f64 = 1e-3;

/// Convergence tolerance used by callers that do not pick their own.
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum RerlError {
    #[error("MDP assumptions failed: {failures:?}")]
    AssumptionsFailed { failures: Vec<&'static str> },
    #[error("temperature must be positive and finite, got {0}")]
    BadLambda(f64),
    #[error("expected a vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("system matrix must be square with matching source term: {0}")]
    BadSystem(String),
    #[error("initial iterate must be strictly positive and finite (entry {index} is {value})")]
    BadInit { index: usize, value: f64 },
    #[error("tolerance must be positive and finite, got {0}")]
    BadTolerance(f64),
    #[error("iteration budget must be at least 1")]
    ZeroIterations,
    #[error("desirability entry {index} is {value}, must be strictly positive and finite")]
    BadDesirability { index: usize, value: f64 },
    #[error("linear system is singular at elimination step {step}")]
    Singular { step: usize },
    #[error(
        "policy row at state {state} sums to {row_sum}, further than {POLICY_CONSISTENCY_TOL} from 1"
    )]
    PolicyInconsistent { state: usize, row_sum: f64 },
    #[error("did not converge within {0} iterations")]
    NoConvergence(usize),
}

/// The interior linear system `z = A z + w` at a fixed temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    dim: usize,
    /// Row-major `dim x dim`, entries nonnegative.
    a: Vec<f64>,
    w: Vec<f64>,
    lambda: f64,
}

impl LinearSystem {
    /// Builds a system from raw parts. Entries must be finite and
    /// nonnegative; shapes must agree.
    pub fn from_parts(a: Vec<f64>, w: Vec<f64>, lambda: f64) -> Result<Self, RerlError> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(RerlError::BadLambda(lambda));
        }
        let dim = w.len();
        if dim == 0 {
            return Err(RerlError::BadSystem(String::from("empty system")));
        }
        if a.len() != dim * dim {
            return Err(RerlError::BadSystem(format!(
                "matrix has {} entries, expected {}",
                a.len(),
                dim * dim
            )));
        }
        for (k, &v) in a.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(RerlError::BadSystem(format!(
                    "matrix entry {k} is {v}, must be finite and nonnegative"
                )));
            }
        }
        for (k, &v) in w.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(RerlError::BadSystem(format!(
                    "source entry {k} is {v}, must be finite and nonnegative"
                )));
            }
        }
        Ok(Self { dim, a, w, lambda })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.a[i * self.dim..(i + 1) * self.dim]
    }

    pub fn source(&self) -> &[f64] {
        &self.w
    }

    /// Infinity norm of `A`, the contraction factor of the iteration map.
    pub fn max_row_sum(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.row(i).iter().sum::<f64>())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ContractivityReport {
    pub max_row_sum: f64,
    pub contractive: bool,
}

/// Checks `||A||_inf < 1`, the condition under which the fixed point is
/// unique and the iteration converges from any start.
pub fn contractivity_check(sys: &LinearSystem) -> ContractivityReport {
    let max_row_sum = sys.max_row_sum();
    ContractivityReport {
        max_row_sum,
        contractive: max_row_sum < 1.0,
    }
}

/// Builds the interior desirability system from an MDP. Refuses MDPs whose
/// semantic assumptions do not hold (see [`validate_assumptions`]).
pub fn build_linear_system(
    mdp: &DeterministicMdp,
    lambda: f64,
) -> Result<LinearSystem, RerlError> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(RerlError::BadLambda(lambda));
    }
    let report = validate_assumptions(mdp);
    if !report.all_passed() {
        return Err(RerlError::AssumptionsFailed {
            failures: report.failures(),
        });
    }
    let s = mdp.num_interior();
    let abs = mdp.absorbing();
    let mut a = vec![0.0; s * s];
    let mut w = vec![0.0; s];
    for x in mdp.interior_states() {
        for u in mdp.actions() {
            let weight = mdp.default_prob(x, u) * (-mdp.cost(x, u) / lambda).exp();
            let target = mdp.next_state(x, u);
            if target == abs {
                w[x.0] += weight;
            } else {
                a[x.0 * s + target.0] += weight;
            }
        }
    }
    LinearSystem::from_parts(a, w, lambda)
}

/// A strictly positive desirability vector over the interior states.
#[derive(Debug, Clone, PartialEq)]
pub struct Desirability(Vec<f64>);

impl Desirability {
    pub fn new(values: Vec<f64>) -> Result<Self, RerlError> {
        for (index, &value) in values.iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(RerlError::BadDesirability { index, value });
            }
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn check_iterate_inputs(
    sys: &LinearSystem,
    z0: &[f64],
) -> Result<(), RerlError> {
    if z0.len() != sys.dim() {
        return Err(RerlError::DimensionMismatch {
            expected: sys.dim(),
            got: z0.len(),
        });
    }
    for (index, &value) in z0.iter().enumerate() {
        if !(value.is_finite() && value > 0.0) {
            return Err(RerlError::BadInit { index, value });
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ViOutcome {
    pub z: Vec<f64>,
    /// Steps actually performed.
    pub iterations: usize,
    pub converged: bool,
}

/// Plain fixed-point iteration `z <- A z + w`, stopping once the infinity
/// norm of the step falls below `tol`. `iterations` counts performed steps;
/// `converged` is false if the budget ran out first.
pub fn value_iterate(
    sys: &LinearSystem,
    z0: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<ViOutcome, RerlError> {
    check_iterate_inputs(sys, z0)?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(RerlError::BadTolerance(tol));
    }
    if max_iter == 0 {
        return Err(RerlError::ZeroIterations);
    }
    let s = sys.dim();
    let mut z = z0.to_vec();
    for k in 1..=max_iter {
        let mut next = vec![0.0; s];
        for (i, slot) in next.iter_mut().enumerate() {
            let mut acc = sys.source()[i];
            for (j, &zj) in z.iter().enumerate() {
                acc += sys.entry(i, j) * zj;
            }
            *slot = acc;
        }
        let diff = next
            .iter()
            .zip(&z)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        z = next;
        if diff < tol {
            return Ok(ViOutcome {
                z,
                iterations: k,
                converged: true,
            });
        }
    }
    Ok(ViOutcome {
        z,
        iterations: max_iter,
        converged: false,
    })
}

/// Cyclic left rotation: `rot_vec(v, r)[j] = v[(j + r) % v.len()]`.
pub fn rot_vec(v: &[f64], r: usize) -> Vec<f64> {
    let n = v.len();
    if n == 0 {
        return Vec::new();
    }
    let r = r % n;
    (0..n).map(|j| v[(j + r) % n]).collect()
}

/// One iteration step in the exact shape the encrypted evaluator uses:
/// slotwise products, cyclic rotations and masked accumulation, no index
/// arithmetic. For each row `i`, the rotations of `row_i .* z` by
/// `0..dim-1` are summed slotwise (slot `i` of the sum is the inner
/// product), masked by the one-hot selector `e_i`, and accumulated onto `w`.
///
/// Floating-point additions happen in the same order as on ciphertexts, so a
/// noise-free encrypted run reproduces this function bit for bit.
pub fn encryption_friendly_step(sys: &LinearSystem, z: &[f64]) -> Vec<f64> {
    let s = sys.dim();
    assert_eq!(z.len(), s, "iterate length must match system dimension");
    let mut acc = sys.source().to_vec();
    for i in 0..s {
        let p: Vec<f64> = sys.row(i).iter().zip(z).map(|(a, b)| a * b).collect();
        let mut g = p.clone();
        for r in 1..s {
            for (gj, vj) in g.iter_mut().zip(rot_vec(&p, r)) {
                *gj += vj;
            }
        }
        for (j, slot) in acc.iter_mut().enumerate() {
            let masked = if j == i { g[j] } else { 0.0 };
            *slot += masked;
        }
    }
    acc
}

/// Runs [`encryption_friendly_step`] for exactly `t` steps (no early stop).
/// `t = 0` returns the initial iterate unchanged.
pub fn encryption_friendly_iterate(
    sys: &LinearSystem,
    z0: &[f64],
    t: usize,
) -> Result<Vec<f64>, RerlError> {
    check_iterate_inputs(sys, z0)?;
    let mut z = z0.to_vec();
    for _ in 0..t {
        z = encryption_friendly_step(sys, &z);
    }
    Ok(z)
}

/// Solves `(I - A) z = w` by Gaussian elimination with partial pivoting.
/// This is the direct oracle the iterative paths are checked against.
pub fn solve_direct(sys: &LinearSystem) -> Result<Desirability, RerlError> {
    let s = sys.dim();
    let mut m = vec![0.0; s * s];
    let mut rhs = sys.source().to_vec();
    for i in 0..s {
        for j in 0..s {
            m[i * s + j] = if i == j { 1.0 } else { 0.0 } - sys.entry(i, j);
        }
    }
    for col in 0..s {
        let pivot_row = (col..s)
            .max_by(|&r1, &r2| {
                m[r1 * s + col]
                    .abs()
                    .total_cmp(&m[r2 * s + col].abs())
            })
            .expect("non-empty pivot range");
        if m[pivot_row * s + col].abs() < f64::MIN_POSITIVE {
            return Err(RerlError::Singular { step: col });
        }
        if pivot_row != col {
            for j in 0..s {
                m.swap(col * s + j, pivot_row * s + j);
            }
            rhs.swap(col, pivot_row);
        }
        let pivot = m[col * s + col];
        for row in col + 1..s {
            let factor = m[row * s + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..s {
                m[row * s + j] -= factor * m[col * s + j];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut z = vec![0.0; s];
    for row in (0..s).rev() {
        let mut acc = rhs[row];
        for j in row + 1..s {
            acc -= m[row * s + j] * z[j];
        }
        z[row] = acc / m[row * s + row];
    }
    Desirability::new(z)
}

/// Maps desirability back to values: `V_i = -lambda ln z_i` over the
/// interior, with the absorbing state's 0 appended.
pub fn desirability_to_value(z: &Desirability, lambda: f64) -> Result<Vec<f64>, RerlError> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(RerlError::BadLambda(lambda));
    }
    let mut v: Vec<f64> = z.values().iter().map(|&zi| -lambda * zi.ln()).collect();
    v.push(0.0);
    Ok(v)
}

/// A stochastic policy over all states (absorbing included) with the greedy
/// action per state cached.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    num_actions: usize,
    rows: Vec<f64>,
    greedy: Vec<ActionId>,
}

impl Policy {
    pub fn num_states(&self) -> usize {
        self.rows.len() / self.num_actions
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn prob(&self, x: StateId, u: ActionId) -> f64 {
        self.rows[x.0 * self.num_actions + u.0]
    }

    pub fn row(&self, x: StateId) -> &[f64] {
        &self.rows[x.0 * self.num_actions..(x.0 + 1) * self.num_actions]
    }

    /// Highest-probability action, lowest index on exact ties.
    pub fn greedy(&self, x: StateId) -> ActionId {
        self.greedy[x.0]
    }
}

/// Reconstructs the optimal policy from an interior desirability vector:
/// `pi(u|x)` proportional to `b(u|x) exp(-C(x,u)/lambda) z(F(x,u))` with
/// `z = 1` at the absorbing state. Each row is checked to sum to 1 within
/// [`POLICY_CONSISTENCY_TOL`] (the transform guarantees this for an exact
/// fixed point) and then normalized exactly. The absorbing state keeps the
/// default policy.
pub fn reconstruct_policy(
    mdp: &DeterministicMdp,
    z: &Desirability,
    lambda: f64,
) -> Result<Policy, RerlError> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(RerlError::BadLambda(lambda));
    }
    if z.len() != mdp.num_interior() {
        return Err(RerlError::DimensionMismatch {
            expected: mdp.num_interior(),
            got: z.len(),
        });
    }
    let abs = mdp.absorbing();
    let z_of = |x: StateId| -> f64 {
        if x == abs {
            1.0
        } else {
            z.values()[x.0]
        }
    };
    let ua = mdp.num_actions();
    let mut rows = vec![0.0; mdp.num_states() * ua];
    for x in mdp.interior_states() {
        let mut row_sum = 0.0;
        for u in mdp.actions() {
            let weight = mdp.default_prob(x, u)
                * (-mdp.cost(x, u) / lambda).exp()
                * z_of(mdp.next_state(x, u))
                / z_of(x);
            rows[x.0 * ua + u.0] = weight;
            row_sum += weight;
        }
        if (row_sum - 1.0).abs() > POLICY_CONSISTENCY_TOL {
            return Err(RerlError::PolicyInconsistent {
                state: x.0,
                row_sum,
            });
        }
        for u in 0..ua {
            rows[x.0 * ua + u] /= row_sum;
        }
    }
    for u in mdp.actions() {
        rows[abs.0 * ua + u.0] = mdp.default_prob(abs, u);
    }
    let greedy = (0..mdp.num_states())
        .map(|x| {
            let row = &rows[x * ua..(x + 1) * ua];
            let mut best = 0;
            for (u, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = u;
                }
            }
            ActionId(best)
        })
        .collect();
    Ok(Policy {
        num_actions: ua,
        rows,
        greedy,
    })
}

/// A value function over all states; the absorbing entry is last and 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction(Vec<f64>);

impl ValueFunction {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Softmin value iteration in value space, the oracle the desirability path
/// is checked against. It never forms the linear system: each sweep applies
/// `V(x) <- -lambda ln sum_u b(u|x) exp(-(C(x,u) + V(F(x,u)))/lambda)` with
/// the running maximum factored out of the exponentials for stability.
pub fn bellman_fixed_point_oracle(
    mdp: &DeterministicMdp,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<ValueFunction, RerlError> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(RerlError::BadLambda(lambda));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(RerlError::BadTolerance(tol));
    }
    let report = validate_assumptions(mdp);
    if !report.all_passed() {
        return Err(RerlError::AssumptionsFailed {
            failures: report.failures(),
        });
    }
    let n = mdp.num_states();
    let mut v = vec![0.0; n];
    for _ in 0..max_iter {
        let mut next = vec![0.0; n];
        for x in mdp.interior_states() {
            let exponents: Vec<(f64, f64)> = mdp
                .actions()
                .filter(|&u| mdp.default_prob(x, u) > 0.0)
                .map(|u| {
                    let e = -(mdp.cost(x, u) + v[mdp.next_state(x, u).0]) / lambda;
                    (mdp.default_prob(x, u), e)
                })
                .collect();
            let peak = exponents
                .iter()
                .map(|&(_, e)| e)
                .fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = exponents
                .iter()
                .map(|&(b, e)| b * (e - peak).exp())
                .sum();
            next[x.0] = -lambda * (peak + total.ln());
        }
        let diff = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if diff < tol {
            return Ok(ValueFunction(v));
        }
    }
    Err(RerlError::NoConvergence(max_iter))
}

#[derive(Debug, Clone)]
pub struct MinViOutcome {
    pub values: ValueFunction,
    pub converged: bool,
}

/// Ordinary shortest-path value iteration, `V(x) <- min_u C(x,u) + V(F(x,u))`
/// with the absorbing state pinned at 0. Used as the hard-minimum reference
/// the low-temperature policy must agree with. Stops when a sweep changes no
/// value by more than `tol` (0 is allowed: values stabilize exactly).
pub fn standard_min_vi(
    mdp: &DeterministicMdp,
    tol: f64,
    max_iter: usize,
) -> Result<MinViOutcome, RerlError> {
    if !tol.is_finite() || tol < 0.0 {
        return Err(RerlError::BadTolerance(tol));
    }
    let n = mdp.num_states();
    let mut v = vec![0.0; n];
    for _ in 0..max_iter {
        let mut next = vec![0.0; n];
        for x in mdp.interior_states() {
            next[x.0] = mdp
                .actions()
                .map(|u| mdp.cost(x, u) + v[mdp.next_state(x, u).0])
                .fold(f64::INFINITY, f64::min);
        }
        let diff = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if diff <= tol {
            return Ok(MinViOutcome {
                values: ValueFunction(v),
                converged: true,
            });
        }
    }
    Ok(MinViOutcome {
        values: ValueFunction(v),
        converged: false,
    })
}

/// All actions within `tie_tol` of the best one-step lookahead under a
/// min-VI value function.
pub fn min_vi_minimizers(
    mdp: &DeterministicMdp,
    vf: &ValueFunction,
    x: StateId,
    tie_tol: f64,
) -> Vec<ActionId> {
    let q: Vec<f64> = mdp
        .actions()
        .map(|u| mdp.cost(x, u) + vf.values()[mdp.next_state(x, u).0])
        .collect();
    let best = q.iter().copied().fold(f64::INFINITY, f64::min);
    mdp.actions()
        .filter(|u| q[u.0] <= best + tie_tol)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{build_grid_world, GridWorldSpec, GRID_ACTIONS};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Per-action weight on the benchmark grids: exp(-0.05)/9.
    const Q: f64 = 0.951229424500714 / 9.0;

    fn square_2x2() -> LinearSystem {
        let gw = build_grid_world(GridWorldSpec::new(2, 2, (0, 0)), GRID_ACTIONS).unwrap();
        build_linear_system(&gw.mdp, 10.0).unwrap()
    }

    #[test]
    fn grid_rows_match_hand_count() {
        let sys = square_2x2();
        assert_eq!(sys.dim(), 3);
        let expected_a = [
            [4.0 * Q, Q, 2.0 * Q],
            [Q, 4.0 * Q, 2.0 * Q],
            [2.0 * Q, 2.0 * Q, 4.0 * Q],
        ];
        let expected_w = [2.0 * Q, 2.0 * Q, Q];
        for (i, row) in expected_a.iter().enumerate() {
            for (j, want) in row.iter().enumerate() {
                assert_relative_eq!(sys.entry(i, j), *want, max_relative = 1e-12);
            }
            assert_relative_eq!(sys.source()[i], expected_w[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn row_mass_is_action_weight_total() {
        // Weights are a partition of sum_u b exp(-C/lambda), so each row of A
        // plus its source entry reproduces that total.
        for (w, h, goal) in [(2, 1, (0, 1)), (2, 2, (0, 0)), (4, 4, (0, 0))] {
            let gw = build_grid_world(GridWorldSpec::new(w, h, goal), GRID_ACTIONS).unwrap();
            let sys = build_linear_system(&gw.mdp, 10.0).unwrap();
            for i in 0..sys.dim() {
                let total: f64 = sys.row(i).iter().sum::<f64>() + sys.source()[i];
                assert_relative_eq!(total, 9.0 * Q, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn direct_solve_matches_frozen_values() {
        let sys = square_2x2();
        let z = solve_direct(&sys).unwrap();
        let expected = [0.789623005, 0.789623005, 0.761427778];
        for (got, want) in z.values().iter().zip(expected) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn direct_solve_scalar_example() {
        let sys = LinearSystem::from_parts(vec![0.5], vec![0.25], 1.0).unwrap();
        let z = solve_direct(&sys).unwrap();
        assert_eq!(z.values(), &[0.5]);
    }

    #[test]
    fn one_step_from_ones() {
        let sys = LinearSystem::from_parts(
            vec![0.2, 0.3, 0.1, 0.4],
            vec![0.1, 0.2],
            1.0,
        )
        .unwrap();
        let out = value_iterate(&sys, &[1.0, 1.0], 1, 1e-10).unwrap();
        assert_relative_eq!(out.z[0], 0.6, max_relative = 1e-12);
        assert_relative_eq!(out.z[1], 0.7, max_relative = 1e-12);
        assert_eq!(out.iterations, 1);
        assert!(!out.converged);
    }

    #[test]
    fn iteration_agrees_with_direct_solve() {
        let sys = square_2x2();
        let z_direct = solve_direct(&sys).unwrap();
        let out = value_iterate(&sys, &[1.0, 1.0, 1.0], 5000, 1e-13).unwrap();
        assert!(out.converged);
        for (a, b) in out.z.iter().zip(z_direct.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn contraction_rate_sets_iteration_count() {
        // With uniform b and constant cost the step-difference sequence
        // decays at exactly ||A||_inf per sweep, so the count to reach 1e-10
        // from an all-ones start is pinned by the grid geometry.
        let sys = square_2x2();
        let out = value_iterate(&sys, &[1.0; 3], 5000, 1e-10).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 82);
    }

    #[test]
    fn zero_matrix_converges_in_two_steps() {
        let sys =
            LinearSystem::from_parts(vec![0.0, 0.0, 0.0, 0.0], vec![0.3, 0.4], 1.0).unwrap();
        let out = value_iterate(&sys, &[1.0, 1.0], 10, 1e-10).unwrap();
        assert!(out.converged);
        assert_eq!(out.z, vec![0.3, 0.4]);
        assert!(out.iterations <= 2);
    }

    #[test]
    fn rotation_is_cyclic_left() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(rot_vec(&v, 2), vec![3.0, 4.0, 5.0, 1.0, 2.0]);
        assert_eq!(rot_vec(&v, 0), v.to_vec());
        assert_eq!(rot_vec(&v, 5), v.to_vec());
        assert_eq!(rot_vec(&v, 7), rot_vec(&v, 2));
    }

    #[test]
    fn rotation_form_matches_matrix_form() {
        let sys = square_2x2();
        let t = 30;
        let friendly = encryption_friendly_iterate(&sys, &[1.0; 3], t).unwrap();
        let mut z = vec![1.0; 3];
        for _ in 0..t {
            let out = value_iterate(&sys, &z, 1, 1e-300);
            z = match out {
                Ok(o) => o.z,
                Err(e) => panic!("{e}"),
            };
        }
        for (a, b) in friendly.iter().zip(&z) {
            assert!((a - b).abs() <= 1e-12 * t as f64);
        }
    }

    #[test]
    fn zero_step_iterate_is_identity() {
        let sys = square_2x2();
        let z0 = [0.3, 0.4, 0.5];
        assert_eq!(
            encryption_friendly_iterate(&sys, &z0, 0).unwrap(),
            z0.to_vec()
        );
    }

    #[test]
    fn value_transform_is_consistent() {
        let z = Desirability::new(vec![0.951229]).unwrap();
        let v = desirability_to_value(&z, 10.0).unwrap();
        assert_eq!(v.len(), 2);
        assert!((v[0] - 0.5).abs() < 1e-5);
        assert_eq!(v[1], 0.0);
        assert!(matches!(
            desirability_to_value(&z, 0.0),
            Err(RerlError::BadLambda(_))
        ));
    }

    #[test]
    fn softmin_oracle_agrees_with_transform() {
        for (w, h, goal, lambda) in [
            (2usize, 2usize, (0usize, 0usize), 10.0),
            (2, 2, (0, 0), 0.5),
            (3, 3, (1, 1), 10.0),
        ] {
            let gw = build_grid_world(GridWorldSpec::new(w, h, goal), GRID_ACTIONS).unwrap();
            let sys = build_linear_system(&gw.mdp, lambda).unwrap();
            let z = solve_direct(&sys).unwrap();
            let v = desirability_to_value(&z, lambda).unwrap();
            let oracle = bellman_fixed_point_oracle(&gw.mdp, lambda, 1e-13, 20_000).unwrap();
            for (a, b) in v.iter().zip(oracle.values()) {
                assert!((a - b).abs() < 1e-7, "{a} vs {b} at lambda {lambda}");
            }
        }
    }

    #[test]
    fn policy_rows_are_distributions() {
        let gw = build_grid_world(GridWorldSpec::new(2, 2, (0, 0)), GRID_ACTIONS).unwrap();
        let sys = build_linear_system(&gw.mdp, 10.0).unwrap();
        let z = solve_direct(&sys).unwrap();
        let policy = reconstruct_policy(&gw.mdp, &z, 10.0).unwrap();
        for x in 0..policy.num_states() {
            let sum: f64 = policy.row(StateId(x)).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        // From (1, 1) the diagonal move straight to the goal dominates.
        assert_eq!(policy.greedy(StateId(2)), ActionId(0));
    }

    #[test]
    fn corrupted_desirability_is_rejected() {
        let gw = build_grid_world(GridWorldSpec::new(2, 2, (0, 0)), GRID_ACTIONS).unwrap();
        let bad = Desirability::new(vec![0.1, 0.1, 0.9]).unwrap();
        assert!(matches!(
            reconstruct_policy(&gw.mdp, &bad, 10.0),
            Err(RerlError::PolicyInconsistent { .. })
        ));
    }

    #[test]
    fn min_vi_finds_shortest_paths() {
        let gw = build_grid_world(GridWorldSpec::new(3, 3, (1, 1)), GRID_ACTIONS).unwrap();
        let out = standard_min_vi(&gw.mdp, 0.0, 100).unwrap();
        assert!(out.converged);
        // Every free cell of the 3x3 ring is one diagonal-aware step away.
        for x in gw.mdp.interior_states() {
            assert_eq!(out.values.values()[x.0], 0.5);
            let mins = min_vi_minimizers(&gw.mdp, &out.values, x, 1e-12);
            assert_eq!(mins.len(), 1, "state {}", x.0);
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let sys = square_2x2();
        assert!(matches!(
            value_iterate(&sys, &[1.0, 1.0], 10, 1e-10),
            Err(RerlError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            value_iterate(&sys, &[1.0, -1.0, 1.0], 10, 1e-10),
            Err(RerlError::BadInit { .. })
        ));
        assert!(matches!(
            value_iterate(&sys, &[1.0; 3], 0, 1e-10),
            Err(RerlError::ZeroIterations)
        ));
        assert!(matches!(
            value_iterate(&sys, &[1.0; 3], 10, 0.0),
            Err(RerlError::BadTolerance(_))
        ));
        assert!(matches!(
            LinearSystem::from_parts(vec![0.5], vec![0.25], -1.0),
            Err(RerlError::BadLambda(_))
        ));
        assert!(matches!(
            LinearSystem::from_parts(vec![-0.5], vec![0.25], 1.0),
            Err(RerlError::BadSystem(_))
        ));
        let gw = build_grid_world(
            GridWorldSpec::new(3, 3, (0, 0)).with_obstacles([(0, 1), (1, 0), (1, 1)]),
            GRID_ACTIONS,
        )
        .unwrap();
        assert!(matches!(
            build_linear_system(&gw.mdp, 10.0),
            Err(RerlError::AssumptionsFailed { .. })
        ));
    }

    fn contractive_system() -> impl Strategy<Value = LinearSystem> {
        (1usize..6).prop_flat_map(|s| {
            (
                proptest::collection::vec(0.0..1.0f64, s * s),
                proptest::collection::vec(0.01..1.0f64, s),
            )
                .prop_map(move |(raw, w)| {
                    // Scale each row so row sum + source stays below 1.
                    let mut a = raw;
                    for i in 0..s {
                        let row_sum: f64 = a[i * s..(i + 1) * s].iter().sum();
                        let scale = 0.9 / row_sum.max(1.0);
                        for v in &mut a[i * s..(i + 1) * s] {
                            *v *= scale;
                        }
                    }
                    LinearSystem::from_parts(a, w, 1.0).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn direct_and_iterative_solutions_agree(sys in contractive_system()) {
            let z_direct = solve_direct(&sys).unwrap();
            let out = value_iterate(&sys, &vec![1.0; sys.dim()], 20_000, 1e-13).unwrap();
            prop_assert!(out.converged);
            for (a, b) in out.z.iter().zip(z_direct.values()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn rotation_form_tracks_matrix_form(sys in contractive_system(), t in 0usize..15) {
            let z0 = vec![1.0; sys.dim()];
            let friendly = encryption_friendly_iterate(&sys, &z0, t).unwrap();
            let mut z = z0;
            for _ in 0..t {
                let mut next = vec![0.0; sys.dim()];
                for (i, slot) in next.iter_mut().enumerate() {
                    *slot = sys.source()[i]
                        + sys.row(i).iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
                }
                z = next;
            }
            for (a, b) in friendly.iter().zip(&z) {
                prop_assert!((a - b).abs() <= 1e-12 * (t.max(1) as f64));
            }
        }
    }
}
