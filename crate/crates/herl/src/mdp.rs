//! Deterministic MDPs with a single absorbing goal state, and the grid-world
//! construction the benchmarks run on.
//!
//! State indices are dense. States `0..s` are the non-absorbing states and
//! index `s` (always the last one) is the absorbing goal. Downstream code
//! relies on that ordering: the desirability system is built over the first
//! `s` states only, with the absorbing state folded into the source term.

use std::collections::BTreeSet;

use thiserror::Error;

/// Number of grid-world moves: every `(dr, dc)` with `dr, dc` in `{-1, 0, 1}`.
pub const GRID_ACTIONS: usize = 9;

/// Tolerance on default-policy row sums. Rows must be stochastic to this
/// accuracy at construction time.
pub const POLICY_ROW_TOL: f64 = 1e-12;

/// Dense state index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateId(pub usize);

/// Dense action index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionId(pub usize);

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("state space must contain at least one non-absorbing state")]
    EmptyStateSpace,
    #[error("{table} table has {got} entries, expected {expected}")]
    BadTableShape {
        table: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("transition from state {state} under action {action} targets {target}, out of range")]
    TransitionOutOfRange {
        state: usize,
        action: usize,
        target: usize,
    },
    #[error("{table} entry at state {state}, action {action} is not finite")]
    NonFinite {
        table: &'static str,
        state: usize,
        action: usize,
    },
    #[error("default policy at state {state}, action {action} is negative")]
    NegativeProb { state: usize, action: usize },
    #[error("default policy row at state {state} sums to {sum}, not 1")]
    BadPolicyRow { state: usize, sum: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid worlds support exactly {GRID_ACTIONS} actions, got {got}")]
    UnsupportedActionCount { got: usize },
}

/// A finite deterministic MDP. The last state is absorbing by convention;
/// [`validate_assumptions`] checks whether the dynamics actually treat it
/// that way.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicMdp {
    num_states: usize,
    num_actions: usize,
    /// Row-major `num_states x num_actions` successor table.
    transition: Vec<StateId>,
    /// Row-major `num_states x num_actions` stage costs.
    cost: Vec<f64>,
    /// Row-major `num_states x num_actions` default action distribution.
    default_policy: Vec<f64>,
}

impl DeterministicMdp {
    /// Builds an MDP from dense tables. Enforces structural validity only:
    /// shapes, successor indices in range, finite costs, and stochastic
    /// default-policy rows (sum within [`POLICY_ROW_TOL`] of 1, no negative
    /// entries). Semantic assumptions live in [`validate_assumptions`].
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<StateId>,
        cost: Vec<f64>,
        default_policy: Vec<f64>,
    ) -> Result<Self, MdpError> {
        if num_states < 2 || num_actions == 0 {
            return Err(MdpError::EmptyStateSpace);
        }
        let expected = num_states * num_actions;
        for (table, len) in [
            ("transition", transition.len()),
            ("cost", cost.len()),
            ("default policy", default_policy.len()),
        ] {
            if len != expected {
                return Err(MdpError::BadTableShape {
                    table,
                    expected,
                    got: len,
                });
            }
        }
        for x in 0..num_states {
            for u in 0..num_actions {
                let idx = x * num_actions + u;
                let target = transition[idx].0;
                if target >= num_states {
                    return Err(MdpError::TransitionOutOfRange {
                        state: x,
                        action: u,
                        target,
                    });
                }
                if !cost[idx].is_finite() {
                    return Err(MdpError::NonFinite {
                        table: "cost",
                        state: x,
                        action: u,
                    });
                }
                let p = default_policy[idx];
                if !p.is_finite() {
                    return Err(MdpError::NonFinite {
                        table: "default policy",
                        state: x,
                        action: u,
                    });
                }
                if p < 0.0 {
                    return Err(MdpError::NegativeProb {
                        state: x,
                        action: u,
                    });
                }
            }
            let sum: f64 = default_policy[x * num_actions..(x + 1) * num_actions]
                .iter()
                .sum();
            if (sum - 1.0).abs() > POLICY_ROW_TOL {
                return Err(MdpError::BadPolicyRow { state: x, sum });
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            transition,
            cost,
            default_policy,
        })
    }

    /// Total number of states, absorbing state included.
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// Number of non-absorbing states, i.e. the dimension of the linear
    /// desirability system.
    pub fn num_interior(&self) -> usize {
        self.num_states - 1
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Index of the absorbing state (always the last one).
    pub fn absorbing(&self) -> StateId {
        StateId(self.num_states - 1)
    }

    pub fn next_state(&self, x: StateId, u: ActionId) -> StateId {
        self.transition[x.0 * self.num_actions + u.0]
    }

    pub fn cost(&self, x: StateId, u: ActionId) -> f64 {
        self.cost[x.0 * self.num_actions + u.0]
    }

    /// Default action probability `b(u | x)`.
    pub fn default_prob(&self, x: StateId, u: ActionId) -> f64 {
        self.default_policy[x.0 * self.num_actions + u.0]
    }

    pub fn interior_states(&self) -> impl Iterator<Item = StateId> {
        (0..self.num_states - 1).map(StateId)
    }

    pub fn actions(&self) -> impl Iterator<Item = ActionId> {
        (0..self.num_actions).map(ActionId)
    }
}

/// One semantic assumption check over an MDP.
#[derive(Debug, Clone)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of [`validate_assumptions`]. The desirability construction
/// refuses MDPs whose report is not all green.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Names of the failed checks, for error messages.
    pub fn failures(&self) -> Vec<&'static str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect()
    }
}

/// Checks the semantic assumptions the desirability transform needs:
/// the last state is truly absorbing and free, stage costs are strictly
/// positive elsewhere (on supported actions), default-policy rows are
/// stochastic, and the absorbing state is reachable from every state
/// through actions the default policy supports.
pub fn validate_assumptions(mdp: &DeterministicMdp) -> AssumptionReport {
    let mut checks = Vec::new();
    let abs = mdp.absorbing();

    let mut absorbing_ok = true;
    let mut absorbing_detail = String::from("all actions self-loop at zero cost");
    for u in mdp.actions() {
        if mdp.next_state(abs, u) != abs || mdp.cost(abs, u) != 0.0 {
            absorbing_ok = false;
            absorbing_detail = format!(
                "action {} leaves the absorbing state or has nonzero cost",
                u.0
            );
            break;
        }
    }
    checks.push(AssumptionCheck {
        name: "absorbing-self-loop",
        passed: absorbing_ok,
        detail: absorbing_detail,
    });

    let mut costs_ok = true;
    let mut costs_detail = String::from("all supported stage costs are positive");
    'cost: for x in mdp.interior_states() {
        for u in mdp.actions() {
            if mdp.default_prob(x, u) > 0.0 && mdp.cost(x, u) <= 0.0 {
                costs_ok = false;
                costs_detail = format!(
                    "cost at state {}, action {} is {}",
                    x.0,
                    u.0,
                    mdp.cost(x, u)
                );
                break 'cost;
            }
        }
    }
    checks.push(AssumptionCheck {
        name: "positive-costs",
        passed: costs_ok,
        detail: costs_detail,
    });

    let mut rows_ok = true;
    let mut rows_detail = String::from("all rows stochastic");
    for x in 0..mdp.num_states() {
        let sum: f64 = (0..mdp.num_actions())
            .map(|u| mdp.default_prob(StateId(x), ActionId(u)))
            .sum();
        if (sum - 1.0).abs() > POLICY_ROW_TOL {
            rows_ok = false;
            rows_detail = format!("row at state {x} sums to {sum}");
            break;
        }
    }
    checks.push(AssumptionCheck {
        name: "policy-rows-stochastic",
        passed: rows_ok,
        detail: rows_detail,
    });

    // Reverse reachability from the absorbing state over supported edges.
    let mut reaches = vec![false; mdp.num_states()];
    reaches[abs.0] = true;
    loop {
        let mut changed = false;
        for x in mdp.interior_states() {
            if reaches[x.0] {
                continue;
            }
            let found = mdp
                .actions()
                .any(|u| mdp.default_prob(x, u) > 0.0 && reaches[mdp.next_state(x, u).0]);
            if found {
                reaches[x.0] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let unreachable: Vec<usize> = (0..mdp.num_states() - 1)
        .filter(|&x| !reaches[x])
        .collect();
    checks.push(AssumptionCheck {
        name: "goal-reachable",
        passed: unreachable.is_empty(),
        detail: if unreachable.is_empty() {
            String::from("absorbing state reachable from every state")
        } else {
            format!("states {unreachable:?} cannot reach the absorbing state")
        },
    });

    AssumptionReport { checks }
}

/// Rectangular grid world with one goal cell and optional obstacle cells.
/// Cells are addressed `(row, col)`, row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWorldSpec {
    pub width: usize,
    pub height: usize,
    /// Goal cell `(row, col)`. Becomes the absorbing state.
    pub goal: (usize, usize),
    pub obstacles: BTreeSet<(usize, usize)>,
    /// Cost of every action at every non-goal cell.
    pub stage_cost: f64,
}

impl GridWorldSpec {
    pub fn new(width: usize, height: usize, goal: (usize, usize)) -> Self {
        Self {
            width,
            height,
            goal,
            obstacles: BTreeSet::new(),
            stage_cost: 0.5,
        }
    }

    pub fn with_obstacles<I: IntoIterator<Item = (usize, usize)>>(mut self, cells: I) -> Self {
        self.obstacles.extend(cells);
        self
    }

    pub fn with_stage_cost(mut self, cost: f64) -> Self {
        self.stage_cost = cost;
        self
    }
}

/// A grid world compiled to a [`DeterministicMdp`], keeping the map from
/// state index to grid cell. `cells[i]` is the cell of state `i` for
/// `i < s`, and `cells[s]` is the goal cell.
#[derive(Debug, Clone)]
pub struct GridWorld {
    pub spec: GridWorldSpec,
    pub mdp: DeterministicMdp,
    pub cells: Vec<(usize, usize)>,
}

impl GridWorld {
    /// Cell occupied by a state.
    pub fn cell_of(&self, x: StateId) -> (usize, usize) {
        self.cells[x.0]
    }

    /// The `(dr, dc)` move an action encodes.
    pub fn delta_of(u: ActionId) -> (isize, isize) {
        let dr = (u.0 / 3) as isize - 1;
        let dc = (u.0 % 3) as isize - 1;
        (dr, dc)
    }
}

/// Builds the benchmark grid world. Actions index the nine moves `(dr, dc)`
/// with `dr, dc` in `{-1, 0, 1}`, ordered so that `u = 3*(dr+1) + (dc+1)`
/// (action 4 is "stay"). Each axis clamps independently to the grid, then a
/// move into an obstacle reverts to the current cell. The default policy is
/// uniform over all nine actions and every action at a non-goal cell costs
/// `spec.stage_cost`.
///
/// States are the free non-goal cells in row-major order; the goal cell is
/// the absorbing state and comes last.
pub fn build_grid_world(spec: GridWorldSpec, num_actions: usize) -> Result<GridWorld, MdpError> {
    if num_actions != GRID_ACTIONS {
        return Err(MdpError::UnsupportedActionCount { got: num_actions });
    }
    if spec.width == 0 || spec.height == 0 {
        return Err(MdpError::InvalidGrid(String::from(
            "grid dimensions must be positive",
        )));
    }
    let (gr, gc) = spec.goal;
    if gr >= spec.height || gc >= spec.width {
        return Err(MdpError::InvalidGrid(format!(
            "goal ({gr}, {gc}) outside a {}x{} grid",
            spec.height, spec.width
        )));
    }
    if spec.obstacles.contains(&spec.goal) {
        return Err(MdpError::InvalidGrid(String::from(
            "goal cell is an obstacle",
        )));
    }
    for &(r, c) in &spec.obstacles {
        if r >= spec.height || c >= spec.width {
            return Err(MdpError::InvalidGrid(format!(
                "obstacle ({r}, {c}) outside a {}x{} grid",
                spec.height, spec.width
            )));
        }
    }
    if !(spec.stage_cost.is_finite() && spec.stage_cost > 0.0) {
        return Err(MdpError::InvalidGrid(format!(
            "stage cost must be positive and finite, got {}",
            spec.stage_cost
        )));
    }

    let mut cells = Vec::new();
    for r in 0..spec.height {
        for c in 0..spec.width {
            let cell = (r, c);
            if cell != spec.goal && !spec.obstacles.contains(&cell) {
                cells.push(cell);
            }
        }
    }
    if cells.is_empty() {
        return Err(MdpError::InvalidGrid(String::from(
            "grid has no free non-goal cell",
        )));
    }
    cells.push(spec.goal);

    let num_states = cells.len();
    let mut index_of = std::collections::HashMap::new();
    for (i, &cell) in cells.iter().enumerate() {
        index_of.insert(cell, i);
    }

    let clamp = |v: isize, hi: usize| -> usize { v.clamp(0, hi as isize - 1) as usize };
    let mut transition = Vec::with_capacity(num_states * GRID_ACTIONS);
    let mut cost = Vec::with_capacity(num_states * GRID_ACTIONS);
    for (i, &(r, c)) in cells.iter().enumerate() {
        let at_goal = i == num_states - 1;
        for u in 0..GRID_ACTIONS {
            if at_goal {
                transition.push(StateId(num_states - 1));
                cost.push(0.0);
                continue;
            }
            let (dr, dc) = GridWorld::delta_of(ActionId(u));
            let mut target = (
                clamp(r as isize + dr, spec.height),
                clamp(c as isize + dc, spec.width),
            );
            if spec.obstacles.contains(&target) {
                target = (r, c);
            }
            transition.push(StateId(index_of[&target]));
            cost.push(spec.stage_cost);
        }
    }
    let default_policy = vec![1.0 / GRID_ACTIONS as f64; num_states * GRID_ACTIONS];
    let mdp = DeterministicMdp::new(
        num_states,
        GRID_ACTIONS,
        transition,
        cost,
        default_policy,
    )?;
    Ok(GridWorld { spec, mdp, cells })
}
