//! Markov-game data model, validation, exact policy evaluation and the
//! Bellman-style construction of per-state game matrices.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability mass tolerance used by all distribution checks.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Dense row-major matrix. Used for per-state game matrices `Q^s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension("matrix must have at least one row and column".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Dimension("ragged matrix rows".into()));
        }
        Self::new(n_rows, n_cols, rows.concat())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    /// `Q y`, each entry accumulated over columns in ascending order from `0.0`.
    pub fn mul_vec(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.cols);
        (0..self.rows)
            .map(|a| {
                let mut acc = 0.0;
                for (q, yb) in self.row(a).iter().zip(y) {
                    acc += q * yb;
                }
                acc
            })
            .collect()
    }

    /// `Q^T x`, each entry accumulated over rows in ascending order from `0.0`.
    pub fn tmul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        (0..self.cols)
            .map(|b| {
                let mut acc = 0.0;
                for (a, xa) in x.iter().enumerate() {
                    acc += xa * self.get(a, b);
                }
                acc
            })
            .collect()
    }

    /// `x^T Q y` computed as `x · (Q y)`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.mul_vec(y))
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for a in 0..self.rows {
            for b in 0..self.cols {
                out.set(b, a, self.get(a, b));
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Max absolute entry, `‖Q‖ = max_{i,j} |Q_ij|`.
    pub fn max_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `‖self - other‖` in the max-entry norm.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        debug_assert_eq!(self.data.len(), other.data.len());
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Ascending-order dot product starting from `0.0`.
#[inline]
pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in u.iter().zip(v) {
        acc += a * b;
    }
    acc
}

pub fn is_distribution(v: &[f64]) -> bool {
    !v.is_empty()
        && v.iter().all(|p| p.is_finite() && *p >= 0.0)
        && (v.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
}

pub fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Per-state game matrices `Q^s`.
pub type QTable = Vec<Matrix>;

/// Per-state values `V^s`.
pub type ValueVector = Vec<f64>;

/// Per-state action distributions of one player.
pub type StatePolicy = Vec<Vec<f64>>;

/// `max_s ‖A^s - B^s‖`.
pub fn qtable_max_diff(a: &[Matrix], b: &[Matrix]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (qa, qb)| m.max(qa.max_abs_diff(qb)))
}

/// The two players. Player 1 picks rows and minimizes the loss; Player 2
/// picks columns and maximizes it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Player {
    One,
    Two,
}

impl Player {
    pub fn other(self) -> Player {
        match self {
            Player::One => Player::Two,
            Player::Two => Player::One,
        }
    }
}

/// A policy pair `(x^s, y^s)` for every state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPolicy {
    pub x: StatePolicy,
    pub y: StatePolicy,
}

impl JointPolicy {
    pub fn uniform(game: &MarkovGame) -> Self {
        Self {
            x: vec![uniform(game.n_actions_p1()); game.n_states()],
            y: vec![uniform(game.n_actions_p2()); game.n_states()],
        }
    }

    pub fn check(&self, game: &MarkovGame) -> Result<()> {
        check_state_policy(game, &self.x, Player::One)?;
        check_state_policy(game, &self.y, Player::Two)
    }
}

pub(crate) fn check_state_policy(game: &MarkovGame, policy: &[Vec<f64>], side: Player) -> Result<()> {
    let n_actions = match side {
        Player::One => game.n_actions_p1(),
        Player::Two => game.n_actions_p2(),
    };
    if policy.len() != game.n_states() {
        return Err(Error::Dimension(format!(
            "{side:?} policy covers {} states, game has {}",
            policy.len(),
            game.n_states()
        )));
    }
    for (s, dist) in policy.iter().enumerate() {
        if dist.len() != n_actions {
            return Err(Error::Dimension(format!(
                "{side:?} policy at state {s} has {} entries, expected {n_actions}",
                dist.len()
            )));
        }
        if !is_distribution(dist) {
            return Err(Error::InvalidArgument(format!("{side:?} policy at state {s} is not a distribution")));
        }
    }
    Ok(())
}

/// Finite two-player zero-sum discounted Markov game `(S, A, B, σ, p, γ)`.
///
/// Losses are stored as `loss[(s * |A| + a) * |B| + b]` and transitions as
/// `transition[((s * |A| + a) * |B| + b) * |S| + s']`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovGame {
    n_states: usize,
    n_actions_p1: usize,
    n_actions_p2: usize,
    loss: Vec<f64>,
    transition: Vec<f64>,
    gamma: f64,
}

impl MarkovGame {
    /// Checks shapes only; use [`validate_game`] for the model constraints.
    pub fn new(
        n_states: usize,
        n_actions_p1: usize,
        n_actions_p2: usize,
        loss: Vec<f64>,
        transition: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions_p1 == 0 || n_actions_p2 == 0 {
            return Err(Error::Dimension("state and action counts must be positive".into()));
        }
        let n_joint = n_states * n_actions_p1 * n_actions_p2;
        if loss.len() != n_joint {
            return Err(Error::Dimension(format!("loss tensor has {} entries, expected {n_joint}", loss.len())));
        }
        if transition.len() != n_joint * n_states {
            return Err(Error::Dimension(format!(
                "transition tensor has {} entries, expected {}",
                transition.len(),
                n_joint * n_states
            )));
        }
        Ok(Self { n_states, n_actions_p1, n_actions_p2, loss, transition, gamma })
    }

    /// Like [`MarkovGame::new`] but also rejects any model violation.
    pub fn new_validated(
        n_states: usize,
        n_actions_p1: usize,
        n_actions_p2: usize,
        loss: Vec<f64>,
        transition: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let game = Self::new(n_states, n_actions_p1, n_actions_p2, loss, transition, gamma)?;
        validate_game(&game).into_result()?;
        Ok(game)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions_p1(&self) -> usize {
        self.n_actions_p1
    }

    pub fn n_actions_p2(&self) -> usize {
        self.n_actions_p2
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn loss_tensor(&self) -> &[f64] {
        &self.loss
    }

    pub fn transition_tensor(&self) -> &[f64] {
        &self.transition
    }

    #[inline]
    fn joint_index(&self, s: usize, a: usize, b: usize) -> usize {
        (s * self.n_actions_p1 + a) * self.n_actions_p2 + b
    }

    #[inline]
    pub fn loss(&self, s: usize, a: usize, b: usize) -> f64 {
        self.loss[self.joint_index(s, a, b)]
    }

    /// `p(·|s,a,b)`.
    #[inline]
    pub fn transition_row(&self, s: usize, a: usize, b: usize) -> &[f64] {
        let start = self.joint_index(s, a, b) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    /// Stage-game loss matrix `σ(s,·,·)`.
    pub fn loss_matrix(&self, s: usize) -> Matrix {
        let start = self.joint_index(s, 0, 0);
        let len = self.n_actions_p1 * self.n_actions_p2;
        Matrix { rows: self.n_actions_p1, cols: self.n_actions_p2, data: self.loss[start..start + len].to_vec() }
    }

    pub fn value_upper_bound(&self) -> f64 {
        1.0 / (1.0 - self.gamma)
    }

    pub(crate) fn check_values(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.n_states {
            return Err(Error::Dimension(format!(
                "value vector has {} entries, game has {} states",
                values.len(),
                self.n_states
            )));
        }
        Ok(())
    }
}

/// One broken model constraint, naming the offending index.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    LossOutOfRange { s: usize, a: usize, b: usize, value: f64 },
    NegativeTransition { s: usize, a: usize, b: usize, next: usize, value: f64 },
    TransitionSum { s: usize, a: usize, b: usize, sum: f64 },
    GammaBelowHalf(f64),
    GammaNotBelowOne(f64),
    Shape { field: &'static str, expected: usize, found: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::LossOutOfRange { s, a, b, value } => {
                write!(f, "loss at (s={s}, a={a}, b={b}) is {value}, outside [0,1]")
            }
            Violation::NegativeTransition { s, a, b, next, value } => {
                write!(f, "transition p({next}|s={s}, a={a}, b={b}) is negative ({value})")
            }
            Violation::TransitionSum { s, a, b, sum } => {
                write!(f, "transition row at (s={s}, a={a}, b={b}) sums to {sum}, not 1")
            }
            Violation::GammaBelowHalf(g) => write!(f, "gamma below 1/2 ({g})"),
            Violation::GammaNotBelowOne(g) => write!(f, "gamma must be < 1 ({g})"),
            Violation::Shape { field, expected, found } => {
                write!(f, "`{field}` has {found} entries, expected {expected}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidGame(self.violations))
        }
    }

    /// Same as [`ValidationReport::into_result`], but tolerates a discount
    /// factor below one half.
    pub fn into_result_allowing_low_gamma(self) -> Result<()> {
        let violations: Vec<_> =
            self.violations.into_iter().filter(|v| !matches!(v, Violation::GammaBelowHalf(_))).collect();
        ValidationReport { violations }.into_result()
    }
}

pub fn validate_game(game: &MarkovGame) -> ValidationReport {
    let mut violations = Vec::new();
    let g = game.gamma;
    if !(g < 1.0) {
        violations.push(Violation::GammaNotBelowOne(g));
    }
    if !(g >= 0.5) {
        violations.push(Violation::GammaBelowHalf(g));
    }
    for s in 0..game.n_states {
        for a in 0..game.n_actions_p1 {
            for b in 0..game.n_actions_p2 {
                let value = game.loss(s, a, b);
                if !(0.0..=1.0).contains(&value) {
                    violations.push(Violation::LossOutOfRange { s, a, b, value });
                }
                let row = game.transition_row(s, a, b);
                for (next, &p) in row.iter().enumerate() {
                    if !(p >= 0.0) {
                        violations.push(Violation::NegativeTransition { s, a, b, next, value: p });
                    }
                }
                let sum: f64 = row.iter().sum();
                if !((sum - 1.0).abs() <= SIMPLEX_TOL) {
                    violations.push(Violation::TransitionSum { s, a, b, sum });
                }
            }
        }
    }
    ValidationReport { violations }
}

/// Solves `V = c + γ P V` for a Markov chain with per-state cost `c` and
/// row-stochastic kernel `P` by dense LU with partial pivoting.
pub(crate) fn solve_discounted_chain(cost: &[f64], kernel: &DMatrix<f64>, gamma: f64) -> Result<Vec<f64>> {
    let n = cost.len();
    let system = DMatrix::<f64>::identity(n, n) - kernel * gamma;
    let rhs = DVector::from_column_slice(cost);
    let lu = system.clone().lu();
    let mut v = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("policy evaluation system (I - γP) is singular".into()))?;
    // one round of iterative refinement
    let residual = &rhs - &system * &v;
    if let Some(correction) = lu.solve(&residual) {
        v += correction;
    }
    Ok(v.iter().copied().collect())
}

/// Stage cost and kernel of the Markov chain induced by a policy pair.
pub(crate) fn induced_chain(game: &MarkovGame, policy: &JointPolicy) -> (Vec<f64>, DMatrix<f64>) {
    let n = game.n_states;
    let mut cost = vec![0.0; n];
    let mut kernel = DMatrix::<f64>::zeros(n, n);
    for s in 0..n {
        for (a, &xa) in policy.x[s].iter().enumerate() {
            for (b, &yb) in policy.y[s].iter().enumerate() {
                let w = xa * yb;
                if w == 0.0 {
                    continue;
                }
                cost[s] += w * game.loss(s, a, b);
                for (next, &p) in game.transition_row(s, a, b).iter().enumerate() {
                    kernel[(s, next)] += w * p;
                }
            }
        }
    }
    (cost, kernel)
}

/// Exact value `V_{x,y}` of a policy pair: the unique solution of
/// `V = σ_{x,y} + γ P_{x,y} V`.
pub fn evaluate_policy_pair(game: &MarkovGame, policy: &JointPolicy) -> Result<ValueVector> {
    policy.check(game)?;
    let (cost, kernel) = induced_chain(game, policy);
    solve_discounted_chain(&cost, &kernel, game.gamma)
}

/// `Q^s(a,b) = σ(s,a,b) + γ Σ_{s'} p(s'|s,a,b) V^{s'}`.
pub fn q_from_v(game: &MarkovGame, values: &[f64]) -> QTable {
    debug_assert_eq!(values.len(), game.n_states);
    (0..game.n_states)
        .map(|s| {
            let mut q = Matrix::zeros(game.n_actions_p1, game.n_actions_p2);
            for a in 0..game.n_actions_p1 {
                for b in 0..game.n_actions_p2 {
                    let continuation = dot(game.transition_row(s, a, b), values);
                    q.set(a, b, game.loss(s, a, b) + game.gamma * continuation);
                }
            }
            q
        })
        .collect()
}

/// Optimal value and one deterministic optimal policy of the player
/// responding to a fixed opponent.
#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    pub value: ValueVector,
    /// One-hot per-state distributions of the responding player.
    pub policy: StatePolicy,
    /// `‖V - T V‖_∞` of the returned value under the optimal Bellman operator.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct BestResponseOptions {
    /// Value residual target, scaled by `1 - γ`.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for BestResponseOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iterations: 10_000 }
    }
}

/// Single-player MDP left after fixing one side of the game.
struct InducedMdp {
    n_states: usize,
    n_actions: usize,
    /// `cost[s * n_actions + c]`
    cost: Vec<f64>,
    /// `kernel[(s * n_actions + c) * n_states + s']`
    kernel: Vec<f64>,
    minimize: bool,
}

impl InducedMdp {
    fn new(game: &MarkovGame, fixed: &[Vec<f64>], fixed_side: Player) -> Self {
        let n = game.n_states;
        let n_actions = match fixed_side {
            Player::One => game.n_actions_p2,
            Player::Two => game.n_actions_p1,
        };
        let mut cost = vec![0.0; n * n_actions];
        let mut kernel = vec![0.0; n * n_actions * n];
        for s in 0..n {
            for c in 0..n_actions {
                let idx = s * n_actions + c;
                for (f, &w) in fixed[s].iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let (a, b) = match fixed_side {
                        Player::One => (f, c),
                        Player::Two => (c, f),
                    };
                    cost[idx] += w * game.loss(s, a, b);
                    for (next, &p) in game.transition_row(s, a, b).iter().enumerate() {
                        kernel[idx * n + next] += w * p;
                    }
                }
            }
        }
        Self { n_states: n, n_actions, cost, kernel, minimize: fixed_side == Player::Two }
    }

    fn q_value(&self, s: usize, c: usize, values: &[f64], gamma: f64) -> f64 {
        let idx = s * self.n_actions + c;
        let row = &self.kernel[idx * self.n_states..(idx + 1) * self.n_states];
        self.cost[idx] + gamma * dot(row, values)
    }

    fn better(&self, candidate: f64, incumbent: f64, margin: f64) -> bool {
        if self.minimize {
            candidate < incumbent - margin
        } else {
            candidate > incumbent + margin
        }
    }

    fn greedy(&self, s: usize, values: &[f64], gamma: f64) -> (usize, f64) {
        let mut best = (0, self.q_value(s, 0, values, gamma));
        for c in 1..self.n_actions {
            let q = self.q_value(s, c, values, gamma);
            if self.better(q, best.1, 0.0) {
                best = (c, q);
            }
        }
        best
    }

    fn evaluate(&self, actions: &[usize], gamma: f64) -> Result<Vec<f64>> {
        let n = self.n_states;
        let mut cost = vec![0.0; n];
        let mut kernel = DMatrix::<f64>::zeros(n, n);
        for (s, &c) in actions.iter().enumerate() {
            let idx = s * self.n_actions + c;
            cost[s] = self.cost[idx];
            for next in 0..n {
                kernel[(s, next)] = self.kernel[idx * n + next];
            }
        }
        solve_discounted_chain(&cost, &kernel, gamma)
    }
}

/// Best response of the free player against a fixed stationary policy of
/// `fixed_side`. If Player 2 is fixed, Player 1 minimizes; otherwise Player 2
/// maximizes.
///
/// Solved by policy iteration on the induced single-player MDP, so the
/// returned value is exact up to the linear solves.
pub fn best_response(
    game: &MarkovGame,
    fixed: &[Vec<f64>],
    fixed_side: Player,
    options: BestResponseOptions,
) -> Result<BestResponse> {
    check_state_policy(game, fixed, fixed_side)?;
    let gamma = game.gamma;
    let mdp = InducedMdp::new(game, fixed, fixed_side);
    let zeros = vec![0.0; game.n_states];
    let mut actions: Vec<usize> = (0..game.n_states).map(|s| mdp.greedy(s, &zeros, gamma).0).collect();
    let margin = 1e-13 * game.value_upper_bound();
    let mut values = mdp.evaluate(&actions, gamma)?;
    for _ in 0..options.max_iterations {
        let mut changed = false;
        for s in 0..game.n_states {
            let current = mdp.q_value(s, actions[s], &values, gamma);
            let (c, q) = mdp.greedy(s, &values, gamma);
            if mdp.better(q, current, margin) {
                actions[s] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        values = mdp.evaluate(&actions, gamma)?;
    }
    let residual = (0..game.n_states)
        .map(|s| (mdp.greedy(s, &values, gamma).1 - values[s]).abs())
        .fold(0.0, f64::max);
    if residual > options.tol * (1.0 - gamma) {
        return Err(Error::Singular(format!(
            "best response did not reach residual {:e} (got {residual:e})",
            options.tol * (1.0 - gamma)
        )));
    }
    let policy = actions
        .iter()
        .map(|&c| {
            let mut d = vec![0.0; mdp.n_actions];
            d[c] = 1.0;
            d
        })
        .collect();
    Ok(BestResponse { value: values, policy, residual })
}
