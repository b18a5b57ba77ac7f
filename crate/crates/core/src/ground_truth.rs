//! Ground-truth solvers: Shapley value iteration for `V⋆`/`Q⋆`, duality
//! gaps, and distances to the per-state optimal strategy sets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{
    best_response, q_from_v, BestResponseOptions, JointPolicy, MarkovGame, Matrix, Player, QTable, ValueVector,
};
use crate::matrix_game::{duality_gap, solve_matrix_game, MatrixGameSolution};
use crate::projection::{project_simplex_polytope, DykstraOptions, HalfSpace};
use crate::sampling::sample_simplex;

#[derive(Debug, Clone, Copy)]
pub struct ShapleyOptions {
    /// Target bound on `‖V_K − V⋆‖_∞`.
    pub tol: f64,
    pub max_iterations: usize,
}

impl ShapleyOptions {
    pub fn new(tol: f64) -> Self {
        Self { tol, ..Default::default() }
    }

    /// Residual `‖V_{k+1} − V_k‖_∞` at which iteration stops.
    ///
    /// `tol (1−γ)²/(2γ²)` bounds the value error by `tol (1−γ)/(2γ)`, which in
    /// turn keeps the exploitability of the greedy witnesses below `2 tol`.
    pub fn stopping_residual(&self, gamma: f64) -> f64 {
        self.tol * (1.0 - gamma).powi(2) / (2.0 * gamma * gamma)
    }
}

impl Default for ShapleyOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iterations: 1_000_000 }
    }
}

/// `V⋆`, `Q⋆ = q_from_v(V⋆)` and one minimax pair per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub v_star: ValueVector,
    pub q_star: QTable,
    pub witnesses: Vec<MatrixGameSolution>,
    pub tol: f64,
    pub iterations: usize,
    /// `‖V_{k+1} − V_k‖_∞` for every iteration.
    pub residuals: Vec<f64>,
}

impl GroundTruth {
    pub fn witness_policy(&self) -> JointPolicy {
        JointPolicy {
            x: self.witnesses.iter().map(|w| w.x_star.clone()).collect(),
            y: self.witnesses.iter().map(|w| w.y_star.clone()).collect(),
        }
    }

    pub fn n_states(&self) -> usize {
        self.v_star.len()
    }
}

fn lp_tol(tol: f64) -> f64 {
    (tol * 1e-2).max(1e-11)
}

/// Shapley value iteration `V_{k+1}^s = val(q_from_v(V_k)^s)` from `V_0 = 0`.
pub fn shapley_solve(game: &MarkovGame, options: ShapleyOptions) -> Result<GroundTruth> {
    let gamma = game.gamma();
    let stop = options.stopping_residual(gamma);
    let lp_tol = lp_tol(options.tol);
    let mut values = vec![0.0; game.n_states()];
    let mut residuals = Vec::new();
    let mut residual = f64::INFINITY;
    for k in 1..=options.max_iterations {
        let q = q_from_v(game, &values);
        let next = q.iter().map(|m| solve_matrix_game(m, lp_tol).map(|s| s.value)).collect::<Result<Vec<_>>>()?;
        residual = next.iter().zip(&values).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        residuals.push(residual);
        values = next;
        if residual <= stop {
            let q_star = q_from_v(game, &values);
            let witnesses = q_star.iter().map(|m| solve_matrix_game(m, lp_tol)).collect::<Result<Vec<_>>>()?;
            return Ok(GroundTruth { v_star: values, q_star, witnesses, tol: options.tol, iterations: k, residuals });
        }
    }
    Err(Error::IterationCap { iterations: options.max_iterations, residual })
}

/// Per-state duality gap of `(x, y)` in the matrix game `Q⋆^s`.
pub fn duality_gap_state(q_star_s: &Matrix, x: &[f64], y: &[f64]) -> f64 {
    duality_gap(q_star_s, x, y)
}

/// Per-state game duality gap `V^s_{x, br(x)} − V^s_{br(y), y}`.
pub fn game_duality_gap_per_state(game: &MarkovGame, policy: &JointPolicy) -> Result<Vec<f64>> {
    policy.check(game)?;
    let opts = BestResponseOptions::default();
    let vs_x = best_response(game, &policy.x, Player::One, opts)?;
    let vs_y = best_response(game, &policy.y, Player::Two, opts)?;
    Ok(vs_x.value.iter().zip(&vs_y.value).map(|(hi, lo)| hi - lo).collect())
}

/// `max_s (max_{y'} V^s_{x,y'} − min_{x'} V^s_{x',y})`.
pub fn game_duality_gap(game: &MarkovGame, policy: &JointPolicy) -> Result<f64> {
    Ok(game_duality_gap_per_state(game, policy)?.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Squared distances of a policy pair to the optimal strategy sets.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSetDistance {
    /// `dist⋆²(x^s) + dist⋆²(y^s)` per state.
    pub per_state: Vec<f64>,
    /// `(1/|S|) Σ_s dist⋆²(z^s)`.
    pub mean: f64,
    pub projected: JointPolicy,
    pub max_kkt_residual: f64,
}

/// Half-spaces describing `X⋆^s = {x : Q⋆^{s⊤} x <= V⋆^s + slack}`.
pub fn row_player_optimal_set(q: &Matrix, value: f64, slack: f64) -> Vec<HalfSpace> {
    (0..q.cols())
        .map(|b| HalfSpace { normal: (0..q.rows()).map(|a| q.get(a, b)).collect(), offset: value + slack })
        .collect()
}

/// Half-spaces describing `Y⋆^s = {y : Q⋆^s y >= V⋆^s − slack}`.
pub fn column_player_optimal_set(q: &Matrix, value: f64, slack: f64) -> Vec<HalfSpace> {
    (0..q.rows())
        .map(|a| HalfSpace { normal: q.row(a).iter().map(|v| -v).collect(), offset: -(value - slack) })
        .collect()
}

/// Squared Euclidean distance of each per-state pair to `X⋆^s × Y⋆^s`,
/// with both sets relaxed by the ground-truth tolerance.
pub fn dist_to_optimal_sets(truth: &GroundTruth, policy: &JointPolicy) -> Result<OptimalSetDistance> {
    dist_to_optimal_sets_with(truth, policy, DykstraOptions::default())
}

pub fn dist_to_optimal_sets_with(
    truth: &GroundTruth,
    policy: &JointPolicy,
    options: DykstraOptions,
) -> Result<OptimalSetDistance> {
    let n = truth.n_states();
    if policy.x.len() != n || policy.y.len() != n {
        return Err(Error::Dimension("policy and ground truth disagree on the state count".into()));
    }
    let mut per_state = Vec::with_capacity(n);
    let mut projected = JointPolicy { x: Vec::with_capacity(n), y: Vec::with_capacity(n) };
    let mut max_kkt = 0.0_f64;
    for s in 0..n {
        let q = &truth.q_star[s];
        let v = truth.v_star[s];
        let px = project_simplex_polytope(&policy.x[s], &row_player_optimal_set(q, v, truth.tol), options)?;
        let py = project_simplex_polytope(&policy.y[s], &column_player_optimal_set(q, v, truth.tol), options)?;
        per_state.push(squared_distance(&policy.x[s], &px.point) + squared_distance(&policy.y[s], &py.point));
        max_kkt = max_kkt.max(px.kkt_residual).max(py.kkt_residual);
        projected.x.push(px.point);
        projected.y.push(py.point);
    }
    let mean = per_state.iter().sum::<f64>() / n as f64;
    Ok(OptimalSetDistance { per_state, mean, projected, max_kkt_residual: max_kkt })
}

pub(crate) fn squared_distance(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Samples below this distance are treated as already optimal.
pub const MARGIN_MIN_DISTANCE: f64 = 1e-6;

/// Empirical estimate of the margin constant `C` in
/// `Δ(z^s) >= C dist⋆(z^s)`: the minimum ratio over uniformly sampled policy
/// pairs. Being a sample minimum it can only overestimate the true constant.
pub fn margin_constant_estimate(truth: &GroundTruth, n_samples: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let options = DykstraOptions::default();
    let mut best = f64::INFINITY;
    for _ in 0..n_samples {
        for (s, q) in truth.q_star.iter().enumerate() {
            let x = sample_simplex(&mut rng, q.rows());
            let y = sample_simplex(&mut rng, q.cols());
            let v = truth.v_star[s];
            let px = project_simplex_polytope(&x, &row_player_optimal_set(q, v, truth.tol), options)?;
            let py = project_simplex_polytope(&y, &column_player_optimal_set(q, v, truth.tol), options)?;
            let dist = (squared_distance(&x, &px.point) + squared_distance(&y, &py.point)).sqrt();
            if dist < MARGIN_MIN_DISTANCE {
                continue;
            }
            best = best.min(duality_gap(q, &x, &y) / dist);
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::FullyOptimal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_state(loss: Vec<f64>, n_a: usize, n_b: usize, gamma: f64) -> MarkovGame {
        MarkovGame::new(1, n_a, n_b, loss, vec![1.0; n_a * n_b], gamma).unwrap()
    }

    #[test]
    fn constant_game_value() {
        let game = one_state(vec![0.4], 1, 1, 0.5);
        let gt = shapley_solve(&game, ShapleyOptions::new(1e-10)).unwrap();
        assert!((gt.v_star[0] - 0.8).abs() <= 1e-10);
    }

    #[test]
    fn matching_pennies_value() {
        let game = one_state(vec![1.0, 0.0, 0.0, 1.0], 2, 2, 0.9);
        let gt = shapley_solve(&game, ShapleyOptions::new(1e-9)).unwrap();
        assert!((gt.v_star[0] - 5.0).abs() <= 1e-9);
        assert!((gt.witnesses[0].x_star[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let game = one_state(vec![1.0, 0.0, 0.0, 1.0], 2, 2, 0.9);
        let err = shapley_solve(&game, ShapleyOptions { tol: 1e-12, max_iterations: 3 }).unwrap_err();
        match err {
            Error::IterationCap { iterations, residual } => {
                assert_eq!(iterations, 3);
                assert!(residual > 0.0);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn single_action_game_has_zero_gap_and_no_margin() {
        let game = MarkovGame::new(2, 1, 1, vec![0.3, 0.6], vec![0.5, 0.5, 0.1, 0.9], 0.9).unwrap();
        let policy = JointPolicy::uniform(&game);
        assert_eq!(game_duality_gap(&game, &policy).unwrap(), 0.0);
        let gt = shapley_solve(&game, ShapleyOptions::default()).unwrap();
        assert!(matches!(margin_constant_estimate(&gt, 100, 1), Err(Error::FullyOptimal)));
    }

    #[test]
    fn matching_pennies_distance() {
        let game = one_state(vec![1.0, 0.0, 0.0, 1.0], 2, 2, 0.9);
        let gt = shapley_solve(&game, ShapleyOptions::default()).unwrap();
        let policy = JointPolicy { x: vec![vec![1.0, 0.0]], y: vec![vec![1.0, 0.0]] };
        let d = dist_to_optimal_sets(&gt, &policy).unwrap();
        // The relaxed set is a segment of half-width ~tol around (0.5, 0.5).
        assert!((d.per_state[0] - 1.0).abs() < 1e-6, "{}", d.per_state[0]);
        let w = dist_to_optimal_sets(&gt, &gt.witness_policy()).unwrap();
        assert!(w.mean < 1e-6);
    }

    #[test]
    fn matching_pennies_margin_is_positive() {
        let game = one_state(vec![1.0, 0.0, 0.0, 1.0], 2, 2, 0.9);
        let gt = shapley_solve(&game, ShapleyOptions::default()).unwrap();
        let c = margin_constant_estimate(&gt, 10_000, 7).unwrap();
        assert!(c > 0.0);
    }
}
