//! Per-iteration convergence metrics and the path-length diagnostics `J_t`,
//! `K_t`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimator::estimates_from_q;
use crate::game::{
    best_response, evaluate_policy_pair, qtable_max_diff, BestResponseOptions, JointPolicy, MarkovGame, Matrix,
    Player, QTable, StatePolicy,
};
use crate::ground_truth::{dist_to_optimal_sets, duality_gap_state, game_duality_gap, squared_distance, GroundTruth};
use crate::learner::{Observer, RunConfig, StepView};

/// Per-state `J_t^s` and `K_t^s`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub j: Vec<f64>,
    pub k: Vec<f64>,
}

impl Diagnostics {
    pub fn zeros(n_states: usize) -> Self {
        Self { j: vec![0.0; n_states], k: vec![0.0; n_states] }
    }

    pub fn j_max(&self) -> f64 {
        self.j.iter().copied().fold(0.0, f64::max)
    }

    pub fn k_max(&self) -> f64 {
        self.k.iter().copied().fold(0.0, f64::max)
    }
}

/// `J_t^s = (1−α_t) J_{t−1}^s + α_t ‖z_t^s − z_{t−1}^s‖²` and
/// `K_t^s = (1−α_t) K_{t−1}^s + α_t ‖Q_t^s − Q_{t−1}^s‖²`, with `z^s = (x^s, y^s)`
/// concatenated and `‖·‖` on matrices the max-entry norm. At `t = 1` pass
/// zero vectors and matrices for the previous iterate together with `α_1 = 1`.
pub fn diagnostics_update(
    prev: &Diagnostics,
    z_t: &[Vec<f64>],
    z_prev: &[Vec<f64>],
    q_t: &[Matrix],
    q_prev: &[Matrix],
    alpha: f64,
) -> Diagnostics {
    let j = prev
        .j
        .iter()
        .zip(z_t.iter().zip(z_prev))
        .map(|(j, (z, zp))| (1.0 - alpha) * j + alpha * squared_distance(z, zp))
        .collect();
    let k = prev
        .k
        .iter()
        .zip(q_t.iter().zip(q_prev))
        .map(|(k, (q, qp))| (1.0 - alpha) * k + alpha * q.max_abs_diff(qp).powi(2))
        .collect();
    Diagnostics { j, k }
}

fn concat_pair(x: &StatePolicy, y: &StatePolicy) -> Vec<Vec<f64>> {
    x.iter().zip(y).map(|(a, b)| [a.as_slice(), b.as_slice()].concat()).collect()
}

/// One logged iteration of a self-play run. Metrics are evaluated at
/// `(x̂_t, ŷ_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub t: u64,
    /// `max_s (V^s_{x̂,br} − V^s_{br,ŷ})`.
    pub game_duality_gap: f64,
    /// `(1/t) Σ_{τ<=t}` of the above, when tracked every iteration.
    pub avg_game_duality_gap: Option<f64>,
    /// `(1/|S|) Σ_s dist⋆²(ẑ_t^s)`.
    pub mean_dist_sq: f64,
    /// `max_s Δ(ẑ_t^s)` in the matrix games `Q⋆^s`.
    pub max_state_gap: f64,
    /// `Γ_t = max_s ‖Q_t^s − Q⋆^s‖`.
    pub gamma_t: f64,
    pub j_t: f64,
    pub k_t: f64,
    /// `max_s ‖Q_t^s − Q_{t−1}^s‖`.
    pub q_step: f64,
    /// `γ α_{t−1} (1/(1−γ) + 2ε)`; absent at `t = 1`.
    pub q_step_bound: Option<f64>,
    pub critic_max: f64,
    /// Largest deviation of the estimates from exact ones (debug only).
    pub estimator_error: Option<f64>,
    pub wall_clock_s: Option<f64>,
}

pub const METRICS_COLUMNS: [&str; 13] = [
    "t",
    "game_duality_gap",
    "avg_game_duality_gap",
    "mean_dist_sq",
    "max_state_gap",
    "gamma_t",
    "j_t",
    "k_t",
    "q_step",
    "q_step_bound",
    "critic_max",
    "estimator_error",
    "wall_clock_s",
];

impl MetricsRow {
    pub fn values(&self) -> Vec<Option<f64>> {
        vec![
            Some(self.t as f64),
            Some(self.game_duality_gap),
            self.avg_game_duality_gap,
            Some(self.mean_dist_sq),
            Some(self.max_state_gap),
            Some(self.gamma_t),
            Some(self.j_t),
            Some(self.k_t),
            Some(self.q_step),
            self.q_step_bound,
            Some(self.critic_max),
            self.estimator_error,
            self.wall_clock_s,
        ]
    }
}

/// One logged iteration of a single-player run against a fixed opponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalityRow {
    pub t: u64,
    /// `max_s (V^s_{x̂_t, y} − min_x V^s_{x, y})`.
    pub exploitability: f64,
    /// `(1/|S|) Σ_s dist²(x̂_t^s, X_BR^s)`.
    pub mean_dist_sq: f64,
    pub q_step: f64,
    pub q_step_bound: Option<f64>,
    pub critic_max: f64,
    pub wall_clock_s: Option<f64>,
}

pub const RATIONALITY_COLUMNS: [&str; 7] =
    ["t", "exploitability", "mean_dist_sq", "q_step", "q_step_bound", "critic_max", "wall_clock_s"];

impl RationalityRow {
    pub fn values(&self) -> Vec<Option<f64>> {
        vec![
            Some(self.t as f64),
            Some(self.exploitability),
            Some(self.mean_dist_sq),
            Some(self.q_step),
            self.q_step_bound,
            Some(self.critic_max),
            self.wall_clock_s,
        ]
    }
}

/// Incrementally maintained `J`, `K` and `Q_{t−1}`.
#[derive(Debug, Clone)]
struct PathTracker {
    diagnostics: Diagnostics,
    prev_z: Vec<Vec<f64>>,
    prev_q: QTable,
    prev_alpha: f64,
}

impl PathTracker {
    fn new(game: &MarkovGame) -> Self {
        let n = game.n_states();
        Self {
            diagnostics: Diagnostics::zeros(n),
            prev_z: vec![vec![0.0; game.n_actions_p1() + game.n_actions_p2()]; n],
            prev_q: vec![Matrix::zeros(game.n_actions_p1(), game.n_actions_p2()); n],
            prev_alpha: 1.0,
        }
    }

    /// Returns `(‖Q_t − Q_{t−1}‖, bound)` and advances to `t`.
    fn advance(&mut self, step: &StepView<'_>, gamma: f64, epsilon: f64) -> (f64, Option<f64>) {
        let z = concat_pair(&step.state.x, &step.state.y);
        self.diagnostics = diagnostics_update(&self.diagnostics, &z, &self.prev_z, step.q, &self.prev_q, step.alpha);
        let q_step = qtable_max_diff(step.q, &self.prev_q);
        let bound = (step.t >= 2).then(|| gamma * self.prev_alpha * (1.0 / (1.0 - gamma) + 2.0 * epsilon));
        self.prev_z = z;
        self.prev_q = step.q.clone();
        self.prev_alpha = step.alpha;
        (q_step, bound)
    }
}

/// Logging switches shared by both recorders.
#[derive(Debug, Clone, Default)]
pub struct LogSchedule {
    pub cadence: u64,
    pub extra: Vec<u64>,
    pub track_average_gap: bool,
    pub debug_estimator_error: bool,
    pub record_wall_clock: bool,
}

impl LogSchedule {
    pub fn from_config(config: &RunConfig) -> Self {
        Self {
            cadence: config.metric_cadence.max(1),
            extra: config.extra_log_times.clone(),
            track_average_gap: config.track_average_gap,
            debug_estimator_error: config.debug_estimator_error,
            record_wall_clock: config.record_wall_clock,
        }
    }

    fn due(&self, t: u64) -> bool {
        t.is_multiple_of(self.cadence) || self.extra.contains(&t)
    }
}

/// Observer that turns a self-play run into [`MetricsRow`]s.
pub struct MetricsRecorder<'a> {
    game: &'a MarkovGame,
    truth: &'a GroundTruth,
    schedule: LogSchedule,
    epsilon: f64,
    path: PathTracker,
    gap_sum: f64,
    started: Instant,
    pub rows: Vec<MetricsRow>,
}

impl<'a> MetricsRecorder<'a> {
    pub fn new(game: &'a MarkovGame, truth: &'a GroundTruth, schedule: LogSchedule, epsilon: f64) -> Self {
        Self {
            game,
            truth,
            schedule,
            epsilon,
            path: PathTracker::new(game),
            gap_sum: 0.0,
            started: Instant::now(),
            rows: Vec::new(),
        }
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.path.diagnostics
    }
}

impl Observer for MetricsRecorder<'_> {
    fn observe(&mut self, step: &StepView<'_>) -> Result<()> {
        let gamma = self.game.gamma();
        let (q_step, q_step_bound) = self.path.advance(step, gamma, self.epsilon);
        let due = self.schedule.due(step.t);
        if !due && !self.schedule.track_average_gap {
            return Ok(());
        }
        let hat = JointPolicy { x: step.state.x_hat.clone(), y: step.state.y_hat.clone() };
        let gap = game_duality_gap(self.game, &hat)?;
        self.gap_sum += gap;
        if !due {
            return Ok(());
        }
        let dist = dist_to_optimal_sets(self.truth, &hat)?;
        let max_state_gap = self
            .truth
            .q_star
            .iter()
            .zip(hat.x.iter().zip(&hat.y))
            .map(|(q, (x, y))| duality_gap_state(q, x, y))
            .fold(f64::NEG_INFINITY, f64::max);
        let estimator_error = self.schedule.debug_estimator_error.then(|| {
            estimates_from_q(step.q, &step.state.x, &step.state.y).max_abs_diff(step.estimates)
        });
        self.rows.push(MetricsRow {
            t: step.t,
            game_duality_gap: gap,
            avg_game_duality_gap: self.schedule.track_average_gap.then(|| self.gap_sum / step.t as f64),
            mean_dist_sq: dist.mean,
            max_state_gap,
            gamma_t: qtable_max_diff(step.q, &self.truth.q_star),
            j_t: self.path.diagnostics.j_max(),
            k_t: self.path.diagnostics.k_max(),
            q_step,
            q_step_bound,
            critic_max: step.critic.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            estimator_error,
            wall_clock_s: self.schedule.record_wall_clock.then(|| self.started.elapsed().as_secs_f64()),
        });
        Ok(())
    }
}

/// Observer for single-player runs. `reduced_truth` must be the ground
/// truth of the opponent-reduced game, whose optimal row set is the
/// best-response set.
pub struct RationalityRecorder<'a> {
    game: &'a MarkovGame,
    opponent: &'a [Vec<f64>],
    reduced_truth: &'a GroundTruth,
    br_value: Vec<f64>,
    schedule: LogSchedule,
    epsilon: f64,
    path: PathTracker,
    started: Instant,
    pub rows: Vec<RationalityRow>,
}

impl<'a> RationalityRecorder<'a> {
    pub fn new(
        game: &'a MarkovGame,
        opponent: &'a [Vec<f64>],
        reduced_truth: &'a GroundTruth,
        schedule: LogSchedule,
        epsilon: f64,
    ) -> Result<Self> {
        let br = best_response(game, opponent, Player::Two, BestResponseOptions::default())?;
        Ok(Self {
            game,
            opponent,
            reduced_truth,
            br_value: br.value,
            schedule,
            epsilon,
            path: PathTracker::new(game),
            started: Instant::now(),
            rows: Vec::new(),
        })
    }
}

/// `max_s (V^s_{x,y} − V^s_{br(y),y})` for a fixed opponent `y`.
pub fn exploitability(game: &MarkovGame, x: &StatePolicy, opponent: &[Vec<f64>], br_value: &[f64]) -> Result<f64> {
    let v = evaluate_policy_pair(game, &JointPolicy { x: x.clone(), y: opponent.to_vec() })?;
    Ok(v.iter().zip(br_value).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max))
}

impl Observer for RationalityRecorder<'_> {
    fn observe(&mut self, step: &StepView<'_>) -> Result<()> {
        let (q_step, q_step_bound) = self.path.advance(step, self.game.gamma(), self.epsilon);
        if !self.schedule.due(step.t) {
            return Ok(());
        }
        let exploit = exploitability(self.game, &step.state.x_hat, self.opponent, &self.br_value)?;
        let reduced_policy = JointPolicy {
            x: step.state.x_hat.clone(),
            y: vec![vec![1.0]; self.game.n_states()],
        };
        let dist = dist_to_optimal_sets(self.reduced_truth, &reduced_policy)?;
        self.rows.push(RationalityRow {
            t: step.t,
            exploitability: exploit,
            mean_dist_sq: dist.mean,
            q_step,
            q_step_bound,
            critic_max: step.critic.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            wall_clock_s: self.schedule.record_wall_clock.then(|| self.started.elapsed().as_secs_f64()),
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_squared_norm_of_iterate() {
        let prev = Diagnostics::zeros(1);
        let z = vec![vec![0.5, 0.5, 1.0, 0.0]];
        let q = vec![Matrix::from_rows(&[vec![0.25, 0.5], vec![0.75, 1.0]]).unwrap()];
        let d = diagnostics_update(&prev, &z, &[vec![0.0; 4]], &q, &[Matrix::zeros(2, 2)], 1.0);
        assert_eq!(d.j, vec![1.5]);
        assert_eq!(d.k, vec![1.0]);
    }

    #[test]
    fn constant_inputs_decay_geometrically() {
        let z = vec![vec![0.3, 0.7, 0.6, 0.4]];
        let q = vec![Matrix::from_rows(&[vec![0.25, 0.5], vec![0.75, 1.0]]).unwrap()];
        let mut d = diagnostics_update(&Diagnostics::zeros(1), &z, &[vec![0.0; 4]], &q, &[Matrix::zeros(2, 2)], 1.0);
        for t in 2..20u64 {
            let alpha = crate::learner::alpha_schedule(t, 0.9);
            let next = diagnostics_update(&d, &z, &z, &q, &q, alpha);
            assert_eq!(next.j[0], (1.0 - alpha) * d.j[0]);
            assert_eq!(next.k[0], (1.0 - alpha) * d.k[0]);
            assert!(next.j[0] >= 0.0 && next.k[0] >= 0.0);
            d = next;
        }
    }
}
