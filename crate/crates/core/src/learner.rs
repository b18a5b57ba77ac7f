//! Self-play optimistic gradient descent/ascent with a slow critic, and the
//! single-player variant that faces a fixed stationary opponent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{EstimateTriple, Estimator, EstimatorConfig};
use crate::game::{
    check_state_policy, q_from_v, validate_game, JointPolicy, MarkovGame, Player, QTable,
    StatePolicy, ValueVector,
};
use crate::projection::project_simplex;

/// Iterates of one run: `x̂_t, x_t, ŷ_t, y_t` per state plus the critic
/// `V_{t−1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerState {
    pub x_hat: StatePolicy,
    pub x: StatePolicy,
    pub y_hat: StatePolicy,
    pub y: StatePolicy,
    pub critic: ValueVector,
    /// Index of the iteration about to run (starts at 1).
    pub t: u64,
    pub eta: f64,
    pub epsilon: f64,
}

impl LearnerState {
    /// `x̂_1 = x_1`, `ŷ_1 = y_1` from `init`, and `V_0 = 0`.
    pub fn new(game: &MarkovGame, init: &JointPolicy, eta: f64, epsilon: f64) -> Result<Self> {
        init.check(game)?;
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::InvalidArgument(format!("eta must be positive and finite, got {eta}")));
        }
        Ok(Self {
            x_hat: init.x.clone(),
            x: init.x.clone(),
            y_hat: init.y.clone(),
            y: init.y.clone(),
            critic: vec![0.0; game.n_states()],
            t: 1,
            eta,
            epsilon,
        })
    }

    pub fn hat_policy(&self) -> JointPolicy {
        JointPolicy { x: self.x_hat.clone(), y: self.y_hat.clone() }
    }

    pub fn play_policy(&self) -> JointPolicy {
        JointPolicy { x: self.x.clone(), y: self.y.clone() }
    }
}

/// `α_t = (H+1)/(H+t)` with `H = 2/(1−γ)`.
pub fn alpha_schedule(t: u64, gamma: f64) -> f64 {
    let h = 2.0 / (1.0 - gamma);
    (h + 1.0) / (h + t as f64)
}

/// Largest step size covered by the convergence analysis,
/// `10⁻⁴ √((1−γ)⁵ / |S|)`.
pub fn eta_max(gamma: f64, n_states: usize) -> f64 {
    1e-4 * ((1.0 - gamma).powi(5) / n_states as f64).sqrt()
}

/// `(x̂', x') = (Π(x̂ − η g), Π(x̂' − η g))`.
fn descent_pair(x_hat: &[f64], grad: &[f64], eta: f64) -> (Vec<f64>, Vec<f64>) {
    let hat: Vec<f64> = x_hat.iter().zip(grad).map(|(x, g)| x - eta * g).collect();
    let hat = project_simplex(&hat);
    let play: Vec<f64> = hat.iter().zip(grad).map(|(x, g)| x - eta * g).collect();
    (hat, project_simplex(&play))
}

/// `(ŷ', y') = (Π(ŷ + η g), Π(ŷ' + η g))`.
fn ascent_pair(y_hat: &[f64], grad: &[f64], eta: f64) -> (Vec<f64>, Vec<f64>) {
    let hat: Vec<f64> = y_hat.iter().zip(grad).map(|(y, g)| y + eta * g).collect();
    let hat = project_simplex(&hat);
    let play: Vec<f64> = hat.iter().zip(grad).map(|(y, g)| y + eta * g).collect();
    (hat, project_simplex(&play))
}

fn check_finite(est: &EstimateTriple) -> Result<()> {
    for (state, ell) in est.ell.iter().enumerate() {
        if ell.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { state, what: "ell" });
        }
    }
    for (state, r) in est.r.iter().enumerate() {
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { state, what: "r" });
        }
    }
    if let Some(state) = est.rho.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { state, what: "rho" });
    }
    Ok(())
}

fn check_shapes(state: &LearnerState, est: &EstimateTriple, with_r: bool) -> Result<()> {
    let n = state.x_hat.len();
    let bad = est.ell.len() != n
        || est.rho.len() != n
        || (with_r && est.r.len() != n)
        || est.ell.iter().zip(&state.x_hat).any(|(l, x)| l.len() != x.len())
        || (with_r && est.r.iter().zip(&state.y_hat).any(|(r, y)| r.len() != y.len()));
    if bad {
        return Err(Error::Dimension("estimate shapes do not match the learner state".into()));
    }
    Ok(())
}

/// One optimistic descent/ascent step on every state. The critic is left
/// untouched; on error the input state is not modified.
pub fn ogda_step(state: &LearnerState, est: &EstimateTriple) -> Result<LearnerState> {
    check_shapes(state, est, true)?;
    check_finite(est)?;
    let mut next = state.clone();
    for s in 0..state.x_hat.len() {
        let (x_hat, x) = descent_pair(&state.x_hat[s], &est.ell[s], state.eta);
        let (y_hat, y) = ascent_pair(&state.y_hat[s], &est.r[s], state.eta);
        next.x_hat[s] = x_hat;
        next.x[s] = x;
        next.y_hat[s] = y_hat;
        next.y[s] = y;
    }
    next.t += 1;
    Ok(next)
}

/// Player-1 half of [`ogda_step`]; `y`, `ŷ` and the critic stay as they are.
pub fn ogda_step_player1(state: &LearnerState, est: &EstimateTriple) -> Result<LearnerState> {
    check_shapes(state, est, false)?;
    check_finite(&EstimateTriple { ell: est.ell.clone(), r: Vec::new(), rho: est.rho.clone() })?;
    let mut next = state.clone();
    for s in 0..state.x_hat.len() {
        let (x_hat, x) = descent_pair(&state.x_hat[s], &est.ell[s], state.eta);
        next.x_hat[s] = x_hat;
        next.x[s] = x;
    }
    next.t += 1;
    Ok(next)
}

/// `V_t = (1 − α_t) V_{t−1} + α_t ρ_t`.
pub fn critic_step(v_prev: &[f64], rho: &[f64], alpha: f64) -> ValueVector {
    v_prev.iter().zip(rho).map(|(v, r)| (1.0 - alpha) * v + alpha * r).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaSetting {
    Value(f64),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

impl EtaSetting {
    pub const AUTO: EtaSetting = EtaSetting::Auto(AutoTag::Auto);

    pub fn resolve(self, gamma: f64, n_states: usize) -> f64 {
        match self {
            EtaSetting::Value(v) => v,
            EtaSetting::Auto(_) => eta_max(gamma, n_states),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AlphaSchedule {
    /// `(H+1)/(H+t)`, `H = 2/(1−γ)`.
    #[default]
    Harmonic,
    /// `α_1 = 1`, then a fixed value. For ablations only.
    Constant { value: f64 },
}

impl AlphaSchedule {
    pub fn alpha(&self, t: u64, gamma: f64) -> f64 {
        match *self {
            AlphaSchedule::Harmonic => alpha_schedule(t, gamma),
            AlphaSchedule::Constant { value } => {
                if t == 1 {
                    1.0
                } else {
                    value
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialPolicy {
    #[default]
    Uniform,
    Explicit(JointPolicy),
}

impl InitialPolicy {
    pub fn resolve(&self, game: &MarkovGame) -> JointPolicy {
        match self {
            InitialPolicy::Uniform => JointPolicy::uniform(game),
            InitialPolicy::Explicit(p) => p.clone(),
        }
    }
}

/// Parameters of one learning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub iterations: u64,
    #[serde(default = "default_eta")]
    pub eta: EtaSetting,
    #[serde(default)]
    pub alpha: AlphaSchedule,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub initial_policy: InitialPolicy,
    #[serde(default = "default_cadence")]
    pub metric_cadence: u64,
    /// Extra iterations to log in addition to multiples of the cadence.
    #[serde(default)]
    pub extra_log_times: Vec<u64>,
    /// Evaluate the game duality gap at every iteration to report its
    /// running average.
    #[serde(default)]
    pub track_average_gap: bool,
    /// Compare sampled estimates with exact ones at logged iterations.
    #[serde(default)]
    pub debug_estimator_error: bool,
    #[serde(default)]
    pub record_wall_clock: bool,
    /// Enforce `η <= eta_max(γ, |S|)` and `γ >= 1/2`.
    #[serde(default)]
    pub strict: bool,
}

fn default_eta() -> EtaSetting {
    EtaSetting::Value(0.05)
}

fn default_cadence() -> u64 {
    1
}

impl RunConfig {
    pub fn new(iterations: u64) -> Self {
        Self {
            iterations,
            eta: default_eta(),
            alpha: AlphaSchedule::default(),
            estimator: EstimatorConfig::default(),
            seed: 0,
            initial_policy: InitialPolicy::default(),
            metric_cadence: default_cadence(),
            extra_log_times: Vec::new(),
            track_average_gap: false,
            debug_estimator_error: false,
            record_wall_clock: false,
            strict: false,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::InvalidArgument("iterations must be at least 1".into()));
        }
        if self.metric_cadence < 1 {
            return Err(Error::InvalidArgument("metric cadence must be at least 1".into()));
        }
        Ok(())
    }

    /// Whether metrics are due at iteration `t`.
    pub fn logs_at(&self, t: u64) -> bool {
        t.is_multiple_of(self.metric_cadence) || self.extra_log_times.contains(&t)
    }

    fn prepare(&self, game: &MarkovGame) -> Result<f64> {
        self.check()?;
        let report = validate_game(game);
        if self.strict {
            report.into_result()?;
        } else {
            report.into_result_allowing_low_gamma()?;
        }
        let eta = self.eta.resolve(game.gamma(), game.n_states());
        if self.strict && eta > eta_max(game.gamma(), game.n_states()) {
            return Err(Error::InvalidArgument(format!(
                "eta {eta} exceeds eta_max {} in strict mode",
                eta_max(game.gamma(), game.n_states())
            )));
        }
        Ok(eta)
    }
}

/// Everything an observer can see about iteration `t`.
pub struct StepView<'a> {
    pub t: u64,
    pub alpha: f64,
    /// `Q_t = q_from_v(V_{t−1})`.
    pub q: &'a QTable,
    /// Iterates entering iteration `t`, with critic `V_{t−1}`.
    pub state: &'a LearnerState,
    pub estimates: &'a EstimateTriple,
    /// `V_t`.
    pub critic: &'a [f64],
}

/// Receives every iteration of a run.
pub trait Observer {
    fn observe(&mut self, step: &StepView<'_>) -> Result<()>;
}

/// Observer that ignores everything.
pub struct NoObserver;

impl Observer for NoObserver {
    fn observe(&mut self, _: &StepView<'_>) -> Result<()> {
        Ok(())
    }
}

impl<F: FnMut(&StepView<'_>) -> Result<()>> Observer for F {
    fn observe(&mut self, step: &StepView<'_>) -> Result<()> {
        self(step)
    }
}

fn at(t: u64) -> impl Fn(Error) -> Error {
    move |e| Error::AtIteration { iteration: t, source: Box::new(e) }
}

/// Runs self-play for `config.iterations` iterations and returns the final
/// iterates. Each iteration builds `Q_t` from the critic, asks the estimator
/// for `(ℓ_t, r_t, ρ_t)`, takes an optimistic step for both players and then
/// moves the critic.
pub fn run_selfplay(
    game: &MarkovGame,
    config: &RunConfig,
    estimator: &mut Estimator,
    observer: &mut dyn Observer,
) -> Result<LearnerState> {
    let eta = config.prepare(game)?;
    let init = config.initial_policy.resolve(game);
    let mut state = LearnerState::new(game, &init, eta, estimator.epsilon())?;
    for t in 1..=config.iterations {
        let q = q_from_v(game, &state.critic);
        let est = estimator.estimate(game, &q, &state.critic, &state.x, &state.y, false).map_err(at(t))?;
        let alpha = config.alpha.alpha(t, game.gamma());
        let mut next = ogda_step(&state, &est).map_err(at(t))?;
        next.critic = critic_step(&state.critic, &est.rho, alpha);
        observer
            .observe(&StepView { t, alpha, q: &q, state: &state, estimates: &est, critic: &next.critic })
            .map_err(at(t))?;
        state = next;
    }
    Ok(state)
}

/// Opponent-marginalized game with a single Player-2 action:
/// `σ̲(s,a) = E_{b∼y^s} σ(s,a,b)` and `p̲(·|s,a) = E_{b∼y^s} p(·|s,a,b)`.
pub fn reduce_game_for_opponent(game: &MarkovGame, opponent: &[Vec<f64>]) -> Result<MarkovGame> {
    check_state_policy(game, opponent, Player::Two)?;
    let n = game.n_states();
    let n_a = game.n_actions_p1();
    let mut loss = vec![0.0; n * n_a];
    let mut transition = vec![0.0; n * n_a * n];
    for s in 0..n {
        for a in 0..n_a {
            let idx = s * n_a + a;
            let mut l = 0.0;
            for (b, &w) in opponent[s].iter().enumerate() {
                l += w * game.loss(s, a, b);
            }
            loss[idx] = l;
            for next in 0..n {
                let mut p = 0.0;
                for (b, &w) in opponent[s].iter().enumerate() {
                    p += w * game.transition_row(s, a, b)[next];
                }
                transition[idx * n + next] = p;
            }
        }
    }
    MarkovGame::new(n, n_a, 1, loss, transition, game.gamma())
}

/// Player 1 runs the optimistic descent step and the critic against a fixed
/// stationary opponent `y`.
///
/// In exact mode the gradient `Q_t^s y^s` is formed in the opponent-marginal
/// game (see [`reduce_game_for_opponent`]); in sampled mode the rollouts are
/// played in the original game with the opponent drawing `b ∼ y^s`.
/// Observers receive `Q_t` of the original game; the `y`/`ŷ` fields of the
/// state hold the opponent throughout.
pub fn run_single_player(
    game: &MarkovGame,
    opponent: &[Vec<f64>],
    config: &RunConfig,
    estimator: &mut Estimator,
    observer: &mut dyn Observer,
) -> Result<LearnerState> {
    let eta = config.prepare(game)?;
    let reduced = reduce_game_for_opponent(game, opponent)?;
    let init = JointPolicy { x: config.initial_policy.resolve(game).x, y: opponent.to_vec() };
    let mut state = LearnerState::new(game, &init, eta, estimator.epsilon())?;
    let single = vec![vec![1.0]; game.n_states()];
    for t in 1..=config.iterations {
        let q = q_from_v(game, &state.critic);
        let est = if estimator.is_exact() {
            let q_reduced = q_from_v(&reduced, &state.critic);
            estimator.estimate(&reduced, &q_reduced, &state.critic, &state.x, &single, true)
        } else {
            estimator.estimate(game, &q, &state.critic, &state.x, opponent, true)
        }
        .map_err(at(t))?;
        let alpha = config.alpha.alpha(t, game.gamma());
        let mut next = ogda_step_player1(&state, &est).map_err(at(t))?;
        next.critic = critic_step(&state.critic, &est.rho, alpha);
        observer
            .observe(&StepView { t, alpha, q: &q, state: &state, estimates: &est, critic: &next.critic })
            .map_err(at(t))?;
        state = next;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state_1x(x: Vec<f64>, y: Vec<f64>, eta: f64) -> LearnerState {
        LearnerState {
            x_hat: vec![x.clone()],
            x: vec![x],
            y_hat: vec![y.clone()],
            y: vec![y],
            critic: vec![0.0],
            t: 1,
            eta,
            epsilon: 0.0,
        }
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha_schedule(1, 0.5), 1.0);
        assert_eq!(alpha_schedule(1, 0.9), 1.0);
        assert!((alpha_schedule(2, 0.5) - 5.0 / 6.0).abs() < 1e-15);
        assert!((alpha_schedule(10, 0.9) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn alpha_is_non_increasing() {
        for t in 1..1000 {
            assert!(alpha_schedule(t + 1, 0.9) <= alpha_schedule(t, 0.9));
        }
        assert!(alpha_schedule(10_000_000, 0.9) < 1e-5);
    }

    #[test]
    fn eta_max_examples() {
        assert!((eta_max(0.5, 1) - 1.767767e-5).abs() < 1e-11);
        assert!((eta_max(0.9, 1) - 3.1623e-7).abs() < 1e-11);
        assert!((eta_max(0.5, 4) - eta_max(0.5, 1) / 2.0).abs() < 1e-20);
    }

    #[test]
    fn zero_gradient_keeps_hat_iterates() {
        let state = state_1x(vec![0.2, 0.8], vec![0.6, 0.4], 0.1);
        let est = EstimateTriple { ell: vec![vec![0.0, 0.0]], r: vec![vec![0.0, 0.0]], rho: vec![0.0] };
        let next = ogda_step(&state, &est).unwrap();
        assert_eq!(next.x_hat[0], vec![0.2, 0.8]);
        assert_eq!(next.x[0], vec![0.2, 0.8]);
        assert_eq!(next.y_hat[0], vec![0.6, 0.4]);
        assert_eq!(next.y[0], vec![0.6, 0.4]);
        assert_eq!(next.t, 2);
    }

    #[test]
    fn matching_pennies_uniform_is_stationary() {
        let state = state_1x(vec![0.5, 0.5], vec![0.5, 0.5], 0.1);
        let est = EstimateTriple { ell: vec![vec![0.5, 0.5]], r: vec![vec![0.5, 0.5]], rho: vec![0.5] };
        let next = ogda_step(&state, &est).unwrap();
        for v in [&next.x_hat[0], &next.x[0], &next.y_hat[0], &next.y[0]] {
            assert_eq!(v, &vec![0.5, 0.5]);
        }
    }

    #[test]
    fn interior_step_is_unprojected_arithmetic() {
        let state = state_1x(vec![0.4, 0.6], vec![0.5, 0.5], 0.01);
        let est = EstimateTriple { ell: vec![vec![0.5, -0.5]], r: vec![vec![-0.5, 0.5]], rho: vec![0.4] };
        let next = ogda_step(&state, &est).unwrap();
        // zero-sum gradients keep every step on the simplex
        assert!((next.x_hat[0][0] - 0.395).abs() < 1e-15);
        assert!((next.x[0][0] - 0.39).abs() < 1e-15);
        assert!((next.y_hat[0][1] - 0.505).abs() < 1e-15);
        assert!((next.y[0][1] - 0.51).abs() < 1e-15);
    }

    #[test]
    fn nan_estimate_is_rejected() {
        let state = state_1x(vec![0.5, 0.5], vec![0.5, 0.5], 0.1);
        let est = EstimateTriple { ell: vec![vec![f64::NAN, 0.0]], r: vec![vec![0.0, 0.0]], rho: vec![0.0] };
        assert!(matches!(ogda_step(&state, &est), Err(Error::NonFinite { state: 0, what: "ell" })));
        let est = EstimateTriple { ell: vec![vec![0.0, 0.0]], r: vec![vec![0.0, 0.0]], rho: vec![f64::INFINITY] };
        assert!(matches!(ogda_step(&state, &est), Err(Error::NonFinite { what: "rho", .. })));
    }

    #[test]
    fn critic_examples() {
        assert_eq!(critic_step(&[0.0], &[0.7], 1.0), vec![0.7]);
        let v = critic_step(&[0.7], &[0.3], 5.0 / 6.0);
        assert!((v[0] - 0.3666667).abs() < 1e-7);
        assert_eq!(critic_step(&[0.42], &[0.42], 0.3), vec![0.42]);
    }

    #[test]
    fn eta_setting_parses_auto_and_numbers() {
        let auto: EtaSetting = serde_json::from_str("\"auto\"").unwrap();
        assert_eq!(auto, EtaSetting::AUTO);
        let v: EtaSetting = serde_json::from_str("0.05").unwrap();
        assert_eq!(v, EtaSetting::Value(0.05));
        assert_eq!(EtaSetting::AUTO.resolve(0.5, 1), eta_max(0.5, 1));
    }

    #[test]
    fn reduced_game_pure_and_uniform() {
        let game = MarkovGame::new(1, 2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![1.0; 4], 0.9).unwrap();
        let pure = reduce_game_for_opponent(&game, &[vec![0.0, 1.0]]).unwrap();
        assert_eq!(pure.loss_tensor(), &[0.0, 1.0]);
        let uni = reduce_game_for_opponent(&game, &[vec![0.5, 0.5]]).unwrap();
        assert_eq!(uni.loss_tensor(), &[0.5, 0.5]);
        assert!(validate_game(&uni).is_ok());
        assert_eq!(uni.gamma(), 0.9);
    }

    #[test]
    fn strict_mode_rejects_large_eta_and_low_gamma() {
        let game = MarkovGame::new(1, 1, 1, vec![0.4], vec![1.0], 0.5).unwrap();
        let mut config = RunConfig::new(5);
        config.strict = true;
        let mut est = Estimator::exact();
        assert!(run_selfplay(&game, &config, &mut est, &mut NoObserver).is_err());
        config.eta = EtaSetting::AUTO;
        assert!(run_selfplay(&game, &config, &mut est, &mut NoObserver).is_ok());

        let low = MarkovGame::new(1, 1, 1, vec![0.4], vec![1.0], 0.3).unwrap();
        assert!(run_selfplay(&low, &config, &mut est, &mut NoObserver).is_err());
        config.strict = false;
        config.eta = EtaSetting::Value(0.05);
        assert!(run_selfplay(&low, &config, &mut est, &mut NoObserver).is_ok());
    }
}
