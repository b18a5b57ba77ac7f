//! Gradient/value oracles for the learner: exact evaluation from `Q_t`, and
//! trajectory-based estimates with uniform exploration. Also sample-budget
//! planning and an empirical irreducibility probe.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{dot, induced_chain, q_from_v, JointPolicy, MarkovGame, Matrix, StatePolicy};
use crate::sampling::{sample_index, sample_simplex};

/// `(ℓ_t, r_t, ρ_t)`: approximations of `Q_t^s y_t^s`, `Q_t^{s⊤} x_t^s` and
/// `x_t^{s⊤} Q_t^s y_t^s` for every state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateTriple {
    pub ell: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
}

impl EstimateTriple {
    /// Largest deviation from `other` across all three components.
    pub fn max_abs_diff(&self, other: &EstimateTriple) -> f64 {
        let vec_diff = |a: &[Vec<f64>], b: &[Vec<f64>]| {
            a.iter()
                .zip(b)
                .flat_map(|(u, v)| u.iter().zip(v).map(|(p, q)| (p - q).abs()))
                .fold(0.0_f64, f64::max)
        };
        let rho = self.rho.iter().zip(&other.rho).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        vec_diff(&self.ell, &other.ell).max(vec_diff(&self.r, &other.r)).max(rho)
    }
}

/// `ℓ^s = Q^s y^s`, `r^s = Q^{s⊤} x^s`, `ρ^s = x^s · ℓ^s`.
pub fn estimates_from_q(q: &[Matrix], x: &[Vec<f64>], y: &[Vec<f64>]) -> EstimateTriple {
    let ell: Vec<Vec<f64>> = q.iter().zip(y).map(|(m, ys)| m.mul_vec(ys)).collect();
    let r = q.iter().zip(x).map(|(m, xs)| m.tmul_vec(xs)).collect();
    let rho = x.iter().zip(&ell).map(|(xs, l)| dot(xs, l)).collect();
    EstimateTriple { ell, r, rho }
}

/// Exact estimates with `Q_t = q_from_v(V_{t−1})`; the error budget is zero.
pub fn exact_estimates(game: &MarkovGame, v_prev: &[f64], policy: &JointPolicy) -> Result<EstimateTriple> {
    game.check_values(v_prev)?;
    policy.check(game)?;
    Ok(estimates_from_q(&q_from_v(game, v_prev), &policy.x, &policy.y))
}

/// `x̃^s(a) = (1 − ε′/2) x^s(a) + ε′/(2|A|)`.
pub fn explore_mix(policy: &[Vec<f64>], epsilon_prime: f64) -> StatePolicy {
    policy
        .iter()
        .map(|dist| {
            let n = dist.len() as f64;
            dist.iter().map(|p| (1.0 - epsilon_prime / 2.0) * p + epsilon_prime / (2.0 * n)).collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub a: usize,
    pub b: usize,
    pub loss: f64,
    pub next: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Transition>,
    pub seed: Option<u64>,
}

impl Trajectory {
    pub fn final_state(&self) -> Option<usize> {
        self.steps.last().map(|t| t.next)
    }
}

/// Plays `len` steps from `s_init` with `a ∼ x̃^s`, `b ∼ ỹ^s`, `s' ∼ p(·|s,a,b)`.
pub fn rollout(
    game: &MarkovGame,
    x_tilde: &[Vec<f64>],
    y_tilde: &[Vec<f64>],
    len: usize,
    s_init: usize,
    rng: &mut ChaCha8Rng,
) -> Trajectory {
    let mut steps = Vec::with_capacity(len);
    let mut s = s_init;
    for _ in 0..len {
        let a = sample_index(rng, &x_tilde[s]);
        let b = sample_index(rng, &y_tilde[s]);
        let next = sample_index(rng, game.transition_row(s, a, b));
        steps.push(Transition { state: s, a, b, loss: game.loss(s, a, b), next });
        s = next;
    }
    Trajectory { steps, seed: None }
}

/// [`rollout`] with a fresh generator, recording the seed.
pub fn rollout_seeded(
    game: &MarkovGame,
    x_tilde: &[Vec<f64>],
    y_tilde: &[Vec<f64>],
    len: usize,
    s_init: usize,
    seed: u64,
) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut traj = rollout(game, x_tilde, y_tilde, len, s_init, &mut rng);
    traj.seed = Some(seed);
    traj
}

/// Visit-averaged estimators from one trajectory: `ℓ^s(a)` averages
/// `σ_i + γ V_{t−1}^{s_{i+1}}` over steps with `(s_i, a_i) = (s, a)`, `r^s(b)`
/// over `(s_i, b_i) = (s, b)` and `ρ^s` over `s_i = s`. Entries without visits
/// are zero.
pub fn sampled_estimates(game: &MarkovGame, trajectory: &Trajectory, v_prev: &[f64]) -> EstimateTriple {
    let (n, n_a, n_b) = (game.n_states(), game.n_actions_p1(), game.n_actions_p2());
    let gamma = game.gamma();
    let mut ell_sum = vec![vec![0.0; n_a]; n];
    let mut ell_cnt = vec![vec![0u64; n_a]; n];
    let mut r_sum = vec![vec![0.0; n_b]; n];
    let mut r_cnt = vec![vec![0u64; n_b]; n];
    let mut rho_sum = vec![0.0; n];
    let mut rho_cnt = vec![0u64; n];
    for step in &trajectory.steps {
        let target = step.loss + gamma * v_prev[step.next];
        ell_sum[step.state][step.a] += target;
        ell_cnt[step.state][step.a] += 1;
        r_sum[step.state][step.b] += target;
        r_cnt[step.state][step.b] += 1;
        rho_sum[step.state] += target;
        rho_cnt[step.state] += 1;
    }
    let ratio = |sum: f64, cnt: u64| if cnt == 0 { 0.0 } else { sum / cnt as f64 };
    let avg = |sums: Vec<Vec<f64>>, cnts: Vec<Vec<u64>>| -> Vec<Vec<f64>> {
        sums.into_iter().zip(cnts).map(|(s, c)| s.into_iter().zip(c).map(|(a, b)| ratio(a, b)).collect()).collect()
    };
    EstimateTriple {
        ell: avg(ell_sum, ell_cnt),
        r: avg(r_sum, r_cnt),
        rho: rho_sum.into_iter().zip(rho_cnt).map(|(s, c)| ratio(s, c)).collect(),
    }
}

/// Estimator selection for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum EstimatorConfig {
    #[default]
    Exact,
    Sampled {
        rollout_len: usize,
        /// Target accuracy `ε`; exploration uses `ε′ = (1−γ) ε`.
        epsilon: f64,
        /// Restart every rollout here instead of continuing from the last state.
        #[serde(default)]
        reset_state: Option<usize>,
    },
}

#[derive(Debug, Clone)]
pub struct SampledEstimator {
    rollout_len: usize,
    epsilon: f64,
    reset_state: Option<usize>,
    current: usize,
    rng: ChaCha8Rng,
}

/// Stateful source of [`EstimateTriple`]s for a run.
#[derive(Debug, Clone)]
pub enum Estimator {
    Exact,
    Sampled(Box<SampledEstimator>),
}

impl Estimator {
    pub fn exact() -> Self {
        Estimator::Exact
    }

    pub fn sampled(rollout_len: usize, epsilon: f64, reset_state: Option<usize>, seed: u64) -> Self {
        Estimator::Sampled(Box::new(SampledEstimator {
            rollout_len,
            epsilon,
            reset_state,
            current: reset_state.unwrap_or(0),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }))
    }

    pub fn from_config(config: &EstimatorConfig, seed: u64) -> Self {
        match *config {
            EstimatorConfig::Exact => Estimator::exact(),
            EstimatorConfig::Sampled { rollout_len, epsilon, reset_state } => {
                Estimator::sampled(rollout_len, epsilon, reset_state, seed)
            }
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Estimator::Exact)
    }

    pub fn epsilon(&self) -> f64 {
        match self {
            Estimator::Exact => 0.0,
            Estimator::Sampled(s) => s.epsilon,
        }
    }

    /// Estimates for iteration `t` given `Q_t` and the current play policies.
    /// With `fixed_opponent`, Player 2 is a stationary policy and is not
    /// mixed with exploration.
    pub fn estimate(
        &mut self,
        game: &MarkovGame,
        q: &[Matrix],
        critic: &[f64],
        x: &[Vec<f64>],
        y: &[Vec<f64>],
        fixed_opponent: bool,
    ) -> Result<EstimateTriple> {
        match self {
            Estimator::Exact => Ok(estimates_from_q(q, x, y)),
            Estimator::Sampled(s) => {
                if s.rollout_len == 0 {
                    return Err(Error::InvalidArgument("rollout length must be at least 1".into()));
                }
                let epsilon_prime = (1.0 - game.gamma()) * s.epsilon;
                let x_tilde = explore_mix(x, epsilon_prime);
                let y_tilde = if fixed_opponent { y.to_vec() } else { explore_mix(y, epsilon_prime) };
                let start = s.reset_state.unwrap_or(s.current);
                let traj = rollout(game, &x_tilde, &y_tilde, s.rollout_len, start, &mut s.rng);
                s.current = traj.final_state().unwrap_or(start);
                Ok(sampled_estimates(game, &traj, critic))
            }
        }
    }
}

fn snap_ceil(raw: f64) -> f64 {
    let nearest = raw.round();
    if (raw - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest
    } else {
        raw.ceil()
    }
}

/// Rollout length needed for `ε`-accurate estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBudget {
    pub rollout_len: f64,
    pub epsilon: f64,
    pub epsilon_prime: f64,
    pub mu: f64,
    pub c_l: f64,
    pub iterations: f64,
    pub delta: f64,
    pub gamma: f64,
    pub n_actions_p1: usize,
    pub n_actions_p2: usize,
}

/// `L = ⌈c_L (|A|³+|B|³) / ((1−γ) μ ε³) · log²(T/δ)⌉`.
#[allow(clippy::too_many_arguments)]
pub fn plan_sample_budget(
    n_actions_p1: usize,
    n_actions_p2: usize,
    gamma: f64,
    mu: f64,
    epsilon: f64,
    iterations: f64,
    delta: f64,
    c_l: f64,
) -> Result<SampleBudget> {
    if !(mu > 0.0) {
        return Err(Error::MissingMu(mu));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0 / (1.0 - gamma)) {
        return Err(Error::InvalidArgument(format!("epsilon must lie in (0, 1/(1-gamma)], got {epsilon}")));
    }
    if !(delta > 0.0) || !(iterations > 0.0) {
        return Err(Error::InvalidArgument("iterations and delta must be positive".into()));
    }
    let actions = (n_actions_p1.pow(3) + n_actions_p2.pow(3)) as f64;
    let log = (iterations / delta).ln();
    let raw = c_l * actions / ((1.0 - gamma) * mu * epsilon.powi(3)) * log * log;
    Ok(SampleBudget {
        rollout_len: snap_ceil(raw).max(1.0),
        epsilon,
        epsilon_prime: (1.0 - gamma) * epsilon,
        mu,
        c_l,
        iterations,
        delta,
        gamma,
        n_actions_p1,
        n_actions_p2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccuracyTarget {
    /// Running average of the game duality gap.
    AverageGap,
    /// Mean squared distance of the last iterate to the optimal sets.
    LastIterate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyBudget {
    pub target: AccuracyTarget,
    pub xi: f64,
    pub n_states: usize,
    pub gamma: f64,
    pub eta: f64,
    pub c_hat: Option<f64>,
    pub c_t: f64,
    /// Iteration count, logarithmic factors excluded.
    pub iterations: f64,
    /// `ln T`, the factor hidden in the average-gap count.
    pub log_factor: f64,
    pub epsilon: f64,
}

/// Iterations and estimation accuracy for a target accuracy `ξ`.
///
/// * average gap: `T = c_T |S|² / (η² (1−γ)⁴ ξ²)`, `ε = ξ² η (1−γ)⁴ / |S|²`;
/// * last iterate: `T = c_T |S|² / (η⁴ C⁴ (1−γ)⁴ ξ)`, `ε = ξ η C² (1−γ)³`.
///
/// `ε` is capped at `1/(1−γ)`.
pub fn plan_accuracy_budget(
    xi: f64,
    target: AccuracyTarget,
    n_states: usize,
    gamma: f64,
    eta: f64,
    c_hat: Option<f64>,
    c_t: f64,
) -> Result<AccuracyBudget> {
    if !(xi > 0.0) {
        return Err(Error::InvalidArgument(format!("target accuracy must be positive, got {xi}")));
    }
    let s = n_states as f64;
    let h = 1.0 - gamma;
    let (iterations, epsilon) = match target {
        AccuracyTarget::AverageGap => (c_t * s * s / (eta * eta * h.powi(4) * xi * xi), xi * xi * eta * h.powi(4) / (s * s)),
        AccuracyTarget::LastIterate => {
            let c = c_hat
                .filter(|c| *c > 0.0)
                .ok_or_else(|| Error::InvalidArgument("last-iterate planning needs a positive margin estimate".into()))?;
            (c_t * s * s / (eta.powi(4) * c.powi(4) * h.powi(4) * xi), xi * eta * c * c * h.powi(3))
        }
    };
    let iterations = snap_ceil(iterations).max(1.0);
    Ok(AccuracyBudget {
        target,
        xi,
        n_states,
        gamma,
        eta,
        c_hat,
        c_t,
        iterations,
        log_factor: iterations.ln().max(1.0),
        epsilon: epsilon.min(1.0 / h),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuEstimate {
    pub mu: f64,
    pub worst_hitting_time: f64,
    pub probes: usize,
}

/// Expected first-passage times to `target` from every other state of the
/// chain `kernel`, via `(I − P_{−target}) h = 1`.
pub fn hitting_times(kernel: &DMatrix<f64>, target: usize) -> Option<Vec<f64>> {
    let n = kernel.nrows();
    let others: Vec<usize> = (0..n).filter(|&s| s != target).collect();
    let m = others.len();
    let mut system = DMatrix::<f64>::identity(m, m);
    for (i, &s) in others.iter().enumerate() {
        for (j, &k) in others.iter().enumerate() {
            system[(i, j)] -= kernel[(s, k)];
        }
    }
    let h = system.lu().solve(&DVector::from_element(m, 1.0))?;
    let h: Vec<f64> = h.iter().copied().collect();
    h.iter().all(|v| v.is_finite() && *v >= 1.0 - 1e-9).then_some(h)
}

/// Heuristic irreducibility constant: `1 / max` expected hitting time over
/// the uniform policy pair and `n_probes` random stationary pairs. Only the
/// probed pairs are covered, so this can overestimate `μ`.
///
/// Hitting times above `horizon` are treated as a reducible chain.
pub fn estimate_mu(game: &MarkovGame, n_probes: usize, horizon: f64, rng: &mut ChaCha8Rng) -> Result<MuEstimate> {
    let n = game.n_states();
    if n == 1 {
        return Ok(MuEstimate { mu: 1.0, worst_hitting_time: 1.0, probes: 0 });
    }
    let mut worst = 0.0_f64;
    for probe in 0..=n_probes {
        let policy = if probe == 0 {
            JointPolicy::uniform(game)
        } else {
            JointPolicy {
                x: (0..n).map(|_| sample_simplex(rng, game.n_actions_p1())).collect(),
                y: (0..n).map(|_| sample_simplex(rng, game.n_actions_p2())).collect(),
            }
        };
        let (_, kernel) = induced_chain(game, &policy);
        for target in 0..n {
            let h = hitting_times(&kernel, target).ok_or_else(|| Error::Reducible {
                probe,
                detail: format!("state {target} is unreachable from some state"),
            })?;
            let max = h.iter().copied().fold(0.0, f64::max);
            if max > horizon {
                return Err(Error::Reducible {
                    probe,
                    detail: format!("hitting time {max:e} to state {target} exceeds horizon {horizon:e}"),
                });
            }
            worst = worst.max(max);
        }
    }
    Ok(MuEstimate { mu: 1.0 / worst, worst_hitting_time: worst, probes: n_probes + 1 })
}
