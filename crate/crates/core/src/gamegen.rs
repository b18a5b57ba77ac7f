//! Seeded benchmark games and the built-in fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::MarkovGame;
use crate::sampling::sample_simplex;

pub const DEFAULT_KAPPA: f64 = 0.05;

pub const BUILTIN_NAMES: [&str; 4] = ["mp1", "const", "chain2", "switching-mp"];

/// Where a game came from; stored alongside it on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMeta {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

/// Random game with i.i.d. uniform losses and Dirichlet(1) transitions
/// mixed with the uniform kernel: `p = (1−κ) raw + κ/|S|`. Any `κ > 0`
/// makes every induced chain irreducible.
pub fn random_game(seed: u64, n_states: usize, n_a: usize, n_b: usize, gamma: f64, kappa: f64) -> Result<MarkovGame> {
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::InvalidArgument(format!("kappa must lie in (0, 1], got {kappa}")));
    }
    if n_states == 0 || n_a == 0 || n_b == 0 {
        return Err(Error::InvalidArgument("dimensions must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_joint = n_states * n_a * n_b;
    let loss: Vec<f64> = (0..n_joint).map(|_| rng.random::<f64>()).collect();
    let floor = kappa / n_states as f64;
    let mut transition = Vec::with_capacity(n_joint * n_states);
    for _ in 0..n_joint {
        let raw = sample_simplex(&mut rng, n_states);
        transition.extend(raw.into_iter().map(|p| (1.0 - kappa) * p + floor));
    }
    MarkovGame::new(n_states, n_a, n_b, loss, transition, gamma)
}

/// Default discount of each fixture.
pub fn builtin_default_gamma(name: &str) -> Result<f64> {
    match name {
        "mp1" | "switching-mp" => Ok(0.9),
        "const" | "chain2" => Ok(0.5),
        _ => Err(Error::UnknownBuiltin(name.to_string())),
    }
}

/// Built-in fixtures:
///
/// * `mp1`: one state, matching pennies `σ = [[1,0],[0,1]]`;
/// * `const`: one state, one action each, `σ = 0.4`;
/// * `chain2`: two states, one action each; state 0 costs 1 and moves to
///   state 1, which costs 0 and loops;
/// * `switching-mp`: two states hosting pennies-style games,
///   `σ⁰ = [[1,0],[0,1]]` and `σ¹ = [[1,0.2],[0,0.6]]`. Player 1 loses on the
///   diagonal; whenever it loses the state switches, otherwise it stays,
///   mixed with the uniform kernel at `κ = 0.1`.
pub fn builtin(name: &str, gamma: Option<f64>) -> Result<MarkovGame> {
    let gamma = match gamma {
        Some(g) => g,
        None => builtin_default_gamma(name)?,
    };
    match name {
        "mp1" => MarkovGame::new(1, 2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![1.0; 4], gamma),
        "const" => MarkovGame::new(1, 1, 1, vec![0.4], vec![1.0], gamma),
        "chain2" => MarkovGame::new(2, 1, 1, vec![1.0, 0.0], vec![0.0, 1.0, 0.0, 1.0], gamma),
        "switching-mp" => {
            let kappa = 0.1;
            let loss = vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.2, 0.0, 0.6];
            let mut transition = Vec::with_capacity(16);
            for s in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        let target = if a == b { 1 - s } else { s };
                        for next in 0..2 {
                            let det = if next == target { 1.0 } else { 0.0 };
                            transition.push((1.0 - kappa) * det + kappa / 2.0);
                        }
                    }
                }
            }
            MarkovGame::new(2, 2, 2, loss, transition, gamma)
        }
        _ => Err(Error::UnknownBuiltin(name.to_string())),
    }
}
