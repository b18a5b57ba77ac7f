//! Versioned JSON game files.
//!
//! ```text
//! {
//!   "schema_version": 1,
//!   "n_states": S, "n_actions_p1": A, "n_actions_p2": B,
//!   "gamma": γ,
//!   "loss": [σ(s,a,b) in (s,a,b) row-major order],
//!   "transition": [p(s'|s,a,b) in (s,a,b,s') row-major order],
//!   "generator": {"family": "...", "seed": n, "kappa": κ}   // optional
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so `load ∘ save` is the
//! identity on the in-memory tensors.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::game::{validate_game, MarkovGame, Violation};
use crate::gamegen::GeneratorMeta;

pub const GAME_SCHEMA_VERSION: u32 = 1;

/// A game plus optional provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    pub game: MarkovGame,
    pub generator: Option<GeneratorMeta>,
}

#[derive(Serialize)]
struct GameSpecFile<'a> {
    schema_version: u32,
    n_states: usize,
    n_actions_p1: usize,
    n_actions_p2: usize,
    gamma: f64,
    loss: &'a [f64],
    transition: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    generator: Option<&'a GeneratorMeta>,
}

pub fn game_to_string(spec: &GameSpec) -> String {
    let game = &spec.game;
    let file = GameSpecFile {
        schema_version: GAME_SCHEMA_VERSION,
        n_states: game.n_states(),
        n_actions_p1: game.n_actions_p1(),
        n_actions_p2: game.n_actions_p2(),
        gamma: game.gamma(),
        loss: game.loss_tensor(),
        transition: game.transition_tensor(),
        generator: spec.generator.as_ref(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("game serialization cannot fail");
    text.push('\n');
    text
}

fn field<'a>(root: &'a Value, name: &str) -> Result<&'a Value> {
    root.get(name).ok_or_else(|| Error::Parse { field: name.to_string(), detail: "missing".into() })
}

fn field_f64(root: &Value, name: &str) -> Result<f64> {
    let v = field(root, name)?;
    v.as_f64().ok_or_else(|| Error::Parse { field: name.to_string(), detail: format!("expected a number, got {v}") })
}

fn field_usize(root: &Value, name: &str) -> Result<usize> {
    let v = field(root, name)?;
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| Error::Parse { field: name.to_string(), detail: format!("expected a non-negative integer, got {v}") })
}

fn field_array(root: &Value, name: &str) -> Result<Vec<f64>> {
    let v = field(root, name)?;
    let arr = v
        .as_array()
        .ok_or_else(|| Error::Parse { field: name.to_string(), detail: "expected an array".into() })?;
    arr.iter()
        .enumerate()
        .map(|(i, x)| {
            x.as_f64().ok_or_else(|| Error::Parse {
                field: format!("{name}[{i}]"),
                detail: format!("expected a number, got {x}"),
            })
        })
        .collect()
}

/// Parses and validates a game file's contents.
pub fn game_from_str(text: &str) -> Result<GameSpec> {
    let root: Value = serde_json::from_str(text)
        .map_err(|e| Error::Parse { field: "<document>".into(), detail: format!("line {}, column {}: {e}", e.line(), e.column()) })?;
    let version = field(&root, "schema_version")?
        .as_u64()
        .ok_or_else(|| Error::Parse { field: "schema_version".into(), detail: "expected an integer".into() })?;
    if version != GAME_SCHEMA_VERSION as u64 {
        return Err(Error::SchemaVersion { expected: GAME_SCHEMA_VERSION, found: version });
    }
    let n_states = field_usize(&root, "n_states")?;
    let n_a = field_usize(&root, "n_actions_p1")?;
    let n_b = field_usize(&root, "n_actions_p2")?;
    let gamma = field_f64(&root, "gamma")?;
    let loss = field_array(&root, "loss")?;
    let transition = field_array(&root, "transition")?;
    let generator = match root.get("generator") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            serde_json::from_value(v.clone())
                .map_err(|e| Error::Parse { field: "generator".into(), detail: e.to_string() })?,
        ),
    };

    let n_joint = n_states * n_a * n_b;
    let mut shape = Vec::new();
    if loss.len() != n_joint {
        shape.push(Violation::Shape { field: "loss", expected: n_joint, found: loss.len() });
    }
    if transition.len() != n_joint * n_states {
        shape.push(Violation::Shape { field: "transition", expected: n_joint * n_states, found: transition.len() });
    }
    if !shape.is_empty() {
        return Err(Error::InvalidGame(shape));
    }
    let game = MarkovGame::new(n_states, n_a, n_b, loss, transition, gamma)?;
    validate_game(&game).into_result_allowing_low_gamma()?;
    Ok(GameSpec { game, generator })
}

pub fn save_game_spec(spec: &GameSpec, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, game_to_string(spec))?;
    Ok(())
}

pub fn save_game(game: &MarkovGame, path: impl AsRef<Path>) -> Result<()> {
    save_game_spec(&GameSpec { game: game.clone(), generator: None }, path)
}

pub fn load_game_spec(path: impl AsRef<Path>) -> Result<GameSpec> {
    game_from_str(&std::fs::read_to_string(path)?)
}

pub fn load_game(path: impl AsRef<Path>) -> Result<MarkovGame> {
    Ok(load_game_spec(path)?.game)
}
