use thiserror::Error;

use crate::game::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid game: {}", join_violations(.0))]
    InvalidGame(Vec<Violation>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("linear program failed ({reason}) on matrix {matrix:?}")]
    LinearProgram { reason: String, matrix: Vec<Vec<f64>> },

    #[error("shapley iteration did not converge within {iterations} iterations (last residual {residual:e})")]
    IterationCap { iterations: usize, residual: f64 },

    #[error("projection onto optimal set failed: {0}")]
    Projection(String),

    #[error("game appears fully optimal: no sampled policy lies outside the optimal sets")]
    FullyOptimal,

    #[error("non-finite estimate at state {state}: {what}")]
    NonFinite { state: usize, what: &'static str },

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("irreducibility constant required (mu must be > 0, got {0})")]
    MissingMu(f64),

    #[error("reducible chain under probe policy pair #{probe}: {detail}")]
    Reducible { probe: usize, detail: String },

    #[error("parse error in field `{field}`: {detail}")]
    Parse { field: String, detail: String },

    #[error("schema version mismatch: expected {expected}, found {found}")]
    SchemaVersion { expected: u32, found: u64 },

    #[error("unknown builtin game `{0}` (known: mp1, const, chain2, switching-mp)")]
    UnknownBuiltin(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}
