//! Experiment configs, seeded repetitions and the CSV metric files.
//!
//! Every metric file starts with a block of `#` comment lines (schema
//! version, run kind, game, seeds, config hash, library version) followed by
//! one header line and one row per logged iteration. Empty cells mean "not
//! recorded". Column order is fixed by [`METRICS_COLUMNS`] and
//! [`RATIONALITY_COLUMNS`]; aggregate files use `t` followed by
//! `<column>_median`, `<column>_q1`, `<column>_q3` for every other column.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimator::Estimator;
use crate::game::{MarkovGame, StatePolicy};
use crate::gamegen::{builtin, random_game, DEFAULT_KAPPA};
use crate::ground_truth::{shapley_solve, GroundTruth, ShapleyOptions};
use crate::io::load_game;
use crate::learner::{reduce_game_for_opponent, run_selfplay, run_single_player, RunConfig};
use crate::metrics::{
    LogSchedule, MetricsRecorder, RationalityRecorder, METRICS_COLUMNS, RATIONALITY_COLUMNS,
};
use crate::sampling::sample_simplex;

pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "MOGDA_OUT_DIR";

pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("mogda-out"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum GameSource {
    Builtin {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
    },
    File {
        path: PathBuf,
    },
    Random {
        seed: u64,
        n_states: usize,
        n_actions_p1: usize,
        n_actions_p2: usize,
        gamma: f64,
        #[serde(default = "default_kappa")]
        kappa: f64,
    },
}

fn default_kappa() -> f64 {
    DEFAULT_KAPPA
}

impl GameSource {
    pub fn resolve(&self) -> Result<MarkovGame> {
        match self {
            GameSource::Builtin { name, gamma } => builtin(name, *gamma),
            GameSource::File { path } => load_game(path),
            GameSource::Random { seed, n_states, n_actions_p1, n_actions_p2, gamma, kappa } => {
                random_game(*seed, *n_states, *n_actions_p1, *n_actions_p2, *gamma, *kappa)
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            GameSource::Builtin { name, gamma: Some(g) } => format!("builtin:{name} gamma={g}"),
            GameSource::Builtin { name, gamma: None } => format!("builtin:{name}"),
            GameSource::File { path } => format!("file:{}", path.display()),
            GameSource::Random { seed, n_states, n_actions_p1, n_actions_p2, gamma, kappa } => format!(
                "random seed={seed} states={n_states} actions={n_actions_p1}x{n_actions_p2} gamma={gamma} kappa={kappa}"
            ),
        }
    }
}

/// TOML experiment description.
///
/// ```toml
/// name = "mp1"
/// repetitions = 3          # seeds run.seed, run.seed+1, ...
/// # seeds = [4, 8, 15]     # or an explicit list
///
/// [game]
/// source = "builtin"
/// name = "mp1"
///
/// [run]
/// iterations = 1000
/// eta = 0.05
/// metric_cadence = 10
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub game: GameSource,
    pub run: RunConfig,
    #[serde(default = "default_truth_tol")]
    pub truth_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
}

fn default_name() -> String {
    "run".to_string()
}

fn default_truth_tol() -> f64 {
    1e-8
}

fn default_repetitions() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(game: GameSource, run: RunConfig) -> Self {
        Self {
            name: default_name(),
            game,
            run,
            truth_tol: default_truth_tol(),
            output_dir: None,
            repetitions: default_repetitions(),
            seeds: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self =
            toml::from_str(text).map_err(|e| Error::Parse { field: "<config>".into(), detail: e.to_string() })?;
        config.check()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn check(&self) -> Result<()> {
        self.run.check()?;
        if self.seed_list().is_empty() {
            return Err(Error::InvalidArgument("at least one repetition is required".into()));
        }
        if !(self.truth_tol > 0.0) {
            return Err(Error::InvalidArgument(format!("truth_tol must be positive, got {}", self.truth_tol)));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::InvalidArgument(format!("invalid experiment name {:?}", self.name)));
        }
        Ok(())
    }

    pub fn seed_list(&self) -> Vec<u64> {
        match &self.seeds {
            Some(seeds) => seeds.clone(),
            None => (0..self.repetitions as u64).map(|k| self.run.seed.wrapping_add(k)).collect(),
        }
    }

    /// SHA-256 of the canonical JSON form of the config.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialization cannot fail");
        hex(&Sha256::digest(canonical.as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Parsed metric file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsTable {
    /// Comment lines without the leading `# `.
    pub metadata: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl MetricsTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// `(t, value)` pairs of a column, skipping empty cells.
    pub fn series(&self, name: &str) -> Option<Vec<(f64, f64)>> {
        let idx = self.column(name)?;
        Some(self.rows.iter().filter_map(|row| Some((row[0]?, row[idx]?))).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for line in &self.metadata {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| c.map(format_cell).unwrap_or_default()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let metadata = text
            .lines()
            .take_while(|l| l.starts_with('#'))
            .map(|l| l.trim_start_matches('#').trim_start().to_string())
            .collect();
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Parse { field: "<csv header>".into(), detail: e.to_string() })?
            .iter()
            .map(str::to_string)
            .collect();
        if header.is_empty() || header.iter().all(String::is_empty) {
            return Err(Error::Parse { field: "<csv header>".into(), detail: "missing".into() });
        }
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Parse { field: format!("row {}", i + 1), detail: e.to_string() })?;
            let row = record
                .iter()
                .zip(&header)
                .map(|(cell, name)| {
                    if cell.is_empty() {
                        Ok(None)
                    } else {
                        cell.parse::<f64>().map(Some).map_err(|e| Error::Parse {
                            field: format!("row {} column {name}", i + 1),
                            detail: e.to_string(),
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Self { metadata, header, rows })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

fn format_cell(v: f64) -> String {
    format!("{v}")
}

/// Median, first and third quartiles with linear interpolation between
/// order statistics. `values` must be non-empty.
pub fn quartiles(values: &[f64]) -> (f64, f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let at = |p: f64| {
        let h = (sorted.len() - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    };
    (at(0.5), at(0.25), at(0.75))
}

/// Aggregates per-repetition tables logged at the same iterations.
pub fn aggregate(tables: &[MetricsTable], metadata: Vec<String>) -> Result<MetricsTable> {
    let first = tables.first().ok_or_else(|| Error::InvalidArgument("nothing to aggregate".into()))?;
    for (k, table) in tables.iter().enumerate() {
        if table.header != first.header {
            return Err(Error::InvalidArgument(format!("repetition {k} has a different header")));
        }
        let same_t = table.rows.len() == first.rows.len()
            && table.rows.iter().zip(&first.rows).all(|(a, b)| a[0] == b[0]);
        if !same_t {
            return Err(Error::InvalidArgument(format!("repetition {k} logs different iterations")));
        }
    }
    let mut header = vec![first.header[0].clone()];
    for name in &first.header[1..] {
        header.extend(["median", "q1", "q3"].iter().map(|stat| format!("{name}_{stat}")));
    }
    let rows = (0..first.rows.len())
        .map(|i| {
            let mut row = vec![first.rows[i][0]];
            for c in 1..first.header.len() {
                let values: Vec<f64> = tables.iter().filter_map(|t| t.rows[i][c]).collect();
                if values.is_empty() {
                    row.extend([None, None, None]);
                } else {
                    let (m, q1, q3) = quartiles(&values);
                    row.extend([Some(m), Some(q1), Some(q3)]);
                }
            }
            row
        })
        .collect();
    Ok(MetricsTable { metadata, header, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    SelfPlay,
    Rational,
}

impl RunKind {
    fn label(self) -> &'static str {
        match self {
            RunKind::SelfPlay => "selfplay",
            RunKind::Rational => "rational",
        }
    }
}

fn metadata(config: &ExperimentConfig, kind: RunKind, seeds: &str) -> Vec<String> {
    vec![
        format!("mogda metrics schema {CSV_SCHEMA_VERSION}"),
        format!("kind: {}", kind.label()),
        format!("name: {}", config.name),
        format!("game: {}", config.game.describe()),
        format!("estimator: {}", serde_json::to_string(&config.run.estimator).expect("serializable")),
        format!("seeds: {seeds}"),
        format!("config_sha256: {}", config.hash()),
        format!("version: mogda {}", env!("CARGO_PKG_VERSION")),
    ]
}

fn join_seeds(seeds: &[u64]) -> String {
    seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(" ")
}

/// Files written by one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub repetition_files: Vec<PathBuf>,
    pub aggregate_file: PathBuf,
    pub tables: Vec<MetricsTable>,
    pub aggregate: MetricsTable,
}

fn repetition_config(config: &ExperimentConfig, seed: u64) -> RunConfig {
    RunConfig { seed, ..config.run.clone() }
}

fn selfplay_table(config: &ExperimentConfig, game: &MarkovGame, truth: &GroundTruth, seed: u64) -> Result<MetricsTable> {
    let run = repetition_config(config, seed);
    let mut estimator = Estimator::from_config(&run.estimator, seed);
    let mut recorder = MetricsRecorder::new(game, truth, LogSchedule::from_config(&run), estimator.epsilon());
    run_selfplay(game, &run, &mut estimator, &mut recorder)?;
    Ok(MetricsTable {
        metadata: metadata(config, RunKind::SelfPlay, &seed.to_string()),
        header: METRICS_COLUMNS.iter().map(|s| s.to_string()).collect(),
        rows: recorder.rows.iter().map(|r| r.values()).collect(),
    })
}

fn rational_table(
    config: &ExperimentConfig,
    game: &MarkovGame,
    opponent: &StatePolicy,
    reduced_truth: &GroundTruth,
    seed: u64,
) -> Result<MetricsTable> {
    let run = repetition_config(config, seed);
    let mut estimator = Estimator::from_config(&run.estimator, seed);
    let mut recorder =
        RationalityRecorder::new(game, opponent, reduced_truth, LogSchedule::from_config(&run), estimator.epsilon())?;
    run_single_player(game, opponent, &run, &mut estimator, &mut recorder)?;
    Ok(MetricsTable {
        metadata: metadata(config, RunKind::Rational, &seed.to_string()),
        header: RATIONALITY_COLUMNS.iter().map(|s| s.to_string()).collect(),
        rows: recorder.rows.iter().map(|r| r.values()).collect(),
    })
}

fn write_outputs(
    config: &ExperimentConfig,
    kind: RunKind,
    out_dir: &Path,
    seeds: &[u64],
    tables: Vec<MetricsTable>,
) -> Result<ExperimentOutput> {
    std::fs::create_dir_all(out_dir)?;
    let prefix = match kind {
        RunKind::SelfPlay => config.name.clone(),
        RunKind::Rational => format!("{}_rational", config.name),
    };
    let mut repetition_files = Vec::with_capacity(seeds.len());
    for (seed, table) in seeds.iter().zip(&tables) {
        let path = out_dir.join(format!("{prefix}_seed{seed}.csv"));
        std::fs::write(&path, table.to_csv())?;
        repetition_files.push(path);
    }
    let aggregate = aggregate(&tables, metadata(config, kind, &join_seeds(seeds)))?;
    let aggregate_file = out_dir.join(format!("{prefix}_aggregate.csv"));
    std::fs::write(&aggregate_file, aggregate.to_csv())?;
    Ok(ExperimentOutput { repetition_files, aggregate_file, tables, aggregate })
}

fn solve_truth(game: &MarkovGame, tol: f64) -> Result<GroundTruth> {
    shapley_solve(game, ShapleyOptions::new(tol))
}

/// Runs every repetition of a self-play experiment in parallel and writes
/// the per-seed and aggregate CSV files to `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutput> {
    config.check()?;
    let game = config.game.resolve()?;
    let truth = solve_truth(&game, config.truth_tol)?;
    let seeds = config.seed_list();
    let tables = seeds
        .par_iter()
        .map(|&seed| selfplay_table(config, &game, &truth, seed))
        .collect::<Result<Vec<_>>>()?;
    write_outputs(config, RunKind::SelfPlay, out_dir, &seeds, tables)
}

/// Single-player counterpart of [`run_experiment`] against a fixed opponent.
pub fn run_rational_experiment(
    config: &ExperimentConfig,
    opponent: &StatePolicy,
    out_dir: &Path,
) -> Result<ExperimentOutput> {
    config.check()?;
    let game = config.game.resolve()?;
    let reduced = reduce_game_for_opponent(&game, opponent)?;
    let reduced_truth = solve_truth(&reduced, config.truth_tol)?;
    let seeds = config.seed_list();
    let tables = seeds
        .par_iter()
        .map(|&seed| rational_table(config, &game, opponent, &reduced_truth, seed))
        .collect::<Result<Vec<_>>>()?;
    write_outputs(config, RunKind::Rational, out_dir, &seeds, tables)
}

/// Opponent policy file: `{"y": [[...], ...]}`, one distribution per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpponentFile {
    pub y: StatePolicy,
}

pub fn load_opponent(path: impl AsRef<Path>) -> Result<StatePolicy> {
    let text = std::fs::read_to_string(path)?;
    let file: OpponentFile = serde_json::from_str(&text)
        .map_err(|e| Error::Parse { field: "y".into(), detail: format!("line {}, column {}: {e}", e.line(), e.column()) })?;
    Ok(file.y)
}

/// Uniformly random stationary policy for Player 2.
pub fn random_opponent(game: &MarkovGame, seed: u64) -> StatePolicy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..game.n_states()).map(|_| sample_simplex(&mut rng, game.n_actions_p2())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_interpolate() {
        assert_eq!(quartiles(&[3.0]), (3.0, 3.0, 3.0));
        assert_eq!(quartiles(&[4.0, 1.0, 3.0, 2.0]), (2.5, 1.75, 3.25));
        assert_eq!(quartiles(&[5.0, 1.0, 3.0]), (3.0, 2.0, 4.0));
    }

    #[test]
    fn config_parses_from_toml() {
        let text = r#"
name = "mp"
seeds = [3, 5]

[game]
source = "builtin"
name = "mp1"
gamma = 0.9

[run]
iterations = 50
eta = "auto"
metric_cadence = 5

[run.estimator]
mode = "sampled"
rollout_len = 100
epsilon = 0.1
"#;
        let config = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(config.seed_list(), vec![3, 5]);
        assert_eq!(config.run.eta, crate::learner::EtaSetting::AUTO);
        assert_eq!(config.hash().len(), 64);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "[game]\nsource = \"builtin\"\nname = \"mp1\"\n[run]\niterations = 5\nbogus = 1\n";
        assert!(ExperimentConfig::from_toml_str(text).is_err());
    }

    #[test]
    fn zero_repetitions_rejected() {
        let mut config = ExperimentConfig::new(
            GameSource::Builtin { name: "const".into(), gamma: None },
            RunConfig::new(10),
        );
        config.repetitions = 0;
        assert!(config.check().is_err());
    }

    #[test]
    fn csv_round_trips() {
        let table = MetricsTable {
            metadata: vec!["a".into(), "b: c".into()],
            header: vec!["t".into(), "x".into(), "y".into()],
            rows: vec![vec![Some(1.0), Some(0.1), None], vec![Some(2.0), Some(1e-300), Some(-3.5)]],
        };
        assert_eq!(MetricsTable::parse(&table.to_csv()).unwrap(), table);
    }
}
