use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use mogda::estimator::{estimate_mu, plan_accuracy_budget, plan_sample_budget, AccuracyTarget};
use mogda::experiment::{
    default_output_dir, load_opponent, random_opponent, run_experiment, run_rational_experiment, ExperimentConfig,
    MetricsTable,
};
use mogda::gamegen::{builtin, random_game, GeneratorMeta, DEFAULT_KAPPA};
use mogda::ground_truth::{margin_constant_estimate, shapley_solve, ShapleyOptions};
use mogda::io::{load_game, save_game_spec, GameSpec};
use mogda::learner::eta_max;
use mogda::plot::plot_tables;
use mogda::Error;

/// Optimistic gradient descent/ascent with a slow critic for zero-sum
/// Markov games.
///
/// Exit codes: 0 success, 1 usage error, 2 runtime error.
#[derive(Debug, Parser)]
#[command(name = "mogda", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a game file from a builtin fixture or the random generator.
    Gen(GenArgs),
    /// Solve a game by Shapley iteration; write V*/Q* next to it and print V*.
    Solve(SolveArgs),
    /// Run self-play from an experiment config; one CSV per seed plus an aggregate.
    Run(RunArgs),
    /// Run a single learner against a fixed opponent policy.
    Rational(RationalArgs),
    /// Draw log-y SVG line charts from metric CSV files.
    Plot(PlotArgs),
    /// Print sample or iteration budgets.
    #[command(subcommand)]
    Plan(PlanCommand),
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Builtin fixture (mp1, const, chain2, switching-mp) instead of a random game.
    #[arg(long)]
    builtin: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    states: usize,
    #[arg(long, default_value_t = 2)]
    actions_p1: usize,
    #[arg(long, default_value_t = 2)]
    actions_p2: usize,
    /// Discount; defaults to 0.9 for random games and the fixture's own value otherwise.
    #[arg(long)]
    gamma: Option<f64>,
    /// Weight of the uniform kernel mixed into random transitions.
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: f64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct GameSelector {
    /// Game file.
    #[arg(long)]
    game: Option<PathBuf>,
    /// Builtin fixture name.
    #[arg(long)]
    builtin: Option<String>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    source: GameSelector,
    /// Overrides the discount of a builtin fixture.
    #[arg(long, requires = "builtin")]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Solution file; defaults to `<game>.solution.json`, or the output
    /// directory for builtins.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Output directory; falls back to the config, then $MOGDA_OUT_DIR, then ./mogda-out.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RationalArgs {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Opponent policy file: {"y": [[...], ...]}.
    #[arg(long, conflicts_with = "random_opponent", required_unless_present = "random_opponent")]
    opponent: Option<PathBuf>,
    /// Draw a random stationary opponent from this seed.
    #[arg(long)]
    random_opponent: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Metric CSV files.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Column to draw; repeat for several.
    #[arg(long = "column", default_value = "mean_dist_sq")]
    columns: Vec<String>,
    #[arg(long, default_value = "convergence")]
    title: String,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Subcommand)]
enum PlanCommand {
    /// Rollout length per iteration.
    Samples(PlanSamplesArgs),
    /// Iteration count and estimation accuracy for a target accuracy.
    Accuracy(PlanAccuracyArgs),
}

#[derive(Debug, Args)]
struct PlanSamplesArgs {
    #[arg(long)]
    actions_p1: Option<usize>,
    #[arg(long)]
    actions_p2: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Irreducibility constant; estimated from --game when omitted.
    #[arg(long)]
    mu: Option<f64>,
    /// Game file supplying dimensions, discount and a heuristic mu.
    #[arg(long)]
    game: Option<PathBuf>,
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    iterations: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    c_l: f64,
    /// Random policy pairs probed when estimating mu.
    #[arg(long, default_value_t = 32)]
    probes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TargetArg {
    AverageGap,
    LastIterate,
}

#[derive(Debug, Args)]
struct PlanAccuracyArgs {
    #[arg(long)]
    xi: f64,
    #[arg(long, value_enum)]
    target: TargetArg,
    #[arg(long)]
    states: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Step size; the strict bound eta_max is used when omitted.
    #[arg(long)]
    eta: Option<f64>,
    /// Margin constant C; estimated from --game when omitted.
    #[arg(long)]
    c_hat: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    c_t: f64,
    #[arg(long)]
    game: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_)
            | Error::Parse { .. }
            | Error::SchemaVersion { .. }
            | Error::UnknownBuiltin(_)
            | Error::InvalidGame(_)
            | Error::Dimension(_)
            | Error::MissingMu(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Gen(args) => gen(args),
        Command::Solve(args) => solve(args),
        Command::Run(args) => run(args),
        Command::Rational(args) => rational(args),
        Command::Plot(args) => plot(args),
        Command::Plan(PlanCommand::Samples(args)) => plan_samples(args),
        Command::Plan(PlanCommand::Accuracy(args)) => plan_accuracy(args),
    }
}

fn gen(args: GenArgs) -> Result<(), Failure> {
    let spec = match &args.builtin {
        Some(name) => GameSpec {
            game: builtin(name, args.gamma)?,
            generator: Some(GeneratorMeta { family: name.clone(), seed: None, kappa: None }),
        },
        None => GameSpec {
            game: random_game(
                args.seed,
                args.states,
                args.actions_p1,
                args.actions_p2,
                args.gamma.unwrap_or(0.9),
                args.kappa,
            )?,
            generator: Some(GeneratorMeta { family: "random".into(), seed: Some(args.seed), kappa: Some(args.kappa) }),
        },
    };
    save_game_spec(&spec, &args.output)?;
    eprintln!("wrote {}", args.output.display());
    Ok(())
}

#[derive(Serialize)]
struct SolutionFile {
    schema_version: u32,
    tol: f64,
    iterations: usize,
    v_star: Vec<f64>,
    q_star: Vec<Vec<Vec<f64>>>,
    x_star: Vec<Vec<f64>>,
    y_star: Vec<Vec<f64>>,
}

fn solve(args: SolveArgs) -> Result<(), Failure> {
    let (game, default_out) = match (&args.source.game, &args.source.builtin) {
        (Some(path), _) => {
            let mut out = path.clone().into_os_string();
            out.push(".solution.json");
            (load_game(path)?, PathBuf::from(out))
        }
        (None, Some(name)) => (builtin(name, args.gamma)?, default_output_dir().join(format!("{name}.solution.json"))),
        (None, None) => return Err(usage("one of --game or --builtin is required")),
    };
    if args.tol.is_nan() || args.tol <= 0.0 {
        return Err(usage("--tol must be positive"));
    }
    let truth = shapley_solve(&game, ShapleyOptions::new(args.tol))?;
    let output = args.output.unwrap_or(default_out);
    let policy = truth.witness_policy();
    let file = SolutionFile {
        schema_version: 1,
        tol: truth.tol,
        iterations: truth.iterations,
        v_star: truth.v_star.clone(),
        q_star: truth.q_star.iter().map(|q| q.to_rows()).collect(),
        x_star: policy.x,
        y_star: policy.y,
    };
    write_file(&output, &(serde_json::to_string_pretty(&file).expect("serializable") + "\n"))?;
    for (s, v) in truth.v_star.iter().enumerate() {
        println!("V*[{s}] = {v:.10}");
    }
    eprintln!("wrote {}", output.display());
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(Error::from)?;
    }
    std::fs::write(path, contents).map_err(Error::from)?;
    Ok(())
}

fn resolve_out_dir(flag: Option<PathBuf>, config: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| config.output_dir.clone()).unwrap_or_else(default_output_dir)
}

fn report(output: &mogda::experiment::ExperimentOutput) {
    for path in &output.repetition_files {
        println!("{}", path.display());
    }
    println!("{}", output.aggregate_file.display());
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let config = ExperimentConfig::load(&args.config)?;
    let out_dir = resolve_out_dir(args.out_dir, &config);
    report(&run_experiment(&config, &out_dir)?);
    Ok(())
}

fn rational(args: RationalArgs) -> Result<(), Failure> {
    let config = ExperimentConfig::load(&args.config)?;
    let opponent = match (&args.opponent, args.random_opponent) {
        (Some(path), _) => load_opponent(path)?,
        (None, Some(seed)) => random_opponent(&config.game.resolve()?, seed),
        (None, None) => return Err(usage("one of --opponent or --random-opponent is required")),
    };
    let out_dir = resolve_out_dir(args.out_dir, &config);
    report(&run_rational_experiment(&config, &opponent, &out_dir)?);
    Ok(())
}

fn plot(args: PlotArgs) -> Result<(), Failure> {
    let mut tables = Vec::with_capacity(args.files.len());
    for path in &args.files {
        let table = MetricsTable::load(path)?;
        if table.rows.is_empty() {
            return Err(usage(format!("{}: no data rows", path.display())));
        }
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        tables.push((name, table));
    }
    let svg = plot_tables(&tables, &args.columns, &args.title)?;
    write_file(&args.output, &svg)?;
    eprintln!("wrote {}", args.output.display());
    Ok(())
}

fn print_json(value: &impl Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn plan_samples(args: PlanSamplesArgs) -> Result<(), Failure> {
    let game = args.game.as_ref().map(load_game).transpose()?;
    let pick = |flag: Option<usize>, from_game: Option<usize>, name: &str| {
        flag.or(from_game).ok_or_else(|| usage(format!("--{name} or --game is required")))
    };
    let n_a = pick(args.actions_p1, game.as_ref().map(|g| g.n_actions_p1()), "actions-p1")?;
    let n_b = pick(args.actions_p2, game.as_ref().map(|g| g.n_actions_p2()), "actions-p2")?;
    let gamma = args
        .gamma
        .or(game.as_ref().map(|g| g.gamma()))
        .ok_or_else(|| usage("--gamma or --game is required"))?;
    let mu = match (args.mu, &game) {
        (Some(mu), _) => mu,
        (None, Some(game)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            let estimate = estimate_mu(game, args.probes, 1e12, &mut rng)?;
            eprintln!("heuristic mu = {} from {} probes", estimate.mu, estimate.probes);
            estimate.mu
        }
        (None, None) => return Err(Error::MissingMu(f64::NAN).into()),
    };
    print_json(&plan_sample_budget(n_a, n_b, gamma, mu, args.epsilon, args.iterations, args.delta, args.c_l)?);
    Ok(())
}

fn plan_accuracy(args: PlanAccuracyArgs) -> Result<(), Failure> {
    let game = args.game.as_ref().map(load_game).transpose()?;
    let n_states = args
        .states
        .or(game.as_ref().map(|g| g.n_states()))
        .ok_or_else(|| usage("--states or --game is required"))?;
    let gamma = args
        .gamma
        .or(game.as_ref().map(|g| g.gamma()))
        .ok_or_else(|| usage("--gamma or --game is required"))?;
    let eta = args.eta.unwrap_or_else(|| eta_max(gamma, n_states));
    let target = match args.target {
        TargetArg::AverageGap => AccuracyTarget::AverageGap,
        TargetArg::LastIterate => AccuracyTarget::LastIterate,
    };
    let c_hat = match (args.c_hat, &game, target) {
        (Some(c), _, _) => Some(c),
        (None, Some(game), AccuracyTarget::LastIterate) => {
            let truth = shapley_solve(game, ShapleyOptions::default())?;
            let c = margin_constant_estimate(&truth, args.samples, args.seed)?;
            eprintln!("heuristic margin constant C = {c} from {} samples", args.samples);
            Some(c)
        }
        _ => None,
    };
    print_json(&plan_accuracy_budget(args.xi, target, n_states, gamma, eta, c_hat, args.c_t)?);
    Ok(())
}
