use std::path::Path;
use std::process::{Command, Output};

fn mogda(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mogda"))
        .args(args)
        .env("MOGDA_OUT_DIR", out_dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("exp.toml");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn solve_mp1_prints_value() {
    let dir = tempfile::tempdir().unwrap();
    let o = mogda(&["solve", "--builtin", "mp1", "--gamma", "0.9"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let line = stdout(&o).lines().next().unwrap().to_string();
    let value: f64 = line.strip_prefix("V*[0] = ").unwrap().parse().unwrap();
    assert!((value - 5.0).abs() < 1e-8, "{line}");
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("mp1.solution.json")).unwrap()).unwrap();
    assert_eq!(sidecar["x_star"][0].as_array().unwrap().len(), 2);
}

#[test]
fn gen_then_solve_file() {
    let dir = tempfile::tempdir().unwrap();
    let game = dir.path().join("g.json");
    let game_arg = game.to_string_lossy().into_owned();
    let o = mogda(
        &["gen", "--seed", "3", "--states", "3", "--actions-p1", "2", "--actions-p2", "3", "--gamma", "0.8", "-o", &game_arg],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = mogda(&["solve", "--game", &game_arg], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 3);
    assert!(dir.path().join("g.json.solution.json").exists());
}

#[test]
fn run_const_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "name = \"c\"\n[game]\nsource = \"builtin\"\nname = \"const\"\n[run]\niterations = 100\nmetric_cadence = 10\n",
    );
    let o = mogda(&["run", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = dir.path().join("c_seed0.csv");
    let text = std::fs::read_to_string(&csv).unwrap();
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 1 + 10);
    assert!(data[0].starts_with("t,game_duality_gap,"));
    assert!(dir.path().join("c_aggregate.csv").exists());

    let svg = dir.path().join("c.svg");
    let svg_arg = svg.to_string_lossy().into_owned();
    let args = ["plot", csv.to_str().unwrap(), "--column", "gamma_t", "--column", "critic_max", "-o", &svg_arg];
    let o = mogda(&args, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let first = std::fs::read(&svg).unwrap();
    assert!(String::from_utf8_lossy(&first).starts_with("<svg"));
    mogda(&args, dir.path());
    assert_eq!(std::fs::read(&svg).unwrap(), first);
}

#[test]
fn plot_empty_csv_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let o = mogda(&["plot", empty.to_str().unwrap(), "-o", "x.svg"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let header_only = dir.path().join("header.csv");
    std::fs::write(&header_only, "# meta\nt,gamma_t\n").unwrap();
    let o = mogda(&["plot", header_only.to_str().unwrap(), "-o", "x.svg"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no data rows"));
}

#[test]
fn rational_with_random_opponent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "name = \"r\"\n[game]\nsource = \"builtin\"\nname = \"switching-mp\"\n[run]\niterations = 200\nmetric_cadence = 50\n",
    );
    let o = mogda(&["rational", &cfg, "--random-opponent", "2"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("r_rational_seed0.csv").exists());

    let opp = dir.path().join("opp.json");
    std::fs::write(&opp, r#"{"y": [[0.5, 0.5], [1.0, 0.0]]}"#).unwrap();
    let o = mogda(&["rational", &cfg, "--opponent", opp.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn plan_prints_budgets() {
    let dir = tempfile::tempdir().unwrap();
    let o = mogda(
        &[
            "plan", "samples", "--actions-p1", "2", "--actions-p2", "2", "--gamma", "0.5", "--mu", "1", "--epsilon", "1",
            "--iterations", "1", "--delta", "0.36787944117144233",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let budget: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(budget["rollout_len"].as_f64(), Some(32.0));

    let o = mogda(
        &["plan", "accuracy", "--xi", "0.1", "--target", "average-gap", "--states", "2", "--gamma", "0.5", "--eta", "0.1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let o = mogda(&["plan", "samples", "--actions-p1", "2", "--actions-p2", "2", "--gamma", "0.5", "--epsilon", "1", "--iterations", "10"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_inputs_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mogda(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(mogda(&["solve", "--builtin", "nope"], dir.path()).status.code(), Some(1));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"schema_version\": 1, \"n_states\": 1}").unwrap();
    let o = mogda(&["solve", "--game", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("n_actions_p1"), "{}", stderr(&o));
    assert_eq!(mogda(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn io_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[game]\nsource = \"file\"\npath = \"/nonexistent/game.json\"\n[run]\niterations = 5\n",
    );
    let o = mogda(&["run", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}
