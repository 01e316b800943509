use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_cmdp");

const KWIK: &str = r#"
seed = 3
episodes = 200
[environment]
family = "linear"
dim = 3
states = 4
actions = 2
horizon = 4
[agent]
kind = "kwik"
alpha = 0.03
[contexts]
mode = "iid-uniform"
"#;

fn cmdp(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn run_to(config: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--config", config, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    cmdp(&args)
}

#[test]
fn run_writes_logs_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "kwik.toml", KWIK);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run_to(&config, &a, &[]).status.success());
    assert!(run_to(&config, &b, &[]).status.success());
    let log_a = std::fs::read(a.join("episodes.jsonl")).unwrap();
    assert_eq!(log_a, std::fs::read(b.join("episodes.jsonl")).unwrap());
    assert_eq!(log_a.iter().filter(|&&c| c == b'\n').count(), 200);

    let csv = std::fs::read_to_string(a.join("episodes.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,gap,suboptimal,known_states,updates"));
    assert_eq!(csv.lines().count(), 201);

    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["episodes"], 200);
    assert!(summary["constants"]["theoretical_alpha"].as_f64().unwrap() > 0.0);
    assert_eq!(summary["constants"]["effective_alpha"], 0.03);
}

#[test]
fn seed_flag_changes_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "kwik.toml", KWIK);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run_to(&config, &a, &[]).status.success());
    assert!(run_to(&config, &b, &["--seed", "4"]).status.success());
    assert_ne!(
        std::fs::read(a.join("episodes.jsonl")).unwrap(),
        std::fs::read(b.join("episodes.jsonl")).unwrap()
    );
}

#[test]
fn overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "kwik.toml", KWIK);
    let out = dir.path().join("o");
    let status = run_to(&config, &out, &["--override", "episodes=7", "--override", "agent.kind=oracle"]);
    assert!(status.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["episodes"], 7);
    assert_eq!(summary["agent"], "oracle");
    assert_eq!(summary["suboptimal"], 0);
}

#[test]
fn checkpoint_is_written_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "kwik.toml", KWIK);
    let out = dir.path().join("o");
    assert!(run_to(&config, &out, &["--override", "output.checkpoint=true"]).status.success());
    let snapshot: cmdp::kwik::KwikEstimator =
        serde_json::from_slice(&std::fs::read(out.join("checkpoint.json")).unwrap()).unwrap();
    assert!(snapshot.total_updates() > 0);
}

#[test]
fn generated_environment_replays_the_same_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "kwik.toml", KWIK);
    let env_file = dir.path().join("env.json");
    let gen = cmdp(&["gen-env", "--config", &config, "--out", env_file.to_str().unwrap()]);
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));

    let from_file = KWIK.replace("family = \"linear\"", "family = \"file\"\npath = \"env.json\"");
    let file_config = write_config(dir.path(), "file.toml", &from_file);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run_to(&config, &a, &[]).status.success());
    let replay = run_to(&file_config, &b, &[]);
    assert!(replay.status.success(), "{}", String::from_utf8_lossy(&replay.stderr));
    assert_eq!(
        std::fs::read(a.join("episodes.jsonl")).unwrap(),
        std::fs::read(b.join("episodes.jsonl")).unwrap()
    );
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{KWIK}\n[sweep]\ndim = [2, 3]\nseeds = [1, 2]\n").replace("episodes = 200", "episodes = 50");
    let config = write_config(dir.path(), "sweep.toml", &text);
    let out = dir.path().join("sweep");
    let output = cmdp(&["sweep", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let table = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert!(table.lines().next().unwrap().starts_with("index,epsilon,dim,states,episodes,seed"));
    assert!(out.join("cell-0003").join("episodes.jsonl").exists());
}

#[test]
fn verify_reports_and_exits_zero() {
    let output = cmdp(&["verify", "dp", "projection"]);
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    assert!(text.contains("PASS dp"));
    assert!(text.contains("PASS projection"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cmdp(&["verify", "no-such-suite"]).status.code(), Some(2));
    assert_eq!(cmdp(&["run", "--config", "/nonexistent.toml"]).status.code(), Some(2));
    let bad = write_config(dir.path(), "bad.toml", &KWIK.replace("alpha = 0.03", "alpha = -1.0"));
    let output = cmdp(&["run", "--config", &bad]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("alpha"));
    let config = write_config(dir.path(), "kwik.toml", KWIK);
    assert_eq!(cmdp(&["run", "--config", &config, "--override", "nonsense"]).status.code(), Some(2));
    assert_eq!(cmdp(&["bogus-subcommand"]).status.code(), Some(2));
}
