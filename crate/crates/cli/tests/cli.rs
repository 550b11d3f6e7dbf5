use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn core_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("..").join("core")
}

fn pool() -> PathBuf {
    core_dir().join("data").join("pool")
}

fn fixture(name: &str) -> PathBuf {
    core_dir().join("tests").join("fixtures").join(name)
}

fn knotsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_knotsim"))
        .args(args)
        .env_remove("KNOTSIM_DATA")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gauss_prints_fixture_codes() {
    let out = stdout(&knotsim(&["gauss", "--config", s(&fixture("tie2_a.knot"))]));
    assert_eq!(out.trim(), "[1+,1-,2+,2-]");
    let out = stdout(&knotsim(&["gauss", "--config", s(&fixture("loop.knot"))]));
    assert_eq!(out.trim(), "[]");
}

#[test]
fn rollout_logs_are_reproducible_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.ndjson");
    let b = dir.path().join("b.ndjson");
    let c = dir.path().join("c.ndjson");
    let pool = pool();
    let base = ["rollout", "--pool", s(&pool), "--task", "tie", "--x", "2", "--seed", "9"];
    for path in [&a, &b] {
        let mut args = base.to_vec();
        args.extend(["--out", s(path)]);
        stdout(&knotsim(&args));
    }
    let first = std::fs::read(&a).unwrap();
    assert!(!first.is_empty());
    assert_eq!(first, std::fs::read(&b).unwrap());

    let mut args = base.to_vec();
    args.extend(["--policy", "replay", "--actions", s(&a), "--out", s(&c)]);
    stdout(&knotsim(&args));
    assert_eq!(first, std::fs::read(&c).unwrap());
}

#[test]
fn eval_record_ignores_worker_count() {
    let run = |workers: &str| {
        let out = stdout(&knotsim(&[
            "eval", "--pool", s(&pool()), "--task", "unknot", "--x", "2", "--episodes", "12", "--workers", workers,
        ]));
        let record = out.lines().last().unwrap().to_string();
        let cut = record.find(" wall_time=").expect("record carries wall time");
        record[..cut].to_string()
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn render_matches_golden_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fix.png");
    stdout(&knotsim(&["render", "--config", s(&fixture("cross1.knot")), "--out", s(&out)]));
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(fixture("cross1.png")).unwrap());

    let (p, q) = (dir.path().join("p.png"), dir.path().join("q.png"));
    for path in [&p, &q] {
        let text = stdout(&knotsim(&[
            "render", "--pool", s(&pool()), "--task", "convert", "--x", "3", "--seed", "4", "--out", s(path),
        ]));
        assert!(text.starts_with("current="));
    }
    assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
    assert!(std::fs::read_to_string(p.with_extension("txt")).unwrap().contains("gauss_code_goal="));
}

#[test]
fn gen_matrix_prints_every_cell() {
    let out = stdout(&knotsim(&[
        "gen-matrix", "--pool", s(&pool()), "--task", "tie", "--train-x", "2", "--eval-x", "2,3", "--episodes", "4",
    ]));
    assert!(out.contains("x=2") && out.contains("x=3"), "{out}");
}

#[test]
fn data_variable_locates_the_pool() {
    let out = Command::new(env!("CARGO_BIN_EXE_knotsim"))
        .args(["rollout", "--task", "tie", "--x", "1", "--policy", "zero"])
        .env("KNOTSIM_DATA", core_dir().join("data"))
        .output()
        .unwrap();
    assert_eq!(stdout(&out).lines().count(), 50);
}

#[test]
fn exit_codes_separate_usage_data_and_divergence() {
    assert_eq!(knotsim(&["eval", "--task", "bogus"]).status.code(), Some(2));
    assert_eq!(knotsim(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        knotsim(&["eval", "--pool", s(&pool()), "--task", "tie", "--episodes", "0"]).status.code(),
        Some(2)
    );

    let missing = knotsim(&["rollout", "--task", "tie"]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("KNOTSIM_DATA"));
    assert_eq!(knotsim(&["gauss", "--config", "/nonexistent.knot"]).status.code(), Some(3));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pool");
    let timeout = knotsim(&["gen-pool", "--out", s(&out), "--budget", "3"]);
    assert_eq!(timeout.status.code(), Some(3));

    let params = dir.path().join("wild.params");
    let wild = knotsim::physics::SimParams { f_max: 1e9, ..Default::default() };
    std::fs::write(&params, wild.to_string()).unwrap();
    let diverged = knotsim(&["gen-pool", "--out", s(&out), "--params", s(&params)]);
    assert_eq!(diverged.status.code(), Some(4), "{}", String::from_utf8_lossy(&diverged.stderr));
}
