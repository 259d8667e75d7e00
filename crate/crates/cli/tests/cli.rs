use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fmarket(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fmarket"))
        .args(args)
        .output()
        .unwrap()
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/replay")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn replay_reproduces_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture().join("config.toml");
    let out = fmarket(&[
        "replay",
        "--config",
        config.to_str().unwrap(),
        "--output",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for name in [
        "ledger.jsonl",
        "weights.csv",
        "rewards.csv",
        "losses.csv",
        "reward_totals.csv",
    ] {
        let fresh = std::fs::read(dir.path().join(name)).unwrap();
        let golden = std::fs::read(fixture().join("golden").join(name)).unwrap();
        assert!(fresh == golden, "{name} differs");
    }
    let manifest = std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
    assert!(manifest.contains("delta = 0.5"));

    let reemit = tempfile::tempdir().unwrap();
    let ledger = dir.path().join("ledger.jsonl");
    let out = fmarket(&[
        "report",
        "--ledger",
        ledger.to_str().unwrap(),
        "--output",
        reemit.path().to_str().unwrap(),
        "--verify",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read(reemit.path().join("rewards.csv")).unwrap(),
        std::fs::read(dir.path().join("rewards.csv")).unwrap()
    );
}

#[test]
fn simulate_and_sweep_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = fmarket(&[
        "simulate",
        "--mode",
        "varying",
        "--horizon",
        "60",
        "--runs",
        "2",
        "--burn-in",
        "10",
        "--market",
        "--levels",
        "0.1,0.5,0.9",
        "--methods",
        "qr,rqr",
        "--output",
        d,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for name in [
        "manifest.toml",
        "stats.csv",
        "trajectories.csv",
        "ledger.jsonl",
        "rewards.csv",
    ] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let stats = std::fs::read_to_string(dir.path().join("stats.csv")).unwrap();
    // header + 2 methods x 3 levels x 3 sellers
    assert_eq!(stats.lines().count(), 1 + 18);
    let trajectories = std::fs::read_to_string(dir.path().join("trajectories.csv")).unwrap();
    assert_eq!(trajectories.lines().count(), 1 + 2 * 60 * 3 * 3);

    let out = fmarket(&[
        "sweep",
        "--horizon",
        "50",
        "--runs",
        "1",
        "--burn-in",
        "0",
        "--rates",
        "0.1,0.5",
        "--output",
        d,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let sweep = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 2 * 3);
}

#[test]
fn exit_codes() {
    assert_eq!(code(&fmarket(&["--help"])), 0);
    assert_eq!(code(&fmarket(&["simulate", "--bogus"])), 1);

    let out = fmarket(&["sweep", "--delta", "1.5"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("allocation.delta"));

    let out = fmarket(&["sweep", "--set", "scenario.colour=red"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario.colour"));

    let out = fmarket(&[
        "replay",
        "--forecasts",
        "/nonexistent.csv",
        "--realizations",
        "/nonexistent.csv",
    ]);
    assert_eq!(code(&out), 1);

    let out = fmarket(&["report", "--ledger", "/nonexistent/ledger.jsonl"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn malformed_forecast_row_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let forecasts = dir.path().join("f.csv");
    let realizations = dir.path().join("y.csv");
    std::fs::write(&forecasts, "timestamp,seller,q0.5\n0,a,1\n1,a,oops\n").unwrap();
    std::fs::write(&realizations, "timestamp,y\n0,1\n1,2\n").unwrap();
    let out = fmarket(&[
        "replay",
        "--forecasts",
        forecasts.to_str().unwrap(),
        "--realizations",
        realizations.to_str().unwrap(),
        "--output",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains(":3:"));
}
