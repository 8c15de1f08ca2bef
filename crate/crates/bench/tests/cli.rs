//! The command-line driver, run as a separate process.

use std::path::PathBuf;
use std::process::Command;

fn isac(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_isac"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
    )
}

fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("isac-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn bound_queries() {
    let cases: [(&[&str], &str); 6] = [
        (
            &["bounds", "--k", "3", "--ntr", "1", "--mode", "nic"],
            "bound=3",
        ),
        (
            &["bounds", "--k", "3", "--ntr", "1", "--mode", "ic"],
            "bound=5",
        ),
        (
            &["bounds", "--k", "0", "--metric", "snr", "--mode", "nic"],
            "bound=1",
        ),
        (
            &["bounds", "--k", "2", "--l", "3", "--mode", "ic"],
            "d=6 mode=ic bound=4",
        ),
        (
            &[
                "bounds",
                "--k",
                "0",
                "--metric",
                "fullchannel",
                "--n-tx",
                "4",
                "--mode",
                "radar",
            ],
            "bound=4",
        ),
        (
            &["bounds", "--k", "1", "--d", "15", "--mode", "nic"],
            "bound=4",
        ),
    ];
    for (args, want) in cases {
        let (code, out) = isac(args);
        assert_eq!(code, 0, "{args:?}");
        assert!(out.contains(want), "{args:?}: {out}");
    }
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(isac(&["bounds", "--k", "2", "--mode", "ic"]).0, 1);
    assert_eq!(
        isac(&["bounds", "--k", "2", "--d", "1", "--ntr", "1", "--mode", "ic"]).0,
        1
    );
    assert_eq!(isac(&["nonsense"]).0, 1);
    assert_eq!(isac(&["--help"]).0, 0);
}

#[test]
fn verify_passes() {
    let (code, out) = isac(&["verify"]);
    assert_eq!(code, 0, "{out}");
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 5);
}

#[test]
fn missing_config_is_an_io_error() {
    let (code, _) = isac(&["solve", "/nonexistent/config.toml"]);
    assert_eq!(code, 3);
}

#[test]
fn experiment_writes_results() {
    let dir = scratch_dir("exp");
    let config = dir.join("run.toml");
    std::fs::write(
        &config,
        "[scenario]\nmode = \"nic\"\nk_users = 2\nn_targets = 1\n",
    )
    .unwrap();
    let out_dir = dir.join("out");
    let (code, out) = isac(&[
        "experiment",
        config.to_str().unwrap(),
        "--seeds",
        "3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{out}");
    let csv = std::fs::read_to_string(out_dir.join("trials.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["trials"], 3);

    let (code, out) = isac(&["solve", config.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(code, 0);
    assert!(out.contains("\"status\": \"Optimal\""), "{out}");

    let (code, out) = isac(&["reduce", config.to_str().unwrap(), "--mode", "ic"]);
    assert_eq!(code, 0);
    let rec: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(rec["mode"], "ic");
    assert!(rec["n_optimize"].as_u64().unwrap() <= rec["bound"].as_u64().unwrap());
    std::fs::remove_dir_all(&dir).ok();
}
