use std::path::Path;
use std::process::{Command, Output};

fn prepart(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prepart")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

const GOLDEN_ARGS: [&str; 15] = [
    "run",
    "--synthetic",
    "n=30,seed=0",
    "--m",
    "6",
    "--repeats",
    "2",
    "--k",
    "2,4",
    "--seed",
    "7",
    "--no-timing",
    "--algos",
    "all",
    "--format=csv",
];

#[test]
fn golden_csv_is_stable() {
    let out = prepart(&GOLDEN_ARGS);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let golden = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/run_n30_seed7.csv"))
        .unwrap();
    assert_eq!(stdout(&out), golden);
}

#[test]
fn row_count_contract() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("results.csv");
    let out = prepart(&[
        "run",
        "--synthetic",
        "n=60",
        "--algos",
        "lpt,prepartition",
        "--k",
        "4",
        "--m",
        "20",
        "--repeats",
        "10",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2 * 10 + 2);
    assert_eq!(rows.iter().filter(|r| r.contains(",mean,")).count(), 2);
}

#[test]
fn jsonl_output() {
    let out = prepart(&["run", "--synthetic", "n=20", "--algos", "olrsa", "--m", "5", "--repeats", "2", "--format", "jsonl"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 3);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["algo"], "olrsa");
    }
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "synthetic = \"n=25\"\nalgos = \"rr,lpt\"\nm = 4\nrepeats = 3\nrecord_timing = false\n").unwrap();
    let out = prepart(&["run", "--config", cfg.to_str().unwrap(), "--repeats", "1", "--max-rejection-rate", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    // two algorithms, one repeat each, plus two mean rows
    assert_eq!(text.lines().count(), 1 + 4);
    assert!(text.lines().nth(1).unwrap().starts_with("rr,25,4,"));
}

#[test]
fn bad_config_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "fleet_size = 3\n").unwrap();
    let out = prepart(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("fleet_size"));
}

#[test]
fn excessive_rejection_exits_nonzero() {
    let out = prepart(&["run", "--synthetic", "n=100", "--algos", "lpt", "--m", "2", "--repeats", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rejected"));
    // the table is still written
    assert_eq!(stdout(&out).lines().count(), 3);
}

#[test]
fn unknown_algorithm_fails() {
    let out = prepart(&["run", "--algos", "fifo"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("fifo"));
}

#[test]
fn gen_writes_requested_size() {
    let out = prepart(&["gen", "--synthetic", "n=7,mu=10,sigma=2", "--seed", "4"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 7);
    let again = prepart(&["gen", "--synthetic", "n=7,mu=10,sigma=2", "--seed", "4"]);
    assert_eq!(out.stdout, again.stdout);
}

#[test]
fn parse_converts_swf() {
    let dir = tempfile::tempdir().unwrap();
    let swf = dir.path().join("t.swf");
    std::fs::write(
        &swf,
        "; MaxProcs: 16\n\
         1 0 5 600 4 -1 -1 4 -1 -1 1 1 1 1 1 -1 -1 -1\n\
         2 300 0 1 8 -1 -1 8 -1 -1 1 1 1 1 1 -1 -1 -1\n",
    )
    .unwrap();
    let out = prepart(&["parse", swf.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let reqs = v.as_array().unwrap();
    assert_eq!(reqs.len(), 2);
    // 600 s on 5-minute slots is two slots; 4 of 16 processors
    assert_eq!(reqs[0]["end_slot"], 2);
    assert_eq!(reqs[0]["demand"], 0.25);
    assert_eq!(reqs[1]["start_slot"], 1);
}

#[test]
fn parse_without_header_uses_widest_job() {
    let dir = tempfile::tempdir().unwrap();
    let swf = dir.path().join("t.swf");
    std::fs::write(&swf, "1 0 5 600 4 -1 -1 4 -1 -1 1 1 1 1 1 -1 -1 -1\n").unwrap();
    let out = prepart(&["parse", swf.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v[0]["demand"], 1.0);
    let out = prepart(&["parse", swf.to_str().unwrap(), "--cluster-procs", "8"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v[0]["demand"], 0.5);
}

#[test]
fn validate_reports_each_property() {
    let out = prepart(&["validate", "--trials", "20", "--workloads", "3", "--max-n", "50", "--k", "2"]);
    assert!(out.status.success(), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.lines().count() >= 6);
    assert!(text.lines().all(|l| l.starts_with("PASS") || l.starts_with("EXPLAINED")));
}

#[test]
fn validate_catches_injected_capacity_bug() {
    let out = prepart(&["validate", "--trials", "5", "--workloads", "3", "--max-n", "100", "--k", "2", "--inject-capacity-bug"]);
    assert!(!out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("FAIL"));
    assert!(text.contains("counterexample"));
}
