use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

const PRED: &str = "record_id,cluster_id\nr1,a\nr2,a\nr3,b\nr4,b\nr5,b\n";
const TRUTH: &str = "record_id,cluster_id\nr1,x\nr2,x\nr3,x\nr4,y\nr5,y\n";
// The two true clusters hit by seeds r3 and r4, each with p_c = 3/5.
const BENCH: &str = concat!(
    r#"{"seed_record":"r3","members":["r1","r2","r3"],"p_c":0.6,"design":"pps_record"}"#,
    "\n",
    r#"{"seed_record":"r4","members":["r4","r5"],"p_c":0.6,"design":"pps_record"}"#,
    "\n"
);

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        for (name, body) in [("pred.csv", PRED), ("truth.csv", TRUTH), ("bench.jsonl", BENCH)] {
            std::fs::write(dir.path().join(name), body).unwrap();
        }
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_erval"))
            .args(args)
            .current_dir(self.dir.path())
            .env_remove("ERVAL_TOKEN")
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> Output {
        let out = self.run(args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    }

    fn json(&self, args: &[&str]) -> Value {
        serde_json::from_slice(&self.ok(args).stdout).unwrap()
    }
}

fn code(o: &Output) -> Option<i32> {
    o.status.code()
}

fn close(a: &Value, b: f64) -> bool {
    (a.as_f64().unwrap() - b).abs() < 1e-12
}

#[test]
fn exit_codes() {
    let f = Fixture::new();
    assert_eq!(code(&f.run(&["--help"])), Some(0));
    assert_eq!(code(&f.run(&["--version"])), Some(0));
    assert_eq!(code(&f.run(&[])), Some(1));
    assert_eq!(code(&f.run(&["estimate", "--bogus"])), Some(1));
    assert_eq!(code(&f.run(&["stats", "--membership", "missing.csv"])), Some(1));
    assert_eq!(code(&f.run(&["--threads", "0", "stats", "--membership", "truth.csv"])), Some(1));
    std::fs::write(f.path("bad.csv"), "id,cluster\nr1,a\n").unwrap();
    let bad = f.run(&["stats", "--membership", "bad.csv"]);
    assert_eq!(code(&bad), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("bad.csv"));
    // An unwritable output is a runtime failure, not a usage error.
    let out = f.run(&["sample", "--membership", "pred.csv", "--k", "2", "--seed", "1", "--out", "no/such/dir/s.jsonl"]);
    assert_eq!(code(&out), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn stats_of_a_clustering() {
    let f = Fixture::new();
    let v = f.json(&["stats", "--membership", "truth.csv", "--hill-grid", "0,1,2,inf"]);
    assert_eq!(v["n_records"], 5);
    assert_eq!(v["n_clusters"], 2);
    assert!(close(&v["avg_cluster_size"], 2.5));
    assert!(close(&v["matching_rate"], 1.0));
    assert_eq!(v["hill"].as_array().unwrap().len(), 4);
    for h in v["hill"].as_array().unwrap() {
        assert!((h["value"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    }
    let table = String::from_utf8(f.ok(&["--pretty", "stats", "--membership", "truth.csv"]).stdout).unwrap();
    assert!(table.contains("average cluster size  2.5000"), "{table}");
}

#[test]
fn stats_of_a_release_series() {
    let f = Fixture::new();
    let dir = f.path("series");
    std::fs::create_dir(&dir).unwrap();
    std::fs::write(dir.join("2021.csv"), PRED).unwrap();
    std::fs::write(dir.join("2022.csv"), TRUTH).unwrap();
    let v = f.json(&["stats", "--series", "series"]);
    let s = v["series"].as_array().unwrap();
    assert_eq!(s[0]["release"], "2021");
    assert_eq!(s[1]["release"], "2022");
    assert!(close(&s[0]["report"]["matching_rate"], 1.0));
}

#[test]
fn estimate_from_the_canonical_sample() {
    let f = Fixture::new();
    let v = f.json(&["estimate", "--truth-sample", "bench.jsonl", "--prediction", "pred.csv"]);
    assert_eq!(v["k"], 2);
    let est = |m: &str| {
        v["estimates"]
            .as_array()
            .unwrap()
            .iter()
            .find(|e| e["metric"] == m)
            .cloned()
            .unwrap()
    };
    // The estimator arithmetic is pinned in the library tests. Here the
    // B3 precision of the two draws is 13/18 whatever the weights.
    let p = est("pairwise_precision")["point"].as_f64().unwrap();
    assert!(p > 0.0 && p <= 1.0);
    assert!(close(&est("bcubed_precision")["point"], 13.0 / 18.0));
    let pretty = String::from_utf8(
        f.ok(&["--pretty", "estimate", "--truth-sample", "bench.jsonl", "--prediction", "pred.csv"])
            .stdout,
    )
    .unwrap();
    assert!(pretty.starts_with("design pps_record, k = 2"), "{pretty}");
}

#[test]
fn error_table_round_trip() {
    let f = Fixture::new();
    let direct = f.json(&[
        "estimate",
        "--truth-sample",
        "bench.jsonl",
        "--prediction",
        "pred.csv",
        "--table-out",
        "table.csv",
    ]);
    let from_table = f.json(&[
        "estimate",
        "--error-table",
        "table.csv",
        "--design",
        "pps_record",
        "--n-records",
        "5",
        "--n-pred-clusters",
        "2",
    ]);
    for (a, b) in direct["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .zip(from_table["estimates"].as_array().unwrap())
    {
        assert_eq!(a["metric"], b["metric"]);
        assert!((a["point"].as_f64().unwrap() - b["point"].as_f64().unwrap()).abs() < 1e-12);
        assert!((a["std"].as_f64().unwrap() - b["std"].as_f64().unwrap()).abs() < 1e-12);
    }
    let half = f.run(&["estimate", "--error-table", "table.csv", "--n-records", "5"]);
    assert_eq!(code(&half), Some(1));
}

#[test]
fn sampling_is_reproducible_and_reports_drawn_seeds() {
    let f = Fixture::new();
    let a = f.ok(&["sample", "--membership", "pred.csv", "--k", "4", "--seed", "11"]);
    let b = f.ok(&["sample", "--membership", "pred.csv", "--k", "4", "--seed", "11"]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(String::from_utf8(a.stdout).unwrap().lines().count(), 4);
    assert!(a.stderr.is_empty());

    let c = f.ok(&["sample", "--membership", "pred.csv", "--k", "4"]);
    let err = String::from_utf8(c.stderr).unwrap();
    let seed: u64 = err.trim().strip_prefix("seed: ").unwrap().parse().unwrap();
    let first: Value = serde_json::from_str(String::from_utf8(c.stdout).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first["rng_seed"], seed);

    assert_eq!(
        code(&f.run(&["sample", "--membership", "pred.csv", "--k", "4", "--design", "expected_error", "--seed", "1"])),
        Some(1)
    );
    std::fs::write(f.path("probs.csv"), "record_a,record_b,p\nr1,r2,0.9\nr3,r4,0.5\n").unwrap();
    f.ok(&[
        "sample",
        "--membership",
        "pred.csv",
        "--k",
        "3",
        "--design",
        "expected_error",
        "--match-probs",
        "probs.csv",
        "--seed",
        "1",
    ]);
}

#[test]
fn simulation_is_deterministic_across_thread_counts() {
    let f = Fixture::new();
    let args = ["simulate", "--truth", "truth.csv", "--prediction", "pred.csv", "--sizes", "2,4", "--reps", "25", "--seed", "5"];
    let one = f.ok(&[&["--threads", "1"], &args[..]].concat());
    let four = f.ok(&[&["--threads", "4"], &args[..]].concat());
    assert_eq!(one.stdout, four.stdout);
    let v: Value = serde_json::from_slice(&one.stdout).unwrap();
    assert_eq!(v["replications"], 25);
    // 2 designs x 2 sizes x 2 metrics.
    assert_eq!(v["cells"].as_array().unwrap().len(), 8);
}

#[test]
fn simulation_on_a_generated_population() {
    let f = Fixture::new();
    let v = f.json(&[
        "simulate",
        "--generate",
        "--n-pairs",
        "40",
        "--n-singletons",
        "200",
        "--sizes",
        "10",
        "--reps",
        "10",
        "--designs",
        "pps_record",
        "--seed",
        "2",
        "--save-population",
        "pop",
        "--csv-out",
        "cells.csv",
    ]);
    assert_eq!(v["cells"].as_array().unwrap().len(), 2);
    for name in ["truth.csv", "prediction.csv", "attributes.csv"] {
        assert!(f.path("pop").join(name).exists(), "{name}");
    }
    let csv = std::fs::read_to_string(f.path("cells.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn session_qc_and_audit() {
    let f = Fixture::new();
    let v = f.json(&["sample", "--membership", "pred.csv", "--k", "2", "--seed", "7", "--session", "s1", "--data-dir", "data"]);
    assert_eq!(v["tasks"], 2);
    assert!(f.path("data/s1.jsonl").exists());
    let again = f.run(&["sample", "--membership", "pred.csv", "--k", "2", "--seed", "7", "--session", "s1", "--data-dir", "data"]);
    assert_eq!(code(&again), Some(1));
    let bad_id = f.run(&["sample", "--membership", "pred.csv", "--k", "2", "--session", "../x", "--data-dir", "data"]);
    assert_eq!(code(&bad_id), Some(1));

    let qc = f.json(&["qc", "--journal", "data/s1.jsonl"]);
    assert_eq!(qc["tasks"], 2);
    assert_eq!(qc["finalized"], 0);
    assert_eq!(qc["hard"], 0);
    // Export refuses an unfinished session.
    assert_eq!(code(&f.run(&["qc", "--journal", "data/s1.jsonl", "--export", "b.jsonl"])), Some(1));

    let audit = f.json(&["audit-report", "--journal", "data/s1.jsonl", "--tags-out", "tags.csv"]);
    assert_eq!(audit["tags"], 0);
    let from_csv = f.json(&["audit-report", "--tags", "tags.csv"]);
    assert_eq!(from_csv["tags"], 0);
}

fn http_get(addr: &str, path: &str, token: &str) -> (u16, Vec<u8>) {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(
        s,
        "GET {path} HTTP/1.1\r\nHost: {addr}\r\nAuthorization: Bearer {token}\r\nConnection: close\r\n\r\n"
    )
    .unwrap();
    let mut raw = Vec::new();
    s.read_to_end(&mut raw).unwrap();
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n").unwrap();
    let head = String::from_utf8_lossy(&raw[..split]).to_ascii_lowercase();
    assert!(head.contains("content-length"), "{head}");
    let status = head[9..12].parse().unwrap();
    (status, raw[split + 4..].to_vec())
}

struct Server(std::process::Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn spawn_server(dir: &Path) -> (Server, String) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_erval"))
        .args(["serve", "--port", "0", "--data-dir", "data", "--prediction", "pred.csv", "--truth-sample", "bench.jsonl"])
        .current_dir(dir)
        .env("ERVAL_TOKEN", "t0ken")
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on http://")
        .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
        .to_string();
    (Server(child), addr)
}

#[test]
fn served_estimates_match_the_command_line() {
    let f = Fixture::new();
    let (_server, addr) = spawn_server(f.dir.path());
    let cli = f.ok(&["estimate", "--truth-sample", "bench.jsonl", "--prediction", "pred.csv"]).stdout;
    let (status, body) = http_get(&addr, "/estimates", "t0ken");
    assert_eq!(status, 200);
    assert_eq!(body, cli);
    let (status, _) = http_get(&addr, "/estimates", "wrong");
    assert_eq!(status, 401);
}
