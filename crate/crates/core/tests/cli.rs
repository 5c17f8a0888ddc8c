use std::path::Path;
use std::process::{Command, Output};

use expert_sharing::read_trace;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_expert-sharing"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn gen(dir: &Path, name: &str, extra: &[&str]) -> String {
    let p = dir.join(name).to_str().unwrap().to_string();
    let mut args = vec!["gen-trace", "-o", &p];
    args.extend_from_slice(extra);
    let o = bin(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    p
}

/// Data rows of a CSV report, skipping comments and the header.
fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn gen_trace_header_echoes_flags() {
    let dir = tempfile::tempdir().unwrap();
    let p = gen(
        dir.path(),
        "t.moet",
        &[
            "--experts",
            "256",
            "--top-k",
            "8",
            "--block",
            "32",
            "--rho",
            "0.5",
            "--seed",
            "42",
        ],
    );
    let t = read_trace(Path::new(&p)).unwrap();
    assert_eq!(
        (
            t.header.experts_total,
            t.header.top_k,
            t.header.block_size,
            t.header.seed
        ),
        (256, 8, 32, 42)
    );
    assert_eq!(t.header.generator.unwrap().rho, 0.5);
}

#[test]
fn gen_trace_errors() {
    let o = bin(&[
        "gen-trace",
        "--experts",
        "8",
        "--top-k",
        "2",
        "-o",
        "x.moet",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.moet");
    let o = bin(&[
        "gen-trace",
        "--experts",
        "8",
        "--top-k",
        "2",
        "--block",
        "4",
        "--rho",
        "1.5",
        "-o",
        p.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rho"));
    assert!(!p.exists());
}

#[test]
fn run_vanilla_on_identical_tokens() {
    let dir = tempfile::tempdir().unwrap();
    let t = gen(
        dir.path(),
        "t.moet",
        &[
            "--experts",
            "64",
            "--top-k",
            "8",
            "--block",
            "16",
            "--rho",
            "1",
            "--steps",
            "3",
            "--layers",
            "2",
        ],
    );
    let o = bin(&["run", "--trace", &t, "--method", "vanilla"]);
    assert!(o.status.success());
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 7);
    assert!(r[..6].iter().all(|row| row[4] == "8"));
}

#[test]
fn run_des_vote_budget_and_des_seq_recall() {
    let dir = tempfile::tempdir().unwrap();
    let t = gen(
        dir.path(),
        "t.jsonl",
        &[
            "--experts",
            "256",
            "--top-k",
            "8",
            "--block",
            "32",
            "--rho",
            "0.5",
            "--steps",
            "4",
        ],
    );
    let o = bin(&[
        "run",
        "--trace",
        &t,
        "--method",
        "des-vote:0.15",
        "--bank-seed",
        "3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for row in rows(&stdout(&o)) {
        assert_eq!(row[3].parse::<f64>().unwrap(), 38.0);
        assert!(row[4].parse::<f64>().unwrap() <= 38.0);
        assert!(!row[9].is_empty());
    }
    let o = bin(&["run", "--trace", &t, "--method", "des-seq:8"]);
    for row in rows(&stdout(&o)) {
        assert_eq!(row[8], "1");
    }
}

#[test]
fn run_json_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let t = gen(
        dir.path(),
        "t.moet",
        &[
            "--experts",
            "32",
            "--top-k",
            "4",
            "--block",
            "8",
            "--rho",
            "0.5",
            "--steps",
            "5",
        ],
    );
    for method in ["mcmoe:0.2:0.25", "naee:0.1", "topk:2"] {
        let a = bin(&["run", "--trace", &t, "--method", method]);
        let b = bin(&["run", "--trace", &t, "--method", method]);
        assert_eq!(a.stdout, b.stdout);
    }
    let o = bin(&[
        "run",
        "--trace",
        &t,
        "--method",
        "des-vote:0.5",
        "--format",
        "json",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["schema"], "expert-sharing.run.v1");
    assert_eq!(v["rows"].as_array().unwrap().len(), 5);
    assert_eq!(v["aggregate"]["coreset_size"], 16.0);
}

#[test]
fn run_errors() {
    let dir = tempfile::tempdir().unwrap();
    let t = gen(
        dir.path(),
        "t.moet",
        &["--experts", "8", "--top-k", "2", "--block", "4"],
    );
    assert_eq!(
        bin(&["run", "--trace", &t, "--method", "oracle"])
            .status
            .code(),
        Some(1)
    );
    let bad = dir.path().join("bad.moet");
    std::fs::write(&bad, b"MOEX").unwrap();
    let o = bin(&[
        "run",
        "--trace",
        bad.to_str().unwrap(),
        "--method",
        "vanilla",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_beta_grid() {
    let dir = tempfile::tempdir().unwrap();
    let t = gen(
        dir.path(),
        "t.moet",
        &[
            "--experts",
            "64",
            "--top-k",
            "8",
            "--block",
            "16",
            "--rho",
            "0.5",
            "--steps",
            "4",
        ],
    );
    let out = dir.path().join("sweep.csv");
    let o = bin(&[
        "sweep",
        "--trace",
        &t,
        "--strategy",
        "des-vote",
        "--grid",
        "1.0,0.9,0.8,0.7,0.6,0.5,0.4,0.3,0.2,0.1",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("# expert-sharing sweep csv v1"));
    let r = rows(&csv);
    assert_eq!(r.len(), 10);
    let mut last = -1.0;
    for (i, row) in r.iter().enumerate() {
        let beta = (i + 1) as f64 / 10.0;
        assert_eq!(row[2].parse::<f64>().unwrap(), (beta * 64.0 + 1e-9).floor());
        let recall: f64 = row[4].parse().unwrap();
        assert!(recall >= last);
        last = recall;
    }
    let o = bin(&[
        "sweep",
        "--trace",
        &t,
        "--strategy",
        "des-seq",
        "--grid",
        "1,2,3,4,5,6,7,8",
    ]);
    let recalls: Vec<f64> = rows(&stdout(&o))
        .iter()
        .map(|r| r[4].parse().unwrap())
        .collect();
    assert!(recalls.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(*recalls.last().unwrap(), 1.0);
    assert_eq!(
        bin(&[
            "sweep",
            "--trace",
            &t,
            "--strategy",
            "des-vote",
            "--grid",
            ""
        ])
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn explosion_curve() {
    let dir = tempfile::tempdir().unwrap();
    let t = gen(
        dir.path(),
        "t.moet",
        &[
            "--experts",
            "256",
            "--top-k",
            "8",
            "--block",
            "32",
            "--rho",
            "1",
            "--steps",
            "4",
        ],
    );
    let o = bin(&[
        "explosion",
        "--experts",
        "256",
        "--top-k",
        "8",
        "--n",
        "1,8,32",
        "--trials",
        "20000",
        "--trace",
        &t,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&stdout(&o));
    assert_eq!(r[0], vec!["1", "8", "8", "0", "8"]);
    let n32: Vec<f64> = r[2].iter().map(|v| v.parse().unwrap()).collect();
    assert!((n32[1] - 163.3).abs() < 0.1);
    assert!((n32[2] - n32[1]).abs() < 3.0 * n32[3]);
    assert_eq!(n32[4], 8.0);
}

#[test]
fn oracle_gap_report() {
    let o = bin(&[
        "oracle-gap",
        "--experts",
        "10",
        "--top-k",
        "2",
        "--block",
        "6",
        "--instances",
        "20",
        "--hidden-dim",
        "4",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let r = rows(&text);
    assert_eq!(r.len(), 20);
    for row in &r {
        assert_eq!(row[12], "exact");
        let (vote, seq, oracle, oracle_seq): (f64, f64, f64, f64) = (
            row[2].parse().unwrap(),
            row[6].parse().unwrap(),
            row[8].parse().unwrap(),
            row[9].parse().unwrap(),
        );
        assert!(oracle <= vote && oracle_seq <= seq);
    }
    assert_eq!(
        bin(&["oracle-gap", "--experts", "13"]).status.code(),
        Some(1)
    );
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pool.json");
    std::fs::write(&cfg, r#"{"experts_total":16,"top_k":4,"gate_activation":"sigmoid","bytes_per_expert":1000,"hidden_dim":8}"#).unwrap();
    let t = gen(
        dir.path(),
        "t.moet",
        &["--config", cfg.to_str().unwrap(), "--block", "4"],
    );
    let tr = read_trace(Path::new(&t)).unwrap();
    assert_eq!((tr.header.experts_total, tr.header.top_k), (16, 4));
    let o = bin(&[
        "run",
        "--trace",
        &t,
        "--method",
        "vanilla",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    let r = rows(&stdout(&o));
    assert_eq!(
        r[0][7].parse::<u64>().unwrap(),
        1000 * r[0][4].parse::<u64>().unwrap()
    );
    let o = bin(&[
        "run",
        "--trace",
        &t,
        "--method",
        "vanilla",
        "--config",
        cfg.to_str().unwrap(),
        "--bytes-per-expert",
        "3",
    ]);
    let r = rows(&stdout(&o));
    assert_eq!(
        r[0][7].parse::<u64>().unwrap(),
        3 * r[0][4].parse::<u64>().unwrap()
    );
}
