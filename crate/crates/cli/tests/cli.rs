//! End-to-end checks of the compiled binary: every subcommand, the file
//! formats it emits, and the failure contract of remote evaluation.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_decodelab"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("decodelab-cli-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

#[test]
fn gen_world_is_deterministic_and_loadable() {
    let dir = tmp_dir("gen");
    let out_a = dir.join("a.json");
    let out_b = dir.join("b.json");
    for out in [&out_a, &out_b] {
        run_ok(&[
            "gen-world",
            "--preset",
            "mcq4",
            "--seed",
            "5",
            "--instances",
            "12",
            "--out",
            &path_str(out),
        ]);
    }
    let a = std::fs::read(&out_a).unwrap();
    let b = std::fs::read(&out_b).unwrap();
    assert_eq!(a, b, "generation is not deterministic");
    let parsed: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(parsed["version"], "1");
    assert_eq!(parsed["instances"].as_array().unwrap().len(), 12);
}

#[test]
fn sweep_from_config_file_emits_reports() {
    let dir = tmp_dir("sweep");
    let world = dir.join("world.json");
    run_ok(&[
        "gen-world",
        "--preset",
        "vqa-headheavy",
        "--seed",
        "3",
        "--instances",
        "10",
        "--out",
        &path_str(&world),
    ]);

    let config = dir.join("sweep.json");
    std::fs::write(
        &config,
        format!(
            r#"{{
  "version": "1",
  "world": {{"file": {:?}}},
  "grid": ["greedy", "top_p:0.9", "top_k:2"],
  "temperatures": [0.7, 1.0],
  "seeds": [0, 1, 2, 3],
  "mode": "monte_carlo",
  "samples": 2000
}}"#,
            path_str(&world)
        ),
    )
    .unwrap();

    let out_dir = dir.join("report");
    run_ok(&[
        "sweep",
        "--config",
        &path_str(&config),
        "--out",
        &path_str(&out_dir),
    ]);
    let csv = std::fs::read_to_string(out_dir.join("report.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("strategy,tau,metric,mean,std,n_seeds"));
    assert_eq!(lines.count(), 3 * 2 * 4, "rows = grid x temps x metrics");

    // rerunning with the identical config is byte-stable
    let out_dir2 = dir.join("report2");
    run_ok(&[
        "sweep",
        "--config",
        &path_str(&config),
        "--out",
        &path_str(&out_dir2),
    ]);
    let csv2 = std::fs::read_to_string(out_dir2.join("report.csv")).unwrap();
    assert_eq!(csv, csv2);

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    assert!(json["provenance"]["config_hash"].is_string());
}

#[test]
fn verify_theorem_prints_a_verdict() {
    let dir = tmp_dir("verify");
    let world = dir.join("world.json");
    run_ok(&[
        "gen-world",
        "--preset",
        "mcq4",
        "--seed",
        "2",
        "--instances",
        "8",
        "--out",
        &path_str(&world),
    ]);
    let out = run_ok(&[
        "verify-theorem",
        "--world",
        &path_str(&world),
        "--out",
        &path_str(&dir),
    ]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(
        stdout.contains("theorem_applies_and_confirmed")
            || stdout.contains("theorem_silent")
            || stdout.contains("theorem_applies_and_VIOLATED"),
        "no verdict in {stdout:?}"
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("theorem.json")).unwrap()).unwrap();
    assert!(report["records"].as_array().unwrap().len() > 1);
}

#[test]
fn curves_emit_the_fixed_header() {
    let dir = tmp_dir("curves");
    let world = dir.join("world.json");
    run_ok(&[
        "gen-world",
        "--preset",
        "vqa-headheavy",
        "--seed",
        "4",
        "--instances",
        "10",
        "--out",
        &path_str(&world),
    ]);
    let out_csv = dir.join("curves.csv");
    run_ok(&[
        "curves",
        "--world",
        &path_str(&world),
        "--k-max",
        "4",
        "--out",
        &path_str(&out_csv),
    ]);
    let csv = std::fs::read_to_string(&out_csv).unwrap();
    assert!(csv.starts_with("k,G1,ECE\n"));
    assert_eq!(csv.lines().count(), 5); // header + k=1..=4
}

#[test]
fn gdrm_runs_on_reasoning_worlds() {
    let dir = tmp_dir("gdrm");
    let world = dir.join("world.json");
    run_ok(&[
        "gen-world",
        "--reasoning",
        "--seed",
        "6",
        "--instances",
        "10",
        "--out",
        &path_str(&world),
    ]);
    let out = run_ok(&[
        "gdrm",
        "--world",
        &path_str(&world),
        "--reasoning",
        "top_p:0.9",
        "--max-think",
        "4",
        "--max-answer",
        "4",
        "--seed",
        "1",
        "--out",
        &path_str(&dir),
    ]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("decoded 10 instances"), "{stdout}");
    assert!(stdout.contains("exact two-phase objective"), "{stdout}");
    let records: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("gdrm.json")).unwrap()).unwrap();
    assert_eq!(records.as_array().unwrap().len(), 10);
}

/// Minimal one-shot-per-connection HTTP server for the happy path.
fn mock_completions(n: usize) -> (String, std::thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let body = format!(
        "{{\"choices\": [{{\"logprobs\": {{\"top_logprobs\": [{{\"ok\": {}, \"no\": {}}}]}}}}]}}",
        0.8f64.ln(),
        0.2f64.ln()
    );
    let handle = std::thread::spawn(move || {
        for _ in 0..n {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 1024];
            loop {
                let read = stream.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..read]);
                let text = String::from_utf8_lossy(&buf);
                if let Some(head_end) = text.find("\r\n\r\n") {
                    let len = text
                        .lines()
                        .find_map(|l| {
                            l.to_ascii_lowercase()
                                .strip_prefix("content-length:")
                                .map(str::trim)
                                .map(String::from)
                        })
                        .and_then(|v| v.parse::<usize>().ok())
                        .unwrap_or(0);
                    if buf.len() >= head_end + 4 + len {
                        break;
                    }
                }
            }
            let response = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\nconnection: close\r\ncontent-length: {}\r\n\r\n{}",
                body.len(),
                body
            );
            stream.write_all(response.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}/v1/completions"), handle)
}

#[test]
fn remote_eval_happy_path_writes_the_record() {
    let dir = tmp_dir("remote-ok");
    let (url, handle) = mock_completions(2);
    let out_file = dir.join("rollout.json");
    let out = run_ok(&[
        "remote-eval",
        "--url",
        &url,
        "--prompt",
        "Q:",
        "--strategy",
        "greedy",
        "--max-len",
        "2",
        "--out",
        &path_str(&out_file),
    ]);
    handle.join().unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.trim(), "okok");
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_file).unwrap()).unwrap();
    assert_eq!(record["steps"].as_array().unwrap().len(), 2);
}

#[test]
fn remote_eval_failure_leaves_no_output_file() {
    let dir = tmp_dir("remote-down");
    let out_file = dir.join("rollout.json");
    // grab an unused port, then close it so connections are refused
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let out = bin()
        .args([
            "remote-eval",
            "--url",
            &format!("http://127.0.0.1:{port}/v1/completions"),
            "--prompt",
            "Q:",
            "--strategy",
            "greedy",
            "--max-len",
            "2",
            "--retries",
            "1",
            "--out",
            &path_str(&out_file),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("transport") || stderr.contains("timed out"), "{stderr}");
    assert!(!out_file.exists(), "partial output was written");
}
