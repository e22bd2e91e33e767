//! End-to-end CLI behavior: subcommands, exit codes, artifact contents.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_liftnmf"))
}

fn write(path: &Path, contents: &str) {
    fs::write(path, contents).unwrap();
}

#[test]
fn factorize_rank_one_writes_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("v.csv");
    write(&input, "1,2\n3,4\n");
    let out = dir.path().join("out");

    let status = bin()
        .args(["factorize", "--input"])
        .arg(&input)
        .args(["--rank", "1", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let w: Vec<f64> = fs::read_to_string(out.join("W.csv"))
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert!((w[0] - 3.0).abs() < 1e-12 && (w[1] - 7.0).abs() < 1e-12);

    let h: Vec<f64> = fs::read_to_string(out.join("H.csv"))
        .unwrap()
        .trim()
        .split(',')
        .map(|c| c.parse().unwrap())
        .collect();
    assert!((h[0] - 0.4).abs() < 1e-12 && (h[1] - 0.6).abs() < 1e-12);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["rank"], 1);
    assert!(manifest["final_divergence"].as_f64().unwrap() > 0.0);
    assert_eq!(
        manifest["iterations"].as_u64().unwrap() as usize,
        fs::read_to_string(out.join("trace.jsonl"))
            .unwrap()
            .lines()
            .count()
    );
}

#[test]
fn factorize_rejects_rank_zero_as_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("v.csv");
    write(&input, "1,2\n3,4\n");
    let status = bin()
        .args(["factorize", "--input"])
        .arg(&input)
        .args(["--rank", "0", "--out"])
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let status = bin().args(["factorize", "--bogus"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["factorize", "--input"])
        .arg(dir.path().join("absent.csv"))
        .args(["--rank", "1", "--out"])
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn negative_entry_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("v.csv");
    write(&input, "1,-2\n3,4\n");
    let status = bin()
        .args(["factorize", "--input"])
        .arg(&input)
        .args(["--rank", "1", "--out"])
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn divergence_prints_zero_for_equal_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    write(&a, "1,2\n3,4\n");
    let output = bin()
        .args(["divergence", "--a"])
        .arg(&a)
        .arg("--b")
        .arg(&a)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&output.stdout).trim(), "0");
}

#[test]
fn divergence_shape_mismatch_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    write(&a, "1,2\n");
    write(&b, "1,2,3\n");
    let status = bin()
        .args(["divergence", "--a"])
        .arg(&a)
        .arg("--b")
        .arg(&b)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn verify_reports_exact_planted_factors() {
    let dir = tempfile::tempdir().unwrap();
    let v = dir.path().join("v.csv");
    let w = dir.path().join("w.csv");
    let h = dir.path().join("h.csv");
    write(&w, "3\n7\n");
    write(&h, "0.4,0.6\n");
    write(&v, "1.2,1.8\n2.8,4.2\n");
    let output = bin()
        .args(["verify", "--input"])
        .arg(&v)
        .arg("--w")
        .arg(&w)
        .arg("--h")
        .arg(&h)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("certified exact       = true"), "{stdout}");
}

#[test]
fn verify_renormalizes_non_stochastic_h() {
    let dir = tempfile::tempdir().unwrap();
    let v = dir.path().join("v.csv");
    let w = dir.path().join("w.csv");
    let h = dir.path().join("h.csv");
    // W·H = [[2,2],[2,2]]: same model after renormalization
    write(&w, "1\n1\n");
    write(&h, "2,2\n");
    write(&v, "2,2\n2,2\n");
    let output = bin()
        .args(["verify", "--input"])
        .arg(&v)
        .arg("--w")
        .arg(&w)
        .arg("--h")
        .arg(&h)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("renormalizing"), "{stdout}");
    assert!(stdout.contains("certified exact       = true"), "{stdout}");
}

#[test]
fn verify_flags_singular_models() {
    let dir = tempfile::tempdir().unwrap();
    let v = dir.path().join("v.csv");
    let w = dir.path().join("w.csv");
    let h = dir.path().join("h.csv");
    write(&v, "1,1\n1,1\n");
    write(&w, "1,0\n0,1\n");
    write(&h, "1,0\n0,1\n");
    let output = bin()
        .args(["verify", "--input"])
        .arg(&v)
        .arg("--w")
        .arg(&w)
        .arg("--h")
        .arg(&h)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("divergence            = inf"), "{stdout}");
}

#[test]
fn oracle_flag_reports_identity_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("v.csv");
    write(&input, "0.9,1.7,0.3\n1.2,0.5,2.4\n");
    let out = dir.path().join("out");
    let output = bin()
        .args(["factorize", "--input"])
        .arg(&input)
        .args(["--rank", "2", "--oracle", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("oracle max equivalence gap"), "{stdout}");
    // trace rows carry the gain terms
    let trace = fs::read_to_string(out.join("trace.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    assert!(first.get("gain_p").is_some());
    assert!(first.get("gain_q").is_some());
}

#[test]
fn restart_dispatch_is_thread_count_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("v.csv");
    write(&input, "0.9,0.2,1.4\n0.4,1.1,0.6\n1.3,0.5,0.8\n");
    let out1 = dir.path().join("one");
    let out4 = dir.path().join("four");

    let run = |out: &Path, threads: &str| {
        let status = bin()
            .env("LIFTNMF_THREADS", threads)
            .args(["factorize", "--input"])
            .arg(&input)
            .args(["--rank", "2", "--restarts", "4", "--seed", "11", "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
    };
    run(&out1, "1");
    run(&out4, "4");

    for name in ["W.csv", "H.csv", "trace.jsonl"] {
        assert_eq!(
            fs::read(out1.join(name)).unwrap(),
            fs::read(out4.join(name)).unwrap(),
            "{name} differs across thread counts"
        );
    }
}

#[test]
fn help_exits_zero() {
    let status = bin().arg("--help").status().unwrap();
    assert_eq!(status.code(), Some(0));
}
