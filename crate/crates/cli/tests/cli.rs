use std::path::Path;
use std::process::{Command, Output};

use ssp_core::metrics::MetricsReport;
use ssp_core::scenario::read_scenario;

fn ssp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssp")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ssp(args);
    assert!(
        out.status.success(),
        "ssp {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn metrics(dir: &Path) -> MetricsReport {
    serde_json::from_str(&std::fs::read_to_string(dir.join("metrics.json")).unwrap()).unwrap()
}

#[test]
fn gen_is_deterministic_and_validated() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a.json"), d.path().join("b.json"));
    for p in [&a, &b] {
        ok(&["gen", "--words", "3", "--duration", "5", "--seed", "1", "--out", s(p)]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let big = d.path().join("big.json");
    ok(&["gen", "--words", "500", "--duration", "300", "--seed", "2", "--out", s(&big)]);
    let script = read_scenario(&big).unwrap();
    assert!(script.total_duration >= script.words.last().unwrap().end);

    let zero = ssp(&["gen", "--words", "0", "--duration", "5", "--out", s(&a)]);
    assert!(!zero.status.success());
    assert!(!zero.stderr.is_empty());
}

#[test]
fn unwritable_output_fails() {
    let out = ssp(&["gen", "--words", "3", "--duration", "5", "--out", "/nonexistent/dir/x.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    assert!(out.stdout.is_empty());
}

#[test]
fn ablations_and_determinism() {
    let d = tempfile::tempdir().unwrap();
    let scen = d.path().join("s.json");
    ok(&["gen", "--words", "40", "--duration", "25", "--seed", "3", "--stability", "1.0", "--out", s(&scen)]);

    let run = |name: &str, ablation: &[&str]| {
        let dir = d.path().join(name);
        let mut args = vec!["run", "--scenario", s(&scen), "--out", s(&dir)];
        if !ablation.is_empty() {
            args.push("--ablation");
            args.extend_from_slice(ablation);
        }
        ok(&args);
        dir
    };
    let none = run("none", &["none"]);
    let prune = run("prune", &["prune"]);
    let all = run("all", &["hush", "prune", "pipeline"]);
    let again = run("again", &["hush", "prune", "pipeline"]);

    let transcript = |dir: &Path| std::fs::read_to_string(dir.join("transcript.txt")).unwrap();
    assert_eq!(transcript(&none), transcript(&prune));
    assert!(metrics(&prune).total_model_calls < metrics(&none).total_model_calls);
    assert!(metrics(&all).avg_word_latency_ms < metrics(&none).avg_word_latency_ms);
    for f in ["transcript.txt", "metrics.json", "trace.csv"] {
        assert_eq!(
            std::fs::read(all.join(f)).unwrap(),
            std::fs::read(again.join(f)).unwrap(),
            "{f}"
        );
    }
    let header = std::fs::read_to_string(all.join("trace.csv")).unwrap();
    assert!(header.starts_with("round_index,window_start_s,window_end_s,n_raw_tokens,n_confirmed_delta,fallback"));

    let bad = ssp(&["run", "--scenario", s(&scen), "--out", s(&none), "--ablation", "turbo"]);
    assert!(!bad.status.success());
}

#[test]
fn config_file_and_validation() {
    let d = tempfile::tempdir().unwrap();
    let scen = d.path().join("s.json");
    ok(&["gen", "--words", "20", "--duration", "12", "--seed", "4", "--out", s(&scen)]);
    let cfg = d.path().join("c.toml");
    let mut text = ssp_core::scenario::encode_config(&ssp_core::types::RunConfig::baseline()).unwrap();
    std::fs::write(&cfg, &text).unwrap();
    ok(&["run", "--scenario", s(&scen), "--config", s(&cfg), "--out", s(&d.path().join("o"))]);

    text = text.replace("buffer_threshold_s = 15.0", "buffer_threshold_s = 2.0");
    std::fs::write(&cfg, &text).unwrap();
    let out = ssp(&["run", "--scenario", s(&scen), "--config", s(&cfg), "--out", s(&d.path().join("p"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("buffer_threshold_s"));

    std::fs::write(&scen, "{\"version\": 1}").unwrap();
    let out = ssp(&["run", "--scenario", s(&scen), "--out", s(&d.path().join("q"))]);
    assert!(!out.status.success());
}

#[test]
fn profile_table_feeds_run() {
    let d = tempfile::tempdir().unwrap();
    let scen = d.path().join("s.json");
    ok(&["gen", "--words", "30", "--duration", "20", "--seed", "5", "--out", s(&scen)]);
    let table = d.path().join("profile.csv");
    ok(&["profile", "--cores", "12", "--scenario", s(&scen), "--out", s(&table)]);
    let text = std::fs::read_to_string(&table).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "cpu_cores,gpu_cores,per_word_latency_ms");
    let rows: Vec<(String, f64)> = lines[1..lines.len() - 1]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (format!("C{}:G{}", f[0], f[1]), f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 6);
    let min = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let best = lines.last().unwrap().strip_prefix("# best: ").unwrap();
    assert_eq!(rows.iter().find(|r| r.1 == min).unwrap().0, best);

    let seven = ok(&["profile", "--cores", "7", "--scenario", s(&scen)]);
    assert_eq!(String::from_utf8_lossy(&seven.stdout).lines().count(), 3);
    assert!(!ssp(&["profile", "--cores", "6", "--scenario", s(&scen)]).status.success());

    ok(&["run", "--scenario", s(&scen), "--allocation", s(&table), "--out", s(&d.path().join("a"))]);
    ok(&["run", "--scenario", s(&scen), "--allocation", "C7:G4", "--live", "--out", s(&d.path().join("b"))]);
    assert!(!ssp(&["run", "--scenario", s(&scen), "--allocation", "C0:G0", "--out", s(&d.path().join("c"))])
        .status
        .success());
}

#[test]
fn train_hush_reports_validity() {
    let d = tempfile::tempdir().unwrap();
    let validity = |iters: &str, out: &Path| -> f64 {
        let o = ok(&["train-hush", "--dim", "64", "--iters", iters, "--seed", "7", "--out", s(out)]);
        let text = String::from_utf8(o.stdout).unwrap();
        text.trim().strip_prefix("validity ").unwrap().parse().unwrap()
    };
    let (a, b) = (d.path().join("a.hush"), d.path().join("b.hush"));
    assert!(validity("500", &a) >= 0.99);
    assert!(validity("500", &b) >= 0.99);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(validity("1", &d.path().join("c.hush")) > 0.5);
    assert!(!ssp(&["train-hush", "--dim", "1", "--out", s(&a)]).status.success());

    // a trained file is accepted by run
    let scen = d.path().join("s.json");
    ok(&["gen", "--words", "10", "--duration", "8", "--seed", "7", "--out", s(&scen)]);
    let cfg = d.path().join("c.toml");
    let config = ssp_core::types::RunConfig {
        seed: 7,
        ..Default::default()
    };
    std::fs::write(&cfg, ssp_core::scenario::encode_config(&config).unwrap()).unwrap();
    ok(&["run", "--scenario", s(&scen), "--config", s(&cfg), "--hush", s(&a), "--out", s(&d.path().join("o"))]);
}
