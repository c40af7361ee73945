use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_crashbench"));
    c.env_remove("CRASHBENCH_SEED");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Plans and simulates a small bumper campaign, then splits it.
fn store(count: usize) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let n = count.to_string();
    let o = run(dir.path(), &["plan", "--count", &n, "--seed", "3", "--out", "plan.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(dir.path(), &["run", "--plan", "plan.json", "--out", "store", "--workers", "4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(dir.path(), &["split", "--root", "store", "--seed", "1"]);
    assert_eq!(code(&o), 0);
    let root = dir.path().join("store");
    (dir, root)
}

fn metric_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn help_and_bad_flags() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["--help"])), 0);
    assert_eq!(code(&run(dir.path(), &["plan", "--help"])), 0);
    assert_eq!(code(&run(dir.path(), &["plan", "--bogus"])), 2);
    assert_eq!(code(&run(dir.path(), &["frobnicate"])), 2);
    assert_eq!(code(&run(dir.path(), &["plan", "--count", "0", "--out", "p.json"])), 2);
    assert!(!dir.path().join("p.json").exists());
}

#[test]
fn vehicle_plan_counts_and_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["plan", "--kind", "vehicle", "--count", "500", "--seed", "9", "--out", "a.json"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).trim(), "15 anchors + 485 samples");
    run(dir.path(), &["plan", "--kind", "vehicle", "--count", "500", "--seed", "9", "--out", "b.json"]);
    assert_eq!(fs::read(dir.path().join("a.json")).unwrap(), fs::read(dir.path().join("b.json")).unwrap());
    assert!(dir.path().join("run_manifest.json").exists());
}

#[test]
fn seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["plan", "--count", "20", "--seed", "5", "--out", "flag.json"]);
    let o = bin().current_dir(dir.path()).env("CRASHBENCH_SEED", "5").args(["plan", "--count", "20", "--out", "env.json"]).output().unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(dir.path().join("flag.json")).unwrap(), fs::read(dir.path().join("env.json")).unwrap());
    let o = bin().current_dir(dir.path()).env("CRASHBENCH_SEED", "abc").args(["plan", "--count", "20", "--out", "x.json"]).output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn run_exit_codes_and_worker_independence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&run(d, &["run", "--plan", "missing.json", "--out", "s"])), 2);

    run(d, &["plan", "--count", "10", "--seed", "4", "--out", "plan.json"]);
    let mut plan: serde_json::Value = serde_json::from_slice(&fs::read(d.join("plan.json")).unwrap()).unwrap();
    plan["cases"] = serde_json::Value::Array(vec![]);
    fs::write(d.join("empty.json"), plan.to_string()).unwrap();
    assert_eq!(code(&run(d, &["run", "--plan", "empty.json", "--out", "e"])), 1);

    assert_eq!(code(&run(d, &["run", "--plan", "plan.json", "--out", "w1", "--workers", "1"])), 0);
    assert_eq!(code(&run(d, &["run", "--plan", "plan.json", "--out", "w4", "--workers", "4"])), 0);
    assert_eq!(fs::read(d.join("w1/master.csv")).unwrap(), fs::read(d.join("w4/master.csv")).unwrap());
    assert_eq!(code(&run(d, &["run", "--plan", "plan.json", "--out", "w1"])), 3);
    assert_eq!(code(&run(d, &["run", "--plan", "plan.json", "--out", "w1", "--overwrite"])), 0);
    assert!(d.join("w1/run_manifest.json").exists());
}

#[test]
fn split_fractions() {
    let (dir, _) = store(20);
    let d = dir.path();
    let o = run(d, &["split", "--root", "store", "--fractions", "0.7,0.15,0.15", "--out", "s.json"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).trim(), "train 14 / validation 3 / test 3");
    assert_eq!(code(&run(d, &["split", "--root", "store", "--fractions", "0.7,0.3,0.3", "--out", "bad.json"])), 2);
    assert_eq!(code(&run(d, &["split", "--root", "store", "--fractions", "0.5,0.5"])), 2);
    assert_eq!(code(&run(d, &["split", "--root", "nowhere"])), 2);
}

#[test]
fn train_eval_and_stats() {
    let (dir, _) = store(24);
    let d = dir.path();
    for (name, extra) in [("z0", vec!["--steps", "0"]), ("z1", vec!["--steps", "0"]), ("m", vec!["--epochs", "3"])] {
        let out = format!("models/{name}.ckpt");
        let mut args = vec!["train", "--root", "store", "--out", &out];
        args.extend(extra);
        let o = run(d, &args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    // zero steps leave the initialization untouched, and that is reproducible
    let z0 = fs::read(d.join("models/z0.ckpt")).unwrap();
    assert_eq!(z0, fs::read(d.join("models/z1.ckpt")).unwrap());
    assert_ne!(z0, fs::read(d.join("models/m.ckpt")).unwrap());
    let hist = fs::read_to_string(d.join("models/m.history.csv")).unwrap();
    assert_eq!(hist.lines().count(), 4);
    assert!(hist.starts_with("epoch,train_loss,val_loss"));

    let o = run(d, &["eval", "--root", "store", "--split", "train", "--ckpt", "models/z0.ckpt,models/m.ckpt,models/m.ckpt,zero", "--out", "ev"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ev = d.join("ev");
    for f in ["leaderboard.csv", "metrics_z0.csv", "metrics_m.csv", "metrics_m_2.csv", "metrics_zero.csv", "run_manifest.json"] {
        assert!(ev.join(f).exists(), "{f}");
    }
    // an untrained decoder predicts the rest state, same as the zero baseline
    assert_eq!(metric_rows(&ev.join("metrics_z0.csv")), metric_rows(&ev.join("metrics_zero.csv")));
    assert_eq!(metric_rows(&ev.join("metrics_m.csv")), metric_rows(&ev.join("metrics_m_2.csv")));
    assert_eq!(metric_rows(&ev.join("leaderboard.csv")).len(), 4);

    let o = run(d, &["eval", "--root", "store", "--ckpt", "zero", "--probe-ms", "999", "--out", "bad"]);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&run(d, &["eval", "--root", "store", "--ckpt", "models/none.ckpt"])), 2);

    let o = run(d, &["stats", "--metrics", "ev/metrics_m.csv", "--against", "ev/metrics_m_2.csv", "--replicates", "500", "--permutations", "500"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sig: serde_json::Value = serde_json::from_slice(&fs::read(ev.join("significance.json")).unwrap()).unwrap();
    let text = sig.to_string();
    assert!(text.contains("\"permutation_p\":1.0"), "{text}");

    // drop a case so the ids no longer line up
    let full = fs::read_to_string(ev.join("metrics_zero.csv")).unwrap();
    let lines: Vec<&str> = full.lines().collect();
    let short = lines[..lines.len() - 1].join("\n") + "\n";
    fs::write(ev.join("short.csv"), short).unwrap();
    let o = run(d, &["stats", "--metrics", "ev/metrics_m.csv", "--against", "ev/short.csv", "--replicates", "100", "--permutations", "100"]);
    assert_ne!(code(&o), 0);
}

fn write_history(path: &Path) {
    let mut s = String::from("time_ms,flat,wave\n");
    for i in 0..400 {
        let t = i as f64 * 0.1;
        s.push_str(&format!("{t},2.5,{}\n", (2.0 * std::f64::consts::PI * 0.3 * t).sin()));
    }
    fs::write(path, s).unwrap();
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap_or_else(|| panic!("no {name}"));
    r.records().map(|rec| rec.unwrap()[idx].parse().unwrap()).collect()
}

#[test]
fn filter_channels() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_history(&d.join("h.csv"));
    assert_eq!(code(&run(d, &["filter", "--in", "h.csv", "--channel", "flat", "--out", "f.csv"])), 0);
    for v in column(&d.join("f.csv"), "flat_cfc60") {
        assert!((v - 2.5).abs() < 1e-9, "{v}");
    }
    assert_eq!(code(&run(d, &["filter", "--in", "h.csv", "--channel", "absent", "--out", "g.csv"])), 2);

    assert_eq!(code(&run(d, &["filter", "--in", "h.csv", "--channel", "wave", "--out", "once.csv"])), 0);
    assert_eq!(code(&run(d, &["filter", "--in", "once.csv", "--channel", "wave_cfc60", "--out", "twice.csv"])), 0);
    let once = column(&d.join("twice.csv"), "wave_cfc60");
    let twice = column(&d.join("twice.csv"), "wave_cfc60_cfc60");
    let diff = once.iter().zip(&twice).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff > 1e-6, "refiltering changed nothing: {diff}");
    // the original columns survive untouched
    assert_eq!(column(&d.join("twice.csv"), "wave"), column(&d.join("h.csv"), "wave"));
}
