use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sketchpost::species::{pyp_mean_asymptotic, PypParams};
use sketchpost::traits::{poisson_gamma_posterior, TraitQuery};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sketchpost"));
    c.env_remove("SKETCHPOST_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&ok(args)).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn counts_csv(counts: &[u64]) -> String {
    counts.iter().map(|c| format!("{c}\n")).collect()
}

#[test]
fn estimate_dp_flat_sketch_mean() {
    let dir = TempDir::new().unwrap();
    let s = write(&dir, "s.csv", &counts_csv(&[5; 10]));
    let rows = json(&["estimate", "--sketch", &s, "--bucket", "2", "--prior", "dp", "--theta", "1"]);
    let r = &rows[0];
    assert_eq!(r["c_j"], 5);
    assert!((r["mean"].as_f64().unwrap() - 5.0 / 1.1).abs() < 1e-12);
    assert_eq!(r["method"], "dp-exact");
    assert_eq!(r["mode"], 5);
}

#[test]
fn estimate_asymptotic_echoes_library() {
    let dir = TempDir::new().unwrap();
    let s = write(&dir, "s.csv", &counts_csv(&[100, 40]));
    let rows = json(&[
        "estimate", "--sketch", &s, "--bucket", "0", "--prior", "pyp", "--alpha", "0.5", "--gamma", "1", "--mode",
        "asymptotic",
    ]);
    let want = pyp_mean_asymptotic(100, PypParams::new(0.5, 1.0).unwrap(), 2).unwrap();
    assert_eq!(rows[0]["mean"].as_f64().unwrap(), want);
    assert_eq!(rows[0]["method"], "pyp-asymptotic");
}

#[test]
fn estimate_gate_names_monte_carlo() {
    let dir = TempDir::new().unwrap();
    let s = write(&dir, "s.csv", &counts_csv(&[100; 4]));
    let out = run(&["estimate", "--sketch", &s, "--bucket", "0", "--prior", "pyp", "--alpha", "0.5", "--gamma", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--mode mc"));
    // Monte Carlo on the same sketch succeeds and is reproducible.
    let mc = [
        "estimate", "--sketch", &s, "--bucket", "0", "--prior", "pyp", "--alpha", "0.5", "--gamma", "1", "--mode", "mc",
        "--iters", "200", "--seed", "4",
    ];
    assert_eq!(ok(&mc), ok(&mc));
}

#[test]
fn estimate_query_tokens_use_sketch_hash() {
    let dir = TempDir::new().unwrap();
    let corpus = write(&dir, "c.txt", "a a a b c c\n");
    let s = dir.path().join("s.json");
    ok(&["sketch", "--input", &corpus, "-J", "1", "--seed", "9", "--out", s.to_str().unwrap()]);
    let q = write(&dir, "q.txt", "a zz");
    let rows = json(&["estimate", "--sketch", s.to_str().unwrap(), "--query", &q, "--prior", "dp", "--theta", "1"]);
    assert_eq!(rows.as_array().unwrap().len(), 2);
    assert_eq!(rows[1]["query"], "zz");
    assert_eq!(rows[0]["c_j"], 6);
}

#[test]
fn cardinality_two_singletons() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.csv", &counts_csv(&[1, 1]));
    let v = json(&["cardinality", "--sketch", &a, "--prior", "dp", "--theta", "2"]);
    assert!((v["k_hat"].as_f64().unwrap() - 2.0).abs() < 1e-12);

    let p = write(&dir, "p.csv", &counts_csv(&[4, 0, 7, 1]));
    let q = write(&dir, "q.csv", &counts_csv(&[7, 1, 0, 4]));
    let args = |f: &str| json(&["cardinality", "--sketch", f, "--prior", "pyp", "--alpha", "0.3", "--gamma", "1"]);
    let (kp, kq) = (args(&p)["k_hat"].as_f64().unwrap(), args(&q)["k_hat"].as_f64().unwrap());
    assert!((kp - kq).abs() <= 1e-12 * kp);

    let empty = write(&dir, "e.csv", &counts_csv(&[0, 0]));
    assert_eq!(json(&["cardinality", "--sketch", &empty, "--prior", "dp", "--theta", "1"])["k_hat"], 0.0);
}

#[test]
fn sketch_empty_and_deterministic() {
    let dir = TempDir::new().unwrap();
    let empty = write(&dir, "e.txt", "");
    let v: Value = serde_json::from_str(&ok(&["sketch", "--input", &empty, "-J", "4", "--seed", "1"])).unwrap();
    assert_eq!(v["n"], 0);
    assert_eq!(v["counts"], serde_json::json!([0, 0, 0, 0]));

    let corpus = write(&dir, "c.txt", "x y z x\nw x\n");
    let a = ok(&["sketch", "--input", &corpus, "-J", "16", "--seed", "3", "--format", "csv"]);
    assert_eq!(a, ok(&["sketch", "--input", &corpus, "-J", "16", "--seed", "3", "--format", "csv"]));
    assert!(a.starts_with("# seed=3\n"));
}

#[test]
fn config_precedence_and_seed_env() {
    let dir = TempDir::new().unwrap();
    let corpus = write(&dir, "c.txt", "x y z");
    let cfg = write(&dir, "cfg.txt", "# defaults\nwidth = 8\nformat = \"json\"\n");
    let sk = |extra: &[&str], env: Option<&str>| -> Value {
        let mut c = bin();
        c.args(["--config", &cfg, "sketch", "--input", &corpus]).args(extra);
        if let Some(s) = env {
            c.env("SKETCHPOST_SEED", s);
        }
        let out = c.output().unwrap();
        assert!(out.status.success());
        serde_json::from_slice(&out.stdout).unwrap()
    };
    assert_eq!(sk(&[], None)["J"], 8);
    assert_eq!(sk(&["-J", "3"], None)["J"], 3);
    assert_eq!(sk(&[], None)["seed"], 0);
    assert_eq!(sk(&[], Some("77"))["seed"], 77);
    assert_eq!(sk(&["--seed", "5"], Some("77"))["seed"], 5);

    let cfg_seed = write(&dir, "cfg2.txt", "seed=12\n");
    let out = bin()
        .args(["--config", &cfg_seed, "sketch", "--input", &corpus])
        .env("SKETCHPOST_SEED", "77")
        .output()
        .unwrap();
    assert_eq!(serde_json::from_slice::<Value>(&out.stdout).unwrap()["seed"], 12);

    let bad = write(&dir, "bad.txt", "width = many\n");
    assert_eq!(run(&["--config", &bad, "sketch", "--input", &corpus]).status.code(), Some(2));
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["estimate", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["sketch", "--input", "/nonexistent/tokens"]).status.code(), Some(4));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let dir = TempDir::new().unwrap();
    let s = write(&dir, "s.csv", "1\nnot-a-number\n");
    assert_eq!(run(&["cardinality", "--sketch", &s, "--theta", "1"]).status.code(), Some(4));
    let s = write(&dir, "t.csv", "1\n2\n");
    assert_eq!(run(&["estimate", "--sketch", &s, "--bucket", "5", "--theta", "1"]).status.code(), Some(2));
    assert_eq!(run(&["estimate", "--sketch", &s, "--bucket", "0"]).status.code(), Some(2));
}

#[test]
fn traits_golden_value() {
    let v = json(&["traits", "--c", "5", "--b", "2", "--a", "1", "--n", "100", "-J", "10", "--theta", "2"]);
    let q = TraitQuery::new(5, 2, 1, 100).unwrap();
    let want = poisson_gamma_posterior(&q, 2.0, 10).unwrap().probs();
    let got: Vec<f64> = v["probs"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(got, want);
    // a = 0 is outside the model.
    let out = run(&["traits", "--c", "5", "--b", "2", "--a", "0", "--n", "100", "-J", "10", "--theta", "2"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn simulate_deterministic_and_empty() {
    let a = ok(&["simulate", "--model", "pyp", "--alpha", "0.5", "--gamma", "2", "--n", "300", "--seed", "8"]);
    assert_eq!(a, ok(&["simulate", "--model", "pyp", "--alpha", "0.5", "--gamma", "2", "--n", "300", "--seed", "8"]));
    assert_eq!(a.lines().count(), 300);
    assert_eq!(a.lines().next(), Some("s0"));
    assert_eq!(ok(&["simulate", "--model", "zipf", "--zipf-c", "2", "--n", "0"]), "");
    let ibp = json(&["simulate", "--model", "ibp", "--theta", "2", "--lambda", "1e-12", "--n", "5", "--seed", "1"]);
    assert!(ibp["atom_totals"].as_array().unwrap().iter().all(|t| t == 0));
}

#[test]
fn fit_dp_and_ibp() {
    let dir = TempDir::new().unwrap();
    let s = write(&dir, "s.csv", &counts_csv(&[30, 2, 0, 11, 5, 0, 1, 1]));
    let v = json(&["fit", "--model", "dp", "--sketch", &s]);
    assert_eq!(v["params_hat"]["model"], "dp");
    assert_eq!(v["converged"], true);
    let v = json(&["fit", "--model", "ibp", "--sketch", &s, "--n", "50"]);
    assert_eq!(v["params_hat"]["model"], "ibp");
    assert_eq!(run(&["fit", "--model", "ibp", "--sketch", &s]).status.code(), Some(2));
}

/// Per-bin MAE recomputed from the per-symbol dump, averaged over seeds.
fn reference_mae(dump: &str, width: usize, edges: &[(u64, u64)]) -> Vec<f64> {
    let mut per_seed: std::collections::BTreeMap<u64, Vec<(f64, u64)>> = Default::default();
    for line in dump.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[0].parse::<usize>().unwrap() != width {
            continue;
        }
        let seed: u64 = f[1].parse().unwrap();
        let (truth, est): (u64, f64) = (f[3].parse().unwrap(), f[6].parse().unwrap());
        let acc = per_seed.entry(seed).or_insert_with(|| vec![(0.0, 0); edges.len()]);
        if let Some(b) = edges.iter().position(|&(lo, hi)| truth > lo && truth <= hi) {
            acc[b].0 += (truth as f64 - est).abs();
            acc[b].1 += 1;
        }
    }
    let k = per_seed.len() as f64;
    (0..edges.len())
        .map(|b| per_seed.values().map(|acc| if acc[b].1 == 0 { f64::NAN } else { acc[b].0 / acc[b].1 as f64 }).sum::<f64>() / k)
        .collect()
}

#[test]
fn evaluate_report_matches_dump() {
    let dir = TempDir::new().unwrap();
    let corpus = ok(&["simulate", "--model", "zipf", "--zipf-c", "1.4", "--n", "20000", "--seed", "2"]);
    let c = write(&dir, "c.txt", &corpus);
    let dump = dir.path().join("d.csv");
    let js = dir.path().join("r.json");
    let args = [
        "evaluate", "--corpus", &c, "-J", "64,256", "--seeds", "1,2,3", "--prior", "dp", "--fit", "--dump",
        dump.to_str().unwrap(), "--json", js.to_str().unwrap(),
    ];
    let csv = ok(&args);
    assert_eq!(csv, ok(&args));
    let dump = fs::read_to_string(&dump).unwrap();
    let reports: Value = serde_json::from_str(&fs::read_to_string(&js).unwrap()).unwrap();
    for r in reports.as_array().unwrap() {
        let width = r["J"].as_u64().unwrap() as usize;
        let edges: Vec<(u64, u64)> =
            r["bins"].as_array().unwrap().iter().map(|b| (b[0].as_u64().unwrap(), b[1].as_u64().unwrap())).collect();
        let want = reference_mae(&dump, width, &edges);
        for (row, w) in csv.lines().skip(1).filter(|l| l.starts_with(&format!("dp-fit,{width},"))).zip(&want) {
            let got: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
            assert!((got.is_nan() && w.is_nan()) || (got - w).abs() <= 1e-9 * (1.0 + w.abs()), "{row} vs {w}");
        }
    }
    assert!(Path::new(&c).exists());
}

#[test]
fn evaluate_custom_bins_and_errors() {
    let dir = TempDir::new().unwrap();
    let c = write(&dir, "c.txt", "a a b c c c c");
    let csv = ok(&["evaluate", "--corpus", &c, "-J", "4", "--seeds", "1", "--theta", "1", "--bins", "0,2,10"]);
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("dp,4,0,2,2,"));
    assert!(rows[2].starts_with("dp,4,2,10,1,"));
    assert_eq!(run(&["evaluate", "--corpus", &c, "-J", "4", "--bins", "3,1", "--theta", "1"]).status.code(), Some(2));
    assert_eq!(run(&["evaluate", "--corpus", &c, "-J", "4"]).status.code(), Some(2));
}
