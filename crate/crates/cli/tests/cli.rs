use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use irgnm_cli::config::{ProblemSpec, StoppingSpec};
use irgnm_cli::experiment::RunRow;
use irgnm_cli::problem::Problem;
use irgnm_cli::{run_experiment, run_rate_study, ExperimentConfig};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn irgnm(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irgnm"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn small() -> ExperimentConfig {
    ExperimentConfig {
        replicates: 4,
        exposure_times: vec![1e3, 1e4],
        ..ExperimentConfig::default()
    }
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, text).unwrap();
    p
}

/// Data lines of a CSV, split on commas, keyed by header name.
fn table(path: &Path) -> Vec<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    lines
        .map(|l| header.iter().cloned().zip(l.split(',').map(String::from)).collect())
        .collect()
}

fn num(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap()
}

#[test]
fn run_writes_hashed_files_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "replicates = 3\nexposure_times = [1000.0]\n");
    let out = dir.path().join("out");
    let o = irgnm(&["run", "--config", cfg.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    let hash = manifest
        .lines()
        .find_map(|l| l.strip_prefix("config_hash: "))
        .unwrap()
        .to_string();
    let mut n = 0;
    for e in std::fs::read_dir(&out).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "csv") {
            let text = std::fs::read_to_string(&p).unwrap();
            assert!(text.starts_with(&format!("# config_hash={hash}\n")), "{}", p.display());
            assert!(manifest.contains(p.file_name().unwrap().to_str().unwrap()));
            n += 1;
        }
    }
    assert_eq!(n, 2);
}

#[test]
fn repeated_invocations_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "replicates = 2\nexposure_times = [1000.0]\n");
    let read = |d: &Path| {
        ["runs.csv", "summary.csv"].map(|f| std::fs::read(d.join(f)).unwrap())
    };
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for d in [&a, &b] {
        assert!(irgnm(&["run", "--seed", "5", "--config", cfg.to_str().unwrap()], d).status.success());
    }
    assert!(irgnm(&["run", "--seed", "6", "--config", cfg.to_str().unwrap()], &c).status.success());
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a)[0], read(&c)[0]);
}

#[test]
fn bad_config_gives_a_json_error_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "replicates = 0\n");
    let o = irgnm(&["run", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert!(!o.status.success());
    let stderr = String::from_utf8(o.stderr).unwrap();
    let line: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(line["command"], "run");
    assert!(line["message"].as_str().unwrap().contains("replicates"));

    let cfg = write_config(dir.path(), "no_such_key = 1\n");
    let o = irgnm(&["errn", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert!(!o.status.success());
    let line: serde_json::Value = serde_json::from_str(String::from_utf8(o.stderr).unwrap().trim()).unwrap();
    assert_eq!(line["command"], "errn");
}

#[test]
fn rates_needs_three_exposure_times() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "replicates = 1\nexposure_times = [100.0, 1000.0]\n");
    let o = irgnm(&["rates", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert!(!o.status.success());
    let line: serde_json::Value = serde_json::from_str(String::from_utf8(o.stderr).unwrap().trim()).unwrap();
    assert!(line["message"].as_str().unwrap().contains("three"));

    let mut c = small();
    c.exposure_times = vec![1e3, 1e4];
    assert!(run_rate_study(&c).is_err());
}

#[test]
fn summaries_are_recomputable_from_run_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "replicates = 5\nexposure_times = [1000.0, 10000.0]\nmisfits = [{ kind = \"kl\" }, { kind = \"l2\" }]\n\
         [stopping]\nrule = \"oracle\"\n",
    );
    let out = dir.path().join("out");
    assert!(irgnm(&["run", "--config", cfg.to_str().unwrap()], &out).status.success());
    let runs = table(&out.join("runs.csv"));
    let sums = table(&out.join("summary.csv"));
    let close = |a: f64, b: f64, scale: f64| (a - b).abs() <= 1e-12 * scale.abs().max(1e-300);
    for s in sums.iter().filter(|s| s["misfit"] != "initial_guess") {
        let cell: Vec<&BTreeMap<String, String>> = runs
            .iter()
            .filter(|r| r["misfit"] == s["misfit"] && r["t"] == s["t"] && !r["error"].is_empty())
            .collect();
        let k = cell.len() as f64;
        assert_eq!(k, num(s, "runs_ok"));
        let e: Vec<f64> = cell.iter().map(|r| num(r, "error")).collect();
        let mean = e.iter().sum::<f64>() / k;
        let rms = (e.iter().map(|x| x * x).sum::<f64>() / k).sqrt();
        let std = (e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / k).sqrt();
        let n = cell.iter().map(|r| num(r, "index")).sum::<f64>() / k;
        assert!(close(mean, num(s, "mean_error"), mean), "{s:?}");
        assert!(close(rms, num(s, "rms_error"), rms), "{s:?}");
        assert!(close(std, num(s, "std_error"), mean), "{s:?}");
        assert!(close(n, num(s, "N"), n), "{s:?}");
        // Under the per-run oracle the reported error is the smallest one.
        for r in &cell {
            assert_eq!(r["error"], r["best_error"]);
        }
    }
}

#[test]
fn initial_guess_row_matches_a_direct_computation() {
    let cfg = ExperimentConfig {
        replicates: 1,
        exposure_times: vec![1e3],
        ..ExperimentConfig::default()
    };
    let res = run_experiment(&cfg).unwrap();
    let p = Problem::build(&cfg.problem).unwrap();
    let direct = p.u0.sub(&p.truth).unwrap().norm();
    assert_eq!(res.initial_error, direct);
    assert_eq!(res.summaries[0].initial_error, direct);
}

#[test]
fn common_oracle_index_is_shared_within_a_cell() {
    let res = run_experiment(&small()).unwrap();
    assert_eq!(small().stopping, StoppingSpec::OracleMean);
    for t in [1e3, 1e4] {
        let idx: Vec<Option<usize>> = res
            .rows
            .iter()
            .filter(|r: &&RunRow| r.misfit == "kl" && r.t == t)
            .map(|r| r.index)
            .collect();
        assert_eq!(idx.len(), 4);
        assert!(idx.windows(2).all(|w| w[0] == w[1]));
        assert!(idx[0].unwrap() > 0);
    }
}

#[test]
fn rate_slope_is_stable_under_more_replicates() {
    let mut cfg = ExperimentConfig::load(&configs().join("rates.toml")).unwrap();
    cfg.replicates = 25;
    let a = run_rate_study(&cfg).unwrap();
    cfg.replicates = 50;
    let b = run_rate_study(&cfg).unwrap();
    let half_width = 2.0 * a.noisy_fit.slope_se;
    assert!(
        (a.noisy_fit.slope - b.noisy_fit.slope).abs() <= half_width,
        "{:?} vs {:?}",
        a.noisy_fit,
        b.noisy_fit
    );
}

#[test]
fn shipped_configs_parse() {
    for name in ["reference.toml", "misfit_comparison.toml", "errn.toml", "rates.toml", "phase_retrieval.toml"] {
        let cfg = ExperimentConfig::load(&configs().join(name)).unwrap();
        cfg.validate().unwrap();
    }
    let pr = ExperimentConfig::load(&configs().join("phase_retrieval.toml")).unwrap();
    assert!(matches!(pr.problem, ProblemSpec::PhaseRetrieval { .. }));
}

#[test]
fn check_and_plot_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("check");
    assert!(irgnm(&["check"], &out).status.success());
    let rows = table(&out.join("check.csv"));
    assert!(rows.len() >= 15 && rows.iter().all(|r| r["result"] == "pass"));

    let cfg = write_config(dir.path(), "misfits = [{ kind = \"kl\" }, { kind = \"l2\" }]\n");
    let out = dir.path().join("plot");
    let o = irgnm(&["plot", "--config", cfg.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["profiles.csv", "trace_kl.csv", "trace_l2.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}
