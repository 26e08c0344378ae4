//! CSV writers. Every file starts with `# config_hash=<sha256>`; floats
//! use a fixed scientific format so output bytes depend only on values.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::check::CheckItem;
use crate::config::ExperimentConfig;
use crate::experiment::{ExperimentResult, RunRow, Summary};
use crate::studies::{ErrnResult, RatesResult};

pub fn fmt_f(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.12e}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
    } else {
        s.to_string()
    }
}

/// Collects the files of one invocation.
pub struct OutputDir {
    dir: PathBuf,
    hash: String,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path, cfg: &ExperimentConfig) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            hash: cfg.hash(),
            written: Vec::new(),
        })
    }

    pub fn files(&self) -> &[String] {
        &self.written
    }

    /// Writes `name` with the hash line, extra `# key=value` comments, the
    /// header and the rows.
    pub fn write(&mut self, name: &str, comments: &[(&str, String)], header: &str, rows: &[String]) -> Result<()> {
        let mut s = format!("# config_hash={}\n", self.hash);
        for (k, v) in comments {
            writeln!(s, "# {k}={v}").unwrap();
        }
        s.push_str(header);
        s.push('\n');
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        let path = self.dir.join(name);
        std::fs::write(&path, s).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Plain-text manifest: command, hash, resolved configuration and the
    /// files written.
    pub fn manifest(&self, command: &str, cfg: &ExperimentConfig) -> Result<()> {
        let mut s = String::new();
        writeln!(s, "command: {command}").unwrap();
        writeln!(s, "config_hash: {}", self.hash).unwrap();
        writeln!(s, "files:").unwrap();
        for f in &self.written {
            writeln!(s, "  {f}").unwrap();
        }
        writeln!(s, "config:").unwrap();
        for line in cfg.to_toml().lines() {
            writeln!(s, "  {line}").unwrap();
        }
        let path = self.dir.join("manifest.txt");
        std::fs::write(&path, s).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

pub const RUN_HEADER: &str =
    "misfit,t,replicate,seed,status,steps,index,error,best_index,best_error,max_err_n";

pub fn run_row(r: &RunRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        r.misfit,
        fmt_f(r.t),
        r.replicate,
        r.seed,
        csv_text(&r.status),
        r.steps,
        r.index.map(|i| i.to_string()).unwrap_or_default(),
        fmt_opt(r.error),
        r.best_index,
        fmt_f(r.best_error),
        fmt_opt(r.max_err_n),
    )
}

pub const SUMMARY_HEADER: &str =
    "misfit,t,stop_rule,runs_ok,runs_failed,N,rms_error,std_error,mean_error,initial_error";

pub fn summary_row(s: &Summary) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        s.misfit,
        fmt_f(s.t),
        s.stop_rule,
        s.runs_ok,
        s.runs_failed,
        fmt_f(s.index),
        fmt_f(s.rms_error),
        fmt_f(s.std_error),
        fmt_f(s.mean_error),
        fmt_f(s.initial_error),
    )
}

pub fn write_experiment(out: &mut OutputDir, cfg: &ExperimentConfig, res: &ExperimentResult) -> Result<()> {
    let comments = [
        ("error", res.error_label.to_string()),
        ("stop_rule", cfg.stopping.label().to_string()),
    ];
    let rows: Vec<String> = res.rows.iter().map(run_row).collect();
    out.write("runs.csv", &comments, RUN_HEADER, &rows)?;
    let mut sums: Vec<String> = Vec::new();
    for &t in &cfg.exposure_times {
        // The error of the initial guess, for reference.
        sums.push(format!(
            "initial_guess,{},none,1,0,{},{},{},{},{}",
            fmt_f(t),
            fmt_f(0.0),
            fmt_f(res.initial_error),
            fmt_f(0.0),
            fmt_f(res.initial_error),
            fmt_f(res.initial_error)
        ));
        sums.extend(res.summaries.iter().filter(|s| s.t == t).map(summary_row));
    }
    // `N` is the common index for oracle_mean and the mean selected index
    // otherwise.
    out.write("summary.csv", &comments, SUMMARY_HEADER, &sums)
}

pub fn write_errn(out: &mut OutputDir, cfg: &ExperimentConfig, res: &ErrnResult) -> Result<()> {
    let comments = [
        ("misfit", res.misfit.to_string()),
        ("variant", format!("{:?}", cfg.errn.variant).to_lowercase()),
        ("steps", cfg.errn.steps.to_string()),
    ];
    let rows: Vec<String> = res
        .levels
        .iter()
        .map(|l| {
            format!(
                "{},{},{},{},{}",
                fmt_f(l.t),
                l.runs_ok,
                l.runs_failed,
                fmt_f(l.mean_max_err),
                fmt_opt(l.ratio)
            )
        })
        .collect();
    out.write("errn.csv", &comments, "t,runs_ok,runs_failed,mean_max_err_n,ratio", &rows)?;
    let runs: Vec<String> = res.rows.iter().map(run_row).collect();
    out.write("errn_runs.csv", &comments, RUN_HEADER, &runs)
}

pub fn write_rates(out: &mut OutputDir, cfg: &ExperimentConfig, res: &RatesResult) -> Result<()> {
    let comments = [("stop_rule", cfg.stopping.label().to_string())];
    let rows: Vec<String> = res
        .noisy
        .iter()
        .map(|s| {
            format!(
                "{},{},{},{},{},{}",
                fmt_f(s.t),
                fmt_f(1.0 / s.t.sqrt()),
                s.runs_ok,
                s.runs_failed,
                fmt_f(s.mean_error),
                fmt_f(s.rms_error)
            )
        })
        .collect();
    out.write(
        "rates_noisy.csv",
        &comments,
        "t,noise_level,runs_ok,runs_failed,mean_error,rms_error",
        &rows,
    )?;
    let rows: Vec<String> = res
        .exact
        .iter()
        .map(|e| format!("{},{},{}", e.n, fmt_f(e.alpha), fmt_f(e.bregman)))
        .collect();
    out.write("rates_exact.csv", &[], "n,alpha,bregman", &rows)?;
    let exp = res.expected();
    let rows = vec![
        format!(
            "noisy_error_vs_noise_level,{},{},{},{},{}",
            fmt_f(res.noisy_fit.slope),
            fmt_f(res.noisy_fit.slope_se),
            fmt_f(res.noisy_fit.intercept),
            fmt_f(res.noisy_fit.r2),
            fmt_opt(exp.map(|e| e.0))
        ),
        format!(
            "exact_bregman_vs_alpha,{},{},{},{},{}",
            fmt_f(res.exact_fit.slope),
            fmt_f(res.exact_fit.slope_se),
            fmt_f(res.exact_fit.intercept),
            fmt_f(res.exact_fit.r2),
            fmt_opt(exp.map(|e| e.1))
        ),
    ];
    out.write("rates_fit.csv", &[], "fit,slope,slope_se,intercept,r2,expected_slope", &rows)
}

pub fn write_checks(out: &mut OutputDir, items: &[CheckItem]) -> Result<()> {
    let rows: Vec<String> = items
        .iter()
        .map(|c| {
            format!(
                "{},{},{},{},{}",
                c.name,
                fmt_f(c.value),
                if c.at_least { ">=" } else { "<=" },
                fmt_f(c.threshold),
                if c.pass { "pass" } else { "fail" }
            )
        })
        .collect();
    out.write("check.csv", &[], "check,value,relation,threshold,result", &rows)
}

/// Row-major matrix with a dimension comment.
pub fn matrix_rows(values: &[f64], cols: usize) -> Vec<String> {
    values
        .chunks(cols)
        .map(|r| r.iter().map(|v| fmt_f(*v)).collect::<Vec<_>>().join(","))
        .collect()
}
