//! Noise-level decay and convergence-rate studies.

use anyhow::{bail, Result};
use irgnm::rates::{fit_rate, RateFit};
use irgnm::solver::{run_newton_with, RunOptions};
use irgnm::{Observation, StoppingRule};

use crate::config::{ExperimentConfig, StoppingSpec, TruthSpec};
use crate::experiment::{run_cell, summarize, CellInput, RunRow, Summary};
use crate::problem::Problem;

#[derive(Debug, Clone, PartialEq)]
pub struct ErrnLevel {
    pub t: f64,
    pub runs_ok: usize,
    pub runs_failed: usize,
    /// Mean over replicates of `max_{n < steps} err_n`.
    pub mean_max_err: f64,
    /// Previous level's mean divided by this one.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ErrnResult {
    pub levels: Vec<ErrnLevel>,
    pub rows: Vec<RunRow>,
    pub misfit: &'static str,
}

/// Runs `errn.steps` outer steps with the first configured misfit at every
/// exposure time and reports the mean of the per-run maximal noise level.
pub fn run_errn_study(cfg: &ExperimentConfig) -> Result<ErrnResult> {
    cfg.validate()?;
    let problem = Problem::build(&cfg.problem)?;
    let penalty = problem.penalty(cfg.penalty.sobolev)?;
    let misfit = cfg.misfits[0];
    let mut run_cfg = cfg.clone();
    run_cfg.stopping = StoppingSpec::MaxIter;
    let mut levels: Vec<ErrnLevel> = Vec::new();
    let mut rows = Vec::new();
    for (ti, &t) in cfg.exposure_times.iter().enumerate() {
        let inp = CellInput {
            problem: &problem,
            penalty: &penalty,
            cfg: &run_cfg,
            misfit,
            ti,
            t,
            max_outer: cfg.errn.steps,
        };
        let cell = run_cell(&inp);
        let ok: Vec<f64> = cell.iter().filter(|r| r.ok()).filter_map(|r| r.max_err_n).collect();
        let mean = ok.iter().sum::<f64>() / ok.len() as f64;
        levels.push(ErrnLevel {
            t,
            runs_ok: ok.len(),
            runs_failed: cell.len() - ok.len(),
            mean_max_err: mean,
            ratio: levels.last().map(|p| p.mean_max_err / mean),
        });
        rows.extend(cell);
    }
    Ok(ErrnResult {
        levels,
        rows,
        misfit: misfit.label(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactStep {
    pub n: usize,
    /// `α_n`, the parameter that produced `u_{n+1}`.
    pub alpha: f64,
    /// Bregman distance `D(u_{n+1}, u†)` of the penalty.
    pub bregman: f64,
}

#[derive(Debug, Clone)]
pub struct RatesResult {
    pub noisy: Vec<Summary>,
    pub rows: Vec<RunRow>,
    /// Mean error against `1/√t`.
    pub noisy_fit: RateFit,
    pub exact: Vec<ExactStep>,
    /// Bregman distance against `α_n` on the fitting window.
    pub exact_fit: RateFit,
    /// Source index of the configured truth, if it has one.
    pub nu: Option<f64>,
}

impl RatesResult {
    /// Expected slopes `(2ν/(1+2ν), 2ν)` for a Hölder source of index ν.
    pub fn expected(&self) -> Option<(f64, f64)> {
        self.nu.map(|nu| (2.0 * nu / (1.0 + 2.0 * nu), 2.0 * nu))
    }
}

/// Sweeps the exposure times with the first misfit and fits the log-log
/// slope of the mean reconstruction error against the noise level `1/√t`;
/// separately runs noiseless data and fits the Bregman distance against
/// `α_n`.
pub fn run_rate_study(cfg: &ExperimentConfig) -> Result<RatesResult> {
    cfg.validate()?;
    if cfg.exposure_times.len() < 3 {
        bail!("a rate fit needs at least three exposure times");
    }
    let problem = Problem::build(&cfg.problem)?;
    let penalty = problem.penalty(cfg.penalty.sobolev)?;
    let misfit = cfg.misfits[0];
    let initial_error = problem.error(&problem.u0)?;

    let mut noisy = Vec::new();
    let mut rows = Vec::new();
    for (ti, &t) in cfg.exposure_times.iter().enumerate() {
        let inp = CellInput {
            problem: &problem,
            penalty: &penalty,
            cfg,
            misfit,
            ti,
            t,
            max_outer: cfg.newton.max_outer,
        };
        let cell = run_cell(&inp);
        let s = summarize(&cell, misfit.label(), t, &cfg.stopping, initial_error);
        if s.runs_ok == 0 {
            bail!("every run failed at t = {t}");
        }
        noisy.push(s);
        rows.extend(cell);
    }
    let xs: Vec<f64> = noisy.iter().map(|s| 1.0 / s.t.sqrt()).collect();
    let ys: Vec<f64> = noisy.iter().map(|s| s.mean_error).collect();
    let noisy_fit = fit_rate(&xs, &ys)?;

    let mut newton = cfg.newton.config(misfit.offset());
    newton.max_outer = cfg.rates.exact_max_outer;
    let run = run_newton_with(
        problem.model(),
        &misfit.misfit(),
        &penalty,
        &Observation::Signal(problem.gdag.clone()),
        &newton,
        &StoppingRule::MaxIter,
        &RunOptions::default(),
    )?;
    let exact = run
        .trace
        .steps
        .iter()
        .map(|s| {
            Ok(ExactStep {
                n: s.n,
                alpha: s.alpha,
                bregman: penalty.bregman_distance(&run.trace.iterates[s.n + 1], &problem.truth)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let [lo, hi] = cfg.rates.exact_steps;
    let window: Vec<&ExactStep> = exact.iter().filter(|e| e.n >= lo && e.n < hi).collect();
    let exact_fit = fit_rate(
        &window.iter().map(|e| e.alpha).collect::<Vec<_>>(),
        &window.iter().map(|e| e.bregman).collect::<Vec<_>>(),
    )?;
    let nu = match &cfg.problem {
        crate::config::ProblemSpec::Deconvolution {
            truth: TruthSpec::Source { nu, .. },
            ..
        } => Some(*nu),
        _ => None,
    };
    Ok(RatesResult {
        noisy,
        rows,
        noisy_fit,
        exact,
        exact_fit,
        nu,
    })
}
