//! Replicated runs over exposure times and their aggregation.

use anyhow::Result;
use irgnm::poisson::{sample_counts, ErrConstants};
use irgnm::solver::{run_newton_with, ErrSource, RunOptions, RunStatus};
use irgnm::stopping::oracle_index;
use irgnm::{Observation, QuadraticPenalty, StoppingRule};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, MisfitSpec, StoppingSpec};
use crate::problem::Problem;

/// Seed of the counts for exposure-time index `ti` and replicate `rep`.
/// Independent of the misfit, so fidelities are compared on identical data.
pub fn replicate_seed(base: u64, ti: usize, rep: usize) -> u64 {
    base.wrapping_add((ti as u64) << 32).wrapping_add(rep as u64)
}

/// One replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub misfit: &'static str,
    pub t: f64,
    pub replicate: usize,
    pub seed: u64,
    /// `completed`, `halted` or `failed: <reason>`.
    pub status: String,
    /// Outer steps taken.
    pub steps: usize,
    /// Reported iterate and its error; `None` for failed runs.
    pub index: Option<usize>,
    pub error: Option<f64>,
    /// Per-run smallest error and where it occurs.
    pub best_index: usize,
    pub best_error: f64,
    /// `max_n err_n` over the steps taken.
    pub max_err_n: Option<f64>,
    /// Error of every iterate `u_0, …, u_steps`.
    pub errors: Vec<f64>,
}

impl RunRow {
    pub fn ok(&self) -> bool {
        self.index.is_some()
    }
}

/// Aggregate over the successful runs of one (misfit, t) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub misfit: &'static str,
    pub t: f64,
    pub stop_rule: &'static str,
    pub runs_ok: usize,
    pub runs_failed: usize,
    /// Common index for `oracle_mean`, mean selected index otherwise.
    pub index: f64,
    /// `sqrt(mean e²)`.
    pub rms_error: f64,
    /// Population standard deviation of `e`.
    pub std_error: f64,
    pub mean_error: f64,
    pub initial_error: f64,
}

pub struct CellInput<'a> {
    pub problem: &'a Problem,
    pub penalty: &'a QuadraticPenalty,
    pub cfg: &'a ExperimentConfig,
    pub misfit: MisfitSpec,
    pub ti: usize,
    pub t: f64,
    pub max_outer: usize,
}

fn core_rule(spec: &StoppingSpec, t: f64, penalty: &QuadraticPenalty) -> StoppingRule {
    match *spec {
        StoppingSpec::OracleMean | StoppingSpec::Oracle | StoppingSpec::MaxIter => StoppingRule::MaxIter,
        StoppingSpec::APrioriHoelder { tau, nu } => StoppingRule::APrioriHoelder { tau, nu },
        StoppingSpec::APrioriLog { tau } => StoppingRule::APrioriLog { tau },
        StoppingSpec::Lepskii {
            err_scale,
            gamma_nl,
            c_bd,
            q,
        } => StoppingRule::Lepskii {
            err_bound: err_scale / t.sqrt(),
            gamma_nl,
            c_bd,
            q,
            metric: Some(Box::new(penalty.clone())),
        },
    }
}

fn one_run(inp: &CellInput<'_>, rep: usize) -> RunRow {
    let seed = replicate_seed(inp.cfg.seed, inp.ti, rep);
    let mut row = RunRow {
        misfit: inp.misfit.label(),
        t: inp.t,
        replicate: rep,
        seed,
        status: String::new(),
        steps: 0,
        index: None,
        error: None,
        best_index: 0,
        best_error: f64::NAN,
        max_err_n: None,
        errors: Vec::new(),
    };
    let result = (|| -> Result<()> {
        let p = inp.problem;
        let counts = sample_counts(&p.gdag, inp.t, p.binning.clone(), seed)?;
        let mut newton = inp.cfg.newton.config(inp.misfit.offset());
        newton.max_outer = inp.max_outer;
        let rule = core_rule(&inp.cfg.stopping, inp.t, inp.penalty);
        let opts = RunOptions {
            truth: Some(p.truth.clone()),
            err: ErrSource::Poisson {
                variant: inp.cfg.errn.variant.into(),
                constants: ErrConstants::default(),
            },
        };
        let run = run_newton_with(
            p.model(),
            &inp.misfit.misfit(),
            inp.penalty,
            &Observation::Counts(counts),
            &newton,
            &rule,
            &opts,
        )?;
        let tr = &run.trace;
        row.steps = tr.steps.len();
        row.errors = tr.iterates.iter().map(|u| p.error(u)).collect::<Result<_>>()?;
        row.best_index = oracle_index(&row.errors);
        row.best_error = row.errors[row.best_index];
        row.max_err_n = tr.errs().map(|e| e.iter().copied().fold(0.0, f64::max));
        match &tr.status {
            RunStatus::Failed { step, reason } => {
                row.status = format!("failed at step {step}: {reason}");
            }
            s => {
                row.status = if *s == RunStatus::Halted { "halted" } else { "completed" }.into();
                let idx = match inp.cfg.stopping {
                    StoppingSpec::Oracle => row.best_index,
                    _ => tr.selection.as_ref().map_or(tr.iterates.len() - 1, |s| s.index),
                };
                row.index = Some(idx);
                row.error = Some(row.errors[idx]);
            }
        }
        Ok(())
    })();
    if let Err(e) = result {
        row.status = format!("failed: {e}");
        row.index = None;
        row.error = None;
    }
    row
}

/// Runs all replicates of one cell. Rows come back in replicate order
/// whatever the scheduling.
pub fn run_cell(inp: &CellInput<'_>) -> Vec<RunRow> {
    let mut rows: Vec<RunRow> = (0..inp.cfg.replicates)
        .into_par_iter()
        .map(|rep| one_run(inp, rep))
        .collect();
    if inp.cfg.stopping == StoppingSpec::OracleMean {
        apply_common_index(&mut rows);
    }
    rows
}

/// Replaces per-run selections by the index minimizing the mean squared
/// error over the successful runs, within the shortest of their traces.
pub fn apply_common_index(rows: &mut [RunRow]) {
    let ok: Vec<usize> = (0..rows.len()).filter(|i| rows[*i].ok()).collect();
    let Some(len) = ok.iter().map(|i| rows[*i].errors.len()).min() else {
        return;
    };
    let mse: Vec<f64> = (0..len)
        .map(|n| ok.iter().map(|i| rows[*i].errors[n].powi(2)).sum::<f64>())
        .collect();
    let n = oracle_index(&mse);
    for i in ok {
        rows[i].index = Some(n);
        rows[i].error = Some(rows[i].errors[n]);
    }
}

pub fn summarize(rows: &[RunRow], misfit: &'static str, t: f64, stop: &StoppingSpec, initial_error: f64) -> Summary {
    let ok: Vec<&RunRow> = rows.iter().filter(|r| r.ok()).collect();
    let k = ok.len() as f64;
    let errs: Vec<f64> = ok.iter().map(|r| r.error.unwrap()).collect();
    let mean = errs.iter().sum::<f64>() / k;
    let ms = errs.iter().map(|e| e * e).sum::<f64>() / k;
    let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / k;
    let index = ok.iter().map(|r| r.index.unwrap() as f64).sum::<f64>() / k;
    Summary {
        misfit,
        t,
        stop_rule: stop.label(),
        runs_ok: ok.len(),
        runs_failed: rows.len() - ok.len(),
        index,
        rms_error: ms.sqrt(),
        std_error: var.sqrt(),
        mean_error: mean,
        initial_error,
    }
}

/// Everything produced by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub rows: Vec<RunRow>,
    pub summaries: Vec<Summary>,
    pub initial_error: f64,
    pub error_label: &'static str,
}

impl ExperimentResult {
    pub fn summary(&self, misfit: &str, t: f64) -> Option<&Summary> {
        self.summaries.iter().find(|s| s.misfit == misfit && s.t == t)
    }
}

/// Every misfit at every exposure time, `cfg.replicates` runs each.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let problem = Problem::build(&cfg.problem)?;
    let penalty = problem.penalty(cfg.penalty.sobolev)?;
    let initial_error = problem.error(&problem.u0)?;
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (ti, &t) in cfg.exposure_times.iter().enumerate() {
        for m in &cfg.misfits {
            let inp = CellInput {
                problem: &problem,
                penalty: &penalty,
                cfg,
                misfit: *m,
                ti,
                t,
                max_outer: cfg.newton.max_outer,
            };
            let cell = run_cell(&inp);
            summaries.push(summarize(&cell, m.label(), t, &cfg.stopping, initial_error));
            rows.extend(cell);
        }
    }
    Ok(ExperimentResult {
        rows,
        summaries,
        initial_error,
        error_label: problem.error_label(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(errors: Vec<f64>) -> RunRow {
        RunRow {
            misfit: "kl",
            t: 1.0,
            replicate: 0,
            seed: 0,
            status: "completed".into(),
            steps: errors.len() - 1,
            index: Some(0),
            error: Some(errors[0]),
            best_index: 0,
            best_error: errors[0],
            max_err_n: None,
            errors,
        }
    }

    #[test]
    fn common_index_minimizes_the_mean_square() {
        // Per-run minima at 1 and 2; the sum of squares is smallest at 1.
        let mut rows = vec![row(vec![3.0, 1.0, 2.0]), row(vec![3.0, 1.2, 1.1])];
        let mut failed = row(vec![0.0]);
        failed.index = None;
        failed.error = None;
        rows.push(failed);
        apply_common_index(&mut rows);
        assert_eq!(rows[0].index, Some(1));
        assert_eq!(rows[1].error, Some(1.2));
        assert_eq!(rows[2].index, None);
        let s = summarize(&rows, "kl", 1.0, &StoppingSpec::OracleMean, 3.0);
        assert_eq!((s.runs_ok, s.runs_failed), (2, 1));
        assert!((s.mean_error - 1.1).abs() < 1e-15);
        assert!((s.std_error - 0.1).abs() < 1e-12);
    }

    #[test]
    fn seeds_are_distinct_across_cells() {
        assert_ne!(replicate_seed(1, 0, 1), replicate_seed(1, 1, 0));
        assert_eq!(replicate_seed(5, 2, 3), replicate_seed(5, 2, 3));
    }
}
