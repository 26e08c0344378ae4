//! Single reconstructions for external plotting.

use anyhow::Result;
use irgnm::poisson::sample_counts;
use irgnm::solver::{run_newton_with, RunOptions};
use irgnm::{Observation, StoppingRule};

use crate::config::ExperimentConfig;
use crate::experiment::replicate_seed;
use crate::output::{fmt_f, matrix_rows, OutputDir};
use crate::problem::Problem;

/// Reconstructs replicate 0 at the first exposure time with every misfit
/// and writes truth, initial guess and reconstructions (the last iterate)
/// plus each iteration history.
pub fn write_plot_data(out: &mut OutputDir, cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    let problem = Problem::build(&cfg.problem)?;
    let penalty = problem.penalty(cfg.penalty.sobolev)?;
    let t = cfg.exposure_times[0];
    let counts = sample_counts(&problem.gdag, t, problem.binning.clone(), replicate_seed(cfg.seed, 0, 0))?;
    let obs = Observation::Counts(counts);
    let mut recs = Vec::new();
    for m in &cfg.misfits {
        let newton = cfg.newton.config(m.offset());
        let opts = RunOptions {
            truth: Some(problem.truth.clone()),
            ..Default::default()
        };
        let run = run_newton_with(problem.model(), &m.misfit(), &penalty, &obs, &newton, &StoppingRule::MaxIter, &opts)?;
        let name = format!("trace_{}.csv", m.label());
        let text = run.trace.to_csv();
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default().to_string();
        let rows: Vec<String> = lines.map(str::to_string).collect();
        out.write(&name, &[("t", fmt_f(t))], &header, &rows)?;
        recs.push((m.label(), run.u_final));
    }
    let (rows, cols) = problem.shape();
    if rows == 1 {
        let mut header = String::from("x,truth,initial");
        for (label, _) in &recs {
            header.push(',');
            header.push_str(label);
        }
        let pts = problem.truth.grid().points();
        let lines: Vec<String> = (0..cols)
            .map(|i| {
                let mut l = format!(
                    "{},{},{}",
                    fmt_f(pts[i][0]),
                    fmt_f(problem.truth.values()[i]),
                    fmt_f(problem.u0.values()[i])
                );
                for (_, u) in &recs {
                    l.push(',');
                    l.push_str(&fmt_f(u.values()[i]));
                }
                l
            })
            .collect();
        out.write("profiles.csv", &[("t", fmt_f(t))], &header, &lines)?;
    } else {
        let dims = [("rows", rows.to_string()), ("cols", cols.to_string())];
        let mut mats = vec![("truth".to_string(), &problem.truth), ("initial".to_string(), &problem.u0)];
        for (label, u) in &recs {
            mats.push((format!("reconstruction_{label}"), u));
        }
        for (name, u) in mats {
            let lines = matrix_rows(u.values(), cols);
            // Matrices have no column header; the first data line follows
            // the comments.
            let (first, rest) = lines.split_first().expect("matrix has rows");
            out.write(&format!("{name}.csv"), &dims, first, rest)?;
        }
    }
    Ok(())
}
