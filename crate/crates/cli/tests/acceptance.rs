//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Run with `cargo test -p irgnm-cli --test acceptance`.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{ensure, Context, Result};
use irgnm::misfit::{kl_divergence, poisson_constant, poisson_neg_loglik};
use irgnm::poisson::{err_poisson, sample_counts, Binning};
use irgnm::problems::DeconvolutionModel;
use irgnm::rates::{big_psi, fit_rate, hoelder, lambda_of, log_index, theta, vartheta, IndexFunction};
use irgnm::stopping::{lepskii_balance, lepskii_oracle_bound, phi_noi};
use irgnm::{run_newton, ForwardModel, Gram, Grid, Misfit, NewtonConfig, Observation, QuadraticPenalty, Signal};
use irgnm::StoppingRule;
use irgnm_cli::check::run_checks;
use irgnm_cli::{run_errn_study, run_experiment, run_rate_study, ExperimentConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

fn config(name: &str) -> Result<ExperimentConfig> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::load(&path)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Dense matrix of a linear map given by its action on unit vectors.
fn dense(n_in: usize, n_out: usize, apply: impl Fn(&[f64]) -> Result<Vec<f64>>) -> Result<DMatrix<f64>> {
    let mut a = DMatrix::zeros(n_out, n_in);
    for j in 0..n_in {
        let mut e = vec![0.0; n_in];
        e[j] = 1.0;
        let col = apply(&e)?;
        for i in 0..n_out {
            a[(i, j)] = col[i];
        }
    }
    Ok(a)
}

fn c1_tikhonov() -> Result<Outcome> {
    let n = 48;
    let model = DeconvolutionModel::gaussian_1d(n, 0.04)?;
    let grid = model.input_grid().clone();
    let u0 = Signal::from_fn(grid.clone(), |p| 1.0 + 0.2 * (2.0 * std::f64::consts::PI * p[0]).cos())?;
    let truth = Signal::from_fn(grid.clone(), |p| 1.0 + (-(p[0] - 0.4).powi(2) / 0.01).exp())?;
    let mut d = model.apply(&truth)?;
    for (i, v) in d.values_mut().iter_mut().enumerate() {
        *v += 0.01 * ((i * 7919) % 13) as f64 / 13.0;
    }
    let penalty = QuadraticPenalty::new(u0.clone(), Gram::sobolev(&grid, 1.0)?)?;
    let alpha = 3e-3;
    let cfg = NewtonConfig {
        alpha0: alpha,
        max_outer: 1,
        cg_tol: 1e-14,
        ..Default::default()
    };
    let run = run_newton(&model, &Misfit::L2, &penalty, &Observation::Signal(d.clone()), &cfg, &StoppingRule::MaxIter)?;
    let u1 = &run.trace.iterates[1];

    // (Aᵀ W_y A + α W_x G)(u − u0) = Aᵀ W_y (d − A u0).
    let out_grid = model.output_grid().clone();
    let a = dense(n, out_grid.len(), |e| Ok(model.apply(&Signal::new(grid.clone(), e.to_vec())?)?.into_values()))?;
    let g = dense(n, n, |e| Ok(penalty.gram_apply(&Signal::new(grid.clone(), e.to_vec())?)?.into_values()))?;
    let wy = DMatrix::from_diagonal(&DVector::from_column_slice(out_grid.weights()));
    let wx = DMatrix::from_diagonal(&DVector::from_column_slice(grid.weights()));
    let lhs = a.transpose() * &wy * &a + alpha * &wx * &g;
    let r = d.sub(&model.apply(&u0)?)?;
    let rhs = a.transpose() * &wy * DVector::from_column_slice(r.values());
    let h = lhs.lu().solve(&rhs).context("singular Tikhonov system")?;
    let direct = u0.add(&Signal::new(grid, h.as_slice().to_vec())?)?;
    let err = penalty.norm(&u1.sub(&direct)?)? / penalty.norm(&direct)?;
    outcome(err <= 1e-8, format!("relative X-norm difference {err:.3e} (tol 1e-8), n = {n}"))
}

fn c2_checks() -> Result<Outcome> {
    let items = run_checks(2024)?;
    let failed: Vec<&str> = items.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    outcome(
        failed.is_empty(),
        format!("{} checks, failed: {:?}", items.len(), failed),
    )
}

fn c3_kl_identities() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let grid = Arc::new(Grid::periodic_1d(16, 0.0, 1.0)?);
    let random = |rng: &mut ChaCha8Rng, lo: f64| -> Result<Signal> {
        let v: Vec<f64> = (0..grid.len()).map(|_| lo + rng.random::<f64>() * 3.0).collect();
        Ok(Signal::new(grid.clone(), v)?)
    };
    let mut self_zero = true;
    let mut min_kl = f64::INFINITY;
    for _ in 0..10_000 {
        let sigma = rng.random::<f64>() * 0.1;
        let g = random(&mut rng, -sigma / 2.0)?;
        let gdag = random(&mut rng, 0.0)?;
        self_zero &= kl_divergence(&g, &g, sigma)? == 0.0;
        min_kl = min_kl.min(kl_divergence(&g, &gdag, sigma)?);
    }

    // S(g; obs) − s(g†) − T(g; g†) against err(g) on sampled data.
    let binning = Arc::new(Binning::identity(grid.clone()));
    let mut worst = 0.0f64;
    let mut ineq = true;
    for k in 0..1000 {
        let sigma = rng.random::<f64>() * 0.1;
        let t = 10f64.powf(1.0 + 4.0 * rng.random::<f64>());
        let gdag = random(&mut rng, 0.0)?;
        let g = random(&mut rng, -sigma / 2.0)?;
        let counts = sample_counts(&gdag, t, binning.clone(), k)?;
        let s = poisson_neg_loglik(&g, &counts, sigma)?;
        let s_dag = poisson_constant(&gdag, sigma)?;
        let tt = kl_divergence(&g, &gdag, sigma)?;
        let err = err_poisson(&g, &counts, &gdag, sigma)?;
        let gap = s - s_dag - tt;
        worst = worst.max((gap.abs() - err).abs() / (1.0 + s.abs()));
        let slack = 1e-10 * (1.0 + s.abs());
        ineq &= s - s_dag >= tt - err - slack && s - s_dag <= tt + err + slack;
    }
    outcome(
        self_zero && min_kl >= 0.0 && ineq && worst <= 1e-10,
        format!(
            "KL(g,g)=0: {self_zero}; min KL over 1e4 pairs {min_kl:.3e}; inequalities: {ineq}; \
             max | |S−s−T| − err | {worst:.2e} (tol 1e-10)"
        ),
    )
}

fn c4_sampler() -> Result<Outcome> {
    let fine = Arc::new(Grid::periodic_1d(50, 0.0, 1.0)?);
    let binning = Arc::new(Binning::uniform_1d(fine.clone(), 10)?);
    let gdag = Signal::from_fn(fine, |p| 1.0 + 0.8 * (2.0 * std::f64::consts::PI * p[0]).sin())?;
    let means = binning.bin_apply(&gdag)?;
    let t = 200.0;
    let reps = 10_000;
    let k = means.len();
    let mut sum = vec![0.0; k];
    let mut sum2 = vec![0.0; k];
    for rep in 0..reps {
        let c = sample_counts(&gdag, t, binning.clone(), 5_000_000 + rep as u64)?;
        for (j, &n) in c.counts().iter().enumerate() {
            let x = n as f64 / t;
            sum[j] += x;
            sum2[j] += x * x;
        }
    }
    let r = reps as f64;
    let mut worst_mean = 0.0f64;
    let mut worst_var = 0.0f64;
    for j in 0..k {
        let mean = sum[j] / r;
        let var = (sum2[j] - r * mean * mean) / (r - 1.0);
        // E[obs/t] = S_J g†, Var[obs/t] = S_J g† / t.
        let lambda = t * means[j];
        let expect_var = means[j] / t;
        let se_mean = (expect_var / r).sqrt();
        // Var of the sample variance of a Poisson(λ) count is about
        // (λ + 2λ²)/R, scaled by 1/t⁴.
        let se_var = ((lambda + 2.0 * lambda * lambda) / r).sqrt() / (t * t);
        worst_mean = worst_mean.max((mean - means[j]).abs() / se_mean);
        worst_var = worst_var.max((var - expect_var).abs() / se_var);
    }
    outcome(
        worst_mean <= 4.0 && worst_var <= 4.0,
        format!("{k} bins, {reps} replicates: max |z| mean {worst_mean:.2}, variance {worst_var:.2} (limit 4)"),
    )
}

fn c5_errn() -> Result<Outcome> {
    let res = run_errn_study(&config("errn.toml")?)?;
    let ratios: Vec<f64> = res.levels.iter().filter_map(|l| l.ratio).collect();
    let failed: usize = res.levels.iter().map(|l| l.runs_failed).sum();
    let means: Vec<String> = res.levels.iter().map(|l| format!("{:.4}", l.mean_max_err)).collect();
    outcome(
        ratios.len() == 2 && ratios.iter().all(|r| (2.5..=5.0).contains(r)),
        format!("mean max err_n {means:?}, ratios {ratios:.3?} (range [2.5, 5]), failed runs {failed}"),
    )
}

fn c6_c7_rates() -> Result<(Outcome, Outcome)> {
    let cfg = config("rates.toml")?;
    let res = run_rate_study(&cfg)?;
    let (noisy_exp, exact_exp) = res.expected().context("rates config has no source index")?;
    let f = res.noisy_fit;
    let decades = (cfg.exposure_times.last().unwrap() / cfg.exposure_times[0]).log10() / 2.0;
    let c6 = Outcome {
        pass: (f.slope - noisy_exp).abs() <= 0.15 && f.r2 >= 0.9 && decades >= 3.0 && cfg.replicates >= 50,
        detail: format!(
            "slope {:.4} (expected {noisy_exp:.3} ± 0.15), r² {:.5}, {decades:.1} noise decades, {} replicates",
            f.slope, f.r2, cfg.replicates
        ),
    };
    let e = res.exact_fit;
    let c7 = Outcome {
        pass: (e.slope - exact_exp).abs() <= 0.15,
        detail: format!("slope {:.4} (expected {exact_exp:.3} ± 0.15), r² {:.5}", e.slope, e.r2),
    };
    Ok((c6, c7))
}

/// Brute-force balancing index straight from its definition.
fn brute_force_n_bal(n_max: usize, c: f64, noi: &[f64], q: f64, dist: &dyn Fn(usize, usize) -> f64) -> usize {
    (1..=n_max)
        .find(|&n| (n..=n_max).all(|m| dist(n, m) <= c * noi[m].powf(1.0 / q)))
        .unwrap()
}

fn c8_lepskii() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let traces = 300;
    let dim = 4;
    let mut worst = 0.0f64;
    let mut mismatches = 0;
    for k in 0..traces {
        let q: f64 = [1.0, 2.0][k % 2];
        let gamma: f64 = [0.0, 0.1, 0.25][(k / 2) % 3];
        let c_bd: f64 = [0.5, 1.0, 2.0][(k / 6) % 3];
        let c_dec: f64 = [1.2, 1.5, 2.0][(k / 18) % 3];
        let err = 10f64.powf(-6.0 + 4.0 * rng.random::<f64>());
        let amp = 10f64.powf(-1.0 + 2.0 * rng.random::<f64>());
        let power = 0.2 + 1.8 * rng.random::<f64>();
        let len = 150;
        let alphas: Vec<f64> = (0..len).map(|n| c_dec.powi(-(n as i32))).collect();
        let app: Vec<f64> = (0..=len).map(|n| if n == 0 { f64::NAN } else { amp * alphas[n - 1].powf(power) }).collect();
        let noi: Vec<f64> = (0..=len).map(|n| if n == 0 { f64::NAN } else { phi_noi(&alphas, err, n) }).collect();

        // ‖u_n − u†‖ ≤ C_bd^{1/q} (1+γ)^{1/q} (Φ_app(n)^{1/q} + Φ_noi(n)^{1/q}),
        // often with equality and with adversarial directions.
        let scale = (c_bd * (1.0 + gamma)).powf(1.0 / q);
        let adversarial = rng.random::<bool>();
        let iterates: Vec<Vec<f64>> = (0..=len)
            .map(|n| {
                if n == 0 {
                    return vec![0.0; dim];
                }
                let envelope = scale * (app[n].powf(1.0 / q) + noi[n].powf(1.0 / q));
                let s = if rng.random::<bool>() { 1.0 } else { rng.random::<f64>() };
                let mut v: Vec<f64> = if adversarial {
                    let mut e = vec![0.0; dim];
                    e[0] = if n % 2 == 0 { 1.0 } else { -1.0 };
                    e
                } else {
                    (0..dim).map(|_| rng.random::<f64>() - 0.5).collect()
                };
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x *= s * envelope / norm);
                v
            })
            .collect();
        let dist = |n: usize, m: usize| -> f64 {
            iterates[n].iter().zip(&iterates[m]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        };
        let b = lepskii_balance(&alphas, err, gamma, c_bd, q, |n, m| Ok(dist(n, m)))?;
        ensure!(!b.truncated, "trace {k} too short for N_max");
        let c = c_bd.powf(1.0 / q) * 4.0 * (1.0 + gamma);
        if brute_force_n_bal(b.n_max, c, &noi, q, &dist) != b.n_bal {
            mismatches += 1;
        }
        let bound = lepskii_oracle_bound(&app, &noi, b.n_max, gamma, c_dec, c_bd, q);
        worst = worst.max(dist(b.n_bal, 0) / bound);
    }
    outcome(
        worst <= 1.0 && mismatches == 0,
        format!("{traces} traces: max error(n_bal)/bound {worst:.4} (limit 1), n_bal mismatches vs brute force {mismatches}"),
    )
}

fn c9_misfits() -> Result<Outcome> {
    let cfg = config("misfit_comparison.toml")?;
    let res = run_experiment(&cfg)?;
    let mut pass = cfg.replicates >= 100;
    let mut detail = Vec::new();
    for &t in &cfg.exposure_times {
        let m = |name: &str| res.summary(name, t).map(|s| s.mean_error).context("missing summary");
        let (kl, pe, l2) = (m("kl")?, m("pearson")?, m("l2")?);
        pass &= kl <= pe && kl <= l2;
        if t == 1e4 {
            pass &= kl <= 0.9 * l2;
        }
        detail.push(format!(
            "t={t:.0e}: kl {kl:.4} pearson {pe:.4} l2 {l2:.4} (kl/l2 {:.3})",
            kl / l2
        ));
    }
    pass &= cfg.exposure_times.contains(&1e4);
    let failed = res.rows.iter().filter(|r| !r.ok()).count();
    outcome(pass, format!("{}; failed runs {failed}", detail.join("; ")))
}

fn round_trip(f: &IndexFunction, ts: &[f64]) -> Result<f64> {
    let mut worst = 0.0f64;
    for &t in ts {
        let y = f.eval(t)?;
        worst = worst.max(rel(f.inverse(y)?, t));
    }
    Ok(worst)
}

fn c10_index_calculus() -> Result<Outcome> {
    let ts: Vec<f64> = (0..25).map(|k| 10f64.powf(-5.0 + 0.2 * k as f64)).collect();
    let lam = lambda_of(&hoelder(0.5)?)?;
    let lam_err = ts.iter().map(|&t| Ok(rel(lam.eval(t)?, t / 4.0))).collect::<Result<Vec<_>>>()?;
    let lam_err = lam_err.into_iter().fold(0.0, f64::max);

    let mut trip = 0.0f64;
    for phi in [hoelder(0.25)?, hoelder(0.5)?, log_index(1.0)?] {
        trip = trip.max(round_trip(&theta(&phi)?, &ts)?);
        trip = trip.max(round_trip(&vartheta(&phi)?, &ts)?);
        trip = trip.max(round_trip(&big_psi(&phi)?, &ts[..20])?);
    }

    let mut slope_err = 0.0f64;
    let mut slopes = Vec::new();
    for nu in [0.1, 0.25, 0.5] {
        let phi = IndexFunction::hoelder_additive(nu)?;
        let (psi, lam) = (big_psi(&phi)?, lambda_of(&phi)?);
        let ss: Vec<f64> = ts[..20].iter().map(|&t| psi.eval(t)).collect::<irgnm::Result<_>>()?;
        let ys: Vec<f64> = ss.iter().map(|&s| lam.eval(psi.inverse(s)?)).collect::<irgnm::Result<_>>()?;
        let fit = fit_rate(&ss, &ys)?;
        let want = 2.0 * nu / (1.0 + 2.0 * nu);
        slope_err = slope_err.max((fit.slope - want).abs());
        slopes.push(fit.slope);
    }
    outcome(
        lam_err <= 1e-6 && trip <= 1e-10 && slope_err <= 0.02,
        format!(
            "Λ vs t/4 {lam_err:.2e} (tol 1e-6); round trips {trip:.2e} (tol 1e-10); \
             Λ∘Ψ⁻¹ slopes {slopes:.4?} for ν = 0.1, 0.25, 0.5 (max deviation {slope_err:.4}, tol 0.02)"
        ),
    )
}

fn c11_phase_retrieval() -> Result<Outcome> {
    let cfg = config("phase_retrieval.toml")?;
    let res = run_experiment(&cfg)?;
    let row = &res.rows[0];
    ensure!(row.ok(), "phase retrieval run failed: {}", row.status);
    let last = *row.errors.last().unwrap();
    let ratio = last / res.initial_error;
    outcome(
        ratio <= 0.6 && row.steps == 10,
        format!(
            "{} steps, error {last:.5} vs initial {:.5}: ratio {ratio:.3} (limit 0.6)",
            row.steps, res.initial_error
        ),
    )
}

fn csv_files(dir: &Path) -> Result<Vec<(PathBuf, Vec<u8>)>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir)? {
        let p = e?.path();
        if p.extension().is_some_and(|x| x == "csv") {
            let bytes = std::fs::read(&p)?;
            out.push((p.strip_prefix(dir)?.to_path_buf(), bytes));
        }
    }
    out.sort();
    Ok(out)
}

fn c12_determinism() -> Result<Outcome> {
    let bin = env!("CARGO_BIN_EXE_irgnm");
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let tmp = tempfile::tempdir()?;
    let cases = [
        ("run", "misfit_comparison.toml", 4),
        ("errn", "errn.toml", 4),
        ("rates", "rates.toml", 3),
        ("check", "misfit_comparison.toml", 1),
        ("plot", "misfit_comparison.toml", 1),
        ("run", "phase_retrieval.toml", 1),
    ];
    let mut compared = 0;
    let mut differing = Vec::new();
    for (i, (cmd, cfg, reps)) in cases.iter().enumerate() {
        let mut outputs = Vec::new();
        for k in 0..2 {
            let dir = tmp.path().join(format!("{i}_{k}"));
            let status = Command::new(bin)
                .arg(cmd)
                .arg("--config")
                .arg(root.join(cfg))
                .args(["--seed", "99", "--replicates", &reps.to_string(), "--out"])
                .arg(&dir)
                .status()?;
            ensure!(status.success(), "irgnm {cmd} failed");
            outputs.push(csv_files(&dir)?);
        }
        ensure!(!outputs[0].is_empty(), "irgnm {cmd} wrote no CSV");
        compared += outputs[0].len();
        if outputs[0] != outputs[1] {
            differing.push(format!("{cmd} {cfg}"));
        }
    }
    outcome(
        differing.is_empty(),
        format!("{} invocations, {compared} CSV files compared, differing: {differing:?}", cases.len()),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Result<Outcome>, Duration, Option<f64>)> = Vec::new();
    let mut timed = |id: usize, name: &'static str, limit: Option<f64>, f: &dyn Fn() -> Result<Outcome>| {
        let start = Instant::now();
        let r = f();
        results.push((id, name, r, start.elapsed(), limit));
    };
    timed(1, "Tikhonov equivalence", Some(1.0), &c1_tikhonov);
    timed(2, "adjoint/derivative suite", Some(10.0), &c2_checks);
    timed(3, "KL identities", None, &c3_kl_identities);
    timed(4, "Poisson sampler statistics", Some(30.0), &c4_sampler);
    timed(5, "err_n decay", Some(300.0), &c5_errn);
    let start = Instant::now();
    let rates = c6_c7_rates();
    let rates_time = start.elapsed();
    let (r6, r7) = match rates {
        Ok((a, b)) => (Ok(a), Ok(b)),
        Err(e) => (Err(anyhow::anyhow!("{e:#}")), Err(e)),
    };
    results.push((6, "Hoelder rate slope", r6, rates_time, Some(300.0)));
    // Shares the run with criterion 6; the exact-data part alone is fast.
    results.push((7, "exact-data decay", r7, rates_time, Some(300.0)));
    let mut timed = |id: usize, name: &'static str, limit: Option<f64>, f: &dyn Fn() -> Result<Outcome>| {
        let start = Instant::now();
        let r = f();
        results.push((id, name, r, start.elapsed(), limit));
    };
    timed(8, "Lepskii oracle inequality", None, &c8_lepskii);
    timed(9, "misfit comparison", None, &c9_misfits);
    timed(10, "index-function calculus", Some(10.0), &c10_index_calculus);
    timed(11, "phase-retrieval smoke test", None, &c11_phase_retrieval);
    timed(12, "determinism", None, &c12_determinism);

    let mut all = true;
    for (id, name, r, dt, limit) in results {
        let secs = dt.as_secs_f64();
        let (pass, detail) = match r {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        let in_time = limit.is_none_or(|l| secs < l);
        let ok = pass && in_time;
        all &= ok;
        let budget = limit.map(|l| format!(" / {l:.0} s")).unwrap_or_default();
        println!(
            "criterion {id:>2} {name}: {} ({secs:.2} s{budget}) {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
    }
    if !all {
        std::process::exit(1);
    }
}
