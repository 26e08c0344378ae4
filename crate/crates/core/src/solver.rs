//! Outer Newton iteration and the inner Gauss-Newton/CG solver.
//!
//! Step `n` minimizes the convex functional
//! `S(F(u_n) + F'[u_n](u − u_n); obs) + α_n R(u)` approximately by a
//! sequence of quadratic models; each model is a weighted linear
//! least-squares problem solved with CG on its normal equation.

use std::fmt::Write as _;

use crate::error::{invalid, Error, Result};
use crate::grid::Signal;
use crate::misfit::{Misfit, Observation};
use crate::model::{ForwardModel, Linearization};
use crate::penalty::QuadraticPenalty;
use crate::poisson::{err_n_estimate, ErrConstants, ErrVariant};
use crate::stopping::{Selection, StoppingRule};

/// KL offset σ and its per-step multiplier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetParam {
    pub sigma: f64,
    pub decay: f64,
}

impl Default for OffsetParam {
    fn default() -> Self {
        OffsetParam {
            sigma: 0.002,
            decay: 0.8,
        }
    }
}

impl OffsetParam {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(invalid(format!("offset σ must be nonnegative, got {}", self.sigma)));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(invalid(format!("offset decay must lie in (0, 1], got {}", self.decay)));
        }
        Ok(())
    }

    pub fn at(&self, n: usize) -> f64 {
        self.sigma * self.decay.powi(n as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonConfig {
    pub alpha0: f64,
    pub c_dec: f64,
    pub max_outer: usize,
    pub inner_tol: f64,
    pub max_inner: usize,
    pub step_eta: f64,
    pub offset: OffsetParam,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub min_step: f64,
    /// Shrinks accepted inner steps until the Newton functional does not
    /// increase. Only relevant for the KL fidelity, whose quadratic model
    /// is not exact.
    pub descent_safeguard: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            alpha0: 0.5,
            c_dec: 1.5,
            max_outer: 20,
            inner_tol: 0.1,
            max_inner: 10,
            step_eta: 0.9,
            offset: OffsetParam::default(),
            cg_tol: 1e-10,
            cg_max_iter: 1000,
            min_step: 1e-4,
            descent_safeguard: true,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0 && self.alpha0 <= 1.0) {
            return Err(invalid(format!("alpha0 must lie in (0, 1], got {}", self.alpha0)));
        }
        if !(self.c_dec > 1.0 && self.c_dec.is_finite()) {
            return Err(invalid(format!("c_dec must exceed 1, got {}", self.c_dec)));
        }
        if !(self.step_eta >= 0.0 && self.step_eta < 1.0) {
            return Err(invalid(format!("step_eta must lie in [0, 1), got {}", self.step_eta)));
        }
        if !(self.inner_tol > 0.0) || self.max_inner == 0 {
            return Err(invalid("inner_tol must be positive and max_inner at least 1"));
        }
        if !(self.cg_tol > 0.0) || self.cg_max_iter == 0 {
            return Err(invalid("cg_tol must be positive and cg_max_iter at least 1"));
        }
        if !(self.min_step >= 0.0 && self.min_step <= 1.0) {
            return Err(invalid("min_step must lie in [0, 1]"));
        }
        self.offset.validate()
    }

    /// `α_n = α0 c_dec^{−n}`.
    pub fn alpha(&self, n: usize) -> f64 {
        self.alpha0 * self.c_dec.powi(-(n as i32))
    }
}

/// Outcome of a CG solve.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CgInfo {
    pub iterations: usize,
    /// `‖rhs − A h‖ / ‖rhs‖` at exit.
    pub relative_residual: f64,
    pub converged: bool,
    /// Nonpositive curvature or non-finite values were met.
    pub breakdown: bool,
}

/// CG for a self-adjoint positive definite operator in the weighted inner
/// product of `rhs`'s grid, starting from zero.
pub fn conjugate_gradient(
    op: impl Fn(&Signal) -> Result<Signal>,
    rhs: &Signal,
    tol: f64,
    max_iter: usize,
) -> Result<(Signal, CgInfo)> {
    let mut x = Signal::zeros(rhs.grid().clone());
    let b_norm = rhs.norm();
    let mut info = CgInfo::default();
    if b_norm == 0.0 {
        info.converged = true;
        return Ok((x, info));
    }
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r)?;
    for k in 0..max_iter {
        let ap = op(&p)?;
        let pap = p.dot(&ap)?;
        if !(pap > 0.0) || !pap.is_finite() {
            info.breakdown = true;
            info.iterations = k;
            info.relative_residual = rr.sqrt() / b_norm;
            return Ok((x, info));
        }
        let a = rr / pap;
        x.axpy(a, &p)?;
        r.axpy(-a, &ap)?;
        let rr_new = r.dot(&r)?;
        info.iterations = k + 1;
        if rr_new.sqrt() <= tol * b_norm {
            info.converged = true;
            info.relative_residual = rr_new.sqrt() / b_norm;
            return Ok((x, info));
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for (pv, rv) in p.values_mut().iter_mut().zip(r.values()) {
            *pv = rv + beta * *pv;
        }
    }
    info.relative_residual = rr.sqrt() / b_norm;
    Ok((x, info))
}

/// Minimizes `½‖W F'h + r‖² + (α/2) R(u_nl + h)` by CG on
/// `(F'^* W² F' + α G) h = −F'^*(W r) − α G(u_nl − u0)`.
pub fn solve_inner_ls(
    weight: &Signal,
    residual: &Signal,
    lin: &dyn Linearization,
    penalty: &QuadraticPenalty,
    u_nl: &Signal,
    alpha: f64,
    cg_tol: f64,
    cg_max_iter: usize,
) -> Result<(Signal, CgInfo)> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid(format!("regularization parameter must be positive, got {alpha}")));
    }
    weight.ensure_grid(lin.output_grid(), "inner least squares weight")?;
    residual.ensure_grid(lin.output_grid(), "inner least squares residual")?;
    if !weight.is_finite() || !residual.is_finite() {
        return Err(Error::Numeric("non-finite weight or residual".into()));
    }
    let w2 = weight.map(|w| w * w);
    let wr = weight.zip_map(residual, |w, r| w * r)?;
    let mut rhs = lin.adjoint(&wr)?.scale(-1.0);
    let off = u_nl.sub(penalty.u0())?;
    rhs.axpy(-alpha, &penalty.gram_apply(&off)?)?;
    let op = |h: &Signal| -> Result<Signal> {
        let fh = lin.apply(h)?;
        let wfh = fh.zip_map(&w2, |a, b| a * b)?;
        let mut out = lin.adjoint(&wfh)?;
        out.axpy(alpha, &penalty.gram_apply(h)?)?;
        Ok(out)
    };
    let (h, info) = conjugate_gradient(op, &rhs, cg_tol, cg_max_iter)?;
    if !h.is_finite() {
        return Err(Error::Numeric("CG produced non-finite values".into()));
    }
    Ok((h, info))
}

/// Why the inner iteration ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerStop {
    /// The first update vanished; `u_n` already solves the step.
    Stationary,
    /// `‖h_l‖/‖h_0‖ ≤ inner_tol`.
    Converged,
    MaxInner,
    /// The feasible step length fell below `min_step`.
    SmallStep,
}

impl InnerStop {
    pub fn label(&self) -> &'static str {
        match self {
            InnerStop::Stationary => "stationary",
            InnerStop::Converged => "converged",
            InnerStop::MaxInner => "max_inner",
            InnerStop::SmallStep => "small_step",
        }
    }
}

#[derive(Debug, Clone)]
pub struct InnerResult {
    pub u_next: Signal,
    /// `F(u_n) + F'[u_n](u_next − u_n)`.
    pub lin_output: Signal,
    /// Number of updates taken.
    pub iterations: usize,
    /// Step lengths of the updates taken.
    pub steps: Vec<f64>,
    pub stop: InnerStop,
    pub cg_iterations: usize,
    /// A CG solve hit `cg_max_iter` or broke down.
    pub cg_flag: bool,
    /// Newton functional at `u_n` and at `u_next`.
    pub objective_start: f64,
    pub objective_end: f64,
}

/// Largest `s ∈ [0, 1]` with `g + s d ≥ −floor` pointwise.
pub fn max_feasible_step(g: &[f64], d: &[f64], floor: f64) -> f64 {
    let mut s = 1.0f64;
    for (gv, dv) in g.iter().zip(d) {
        if *dv < 0.0 {
            s = s.min((-floor - gv) / dv);
        }
    }
    s.clamp(0.0, 1.0)
}

fn newton_objective(
    misfit: &Misfit,
    penalty: &QuadraticPenalty,
    g: &Signal,
    u: &Signal,
    obs: &Observation,
    alpha: f64,
    sigma: f64,
) -> Result<f64> {
    Ok(misfit.value_relaxed(g, obs, sigma)? + alpha * penalty.value(u)?)
}

/// Approximately solves step `n` of the Newton iteration.
#[allow(clippy::too_many_arguments)]
pub fn inner_gauss_newton(
    model: &dyn ForwardModel,
    misfit: &Misfit,
    penalty: &QuadraticPenalty,
    u_n: &Signal,
    obs: &Observation,
    alpha: f64,
    sigma: f64,
    cfg: &NewtonConfig,
) -> Result<InnerResult> {
    let f_un = model.apply(u_n)?;
    let lin = model.linearize(u_n)?;
    inner_with_linearization(lin.as_ref(), &f_un, misfit, penalty, u_n, obs, alpha, sigma, cfg)
}

#[allow(clippy::too_many_arguments)]
fn inner_with_linearization(
    lin: &dyn Linearization,
    f_un: &Signal,
    misfit: &Misfit,
    penalty: &QuadraticPenalty,
    u_n: &Signal,
    obs: &Observation,
    alpha: f64,
    sigma: f64,
    cfg: &NewtonConfig,
) -> Result<InnerResult> {
    let constrained = misfit.uses_offset();
    let floor = cfg.step_eta * sigma;
    if constrained && f_un.min() < -floor {
        return Err(Error::Feasibility(format!(
            "min F(u_n) = {} below −ησ = {}",
            f_un.min(),
            -floor
        )));
    }
    let mut u = u_n.clone();
    let mut g = f_un.clone();
    let objective_start = newton_objective(misfit, penalty, &g, &u, obs, alpha, sigma)?;
    let mut objective = objective_start;
    let mut h0 = 0.0;
    let mut steps = Vec::new();
    let mut cg_iterations = 0;
    let mut cg_flag = false;
    let mut stop = InnerStop::MaxInner;

    for l in 0..cfg.max_inner {
        let q = misfit.quadratic_model_relaxed(&g, obs, sigma)?;
        let (h, info) = solve_inner_ls(
            &q.weight,
            &q.residual,
            lin,
            penalty,
            &u,
            2.0 * alpha / q.scale,
            cfg.cg_tol,
            cfg.cg_max_iter,
        )?;
        cg_iterations += info.iterations;
        cg_flag |= !info.converged;
        let nh = h.norm();
        if l == 0 {
            h0 = nh;
            if nh == 0.0 {
                stop = InnerStop::Stationary;
                break;
            }
        }
        let fh = lin.apply(&h)?;
        let mut s = if constrained {
            max_feasible_step(g.values(), fh.values(), floor)
        } else {
            1.0
        };
        let mut trial = None;
        while s >= cfg.min_step && s > 0.0 {
            let mut u_new = u.clone();
            u_new.axpy(s, &h)?;
            let mut g_new = g.clone();
            g_new.axpy(s, &fh)?;
            let obj = newton_objective(misfit, penalty, &g_new, &u_new, obs, alpha, sigma)?;
            let slack = 1e-10 * objective.abs().max(1.0);
            if !cfg.descent_safeguard || !constrained || obj <= objective + slack {
                trial = Some((u_new, g_new, obj));
                break;
            }
            s *= 0.5;
        }
        let Some((u_new, g_new, obj)) = trial else {
            stop = InnerStop::SmallStep;
            break;
        };
        u = u_new;
        g = g_new;
        objective = obj;
        steps.push(s);
        if nh <= cfg.inner_tol * h0 {
            stop = InnerStop::Converged;
            break;
        }
    }
    Ok(InnerResult {
        u_next: u,
        lin_output: g,
        iterations: steps.len(),
        steps,
        stop,
        cg_iterations,
        cg_flag,
        objective_start,
        objective_end: objective,
    })
}

/// Where per-step noise levels `err_n` come from.
#[derive(Debug, Clone, Default)]
pub enum ErrSource {
    #[default]
    None,
    /// A user-supplied bound used for every step.
    Constant(f64),
    /// Computed from Poisson counts and the true density `F(u†)`; needs a
    /// known true solution.
    Poisson {
        variant: ErrVariant,
        constants: ErrConstants,
    },
}

/// Extra inputs for synthetic experiments.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Known true solution `u†`: enables true-error columns and err_n
    /// variant B.
    pub truth: Option<Signal>,
    pub err: ErrSource,
}

/// Record of outer step `n`, which maps `u_n` to `u_{n+1}`.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub n: usize,
    pub alpha: f64,
    /// Offset actually used (the schedule value, raised if needed to keep
    /// `F(u_n)` feasible).
    pub sigma: f64,
    /// `S(F(u_{n+1}); obs)`.
    pub misfit: f64,
    /// `R(u_{n+1})`.
    pub penalty: f64,
    pub err_n: Option<f64>,
    pub inner_iters: usize,
    /// Smallest accepted step length (1 if no update was taken).
    pub min_step: f64,
    pub inner_stop: InnerStop,
    pub cg_iterations: usize,
    pub cg_flag: bool,
    /// `F(u_n) + F'[u_n](u_{n+1} − u_n)`.
    pub lin_output: Signal,
    /// `F(u_n) + F'[u_n](u† − u_n)` when the truth is known.
    pub truth_lin_output: Option<Signal>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    /// All requested steps were completed.
    Completed,
    /// The stopping rule ended the run before `max_outer`.
    Halted,
    /// Step `step` failed; the trace ends before it.
    Failed { step: usize, reason: String },
}

/// Everything recorded by [`run_newton`].
#[derive(Debug, Clone)]
pub struct IterateTrace {
    /// `u_0, …, u_N`.
    pub iterates: Vec<Signal>,
    /// `F(u_0), …, F(u_N)`.
    pub outputs: Vec<Signal>,
    /// One record per completed step (`N` entries).
    pub steps: Vec<StepRecord>,
    /// `‖u_k − u†‖` for every iterate when the truth is known.
    pub true_errors: Option<Vec<f64>>,
    pub status: RunStatus,
    pub selection: Option<Selection>,
    pub c_dec: f64,
}

impl IterateTrace {
    pub fn alphas(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.alpha).collect()
    }

    /// `err_n` per step, if every step has one.
    pub fn errs(&self) -> Option<Vec<f64>> {
        self.steps.iter().map(|s| s.err_n).collect()
    }

    pub fn last(&self) -> &Signal {
        self.iterates.last().expect("trace holds u_0")
    }

    /// Checks `α_0 ≤ 1`, strict decrease and `α_n/α_{n+1} ≤ C_dec`.
    pub fn alpha_schedule_ok(&self) -> bool {
        let a = self.alphas();
        a.first().is_none_or(|a0| *a0 <= 1.0)
            && a.windows(2).all(|w| {
                let r = w[0] / w[1];
                w[1] < w[0] && r <= self.c_dec * (1.0 + 1e-12)
            })
    }

    /// CSV rows `n,alpha,sigma,misfit,penalty,err_n,inner_iters,min_step_len`,
    /// plus `true_error` (of `u_{n+1}`) when known, and comment lines with
    /// the run status and the stopping selection.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,alpha,sigma,misfit,penalty,err_n,inner_iters,min_step_len");
        if self.true_errors.is_some() {
            s.push_str(",true_error");
        }
        s.push('\n');
        for r in &self.steps {
            let err = r.err_n.map(|e| e.to_string()).unwrap_or_default();
            write!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.n, r.alpha, r.sigma, r.misfit, r.penalty, err, r.inner_iters, r.min_step
            )
            .unwrap();
            if let Some(te) = &self.true_errors {
                write!(s, ",{}", te[r.n + 1]).unwrap();
            }
            s.push('\n');
        }
        if let Some(te) = &self.true_errors {
            writeln!(s, "# initial_true_error={}", te[0]).unwrap();
        }
        match &self.status {
            RunStatus::Completed => s.push_str("# status=completed\n"),
            RunStatus::Halted => s.push_str("# status=halted\n"),
            RunStatus::Failed { step, reason } => {
                writeln!(s, "# status=failed step={step} reason={}", reason.replace('\n', " ")).unwrap()
            }
        }
        if let Some(sel) = &self.selection {
            s.push_str(&sel.footer());
        }
        s
    }
}

/// Result of [`run_newton`]: the selected iterate and the full trace.
#[derive(Debug, Clone)]
pub struct NewtonRun {
    pub u_final: Signal,
    pub trace: IterateTrace,
}

fn effective_sigma(scheduled: f64, f_un: &Signal, eta: f64) -> Result<f64> {
    let lo = f_un.min();
    if lo >= 0.0 {
        return Ok(scheduled);
    }
    if eta == 0.0 {
        return Err(Error::Feasibility("negative model output with step_eta = 0".into()));
    }
    // Small margin so that the ratio test starts strictly inside.
    Ok(scheduled.max(-lo / eta * (1.0 + 1e-9)))
}

/// Runs the iteration with the rule's halting criterion and returns the
/// iterate it selects.
pub fn run_newton(
    model: &dyn ForwardModel,
    misfit: &Misfit,
    penalty: &QuadraticPenalty,
    obs: &Observation,
    cfg: &NewtonConfig,
    stop: &StoppingRule,
) -> Result<NewtonRun> {
    run_newton_with(model, misfit, penalty, obs, cfg, stop, &RunOptions::default())
}

/// [`run_newton`] with synthetic-mode extras.
pub fn run_newton_with(
    model: &dyn ForwardModel,
    misfit: &Misfit,
    penalty: &QuadraticPenalty,
    obs: &Observation,
    cfg: &NewtonConfig,
    stop: &StoppingRule,
    opts: &RunOptions,
) -> Result<NewtonRun> {
    cfg.validate()?;
    stop.validate()?;
    let u0 = penalty.u0().clone();
    u0.ensure_grid(model.input_grid(), "initial guess")?;
    crate::grid::ensure_same(obs.grid(), model.output_grid(), "observation")?;
    if !model.in_domain(&u0) {
        return Err(Error::Feasibility("initial guess outside the domain".into()));
    }
    if let Some(t) = &opts.truth {
        t.ensure_grid(model.input_grid(), "true solution")?;
    }
    let gdag = match (&opts.err, &opts.truth) {
        (ErrSource::Poisson { .. }, Some(t)) => Some(model.apply(t)?),
        (ErrSource::Poisson { .. }, None) => {
            return Err(Error::Unsupported("Poisson err_n needs the true solution".into()))
        }
        _ => None,
    };
    let counts = match (&opts.err, obs) {
        (ErrSource::Poisson { .. }, Observation::Counts(c)) => Some(c),
        (ErrSource::Poisson { .. }, _) => {
            return Err(Error::Unsupported("Poisson err_n needs count data".into()))
        }
        _ => None,
    };

    let mut trace = IterateTrace {
        iterates: vec![u0.clone()],
        outputs: vec![model.apply(&u0)?],
        steps: Vec::new(),
        true_errors: opts.truth.as_ref().map(|t| vec![u0.distance(t).unwrap_or(f64::NAN)]),
        status: RunStatus::Completed,
        selection: None,
        c_dec: cfg.c_dec,
    };

    for n in 0..cfg.max_outer {
        if stop.should_halt(&trace)? {
            trace.status = RunStatus::Halted;
            break;
        }
        let u_n = trace.iterates[n].clone();
        let f_un = trace.outputs[n].clone();
        let alpha = cfg.alpha(n);
        let step = (|| -> Result<(StepRecord, Signal, Signal)> {
            let sigma = if misfit.uses_offset() {
                effective_sigma(cfg.offset.at(n), &f_un, cfg.step_eta)?
            } else {
                cfg.offset.at(n)
            };
            let lin = model.linearize(&u_n)?;
            let inner =
                inner_with_linearization(lin.as_ref(), &f_un, misfit, penalty, &u_n, obs, alpha, sigma, cfg)?;
            if !model.in_domain(&inner.u_next) {
                return Err(Error::Feasibility("iterate left the domain".into()));
            }
            let f_next = model.apply(&inner.u_next)?;
            let truth_lin_output = match &opts.truth {
                Some(t) => {
                    let mut g = f_un.clone();
                    g.axpy(1.0, &lin.apply(&t.sub(&u_n)?)?)?;
                    Some(g)
                }
                None => None,
            };
            let rec = StepRecord {
                n,
                alpha,
                sigma,
                misfit: misfit.value(&f_next, obs, sigma)?,
                penalty: penalty.value(&inner.u_next)?,
                err_n: None,
                inner_iters: inner.iterations,
                min_step: inner.steps.iter().copied().fold(1.0, f64::min),
                inner_stop: inner.stop,
                cg_iterations: inner.cg_iterations,
                cg_flag: inner.cg_flag,
                lin_output: inner.lin_output,
                truth_lin_output,
            };
            Ok((rec, inner.u_next, f_next))
        })();
        match step {
            Ok((rec, u_next, f_next)) => {
                if let (Some(te), Some(t)) = (&mut trace.true_errors, &opts.truth) {
                    te.push(u_next.distance(t)?);
                }
                trace.steps.push(rec);
                trace.iterates.push(u_next);
                trace.outputs.push(f_next);
                let err = match &opts.err {
                    ErrSource::None => None,
                    ErrSource::Constant(e) => Some(*e),
                    ErrSource::Poisson { variant, constants } => Some(err_n_estimate(
                        *variant,
                        &trace,
                        n,
                        counts.expect("checked above"),
                        gdag.as_ref().expect("checked above"),
                        constants,
                    )?),
                };
                trace.steps[n].err_n = err;
            }
            Err(e) => {
                trace.status = RunStatus::Failed {
                    step: n,
                    reason: e.to_string(),
                };
                break;
            }
        }
    }
    let selection = stop.select(&trace)?;
    let u_final = trace.iterates[selection.index].clone();
    trace.selection = Some(selection);
    Ok(NewtonRun { u_final, trace })
}
