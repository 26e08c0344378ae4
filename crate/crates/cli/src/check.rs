//! Adjoint, derivative, gradient and invariant checks on the shipped models.

use std::sync::Arc;

use anyhow::Result;
use irgnm::misfit::{Misfit, Observation};
use irgnm::model::{check_adjoint, fd_derivative_check, random_signal};
use irgnm::poisson::{sample_counts, Binning};
use irgnm::problems::{make_cell_phantom, DeconvolutionModel, PhaseRetrievalModel};
use irgnm::rates::tangential_cone_probe;
use irgnm::{ForwardModel, Grid, Signal};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckItem {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// `value ≤ threshold`, or `value ≥ threshold` when `at_least`.
    pub at_least: bool,
    pub pass: bool,
}

impl CheckItem {
    fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        CheckItem {
            name: name.into(),
            value,
            threshold,
            at_least: false,
            pass: value <= threshold,
        }
    }

    fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        CheckItem {
            name: name.into(),
            value,
            threshold,
            at_least: true,
            pass: value >= threshold,
        }
    }
}

pub const ADJOINT_TOL: f64 = 1e-8;
pub const MIN_FD_ORDER: f64 = 0.9;
pub const GRADIENT_TOL: f64 = 1e-5;

/// Relative mismatch between the quadratic-model directional derivative
/// at `g` and a central difference of the misfit along `h`.
pub fn gradient_mismatch(m: &Misfit, g: &Signal, h: &Signal, obs: &Observation, sigma: f64) -> Result<f64> {
    let q = m.quadratic_model(g, obs, sigma)?;
    // ∇ of (scale/2)‖W h + r‖² at h = 0 is scale·W·r.
    let grad = q.weight.zip_map(&q.residual, |w, r| q.scale * w * r)?;
    let model_dir = grad.dot(h)?;
    let eps = 1e-5;
    let step = |s: f64| -> Result<f64> {
        let mut x = g.clone();
        x.axpy(s, h)?;
        Ok(m.value(&x, obs, sigma)?)
    };
    let fd = (step(eps)? - step(-eps)?) / (2.0 * eps);
    Ok((fd - model_dir).abs() / model_dir.abs().max(fd.abs()).max(f64::MIN_POSITIVE))
}

fn fd_order(model: &dyn ForwardModel, u: &Signal, h: &Signal) -> Result<f64> {
    let fd = fd_derivative_check(model, u, h, &[1e-2, 3e-3, 1e-3, 3e-4, 1e-4])?;
    // A remainder at round-off level means the model is linear.
    Ok(fd.order.unwrap_or(f64::INFINITY))
}

/// The full suite. `seed` drives all random directions.
pub fn run_checks(seed: u64) -> Result<Vec<CheckItem>> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Deconvolution in 1D and, with an asymmetric kernel, in 2D.
    let dec = DeconvolutionModel::gaussian_1d(64, 0.03)?;
    let g1 = dec.input_grid().clone();
    let u = Signal::from_fn(g1.clone(), |p| 1.0 + 0.5 * (6.0 * p[0]).sin())?;
    out.push(CheckItem::at_most("deconvolution_1d_adjoint", check_adjoint(&dec, &u, 10, seed)?, ADJOINT_TOL));
    let h = random_signal(&g1, &mut rng);
    out.push(CheckItem::at_least("deconvolution_1d_fd_order", fd_order(&dec, &u, &h)?, MIN_FD_ORDER));
    let g2 = Arc::new(Grid::periodic_square(12, 0.0, 1.0)?);
    let k: Vec<f64> = (0..144).map(|i| ((i * 37) % 11) as f64).collect();
    let dec2 = DeconvolutionModel::new(g2.clone(), k)?;
    out.push(CheckItem::at_most(
        "deconvolution_2d_adjoint",
        check_adjoint(&dec2, &Signal::zeros(g2), 10, seed)?,
        ADJOINT_TOL,
    ));
    let us: Vec<Signal> = (0..3).map(|_| random_signal(&g1, &mut rng)).collect();
    let vs: Vec<Signal> = (0..3).map(|_| random_signal(&g1, &mut rng)).collect();
    let probe = tangential_cone_probe(&dec, &us, &vs, 1.0)?;
    out.push(CheckItem::at_most("deconvolution_cone_constant", probe.eta_bar, 1e-12));
    let pos = u.map(|v| v.abs());
    out.push(CheckItem::at_least("deconvolution_preserves_sign", dec.apply(&pos)?.min(), 0.0));

    // Phase retrieval at the default scale.
    let pr = PhaseRetrievalModel::standard()?;
    let gp = pr.input_grid().clone();
    let phi = make_cell_phantom(&gp, pr.rho())?;
    out.push(CheckItem::at_most("phase_retrieval_adjoint", check_adjoint(&pr, &phi, 10, seed)?, ADJOINT_TOL));
    let h = random_signal(&gp, &mut rng);
    out.push(CheckItem::at_least("phase_retrieval_fd_order", fd_order(&pr, &phi, &h)?, MIN_FD_ORDER));
    let f = pr.apply(&phi)?;
    out.push(CheckItem::at_least("phase_retrieval_nonnegative", f.min(), 0.0));
    let shifted = pr.apply(&phi.map(|v| v + 0.7))?;
    out.push(CheckItem::at_most(
        "phase_retrieval_global_phase",
        f.distance(&shifted)? / f.norm(),
        1e-12,
    ));
    let dc = pr.derivative(&phi, &Signal::constant(gp, 1.0))?;
    out.push(CheckItem::at_most("phase_retrieval_constant_direction", dc.norm() / f.norm(), 1e-12));

    // Quadratic-model gradients against finite differences of the misfits.
    let grid = Arc::new(Grid::periodic_1d(40, 0.0, 1.0)?);
    let gdag = Signal::from_fn(grid.clone(), |p| 2.0 + (7.0 * p[0]).sin())?;
    let g = Signal::from_fn(grid.clone(), |p| 1.8 + 0.9 * (5.0 * p[0]).cos())?;
    let counts = sample_counts(&gdag, 200.0, Arc::new(Binning::identity(grid.clone())), seed)?;
    let h = random_signal(&grid, &mut rng);
    let cases: [(&str, Misfit, Observation, f64); 5] = [
        ("l2", Misfit::L2, Observation::Counts(counts.clone()), 0.0),
        ("pearson", Misfit::Pearson { cutoff: 0.2 }, Observation::Counts(counts.clone()), 0.0),
        ("kl_counts", Misfit::KullbackLeibler, Observation::Counts(counts), 0.01),
        ("kl_density", Misfit::KullbackLeibler, Observation::Signal(gdag.clone()), 0.01),
        ("kl_zero_offset", Misfit::KullbackLeibler, Observation::Signal(gdag), 0.0),
    ];
    for (name, m, obs, sigma) in cases {
        out.push(CheckItem::at_most(
            format!("gradient_{name}"),
            gradient_mismatch(&m, &g, &h, &obs, sigma)?,
            GRADIENT_TOL,
        ));
    }
    Ok(out)
}
