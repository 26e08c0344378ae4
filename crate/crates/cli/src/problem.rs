//! Concrete problem instances built from the configuration.

use std::sync::Arc;

use anyhow::{bail, Result};
use irgnm::poisson::Binning;
use irgnm::problems::{make_cell_phantom, DeconvolutionModel, PhaseRetrievalModel};
use irgnm::{ForwardModel, Gram, QuadraticPenalty, Signal};

use crate::config::{ProblemSpec, TruthSpec};

enum Kind {
    Deconvolution(DeconvolutionModel),
    PhaseRetrieval(PhaseRetrievalModel),
}

/// Forward model, true solution, initial guess and binning.
pub struct Problem {
    kind: Kind,
    pub truth: Signal,
    pub u0: Signal,
    /// `F(u†)`.
    pub gdag: Signal,
    pub binning: Arc<Binning>,
}

impl Problem {
    pub fn build(spec: &ProblemSpec) -> Result<Self> {
        let (kind, truth, u0) = match spec {
            ProblemSpec::Deconvolution { n, kernel_width, truth } => {
                let model = DeconvolutionModel::gaussian_1d(*n, *kernel_width)?;
                let grid = model.input_grid().clone();
                let (truth, u0) = match *truth {
                    TruthSpec::BrightCore {
                        background,
                        peak,
                        peak_width,
                        feature_amplitude,
                    } => {
                        let core =
                            |x: f64| background + peak * (-(x - 0.5).powi(2) / (2.0 * peak_width * peak_width)).exp();
                        let tau = std::f64::consts::TAU;
                        let features = |x: f64| {
                            0.5 * (3.0 * tau * x).sin() + 0.3 * (5.0 * tau * x + 1.0).cos() + 0.2 * (7.0 * tau * x).sin()
                        };
                        let u0 = Signal::from_fn(grid.clone(), |p| core(p[0]))?;
                        let truth = Signal::from_fn(grid, |p| core(p[0]) + feature_amplitude * features(p[0]))?;
                        (truth, u0)
                    }
                    TruthSpec::Source {
                        background,
                        amplitude,
                        nu,
                        source_seed,
                    } => {
                        let s = model.source_element(nu, source_seed)?;
                        let u0 = Signal::constant(grid, background);
                        (u0.add(&s.scale(amplitude))?, u0)
                    }
                };
                if truth.min() < 0.0 {
                    bail!("true solution must be nonnegative for Poisson sampling");
                }
                (Kind::Deconvolution(model), truth, u0)
            }
            ProblemSpec::PhaseRetrieval {
                n,
                m,
                rho,
                kappa,
                initial_bias,
            } => {
                let model = PhaseRetrievalModel::new(*n, *m, *rho, *kappa)?;
                let truth = make_cell_phantom(model.input_grid(), *rho)?;
                let u0 = model.dome_guess(*initial_bias)?;
                (Kind::PhaseRetrieval(model), truth, u0)
            }
        };
        let model: &dyn ForwardModel = match &kind {
            Kind::Deconvolution(m) => m,
            Kind::PhaseRetrieval(m) => m,
        };
        let gdag = model.apply(&truth)?;
        let binning = Arc::new(Binning::identity(model.output_grid().clone()));
        Ok(Problem {
            kind,
            truth,
            u0,
            gdag,
            binning,
        })
    }

    pub fn model(&self) -> &dyn ForwardModel {
        match &self.kind {
            Kind::Deconvolution(m) => m,
            Kind::PhaseRetrieval(m) => m,
        }
    }

    pub fn name(&self) -> &'static str {
        match &self.kind {
            Kind::Deconvolution(_) => "deconvolution",
            Kind::PhaseRetrieval(_) => "phase_retrieval",
        }
    }

    pub fn penalty(&self, sobolev: f64) -> Result<QuadraticPenalty> {
        let gram = if sobolev == 0.0 {
            Gram::Identity
        } else {
            Gram::sobolev(self.u0.grid(), sobolev)?
        };
        Ok(QuadraticPenalty::new(self.u0.clone(), gram)?)
    }

    /// Reconstruction error. For phase retrieval this is the distance on
    /// the disk modulo a global phase and the twin solution, which produce
    /// identical data.
    pub fn error(&self, u: &Signal) -> Result<f64> {
        Ok(match &self.kind {
            Kind::Deconvolution(_) => u.distance(&self.truth)?,
            Kind::PhaseRetrieval(m) => m.ambiguity_distance(u, &self.truth)?,
        })
    }

    pub fn error_label(&self) -> &'static str {
        match &self.kind {
            Kind::Deconvolution(_) => "l2",
            Kind::PhaseRetrieval(_) => "l2_disk_mod_twin_and_shift",
        }
    }

    /// Dimensions of the input grid as (rows, cols).
    pub fn shape(&self) -> (usize, usize) {
        match &self.kind {
            Kind::Deconvolution(m) => (1, m.input_grid().len()),
            Kind::PhaseRetrieval(m) => {
                let n = (m.input_grid().len() as f64).sqrt().round() as usize;
                (n, n)
            }
        }
    }

    pub fn deconvolution(&self) -> Option<&DeconvolutionModel> {
        match &self.kind {
            Kind::Deconvolution(m) => Some(m),
            Kind::PhaseRetrieval(_) => None,
        }
    }
}
