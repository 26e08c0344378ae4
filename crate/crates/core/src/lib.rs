//! Iteratively regularized Newton methods for ill-posed operator equations
//! with general data misfit functionals.
//!
//! The crate provides the building blocks (grids and signals, forward model
//! contract, quadratic penalties), three data fidelities (squared L2, offset
//! Kullback-Leibler for Poisson counts, Pearson's phi^2), a Poisson sampler
//! with binning, the outer Newton iteration with an inner Gauss-Newton/CG
//! solver, stopping rules, index-function calculus and two test problems.

pub mod error;
pub mod grid;
pub mod misfit;
pub mod model;
pub mod penalty;
pub mod poisson;
pub mod problems;
pub mod rates;
pub mod solver;
pub mod stopping;

pub use error::{Error, Result};
pub use grid::{Grid, Layout, Signal};
pub use misfit::{Misfit, Observation};
pub use model::{ForwardModel, Linearization};
pub use penalty::{Gram, QuadraticPenalty};
pub use poisson::{Binning, CountData};
pub use solver::{run_newton, IterateTrace, NewtonConfig};
pub use stopping::StoppingRule;
