//! The forward-operator contract and numerical consistency checks.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, Signal};

/// A (possibly nonlinear) operator `F` from parameter signals on
/// [`ForwardModel::input_grid`] to densities on [`ForwardModel::output_grid`].
///
/// Adjoints are taken with respect to the quadrature-weighted inner products
/// of the two grids.
pub trait ForwardModel: Send + Sync {
    fn input_grid(&self) -> &Arc<Grid>;
    fn output_grid(&self) -> &Arc<Grid>;

    fn apply(&self, u: &Signal) -> Result<Signal>;

    /// Directional derivative `F'(u; h)`.
    fn derivative(&self, u: &Signal, h: &Signal) -> Result<Signal>;

    /// `F'[u]^* r`.
    fn adjoint_derivative(&self, u: &Signal, r: &Signal) -> Result<Signal>;

    /// Membership of `u` in the domain of definition.
    fn in_domain(&self, _u: &Signal) -> bool {
        true
    }

    fn is_linear(&self) -> bool {
        false
    }

    /// The derivative at `u` as a linear operator. Models override this to
    /// cache quantities that depend only on `u`.
    fn linearize(&self, u: &Signal) -> Result<Box<dyn Linearization + '_>> {
        u.ensure_grid(self.input_grid(), "linearization point")?;
        Ok(Box::new(FrozenDerivative {
            model: self,
            u: u.clone(),
        }))
    }
}

/// A bounded linear operator together with its adjoint.
pub trait Linearization: Send + Sync {
    fn input_grid(&self) -> &Arc<Grid>;
    fn output_grid(&self) -> &Arc<Grid>;
    fn apply(&self, h: &Signal) -> Result<Signal>;
    fn adjoint(&self, r: &Signal) -> Result<Signal>;
}

struct FrozenDerivative<'a, M: ?Sized> {
    model: &'a M,
    u: Signal,
}

impl<M: ForwardModel + ?Sized> Linearization for FrozenDerivative<'_, M> {
    fn input_grid(&self) -> &Arc<Grid> {
        self.model.input_grid()
    }

    fn output_grid(&self) -> &Arc<Grid> {
        self.model.output_grid()
    }

    fn apply(&self, h: &Signal) -> Result<Signal> {
        self.model.derivative(&self.u, h)
    }

    fn adjoint(&self, r: &Signal) -> Result<Signal> {
        self.model.adjoint_derivative(&self.u, r)
    }
}

/// Standard normal samples on a grid.
pub fn random_signal(grid: &Arc<Grid>, rng: &mut impl Rng) -> Signal {
    let values = (0..grid.len()).map(|_| rng.sample(StandardNormal)).collect();
    Signal::from_vec(grid.clone(), values)
}

/// Randomized inner-product test `<F'(u;h), r>_Y = <h, F'[u]^* r>_X`.
///
/// Returns the largest observed
/// `|<F'h, r> - <h, F'^* r>| / max(‖F'h‖‖r‖, ‖h‖‖F'^* r‖)` over `trials`
/// standard normal pairs. The denominator bounds both inner products by
/// Cauchy-Schwarz, so the measure does not depend on the operator's scale.
pub fn check_adjoint(model: &dyn ForwardModel, u: &Signal, trials: usize, seed: u64) -> Result<f64> {
    if !model.in_domain(u) {
        return Err(Error::Feasibility("adjoint test point outside the domain".into()));
    }
    let lin = model.linearize(u)?;
    check_linearization_adjoint(lin.as_ref(), trials, seed)
}

/// [`check_adjoint`] for an already linearized operator.
pub fn check_linearization_adjoint(lin: &dyn Linearization, trials: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < trials {
        let h = random_signal(lin.input_grid(), &mut rng);
        let r = random_signal(lin.output_grid(), &mut rng);
        if h.norm() == 0.0 || r.norm() == 0.0 {
            continue;
        }
        let fh = lin.apply(&h)?;
        let atr = lin.adjoint(&r)?;
        let lhs = fh.dot(&r)?;
        let rhs = h.dot(&atr)?;
        let scale = (fh.norm() * r.norm()).max(h.norm() * atr.norm());
        if scale > 0.0 {
            worst = worst.max((lhs - rhs).abs() / scale);
        }
        done += 1;
    }
    Ok(worst)
}

/// Outcome of a finite-difference derivative test.
#[derive(Debug, Clone)]
pub struct FdCheck {
    pub eps: Vec<f64>,
    /// `‖F(u+εh) − F(u) − εF'(u;h)‖ / ε` for each ε.
    pub errors: Vec<f64>,
    /// Log-log slope of `errors` against `eps`; `None` when the remainder is
    /// at round-off level (linear models).
    pub order: Option<f64>,
}

impl FdCheck {
    pub fn passes(&self, min_order: f64) -> bool {
        self.order.is_none_or(|p| p >= min_order)
    }
}

pub fn fd_derivative_check(model: &dyn ForwardModel, u: &Signal, h: &Signal, eps: &[f64]) -> Result<FdCheck> {
    if eps.len() < 2 || eps.iter().any(|e| !(*e > 0.0)) {
        return Err(invalid("need at least two positive step sizes"));
    }
    let fu = model.apply(u)?;
    let dh = model.derivative(u, h)?;
    let scale = dh.norm().max(fu.norm() * f64::EPSILON);
    let mut errors = Vec::with_capacity(eps.len());
    for &e in eps {
        let mut up = u.clone();
        up.axpy(e, h)?;
        let mut rem = model.apply(&up)?.sub(&fu)?;
        rem.axpy(-e, &dh)?;
        errors.push(rem.norm() / e);
    }
    let roundoff = errors.iter().all(|r| *r <= 1e-9 * scale.max(1e-300));
    let order = if roundoff {
        None
    } else {
        let lx: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
        let ly: Vec<f64> = errors.iter().map(|r| r.max(1e-300).ln()).collect();
        Some(ls_slope(&lx, &ly))
    };
    Ok(FdCheck {
        eps: eps.to_vec(),
        errors,
        order,
    })
}

fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
