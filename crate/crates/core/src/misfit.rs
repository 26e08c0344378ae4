//! Data fidelity functionals and their quadratic models.
//!
//! All functionals are quadrature sums over the output grid. `+∞` is a
//! regular return value (outside the side constraint, or a log of zero
//! weighted by positive data), never an error.

use crate::error::{invalid, Error, Result};
use crate::grid::{ensure_same, Grid, Signal};
use crate::poisson::CountData;
use std::sync::Arc;

/// Observed data: a deterministic density or Poisson counts.
#[derive(Debug, Clone)]
pub enum Observation {
    Signal(Signal),
    Counts(CountData),
}

impl Observation {
    pub fn grid(&self) -> &Arc<Grid> {
        match self {
            Observation::Signal(s) => s.grid(),
            Observation::Counts(c) => c.grid(),
        }
    }

    /// The data as a density on the output grid (`counts / (t |M_j|)`).
    pub fn density(&self) -> Signal {
        match self {
            Observation::Signal(s) => s.clone(),
            Observation::Counts(c) => c.density(),
        }
    }
}

impl From<Signal> for Observation {
    fn from(s: Signal) -> Self {
        Observation::Signal(s)
    }
}

impl From<CountData> for Observation {
    fn from(c: CountData) -> Self {
        Observation::Counts(c)
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("offset must be a finite nonnegative number, got {sigma}")))
    }
}

/// Offset Kullback-Leibler divergence
/// `Σ_j w_j [g_j − g†_j − (g†_j + σ) ln((g_j + σ)/(g†_j + σ))]`.
///
/// `+∞` if `g < −σ/2` somewhere, or if `g_j + σ = 0 < g†_j + σ`. Terms with
/// `g†_j + σ = 0` use `0 ln 0 = 0`.
pub fn kl_divergence(g: &Signal, gdag: &Signal, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    ensure_same(g.grid(), gdag.grid(), "KL divergence")?;
    if g.values().iter().any(|v| *v < -sigma / 2.0) {
        return Ok(f64::INFINITY);
    }
    let mut sum = 0.0;
    for ((w, a), b) in g.grid().weights().iter().zip(g.values()).zip(gdag.values()) {
        let (x, y) = (a + sigma, b + sigma);
        let term = if y <= 0.0 {
            a - b
        } else if x <= 0.0 {
            return Ok(f64::INFINITY);
        } else {
            a - b - y * (x / y).ln()
        };
        sum += w * term;
    }
    Ok(sum)
}

/// Poisson negative log-likelihood with offset,
/// `Σ_j w_j [g_j − σ ln(g_j + σ)] − Σ_j (obs_j / t) ln(g_j + σ)`.
///
/// `g` is a density on the cell grid of `counts` (or on its fine grid, in
/// which case cell averages are used).
pub fn poisson_neg_loglik(g: &Signal, counts: &CountData, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let gbar = counts.binning().bin_average(g)?;
    if gbar.values().iter().any(|v| *v < -sigma / 2.0) {
        return Ok(f64::INFINITY);
    }
    let t = counts.t();
    let mut sum = 0.0;
    for ((w, v), c) in gbar.grid().weights().iter().zip(gbar.values()).zip(counts.counts()) {
        let x = v + sigma;
        let coef = w * sigma + *c as f64 / t;
        sum += w * v;
        if coef > 0.0 {
            if x <= 0.0 {
                return Ok(f64::INFINITY);
            }
            sum -= coef * x.ln();
        }
    }
    Ok(sum)
}

/// Weighted squared L2 distance.
pub fn l2_misfit(g: &Signal, obs: &Signal) -> Result<f64> {
    let d = g.sub(obs)?;
    Ok(d.dot(&d)?)
}

/// Pearson's φ² distance `Σ_j w_j |g_j − obs_j|² / max(obs_j, cutoff)`.
pub fn pearson_phi2(g: &Signal, obs: &Signal, cutoff: f64) -> Result<f64> {
    if !(cutoff > 0.0) {
        return Err(invalid(format!("Pearson cutoff must be positive, got {cutoff}")));
    }
    ensure_same(g.grid(), obs.grid(), "Pearson distance")?;
    Ok(g.grid()
        .weights()
        .iter()
        .zip(g.values())
        .zip(obs.values())
        .map(|((w, a), b)| w * (a - b) * (a - b) / b.max(cutoff))
        .sum())
}

/// Additive constant `s(g†) = Σ_j w_j [g†_j − (g†_j + σ) ln(g†_j + σ)]`
/// separating the likelihood from the KL divergence. It does not influence
/// any algorithm.
pub fn poisson_constant(gdag: &Signal, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    Ok(gdag
        .grid()
        .weights()
        .iter()
        .zip(gdag.values())
        .map(|(w, b)| {
            let y = b + sigma;
            let l = if y > 0.0 { y * y.ln() } else { 0.0 };
            w * (b - l)
        })
        .sum())
}

/// Second-order model `S(g + h) ≈ S(g) + (scale/2)(‖W h + r‖² − ‖r‖²)`.
///
/// `scale` is 2 for the quadratic fidelities (the model is then exact) and
/// 1 for Kullback-Leibler, whose model matches the Taylor expansion
/// `∫ (1 − (ĝ+σ)/(g+σ)) h + ½ (ĝ+σ)/(g+σ)² h²`.
#[derive(Debug, Clone)]
pub struct QuadraticModel {
    pub weight: Signal,
    pub residual: Signal,
    pub scale: f64,
}

/// A data fidelity `S(g; obs)` with exact-data counterpart `T(g; g†)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Misfit {
    /// `‖g − obs‖²`.
    L2,
    /// Offset Poisson likelihood / Kullback-Leibler divergence.
    KullbackLeibler,
    /// Pearson's φ² with denominator cutoff.
    Pearson { cutoff: f64 },
}

impl Misfit {
    pub fn name(&self) -> &'static str {
        match self {
            Misfit::L2 => "l2",
            Misfit::KullbackLeibler => "kl",
            Misfit::Pearson { .. } => "pearson",
        }
    }

    /// Whether the offset σ and its side constraint apply.
    pub fn uses_offset(&self) -> bool {
        matches!(self, Misfit::KullbackLeibler)
    }

    pub fn value(&self, g: &Signal, obs: &Observation, sigma: f64) -> Result<f64> {
        ensure_same(g.grid(), obs.grid(), "misfit")?;
        match (self, obs) {
            (Misfit::KullbackLeibler, Observation::Counts(c)) => poisson_neg_loglik(g, c, sigma),
            (Misfit::KullbackLeibler, Observation::Signal(s)) => kl_divergence(g, s, sigma),
            (Misfit::L2, o) => l2_misfit(g, &o.density()),
            (Misfit::Pearson { cutoff }, o) => pearson_phi2(g, &o.density(), *cutoff),
        }
    }

    /// [`Misfit::value`] without the `g ≥ −σ/2` cutoff for KL: finite as long
    /// as every log argument is positive. Used to monitor the inner solver,
    /// whose iterates may go down to `−ησ`.
    pub(crate) fn value_relaxed(&self, g: &Signal, obs: &Observation, sigma: f64) -> Result<f64> {
        if !self.uses_offset() || self.feasible(g, sigma) {
            return self.value(g, obs, sigma);
        }
        let d = obs.density();
        let t_inv = match obs {
            Observation::Counts(c) => Some(1.0 / c.t()),
            Observation::Signal(_) => None,
        };
        let mut sum = 0.0;
        for (j, ((w, a), b)) in g.grid().weights().iter().zip(g.values()).zip(d.values()).enumerate() {
            let x = a + sigma;
            let y = b + sigma;
            if x <= 0.0 {
                return Ok(f64::INFINITY);
            }
            sum += match (obs, t_inv) {
                (Observation::Counts(c), Some(ti)) => {
                    w * a - (w * sigma + c.counts()[j] as f64 * ti) * x.ln()
                }
                _ if y > 0.0 => w * (a - b - y * (x / y).ln()),
                _ => w * (a - b),
            };
        }
        Ok(sum)
    }

    /// `T(g; g†)`.
    pub fn exact_divergence(&self, g: &Signal, gdag: &Signal, sigma: f64) -> Result<f64> {
        match self {
            Misfit::KullbackLeibler => kl_divergence(g, gdag, sigma),
            Misfit::L2 => l2_misfit(g, gdag),
            Misfit::Pearson { cutoff } => pearson_phi2(g, gdag, *cutoff),
        }
    }

    /// Side constraint `g ≥ −σ/2` for KL; always true otherwise.
    pub fn feasible(&self, g: &Signal, sigma: f64) -> bool {
        !self.uses_offset() || g.min() >= -sigma / 2.0
    }

    /// Gradient of `value` with respect to the weighted inner product.
    pub fn gradient(&self, g: &Signal, obs: &Observation, sigma: f64) -> Result<Signal> {
        let d = obs.density();
        match self {
            Misfit::L2 => g.zip_map(&d, |a, b| 2.0 * (a - b)),
            Misfit::Pearson { cutoff } => g.zip_map(&d, |a, b| 2.0 * (a - b) / b.max(*cutoff)),
            Misfit::KullbackLeibler => {
                if !self.feasible(g, sigma) {
                    return Err(Error::Feasibility("g below −σ/2".into()));
                }
                g.zip_map(&d, |a, b| 1.0 - (b + sigma) / (a + sigma))
            }
        }
    }

    /// Quadratic model at a feasible `g`.
    pub fn quadratic_model(&self, g: &Signal, obs: &Observation, sigma: f64) -> Result<QuadraticModel> {
        if !self.feasible(g, sigma) {
            return Err(Error::Feasibility(format!(
                "min g = {} below −σ/2 = {}",
                g.min(),
                -sigma / 2.0
            )));
        }
        self.quadratic_model_relaxed(g, obs, sigma)
    }

    /// Quadratic model requiring only `g + σ > 0` for KL. The inner solver
    /// evaluates the model at linearized outputs bounded below by `−ησ`
    /// with `η` up to 1.
    pub(crate) fn quadratic_model_relaxed(
        &self,
        g: &Signal,
        obs: &Observation,
        sigma: f64,
    ) -> Result<QuadraticModel> {
        ensure_same(g.grid(), obs.grid(), "quadratic model")?;
        let d = obs.density();
        let grid = g.grid().clone();
        match self {
            Misfit::L2 => Ok(QuadraticModel {
                weight: Signal::constant(grid, 1.0),
                residual: g.sub(&d)?,
                scale: 2.0,
            }),
            Misfit::Pearson { cutoff } => {
                if !(*cutoff > 0.0) {
                    return Err(invalid("Pearson cutoff must be positive"));
                }
                let weight = d.map(|b| 1.0 / b.max(*cutoff).sqrt());
                let residual = g.sub(&d)?.zip_map(&weight, |r, w| r * w)?;
                Ok(QuadraticModel {
                    weight,
                    residual,
                    scale: 2.0,
                })
            }
            Misfit::KullbackLeibler => {
                check_sigma(sigma)?;
                let mut weight = Vec::with_capacity(g.len());
                let mut residual = Vec::with_capacity(g.len());
                for (a, b) in g.values().iter().zip(d.values()) {
                    let x = a + sigma;
                    let y = b + sigma;
                    if !(x > 0.0) {
                        return Err(Error::Feasibility(format!("g + σ = {x} is not positive")));
                    }
                    if !(y > 0.0) {
                        return Err(Error::Unsupported(
                            "zero offset with empty bins has no least-squares form".into(),
                        ));
                    }
                    weight.push(y.sqrt() / x);
                    residual.push((a - b) / y.sqrt());
                }
                Ok(QuadraticModel {
                    weight: Signal::from_vec(grid.clone(), weight),
                    residual: Signal::from_vec(grid, residual),
                    scale: 1.0,
                })
            }
        }
    }
}

/// Free-function form of [`Misfit::quadratic_model`] returning `(weight, residual)`.
pub fn quadratic_model(m: &Misfit, g: &Signal, obs: &Observation, sigma: f64) -> Result<(Signal, Signal)> {
    let q = m.quadratic_model(g, obs, sigma)?;
    Ok((q.weight, q.residual))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poisson::Binning;

    fn sig(v: &[f64]) -> Signal {
        Signal::new(Arc::new(Grid::unit(v.len()).unwrap()), v.to_vec()).unwrap()
    }

    fn on(grid: &Arc<Grid>, v: &[f64]) -> Signal {
        Signal::new(grid.clone(), v.to_vec()).unwrap()
    }

    #[test]
    fn kl_examples() {
        let g = sig(&[2.0]);
        let gd = on(g.grid(), &[1.0]);
        let v = kl_divergence(&g, &gd, 0.0).unwrap();
        assert!((v - (1.0 - 2f64.ln())).abs() < 1e-15);
        assert_eq!(kl_divergence(&g, &g, 0.3).unwrap(), 0.0);
        let z = on(g.grid(), &[0.0]);
        assert_eq!(kl_divergence(&z, &gd, 0.0).unwrap(), f64::INFINITY);
        // Below the side constraint.
        let neg = on(g.grid(), &[-0.6]);
        assert_eq!(kl_divergence(&neg, &gd, 1.0).unwrap(), f64::INFINITY);
        assert!(kl_divergence(&g, &gd, -1.0).is_err());
        assert!(kl_divergence(&g, &gd, f64::NAN).is_err());
    }

    #[test]
    fn kl_zero_truth_uses_convention() {
        let g = sig(&[0.5, 0.0]);
        let gd = on(g.grid(), &[0.0, 0.0]);
        assert_eq!(kl_divergence(&g, &gd, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn loglik_examples() {
        let grid = Arc::new(Grid::unit(2).unwrap());
        let b = Arc::new(Binning::identity(grid.clone()));
        let zero = CountData::new(vec![0, 0], 1.0, b.clone()).unwrap();
        assert_eq!(poisson_neg_loglik(&on(&grid, &[1.0, 1.0]), &zero, 0.0).unwrap(), 2.0);

        let one = CountData::new(vec![1, 0], 1.0, b).unwrap();
        let e = std::f64::consts::E;
        let v = poisson_neg_loglik(&on(&grid, &[e, 1.0]), &one, 0.0).unwrap();
        assert!((v - e).abs() < 1e-15);
        let v = poisson_neg_loglik(&on(&grid, &[0.0, 1.0]), &one, 0.0).unwrap();
        assert_eq!(v, f64::INFINITY);
        // Empty bin with zero prediction contributes nothing.
        let v = poisson_neg_loglik(&on(&grid, &[1.0, 0.0]), &one, 0.0).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn l2_and_pearson_examples() {
        let g = sig(&[1.0, 1.0]);
        let o = on(g.grid(), &[0.0, 0.0]);
        assert_eq!(l2_misfit(&g, &o).unwrap(), 2.0);
        assert_eq!(l2_misfit(&g, &g).unwrap(), 0.0);
        assert_eq!(l2_misfit(&g.scale(3.0), &o).unwrap(), 18.0);

        let g = sig(&[2.0]);
        assert_eq!(pearson_phi2(&g, &on(g.grid(), &[1.0]), 0.2).unwrap(), 1.0);
        let g = sig(&[0.1]);
        let v = pearson_phi2(&g, &on(g.grid(), &[0.0]), 0.2).unwrap();
        assert!((v - 0.05).abs() < 1e-15);
        assert!(pearson_phi2(&g, &g, 0.0).is_err());
    }

    #[test]
    fn quadratic_model_examples() {
        let g = sig(&[1.0]);
        let obs = Observation::Signal(on(g.grid(), &[3.0]));
        let q = Misfit::KullbackLeibler.quadratic_model(&g, &obs, 1.0).unwrap();
        assert_eq!(q.weight.values(), &[1.0]);
        assert_eq!(q.residual.values(), &[-1.0]);

        let q = Misfit::L2.quadratic_model(&g, &obs, 0.0).unwrap();
        assert_eq!(q.weight.values(), &[1.0]);

        let same = Observation::Signal(g.clone());
        let q = Misfit::KullbackLeibler.quadratic_model(&g, &same, 0.4).unwrap();
        assert_eq!(q.residual.values(), &[0.0]);

        let bad = sig(&[-0.6]);
        let obs = Observation::Signal(on(bad.grid(), &[1.0]));
        assert!(matches!(
            Misfit::KullbackLeibler.quadratic_model(&bad, &obs, 1.0),
            Err(Error::Feasibility(_))
        ));
    }

    #[test]
    fn pearson_matches_l2_for_unit_data() {
        let g = sig(&[0.3, 2.0, -1.0]);
        let o = on(g.grid(), &[1.0, 1.0, 1.0]);
        assert_eq!(pearson_phi2(&g, &o, 0.5).unwrap(), l2_misfit(&g, &o).unwrap());
    }
}
