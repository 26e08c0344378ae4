//! Quadratic penalties `R(u) = <u − u0, G(u − u0)>` and their Bregman
//! distances.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, Layout, Signal};

/// Positive definite operator realizing the parameter-space inner product
/// `<u, Gv>` on top of the grid quadrature.
#[derive(Clone)]
pub enum Gram {
    Identity,
    /// Pointwise positive weights.
    Diagonal(Vec<f64>),
    /// Fourier multiplier `(1 + |k|^2)^s` on a regular periodic grid.
    Sobolev(SobolevGram),
}

impl fmt::Debug for Gram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gram::Identity => write!(f, "Identity"),
            Gram::Diagonal(d) => write!(f, "Diagonal({} entries)", d.len()),
            Gram::Sobolev(s) => write!(f, "Sobolev(s = {})", s.s),
        }
    }
}

#[derive(Clone)]
pub struct SobolevGram {
    s: f64,
    rows: usize,
    cols: usize,
    multiplier: Vec<f64>,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    (0..n)
        .map(|m| {
            let m = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
            2.0 * PI * m / length
        })
        .collect()
}

impl SobolevGram {
    /// Sobolev index `s >= 0` on a grid with a regular layout.
    pub fn new(grid: &Grid, s: f64) -> Result<Self> {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(invalid(format!("Sobolev index must be nonnegative, got {s}")));
        }
        // Data stored as `rows` blocks of `cols` contiguous values; 1D grids
        // are a single row.
        let (rows, cols, kr, kc) = match *grid.layout() {
            Layout::Regular1d { n, length } => (1, n, vec![0.0], wavenumbers(n, length)),
            Layout::Regular2d { rows, cols, lengths } => (
                rows,
                cols,
                wavenumbers(rows, lengths[0]),
                wavenumbers(cols, lengths[1]),
            ),
            Layout::Scattered => {
                return Err(Error::Unsupported(
                    "Sobolev Gram operator needs a regular periodic grid".into(),
                ))
            }
        };
        let mut multiplier = Vec::with_capacity(rows * cols);
        for a in &kr {
            for b in &kc {
                multiplier.push((1.0 + a * a + b * b).powf(s));
            }
        }
        let mut planner = FftPlanner::new();
        Ok(SobolevGram {
            s,
            rows,
            cols,
            multiplier,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        })
    }

    pub fn index(&self) -> f64 {
        self.s
    }

    fn transform(&self, data: &mut [Complex64], forward: bool) {
        let (row, col) = if forward {
            (&self.row_fwd, &self.col_fwd)
        } else {
            (&self.row_inv, &self.col_inv)
        };
        row.process(data);
        if self.rows > 1 {
            let mut buf = vec![Complex64::default(); self.rows];
            for c in 0..self.cols {
                for r in 0..self.rows {
                    buf[r] = data[r * self.cols + c];
                }
                col.process(&mut buf);
                for r in 0..self.rows {
                    data[r * self.cols + c] = buf[r];
                }
            }
        }
    }

    /// Applies the multiplier raised to `power` (1 for G, −1 for G⁻¹).
    fn apply_power(&self, v: &[f64], power: f64) -> Vec<f64> {
        let mut data: Vec<Complex64> = v.iter().map(|x| Complex64::new(*x, 0.0)).collect();
        self.transform(&mut data, true);
        for (d, m) in data.iter_mut().zip(&self.multiplier) {
            *d *= m.powf(power);
        }
        self.transform(&mut data, false);
        let n = (self.rows * self.cols) as f64;
        data.iter().map(|c| c.re / n).collect()
    }
}

impl Gram {
    pub fn sobolev(grid: &Grid, s: f64) -> Result<Self> {
        Ok(Gram::Sobolev(SobolevGram::new(grid, s)?))
    }

    fn validate(&self, grid: &Grid) -> Result<()> {
        match self {
            Gram::Identity => Ok(()),
            Gram::Diagonal(d) => {
                if d.len() != grid.len() {
                    return Err(Error::Alignment(format!(
                        "diagonal Gram with {} entries on a grid of {} points",
                        d.len(),
                        grid.len()
                    )));
                }
                if d.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                    return Err(invalid("diagonal Gram entries must be positive"));
                }
                Ok(())
            }
            Gram::Sobolev(s) => {
                if s.rows * s.cols != grid.len() {
                    return Err(Error::Alignment("Sobolev Gram built for another grid".into()));
                }
                Ok(())
            }
        }
    }

    fn apply_raw(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Gram::Identity => v.to_vec(),
            Gram::Diagonal(d) => v.iter().zip(d).map(|(a, b)| a * b).collect(),
            Gram::Sobolev(s) => s.apply_power(v, 1.0),
        }
    }

    fn apply_inverse_raw(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Gram::Identity => v.to_vec(),
            Gram::Diagonal(d) => v.iter().zip(d).map(|(a, b)| a / b).collect(),
            Gram::Sobolev(s) => s.apply_power(v, -1.0),
        }
    }
}

/// `R(u) = <u − u0, G(u − u0)>_X` together with the constants used by the
/// Lepskiĭ rule (`C_bd` in `‖u − v‖^q ≤ C_bd D(u, v)`, and `q`).
#[derive(Debug, Clone)]
pub struct QuadraticPenalty {
    u0: Signal,
    gram: Gram,
    c_bd: f64,
    q: f64,
}

impl QuadraticPenalty {
    pub fn new(u0: Signal, gram: Gram) -> Result<Self> {
        gram.validate(u0.grid())?;
        Ok(QuadraticPenalty {
            u0,
            gram,
            c_bd: 1.0,
            q: 2.0,
        })
    }

    /// `‖u − u0‖²` in the plain grid inner product.
    pub fn identity(u0: Signal) -> Self {
        QuadraticPenalty {
            u0,
            gram: Gram::Identity,
            c_bd: 1.0,
            q: 2.0,
        }
    }

    pub fn with_constants(mut self, c_bd: f64, q: f64) -> Result<Self> {
        if !(c_bd > 0.0) || !(q >= 1.0) {
            return Err(invalid("need C_bd > 0 and q >= 1"));
        }
        self.c_bd = c_bd;
        self.q = q;
        Ok(self)
    }

    pub fn u0(&self) -> &Signal {
        &self.u0
    }

    pub fn gram(&self) -> &Gram {
        &self.gram
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.u0.grid()
    }

    pub fn c_bd(&self) -> f64 {
        self.c_bd
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// `G h`.
    pub fn gram_apply(&self, h: &Signal) -> Result<Signal> {
        h.ensure_grid(self.grid(), "Gram operator")?;
        Ok(Signal::from_vec(h.grid().clone(), self.gram.apply_raw(h.values())))
    }

    /// `G⁻¹ h`.
    pub fn gram_solve(&self, h: &Signal) -> Result<Signal> {
        h.ensure_grid(self.grid(), "Gram operator")?;
        Ok(Signal::from_vec(
            h.grid().clone(),
            self.gram.apply_inverse_raw(h.values()),
        ))
    }

    /// `<a, G b>_X`.
    pub fn inner(&self, a: &Signal, b: &Signal) -> Result<f64> {
        a.dot(&self.gram_apply(b)?)
    }

    /// Norm induced by the Gram operator.
    pub fn norm(&self, h: &Signal) -> Result<f64> {
        Ok(self.inner(h, h)?.max(0.0).sqrt())
    }

    pub fn value(&self, u: &Signal) -> Result<f64> {
        self.bregman_distance(u, &self.u0)
    }

    /// Bregman distance of `R` at `uref`; for a quadratic penalty this is
    /// `<u − uref, G(u − uref)>`.
    pub fn bregman_distance(&self, u: &Signal, uref: &Signal) -> Result<f64> {
        u.ensure_grid(self.grid(), "penalty argument")?;
        let d = u.sub(uref)?;
        Ok(self.inner(&d, &d)?.max(0.0))
    }
}

/// Convenience for [`QuadraticPenalty::value`].
pub fn penalty_value(p: &QuadraticPenalty, u: &Signal) -> Result<f64> {
    p.value(u)
}

/// Convenience for [`QuadraticPenalty::bregman_distance`].
pub fn bregman_distance(p: &QuadraticPenalty, u: &Signal, uref: &Signal) -> Result<f64> {
    p.bregman_distance(u, uref)
}
