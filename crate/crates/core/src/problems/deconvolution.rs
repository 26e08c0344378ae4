//! Circular convolution on a periodic grid.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, Layout, Signal};
use crate::model::{ForwardModel, Linearization};

/// `(F u)(x) = ∫ k(x − y) u(y) dy` with periodic wrap-around.
///
/// The kernel is stored by offset: entry `i` (row-major in 2D) is the value
/// at the grid offset `i`, so entry 0 is `k(0)`. Products are evaluated with
/// FFTs; the result equals the direct quadrature sum up to round-off.
#[derive(Clone)]
pub struct DeconvolutionModel {
    grid: Arc<Grid>,
    kernel: Vec<f64>,
    spectrum: Vec<Complex64>,
    cell: f64,
    rows: usize,
    cols: usize,
    fft: [Arc<dyn Fft<f64>>; 4],
}

impl std::fmt::Debug for DeconvolutionModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DeconvolutionModel")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("mass", &self.kernel_mass())
            .finish()
    }
}

impl DeconvolutionModel {
    pub fn new(grid: Arc<Grid>, kernel: Vec<f64>) -> Result<Self> {
        let (rows, cols) = match *grid.layout() {
            Layout::Regular1d { n, .. } => (1, n),
            Layout::Regular2d { rows, cols, .. } => (rows, cols),
            Layout::Scattered => {
                return Err(Error::Unsupported(
                    "convolution needs a regular periodic grid".into(),
                ))
            }
        };
        if kernel.len() != grid.len() {
            return Err(Error::Alignment(format!(
                "kernel has {} entries, grid has {} points",
                kernel.len(),
                grid.len()
            )));
        }
        if kernel.iter().any(|k| !(k.is_finite() && *k >= 0.0)) {
            return Err(invalid("convolution kernel must be finite and nonnegative"));
        }
        let cell = grid.weights()[0];
        let mut planner = FftPlanner::new();
        let fft = [
            planner.plan_fft_forward(cols),
            planner.plan_fft_inverse(cols),
            planner.plan_fft_forward(rows),
            planner.plan_fft_inverse(rows),
        ];
        let mut model = DeconvolutionModel {
            grid,
            kernel,
            spectrum: Vec::new(),
            cell,
            rows,
            cols,
            fft,
        };
        let mut spec: Vec<Complex64> = model.kernel.iter().map(|k| Complex64::new(*k, 0.0)).collect();
        model.transform(&mut spec, true);
        model.spectrum = spec;
        Ok(model)
    }

    /// Kernel with unit mass concentrated at offset 0; `F` is the identity.
    pub fn delta(grid: Arc<Grid>) -> Result<Self> {
        let mut k = vec![0.0; grid.len()];
        k[0] = 1.0 / grid.weights()[0];
        Self::new(grid, k)
    }

    /// Periodized Gaussian of standard deviation `width`, normalized to unit
    /// mass on the grid.
    pub fn gaussian(grid: Arc<Grid>, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(invalid("kernel width must be positive"));
        }
        let (rows, cols, lr, lc) = match *grid.layout() {
            Layout::Regular1d { n, length } => (1, n, 1.0, length),
            Layout::Regular2d { rows, cols, lengths } => (rows, cols, lengths[0], lengths[1]),
            Layout::Scattered => {
                return Err(Error::Unsupported(
                    "convolution needs a regular periodic grid".into(),
                ))
            }
        };
        // Signed distance of offset index i on a periodic axis of n cells.
        let offset = |i: usize, n: usize, l: f64| {
            let i = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
            i * l / n as f64
        };
        let mut k = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let dr = if rows > 1 { offset(r, rows, lr) } else { 0.0 };
            for c in 0..cols {
                let dc = offset(c, cols, lc);
                k.push((-(dr * dr + dc * dc) / (2.0 * width * width)).exp());
            }
        }
        let mass: f64 = k.iter().sum::<f64>() * grid.weights()[0];
        k.iter_mut().for_each(|v| *v /= mass);
        Self::new(grid, k)
    }

    /// Standard 1D test problem: `n` cells on `[0, 1)` with a Gaussian kernel.
    pub fn gaussian_1d(n: usize, width: f64) -> Result<Self> {
        Self::gaussian(Arc::new(Grid::periodic_1d(n, 0.0, 1.0)?), width)
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    /// `∫ k`.
    pub fn kernel_mass(&self) -> f64 {
        self.kernel.iter().sum::<f64>() * self.cell
    }

    /// Eigenvalues of `F` in FFT order (row-major in 2D).
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.spectrum.iter().map(|s| s * self.cell).collect()
    }

    /// Unit-sup-norm element of the range of `(F^*F)^ν` on a 1D grid.
    ///
    /// The preimage `w` is a cosine series with seeded random phases whose
    /// squared amplitude at frequency `k` is the log-spectrum gap
    /// `ln |λ_k|² − ln |λ_{k+1}|²`. The mass of `w` is then spread evenly
    /// over the spectrum on a log scale, so Tikhonov-type errors of
    /// `u0 + c·(F^*F)^ν w` behave like `α^{2ν}` over the whole resolved range
    /// rather than being dominated by a few modes.
    pub fn source_element(&self, nu: f64, seed: u64) -> Result<Signal> {
        use rand::{Rng, SeedableRng};
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(invalid("source exponent must be positive"));
        }
        if self.rows != 1 {
            return Err(Error::Unsupported("source elements are built on 1D grids only".into()));
        }
        let n = self.cols;
        let lam2: Vec<f64> = self.eigenvalues().iter().map(|l| l.norm_sqr().max(1e-300)).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut w = vec![Complex64::default(); n];
        for k in 1..n.div_ceil(2) {
            let gap = (lam2[k].ln() - lam2[k + 1].ln()).max(0.0);
            let phase = rng.random::<f64>() * std::f64::consts::TAU;
            let c = Complex64::from_polar(gap.sqrt(), phase);
            w[k] = c;
            w[n - k] = c.conj();
        }
        for (v, l) in w.iter_mut().zip(&lam2) {
            *v *= l.powf(nu);
        }
        self.fft[1].process(&mut w);
        let vals: Vec<f64> = w.iter().map(|c| c.re).collect();
        let m = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if m == 0.0 {
            return Err(Error::Numeric("source element vanished".into()));
        }
        Signal::new(self.grid.clone(), vals.iter().map(|v| v / m).collect())
    }

    fn transform(&self, data: &mut [Complex64], forward: bool) {
        let (row, col) = if forward {
            (&self.fft[0], &self.fft[2])
        } else {
            (&self.fft[1], &self.fft[3])
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

    fn filter(&self, v: &Signal, adjoint: bool) -> Result<Signal> {
        v.ensure_grid(&self.grid, "convolution argument")?;
        let mut data: Vec<Complex64> = v.values().iter().map(|x| Complex64::new(*x, 0.0)).collect();
        self.transform(&mut data, true);
        for (d, s) in data.iter_mut().zip(&self.spectrum) {
            *d *= if adjoint { s.conj() } else { *s };
        }
        self.transform(&mut data, false);
        let scale = self.cell / (self.rows * self.cols) as f64;
        Signal::new(self.grid.clone(), data.iter().map(|c| c.re * scale).collect())
    }

    /// `F u`.
    pub fn convolve(&self, u: &Signal) -> Result<Signal> {
        self.filter(u, false)
    }

    /// `F^* r`, correlation with the kernel.
    pub fn correlate(&self, r: &Signal) -> Result<Signal> {
        self.filter(r, true)
    }
}

impl ForwardModel for DeconvolutionModel {
    fn input_grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    fn output_grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    fn apply(&self, u: &Signal) -> Result<Signal> {
        self.convolve(u)
    }

    fn derivative(&self, _u: &Signal, h: &Signal) -> Result<Signal> {
        self.convolve(h)
    }

    fn adjoint_derivative(&self, _u: &Signal, r: &Signal) -> Result<Signal> {
        self.correlate(r)
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn linearize(&self, u: &Signal) -> Result<Box<dyn Linearization + '_>> {
        u.ensure_grid(&self.grid, "linearization point")?;
        Ok(Box::new(Frozen(self)))
    }
}

struct Frozen<'a>(&'a DeconvolutionModel);

impl Linearization for Frozen<'_> {
    fn input_grid(&self) -> &Arc<Grid> {
        &self.0.grid
    }

    fn output_grid(&self) -> &Arc<Grid> {
        &self.0.grid
    }

    fn apply(&self, h: &Signal) -> Result<Signal> {
        self.0.convolve(h)
    }

    fn adjoint(&self, r: &Signal) -> Result<Signal> {
        self.0.correlate(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::check_adjoint;

    fn direct(model: &DeconvolutionModel, u: &[f64]) -> Vec<f64> {
        let n = u.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| model.kernel[(i + n - j) % n] * u[j] * model.cell)
                    .sum()
            })
            .collect()
    }

    #[test]
    fn fft_matches_direct_sum() {
        let m = DeconvolutionModel::gaussian_1d(32, 0.05).unwrap();
        let u = Signal::from_fn(m.grid.clone(), |x| (7.0 * x[0]).sin() + x[0]).unwrap();
        let fast = m.convolve(&u).unwrap();
        for (a, b) in fast.values().iter().zip(direct(&m, u.values())) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_is_identity() {
        let g = Arc::new(Grid::periodic_1d(16, 0.0, 1.0).unwrap());
        let m = DeconvolutionModel::delta(g.clone()).unwrap();
        let u = Signal::from_fn(g, |x| x[0] * x[0]).unwrap();
        assert!(m.apply(&u).unwrap().distance(&u).unwrap() < 1e-14);
    }

    #[test]
    fn constants_scale_by_mass() {
        let g = Arc::new(Grid::periodic_square(12, 0.0, 1.0).unwrap());
        let m = DeconvolutionModel::gaussian(g.clone(), 0.1).unwrap();
        let out = m.apply(&Signal::constant(g, 3.0)).unwrap();
        assert!(out.values().iter().all(|v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn adjoint_is_correlation() {
        let g = Arc::new(Grid::periodic_square(10, 0.0, 2.0).unwrap());
        // Asymmetric kernel so that correlation differs from convolution.
        let k: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64).collect();
        let m = DeconvolutionModel::new(g.clone(), k).unwrap();
        let u = Signal::zeros(g);
        assert!(check_adjoint(&m, &u, 5, 3).unwrap() < 1e-12);
    }

    #[test]
    fn source_element_lies_in_the_range() {
        let m = DeconvolutionModel::gaussian_1d(64, 0.03).unwrap();
        let s = m.source_element(0.5, 7).unwrap();
        assert!((s.values().iter().fold(0.0f64, |a, v| a.max(v.abs())) - 1.0).abs() < 1e-15);
        assert!(s.integral().abs() < 1e-12);
        let b = m.source_element(0.5, 7).unwrap();
        assert_eq!(s.values(), b.values());
        assert!(m.source_element(0.5, 8).unwrap().distance(&s).unwrap() > 0.1);
    }

    #[test]
    fn rejects_bad_kernels() {
        let g = Arc::new(Grid::periodic_1d(4, 0.0, 1.0).unwrap());
        assert!(DeconvolutionModel::new(g.clone(), vec![1.0; 3]).is_err());
        assert!(DeconvolutionModel::new(g, vec![1.0, -1.0, 0.0, 0.0]).is_err());
    }
}
