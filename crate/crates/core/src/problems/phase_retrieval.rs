//! Fourier-modulus phase retrieval for a pure phase object.
//!
//! `(F φ)(ξ) = |∫_{B_ρ} e^{−iξ·x} e^{iφ(x)} dx|²` with the integral replaced
//! by midpoint quadrature over the cells of a square grid whose centers lie
//! in the disk `B_ρ`. The transform is evaluated as a separable direct sum.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::grid::{Grid, Signal};
use crate::model::{ForwardModel, Linearization};

#[derive(Debug, Clone)]
pub struct PhaseRetrievalModel {
    input: Arc<Grid>,
    output: Arc<Grid>,
    n: usize,
    m: usize,
    rho: f64,
    kappa: f64,
    mask: Vec<bool>,
    cell: f64,
    /// `e^{−i ξ_a x_r}`, row-major `m x n`. Both axes share the nodes.
    kernel: Vec<Complex64>,
}

impl PhaseRetrievalModel {
    /// Support grid of `n x n` cells on `[−ρ, ρ]²`, measurement grid of
    /// `m x m` frequencies `ξ_b = −κ + 2κ b / m`.
    pub fn new(n: usize, m: usize, rho: f64, kappa: f64) -> Result<Self> {
        if n < 2 || m < 2 || !(rho > 0.0) || !(kappa > 0.0) {
            return Err(invalid("phase retrieval needs n, m >= 2 and positive rho, kappa"));
        }
        let input = Arc::new(Grid::periodic_square(n, -rho, rho)?);
        let dxi = 2.0 * kappa / m as f64;
        let output = Arc::new(Grid::regular_2d(m, m, [-kappa, -kappa], [dxi, dxi])?);
        let mask = input
            .points()
            .iter()
            .map(|p| p[0] * p[0] + p[1] * p[1] <= rho * rho)
            .collect();
        let h = 2.0 * rho / n as f64;
        let nodes: Vec<f64> = (0..n).map(|r| -rho + (r as f64 + 0.5) * h).collect();
        let mut kernel = Vec::with_capacity(m * n);
        for a in 0..m {
            let xi = -kappa + a as f64 * dxi;
            for x in &nodes {
                kernel.push(Complex64::from_polar(1.0, -xi * x));
            }
        }
        Ok(PhaseRetrievalModel {
            cell: h * h,
            input,
            output,
            n,
            m,
            rho,
            kappa,
            mask,
            kernel,
        })
    }

    /// 32² support cells, 48² frequencies, `ρ = 0.4`, `κ = 16`.
    pub fn standard() -> Result<Self> {
        Self::new(32, 48, 0.4, 16.0)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Which support cells lie in `B_ρ`.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Quadrature area of the disk.
    pub fn support_area(&self) -> f64 {
        self.mask.iter().filter(|b| **b).count() as f64 * self.cell
    }

    /// `1 + bias (1 − |x|²/ρ²)` on the disk, 1 outside.
    ///
    /// The constant guess `φ ≡ c` is a poor start: every `c + odd` phase
    /// is a fixed point set of the twin map `φ ↦ 2c − φ(−·)`, which leaves
    /// the data invariant, so the derivative vanishes on even directions
    /// there and Newton iterates never leave that set. A small even
    /// component breaks the symmetry; its sign only decides whether the
    /// iteration heads for the solution or for its twin.
    pub fn dome_guess(&self, bias: f64) -> Result<Signal> {
        let r2 = self.rho * self.rho;
        Signal::from_fn(self.input.clone(), |p| {
            1.0 + bias * (1.0 - (p[0] * p[0] + p[1] * p[1]) / r2).max(0.0)
        })
    }

    /// `L²(B_ρ)` distance on the mask.
    pub fn masked_distance(&self, a: &Signal, b: &Signal) -> Result<f64> {
        a.ensure_grid(&self.input, "phase")?;
        b.ensure_grid(&self.input, "phase")?;
        let s: f64 = self
            .mask
            .iter()
            .zip(a.values().iter().zip(b.values()))
            .filter(|(m, _)| **m)
            .map(|(_, (x, y))| (x - y) * (x - y))
            .sum();
        Ok((s * self.cell).sqrt())
    }

    /// Masked distance modulo the trivial ambiguities of the data: a global
    /// phase shift and the twin `φ ↦ −φ(−·)`. The optimal shift is the
    /// mean difference over the disk.
    pub fn ambiguity_distance(&self, phi: &Signal, truth: &Signal) -> Result<f64> {
        phi.ensure_grid(&self.input, "phase")?;
        truth.ensure_grid(&self.input, "phase")?;
        let n = self.n;
        let count = self.mask.iter().filter(|b| **b).count() as f64;
        let mut best = f64::INFINITY;
        for twin in [false, true] {
            let v: Vec<f64> = (0..n * n)
                .map(|i| {
                    if twin {
                        // The grid is symmetric: −x is the reversed index.
                        -phi.values()[n * n - 1 - i]
                    } else {
                        phi.values()[i]
                    }
                })
                .collect();
            let idx = || (0..n * n).filter(|i| self.mask[*i]);
            let shift = idx().map(|i| truth.values()[i] - v[i]).sum::<f64>() / count;
            let s: f64 = idx().map(|i| (v[i] + shift - truth.values()[i]).powi(2)).sum();
            best = best.min((s * self.cell).sqrt());
        }
        Ok(best)
    }

    /// Masked `e^{iφ}`.
    fn modulation(&self, phi: &Signal) -> Result<Vec<Complex64>> {
        phi.ensure_grid(&self.input, "phase")?;
        Ok(phi
            .values()
            .iter()
            .zip(&self.mask)
            .map(|(p, inside)| if *inside { Complex64::from_polar(1.0, *p) } else { Complex64::default() })
            .collect())
    }

    /// `D[v](ξ) = Σ_x w e^{−iξ·x} v(x)`.
    fn transform(&self, v: &[Complex64]) -> Vec<Complex64> {
        let (n, m) = (self.n, self.m);
        // T[a][c] = Σ_r E[a][r] v[r][c]
        let mut t = vec![Complex64::default(); m * n];
        for a in 0..m {
            let e = &self.kernel[a * n..(a + 1) * n];
            let row = &mut t[a * n..(a + 1) * n];
            for (r, er) in e.iter().enumerate() {
                let src = &v[r * n..(r + 1) * n];
                for (dst, s) in row.iter_mut().zip(src) {
                    *dst += er * s;
                }
            }
        }
        let mut out = vec![Complex64::default(); m * m];
        for a in 0..m {
            let ta = &t[a * n..(a + 1) * n];
            for b in 0..m {
                let e = &self.kernel[b * n..(b + 1) * n];
                let s: Complex64 = ta.iter().zip(e).map(|(x, y)| x * y).sum();
                out[a * m + b] = s * self.cell;
            }
        }
        out
    }

    /// `S(x) = Σ_ξ e^{−iξ·x} B(ξ)` (no quadrature weight).
    fn back_transform(&self, bmat: &[Complex64]) -> Vec<Complex64> {
        let (n, m) = (self.n, self.m);
        // U[r][b] = Σ_a E[a][r] B[a][b]
        let mut u = vec![Complex64::default(); n * m];
        for a in 0..m {
            let e = &self.kernel[a * n..(a + 1) * n];
            let brow = &bmat[a * m..(a + 1) * m];
            for (r, er) in e.iter().enumerate() {
                let dst = &mut u[r * m..(r + 1) * m];
                for (d, bv) in dst.iter_mut().zip(brow) {
                    *d += er * bv;
                }
            }
        }
        let mut out = vec![Complex64::default(); n * n];
        for r in 0..n {
            let ur = &u[r * m..(r + 1) * m];
            for c in 0..n {
                let mut s = Complex64::default();
                for (b, ub) in ur.iter().enumerate() {
                    s += ub * self.kernel[b * n + c];
                }
                out[r * n + c] = s;
            }
        }
        out
    }

    /// Complex amplitude `A(φ)` on the measurement grid.
    pub fn amplitude(&self, phi: &Signal) -> Result<Vec<Complex64>> {
        Ok(self.transform(&self.modulation(phi)?))
    }

    fn frozen(&self, phi: &Signal) -> Result<PrLinearization<'_>> {
        let z = self.modulation(phi)?;
        let amp = self.transform(&z);
        Ok(PrLinearization { model: self, z, amp })
    }
}

struct PrLinearization<'a> {
    model: &'a PhaseRetrievalModel,
    z: Vec<Complex64>,
    amp: Vec<Complex64>,
}

impl Linearization for PrLinearization<'_> {
    fn input_grid(&self) -> &Arc<Grid> {
        &self.model.input
    }

    fn output_grid(&self) -> &Arc<Grid> {
        &self.model.output
    }

    fn apply(&self, h: &Signal) -> Result<Signal> {
        h.ensure_grid(&self.model.input, "derivative direction")?;
        let i = Complex64::i();
        let v: Vec<Complex64> = self.z.iter().zip(h.values()).map(|(z, h)| i * z * h).collect();
        let dv = self.model.transform(&v);
        let out = self
            .amp
            .iter()
            .zip(&dv)
            .map(|(a, d)| 2.0 * (a.conj() * d).re)
            .collect();
        Signal::new(self.model.output.clone(), out)
    }

    fn adjoint(&self, r: &Signal) -> Result<Signal> {
        r.ensure_grid(&self.model.output, "adjoint argument")?;
        let w = self.model.output.weights();
        let b: Vec<Complex64> = self
            .amp
            .iter()
            .zip(r.values())
            .zip(w)
            .map(|((a, r), w)| a.conj() * (r * w))
            .collect();
        let s = self.model.back_transform(&b);
        let i = Complex64::i();
        let out = self.z.iter().zip(&s).map(|(z, s)| 2.0 * (i * z * s).re).collect();
        Signal::new(self.model.input.clone(), out)
    }
}

impl ForwardModel for PhaseRetrievalModel {
    fn input_grid(&self) -> &Arc<Grid> {
        &self.input
    }

    fn output_grid(&self) -> &Arc<Grid> {
        &self.output
    }

    fn apply(&self, phi: &Signal) -> Result<Signal> {
        let amp = self.amplitude(phi)?;
        Signal::new(self.output.clone(), amp.iter().map(|a| a.norm_sqr()).collect())
    }

    fn derivative(&self, phi: &Signal, h: &Signal) -> Result<Signal> {
        self.frozen(phi)?.apply(h)
    }

    fn adjoint_derivative(&self, phi: &Signal, r: &Signal) -> Result<Signal> {
        self.frozen(phi)?.adjoint(r)
    }

    fn linearize(&self, phi: &Signal) -> Result<Box<dyn Linearization + '_>> {
        Ok(Box::new(self.frozen(phi)?))
    }
}

fn bump(p: [f64; 2], center: [f64; 2], radius: f64) -> f64 {
    let d2 = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)) / (radius * radius);
    if d2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - d2)).exp()
    }
}

/// Synthetic cell-like phase object: 1 on the annulus `0.85ρ ≤ |x| ≤ ρ`,
/// a few smooth features inside and 0 outside the disk.
pub fn make_cell_phantom(grid: &Arc<Grid>, rho: f64) -> Result<Signal> {
    if !(rho > 0.0) {
        return Err(invalid("phantom radius must be positive"));
    }
    // (center, radius, amplitude) in units of rho; all supports stay inside
    // 0.85 rho.
    const FEATURES: [([f64; 2], f64, f64); 4] = [
        ([-0.30, 0.20], 0.40, 0.8),
        ([0.35, -0.20], 0.35, -0.5),
        ([0.20, 0.45], 0.25, 0.6),
        ([-0.15, -0.45], 0.30, 0.4),
    ];
    Signal::from_fn(grid.clone(), |p| {
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        if r > rho {
            return 0.0;
        }
        if r >= 0.85 * rho {
            return 1.0;
        }
        let q = [p[0] / rho, p[1] / rho];
        1.0 + FEATURES
            .iter()
            .map(|(c, rad, amp)| amp * bump(q, *c, *rad))
            .sum::<f64>()
    })
}
