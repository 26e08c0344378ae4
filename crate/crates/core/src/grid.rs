//! Discretized domains and the functions living on them.
//!
//! A [`Grid`] carries quadrature points and positive weights; all inner
//! products in the crate are quadrature-weighted sums over a grid. A
//! [`Signal`] is a real vector tied to a shared grid.

use std::sync::Arc;

use crate::error::{invalid, Error, Result};

/// Structure of a grid, when it has one.
///
/// Regular layouts are periodic: spectral operators (Sobolev Gram
/// multipliers, circular convolution) rely on it.
#[derive(Debug, Clone, PartialEq)]
pub enum Layout {
    Scattered,
    /// `n` equispaced points with spacing `length / n`.
    Regular1d { n: usize, length: f64 },
    /// Row-major `rows x cols` tensor grid; index `r * cols + c` is the point
    /// `(x_r, y_c)`.
    Regular2d {
        rows: usize,
        cols: usize,
        lengths: [f64; 2],
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
    layout: Layout,
}

impl Grid {
    /// Builds an unstructured grid. Points of a 1D grid use the first
    /// coordinate only.
    pub fn scattered(dim: usize, points: Vec<[f64; 2]>, weights: Vec<f64>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(invalid(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        Self::checked(dim, points, weights, Layout::Scattered)
    }

    /// Unit-weight 1D grid at integer positions; handy for discrete data.
    pub fn unit(n: usize) -> Result<Self> {
        Self::regular_1d(n, 0.0, 1.0)
    }

    /// `n` points `origin + i * spacing`, each with weight `spacing`.
    pub fn regular_1d(n: usize, origin: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(invalid("grid spacing must be positive"));
        }
        let points = (0..n).map(|i| [origin + i as f64 * spacing, 0.0]).collect();
        let weights = vec![spacing; n];
        let layout = Layout::Regular1d {
            n,
            length: n as f64 * spacing,
        };
        Self::checked(1, points, weights, layout)
    }

    /// Cell-midpoint grid on the periodic interval `[a, b)`.
    pub fn periodic_1d(n: usize, a: f64, b: f64) -> Result<Self> {
        if n == 0 || !(b > a) {
            return Err(invalid("periodic grid needs n >= 1 and b > a"));
        }
        let h = (b - a) / n as f64;
        Self::regular_1d(n, a + 0.5 * h, h)
    }

    /// Tensor grid with points `origin + (r * dx, c * dy)` and weight `dx * dy`.
    pub fn regular_2d(
        rows: usize,
        cols: usize,
        origin: [f64; 2],
        spacing: [f64; 2],
    ) -> Result<Self> {
        if !(spacing[0] > 0.0 && spacing[1] > 0.0) {
            return Err(invalid("grid spacing must be positive"));
        }
        let mut points = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                points.push([
                    origin[0] + r as f64 * spacing[0],
                    origin[1] + c as f64 * spacing[1],
                ]);
            }
        }
        let weights = vec![spacing[0] * spacing[1]; rows * cols];
        let layout = Layout::Regular2d {
            rows,
            cols,
            lengths: [rows as f64 * spacing[0], cols as f64 * spacing[1]],
        };
        Self::checked(2, points, weights, layout)
    }

    /// Cell-midpoint tensor grid on the periodic square `[a, b)^2`.
    pub fn periodic_square(n: usize, a: f64, b: f64) -> Result<Self> {
        if n == 0 || !(b > a) {
            return Err(invalid("periodic grid needs n >= 1 and b > a"));
        }
        let h = (b - a) / n as f64;
        Self::regular_2d(n, n, [a + 0.5 * h, a + 0.5 * h], [h, h])
    }

    fn checked(dim: usize, points: Vec<[f64; 2]>, weights: Vec<f64>, layout: Layout) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("grid needs at least one point"));
        }
        if points.len() != weights.len() {
            return Err(invalid(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(invalid(format!("quadrature weight {w} is not positive")));
        }
        if points.iter().flatten().any(|x| !x.is_finite()) {
            return Err(invalid("grid point is not finite"));
        }
        Ok(Grid {
            dim,
            points,
            weights,
            layout,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Total measure of the discretized domain.
    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weighted inner product of two raw vectors on this grid.
    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(a)
            .zip(b)
            .map(|((w, x), y)| w * x * y)
            .sum()
    }
}

/// True when two shared grids describe the same discretization.
pub fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

pub(crate) fn ensure_same(a: &Arc<Grid>, b: &Arc<Grid>, what: &str) -> Result<()> {
    if same_grid(a, b) {
        Ok(())
    } else {
        Err(Error::Alignment(format!(
            "{what}: grids with {} and {} points differ",
            a.len(),
            b.len()
        )))
    }
}

/// A real function sampled on a [`Grid`].
#[derive(Debug, Clone)]
pub struct Signal {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for Signal {
    fn eq(&self, other: &Self) -> bool {
        same_grid(&self.grid, &other.grid) && self.values == other.values
    }
}

impl Signal {
    /// Validated constructor: length must match and every value be finite.
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Alignment(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(invalid(format!("signal value {v} is not finite")));
        }
        Ok(Signal { grid, values })
    }

    /// Skips the finiteness scan; callers guarantee the length.
    pub(crate) fn from_vec(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Signal { grid, values }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Signal::from_vec(grid, vec![0.0; n])
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let n = grid.len();
        Signal::from_vec(grid, vec![c; n])
    }

    /// Samples `f` at the grid points.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let values = grid.points().iter().map(|p| f(*p)).collect();
        Signal::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Quadrature-weighted inner product.
    pub fn dot(&self, other: &Signal) -> Result<f64> {
        ensure_same(&self.grid, &other.grid, "inner product")?;
        Ok(self.grid.dot(&self.values, &other.values))
    }

    /// Weighted L2 norm.
    pub fn norm(&self) -> f64 {
        self.grid.dot(&self.values, &self.values).sqrt()
    }

    /// Integral of the signal over its grid.
    pub fn integral(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v)
            .sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Signal {
        Signal::from_vec(self.grid.clone(), self.values.iter().map(|v| f(*v)).collect())
    }

    /// Pointwise combination of two aligned signals.
    pub fn zip_map(&self, other: &Signal, f: impl Fn(f64, f64) -> f64) -> Result<Signal> {
        ensure_same(&self.grid, &other.grid, "pointwise operation")?;
        Ok(Signal::from_vec(
            self.grid.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        ))
    }

    pub fn add(&self, other: &Signal) -> Result<Signal> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Signal) -> Result<Signal> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Signal {
        self.map(|v| c * v)
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Signal) -> Result<()> {
        ensure_same(&self.grid, &x.grid, "axpy")?;
        for (s, v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
        Ok(())
    }

    /// Weighted distance `‖self − other‖`.
    pub fn distance(&self, other: &Signal) -> Result<f64> {
        Ok(self.sub(other)?.norm())
    }

    pub(crate) fn ensure_grid(&self, grid: &Arc<Grid>, what: &str) -> Result<()> {
        ensure_same(&self.grid, grid, what)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_grid_measure() {
        let g = Grid::periodic_1d(64, 0.0, 1.0).unwrap();
        assert!((g.measure() - 1.0).abs() < 1e-12);
        assert!((g.points()[0][0] - 0.5 / 64.0).abs() < 1e-15);

        let sq = Grid::periodic_square(8, -0.4, 0.4).unwrap();
        assert!((sq.measure() - 0.64).abs() < 1e-12 * 0.64);
        assert_eq!(sq.dim(), 2);
    }

    #[test]
    fn grid_rejects_bad_weights() {
        let e = Grid::scattered(1, vec![[0.0, 0.0], [1.0, 0.0]], vec![1.0, 0.0]);
        assert!(matches!(e, Err(Error::InvalidInput(_))));
        assert!(Grid::scattered(1, vec![], vec![]).is_err());
        assert!(Grid::scattered(3, vec![[0.0, 0.0]], vec![1.0]).is_err());
    }

    #[test]
    fn signal_checks_alignment_and_finiteness() {
        let g = Arc::new(Grid::unit(3).unwrap());
        assert!(matches!(
            Signal::new(g.clone(), vec![1.0, 2.0]),
            Err(Error::Alignment(_))
        ));
        assert!(Signal::new(g.clone(), vec![1.0, f64::NAN, 0.0]).is_err());

        let other = Arc::new(Grid::unit(4).unwrap());
        let a = Signal::zeros(g);
        let b = Signal::zeros(other);
        assert!(matches!(a.dot(&b), Err(Error::Alignment(_))));
    }

    #[test]
    fn weighted_dot() {
        let g = Arc::new(Grid::regular_1d(2, 0.0, 0.5).unwrap());
        let a = Signal::new(g.clone(), vec![1.0, 2.0]).unwrap();
        let b = Signal::new(g, vec![3.0, 4.0]).unwrap();
        assert_eq!(a.dot(&b).unwrap(), 0.5 * (3.0 + 8.0));
        assert!((a.norm() - (0.5f64 * 5.0).sqrt()).abs() < 1e-15);
    }
}
