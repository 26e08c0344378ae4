//! Poisson count data, binning operators and the effective noise level.
//!
//! Densities live on a grid; a [`Binning`] groups the points of a fine grid
//! into detector cells `M_j`. Counts are simulated per cell, which has the
//! same law as binning a Poisson point process with intensity `t g†`.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{invalid, Error, Result};
use crate::grid::{same_grid, Grid, Layout, Signal};
use crate::misfit::kl_divergence;
use crate::solver::IterateTrace;

/// Partition of a fine grid into `J` cells.
///
/// The cells form their own grid ([`Binning::bins`]) whose weights are the
/// cell measures `|M_j|`; densities on that grid are cell averages.
#[derive(Debug, Clone)]
pub struct Binning {
    fine: Arc<Grid>,
    bins: Arc<Grid>,
    assignment: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl Binning {
    /// Every grid point is its own cell; both grids are the same object.
    pub fn identity(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Binning {
            fine: grid.clone(),
            bins: grid,
            assignment: (0..n).collect(),
            members: (0..n).map(|i| vec![i]).collect(),
        }
    }

    /// Cells given by `assignment[i] ∈ 0..n_bins` for each fine point.
    pub fn from_assignment(fine: Arc<Grid>, assignment: Vec<usize>, n_bins: usize) -> Result<Self> {
        if assignment.len() != fine.len() {
            return Err(Error::Alignment(format!(
                "{} bin labels for {} grid points",
                assignment.len(),
                fine.len()
            )));
        }
        let mut members = vec![Vec::new(); n_bins];
        for (i, &j) in assignment.iter().enumerate() {
            if j >= n_bins {
                return Err(invalid(format!("bin label {j} out of range 0..{n_bins}")));
            }
            members[j].push(i);
        }
        if let Some(j) = members.iter().position(|m| m.is_empty()) {
            return Err(invalid(format!("bin {j} is empty")));
        }
        let w = fine.weights();
        let p = fine.points();
        let measures: Vec<f64> = members.iter().map(|m| m.iter().map(|&i| w[i]).sum()).collect();
        let centroids: Vec<[f64; 2]> = members
            .iter()
            .zip(&measures)
            .map(|(m, mu)| {
                let mut c = [0.0; 2];
                for &i in m {
                    c[0] += w[i] * p[i][0];
                    c[1] += w[i] * p[i][1];
                }
                [c[0] / mu, c[1] / mu]
            })
            .collect();
        let bins = Arc::new(Grid::scattered(fine.dim(), centroids, measures)?);
        Ok(Binning {
            fine,
            bins,
            assignment,
            members,
        })
    }

    /// `n_bins` contiguous cells of equal size on a regular 1D grid whose
    /// length is a multiple of `n_bins`. The cell grid is again regular.
    pub fn uniform_1d(fine: Arc<Grid>, n_bins: usize) -> Result<Self> {
        let (n, length) = match *fine.layout() {
            Layout::Regular1d { n, length } => (n, length),
            _ => return Err(Error::Unsupported("uniform binning needs a regular 1D grid".into())),
        };
        if n_bins == 0 || n % n_bins != 0 {
            return Err(invalid(format!("{n} points cannot be split into {n_bins} equal bins")));
        }
        let per = n / n_bins;
        let assignment = (0..n).map(|i| i / per).collect();
        let mut b = Self::from_assignment(fine.clone(), assignment, n_bins)?;
        let h = length / n_bins as f64;
        let origin = b.bins.points()[0][0];
        b.bins = Arc::new(Grid::regular_1d(n_bins, origin, h)?);
        Ok(b)
    }

    pub fn fine(&self) -> &Arc<Grid> {
        &self.fine
    }

    pub fn bins(&self) -> &Arc<Grid> {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Cell measures `|M_j|`.
    pub fn measures(&self) -> &[f64] {
        self.bins.weights()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// `(S_J g)_j = ∫_{M_j} g`. Accepts densities on the fine grid or cell
    /// averages on the cell grid.
    pub fn bin_apply(&self, g: &Signal) -> Result<Vec<f64>> {
        if same_grid(g.grid(), &self.bins) {
            return Ok(g
                .values()
                .iter()
                .zip(self.measures())
                .map(|(v, m)| v * m)
                .collect());
        }
        g.ensure_grid(&self.fine, "binning")?;
        let w = self.fine.weights();
        let v = g.values();
        Ok(self
            .members
            .iter()
            .map(|m| m.iter().map(|&i| w[i] * v[i]).sum())
            .collect())
    }

    /// `S_J^* v = Σ_j |M_j|⁻¹ v_j 1_{M_j}` on the fine grid.
    pub fn bin_adjoint(&self, v: &[f64]) -> Result<Signal> {
        if v.len() != self.len() {
            return Err(Error::Alignment(format!(
                "{} values for {} bins",
                v.len(),
                self.len()
            )));
        }
        let mu = self.measures();
        let values = self.assignment.iter().map(|&j| v[j] / mu[j]).collect();
        Signal::new(self.fine.clone(), values)
    }

    /// `P_J = S_J^* S_J`, the L2 projection onto cellwise constants.
    pub fn project(&self, g: &Signal) -> Result<Signal> {
        g.ensure_grid(&self.fine, "projection")?;
        self.bin_adjoint(&self.bin_apply(g)?)
    }

    /// Cell averages `|M_j|⁻¹ (S_J g)_j` as a signal on the cell grid.
    pub fn bin_average(&self, g: &Signal) -> Result<Signal> {
        if same_grid(g.grid(), &self.bins) {
            return Ok(g.clone());
        }
        let s = self.bin_apply(g)?;
        let values = s.iter().zip(self.measures()).map(|(a, m)| a / m).collect();
        Ok(Signal::from_vec(self.bins.clone(), values))
    }
}

/// Free-function form of [`Binning::bin_apply`].
pub fn bin_apply(binning: &Binning, g: &Signal) -> Result<Vec<f64>> {
    binning.bin_apply(g)
}

/// Free-function form of [`Binning::bin_adjoint`].
pub fn bin_adjoint(binning: &Binning, v: &[f64]) -> Result<Signal> {
    binning.bin_adjoint(v)
}

/// Photon counts per cell for exposure time `t`.
#[derive(Debug, Clone)]
pub struct CountData {
    counts: Vec<u64>,
    t: f64,
    binning: Arc<Binning>,
    seed: Option<u64>,
}

impl CountData {
    pub fn new(counts: Vec<u64>, t: f64, binning: Arc<Binning>) -> Result<Self> {
        if counts.len() != binning.len() {
            return Err(Error::Alignment(format!(
                "{} counts for {} bins",
                counts.len(),
                binning.len()
            )));
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(invalid(format!("exposure time must be positive, got {t}")));
        }
        Ok(CountData {
            counts,
            t,
            binning,
            seed: None,
        })
    }

    /// Accepts signed counts so that negative input is reported, not wrapped.
    pub fn from_signed(counts: &[i64], t: f64, binning: Arc<Binning>) -> Result<Self> {
        if let Some(c) = counts.iter().find(|c| **c < 0) {
            return Err(invalid(format!("negative count {c}")));
        }
        Self::new(counts.iter().map(|c| *c as u64).collect(), t, binning)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn binning(&self) -> &Arc<Binning> {
        &self.binning
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.binning.bins()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `counts_j / (t |M_j|)`: the observed density on the cell grid.
    pub fn density(&self) -> Signal {
        let values = self
            .counts
            .iter()
            .zip(self.binning.measures())
            .map(|(c, m)| *c as f64 / (self.t * m))
            .collect();
        Signal::from_vec(self.binning.bins().clone(), values)
    }

    /// CSV with a `# t=<t> seed=<seed>` line followed by
    /// `bin_index,count,measure` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        match self.seed {
            Some(seed) => writeln!(s, "# t={} seed={}", self.t, seed).unwrap(),
            None => writeln!(s, "# t={} seed=none", self.t).unwrap(),
        }
        s.push_str("bin_index,count,measure\n");
        for (j, (c, m)) in self.counts.iter().zip(self.binning.measures()).enumerate() {
            writeln!(s, "{j},{c},{m}").unwrap();
        }
        s
    }

    /// Parses [`CountData::to_csv`] output. Bin measures are checked against
    /// the supplied binning.
    pub fn from_csv(text: &str, binning: Arc<Binning>) -> Result<Self> {
        let mut t = None;
        let mut seed = None;
        let mut counts = Vec::new();
        let mut header_seen = false;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(meta) = line.strip_prefix('#') {
                for item in meta.split_whitespace() {
                    if let Some(v) = item.strip_prefix("t=") {
                        t = Some(v.parse::<f64>().map_err(|e| invalid(format!("bad t: {e}")))?);
                    } else if let Some(v) = item.strip_prefix("seed=") {
                        seed = v.parse::<u64>().ok();
                    }
                }
                continue;
            }
            if !header_seen {
                if line != "bin_index,count,measure" {
                    return Err(invalid(format!("unexpected header {line:?}")));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(invalid(format!("malformed row {line:?}")));
            }
            let j: usize = fields[0].parse().map_err(|_| invalid(format!("bad bin index in {line:?}")))?;
            let c: i64 = fields[1].parse().map_err(|_| invalid(format!("bad count in {line:?}")))?;
            let m: f64 = fields[2].parse().map_err(|_| invalid(format!("bad measure in {line:?}")))?;
            if j != counts.len() {
                return Err(invalid(format!("bins out of order at index {j}")));
            }
            let expect = binning.measures().get(j).copied().unwrap_or(f64::NAN);
            if (m - expect).abs() > 1e-12 * expect.abs().max(1.0) {
                return Err(Error::Alignment(format!("bin {j} measure {m} != {expect}")));
            }
            counts.push(c);
        }
        let t = t.ok_or_else(|| invalid("missing exposure time"))?;
        let mut data = Self::from_signed(&counts, t, binning)?;
        data.seed = seed;
        Ok(data)
    }
}

/// Draws independent Poisson counts with means `t (S_J g†)_j`.
///
/// `gdag` may live on the fine grid or the cell grid. The generator is
/// ChaCha8 seeded with `seed`; replicate `k` of an experiment uses
/// `seed + k`.
pub fn sample_counts(gdag: &Signal, t: f64, binning: Arc<Binning>, seed: u64) -> Result<CountData> {
    if gdag.min() < 0.0 {
        return Err(invalid("intensity must be nonnegative"));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("exposure time must be positive, got {t}")));
    }
    let means = binning.bin_apply(gdag)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = Vec::with_capacity(means.len());
    for m in means {
        let lambda = t * m;
        let c = if lambda > 0.0 {
            let d = Poisson::new(lambda).map_err(|e| Error::Numeric(format!("Poisson mean {lambda}: {e}")))?;
            d.sample(&mut rng) as u64
        } else {
            0
        };
        counts.push(c);
    }
    let mut data = CountData::new(counts, t, binning)?;
    data.seed = Some(seed);
    Ok(data)
}

/// Stochastic part of the effective noise level,
/// `|Σ_j ln(ḡ_j + σ) (obs_j / t − (S_J g†)_j)|` with cell averages `ḡ`.
///
/// Returns 0 when `ḡ < −σ/2` somewhere, and `+∞` when a log argument
/// vanishes on a cell with nonzero coefficient.
pub fn err_poisson(g: &Signal, counts: &CountData, gdag: &Signal, sigma: f64) -> Result<f64> {
    let b = counts.binning();
    let gbar = b.bin_average(g)?;
    let sg = b.bin_apply(gdag)?;
    if gbar.values().iter().any(|v| *v < -sigma / 2.0) {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for ((v, c), s) in gbar.values().iter().zip(counts.counts()).zip(&sg) {
        let coef = *c as f64 / counts.t() - s;
        let arg = v + sigma;
        if arg <= 0.0 {
            if coef != 0.0 {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        sum += arg.ln() * coef;
    }
    Ok(sum.abs())
}

/// `|KL(g, g†) − KL(P_J g, P_J g†)|` on the fine grid (σ = 0).
pub fn err_discretization(g: &Signal, gdag: &Signal, binning: &Binning) -> Result<f64> {
    let full = kl_divergence(g, gdag, 0.0)?;
    let binned = kl_divergence(&binning.project(g)?, &binning.project(gdag)?, 0.0)?;
    if full.is_infinite() && binned.is_infinite() {
        return Ok(0.0);
    }
    Ok((full - binned).abs())
}

/// Which per-step noise level to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrVariant {
    /// Built from `err(F(u_{n+1}))`, `err(F(u_n))` and `err(g†)`.
    A,
    /// Built from the linearized outputs towards `u_{n+1}` and towards `u†`;
    /// needs the true solution.
    B,
}

/// Constants of the error splitting and tangential cone condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrConstants {
    pub c_err: f64,
    pub c_tc: f64,
    pub eta: f64,
}

impl Default for ErrConstants {
    fn default() -> Self {
        ErrConstants {
            c_err: 1.0,
            c_tc: 1.0,
            eta: 0.0,
        }
    }
}

/// Variant A combination of component errors.
pub fn err_n_variant_a(err_next: f64, err_current: f64, err_truth: f64, k: &ErrConstants) -> f64 {
    err_next / k.c_err + 2.0 * k.eta * k.c_tc * err_current + k.c_tc * k.c_err * err_truth
}

/// Variant B combination of component errors.
pub fn err_n_variant_b(err_lin_next: f64, err_lin_truth: f64, k: &ErrConstants) -> f64 {
    err_lin_next + k.c_err * err_lin_truth
}

/// `err_n` for outer step `n` of a trace, using the offset that step ran
/// with.
pub fn err_n_estimate(
    variant: ErrVariant,
    trace: &IterateTrace,
    n: usize,
    counts: &CountData,
    gdag: &Signal,
    k: &ErrConstants,
) -> Result<f64> {
    let step = trace
        .steps
        .get(n)
        .ok_or_else(|| invalid(format!("trace has no step {n}")))?;
    let sigma = step.sigma;
    let err = |g: &Signal| err_poisson(g, counts, gdag, sigma);
    match variant {
        ErrVariant::A => Ok(err_n_variant_a(
            err(&trace.outputs[n + 1])?,
            err(&trace.outputs[n])?,
            err(gdag)?,
            k,
        )),
        ErrVariant::B => {
            let truth = step.truth_lin_output.as_ref().ok_or_else(|| {
                Error::Unsupported("variant B needs the linearization towards the true solution".into())
            })?;
            Ok(err_n_variant_b(err(&step.lin_output)?, err(truth)?, k))
        }
    }
}
