//! Index functions and the derived functions that turn smoothness
//! assumptions into stopping thresholds and error bounds.
//!
//! For an index function `φ` the crate builds `Θ(t) = t φ(t)²`,
//! `ϑ(t) = √t φ(t)`, `ψ = 1/φ'(φ⁻¹)`, `Ψ(t) = ∫_0^t ψ⁻¹` and `Λ`, the square
//! of the least concave majorant of `√(Ψ(t)/t)`. Inverses are computed by
//! bisection. Public evaluation is restricted to a working interval and
//! reports arguments outside it as [`Error::Range`].

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::grid::Signal;
use crate::model::ForwardModel;

type Func = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Default working interval.
pub const T_MIN: f64 = 1e-12;
pub const T_MAX: f64 = 1.0;

/// Smallest argument used internally (inverses of very flat functions).
const RAW_MIN: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub enum IndexKind {
    /// `t^ν`.
    Hoelder(f64),
    /// `t^{2ν/(1+2ν)}`, the index function of the additive (variational)
    /// form of a Hölder source condition of order `ν`.
    HoelderAdditive(f64),
    /// `(−ln t)^{−p}` with an affine concave extension.
    Log(f64),
    /// Built from another index function (`"theta"`, `"psi"`, …).
    Derived(&'static str),
    Custom(String),
}

/// A continuous strictly increasing function with `φ(0) = 0`.
#[derive(Clone)]
pub struct IndexFunction {
    kind: IndexKind,
    f: Func,
    df: Option<Func>,
    lo: f64,
    hi: f64,
    /// `(t, f(t))` on a log-spaced grid of the working interval; brackets
    /// inverse evaluations.
    table: Arc<Vec<(f64, f64)>>,
}

impl fmt::Debug for IndexFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IndexFunction")
            .field("kind", &self.kind)
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .finish()
    }
}

fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    let n = ((b - a) * per_decade as f64).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| {
            if i == n {
                hi
            } else {
                10f64.powf(a + (b - a) * i as f64 / n as f64)
            }
        })
        .collect()
}

/// Bisection for an increasing `f` on `[lo, hi]` (log scale when `lo > 0`).
fn bisect_increasing(f: &dyn Fn(f64) -> f64, y: f64, mut lo: f64, mut hi: f64) -> f64 {
    let geometric = lo > 0.0;
    for _ in 0..200 {
        let mid = if geometric { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Newton's method for an increasing `f` with derivative `df`, kept inside
/// the bracket `[lo, hi]` by falling back to bisection.
fn newton_increasing(f: &dyn Fn(f64) -> f64, df: &dyn Fn(f64) -> f64, y: f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut t = (lo * hi).sqrt();
    for _ in 0..100 {
        let r = f(t) - y;
        if r == 0.0 {
            return t;
        }
        if r < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let d = df(t);
        let mut next = t - r / d;
        if !(d > 0.0 && next > lo && next < hi) {
            next = (lo * hi).sqrt();
        }
        if (next - t).abs() <= 1e-15 * t || hi - lo <= 1e-16 * hi {
            return next;
        }
        t = next;
    }
    t
}

impl IndexFunction {
    /// Wraps an evaluator. `f` must accept arguments below `lo` (down to
    /// tiny positive values) for inverses near zero; `df` is its derivative
    /// when known.
    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: Option<Func>,
        lo: f64,
        hi: f64,
    ) -> Result<Self> {
        Self::build(IndexKind::Custom(name.into()), Arc::new(f), df, lo, hi)
    }

    fn build(kind: IndexKind, f: Func, df: Option<Func>, lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) {
            return Err(invalid(format!("bad working interval [{lo}, {hi}]")));
        }
        let table: Vec<(f64, f64)> = log_grid(lo, hi, 10).into_iter().map(|t| (t, f(t))).collect();
        if table.iter().any(|(_, v)| !v.is_finite() || *v < 0.0) {
            return Err(invalid(format!("{kind:?} is not finite and nonnegative on its interval")));
        }
        if table.windows(2).any(|w| !(w[1].1 > w[0].1)) {
            return Err(invalid(format!("{kind:?} is not strictly increasing")));
        }
        Ok(IndexFunction {
            kind,
            f,
            df,
            lo,
            hi,
            table: Arc::new(table),
        })
    }

    /// `φ_ν(t) = t^ν`, `ν ∈ (0, 1/2]`.
    pub fn hoelder(nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu <= 0.5) {
            return Err(invalid(format!("Hölder index must lie in (0, 1/2], got {nu}")));
        }
        Self::power(IndexKind::Hoelder(nu), nu)
    }

    /// `t^{2ν/(1+2ν)}` for `ν ∈ (0, 1/2]`.
    pub fn hoelder_additive(nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu <= 0.5) {
            return Err(invalid(format!("Hölder index must lie in (0, 1/2], got {nu}")));
        }
        Self::power(IndexKind::HoelderAdditive(nu), 2.0 * nu / (1.0 + 2.0 * nu))
    }

    fn power(kind: IndexKind, e: f64) -> Result<Self> {
        Self::build(
            kind,
            Arc::new(move |t: f64| t.powf(e)),
            Some(Arc::new(move |t: f64| e * t.powf(e - 1.0))),
            T_MIN,
            T_MAX,
        )
    }

    /// `φ̄_p(t) = (−ln t)^{−p}` for `t ≤ e^{−p−1}`, continued by its tangent
    /// beyond the splice point so that it stays concave.
    pub fn log(p: f64) -> Result<Self> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(invalid(format!("logarithmic index must be positive, got {p}")));
        }
        let t0 = (-p - 1.0).exp();
        let v0 = (p + 1.0).powf(-p);
        let d0 = p * (p + 1.0).powf(-p - 1.0) / t0;
        let f = move |t: f64| {
            if t <= 0.0 {
                0.0
            } else if t <= t0 {
                (-t.ln()).powf(-p)
            } else {
                v0 + d0 * (t - t0)
            }
        };
        let df = move |t: f64| {
            if t <= t0 {
                let l = -t.ln();
                p * l.powf(-p - 1.0) / t
            } else {
                d0
            }
        };
        Self::build(IndexKind::Log(p), Arc::new(f), Some(Arc::new(df)), T_MIN, T_MAX)
    }

    pub fn kind(&self) -> &IndexKind {
        &self.kind
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn range_check(&self, t: f64) -> Result<()> {
        if t == 0.0 || (t >= self.lo && t <= self.hi) {
            Ok(())
        } else {
            Err(Error::Range {
                value: t,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        self.range_check(t)?;
        Ok(self.eval_unchecked(t))
    }

    /// Evaluation without the interval check.
    pub fn eval_unchecked(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            (self.f)(t)
        }
    }

    pub fn derivative(&self, t: f64) -> Result<f64> {
        if t == 0.0 {
            return Err(Error::Range {
                value: t,
                lo: self.lo,
                hi: self.hi,
            });
        }
        self.range_check(t)?;
        Ok(self.derivative_unchecked(t))
    }

    fn derivative_unchecked(&self, t: f64) -> f64 {
        match &self.df {
            Some(d) => d(t),
            None => {
                let h = 1e-6 * t;
                ((self.f)(t + h) - (self.f)(t - h)) / (2.0 * h)
            }
        }
    }

    /// `φ⁻¹(y)` for `y` in the image of the working interval (or 0).
    pub fn inverse(&self, y: f64) -> Result<f64> {
        if y == 0.0 {
            return Ok(0.0);
        }
        let (ylo, yhi) = (self.table[0].1, self.table.last().unwrap().1);
        let slack = 1e-14 * yhi.abs();
        if !(y >= ylo - slack && y <= yhi + slack) {
            return Err(Error::Range {
                value: y,
                lo: ylo,
                hi: yhi,
            });
        }
        let k = self.table.partition_point(|(_, v)| *v < y);
        let (a, b) = if k == 0 {
            (self.table[0].0, self.table[0].0)
        } else if k >= self.table.len() {
            let t = self.table.last().unwrap().0;
            (t, t)
        } else {
            (self.table[k - 1].0, self.table[k].0)
        };
        if a == b {
            return Ok(a);
        }
        match &self.df {
            Some(df) => Ok(newton_increasing(&|t| (self.f)(t), &|t| df(t), y, a, b)),
            None => Ok(bisect_increasing(&|t| (self.f)(t), y, a, b)),
        }
    }

    /// Inverse without the range restriction: searches `[RAW_MIN, hi]` and
    /// saturates at the ends.
    fn inverse_unchecked(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        if y >= (self.f)(self.hi) {
            return self.hi;
        }
        if y <= (self.f)(RAW_MIN) {
            return RAW_MIN;
        }
        bisect_increasing(&|t| (self.f)(t), y, RAW_MIN, self.hi)
    }

    /// `(φ')⁻¹(y)` for a concave `φ`, saturating at the search interval.
    fn derivative_inverse(&self, y: f64) -> f64 {
        // φ' is decreasing; bisect on the increasing map t ↦ −φ'(t).
        let g = |t: f64| -self.derivative_unchecked(t);
        if -y <= g(RAW_MIN) {
            return RAW_MIN;
        }
        if -y >= g(self.hi) {
            return self.hi;
        }
        bisect_increasing(&g, -y, RAW_MIN, self.hi)
    }

    fn is_concave(&self) -> bool {
        let d: Vec<f64> = self.table.iter().map(|(t, _)| self.derivative_unchecked(*t)).collect();
        d.iter().all(|v| v.is_finite() && *v > 0.0)
            && d.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9))
    }
}

/// Free-function constructor for `t^ν`.
pub fn hoelder(nu: f64) -> Result<IndexFunction> {
    IndexFunction::hoelder(nu)
}

/// Free-function constructor for the logarithmic index function.
pub fn log_index(p: f64) -> Result<IndexFunction> {
    IndexFunction::log(p)
}

/// `Θ(t) = t φ(t)²`.
pub fn theta(phi: &IndexFunction) -> Result<IndexFunction> {
    let f = phi.f.clone();
    IndexFunction::build(
        IndexKind::Derived("theta"),
        Arc::new(move |t| {
            let v = f(t);
            t * v * v
        }),
        None,
        phi.lo,
        phi.hi,
    )
}

/// `ϑ(t) = √t φ(t)`.
pub fn vartheta(phi: &IndexFunction) -> Result<IndexFunction> {
    let f = phi.f.clone();
    IndexFunction::build(
        IndexKind::Derived("vartheta"),
        Arc::new(move |t| t.sqrt() * f(t)),
        None,
        phi.lo,
        phi.hi,
    )
}

fn require_concave(phi: &IndexFunction) -> Result<()> {
    if phi.is_concave() {
        Ok(())
    } else {
        Err(Error::Unsupported(format!("{:?} is not concave", phi.kind)))
    }
}

/// `ψ(s) = 1/φ'(φ⁻¹(s))`, `ψ(0) = 0`.
pub fn psi_of(phi: &IndexFunction) -> Result<IndexFunction> {
    require_concave(phi)?;
    let p = phi.clone();
    let hi = phi.eval_unchecked(phi.hi);
    IndexFunction::build(
        IndexKind::Derived("psi"),
        Arc::new(move |s| 1.0 / p.derivative_unchecked(p.inverse_unchecked(s))),
        None,
        T_MIN.min(hi / 2.0),
        hi,
    )
}

/// `ψ⁻¹(r) = φ((φ')⁻¹(1/r))`, saturating at `φ(hi)` where `φ` is affine.
fn psi_inverse(phi: &IndexFunction, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    phi.eval_unchecked(phi.derivative_inverse(1.0 / r))
}

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss-Kronrod quadrature with absolute tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, whole: (f64, f64), depth: u32) -> f64 {
        let (v, err) = whole;
        if err <= tol || depth >= 60 {
            return v;
        }
        let m = 0.5 * (a + b);
        let l = gk15(f, a, m);
        let r = gk15(f, m, b);
        rec(f, a, m, tol / 2.0, l, depth + 1) + rec(f, m, b, tol / 2.0, r, depth + 1)
    }
    if b <= a {
        return 0.0;
    }
    rec(f, a, b, tol, gk15(f, a, b), 0)
}

/// `∫_0^t g` after the substitution `s = t u⁴`, which smooths the power-type
/// behaviour of `ψ⁻¹` at the origin.
fn integrate_from_zero(g: &dyn Fn(f64) -> f64, t: f64, tol: f64) -> f64 {
    let h = |u: f64| {
        let u2 = u * u;
        g(t * u2 * u2) * 4.0 * t * u2 * u
    };
    integrate(&h, 0.0, 1.0, tol)
}

/// Relative quadrature tolerance for `Ψ`.
const PSI_TOL: f64 = 1e-11;

/// `Ψ(t) = ∫_0^t ψ⁻¹(s) ds` by adaptive quadrature.
pub fn big_psi(phi: &IndexFunction) -> Result<IndexFunction> {
    require_concave(phi)?;
    let p = phi.clone();
    let q = phi.clone();
    IndexFunction::build(
        IndexKind::Derived("Psi"),
        Arc::new(move |t| {
            let g = |s: f64| psi_inverse(&p, s);
            // Scale of the integral from a coarse estimate.
            let scale = (t * g(t)).abs().max(1e-300);
            integrate_from_zero(&g, t, PSI_TOL * scale)
        }),
        Some(Arc::new(move |t| psi_inverse(&q, t))),
        T_MIN,
        T_MAX,
    )
}

/// Least concave majorant of `√(Ψ(t)/t)` on `400` points per decade over
/// `[1e-6, 1]` (and the origin), squared.
///
/// Between two consecutive grid points that are both hull vertices the
/// exact value `Ψ(t)/t` is returned; elsewhere the hull chord is squared.
pub fn lambda_of(phi: &IndexFunction) -> Result<IndexFunction> {
    require_concave(phi)?;
    let lo = 1e-6;
    let grid = log_grid(lo, 1.0, 400);
    let p = phi.clone();
    let g = move |s: f64| psi_inverse(&p, s);
    // Cumulative Ψ along the grid.
    let first = {
        let t = grid[0];
        integrate_from_zero(&g, t, PSI_TOL * (t * g(t)).max(1e-300))
    };
    let mut psi_vals = vec![first];
    for w in grid.windows(2) {
        let inc = integrate(&g, w[0], w[1], PSI_TOL * ((w[1] - w[0]) * g(w[1])).max(1e-300));
        let prev = *psi_vals.last().unwrap();
        psi_vals.push(prev + inc);
    }
    let f: Vec<f64> = grid
        .iter()
        .zip(&psi_vals)
        .map(|(t, v)| (v / t).max(0.0).sqrt())
        .collect();

    // Upper hull (monotone chain) through the origin and the grid points.
    let mut xs = vec![0.0];
    let mut ys = vec![0.0];
    xs.extend_from_slice(&grid);
    ys.extend_from_slice(&f);
    let mut hull: Vec<usize> = Vec::new();
    for i in 0..xs.len() {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (xs[b] - xs[a]) * (ys[i] - ys[a]) - (ys[b] - ys[a]) * (xs[i] - xs[a]);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let hull_x: Vec<f64> = hull.iter().map(|&i| xs[i]).collect();
    let hull_y: Vec<f64> = hull.iter().map(|&i| ys[i]).collect();
    let hull_idx = hull.clone();
    let grid_x = Arc::new(xs);
    let q = phi.clone();
    let psi_at = move |t: f64| {
        let g = |s: f64| psi_inverse(&q, s);
        integrate_from_zero(&g, t, PSI_TOL * (t * g(t)).max(1e-300))
    };
    let eval = move |t: f64| -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let k = hull_x.partition_point(|x| *x < t);
        if k < hull_x.len() && hull_x[k] == t {
            return hull_y[k] * hull_y[k];
        }
        if k == 0 || k >= hull_x.len() {
            let y = *hull_y.last().unwrap();
            return y * y;
        }
        let (i0, i1) = (hull_idx[k - 1], hull_idx[k]);
        if i1 == i0 + 1 && grid_x[i0] > 0.0 {
            return psi_at(t) / t;
        }
        let (x0, x1, y0, y1) = (hull_x[k - 1], hull_x[k], hull_y[k - 1], hull_y[k]);
        let y = y0 + (y1 - y0) * (t - x0) / (x1 - x0);
        y * y
    };
    IndexFunction::build(IndexKind::Derived("Lambda"), Arc::new(eval), None, lo, 1.0)
}

/// Least-squares fit of `ln y = slope · ln x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Standard error of the slope (0 for an exact fit).
    pub slope_se: f64,
}

pub fn fit_rate(xs: &[f64], ys: &[f64]) -> Result<RateFit> {
    if xs.len() != ys.len() {
        return Err(invalid("x and y lengths differ"));
    }
    if xs.len() < 3 {
        return Err(invalid("a rate fit needs at least 3 points"));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(invalid("rate fit inputs must be positive"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("rate fit needs distinct x values"));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).min(1.0) };
    let rss = (syy - slope * sxy).max(0.0);
    let slope_se = if n > 2.0 { (rss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
        r2,
        slope_se,
    })
}

/// Sampled tangential cone constant and the constants it implies for
/// `S = T = ‖·‖^r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeProbe {
    /// `max ‖F(u) + F'(u; v−u) − F(v)‖ / ‖F(u) − F(v)‖` over sampled pairs.
    pub eta_bar: f64,
    /// `2^{2r−2} η̄^r`.
    pub eta: f64,
    /// `max{1/(2^{1−r} − 2^{r−1} η̄^r), 2^{r−1} + 2^{2r−2} η̄^r}`, when the
    /// first denominator is positive.
    pub c_tc: Option<f64>,
    pub pairs: usize,
}

pub fn tangential_cone_probe(
    model: &dyn ForwardModel,
    u_samples: &[Signal],
    v_samples: &[Signal],
    r: f64,
) -> Result<ConeProbe> {
    if !(r >= 1.0) {
        return Err(invalid("norm power must be at least 1"));
    }
    let mut eta_bar = 0.0f64;
    let mut pairs = 0;
    for u in u_samples {
        let fu = model.apply(u)?;
        let lin = model.linearize(u)?;
        for v in v_samples {
            let fv = model.apply(v)?;
            let diff = fu.sub(&fv)?;
            let denom = diff.norm();
            let mut rem = diff;
            rem.axpy(1.0, &lin.apply(&v.sub(u)?)?)?;
            let num = rem.norm();
            let scale = fu.norm().max(fv.norm()).max(f64::MIN_POSITIVE);
            if denom <= 1e-14 * scale {
                if num <= 1e-14 * scale {
                    continue;
                }
                eta_bar = f64::INFINITY;
            } else {
                eta_bar = eta_bar.max(num / denom);
            }
            pairs += 1;
        }
    }
    let er = eta_bar.powf(r);
    let eta = 2f64.powf(2.0 * r - 2.0) * er;
    let d = 2f64.powf(1.0 - r) - 2f64.powf(r - 1.0) * er;
    let c_tc = (d > 0.0).then(|| (1.0 / d).max(2f64.powf(r - 1.0) + er * 2f64.powf(2.0 * r - 2.0)));
    Ok(ConeProbe {
        eta_bar,
        eta,
        c_tc,
        pairs,
    })
}

/// Constants from the convergence theory, kept for reporting and for the
/// err_n and Lepskiĭ formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateAssumptions {
    pub c_tc: f64,
    pub eta: f64,
    pub c_err: f64,
    pub c_dec: f64,
    pub beta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub c_bd: f64,
    pub q: f64,
}

impl Default for RateAssumptions {
    fn default() -> Self {
        RateAssumptions {
            c_tc: 1.0,
            eta: 0.0,
            c_err: 1.0,
            c_dec: 1.5,
            beta: 1.0,
            beta1: 0.0,
            beta2: 1.0,
            c_bd: 1.0,
            q: 2.0,
        }
    }
}

impl RateAssumptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.c_tc >= 1.0
            && self.c_err >= 1.0
            && self.c_dec > 1.0
            && (0.0..0.5).contains(&self.beta1)
            && self.q >= 1.0
            && self.eta >= 0.0
            && self.c_bd > 0.0;
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("inconsistent theory constants {self:?}")))
        }
    }
}
