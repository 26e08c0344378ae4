//! Stopping rules: a priori rules driven by per-step noise levels, the
//! Lepskiĭ balancing principle, and oracle selection for synthetic runs.
//!
//! Indices are 0-based iterate indices: index `n` selects `u_n`, and the
//! rules compare `α_n` and `err_n` of step `n`.

use std::fmt::Write as _;

use crate::error::{invalid, Error, Result};
use crate::grid::Signal;
use crate::penalty::QuadraticPenalty;
use crate::rates::{theta, IndexFunction};
use crate::solver::IterateTrace;

#[derive(Debug, Clone)]
pub enum StoppingRule {
    /// First `n` with `Θ(α_n) ≤ τ err_n`, `Θ(t) = t φ(t)²`.
    APrioriTheta { tau: f64, phi: IndexFunction },
    /// First `n` with `α_n ≤ τ err_n^{1/(1+2ν)}`.
    APrioriHoelder { tau: f64, nu: f64 },
    /// First `n` with `α_n² ≤ τ err_n`; needs no smoothness index.
    APrioriLog { tau: f64 },
    /// Balancing principle with a known noise bound. Distances use the
    /// norm of `metric` when given, the plain grid norm otherwise.
    Lepskii {
        err_bound: f64,
        gamma_nl: f64,
        c_bd: f64,
        q: f64,
        metric: Option<Box<QuadraticPenalty>>,
    },
    /// Index of the smallest true error (ties to the smaller index).
    Oracle { truth: Signal },
    /// Last iterate.
    MaxIter,
}

/// Index chosen by a rule, with metadata for reports.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub rule: &'static str,
    /// False when an a priori criterion never held, or when the Lepskiĭ
    /// window extends past the end of the trace.
    pub triggered: bool,
    pub n_max: Option<usize>,
}

impl Selection {
    pub fn footer(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# stop_rule={}", self.rule).unwrap();
        writeln!(s, "# selected_index={}", self.index).unwrap();
        writeln!(s, "# triggered={}", self.triggered).unwrap();
        if let Some(n) = self.n_max {
            writeln!(s, "# n_max={n}").unwrap();
        }
        s
    }
}

/// First index satisfying `criterion(α_n, err_n)`, or `alphas.len()` (the
/// last iterate) with `triggered = false`.
pub fn a_priori_scan(alphas: &[f64], errs: &[f64], criterion: impl Fn(f64, f64) -> bool) -> (usize, bool) {
    alphas
        .iter()
        .zip(errs)
        .position(|(a, e)| criterion(*a, *e))
        .map_or((alphas.len(), false), |n| (n, true))
}

fn check_tau(tau: f64) -> Result<()> {
    if tau >= 1.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("τ must be at least 1, got {tau}")))
    }
}

fn check_nu(nu: f64) -> Result<()> {
    if nu > 0.0 && nu <= 0.5 {
        Ok(())
    } else {
        Err(invalid(format!("ν must lie in (0, 1/2], got {nu}")))
    }
}

fn trace_errs(trace: &IterateTrace) -> Result<Vec<f64>> {
    trace
        .errs()
        .ok_or_else(|| Error::Unsupported("a priori stopping needs err_n for every step".into()))
}

pub fn a_priori_stop_theta(trace: &IterateTrace, tau: f64, phi: &IndexFunction) -> Result<Selection> {
    check_tau(tau)?;
    let errs = trace_errs(trace)?;
    let th = theta(phi)?;
    let mut values = Vec::with_capacity(errs.len());
    for a in trace.alphas() {
        values.push(th.eval_unchecked(a));
    }
    let (index, triggered) = a_priori_scan(&values, &errs, |v, e| v <= tau * e);
    Ok(Selection {
        index,
        rule: "a_priori_theta",
        triggered,
        n_max: None,
    })
}

pub fn a_priori_stop_hoelder(trace: &IterateTrace, tau: f64, nu: f64) -> Result<Selection> {
    check_tau(tau)?;
    check_nu(nu)?;
    let errs = trace_errs(trace)?;
    let (index, triggered) = a_priori_scan(&trace.alphas(), &errs, |a, e| {
        a <= tau * e.powf(1.0 / (1.0 + 2.0 * nu))
    });
    Ok(Selection {
        index,
        rule: "a_priori_hoelder",
        triggered,
        n_max: None,
    })
}

pub fn a_priori_stop_log(trace: &IterateTrace, tau: f64) -> Result<Selection> {
    check_tau(tau)?;
    let errs = trace_errs(trace)?;
    let (index, triggered) = a_priori_scan(&trace.alphas(), &errs, |a, e| a * a <= tau * e);
    Ok(Selection {
        index,
        rule: "a_priori_log",
        triggered,
        n_max: None,
    })
}

/// Outcome of the balancing principle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Balance {
    pub n_bal: usize,
    /// Window end actually used.
    pub n_max: usize,
    /// The defining `N_max` lies beyond the available iterates.
    pub truncated: bool,
}

/// `Φ_noi(n) = 2 err / α_{n−1}` for `n ≥ 1`.
pub fn phi_noi(alphas: &[f64], err_bound: f64, n: usize) -> f64 {
    2.0 * err_bound / alphas[n - 1]
}

/// `N_max = min{n ≥ 1 : C_bd^{1/q} Φ_noi(n)^{1/q} ≥ 1}` over the available
/// `α_0, …, α_{len−1}`; `None` if no such `n` exists there.
pub fn lepskii_n_max(alphas: &[f64], err_bound: f64, c_bd: f64, q: f64) -> Option<usize> {
    (1..=alphas.len()).find(|&n| (c_bd * phi_noi(alphas, err_bound, n)).powf(1.0 / q) >= 1.0)
}

/// Balancing principle on `u_1, …, u_{N_max}`:
/// `n_bal = min{n : ‖u_n − u_m‖ ≤ c Φ_noi(m)^{1/q} for all n ≤ m ≤ N_max}`
/// with `c = C_bd^{1/q} 4 (1 + γ_nl)`.
///
/// `alphas` holds `α_0, …, α_{N−1}` for iterates `u_0, …, u_N`, and
/// `dist(n, m)` returns `‖u_n − u_m‖`.
pub fn lepskii_balance(
    alphas: &[f64],
    err_bound: f64,
    gamma_nl: f64,
    c_bd: f64,
    q: f64,
    mut dist: impl FnMut(usize, usize) -> Result<f64>,
) -> Result<Balance> {
    if alphas.is_empty() {
        return Err(invalid("balancing principle needs at least one step"));
    }
    if !(err_bound >= 0.0) || !(gamma_nl >= 0.0) || !(c_bd > 0.0) || !(q >= 1.0) {
        return Err(invalid("need err ≥ 0, γ_nl ≥ 0, C_bd > 0 and q ≥ 1"));
    }
    let (n_max, truncated) = match lepskii_n_max(alphas, err_bound, c_bd, q) {
        Some(n) => (n, false),
        None => (alphas.len(), true),
    };
    let c = c_bd.powf(1.0 / q) * 4.0 * (1.0 + gamma_nl);
    let bound: Vec<f64> = (0..=n_max)
        .map(|m| {
            if m == 0 {
                f64::NAN
            } else {
                c * phi_noi(alphas, err_bound, m).powf(1.0 / q)
            }
        })
        .collect();
    'outer: for n in 1..=n_max {
        for m in n + 1..=n_max {
            if dist(n, m)? > bound[m] {
                continue 'outer;
            }
        }
        return Ok(Balance {
            n_bal: n,
            n_max,
            truncated,
        });
    }
    unreachable!("n = N_max always qualifies")
}

/// [`lepskii_balance`] on a trace.
pub fn lepskii_select(
    trace: &IterateTrace,
    err_bound: f64,
    gamma_nl: f64,
    c_bd: f64,
    q: f64,
    metric: Option<&QuadraticPenalty>,
) -> Result<Selection> {
    let it = &trace.iterates;
    let b = lepskii_balance(&trace.alphas(), err_bound, gamma_nl, c_bd, q, |n, m| {
        let d = it[n].sub(&it[m])?;
        match metric {
            Some(p) => p.norm(&d),
            None => Ok(d.norm()),
        }
    })?;
    Ok(Selection {
        index: b.n_bal,
        rule: "lepskii",
        triggered: !b.truncated,
        n_max: Some(b.n_max),
    })
}

/// Smallest index attaining the minimum of `errors` (NaN entries ignored).
pub fn oracle_index(errors: &[f64]) -> usize {
    let mut best = 0;
    for (i, e) in errors.iter().enumerate() {
        if *e < errors[best] || errors[best].is_nan() {
            best = i;
        }
    }
    best
}

pub fn oracle_stop(trace: &IterateTrace, truth: &Signal) -> Result<Selection> {
    let errors = trace
        .iterates
        .iter()
        .map(|u| u.distance(truth))
        .collect::<Result<Vec<_>>>()?;
    Ok(Selection {
        index: oracle_index(&errors),
        rule: "oracle",
        triggered: true,
        n_max: None,
    })
}

/// Right-hand side of the Lepskiĭ oracle inequality,
/// `6 (1+γ)^{1/q} C_dec^{2/q} C_bd^{1/q} min_{1≤n≤N_max} (Φ_app(n)^{1/q} + Φ_noi(n)^{1/q})`.
/// Slices are indexed by `n` (entry 0 unused).
pub fn lepskii_oracle_bound(
    phi_app: &[f64],
    phi_noi: &[f64],
    n_max: usize,
    gamma_nl: f64,
    c_dec: f64,
    c_bd: f64,
    q: f64,
) -> f64 {
    let best = (1..=n_max)
        .map(|n| phi_app[n].powf(1.0 / q) + phi_noi[n].powf(1.0 / q))
        .fold(f64::INFINITY, f64::min);
    6.0 * (1.0 + gamma_nl).powf(1.0 / q) * c_dec.powf(2.0 / q) * c_bd.powf(1.0 / q) * best
}

impl StoppingRule {
    pub fn name(&self) -> &'static str {
        match self {
            StoppingRule::APrioriTheta { .. } => "a_priori_theta",
            StoppingRule::APrioriHoelder { .. } => "a_priori_hoelder",
            StoppingRule::APrioriLog { .. } => "a_priori_log",
            StoppingRule::Lepskii { .. } => "lepskii",
            StoppingRule::Oracle { .. } => "oracle",
            StoppingRule::MaxIter => "max_iter",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StoppingRule::APrioriTheta { tau, .. } | StoppingRule::APrioriLog { tau } => check_tau(*tau),
            StoppingRule::APrioriHoelder { tau, nu } => {
                check_tau(*tau)?;
                check_nu(*nu)
            }
            StoppingRule::Lepskii {
                err_bound,
                gamma_nl,
                c_bd,
                q,
                ..
            } => {
                if *err_bound >= 0.0 && *gamma_nl >= 0.0 && *c_bd > 0.0 && *q >= 1.0 {
                    Ok(())
                } else {
                    Err(invalid("need err ≥ 0, γ_nl ≥ 0, C_bd > 0 and q ≥ 1"))
                }
            }
            StoppingRule::Oracle { .. } | StoppingRule::MaxIter => Ok(()),
        }
    }

    /// Whether the run can end now without changing [`StoppingRule::select`].
    pub fn should_halt(&self, trace: &IterateTrace) -> Result<bool> {
        if trace.steps.is_empty() {
            return Ok(false);
        }
        match self {
            StoppingRule::APrioriTheta { .. }
            | StoppingRule::APrioriHoelder { .. }
            | StoppingRule::APrioriLog { .. } => {
                if trace.errs().is_none() {
                    return Ok(false);
                }
                Ok(self.select(trace)?.triggered)
            }
            StoppingRule::Lepskii {
                err_bound, c_bd, q, ..
            } => Ok(lepskii_n_max(&trace.alphas(), *err_bound, *c_bd, *q).is_some()),
            StoppingRule::Oracle { .. } | StoppingRule::MaxIter => Ok(false),
        }
    }

    pub fn select(&self, trace: &IterateTrace) -> Result<Selection> {
        match self {
            StoppingRule::APrioriTheta { tau, phi } => a_priori_stop_theta(trace, *tau, phi),
            StoppingRule::APrioriHoelder { tau, nu } => a_priori_stop_hoelder(trace, *tau, *nu),
            StoppingRule::APrioriLog { tau } => a_priori_stop_log(trace, *tau),
            StoppingRule::Lepskii {
                err_bound,
                gamma_nl,
                c_bd,
                q,
                metric,
            } => {
                if trace.steps.is_empty() {
                    return Ok(Selection {
                        index: 0,
                        rule: "lepskii",
                        triggered: false,
                        n_max: None,
                    });
                }
                lepskii_select(trace, *err_bound, *gamma_nl, *c_bd, *q, metric.as_deref())
            }
            StoppingRule::Oracle { truth } => oracle_stop(trace, truth),
            StoppingRule::MaxIter => Ok(Selection {
                index: trace.iterates.len() - 1,
                rule: "max_iter",
                triggered: true,
                n_max: None,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::IndexFunction;

    #[test]
    fn theta_scan_example() {
        // Θ(t) = t² with err ≡ 0.1: 0.25, 0.111 fail, 0.0494 passes.
        let alphas = [0.5, 1.0 / 3.0, 2.0 / 9.0];
        let th: Vec<f64> = alphas.iter().map(|a| a * a).collect();
        assert_eq!(a_priori_scan(&th, &[0.1; 3], |v, e| v <= e), (2, true));
        assert_eq!(a_priori_scan(&th, &[0.0; 3], |v, e| v <= e), (3, false));
    }

    #[test]
    fn log_and_hoelder_scans() {
        let alphas = [0.5, 1.0 / 3.0, 2.0 / 9.0];
        assert_eq!(a_priori_scan(&alphas, &[0.1; 3], |a, e| a * a <= e), (2, true));
        let (n, hit) = a_priori_scan(&alphas[..2], &[0.09; 2], |a, e| a <= e.sqrt());
        assert_eq!((n, hit), (2, false));
    }

    #[test]
    fn balance_degenerate_cases() {
        let alphas = [0.5, 1.0 / 3.0, 2.0 / 9.0, 4.0 / 27.0];
        let b = lepskii_balance(&alphas, 10.0, 0.0, 1.0, 2.0, |_, _| Ok(1e9)).unwrap();
        assert_eq!((b.n_bal, b.n_max), (1, 1));
        let b = lepskii_balance(&alphas, 1e-3, 0.0, 1.0, 2.0, |_, _| Ok(0.0)).unwrap();
        assert_eq!(b.n_bal, 1);
        assert!(b.truncated);
    }

    #[test]
    fn oracle_ties_and_v_shape() {
        assert_eq!(oracle_index(&[1.0, 0.4, 0.6]), 1);
        assert_eq!(oracle_index(&[3.0, 2.0, 1.0]), 2);
        assert_eq!(oracle_index(&[1.0, 0.5, 0.5]), 1);
    }

    #[test]
    fn rule_validation() {
        assert!(StoppingRule::APrioriLog { tau: 0.5 }.validate().is_err());
        assert!(StoppingRule::APrioriHoelder { tau: 1.0, nu: 0.7 }.validate().is_err());
        let phi = IndexFunction::hoelder(0.5).unwrap();
        assert!(StoppingRule::APrioriTheta { tau: 2.0, phi }.validate().is_ok());
    }
}
