use irgnm::rates::{big_psi, fit_rate, hoelder, lambda_of, log_index, theta, vartheta, IndexFunction};

fn log_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
}

#[test]
fn lambda_of_square_root_is_a_quarter() {
    let lam = lambda_of(&hoelder(0.5).unwrap()).unwrap();
    for t in log_points(1e-6, 1.0, 40) {
        assert!((lam.eval(t).unwrap() - t / 4.0).abs() <= 1e-6 * t / 4.0);
    }
}

#[test]
fn lambda_majorizes_psi_over_t_and_has_concave_root() {
    for phi in [hoelder(0.3).unwrap(), log_index(1.0).unwrap()] {
        let psi = big_psi(&phi).unwrap();
        let lam = lambda_of(&phi).unwrap();
        let ts = log_points(1e-5, 1.0, 60);
        for &t in &ts {
            let r = psi.eval(t).unwrap() / t;
            assert!(lam.eval(t).unwrap() >= r * (1.0 - 1e-9), "{t}");
        }
        // Second differences of √Λ on a uniform grid.
        let xs: Vec<f64> = (1..200).map(|k| k as f64 / 200.0).collect();
        let r: Vec<f64> = xs.iter().map(|&t| lam.eval(t).unwrap().sqrt()).collect();
        for w in r.windows(3) {
            assert!(w[0] - 2.0 * w[1] + w[2] <= 1e-12);
        }
    }
}

#[test]
fn derived_functions_invert() {
    let ts = log_points(1e-5, 0.5, 15);
    for phi in [hoelder(0.2).unwrap(), hoelder(0.5).unwrap(), log_index(2.0).unwrap()] {
        for f in [theta(&phi).unwrap(), vartheta(&phi).unwrap(), big_psi(&phi).unwrap()] {
            for &t in &ts {
                let back = f.inverse(f.eval(t).unwrap()).unwrap();
                assert!((back - t).abs() <= 1e-10 * t, "{f:?} at {t}");
            }
        }
    }
}

#[test]
fn theta_of_hoelder_is_a_power() {
    let th = theta(&hoelder(0.25).unwrap()).unwrap();
    for t in log_points(1e-4, 1.0, 9) {
        assert!((th.eval(t).unwrap() - t.powf(1.5)).abs() <= 1e-14);
    }
}

#[test]
fn lambda_after_psi_inverse_has_the_additive_hoelder_slope() {
    for nu in [0.15, 0.35, 0.5] {
        let phi = IndexFunction::hoelder_additive(nu).unwrap();
        let psi = big_psi(&phi).unwrap();
        let lam = lambda_of(&phi).unwrap();
        let ss: Vec<f64> = log_points(1e-5, 1e-1, 12).iter().map(|t| psi.eval(*t).unwrap()).collect();
        let ys: Vec<f64> = ss.iter().map(|s| lam.eval(psi.inverse(*s).unwrap()).unwrap()).collect();
        let fit = fit_rate(&ss, &ys).unwrap();
        assert!((fit.slope - 2.0 * nu / (1.0 + 2.0 * nu)).abs() <= 0.02, "{nu}: {fit:?}");
    }
}

#[test]
fn out_of_range_arguments_are_errors() {
    let h = hoelder(0.5).unwrap();
    assert!(h.eval(1.5).is_err());
    assert!(h.inverse(2.0).is_err());
    assert_eq!(h.inverse(0.0).unwrap(), 0.0);
}
