//! Convergence studies against independent references: finite-difference
//! right-hand sides, a classical RK4 integration of the same semi-discrete
//! system, and the moment equation for ρ.

use activeflow::diagnostics::{fit_decay_rate, moment_residual};
use activeflow::dynamics::{self, rhs};
use activeflow::grid::{make_grid, make_initial, sample_initial, Field3, GridSpec, InitialDataSpec, Params};
use activeflow::oracle::{fd_rhs, fd_run, OracleConfig};
use activeflow::verify::{self, Status, VerifySettings};

fn grid(n: usize) -> GridSpec {
    make_grid(n, n).unwrap()
}

fn smooth_data() -> InitialDataSpec {
    InitialDataSpec::RandomBandlimited {
        m: 20.0,
        eps: 0.5,
        max_mode: 1,
        seed: 3,
    }
}

fn log2_ratios(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[test]
fn spectral_rhs_agrees_with_finite_differences_at_second_order() {
    let params = Params::new(0.05, 1.0, 0.01, true).unwrap();
    let errors: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&n| {
            let f = sample_initial(&smooth_data(), grid(n)).unwrap();
            rhs(&f, &params).max_abs_diff(&fd_rhs(&f, &params))
        })
        .collect();
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 4.0).abs() <= 0.3, "error ratio {ratio} from {errors:?}");
    }
    assert!(log2_ratios(&errors).iter().all(|&o| o >= 1.9));
}

fn rk4(f0: &Field3, params: &Params, t_end: f64, n: usize) -> Field3 {
    let h = t_end / n as f64;
    let mut f = f0.clone();
    for _ in 0..n {
        let k1 = rhs(&f, params);
        let k2 = rhs(&f.add_scaled(&k1, 0.5 * h), params);
        let k3 = rhs(&f.add_scaled(&k2, 0.5 * h), params);
        let k4 = rhs(&f.add_scaled(&k3, h), params);
        f = f
            .add_scaled(&k1, h / 6.0)
            .add_scaled(&k2, h / 3.0)
            .add_scaled(&k3, h / 3.0)
            .add_scaled(&k4, h / 6.0);
    }
    f
}

#[test]
fn time_stepping_is_second_order() {
    let spec = InitialDataSpec::RandomBandlimited {
        m: 20.0,
        eps: 0.5,
        max_mode: 2,
        seed: 5,
    };
    let f0 = make_initial(&spec, grid(16)).unwrap();
    let t_end = 0.5;
    let reference = rk4(&f0, &Params::new(0.05, 1.0, 1.0, true).unwrap(), t_end, 2000);
    let errors: Vec<f64> = [0.02, 0.01, 0.005]
        .iter()
        .map(|&dt| {
            let p = Params::new(0.05, 1.0, dt, true).unwrap();
            dynamics::run(&f0, &p, t_end, usize::MAX)
                .unwrap()
                .last()
                .max_abs_diff(&reference)
        })
        .collect();
    let orders = log2_ratios(&errors);
    assert!(orders.iter().all(|&o| o >= 1.9), "errors {errors:?}, orders {orders:?}");
}

#[test]
fn matches_oracle_over_unit_time() {
    let spec = InitialDataSpec::SingleMode {
        m: 1.0,
        eps: 0.1,
        k: [1, 0, 0],
    };
    let g = grid(16);
    let f0 = make_initial(&spec, g).unwrap();
    let params = Params::new(0.05, 1.0, 0.01, true).unwrap();
    let traj = dynamics::run(&f0, &params, 1.0, usize::MAX).unwrap();
    assert_eq!(traj.diagnostics().len(), 101);
    let fd = fd_run(&f0, &params, 1.0, &OracleConfig::stable(g, &params, 0.5)).unwrap();
    let diff = traj.last().max_abs_diff(&fd);
    assert!(diff <= 1e-4, "L∞ difference {diff}");
}

fn residual_at(traj: &dynamics::Trajectory, t: f64) -> f64 {
    moment_residual(traj)
        .unwrap()
        .into_iter()
        .find(|(s, _)| (s - t).abs() < 1e-9)
        .expect("time is a snapshot")
        .1
}

#[test]
fn moment_residual_is_second_order_in_dt_at_zero_pe() {
    let spec = InitialDataSpec::SingleMode {
        m: 1.0,
        eps: 0.5,
        k: [1, 0, 0],
    };
    let f0 = make_initial(&spec, grid(16)).unwrap();
    let residuals: Vec<f64> = [0.02, 0.01, 0.005]
        .iter()
        .map(|&dt| {
            let traj = dynamics::run(&f0, &Params::new(0.0, 1.0, dt, true).unwrap(), 0.2, 1).unwrap();
            residual_at(&traj, 0.1)
        })
        .collect();
    let orders = log2_ratios(&residuals);
    assert!(
        orders.iter().all(|&o| o >= 1.9),
        "residuals {residuals:?}, orders {orders:?}"
    );
}

#[test]
fn moment_residual_vanishes_under_refinement_at_small_pe() {
    let residuals: Vec<f64> = [(16, 0.02), (32, 0.01), (32, 0.005)]
        .iter()
        .map(|&(n, dt)| {
            let f0 = make_initial(&smooth_data(), grid(n)).unwrap();
            let traj = dynamics::run(&f0, &Params::new(0.05, 1.0, dt, true).unwrap(), 0.2, 1).unwrap();
            residual_at(&traj, 0.1)
        })
        .collect();
    let orders = log2_ratios(&residuals);
    assert!(
        orders.iter().all(|&o| o >= 1.9),
        "residuals {residuals:?}, orders {orders:?}"
    );
}

#[test]
fn fitted_rate_of_linear_mode_is_one() {
    let spec = InitialDataSpec::SingleMode {
        m: 1.0,
        eps: 0.2,
        k: [1, 0, 0],
    };
    let f0 = make_initial(&spec, grid(16)).unwrap();
    let traj = dynamics::run(&f0, &Params::new(0.0, 1.0, 0.01, true).unwrap(), 2.0, 10).unwrap();
    let series = traj.l2_to_const_series();
    let rate = fit_decay_rate(&series, (0.0, 2.0)).unwrap();
    assert!((rate - 1.0).abs() <= 1e-6, "rate {rate}");
    let at_one = series.iter().find(|(t, _)| (t - 1.0).abs() < 1e-9).unwrap().1;
    assert!((at_one / series[0].1 - (-1.0f64).exp()).abs() <= 1e-6);
}

#[test]
fn temporal_order_check_passes_and_detects_a_broken_step() {
    let good = VerifySettings {
        grid: grid(16),
        pe: 0.05,
        de: 1.0,
        dt: 0.01,
    };
    let r = verify::temporal_order(&good);
    assert_eq!(r.status, Status::Pass, "{}", r.detail);

    let f0 = make_initial(&smooth_data(), grid(16)).unwrap();
    let cfl = dynamics::cfl_dt(&f0, &Params::new(0.05, 1.0, 1.0, true).unwrap());
    let broken = VerifySettings { dt: 10.0 * cfl, ..good };
    let r = verify::temporal_order(&broken);
    assert_eq!(r.status, Status::Fail, "{}", r.detail);
}

#[test]
fn zero_pe_skips_non_analytic_checks() {
    let s = VerifySettings {
        grid: grid(8),
        pe: 0.0,
        de: 1.0,
        dt: 0.01,
    };
    for r in [
        verify::oracle_equivalence(&s),
        verify::lp_ladder_bound(&s),
        verify::smoothing(&s),
        verify::truncation_ladder(&s),
        verify::temporal_order(&s),
    ] {
        assert_eq!(r.status, Status::Skip, "{}", r.name);
    }
    for r in [verify::linear_exactness(&s), verify::stationary_states(&s)] {
        assert_eq!(r.status, Status::Pass, "{}: {}", r.name, r.detail);
    }
}
