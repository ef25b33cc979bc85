//! Long-time behaviour: the decay rate κ and Péclet threshold guaranteeing
//! convergence to the constant state ⟨f₀⟩, stationary residuals, a
//! time-marching stationary solver, and the heat-equation decay of the
//! spatial average h(t, θ) = ∫ f dx.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, RecordSettings};
use crate::dynamics::{self, RunOptions, Simulation, Trajectory};
use crate::error::{Error, Result};
use crate::grid::{Field3, Params, TWO_PI};
use crate::spectral;

/// Tolerance on rates in the decay checks.
pub const RATE_TOL: f64 = 1e-3;

/// κ = ½(½·C_P⁻²·min{Dₑ,1} − (2π)²·Pe²·(1+m)²/min{Dₑ,1}), m = ⟨f₀⟩.
/// Negative above the Péclet threshold.
pub fn kappa(params: &Params, m: f64, c_p: f64) -> f64 {
    let d = params.de.min(1.0);
    let drift = TWO_PI * TWO_PI * params.pe * params.pe * (1.0 + m) * (1.0 + m) / d;
    0.5 * (0.5 * d / (c_p * c_p) - drift)
}

/// min{Dₑ,1} / (2√2·π·C_P·(1+m)).
pub fn peclet_threshold(params: &Params, m: f64, c_p: f64) -> f64 {
    params.de.min(1.0) / (2.0 * 2f64.sqrt() * PI * c_p * (1.0 + m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub kappa: f64,
    pub threshold: f64,
    pub is_small_pe: bool,
    /// Fitted slope of −ln‖f − ⟨f₀⟩‖ on [t_end/2, t_end]; absent when the
    /// deviation is at roundoff level from the start.
    pub measured_rate: Option<f64>,
    /// ‖w(t)‖ ≤ e^{−(κ−tol)t}‖w(0)‖ at every step.
    pub pointwise_bound_ok: bool,
    /// Small-Pe regime, fitted rate ≥ κ − tol and the pointwise bound holds.
    pub bound_satisfied: bool,
    pub final_l2_to_const: f64,
}

/// Run from `f0` to `t_end` and compare the decay of ‖f − ⟨f₀⟩‖ with κ.
pub fn verify_small_pe_decay(f0: &Field3, params: &Params, t_end: f64) -> Result<EquilibriumReport> {
    let traj = dynamics::run_with(
        f0,
        params,
        t_end,
        RunOptions {
            snapshot_stride: usize::MAX,
            record: RecordSettings::default(),
        },
    )?;
    Ok(decay_report(&traj, t_end))
}

/// The report of [`verify_small_pe_decay`] for an existing trajectory.
pub fn decay_report(traj: &Trajectory, t_end: f64) -> EquilibriumReport {
    let params = traj.params();
    let m = traj.mean0();
    let c_p = spectral::poincare_constant(traj.snapshots()[0].grid());
    let kappa = kappa(params, m, c_p);
    let threshold = peclet_threshold(params, m, c_p);
    let is_small_pe = params.pe.abs() < threshold;

    let series = traj.l2_to_const_series();
    let w0 = series[0].1;
    let scale = m.abs().max(f64::MIN_POSITIVE) * crate::grid::BOX_VOLUME.sqrt();
    let degenerate = w0 <= 1e-13 * scale;

    let pointwise_bound_ok = degenerate
        || series
            .iter()
            .all(|&(t, w)| w <= (-(kappa - RATE_TOL) * t).exp() * w0 * (1.0 + 1e-12));
    let measured_rate = if degenerate {
        None
    } else {
        diagnostics::fit_decay_rate(&series, (0.5 * t_end, t_end)).ok()
    };
    let bound_satisfied =
        is_small_pe && pointwise_bound_ok && measured_rate.map_or(degenerate, |r| r >= kappa - RATE_TOL);
    EquilibriumReport {
        kappa,
        threshold,
        is_small_pe,
        measured_rate,
        pointwise_bound_ok,
        bound_satisfied,
        final_l2_to_const: series.last().map_or(0.0, |s| s.1),
    }
}

/// ‖rhs(f)‖_{L²(Υ)}; zero exactly for stationary states.
pub fn stationary_residual(f: &Field3, params: &Params) -> f64 {
    dynamics::rhs(f, params).l2()
}

/// Steps between residual evaluations in [`solve_stationary`].
const RESIDUAL_EVERY: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct StationarySolution {
    pub field: Field3,
    pub residual: f64,
    pub t: f64,
}

/// March from `f_guess` until the stationary residual drops below `tol`.
pub fn solve_stationary(f_guess: &Field3, params: &Params, tol: f64, t_max: f64) -> Result<StationarySolution> {
    let residual = stationary_residual(f_guess, params);
    if residual < tol {
        return Ok(StationarySolution {
            field: f_guess.clone(),
            residual,
            t: 0.0,
        });
    }
    let mut sim = Simulation::new(f_guess.clone(), *params, t_max, RecordSettings::default())?;
    let mut residual = residual;
    while !sim.is_done() {
        sim.advance()?;
        if sim.step_index() % RESIDUAL_EVERY == 0 || sim.is_done() {
            residual = stationary_residual(sim.field(), params);
            if residual < tol {
                return Ok(StationarySolution {
                    field: sim.field().clone(),
                    residual,
                    t: sim.time(),
                });
            }
        }
    }
    Err(Error::NotConverged { t_max, residual })
}

/// Outcome of the spatial-average check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialAverageReport {
    pub measured_rate: f64,
    pub bound_ok: bool,
    /// (t, ‖h(t) − mean h‖_{L²(0,2π)}) per snapshot.
    pub deviations: Vec<(f64, f64)>,
}

/// h(θ) = ∫_Ω f dx for one snapshot.
pub fn spatial_average(f: &Field3) -> Vec<f64> {
    let grid = f.grid();
    let nt = grid.n_theta();
    let mut h = vec![0.0; nt];
    for line in f.values().chunks_exact(nt) {
        for (acc, v) in h.iter_mut().zip(line) {
            *acc += v;
        }
    }
    h.iter_mut().for_each(|v| *v *= grid.cell_area());
    h
}

fn deviation(h: &[f64], dtheta: f64) -> f64 {
    let mean = h.iter().sum::<f64>() / h.len() as f64;
    (h.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() * dtheta).sqrt()
}

/// h solves ∂ₜh = ∂²_θ h for every Pe, so its deviation from the θ-mean
/// decays at least like e^{−t}. Checks every snapshot pair (s < t) against
/// e^{−(1−tol)(t−s)} and fits the rate over the whole trajectory.
pub fn spatial_average_decay(traj: &Trajectory) -> Result<SpatialAverageReport> {
    let snaps = traj.snapshots();
    if snaps.len() < 10 {
        return Err(Error::TooFewSnapshots {
            got: snaps.len(),
            need: 10,
        });
    }
    let dtheta = snaps[0].grid().dtheta();
    let deviations: Vec<(f64, f64)> = traj
        .times()
        .iter()
        .zip(snaps)
        .map(|(t, f)| (*t, deviation(&spatial_average(f), dtheta)))
        .collect();
    if deviations[0].1 < 1e-14 {
        return Err(Error::DegenerateDeviation {
            deviation: deviations[0].1,
        });
    }
    let mut bound_ok = true;
    for (i, &(s, ds)) in deviations.iter().enumerate() {
        for &(t, dt) in &deviations[i + 1..] {
            if dt > (-(1.0 - RATE_TOL) * (t - s)).exp() * ds * (1.0 + 1e-12) {
                bound_ok = false;
            }
        }
    }
    let span = (deviations[0].0, deviations.last().expect("nonempty").0);
    let measured_rate = diagnostics::fit_decay_rate(&deviations, span)?;
    Ok(SpatialAverageReport {
        measured_rate,
        bound_ok,
        deviations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, make_initial, GridSpec, InitialDataSpec, BOX_VOLUME};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p(pe: f64, de: f64) -> Params {
        Params::new(pe, de, 0.01, true).unwrap()
    }

    fn g(n: usize) -> GridSpec {
        make_grid(n, n).unwrap()
    }

    #[test]
    fn kappa_examples() {
        for m in [0.0, 0.3, 5.0] {
            assert_eq!(kappa(&p(0.0, 1.0), m, 1.0), 0.25);
        }
        // closed form evaluated in extended precision: ½(0.5 − 4π²·1e−4)
        assert!((kappa(&p(0.01, 1.0), 0.0, 1.0) - 0.248_026_079_119_782_13).abs() < 1e-15);
        assert_eq!(kappa(&p(0.05, 4.0), 0.2, 1.0), kappa(&p(0.05, 1.0), 0.2, 1.0));
    }

    #[test]
    fn threshold_examples() {
        let t0 = peclet_threshold(&p(0.0, 1.0), 0.0, 1.0);
        assert!((t0 - 0.112_539_539_519_638_26).abs() < 1e-15);
        assert_relative_eq!(peclet_threshold(&p(0.0, 1.0), 1.0, 1.0), 0.5 * t0, max_relative = 1e-15);
        assert_relative_eq!(peclet_threshold(&p(0.0, 0.5), 0.0, 1.0), 0.5 * t0, max_relative = 1e-15);
    }

    #[test]
    fn stationary_residual_examples() {
        let grid = g(16);
        let params = p(0.4, 1.0);
        for c in [0.0, 1e-3, 0.02] {
            assert!(stationary_residual(&Field3::constant(grid, c).unwrap(), &params) <= 1e-13);
        }
        let u = Field3::from_fn(grid, |x1, _, _| 0.01 * x1.cos()).unwrap();
        let de = 2.5;
        assert_relative_eq!(stationary_residual(&u, &p(0.0, de)), de * u.l2(), max_relative = 1e-12);
    }

    #[test]
    fn residual_ignores_constants_at_zero_pe() {
        let grid = g(8);
        let spec = InitialDataSpec::RandomBandlimited {
            m: 1.0,
            eps: 0.5,
            max_mode: 3,
            seed: 4,
        };
        let f = make_initial(&spec, grid).unwrap();
        let params = p(0.0, 1.7);
        let shifted = f.map(|v| v + 0.37);
        let (a, b) = (stationary_residual(&f, &params), stationary_residual(&shifted, &params));
        assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn solve_stationary_from_constant_returns_immediately() {
        let f = Field3::constant(g(8), 1.0 / BOX_VOLUME).unwrap();
        let sol = solve_stationary(&f, &p(0.05, 1.0), 1e-8, 10.0).unwrap();
        assert_eq!(sol.t, 0.0);
        assert!(sol.residual < 1e-13);
        assert_eq!(sol.field, f);
    }

    #[test]
    fn solve_stationary_reports_non_convergence() {
        let spec = InitialDataSpec::SingleMode {
            m: 10.0,
            eps: 0.5,
            k: [1, 0, 0],
        };
        let f = make_initial(&spec, g(16)).unwrap();
        let params = Params::new(5.0, 1.0, 0.005, true).unwrap();
        assert!(matches!(
            solve_stationary(&f, &params, 1e-8, 0.2),
            Err(Error::NotConverged { .. })
        ));
    }

    #[test]
    fn decay_report_at_zero_pe() {
        let spec = InitialDataSpec::SingleMode {
            m: 1.0,
            eps: 0.1,
            k: [1, 0, 0],
        };
        let f = make_initial(&spec, g(8)).unwrap();
        let rep = verify_small_pe_decay(&f, &Params::new(0.0, 1.0, 0.05, true).unwrap(), 4.0).unwrap();
        assert_eq!(rep.kappa, 0.25);
        assert!(rep.is_small_pe && rep.bound_satisfied && rep.pointwise_bound_ok);
        assert!((rep.measured_rate.unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn decay_report_above_threshold() {
        let spec = InitialDataSpec::SingleMode {
            m: 1.0,
            eps: 0.1,
            k: [1, 0, 0],
        };
        let f = make_initial(&spec, g(8)).unwrap();
        let rep = verify_small_pe_decay(&f, &Params::new(0.5, 1.0, 0.05, true).unwrap(), 1.0).unwrap();
        assert!(!rep.is_small_pe);
        assert!(!rep.bound_satisfied);
        assert!(rep.kappa < 0.0);
    }

    #[test]
    fn spatial_average_heat_mode() {
        let grid = g(8);
        let f0 = Field3::from_fn(grid, |_, _, th| (1.0 + 0.5 * th.cos()) / BOX_VOLUME).unwrap();
        let traj = dynamics::run(&f0, &Params::new(0.0, 1.0, 0.1, true).unwrap(), 2.0, 1).unwrap();
        let rep = spatial_average_decay(&traj).unwrap();
        assert!((rep.measured_rate - 1.0).abs() < 1e-4);
        assert!(rep.bound_ok);
    }

    #[test]
    fn spatial_average_degenerate_and_short() {
        let grid = g(8);
        let f0 = Field3::from_fn(grid, |x1, _, _| (1.0 + 0.5 * x1.cos()) / BOX_VOLUME).unwrap();
        let params = Params::new(0.0, 1.0, 0.1, true).unwrap();
        let traj = dynamics::run(&f0, &params, 2.0, 1).unwrap();
        assert!(matches!(
            spatial_average_decay(&traj),
            Err(Error::DegenerateDeviation { .. })
        ));
        let traj = dynamics::run(&f0, &params, 0.5, 1).unwrap();
        assert!(matches!(
            spatial_average_decay(&traj),
            Err(Error::TooFewSnapshots { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn kappa_positive_iff_below_threshold(
            pe in -0.5f64..0.5,
            de in 0.05f64..3.0,
            m in 0.0f64..3.0,
            c_p in 0.2f64..3.0,
        ) {
            let params = p(pe, de);
            let k = kappa(&params, m, c_p);
            let th = peclet_threshold(&params, m, c_p);
            prop_assume!((pe.abs() - th).abs() > 1e-12);
            prop_assert_eq!(k > 0.0, pe.abs() < th);
        }
    }
}
