//! The verification suite: conservation, analytic exactness, oracle
//! agreement, decay-rate bounds, boundedness, smoothing, the truncation
//! ladder and stationary states, plus a temporal order check.

use std::fmt;
use std::time::Instant;

use serde::Serialize;

use crate::diagnostics::{self, RecordSettings};
use crate::dynamics::{self, CylinderCenter, RunOptions, Simulation, BOX_CENTER};
use crate::equilibrium::{self, RATE_TOL};
use crate::error::Result;
use crate::grid::{make_grid, make_initial, Field3, GridSpec, InitialDataSpec, Params, BOX_VOLUME};
use crate::oracle::{self, OracleConfig};
use crate::spectral;

/// Scale of a verification run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifySettings {
    pub grid: GridSpec,
    pub pe: f64,
    pub de: f64,
    pub dt: f64,
}

impl VerifySettings {
    /// 32³, Pe = 0.05, Dₑ = 1, dt = 0.005.
    pub fn desk() -> Self {
        Self {
            grid: make_grid(32, 32).expect("valid grid"),
            pe: 0.05,
            de: 1.0,
            dt: 0.005,
        }
    }

    fn params(&self) -> Result<Params> {
        Params::new(self.pe, self.de, self.dt, true)
    }

    fn params_with_pe(&self, pe: f64) -> Result<Params> {
        Params::new(pe, self.de, self.dt, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<4} {:<22} {:>7.2}s  {}",
            self.status, self.name, self.seconds, self.detail
        )
    }
}

fn outcome(ok: bool, detail: String) -> Result<(Status, String)> {
    Ok((if ok { Status::Pass } else { Status::Fail }, detail))
}

fn skip(reason: &str) -> Result<(Status, String)> {
    Ok((Status::Skip, reason.to_string()))
}

fn timed(name: &'static str, body: impl FnOnce() -> Result<(Status, String)>) -> CheckResult {
    let start = Instant::now();
    let (status, detail) = match body() {
        Ok(r) => r,
        Err(e) => (Status::Fail, format!("{}: {e}", e.kind())),
    };
    CheckResult {
        name,
        status,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn random(grid: GridSpec, m: f64, eps: f64, max_mode: usize, seed: u64) -> Result<Field3> {
    make_initial(&InitialDataSpec::RandomBandlimited { m, eps, max_mode, seed }, grid)
}

fn small_pe(params: &Params, f0: &Field3) -> bool {
    let c_p = spectral::poincare_constant(f0.grid());
    params.pe.abs() < equilibrium::peclet_threshold(params, f0.mean(), c_p)
}

/// Relative drift of ⟨f⟩ over `n_steps` steps.
pub fn mass_conservation(s: &VerifySettings, n_steps: usize) -> CheckResult {
    timed("mass-conservation", || {
        let f0 = random(s.grid, 20.0, 0.5, 3, 1)?;
        let params = s.params()?;
        let mut sim = Simulation::new(f0, params, n_steps as f64 * s.dt, RecordSettings::default())?;
        let m0 = sim.record().mass;
        let mut drift = 0.0f64;
        while !sim.is_done() {
            drift = drift.max((sim.advance()?.mass - m0).abs() / m0);
        }
        outcome(
            drift <= 1e-12,
            format!(
                "max relative drift {drift:.3e} over {} steps (tol 1e-12)",
                sim.n_steps()
            ),
        )
    })
}

/// Pe = 0, Dₑ = 2, mode (1,0,0): the fluctuation decays exactly as e^{−2t}.
pub fn linear_exactness(s: &VerifySettings) -> CheckResult {
    timed("linear-exactness", || {
        let spec = InitialDataSpec::SingleMode {
            m: 1.0,
            eps: 0.5,
            k: [1, 0, 0],
        };
        let f0 = make_initial(&spec, s.grid)?;
        let params = Params::new(0.0, 2.0, s.dt, true)?;
        let traj = dynamics::run(&f0, &params, 1.0, usize::MAX)?;
        let mean = f0.mean();
        let factor = (-2.0f64).exp();
        let want = f0.map(|v| mean + factor * (v - mean));
        let scale = f0.map(|v| v - mean).linf() * factor;
        let err = traj.last().max_abs_diff(&want) / scale;
        outcome(err <= 1e-8, format!("relative L∞ error at t=1: {err:.3e} (tol 1e-8)"))
    })
}

/// Spectral solver against the flux-form explicit-Euler oracle.
pub fn oracle_equivalence(s: &VerifySettings) -> CheckResult {
    timed("oracle-equivalence", || {
        if s.pe == 0.0 {
            return skip("Pe = 0");
        }
        let r = oracle_compare(s.pe, s.de, s.dt)?;
        outcome(
            r.max_diff_8 <= 1e-3 && r.min_order >= 1.8,
            format!(
                "8³ L∞ diff {:.3e} (tol 1e-3); errors {:?}; orders {:?} (min 1.8)",
                r.max_diff_8,
                r.errors.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>(),
                r.orders.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>()
            ),
        )
    })
}

/// Result of the finite-difference comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleComparison {
    pub t_end: f64,
    pub levels: Vec<usize>,
    /// L∞ error of the oracle at each level against the resolved reference.
    pub errors: Vec<f64>,
    pub orders: Vec<f64>,
    pub min_order: f64,
    /// ‖spectral − oracle‖∞ at 8³.
    pub max_diff_8: f64,
}

/// Oracle levels 4³, 8³, 16³ at T = 0.1 against a 32³ spectral reference
/// (sampled by injection); the oracle step is ∝ dx², so the total error is
/// O(dx²).
pub fn oracle_compare(pe: f64, de: f64, dt: f64) -> Result<OracleComparison> {
    const T: f64 = 0.1;
    const REF_N: usize = 32;
    let spec = InitialDataSpec::RandomBandlimited {
        m: 20.0,
        eps: 0.5,
        max_mode: 1,
        seed: 7,
    };
    let ref_grid = make_grid(REF_N, REF_N)?;
    let ref_params = Params::new(pe, de, 1e-4, true)?;
    let reference = dynamics::run(&make_initial(&spec, ref_grid)?, &ref_params, T, usize::MAX)?;
    let reference = reference.last();

    let levels = vec![4, 8, 16];
    let mut errors = Vec::new();
    let mut max_diff_8 = f64::NAN;
    for &n in &levels {
        let grid = make_grid(n, n)?;
        let f0 = make_initial(&spec, grid)?;
        let params = Params::new(pe, de, dt, true)?;
        let cfg = OracleConfig::stable(grid, &params, 0.1);
        let fd = oracle::fd_run(&f0, &params, T, &cfg)?;
        let stride = REF_N / n;
        let mut err = 0.0f64;
        for (flat, v) in fd.values().iter().enumerate() {
            let it = flat % n;
            let i2 = (flat / n) % n;
            let i1 = flat / (n * n);
            let r = reference.get(i1 * stride, i2 * stride, it * stride);
            err = err.max((v - r).abs());
        }
        errors.push(err);
        if n == 8 {
            let spectral_run = dynamics::run(&f0, &params, T, usize::MAX)?;
            max_diff_8 = spectral_run.last().max_abs_diff(&fd);
        }
    }
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let min_order = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(OracleComparison {
        t_end: T,
        levels,
        errors,
        orders,
        min_order,
        max_diff_8,
    })
}

/// ‖f − ⟨f₀⟩‖ ≤ e^{−(κ−tol)t}‖f₀ − ⟨f₀⟩‖ and fitted rate ≥ κ, for t ≤ 10.
pub fn kappa_decay(s: &VerifySettings) -> CheckResult {
    timed("decay-bound", || {
        let c_dense = oracle::dense_poincare(make_grid(8, 8)?)?;
        let c_p = spectral::poincare_constant(s.grid);
        if (c_dense - c_p).abs() > 1e-8 {
            return outcome(
                false,
                format!("Poincaré constant {c_p} disagrees with dense value {c_dense}"),
            );
        }
        let f0 = random(s.grid, 1.0, 0.5, 2, 11)?;
        let params = s.params()?;
        if !small_pe(&params, &f0) {
            return skip("Pe above the small-Péclet threshold");
        }
        let r = equilibrium::verify_small_pe_decay(&f0, &params, 10.0)?;
        outcome(
            r.bound_satisfied,
            format!(
                "κ = {:.6}, threshold {:.6}, fitted rate {}, pointwise bound {}",
                r.kappa,
                r.threshold,
                r.measured_rate.map_or("n/a".into(), |v| format!("{v:.6}")),
                r.pointwise_bound_ok
            ),
        )
    })
}

/// h(t, θ) = ∫ f dx decays like the heat equation for each Pe.
pub fn spatial_average(s: &VerifySettings) -> CheckResult {
    timed("spatial-average", || {
        const T: f64 = 5.0;
        let mut sweep = vec![0.0, 0.05, 0.3];
        if !sweep.contains(&s.pe) {
            sweep.push(s.pe);
        }
        let f0 = random(s.grid, 20.0, 0.5, 2, 5)?;
        let mut ok = true;
        let mut parts = Vec::new();
        for pe in sweep {
            let params = s.params_with_pe(pe)?;
            let (n, _) = dynamics::step_schedule(T, s.dt);
            let traj = dynamics::run(&f0, &params, T, (n / 50).max(1))?;
            let r = equilibrium::spatial_average_decay(&traj)?;
            ok &= r.bound_ok && r.measured_rate >= 1.0 - RATE_TOL;
            parts.push(format!("Pe={pe}: rate {:.6}, pairwise {}", r.measured_rate, r.bound_ok));
        }
        outcome(ok, format!("{} (min rate {})", parts.join("; "), 1.0 - RATE_TOL))
    })
}

/// ρ ∈ [−1e−6, 1 + 1e−6] for t ≤ 5 from data with ρ close to 1.
pub fn rho_bounds(s: &VerifySettings) -> CheckResult {
    timed("rho-bounds", || {
        if s.pe.abs() > 0.1 {
            return skip("only asserted for Pe ≤ 0.1");
        }
        let f0 = random(s.grid, 25.0, 0.5, 3, 9)?;
        let traj = dynamics::run(&f0, &s.params()?, 5.0, usize::MAX)?;
        let lo = traj
            .diagnostics()
            .iter()
            .map(|r| r.rho_min)
            .fold(f64::INFINITY, f64::min);
        let hi = traj
            .diagnostics()
            .iter()
            .map(|r| r.rho_max)
            .fold(f64::NEG_INFINITY, f64::max);
        outcome(
            lo >= -1e-6 && hi <= 1.0 + 1e-6,
            format!("ρ ∈ [{lo:.6}, {hi:.6}] (allowed [-1e-6, 1+1e-6])"),
        )
    })
}

/// sup_{t ≤ 10} ‖f(t)‖_{L⁶⁴} ≤ 2‖f₀‖∞.
pub fn lp_ladder_bound(s: &VerifySettings) -> CheckResult {
    timed("lp-ladder", || {
        if s.pe == 0.0 {
            return skip("Pe = 0");
        }
        let f0 = random(s.grid, 20.0, 0.8, 3, 13)?;
        let traj = dynamics::run(&f0, &s.params()?, 10.0, usize::MAX)?;
        let sup = traj.diagnostics().iter().map(|r| r.lp_ladder[6]).fold(0.0, f64::max);
        let bound = 2.0 * f0.linf();
        outcome(
            sup <= bound,
            format!("sup ‖f‖_L64 = {sup:.6e}, bound 2‖f₀‖∞ = {bound:.6e}"),
        )
    })
}

/// Spectral tail at t = 1 at most 1% of its initial value.
pub fn smoothing(s: &VerifySettings) -> CheckResult {
    timed("smoothing", || {
        if s.pe == 0.0 {
            return skip("Pe = 0");
        }
        let n = s.grid.n_x().min(s.grid.n_theta());
        let f0 = random(s.grid, 20.0, 0.5, (3 * n / 8).max(1), 17)?;
        let traj = dynamics::run(&f0, &s.params()?, 1.0, usize::MAX)?;
        let before = diagnostics::spectral_tail(&f0);
        let after = diagnostics::spectral_tail(traj.last());
        outcome(
            before > 0.0 && after <= 0.01 * before,
            format!("tail {before:.3e} → {after:.3e} (ratio tol 0.01)"),
        )
    })
}

/// Truncation energies of a rescaled small-Pe solution collapse along k.
pub fn truncation_ladder(s: &VerifySettings) -> CheckResult {
    timed("truncation-ladder", || {
        const T0: f64 = 1.0;
        const R: f64 = 0.5;
        const DELTA: f64 = 0.01;
        if s.pe == 0.0 {
            return skip("Pe = 0");
        }
        let f0 = random(s.grid, 20.0, 0.5, 2, 19)?;
        let params = s.params()?;
        if !small_pe(&params, &f0) {
            return skip("Pe above the small-Péclet threshold");
        }
        let (n, _) = dynamics::step_schedule(T0, s.dt);
        let traj = dynamics::run_with(
            &f0,
            &params,
            T0,
            RunOptions {
                snapshot_stride: (n / 80).max(1),
                record: RecordSettings::default(),
            },
        )?;
        let center = CylinderCenter {
            t0: T0,
            xi0: BOX_CENTER,
        };
        let cyl = dynamics::rescale_trajectory(&traj, center, R, DELTA, 0.0, 16)?;
        let ladder = diagnostics::truncation_energy_cylinder(&cyl, 6, false)?;
        let e = &ladder.energies;
        outcome(
            e[6] <= 0.1 * e[0] && ladder.is_nonincreasing(),
            format!(
                "ℰ₀ = {:.3e}, ℰ₆ = {:.3e}, nonincreasing {} over {} slices",
                e[0],
                e[6],
                ladder.is_nonincreasing(),
                cyl.slices().len()
            ),
        )
    })
}

/// Constants are stationary, and small-Pe data relax to ⟨f₀⟩.
pub fn stationary_states(s: &VerifySettings) -> CheckResult {
    timed("stationary-states", || {
        let params = s.params()?;
        let c = Field3::constant(s.grid, 20.0 / BOX_VOLUME)?;
        let res = equilibrium::stationary_residual(&c, &params);
        let f0 = random(s.grid, 20.0, 0.5, 2, 23)?;
        if !small_pe(&params, &f0) {
            return outcome(
                res <= 1e-13,
                format!("residual(const) {res:.3e}; relaxation skipped above threshold"),
            );
        }
        let sol = equilibrium::solve_stationary(&f0, &params, 1e-8, 100.0)?;
        let err = sol.field.max_abs_diff(&Field3::constant(s.grid, f0.mean())?);
        outcome(
            res <= 1e-13 && err <= 1e-6,
            format!(
                "residual(const) {res:.3e} (tol 1e-13); relaxed by t={:.2} to L∞ distance {err:.3e} (tol 1e-6)",
                sol.t
            ),
        )
    })
}

/// Self-convergence in dt over a horizon of 8 configured steps.
pub fn temporal_order(s: &VerifySettings) -> CheckResult {
    timed("temporal-order", || {
        if s.pe == 0.0 {
            return skip("Pe = 0: the integrating factor is exact");
        }
        let r = temporal_convergence(&random(s.grid, 20.0, 0.5, 2, 21)?, s.pe, s.de, s.dt)?;
        outcome(
            r.resolved && r.min_order >= 1.9,
            format!(
                "errors {:?}, orders {:?} (min 1.9){}",
                r.errors.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>(),
                r.orders.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>(),
                if r.resolved { "" } else { ", errors at roundoff level" }
            ),
        )
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemporalConvergence {
    pub dts: Vec<f64>,
    pub errors: Vec<f64>,
    pub orders: Vec<f64>,
    pub min_order: f64,
    /// The coarsest error lies clearly above roundoff.
    pub resolved: bool,
}

/// L∞ errors at dt, dt/2, dt/4 against a dt/64 reference at T = 8·dt.
pub fn temporal_convergence(f0: &Field3, pe: f64, de: f64, dt: f64) -> Result<TemporalConvergence> {
    let t_end = 8.0 * dt;
    let at = |h: f64| -> Result<Field3> {
        let p = Params::new(pe, de, h, true)?;
        Ok(dynamics::run(f0, &p, t_end, usize::MAX)?.last().clone())
    };
    let reference = at(dt / 64.0)?;
    let dts = vec![dt, dt / 2.0, dt / 4.0];
    let errors = dts
        .iter()
        .map(|&h| Ok(at(h)?.max_abs_diff(&reference)))
        .collect::<Result<Vec<f64>>>()?;
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let min_order = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    let resolved = errors[2] > 1e-11 * f0.linf();
    Ok(TemporalConvergence {
        dts,
        errors,
        orders,
        min_order,
        resolved,
    })
}

/// The complete suite in a fixed order.
pub fn run_all(s: &VerifySettings) -> Vec<CheckResult> {
    vec![
        mass_conservation(s, 2000),
        linear_exactness(s),
        oracle_equivalence(s),
        kappa_decay(s),
        spatial_average(s),
        rho_bounds(s),
        lp_ladder_bound(s),
        smoothing(s),
        truncation_ladder(s),
        stationary_states(s),
        temporal_order(s),
    ]
}

/// True iff nothing failed.
pub fn all_passed(results: &[CheckResult]) -> bool {
    results.iter().all(|r| r.status != Status::Fail)
}
