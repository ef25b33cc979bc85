//! Time evolution of ∂ₜf + Pe·div((1−ρ)f e(θ)) = Dₑ·Δf + ∂²_θ f.
//!
//! The diffusion operator is diagonal in Fourier space and is applied
//! exactly through an integrating factor; the advection term is advanced
//! with the explicit two-stage midpoint rule. The divergence form leaves the
//! zero mode untouched, so the mass is conserved up to transform roundoff.

use std::f64::consts::PI;

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DiagnosticsRecord, RecordSettings};
use crate::error::{Error, Result};
use crate::grid::{check_admissible, Field3, GridSpec, Params, TWO_PI};
use crate::spectral::{self, Axis, Spectrum};

/// L∞ growth factor over one step treated as blowup.
const BLOWUP_GROWTH: f64 = 10.0;

/// Spectrum of −Pe·div((1−ρ) f e(θ)), products formed on the grid and
/// dealiased when `params.dealias` is set.
pub fn advection_spectrum(f: &Field3, params: &Params) -> Spectrum {
    let grid = f.grid();
    if params.pe == 0.0 {
        return Spectrum::from_raw(grid, vec![Complex64::new(0.0, 0.0); grid.len3()]);
    }
    let rho = spectral::compute_rho(f);
    let nt = grid.n_theta();
    let trig: Vec<(f64, f64)> = (0..nt).map(|it| crate::grid::e_vec(grid.theta(it))).collect();
    let mut flux1 = Vec::with_capacity(grid.len3());
    let mut flux2 = Vec::with_capacity(grid.len3());
    for (line, r) in f.values().chunks_exact(nt).zip(rho.values()) {
        let w = 1.0 - r;
        for (v, (c, s)) in line.iter().zip(&trig) {
            flux1.push(w * v * c);
            flux2.push(w * v * s);
        }
    }
    let mut s1 = spectral::forward(&Field3::from_raw(grid, flux1));
    let mut s2 = spectral::forward(&Field3::from_raw(grid, flux2));
    if params.dealias {
        spectral::dealias_in_place(&mut s1);
        spectral::dealias_in_place(&mut s2);
    }
    let d1 = spectral::deriv_spectrum(&s1, Axis::X1);
    let d2 = spectral::deriv_spectrum(&s2, Axis::X2);
    let coeffs = d1
        .coeffs()
        .iter()
        .zip(d2.coeffs())
        .map(|(a, b)| -params.pe * (a + b))
        .collect();
    Spectrum::from_raw(grid, coeffs)
}

/// Dₑ·Δf + ∂²_θ f − Pe·div((1−ρ)·f·e(θ)).
pub fn rhs(f: &Field3, params: &Params) -> Field3 {
    let grid = f.grid();
    let mut s = spectral::forward(f);
    let adv = advection_spectrum(f, params);
    for (flat, (c, a)) in s.coeffs_mut().iter_mut().zip(adv.coeffs()).enumerate() {
        *c = *c * spectral::laplacian_symbol(grid, flat, params.de) + a;
    }
    spectral::inverse(&s)
}

/// Advective CFL bound 0.25·dx / max(|Pe|·max|1−ρ|, 1e−12).
pub fn cfl_dt(f: &Field3, params: &Params) -> f64 {
    let rho = spectral::compute_rho(f);
    let w = rho.values().iter().fold(0.0f64, |m, r| m.max((1.0 - r).abs()));
    0.25 * f.grid().dx() / (params.pe.abs() * w).max(1e-12)
}

/// Integrating factors e^{L·dt} and e^{L·dt/2} for one grid and parameter set.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: GridSpec,
    params: Params,
    dt: f64,
    full: Vec<f64>,
    half: Vec<f64>,
}

impl Stepper {
    pub fn new(grid: GridSpec, params: Params, dt: f64) -> Self {
        let (full, half) = (0..grid.len3())
            .map(|flat| {
                let l = spectral::laplacian_symbol(grid, flat, params.de);
                ((l * dt).exp(), (0.5 * l * dt).exp())
            })
            .unzip();
        Self {
            grid,
            params,
            dt,
            full,
            half,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One integrating-factor midpoint step:
    /// f̂* = E_{½}(f̂ + ½dt·N̂(f)),  f̂⁺ = E·f̂ + dt·E_{½}·N̂(f*).
    /// Returns the new field and its spectrum. `step`/`t` label errors.
    pub fn step(&self, f: &Field3, step: usize, t: f64) -> Result<(Field3, Spectrum)> {
        debug_assert_eq!(f.grid(), self.grid);
        let s0 = spectral::forward(f);
        let n0 = advection_spectrum(f, &self.params);
        let dt = self.dt;
        let mid: Vec<Complex64> = s0
            .coeffs()
            .iter()
            .zip(n0.coeffs())
            .zip(&self.half)
            .map(|((c, n), e)| (c + n * (0.5 * dt)) * e)
            .collect();
        let f_mid = spectral::inverse(&Spectrum::from_raw(self.grid, mid));
        let n1 = advection_spectrum(&f_mid, &self.params);
        let next: Vec<Complex64> = s0
            .coeffs()
            .iter()
            .zip(n1.coeffs())
            .zip(self.full.iter().zip(&self.half))
            .map(|((c, n), (ef, eh))| c * ef + n * (dt * eh))
            .collect();
        let s1 = Spectrum::from_raw(self.grid, next);
        let f1 = spectral::inverse(&s1);

        if let Some(i) = f1.values().iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericalBlowup {
                step,
                t,
                reason: format!("non-finite value at flat index {i}"),
            });
        }
        let (before, after) = (f.linf(), f1.linf());
        if before > 0.0 && after > BLOWUP_GROWTH * before {
            return Err(Error::NumericalBlowup {
                step,
                t,
                reason: format!("L-infinity grew from {before:e} to {after:e} in one step"),
            });
        }
        Ok((f1, s1))
    }
}

/// One step of the integrating-factor scheme with `params.dt`.
pub fn step_imex(f: &Field3, params: &Params) -> Result<Field3> {
    let cfl = cfl_dt(f, params);
    if params.dt > cfl {
        warn!("dt = {} exceeds the advective CFL bound {cfl}", params.dt);
    }
    Stepper::new(f.grid(), *params, params.dt).step(f, 0, 0.0).map(|r| r.0)
}

/// Number of steps and the uniform step landing exactly on `t_end`
/// (never larger than the requested `dt`).
pub fn step_schedule(t_end: f64, dt: f64) -> (usize, f64) {
    if t_end <= 0.0 {
        return (0, dt);
    }
    let n = ((t_end / dt) - 1e-9).ceil().max(1.0) as usize;
    (n, t_end / n as f64)
}

/// Stateful single-writer run loop.
#[derive(Debug, Clone)]
pub struct Simulation {
    stepper: Stepper,
    settings: RecordSettings,
    f: Field3,
    spectrum: Spectrum,
    mean0: f64,
    step: usize,
    n_steps: usize,
}

impl Simulation {
    /// Start a run from admissible data.
    pub fn new(f0: Field3, params: Params, t_end: f64, settings: RecordSettings) -> Result<Self> {
        params.validate()?;
        let report = check_admissible(&f0);
        if !report.ok {
            return Err(Error::AdmissibilityViolation {
                min_f: report.min_f,
                min_rho: report.min_rho,
                max_rho: report.max_rho,
            });
        }
        let mean0 = f0.mean();
        Ok(Self::resume(f0, params, t_end, settings, mean0, 0))
    }

    /// Restart at `step` from a stored field. `mean0` is ⟨f₀⟩ of the
    /// original initial data.
    pub fn resume(f: Field3, params: Params, t_end: f64, settings: RecordSettings, mean0: f64, step: usize) -> Self {
        let (n_steps, dt) = step_schedule(t_end, params.dt);
        let cfl = cfl_dt(&f, &params);
        if dt > cfl {
            warn!("dt = {dt} exceeds the advective CFL bound {cfl}");
        }
        let spectrum = spectral::forward(&f);
        Self {
            stepper: Stepper::new(f.grid(), params, dt),
            settings,
            f,
            spectrum,
            mean0,
            step,
            n_steps,
        }
    }

    pub fn field(&self) -> &Field3 {
        &self.f
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.stepper.dt
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.stepper.dt
    }

    pub fn mean0(&self) -> f64 {
        self.mean0
    }

    pub fn params(&self) -> &Params {
        &self.stepper.params
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.n_steps
    }

    pub fn record(&self) -> DiagnosticsRecord {
        DiagnosticsRecord::measure(self.time(), &self.f, &self.spectrum, self.mean0, self.settings)
    }

    /// Advance one step and return the record of the new time level.
    pub fn advance(&mut self) -> Result<DiagnosticsRecord> {
        let (f, s) = self.stepper.step(&self.f, self.step, self.time())?;
        self.f = f;
        self.spectrum = s;
        self.step += 1;
        Ok(self.record())
    }
}

/// Snapshots and per-step diagnostics of a run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    params: Params,
    dt: f64,
    mean0: f64,
    times: Vec<f64>,
    snapshot_steps: Vec<usize>,
    snapshots: Vec<Field3>,
    diagnostics: Vec<DiagnosticsRecord>,
}

impl Trajectory {
    /// Wrap externally produced snapshots for analysis; the diagnostics
    /// are measured at the snapshot times.
    pub fn from_snapshots(params: Params, times: Vec<f64>, snapshots: Vec<Field3>) -> Result<Self> {
        if times.len() != snapshots.len() || snapshots.is_empty() {
            return Err(Error::Validation {
                field: "snapshots".into(),
                reason: "need one time per snapshot and at least one snapshot".into(),
            });
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation {
                field: "times".into(),
                reason: "must be strictly increasing".into(),
            });
        }
        let mean0 = snapshots[0].mean();
        let settings = RecordSettings::default();
        let diagnostics = times
            .iter()
            .zip(&snapshots)
            .map(|(t, f)| DiagnosticsRecord::measure(*t, f, &spectral::forward(f), mean0, settings))
            .collect();
        Ok(Self {
            params,
            dt: params.dt,
            mean0,
            snapshot_steps: (0..times.len()).collect(),
            times,
            snapshots,
            diagnostics,
        })
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Step size actually used (lands exactly on t_end).
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn mean0(&self) -> f64 {
        self.mean0
    }

    /// Snapshot times, strictly increasing.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn snapshot_steps(&self) -> &[usize] {
        &self.snapshot_steps
    }

    pub fn snapshots(&self) -> &[Field3] {
        &self.snapshots
    }

    /// One record per time level, the initial one included.
    pub fn diagnostics(&self) -> &[DiagnosticsRecord] {
        &self.diagnostics
    }

    pub fn last(&self) -> &Field3 {
        self.snapshots.last().expect("trajectory is never empty")
    }

    /// (t, ‖f − ⟨f₀⟩‖) for every step.
    pub fn l2_to_const_series(&self) -> Vec<(f64, f64)> {
        self.diagnostics.iter().map(|r| (r.t, r.l2_to_const)).collect()
    }
}

/// Run options beyond the physical parameters.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub snapshot_stride: usize,
    pub record: RecordSettings,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            snapshot_stride: 10,
            record: RecordSettings::default(),
        }
    }
}

/// Repeated [`step_imex`] from `f0` to `t_end`, keeping every
/// `snapshot_stride`-th field (and always the last).
pub fn run(f0: &Field3, params: &Params, t_end: f64, snapshot_stride: usize) -> Result<Trajectory> {
    run_with(
        f0,
        params,
        t_end,
        RunOptions {
            snapshot_stride,
            ..RunOptions::default()
        },
    )
}

pub fn run_with(f0: &Field3, params: &Params, t_end: f64, opts: RunOptions) -> Result<Trajectory> {
    let stride = opts.snapshot_stride.max(1);
    let mut sim = Simulation::new(f0.clone(), *params, t_end, opts.record)?;
    let mut traj = Trajectory {
        params: *params,
        dt: sim.dt(),
        mean0: sim.mean0(),
        times: vec![0.0],
        snapshot_steps: vec![0],
        snapshots: vec![f0.clone()],
        diagnostics: vec![sim.record()],
    };
    while !sim.is_done() {
        let rec = sim.advance()?;
        let step = sim.step_index();
        if step % stride == 0 || sim.is_done() {
            traj.times.push(rec.t);
            traj.snapshot_steps.push(step);
            traj.snapshots.push(sim.field().clone());
        }
        traj.diagnostics.push(rec);
    }
    Ok(traj)
}

/// Constants (a, b, c) = (Dₑ·Pe⁻², Dₑ·Pe⁻¹, √Dₑ·Pe⁻¹): the function
/// f̃(t, x, θ) = f(at, bx, cθ) solves the equation with Pe = Dₑ = 1 on the
/// correspondingly stretched domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaleMap {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

pub fn rescale_problem(params: &Params) -> Result<RescaleMap> {
    if params.pe == 0.0 {
        return Err(Error::ZeroPeclet);
    }
    let (pe, de) = (params.pe, params.de);
    Ok(RescaleMap {
        a: de / (pe * pe),
        b: de / pe,
        c: de.sqrt() / pe,
    })
}

/// ℓ(r, δ) = √δ·r^{3/2} / (‖f‖_P + ‖V‖).
pub fn rescale_factor(r: f64, delta: f64, p_norm: f64, v_norm: f64) -> f64 {
    delta.sqrt() * r.powf(1.5) / (p_norm + v_norm)
}

/// Parabolic cylinder centre (t₀, ξ₀).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderCenter {
    pub t0: f64,
    pub xi0: [f64; 3],
}

/// f_r(τ, ·) = ℓ·f(t₀ + r²τ, ξ₀ + r·) sampled on a cell-centred grid of
/// [−1, 1]³, together with ∇_ζ f_r = ℓ·r·∇_ξ f.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledField {
    pub ell: f64,
    pub tau: f64,
    /// Points per axis of the ζ grid.
    pub n: usize,
    pub values: Vec<f64>,
    pub grads: [Vec<f64>; 3],
}

impl RescaledField {
    pub fn spacing(&self) -> f64 {
        2.0 / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    /// ζ coordinate of index j on each axis.
    pub fn zeta(&self, j: usize) -> f64 {
        zeta_point(j, self.n)
    }

    /// Cells whose centre lies in the open ball of `radius`.
    pub fn ball_mask(&self, radius: f64) -> Vec<bool> {
        let n = self.n;
        let mut out = Vec::with_capacity(n * n * n);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let (x, y, z) = (self.zeta(a), self.zeta(b), self.zeta(c));
                    out.push(x * x + y * y + z * z < radius * radius);
                }
            }
        }
        out
    }
}

fn zeta_point(j: usize, n: usize) -> f64 {
    -1.0 + (j as f64 + 0.5) * 2.0 / n as f64
}

/// Periodic trigonometric interpolation weights of an even-length grid
/// on (0, 2π): value at y = Σ_j f_j·K(y − x_j).
fn interpolation_matrix(n: usize, targets: &[f64]) -> Vec<f64> {
    let h = TWO_PI / n as f64;
    let half = n / 2;
    let mut m = Vec::with_capacity(targets.len() * n);
    for &y in targets {
        for j in 0..n {
            let s = y - j as f64 * h;
            let mut k_sum = 1.0 + (half as f64 * s).cos();
            for k in 1..half {
                k_sum += 2.0 * (k as f64 * s).cos();
            }
            m.push(k_sum / n as f64);
        }
    }
    m
}

/// Interpolate a field given on the `dims` grid along all three axes onto
/// `targets[axis]` points (separable, last axis first).
fn interpolate3(values: &[f64], dims: [usize; 3], targets: &[Vec<f64>; 3]) -> Vec<f64> {
    let [n0, n1, n2] = dims;
    let [m0, m1, m2] = [targets[0].len(), targets[1].len(), targets[2].len()];
    let w2 = interpolation_matrix(n2, &targets[2]);
    let w1 = interpolation_matrix(n1, &targets[1]);
    let w0 = interpolation_matrix(n0, &targets[0]);

    // (n0, n1, n2) → (n0, n1, m2)
    let mut a = vec![0.0; n0 * n1 * m2];
    for (line, out) in values.chunks_exact(n2).zip(a.chunks_exact_mut(m2)) {
        for (q, o) in out.iter_mut().enumerate() {
            *o = w2[q * n2..(q + 1) * n2].iter().zip(line).map(|(w, v)| w * v).sum();
        }
    }
    // (n0, n1, m2) → (n0, m1, m2)
    let mut b = vec![0.0; n0 * m1 * m2];
    for i in 0..n0 {
        for p in 0..m1 {
            for q in 0..m2 {
                let mut acc = 0.0;
                for j in 0..n1 {
                    acc += w1[p * n1 + j] * a[(i * n1 + j) * m2 + q];
                }
                b[(i * m1 + p) * m2 + q] = acc;
            }
        }
    }
    // (n0, m1, m2) → (m0, m1, m2)
    let mut c = vec![0.0; m0 * m1 * m2];
    for o in 0..m0 {
        for i in 0..n0 {
            let w = w0[o * n0 + i];
            let src = &b[i * m1 * m2..(i + 1) * m1 * m2];
            let dst = &mut c[o * m1 * m2..(o + 1) * m1 * m2];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
    c
}

/// Rescale a snapshot `f` taken at time `t` into the unit cylinder centred
/// at `center` with radius `r`. `p_norm` is ‖f‖_P over the run and
/// `v_norm` the drift norm (zero for this solver). `samples` is the number
/// of ζ points per axis.
#[allow(clippy::too_many_arguments)]
pub fn rescale_field(
    f: &Field3,
    t: f64,
    center: CylinderCenter,
    r: f64,
    delta: f64,
    v_norm: f64,
    p_norm: f64,
    samples: usize,
) -> Result<RescaledField> {
    let limit = 1.0f64.min((center.t0 / 2.0).sqrt());
    if !(r > 0.0 && r < limit) {
        return Err(Error::RadiusTooLarge { r, t0: center.t0 });
    }
    let tau = (t - center.t0) / (r * r);
    if !(-1.0 - 1e-12..=1e-12).contains(&tau) {
        return Err(Error::Validation {
            field: "t".into(),
            reason: format!("snapshot time {t} lies outside [t0 − r², t0]"),
        });
    }
    let ell = rescale_factor(r, delta, p_norm, v_norm);
    let grid = f.grid();
    let dims = [grid.n_x(), grid.n_x(), grid.n_theta()];
    let targets: [Vec<f64>; 3] = std::array::from_fn(|axis| {
        (0..samples)
            .map(|j| center.xi0[axis] + r * zeta_point(j, samples))
            .collect()
    });
    let s = spectral::forward(f);
    let values = interpolate3(f.values(), dims, &targets)
        .into_iter()
        .map(|v| ell * v)
        .collect();
    let grads = Axis::ALL.map(|a| {
        let d = spectral::inverse(&spectral::deriv_spectrum(&s, a));
        interpolate3(d.values(), dims, &targets)
            .into_iter()
            .map(|v| ell * r * v)
            .collect()
    });
    Ok(RescaledField {
        ell,
        tau: tau.clamp(-1.0, 0.0),
        n: samples,
        values,
        grads,
    })
}

/// Rescaled snapshots covering τ ∈ [−1, 0].
#[derive(Debug, Clone)]
pub struct RescaledCylinder {
    ell: f64,
    r: f64,
    slices: Vec<RescaledField>,
}

impl RescaledCylinder {
    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    pub fn slices(&self) -> &[RescaledField] {
        &self.slices
    }
}

/// Rescale every snapshot of `traj` with t ∈ [t₀ − r², t₀], using the
/// trajectory's own parabolic norm.
pub fn rescale_trajectory(
    traj: &Trajectory,
    center: CylinderCenter,
    r: f64,
    delta: f64,
    v_norm: f64,
    samples: usize,
) -> Result<RescaledCylinder> {
    let p_norm = diagnostics::parabolic_norm(traj);
    let lo = center.t0 - r * r;
    let slices = traj
        .times()
        .iter()
        .zip(traj.snapshots())
        .filter(|(t, _)| **t >= lo - 1e-12 && **t <= center.t0 + 1e-12)
        .map(|(t, f)| rescale_field(f, *t, center, r, delta, v_norm, p_norm, samples))
        .collect::<Result<Vec<_>>>()?;
    Ok(RescaledCylinder {
        ell: rescale_factor(r, delta, p_norm, v_norm),
        r,
        slices,
    })
}

/// Centre of the box, a convenient default for ξ₀.
pub const BOX_CENTER: [f64; 3] = [PI, PI, PI];
