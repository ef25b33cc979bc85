//! Scalar observables recorded along a run and post-hoc analyses of a
//! trajectory: the parabolic norm, truncation energies of the De Giorgi
//! iteration, the Lᵖ ladder, spectral-tail smoothing and the residual of
//! the density moment equation.

use serde::{Deserialize, Serialize};

use crate::dynamics::{RescaledCylinder, Trajectory};
use crate::error::{Error, Result};
use crate::grid::{Field3, BOX_VOLUME};
use crate::spectral::{self, Axis, Spectrum};

pub const DEFAULT_K_MAX: usize = 6;
pub const DEFAULT_TAIL_FRACTION: f64 = 0.25;

/// Observables of one time level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// Space-angle average ⟨f⟩.
    pub mass: f64,
    /// ‖f − ⟨f₀⟩‖_{L²(Υ)}.
    pub l2_to_const: f64,
    pub linf: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    /// ‖∇_ξ f‖_{L²(Υ)}.
    pub grad_l2: f64,
    pub spectral_tail: f64,
    /// ‖f‖_{L^{2^k}(Υ)}, k = 0..=k_max.
    pub lp_ladder: Vec<f64>,
}

/// Settings for the per-step record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordSettings {
    pub k_max: usize,
    pub tail_fraction: f64,
}

impl Default for RecordSettings {
    fn default() -> Self {
        Self {
            k_max: DEFAULT_K_MAX,
            tail_fraction: DEFAULT_TAIL_FRACTION,
        }
    }
}

impl DiagnosticsRecord {
    /// Measure `f` at time `t`; `mean0` is ⟨f₀⟩ and `spectrum` its transform.
    pub fn measure(t: f64, f: &Field3, spectrum: &Spectrum, mean0: f64, settings: RecordSettings) -> Self {
        let rho = spectral::compute_rho(f);
        Self {
            t,
            mass: mass(f),
            l2_to_const: f.l2_dist_to(mean0),
            linf: f.linf(),
            rho_min: rho.min(),
            rho_max: rho.max(),
            grad_l2: spectral::grad_energy(spectrum).sqrt(),
            spectral_tail: tail_of_spectrum(spectrum, settings.tail_fraction),
            lp_ladder: abs_lp_ladder(f.values(), f.grid().cell_volume(), settings.k_max),
        }
    }

    /// ‖f(t)‖_{L²(Υ)}, the k = 1 ladder entry.
    pub fn l2(&self) -> f64 {
        self.lp_ladder[1]
    }
}

/// ⟨f⟩, the space-angle average; the total integral is ⟨f⟩·(2π)³.
pub fn mass(f: &Field3) -> f64 {
    f.mean()
}

/// ‖|v|‖_{L^{2^k}} for k = 0..=k_max, scaled by max|v| so high powers
/// neither overflow nor underflow.
fn abs_lp_ladder(values: &[f64], cell: f64, k_max: usize) -> Vec<f64> {
    let top = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if top == 0.0 {
        return vec![0.0; k_max + 1];
    }
    (0..=k_max)
        .map(|k| {
            let p = (1u64 << k) as f64;
            let sum: f64 = values.iter().map(|v| (v.abs() / top).powf(p)).sum();
            top * (sum * cell).powf(1.0 / p)
        })
        .collect()
}

/// Negativity tolerance of `lp_ladder`.
const NEGATIVE_TOL: f64 = 1e-10;

/// ‖f‖_{L^{2^k}(Υ)} = Aₖ^{1/2^k} with Aₖ = ∫ f^{2^k}, for k = 0..=k_max.
/// Entries in (−1e−10, 0) are clipped to zero.
pub fn lp_ladder(f: &Field3, k_max: usize) -> Result<Vec<f64>> {
    if let Some((index, &value)) = f.values().iter().enumerate().find(|(_, &v)| v < -NEGATIVE_TOL) {
        return Err(Error::NegativeField { index, value });
    }
    let clipped: Vec<f64> = f.values().iter().map(|v| v.max(0.0)).collect();
    Ok(abs_lp_ladder(&clipped, f.grid().cell_volume(), k_max))
}

fn tail_of_spectrum(s: &Spectrum, fraction: f64) -> f64 {
    let grid = s.grid();
    let cut_x = fraction * grid.n_x() as f64;
    let cut_t = fraction * grid.n_theta() as f64;
    let mut total = 0.0;
    let mut tail = 0.0;
    for (flat, c) in s.coeffs().iter().enumerate().skip(1) {
        let e = c.norm_sqr();
        total += e;
        let [k1, k2, kt] = spectral::mode_of(grid, flat);
        if k1.abs() as f64 > cut_x || k2.abs() as f64 > cut_x || kt.abs() as f64 > cut_t {
            tail += e;
        }
    }
    // fluctuation energy at roundoff level of the mean counts as constant
    let zero = s.coeffs()[0].norm_sqr();
    if total <= 1e-26 * zero || total == 0.0 {
        0.0
    } else {
        tail / total
    }
}

/// Fraction of fluctuation energy in modes with some |kᵢ| > nᵢ/4.
pub fn spectral_tail(f: &Field3) -> f64 {
    tail_of_spectrum(&spectral::forward(f), DEFAULT_TAIL_FRACTION)
}

/// Same as [`spectral_tail`] with a configurable cutoff fraction.
pub fn spectral_tail_with(f: &Field3, fraction: f64) -> f64 {
    tail_of_spectrum(&spectral::forward(f), fraction)
}

/// Trapezoid rule over (t, value) pairs.
fn trapezoid(points: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut acc = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for (t, v) in points {
        if let Some((tp, vp)) = prev {
            acc += 0.5 * (t - tp) * (v + vp);
        }
        prev = Some((t, v));
    }
    acc
}

/// ‖f‖_P = (sup_t ‖f‖²_{L²} + ∫‖∇_ξ f‖²_{L²} dt)^{1/2} from the per-step
/// records; the time integral uses the trapezoid rule.
pub fn parabolic_norm(traj: &Trajectory) -> f64 {
    let records = traj.diagnostics();
    let sup = records.iter().map(|r| r.l2().powi(2)).fold(0.0, f64::max);
    let integral = trapezoid(records.iter().map(|r| (r.t, r.grad_l2 * r.grad_l2)));
    (sup + integral).sqrt()
}

/// Truncation levels Cₖ = ½(1 − 2⁻ᵏ).
pub fn truncation_level(k: usize) -> f64 {
    0.5 * (1.0 - 0.5f64.powi(k as i32))
}

/// Start times Tₖ = −½(1 + 2⁻ᵏ) of the shrinking windows on (−1, 0].
pub fn window_start(k: usize) -> f64 {
    -0.5 * (1.0 + 0.5f64.powi(k as i32))
}

/// Energies of the truncations (f − Cₖ)₊ on shrinking time windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationLadder {
    pub k_max: usize,
    pub levels: Vec<f64>,
    /// Start of the k-th window in the analysed time coordinate.
    pub window_starts: Vec<f64>,
    pub energies: Vec<f64>,
}

impl TruncationLadder {
    pub fn is_nonincreasing(&self) -> bool {
        self.energies.windows(2).all(|w| w[1] <= w[0])
    }
}

/// One time level of a field together with its gradient.
struct EnergySample<'a> {
    t: f64,
    values: &'a [f64],
    grads: [&'a [f64]; 3],
    cell: f64,
    mask: Option<Vec<bool>>,
}

impl EnergySample<'_> {
    /// (∫|(f − c)₊|², ∫|1_{f>c}∇f|²)
    fn truncated(&self, c: f64) -> (f64, f64) {
        let mut e = 0.0;
        let mut g = 0.0;
        for (i, &v) in self.values.iter().enumerate() {
            if v <= c || self.mask.as_ref().is_some_and(|m| !m[i]) {
                continue;
            }
            e += (v - c) * (v - c);
            g += self.grads.iter().map(|d| d[i] * d[i]).sum::<f64>();
        }
        (e * self.cell, g * self.cell)
    }
}

fn ladder_from_samples(samples: &[EnergySample<'_>], t_a: f64, t_b: f64, k_max: usize) -> Result<TruncationLadder> {
    let in_window = samples.iter().filter(|s| s.t >= t_a && s.t <= t_b).count();
    if in_window < k_max + 1 {
        return Err(Error::WindowTooShort {
            got: in_window,
            need: k_max + 1,
        });
    }
    let span = t_b - t_a;
    let mut levels = Vec::with_capacity(k_max + 1);
    let mut starts = Vec::with_capacity(k_max + 1);
    let mut energies = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let c = truncation_level(k);
        let start = t_b + window_start(k) * span;
        let parts: Vec<(f64, f64, f64)> = samples
            .iter()
            .filter(|s| s.t >= start - 1e-12 * span.abs() && s.t <= t_b)
            .map(|s| {
                let (e, g) = s.truncated(c);
                (s.t, e, g)
            })
            .collect();
        let sup = parts.iter().map(|p| p.1).fold(0.0, f64::max);
        let grad = trapezoid(parts.iter().map(|p| (p.0, p.2)));
        levels.push(c);
        starts.push(start);
        energies.push(sup + grad);
    }
    Ok(TruncationLadder {
        k_max,
        levels,
        window_starts: starts,
        energies,
    })
}

/// Truncation energies of a trajectory on `window`, with the unit time
/// interval [−1, 0] mapped affinely onto it and cut-offs ≡ 1 (the box is
/// periodic). Gradients of the truncations are 1_{f>Cₖ}·∇_ξ f.
pub fn truncation_energy(traj: &Trajectory, window: (f64, f64), k_max: usize) -> Result<TruncationLadder> {
    let (t_a, t_b) = window;
    let picked: Vec<(f64, &Field3)> = traj
        .times()
        .iter()
        .zip(traj.snapshots())
        .filter(|(t, _)| **t >= t_a && **t <= t_b)
        .map(|(t, f)| (*t, f))
        .collect();
    let grads: Vec<[Field3; 3]> = picked
        .iter()
        .map(|(_, f)| {
            let s = spectral::forward(f);
            Axis::ALL.map(|a| spectral::inverse(&spectral::deriv_spectrum(&s, a)))
        })
        .collect();
    let samples: Vec<EnergySample<'_>> = picked
        .iter()
        .zip(&grads)
        .map(|((t, f), g)| EnergySample {
            t: *t,
            values: f.values(),
            grads: [g[0].values(), g[1].values(), g[2].values()],
            cell: f.grid().cell_volume(),
            mask: None,
        })
        .collect();
    ladder_from_samples(&samples, t_a, t_b, k_max)
}

/// Truncation energies of a rescaled solution on the unit cylinder
/// (−1, 0] × B₁. With `shrink_balls` the k-th energy is restricted to the
/// ball of radius ½(1 + 2⁻ᵏ) instead of B₁.
pub fn truncation_energy_cylinder(
    cyl: &RescaledCylinder,
    k_max: usize,
    shrink_balls: bool,
) -> Result<TruncationLadder> {
    if !shrink_balls {
        return ladder_from_samples(&cylinder_samples(cyl, 1.0), -1.0, 0.0, k_max);
    }
    let mut out: Option<TruncationLadder> = None;
    for k in 0..=k_max {
        let radius = 0.5 * (1.0 + 0.5f64.powi(k as i32));
        let ladder = ladder_from_samples(&cylinder_samples(cyl, radius), -1.0, 0.0, k_max)?;
        let acc = out.get_or_insert_with(|| ladder.clone());
        acc.energies[k] = ladder.energies[k];
    }
    Ok(out.expect("k_max + 1 ≥ 1 iterations"))
}

fn cylinder_samples(cyl: &RescaledCylinder, radius: f64) -> Vec<EnergySample<'_>> {
    cyl.slices()
        .iter()
        .map(|s| EnergySample {
            t: s.tau,
            values: &s.values,
            grads: [&s.grads[0], &s.grads[1], &s.grads[2]],
            cell: s.cell_volume(),
            mask: Some(s.ball_mask(radius)),
        })
        .collect()
}

/// ‖∂ₜρ + Pe·div((1−ρ)p) − Dₑ·Δρ‖_{L²(Ω)} at every interior snapshot,
/// with ∂ₜρ from the three-point (second-order) difference on the
/// snapshot times. Returns (t, residual) pairs.
pub fn moment_residual(traj: &Trajectory) -> Result<Vec<(f64, f64)>> {
    let snaps = traj.snapshots();
    if snaps.len() < 3 {
        return Err(Error::TooFewSnapshots {
            got: snaps.len(),
            need: 3,
        });
    }
    let params = traj.params();
    let times = traj.times();
    let rhos: Vec<_> = snaps.iter().map(spectral::compute_rho).collect();
    let mut out = Vec::with_capacity(snaps.len() - 2);
    for i in 1..snaps.len() - 1 {
        let (hm, hp) = (times[i] - times[i - 1], times[i + 1] - times[i]);
        let rho = &rhos[i];
        let grid = rho.grid();
        let (p1, p2) = spectral::compute_p(&snaps[i]);
        let q1: Vec<f64> = rho
            .values()
            .iter()
            .zip(p1.values())
            .map(|(r, p)| (1.0 - r) * p)
            .collect();
        let q2: Vec<f64> = rho
            .values()
            .iter()
            .zip(p2.values())
            .map(|(r, p)| (1.0 - r) * p)
            .collect();
        let d1 = spectral::deriv2(&crate::grid::Field2::from_raw(grid, q1), Axis::X1);
        let d2 = spectral::deriv2(&crate::grid::Field2::from_raw(grid, q2), Axis::X2);
        let lap = spectral::laplacian2(rho);
        let sum: f64 = (0..grid.len2())
            .map(|j| {
                let (a, b, c) = (rhos[i - 1].values()[j], rho.values()[j], rhos[i + 1].values()[j]);
                let dt_rho = (hm * hm * (c - b) + hp * hp * (b - a)) / (hm * hp * (hm + hp));
                let r = dt_rho + params.pe * (d1.values()[j] + d2.values()[j]) - params.de * lap.values()[j];
                r * r
            })
            .sum();
        out.push((times[i], (sum * grid.cell_area()).sqrt()));
    }
    Ok(out)
}

/// Least-squares slope of −ln(value) against t over points in `window`.
pub fn fit_decay_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<f64> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|(t, _)| *t >= window.0 && *t <= window.1)
        .collect();
    if pts.len() < 10 {
        return Err(Error::TooFewPoints {
            got: pts.len(),
            need: 10,
        });
    }
    if let Some(&(t, value)) = pts
        .iter()
        .find(|(_, v)| v.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater))
    {
        return Err(Error::NonpositiveValue { t, value });
    }
    let n = pts.len() as f64;
    let t_mean = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = pts.iter().map(|p| -p.1.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, v) in &pts {
        let dt = t - t_mean;
        sxy += dt * (-v.ln() - y_mean);
        sxx += dt * dt;
    }
    Ok(sxy / sxx)
}

/// L² norm of a constant c on the box: c·(2π)^{3/2}.
pub fn constant_l2(c: f64) -> f64 {
    c.abs() * BOX_VOLUME.sqrt()
}
