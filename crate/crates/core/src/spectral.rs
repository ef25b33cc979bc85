//! Discrete Fourier machinery on the periodic box: transforms, spectral
//! derivatives, the 2/3 dealiasing projection, θ-moments and the discrete
//! Poincaré constant.
//!
//! Transforms are normalized so that the zero mode equals the grid mean:
//! `f̂_k = N⁻¹ Σ_j f_j e^{-ik·ξ_j}` and `f_j = Σ_k f̂_k e^{ik·ξ_j}`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::grid::{Field2, Field3, GridSpec};

/// Signed wavenumber of FFT index `i` on an axis of `n` points;
/// the Nyquist index maps to +n/2.
#[inline]
pub fn wavenumber(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Wavenumber to use for first derivatives: the Nyquist mode is dropped so
/// derivatives of real fields stay real.
#[inline]
fn deriv_wavenumber(i: usize, n: usize) -> f64 {
    if n.is_multiple_of(2) && i == n / 2 {
        0.0
    } else {
        wavenumber(i, n) as f64
    }
}

struct AxisPlans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Cached FFT plans for a 3D array of shape `dims` (last axis contiguous).
struct Fft3 {
    dims: [usize; 3],
    plans: [AxisPlans; 3],
}

fn plan_cache() -> &'static Mutex<HashMap<[usize; 3], Arc<Fft3>>> {
    static CACHE: OnceLock<Mutex<HashMap<[usize; 3], Arc<Fft3>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn fft3(dims: [usize; 3]) -> Arc<Fft3> {
    let mut cache = plan_cache().lock().expect("fft plan cache poisoned");
    cache
        .entry(dims)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            let plans = dims.map(|n| AxisPlans {
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            });
            Arc::new(Fft3 { dims, plans })
        })
        .clone()
}

impl Fft3 {
    fn process(&self, data: &mut [Complex64], forward: bool) {
        let [n0, n1, n2] = self.dims;
        debug_assert_eq!(data.len(), n0 * n1 * n2);
        let pick = |a: &AxisPlans| if forward { a.forward.clone() } else { a.inverse.clone() };

        // contiguous axis
        if n2 > 1 {
            let plan = pick(&self.plans[2]);
            data.par_chunks_mut(n2 * n1).for_each(|block| plan.process(block));
        }
        // middle axis: strided inside each contiguous (n1, n2) block
        if n1 > 1 {
            let plan = pick(&self.plans[1]);
            data.par_chunks_mut(n1 * n2).for_each(|block| {
                let mut line = vec![Complex64::new(0.0, 0.0); n1];
                for k in 0..n2 {
                    for j in 0..n1 {
                        line[j] = block[j * n2 + k];
                    }
                    plan.process(&mut line);
                    for j in 0..n1 {
                        block[j * n2 + k] = line[j];
                    }
                }
            });
        }
        // outer axis: transpose to (n1·n2, n0), transform, transpose back
        if n0 > 1 {
            let plan = pick(&self.plans[0]);
            let inner = n1 * n2;
            let mut t = vec![Complex64::new(0.0, 0.0); data.len()];
            t.par_chunks_mut(n0).enumerate().for_each(|(q, line)| {
                for i in 0..n0 {
                    line[i] = data[i * inner + q];
                }
                plan.process(line);
            });
            data.par_chunks_mut(inner).enumerate().for_each(|(i, block)| {
                for (q, v) in block.iter_mut().enumerate() {
                    *v = t[q * n0 + i];
                }
            });
        }
    }
}

fn forward_raw(dims: [usize; 3], values: &[f64]) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft3(dims).process(&mut data, true);
    let scale = 1.0 / data.len() as f64;
    data.iter_mut().for_each(|c| *c *= scale);
    data
}

fn inverse_raw(dims: [usize; 3], coeffs: &[Complex64]) -> Vec<f64> {
    let mut data = coeffs.to_vec();
    fft3(dims).process(&mut data, false);
    data.into_iter().map(|c| c.re).collect()
}

fn dims3(grid: GridSpec) -> [usize; 3] {
    [grid.n_x(), grid.n_x(), grid.n_theta()]
}

fn dims2(grid: GridSpec) -> [usize; 3] {
    [grid.n_x(), grid.n_x(), 1]
}

/// Fourier coefficients of a real grid field, same index layout as `Field3`.
/// Hermitian symmetry is implied, not enforced.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: GridSpec,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub(crate) fn from_raw(grid: GridSpec, coeffs: Vec<Complex64>) -> Self {
        debug_assert_eq!(coeffs.len(), grid.len3());
        Self { grid, coeffs }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient of integer mode `k`, taken modulo the grid.
    pub fn mode(&self, k: [i64; 3]) -> Complex64 {
        let nx = self.grid.n_x() as i64;
        let nt = self.grid.n_theta() as i64;
        let i = self.grid.index3(
            k[0].rem_euclid(nx) as usize,
            k[1].rem_euclid(nx) as usize,
            k[2].rem_euclid(nt) as usize,
        );
        self.coeffs[i]
    }

    /// Signed wavenumbers of a flat index.
    pub fn wavenumbers(&self, flat: usize) -> [i64; 3] {
        mode_of(self.grid, flat)
    }

    /// Σ |f̂_k|², i.e. the grid mean of f².
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Signed wavenumbers (k₁, k₂, k_θ) of a flat 3D index.
pub fn mode_of(grid: GridSpec, flat: usize) -> [i64; 3] {
    let nt = grid.n_theta();
    let nx = grid.n_x();
    let it = flat % nt;
    let rest = flat / nt;
    [wavenumber(rest / nx, nx), wavenumber(rest % nx, nx), wavenumber(it, nt)]
}

pub fn forward(f: &Field3) -> Spectrum {
    let grid = f.grid();
    Spectrum::from_raw(grid, forward_raw(dims3(grid), f.values()))
}

pub fn inverse(s: &Spectrum) -> Field3 {
    let grid = s.grid();
    Field3::from_raw(grid, inverse_raw(dims3(grid), &s.coeffs))
}

/// Differentiation axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X1,
    X2,
    Theta,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X1, Axis::X2, Axis::Theta];
}

/// Multiply a spectrum by i·k along `axis` (Nyquist dropped).
pub fn deriv_spectrum(s: &Spectrum, axis: Axis) -> Spectrum {
    let grid = s.grid();
    let (nx, nt) = (grid.n_x(), grid.n_theta());
    let coeffs = s
        .coeffs
        .iter()
        .enumerate()
        .map(|(flat, &c)| {
            let it = flat % nt;
            let rest = flat / nt;
            let k = match axis {
                Axis::X1 => deriv_wavenumber(rest / nx, nx),
                Axis::X2 => deriv_wavenumber(rest % nx, nx),
                Axis::Theta => deriv_wavenumber(it, nt),
            };
            c * Complex64::new(0.0, k)
        })
        .collect();
    Spectrum::from_raw(grid, coeffs)
}

pub fn deriv(f: &Field3, axis: Axis) -> Field3 {
    inverse(&deriv_spectrum(&forward(f), axis))
}

/// Symbol of the weighted Laplacian Dₑ(∂²ₓ₁ + ∂²ₓ₂) + ∂²_θ at a flat index.
#[inline]
pub fn laplacian_symbol(grid: GridSpec, flat: usize, de: f64) -> f64 {
    let [k1, k2, kt] = mode_of(grid, flat);
    -(de * (k1 * k1 + k2 * k2) as f64 + (kt * kt) as f64)
}

/// Dₑ·Δₓf + ∂²_θ f.
pub fn laplacian_xi(f: &Field3, de: f64) -> Field3 {
    let grid = f.grid();
    let mut s = forward(f);
    s.coeffs
        .iter_mut()
        .enumerate()
        .for_each(|(flat, c)| *c *= laplacian_symbol(grid, flat, de));
    inverse(&s)
}

/// Largest wavenumber kept by the 2/3 rule on an axis of `n` points.
#[inline]
pub fn dealias_cutoff(n: usize) -> i64 {
    (n / 3) as i64
}

/// Zero every mode with |kᵢ| > ⌊nᵢ/3⌋ on any axis.
pub fn dealias_in_place(s: &mut Spectrum) {
    let grid = s.grid;
    let cx = dealias_cutoff(grid.n_x());
    let ct = dealias_cutoff(grid.n_theta());
    for (flat, c) in s.coeffs.iter_mut().enumerate() {
        let [k1, k2, kt] = mode_of(grid, flat);
        if k1.abs() > cx || k2.abs() > cx || kt.abs() > ct {
            *c = Complex64::new(0.0, 0.0);
        }
    }
}

pub fn dealias(s: &Spectrum) -> Spectrum {
    let mut out = s.clone();
    dealias_in_place(&mut out);
    out
}

/// ρ(x) = ∫ f dθ by the periodic rectangle rule.
pub fn compute_rho(f: &Field3) -> Field2 {
    let grid = f.grid();
    let dth = grid.dtheta();
    let values = f
        .values()
        .chunks_exact(grid.n_theta())
        .map(|line| line.iter().sum::<f64>() * dth)
        .collect();
    Field2::from_raw(grid, values)
}

/// p(x) = ∫ f e(θ) dθ by the periodic rectangle rule.
pub fn compute_p(f: &Field3) -> (Field2, Field2) {
    let grid = f.grid();
    let dth = grid.dtheta();
    let trig: Vec<(f64, f64)> = (0..grid.n_theta())
        .map(|it| crate::grid::e_vec(grid.theta(it)))
        .collect();
    let (p1, p2): (Vec<f64>, Vec<f64>) = f
        .values()
        .chunks_exact(grid.n_theta())
        .map(|line| {
            let (mut a, mut b) = (0.0, 0.0);
            for (v, (c, s)) in line.iter().zip(&trig) {
                a += v * c;
                b += v * s;
            }
            (a * dth, b * dth)
        })
        .unzip();
    (Field2::from_raw(grid, p1), Field2::from_raw(grid, p2))
}

/// Spectrum of a spatial field (θ axis of length one).
pub fn forward2(g: &Field2) -> Vec<Complex64> {
    forward_raw(dims2(g.grid()), g.values())
}

pub fn inverse2(grid: GridSpec, coeffs: &[Complex64]) -> Field2 {
    Field2::from_raw(grid, inverse_raw(dims2(grid), coeffs))
}

/// ∂ₓ₁ or ∂ₓ₂ of a spatial field.
pub fn deriv2(g: &Field2, axis: Axis) -> Field2 {
    let grid = g.grid();
    let nx = grid.n_x();
    let mut s = forward2(g);
    for (flat, c) in s.iter_mut().enumerate() {
        let k = match axis {
            Axis::X1 => deriv_wavenumber(flat / nx, nx),
            Axis::X2 => deriv_wavenumber(flat % nx, nx),
            Axis::Theta => 0.0,
        };
        *c *= Complex64::new(0.0, k);
    }
    inverse2(grid, &s)
}

/// Δₓ of a spatial field.
pub fn laplacian2(g: &Field2) -> Field2 {
    let grid = g.grid();
    let nx = grid.n_x();
    let mut s = forward2(g);
    for (flat, c) in s.iter_mut().enumerate() {
        let k1 = wavenumber(flat / nx, nx);
        let k2 = wavenumber(flat % nx, nx);
        *c *= -((k1 * k1 + k2 * k2) as f64);
    }
    inverse2(grid, &s)
}

/// ‖∇_ξ f‖²_{L²(Υ)} from the spectrum via Parseval (Nyquist dropped as in `deriv`).
pub fn grad_energy(s: &Spectrum) -> f64 {
    let grid = s.grid();
    let (nx, nt) = (grid.n_x(), grid.n_theta());
    let sum: f64 = s
        .coeffs
        .iter()
        .enumerate()
        .map(|(flat, c)| {
            let it = flat % nt;
            let rest = flat / nt;
            let k1 = deriv_wavenumber(rest / nx, nx);
            let k2 = deriv_wavenumber(rest % nx, nx);
            let kt = deriv_wavenumber(it, nt);
            (k1 * k1 + k2 * k2 + kt * kt) * c.norm_sqr()
        })
        .sum();
    sum * crate::grid::BOX_VOLUME
}

/// C_P = λ₁^{-1/2}, λ₁ the smallest nonzero eigenvalue of −Δ_ξ on the grid's
/// Fourier modes.
pub fn poincare_constant(grid: GridSpec) -> f64 {
    let lambda1 = (0..grid.len3())
        .map(|flat| {
            let [k1, k2, kt] = mode_of(grid, flat);
            (k1 * k1 + k2 * k2 + kt * kt) as f64
        })
        .filter(|&l| l > 0.0)
        .fold(f64::INFINITY, f64::min);
    1.0 / lambda1.sqrt()
}
