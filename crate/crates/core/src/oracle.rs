//! Brute-force reference implementations, independent of the spectral
//! stepping path: flux-form finite differences with explicit Euler, the
//! exact Pe = 0 solution, and a dense eigenvalue computation of the
//! Poincaré constant.

use crate::error::{Error, Result};
use crate::grid::{Field3, GridSpec, Params, TWO_PI};
use crate::spectral;

/// Largest grid (points per axis) the oracle is meant for.
pub const MAX_ORACLE_N: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub grid: GridSpec,
    pub dt_fine: f64,
}

impl OracleConfig {
    /// Explicit-Euler stability bound dx²/(6·max(Dₑ, 1)).
    pub fn stability_bound(grid: GridSpec, params: &Params) -> f64 {
        let h = grid.dx().min(grid.dtheta());
        h * h / (6.0 * params.de.max(1.0))
    }

    /// A config at the stability bound scaled by `safety` ∈ (0, 1].
    pub fn stable(grid: GridSpec, params: &Params, safety: f64) -> Self {
        Self {
            grid,
            dt_fine: safety * Self::stability_bound(grid, params),
        }
    }

    pub fn validate(&self, params: &Params) -> Result<()> {
        if self.grid.n_x() > MAX_ORACLE_N || self.grid.n_theta() > MAX_ORACLE_N {
            return Err(Error::Validation {
                field: "oracle.grid".into(),
                reason: format!("at most {MAX_ORACLE_N} points per axis"),
            });
        }
        let bound = Self::stability_bound(self.grid, params);
        if !(self.dt_fine > 0.0 && self.dt_fine <= bound) {
            return Err(Error::Validation {
                field: "oracle.dt_fine".into(),
                reason: format!("{} must lie in (0, {bound}]", self.dt_fine),
            });
        }
        Ok(())
    }
}

/// Second-order centred differences in flux form. The advective flux
/// F = (1−ρ)f·e(θ) is averaged onto cell faces, so the differences
/// telescope and the grid sum of the result vanishes.
pub fn fd_rhs(f: &Field3, params: &Params) -> Field3 {
    let grid = f.grid();
    let (nx, nt) = (grid.n_x(), grid.n_theta());
    let (dx, dth) = (grid.dx(), grid.dtheta());
    let v = f.values();

    let mut rho = vec![0.0; nx * nx];
    for i1 in 0..nx {
        for i2 in 0..nx {
            let mut s = 0.0;
            for it in 0..nt {
                s += v[grid.index3(i1, i2, it)];
            }
            rho[i1 * nx + i2] = s * dth;
        }
    }
    let cos: Vec<f64> = (0..nt).map(|it| (it as f64 * dth).cos()).collect();
    let sin: Vec<f64> = (0..nt).map(|it| (it as f64 * dth).sin()).collect();
    let flux = |i1: usize, i2: usize, it: usize, comp: usize| {
        let w = (1.0 - rho[i1 * nx + i2]) * v[grid.index3(i1, i2, it)];
        if comp == 0 {
            w * cos[it]
        } else {
            w * sin[it]
        }
    };

    let up = |i: usize, n: usize| (i + 1) % n;
    let dn = |i: usize, n: usize| (i + n - 1) % n;
    let mut out = vec![0.0; grid.len3()];
    for i1 in 0..nx {
        for i2 in 0..nx {
            for it in 0..nt {
                let c = v[grid.index3(i1, i2, it)];
                let lap_x = (v[grid.index3(up(i1, nx), i2, it)] + v[grid.index3(dn(i1, nx), i2, it)] - 2.0 * c
                    + v[grid.index3(i1, up(i2, nx), it)]
                    + v[grid.index3(i1, dn(i2, nx), it)]
                    - 2.0 * c)
                    / (dx * dx);
                let lap_t =
                    (v[grid.index3(i1, i2, up(it, nt))] + v[grid.index3(i1, i2, dn(it, nt))] - 2.0 * c) / (dth * dth);

                let mut div = 0.0;
                if params.pe != 0.0 {
                    let here1 = flux(i1, i2, it, 0);
                    let east = 0.5 * (here1 + flux(up(i1, nx), i2, it, 0));
                    let west = 0.5 * (flux(dn(i1, nx), i2, it, 0) + here1);
                    let here2 = flux(i1, i2, it, 1);
                    let north = 0.5 * (here2 + flux(i1, up(i2, nx), it, 1));
                    let south = 0.5 * (flux(i1, dn(i2, nx), it, 1) + here2);
                    div = (east - west + north - south) / dx;
                }
                out[grid.index3(i1, i2, it)] = params.de * lap_x + lap_t - params.pe * div;
            }
        }
    }
    Field3::from_raw(grid, out)
}

/// Explicit Euler with [`fd_rhs`], landing exactly on `t_end`.
pub fn fd_run(f0: &Field3, params: &Params, t_end: f64, cfg: &OracleConfig) -> Result<Field3> {
    cfg.validate(params)?;
    if cfg.grid != f0.grid() {
        return Err(Error::Validation {
            field: "oracle.grid".into(),
            reason: "does not match the initial field".into(),
        });
    }
    if t_end <= 0.0 {
        return Ok(f0.clone());
    }
    let n = (t_end / cfg.dt_fine - 1e-9).ceil().max(1.0) as usize;
    let dt = t_end / n as f64;
    let mut f = f0.clone();
    for step in 0..n {
        let r = fd_rhs(&f, params);
        let next = f.add_scaled(&r, dt);
        if next.values().iter().any(|v| !v.is_finite()) || next.linf() > 10.0 * f.linf().max(f64::MIN_POSITIVE) {
            return Err(Error::NumericalBlowup {
                step,
                t: step as f64 * dt,
                reason: "explicit Euler oracle diverged".into(),
            });
        }
        f = next;
    }
    Ok(f)
}

/// Pe = 0 solution: every mode scaled by e^{−(Dₑ(k₁²+k₂²)+k_θ²)t}.
pub fn exact_linear_solution(f0: &Field3, de: f64, t: f64) -> Field3 {
    let grid = f0.grid();
    let mut s = spectral::forward(f0);
    for (flat, c) in s.coeffs_mut().iter_mut().enumerate() {
        *c *= (spectral::laplacian_symbol(grid, flat, de) * t).exp();
    }
    spectral::inverse(&s)
}

/// Dense 1D spectral second-derivative matrix on n points of (0, 2π),
/// negated: A_{jl} = n⁻¹ Σ_k k² cos(k(x_j − x_l)), k = −n/2+1..n/2.
fn dense_neg_d2(n: usize) -> Vec<f64> {
    let h = TWO_PI / n as f64;
    let half = n as i64 / 2;
    let mut a = vec![0.0; n * n];
    for j in 0..n {
        for l in 0..n {
            let s = (j as f64 - l as f64) * h;
            let mut acc = 0.0;
            for k in (1 - half)..=half {
                acc += (k * k) as f64 * (k as f64 * s).cos();
            }
            a[j * n + l] = acc / n as f64;
        }
    }
    a
}

/// Kronecker sum of per-axis operators for a tensor grid of shape `dims`.
fn kronecker_sum(dims: &[usize]) -> (usize, Vec<f64>) {
    let total: usize = dims.iter().product();
    let mut a = vec![0.0; total * total];
    let mats: Vec<Vec<f64>> = dims.iter().map(|&n| dense_neg_d2(n)).collect();
    let strides: Vec<usize> = (0..dims.len()).map(|d| dims[d + 1..].iter().product()).collect();
    for row in 0..total {
        for (d, &n) in dims.iter().enumerate() {
            let stride = strides[d];
            let idx = (row / stride) % n;
            let base = row - idx * stride;
            for l in 0..n {
                a[row * total + base + l * stride] += mats[d][idx * n + l];
            }
        }
    }
    (total, a)
}

const POWER_ITERATION_LIMIT: usize = 100_000;

/// Smallest nonzero eigenvalue of a dense symmetric positive semidefinite
/// operator whose kernel is the constants, by power iteration on
/// σI − A restricted to zero-mean vectors.
fn smallest_nonzero_eigenvalue(n: usize, a: &[f64]) -> Result<f64> {
    let sigma = (0..n)
        .map(|i| a[i * n..(i + 1) * n].iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let project = |v: &mut Vec<f64>| {
        let mean = v.iter().sum::<f64>() / n as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
    };
    // deterministic start with components on every mode
    let mut v: Vec<f64> = (0..n)
        .map(|i| ((i * 7919 % 104_729) as f64).sin() + 0.1 * i as f64)
        .collect();
    project(&mut v);
    let mut w = vec![0.0; n];
    for _ in 0..POWER_ITERATION_LIMIT {
        for i in 0..n {
            let row = &a[i * n..(i + 1) * n];
            w[i] = sigma * v[i] - row.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>();
        }
        let mu: f64 = w.iter().zip(&v).map(|(x, y)| x * y).sum();
        let resid = w.iter().zip(&v).map(|(x, y)| (x - mu * y).powi(2)).sum::<f64>().sqrt();
        std::mem::swap(&mut v, &mut w);
        project(&mut v);
        if resid < 1e-10 * sigma {
            return Ok(sigma - mu);
        }
    }
    Err(Error::IterationStall {
        iterations: POWER_ITERATION_LIMIT,
    })
}

/// C_P = λ₁^{-1/2} from the dense negative spectral Laplacian of the grid.
pub fn dense_poincare(grid: GridSpec) -> Result<f64> {
    if grid.len3() > 8 * 8 * 8 {
        return Err(Error::Validation {
            field: "grid".into(),
            reason: "dense Poincaré oracle is limited to 8³ points".into(),
        });
    }
    let (n, a) = kronecker_sum(&[grid.n_x(), grid.n_x(), grid.n_theta()]);
    Ok(1.0 / smallest_nonzero_eigenvalue(n, &a)?.sqrt())
}

/// λ₁ of the dense operator on a tensor grid of arbitrary dimension.
pub fn dense_first_eigenvalue(dims: &[usize]) -> Result<f64> {
    let (n, a) = kronecker_sum(dims);
    smallest_nonzero_eigenvalue(n, &a)
}
