//! Domain types: the grid on the space-angle box, solver parameters,
//! grid fields and admissible initial data.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral;

pub const TWO_PI: f64 = 2.0 * PI;

/// Volume of the space-angle box (0, 2π)³.
pub const BOX_VOLUME: f64 = TWO_PI * TWO_PI * TWO_PI;

/// Uniform periodic grid on (0,2π)² × (0,2π). Both spatial axes share `n_x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    n_x: usize,
    n_theta: usize,
}

impl GridSpec {
    pub fn new(n_x: usize, n_theta: usize) -> Result<Self> {
        for (name, n) in [("n_x", n_x), ("n_theta", n_theta)] {
            if n < 4 {
                return Err(Error::InvalidGrid(format!("{name} = {n} is below 4")));
            }
            if n % 2 != 0 {
                return Err(Error::InvalidGrid(format!("{name} = {n} is odd")));
            }
        }
        Ok(Self { n_x, n_theta })
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn dx(&self) -> f64 {
        TWO_PI / self.n_x as f64
    }

    pub fn dtheta(&self) -> f64 {
        TWO_PI / self.n_theta as f64
    }

    /// Quadrature weight of one cell of the 3D grid.
    pub fn cell_volume(&self) -> f64 {
        self.dx() * self.dx() * self.dtheta()
    }

    /// Quadrature weight of one cell of the spatial 2D grid.
    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dx()
    }

    pub fn len3(&self) -> usize {
        self.n_x * self.n_x * self.n_theta
    }

    pub fn len2(&self) -> usize {
        self.n_x * self.n_x
    }

    #[inline]
    pub fn index3(&self, i1: usize, i2: usize, it: usize) -> usize {
        (i1 * self.n_x + i2) * self.n_theta + it
    }

    #[inline]
    pub fn index2(&self, i1: usize, i2: usize) -> usize {
        i1 * self.n_x + i2
    }

    /// Coordinates (x₁, x₂, θ) of a flat 3D index.
    pub fn coords(&self, flat: usize) -> [f64; 3] {
        let it = flat % self.n_theta;
        let rest = flat / self.n_theta;
        let i2 = rest % self.n_x;
        let i1 = rest / self.n_x;
        [i1 as f64 * self.dx(), i2 as f64 * self.dx(), it as f64 * self.dtheta()]
    }

    pub fn theta(&self, it: usize) -> f64 {
        it as f64 * self.dtheta()
    }
}

/// Construct a grid, rejecting odd or too-small point counts.
pub fn make_grid(n_x: usize, n_theta: usize) -> Result<GridSpec> {
    GridSpec::new(n_x, n_theta)
}

/// Physical and numerical parameters of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Péclet number.
    pub pe: f64,
    /// Spatial diffusion coefficient.
    pub de: f64,
    pub dt: f64,
    pub dealias: bool,
}

impl Params {
    pub fn new(pe: f64, de: f64, dt: f64, dealias: bool) -> Result<Self> {
        let p = Self { pe, de, dt, dealias };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.pe.is_finite() {
            return Err(Error::InvalidParams {
                field: "pe",
                reason: format!("{} is not finite", self.pe),
            });
        }
        if !(self.de.is_finite() && self.de > 0.0) {
            return Err(Error::InvalidParams {
                field: "de",
                reason: format!("{} must be finite and positive", self.de),
            });
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParams {
                field: "dt",
                reason: format!("{} must be finite and positive", self.dt),
            });
        }
        Ok(())
    }

    pub fn with_dt(self, dt: f64) -> Self {
        Self { dt, ..self }
    }

    pub fn with_pe(self, pe: f64) -> Self {
        Self { pe, ..self }
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Scalar field f(x₁, x₂, θ), row-major with θ fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Field3 {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field3 {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len3() {
            return Err(Error::ShapeMismatch {
                expected: grid.len3(),
                got: values.len(),
            });
        }
        check_finite(&values)?;
        Ok(Self { grid, values })
    }

    /// Internal constructor for values produced by the solver itself;
    /// finiteness is checked where it matters (the stepper).
    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len3());
        Self { grid, values }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Result<Self> {
        Self::new(grid, vec![c; grid.len3()])
    }

    /// Sample a closure at every grid point.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64, f64) -> f64) -> Result<Self> {
        let values = (0..grid.len3())
            .map(|i| {
                let [x1, x2, th] = grid.coords(i);
                f(x1, x2, th)
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i1: usize, i2: usize, it: usize) -> f64 {
        self.values[self.grid.index3(i1, i2, it)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// ‖f‖_{L²(Υ)} by the rectangle rule.
    pub fn l2(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    /// ‖f − c‖_{L²(Υ)}.
    pub fn l2_dist_to(&self, c: f64) -> f64 {
        let s: f64 = self.values.iter().map(|v| (v - c) * (v - c)).sum();
        (s * self.grid.cell_volume()).sqrt()
    }

    pub fn max_abs_diff(&self, other: &Field3) -> f64 {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field3 {
        Field3::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn add_scaled(&self, other: &Field3, s: f64) -> Field3 {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        Field3::from_raw(
            self.grid,
            self.values.iter().zip(&other.values).map(|(a, b)| a + s * b).collect(),
        )
    }
}

/// Real field on the spatial torus (0,2π)².
#[derive(Debug, Clone, PartialEq)]
pub struct Field2 {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field2 {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len2() {
            return Err(Error::ShapeMismatch {
                expected: grid.len2(),
                got: values.len(),
            });
        }
        check_finite(&values)?;
        Ok(Self { grid, values })
    }

    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len2());
        Self { grid, values }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i1: usize, i2: usize) -> f64 {
        self.values[self.grid.index2(i1, i2)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// ‖g‖_{L²(Ω)} by the rectangle rule.
    pub fn l2(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_area()).sqrt()
    }
}

/// Self-propulsion direction e(θ) = (cos θ, sin θ).
pub fn e_vec(theta: f64) -> (f64, f64) {
    let t = theta.rem_euclid(TWO_PI);
    (t.cos(), t.sin())
}

/// Closed-form initial data families. `m` is the total mass ∫f₀ dξ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDataSpec {
    Constant {
        m: f64,
    },
    SingleMode {
        m: f64,
        eps: f64,
        k: [i64; 3],
    },
    RandomBandlimited {
        m: f64,
        eps: f64,
        max_mode: usize,
        seed: u64,
    },
}

impl InitialDataSpec {
    pub fn mass(&self) -> f64 {
        match *self {
            InitialDataSpec::Constant { m }
            | InitialDataSpec::SingleMode { m, .. }
            | InitialDataSpec::RandomBandlimited { m, .. } => m,
        }
    }
}

/// Positivity floor of random data, as a fraction of the mean.
const RANDOM_FLOOR: f64 = 0.01;

/// Sample the closed form of `spec` on `grid` and check admissibility.
pub fn make_initial(spec: &InitialDataSpec, grid: GridSpec) -> Result<Field3> {
    let f0 = sample_initial(spec, grid)?;
    let report = check_admissible(&f0);
    if !report.ok {
        return Err(Error::AdmissibilityViolation {
            min_f: report.min_f,
            min_rho: report.min_rho,
            max_rho: report.max_rho,
        });
    }
    Ok(f0)
}

/// Sample the closed form without the admissibility check.
pub fn sample_initial(spec: &InitialDataSpec, grid: GridSpec) -> Result<Field3> {
    match *spec {
        InitialDataSpec::Constant { m } => Field3::constant(grid, m / BOX_VOLUME),
        InitialDataSpec::SingleMode { m, eps, k } => {
            let base = m / BOX_VOLUME;
            let [k1, k2, kt] = k.map(|v| v as f64);
            Field3::from_fn(grid, |x1, x2, th| {
                base * (1.0 + eps * (k1 * x1 + k2 * x2 + kt * th).cos())
            })
        }
        InitialDataSpec::RandomBandlimited { m, eps, max_mode, seed } => {
            let limit = grid.n_x().min(grid.n_theta()) / 2;
            if max_mode == 0 || max_mode > limit {
                return Err(Error::Validation {
                    field: "initial.max_mode".into(),
                    reason: format!("must lie in 1..={limit} for this grid"),
                });
            }
            random_bandlimited(grid, m, eps, max_mode, seed)
        }
    }
}

/// Modes k ≠ 0 with |k|∞ ≤ K, one representative per ±k pair.
fn half_space_modes(max_mode: i64) -> Vec<[i64; 3]> {
    let mut out = Vec::new();
    for k1 in -max_mode..=max_mode {
        for k2 in -max_mode..=max_mode {
            for kt in -max_mode..=max_mode {
                let k = [k1, k2, kt];
                let first = k.iter().copied().find(|&c| c != 0);
                if matches!(first, Some(c) if c > 0) {
                    out.push(k);
                }
            }
        }
    }
    out
}

/// f₀ = m/(2π)³·(1 + ε'·g) with g = Σ aₖ cos(k·ξ + φₖ), Σ aₖ = 1, so |g| ≤ 1
/// independently of the grid; ε' = min(ε, 1 − floor) keeps f₀ ≥ floor·mean.
fn random_bandlimited(grid: GridSpec, m: f64, eps: f64, max_mode: usize, seed: u64) -> Result<Field3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes = half_space_modes(max_mode as i64);
    let draws: Vec<(f64, f64)> = modes
        .iter()
        .map(|_| (rng.gen::<f64>(), rng.gen::<f64>() * TWO_PI))
        .collect();
    let total: f64 = draws.iter().map(|d| d.0).sum();
    let eps_eff = eps.min(1.0 - RANDOM_FLOOR);
    let base = m / BOX_VOLUME;

    // Synthesize by placing the coefficients in the spectrum and inverting;
    // grid samples of e^{ik·ξ} depend only on k mod n, so this is exact.
    let (nx, nt) = (grid.n_x() as i64, grid.n_theta() as i64);
    let mut spec = vec![Complex64::new(0.0, 0.0); grid.len3()];
    spec[0] = Complex64::new(base, 0.0);
    for (k, (a, phi)) in modes.iter().zip(&draws) {
        let c = Complex64::from_polar(0.5 * base * eps_eff * a / total, *phi);
        for (sign, coef) in [(1, c), (-1, c.conj())] {
            let i1 = (sign * k[0]).rem_euclid(nx) as usize;
            let i2 = (sign * k[1]).rem_euclid(nx) as usize;
            let it = (sign * k[2]).rem_euclid(nt) as usize;
            spec[grid.index3(i1, i2, it)] += coef;
        }
    }
    let f = spectral::inverse(&spectral::Spectrum::from_raw(grid, spec));
    Field3::new(grid, f.into_values())
}

/// Outcome of the admissibility check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub min_f: f64,
    pub min_rho: f64,
    pub max_rho: f64,
    pub ok: bool,
}

/// f₀ ≥ 0 pointwise and 0 ≤ ρ₀ ≤ 1 pointwise.
pub fn check_admissible(f0: &Field3) -> AdmissibilityReport {
    let rho = spectral::compute_rho(f0);
    let min_f = f0.min();
    let min_rho = rho.min();
    let max_rho = rho.max();
    AdmissibilityReport {
        min_f,
        min_rho,
        max_rho,
        ok: min_f >= 0.0 && min_rho >= 0.0 && max_rho <= 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn grid_spacing() {
        let g = make_grid(32, 32).unwrap();
        assert_eq!(g.dx(), TWO_PI / 32.0);
        let g = make_grid(4, 4).unwrap();
        assert_relative_eq!(g.dx(), PI / 2.0);
    }

    #[test]
    fn grid_rejects_bad_counts() {
        assert!(matches!(make_grid(7, 8), Err(Error::InvalidGrid(_))));
        assert!(matches!(make_grid(8, 7), Err(Error::InvalidGrid(_))));
        assert!(matches!(make_grid(2, 8), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn e_vec_cardinal_angles() {
        let (c, s) = e_vec(0.0);
        assert_eq!((c, s), (1.0, 0.0));
        let (c, s) = e_vec(PI / 2.0);
        assert!(c.abs() < 1e-15 && (s - 1.0).abs() < 1e-15);
        let (c, s) = e_vec(PI);
        assert!((c + 1.0).abs() < 1e-15 && s.abs() < 1e-15);
        // reduced mod 2π
        let (c, _) = e_vec(PI + 4.0 * TWO_PI);
        assert!((c + 1.0).abs() < 1e-14);
    }

    #[test]
    fn e_vec_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let th = rng.gen_range(-100.0..100.0);
            let (c, s) = e_vec(th);
            assert!(((c * c + s * s).sqrt() - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn constant_initial_data() {
        let g = make_grid(32, 32).unwrap();
        let f = make_initial(&InitialDataSpec::Constant { m: 1.0 }, g).unwrap();
        assert!(f.values().iter().all(|&v| v == 1.0 / BOX_VOLUME));
    }

    #[test]
    fn single_mode_initial_data() {
        let g = make_grid(32, 32).unwrap();
        let spec = InitialDataSpec::SingleMode {
            m: 1.0,
            eps: 0.1,
            k: [1, 0, 0],
        };
        let f = make_initial(&spec, g).unwrap();
        assert_relative_eq!(f.min(), 0.9 / BOX_VOLUME, max_relative = 1e-14);
        assert_relative_eq!(f.get(0, 5, 3), 1.1 / BOX_VOLUME, max_relative = 1e-14);
        let x1 = 7.0 * g.dx();
        assert_relative_eq!(
            f.get(7, 2, 9),
            (1.0 + 0.1 * x1.cos()) / BOX_VOLUME,
            max_relative = 1e-14
        );
    }

    #[test]
    fn single_mode_too_large_amplitude_is_rejected() {
        let g = make_grid(16, 16).unwrap();
        let spec = InitialDataSpec::SingleMode {
            m: 1.0,
            eps: 1.5,
            k: [1, 0, 0],
        };
        assert!(matches!(
            make_initial(&spec, g),
            Err(Error::AdmissibilityViolation { .. })
        ));
    }

    #[test]
    fn admissibility_boundaries() {
        let g = make_grid(8, 8).unwrap();
        let f = Field3::constant(g, 1.0 / BOX_VOLUME).unwrap();
        let r = check_admissible(&f);
        assert!(r.ok);
        assert_relative_eq!(r.max_rho, 1.0 / (TWO_PI * TWO_PI), max_relative = 1e-14);

        // ρ ≡ 1 exactly is the admissible boundary case
        let f = Field3::constant(g, 1.0 / TWO_PI).unwrap();
        let r = check_admissible(&f);
        assert!((r.max_rho - 1.0).abs() < 1e-14);

        let f = Field3::constant(g, 1.01 / TWO_PI).unwrap();
        assert!(!check_admissible(&f).ok);

        let mut v = vec![1.0 / BOX_VOLUME; g.len3()];
        v[17] = -1e-9;
        let f = Field3::new(g, v).unwrap();
        assert!(!check_admissible(&f).ok);
    }

    #[test]
    fn field_rejects_non_finite() {
        let g = make_grid(4, 4).unwrap();
        let mut v = vec![0.0; g.len3()];
        v[3] = f64::NAN;
        assert!(matches!(Field3::new(g, v), Err(Error::NonFinite { index: 3 })));
        assert!(matches!(Field3::new(g, vec![0.0; 5]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn random_bandlimited_is_deterministic_and_admissible() {
        let g = make_grid(16, 16).unwrap();
        let spec = InitialDataSpec::RandomBandlimited {
            m: 1.0,
            eps: 5.0,
            max_mode: 8,
            seed: 42,
        };
        let a = make_initial(&spec, g).unwrap();
        let b = make_initial(&spec, g).unwrap();
        assert_eq!(a, b);
        assert!(a.min() >= 0.01 / BOX_VOLUME * (1.0 - 1e-12));
    }

    #[test]
    fn random_bandlimited_is_resolution_independent() {
        let spec = InitialDataSpec::RandomBandlimited {
            m: 2.0,
            eps: 0.5,
            max_mode: 2,
            seed: 3,
        };
        let coarse = make_initial(&spec, make_grid(8, 8).unwrap()).unwrap();
        let fine = make_initial(&spec, make_grid(16, 16).unwrap()).unwrap();
        let mut worst: f64 = 0.0;
        for i1 in 0..8 {
            for i2 in 0..8 {
                for it in 0..8 {
                    worst = worst.max((coarse.get(i1, i2, it) - fine.get(2 * i1, 2 * i2, 2 * it)).abs());
                }
            }
        }
        assert!(worst < 1e-16, "{worst}");
    }

    #[test]
    fn max_mode_above_nyquist_is_rejected() {
        let spec = InitialDataSpec::RandomBandlimited {
            m: 1.0,
            eps: 0.5,
            max_mode: 5,
            seed: 0,
        };
        assert!(make_initial(&spec, make_grid(8, 8).unwrap()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn generated_mass_matches_request(
            m in 0.01f64..30.0,
            eps in 0.0f64..0.9,
            k1 in -3i64..=3, k2 in -3i64..=3, kt in -3i64..=3,
            seed in 0u64..1000,
        ) {
            let g = make_grid(8, 8).unwrap();
            for spec in [
                InitialDataSpec::SingleMode { m, eps, k: [k1, k2, kt] },
                InitialDataSpec::RandomBandlimited { m, eps, max_mode: 3, seed },
            ] {
                let f = sample_initial(&spec, g).unwrap();
                let mass = f.mean() * BOX_VOLUME;
                prop_assert!((mass - m).abs() <= 1e-12 * m);
            }
        }

        #[test]
        fn constant_admissible_iff_mass_in_range(m in -5.0f64..(TWO_PI * TWO_PI + 5.0)) {
            let g = make_grid(4, 4).unwrap();
            let f = sample_initial(&InitialDataSpec::Constant { m }, g).unwrap();
            let expected = (0.0..=TWO_PI * TWO_PI).contains(&m);
            // exclude a rounding band at the upper edge
            prop_assume!((m - TWO_PI * TWO_PI).abs() > 1e-9);
            prop_assert_eq!(check_admissible(&f).ok, expected);
        }
    }
}
