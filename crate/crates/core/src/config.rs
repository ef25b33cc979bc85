//! JSON run configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::diagnostics::{RecordSettings, DEFAULT_K_MAX, DEFAULT_TAIL_FRACTION};
use crate::dynamics::cfl_dt;
use crate::error::{Error, Result};
use crate::grid::{make_grid, sample_initial, Field3, GridSpec, InitialDataSpec, Params};

/// Lower bound for an automatically chosen step.
pub const AUTO_DT_FLOOR: f64 = 1e-5;
/// Upper bound for an automatically chosen step, so that diffusion-only
/// runs still record a resolved time series.
pub const AUTO_DT_CAP: f64 = 0.01;

/// A fixed step or `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtSpec {
    Fixed(f64),
    Auto,
}

impl Serialize for DtSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            DtSpec::Fixed(v) => s.serialize_f64(*v),
            DtSpec::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for DtSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = DtSpec;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a positive number or \"auto\"")
            }
            fn visit_f64<E: serde::de::Error>(self, v: f64) -> std::result::Result<DtSpec, E> {
                Ok(DtSpec::Fixed(v))
            }
            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<DtSpec, E> {
                Ok(DtSpec::Fixed(v as f64))
            }
            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<DtSpec, E> {
                Ok(DtSpec::Fixed(v as f64))
            }
            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<DtSpec, E> {
                if v == "auto" {
                    Ok(DtSpec::Auto)
                } else {
                    Err(E::invalid_value(serde::de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_x: usize,
    pub n_theta: usize,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub pe: f64,
    pub de: f64,
    pub dt: DtSpec,
    #[serde(default = "default_true")]
    pub dealias: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationConfig {
    /// Analysis window [t_a, t_b].
    pub window: (f64, f64),
    #[serde(default = "default_k_max")]
    pub k_max: usize,
}

fn default_k_max() -> usize {
    DEFAULT_K_MAX
}

fn default_tail() -> f64 {
    DEFAULT_TAIL_FRACTION
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    /// Spectral-tail cutoff as a fraction of the grid size.
    #[serde(default = "default_tail")]
    pub tail_threshold: f64,
    #[serde(default)]
    pub truncation: Option<TruncationConfig>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            k_max: DEFAULT_K_MAX,
            tail_threshold: DEFAULT_TAIL_FRACTION,
            truncation: None,
        }
    }
}

impl DiagnosticsConfig {
    pub fn record_settings(&self) -> RecordSettings {
        RecordSettings {
            k_max: self.k_max,
            tail_fraction: self.tail_threshold,
        }
    }
}

fn default_stride() -> usize {
    10
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub params: ParamsConfig,
    pub initial: InitialDataSpec,
    pub t_end: f64,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    /// Steps between checkpoints; `None` or 0 disables them.
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
}

fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::Validation {
        field: field.into(),
        reason: reason.into(),
    }
}

fn finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite, got {v}")))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("line {} column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Structural and range checks that do not need the initial field.
    pub fn validate(&self) -> Result<()> {
        GridSpec::new(self.grid.n_x, self.grid.n_theta).map_err(|e| invalid("grid", e.to_string()))?;
        finite("params.pe", self.params.pe)?;
        finite("params.de", self.params.de)?;
        if self.params.de <= 0.0 {
            return Err(invalid("params.de", "must be positive"));
        }
        if let DtSpec::Fixed(dt) = self.params.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(invalid("params.dt", format!("must be positive and finite, got {dt}")));
            }
        }
        finite("t_end", self.t_end)?;
        if self.t_end <= 0.0 {
            return Err(invalid("t_end", "must be positive"));
        }
        if self.snapshot_stride == 0 {
            return Err(invalid("snapshot_stride", "must be at least 1"));
        }
        if self.diagnostics.k_max == 0 {
            return Err(invalid("diagnostics.k_max", "must be at least 1"));
        }
        let tail = self.diagnostics.tail_threshold;
        if !(tail.is_finite() && tail > 0.0 && tail < 0.5) {
            return Err(invalid("diagnostics.tail_threshold", "must lie in (0, 0.5)"));
        }
        if let Some(tr) = &self.diagnostics.truncation {
            let (a, b) = tr.window;
            finite("diagnostics.truncation.window", a)?;
            finite("diagnostics.truncation.window", b)?;
            if !(0.0 <= a && a < b && b <= self.t_end) {
                return Err(invalid("diagnostics.truncation.window", "need 0 ≤ t_a < t_b ≤ t_end"));
            }
        }
        match &self.initial {
            InitialDataSpec::Constant { m } => finite("initial.m", *m)?,
            InitialDataSpec::SingleMode { m, eps, .. } => {
                finite("initial.m", *m)?;
                finite("initial.eps", *eps)?;
            }
            InitialDataSpec::RandomBandlimited { m, eps, .. } => {
                finite("initial.m", *m)?;
                finite("initial.eps", *eps)?;
            }
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        make_grid(self.grid.n_x, self.grid.n_theta)
    }

    /// The initial field, without the admissibility check.
    pub fn initial_field(&self) -> Result<Field3> {
        sample_initial(&self.initial, self.grid_spec()?)
    }

    /// Physical parameters with `"auto"` resolved against `f0`.
    pub fn resolve_params(&self, f0: &Field3) -> Result<Params> {
        let p = &self.params;
        let dt = match p.dt {
            DtSpec::Fixed(dt) => dt,
            DtSpec::Auto => {
                let probe = Params::new(p.pe, p.de, 1.0, p.dealias)?;
                (0.5 * cfl_dt(f0, &probe)).clamp(AUTO_DT_FLOOR, AUTO_DT_CAP)
            }
        };
        Params::new(p.pe, p.de, dt, p.dealias)
    }

    /// SHA-256 over everything that determines the computed solution.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.checkpoint_every = None;
        let text = serde_json::to_string(&c).expect("config serializes");
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Read and validate a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    RunConfig::from_json(&text)
}
