//! Subcommand drivers behind the `activeflow` binary. Each `cmd_*`
//! function returns the process exit code: 0 ok, 1 verification failure,
//! 2 runtime error (reported as JSON on stderr).

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::{load_config, RunConfig};
use crate::diagnostics::{self, DiagnosticsRecord, TruncationLadder};
use crate::dynamics::{self, Simulation, Trajectory};
use crate::equilibrium::{self, EquilibriumReport};
use crate::error::{Error, Result};
use crate::grid::{Field3, Params};
use crate::io::{self, CheckpointMeta, CsvWriter, SnapshotHeader, SnapshotWriter};
use crate::oracle::{self, OracleConfig};
use crate::spectral;
use crate::verify::{self, VerifySettings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Residual tolerance of the `stationary` subcommand.
pub const STATIONARY_TOL: f64 = 1e-8;
/// L∞ threshold of the `oracle-compare` subcommand.
pub const ORACLE_TOL: f64 = 1e-3;

/// Print `e` as a JSON object on stderr and return the runtime-error code.
pub fn report_error(e: &Error) -> i32 {
    let body = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
    eprintln!("{body}");
    EXIT_ERROR
}

fn print_json<T: Serialize>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    // a closed pipe downstream is not an error of the run
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn exit_code(result: Result<i32>) -> i32 {
    result.unwrap_or_else(|e| report_error(&e))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimulateOptions {
    /// Continue from the checkpoint in the output directory.
    pub resume: bool,
    /// Stop after this step index without finishing the run.
    pub stop_after: Option<usize>,
}

/// Summary written to `summary.json` at the end of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub config_hash: String,
    pub steps: usize,
    pub dt: f64,
    pub t_final: f64,
    pub mean0: f64,
    pub max_relative_mass_drift: f64,
    pub l2_to_const_initial: f64,
    pub l2_to_const_final: f64,
    pub linf_max: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub kappa: f64,
    pub threshold: f64,
    pub is_small_pe: bool,
    pub measured_rate: Option<f64>,
    pub truncation: Option<TruncationLadder>,
}

fn summarize(
    cfg: &RunConfig,
    params: &Params,
    sim: &Simulation,
    records: &[DiagnosticsRecord],
    truncation: Option<TruncationLadder>,
) -> SimulationSummary {
    let first = &records[0];
    let last = records.last().expect("at least the initial record");
    let m = sim.mean0();
    let c_p = spectral::poincare_constant(sim.field().grid());
    let threshold = equilibrium::peclet_threshold(params, m, c_p);
    let series: Vec<(f64, f64)> = records.iter().map(|r| (r.t, r.l2_to_const)).collect();
    SimulationSummary {
        config_hash: cfg.hash(),
        steps: sim.step_index(),
        dt: sim.dt(),
        t_final: sim.time(),
        mean0: m,
        max_relative_mass_drift: records
            .iter()
            .map(|r| (r.mass - first.mass).abs() / first.mass.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max),
        l2_to_const_initial: first.l2_to_const,
        l2_to_const_final: last.l2_to_const,
        linf_max: records.iter().map(|r| r.linf).fold(0.0, f64::max),
        rho_min: records.iter().map(|r| r.rho_min).fold(f64::INFINITY, f64::min),
        rho_max: records.iter().map(|r| r.rho_max).fold(f64::NEG_INFINITY, f64::max),
        kappa: equilibrium::kappa(params, m, c_p),
        threshold,
        is_small_pe: params.pe.abs() < threshold,
        measured_rate: diagnostics::fit_decay_rate(&series, (0.5 * cfg.t_end, cfg.t_end)).ok(),
        truncation,
    }
}

/// Truncation energies from the snapshot files inside the configured window.
fn truncation_from_disk(cfg: &RunConfig, params: &Params, steps: &[usize]) -> Result<Option<TruncationLadder>> {
    let Some(tr) = cfg.diagnostics.truncation else {
        return Ok(None);
    };
    let mut times = Vec::new();
    let mut snaps = Vec::new();
    for &step in steps {
        let (h, f) = io::read_snapshot(&cfg.output_dir.join(io::snapshot_name(step)))?;
        if h.t >= tr.window.0 - 1e-12 && h.t <= tr.window.1 + 1e-12 {
            times.push(h.t);
            snaps.push(f);
        }
    }
    if snaps.is_empty() {
        return Err(Error::WindowTooShort {
            got: 0,
            need: tr.k_max + 1,
        });
    }
    let traj = Trajectory::from_snapshots(*params, times, snaps)?;
    Ok(Some(diagnostics::truncation_energy(&traj, tr.window, tr.k_max)?))
}

/// Run the configured simulation, writing the diagnostics CSV, snapshot
/// files, checkpoints and the summary. Returns `None` when stopped early.
pub fn simulate(cfg: &RunConfig, opts: SimulateOptions) -> Result<Option<SimulationSummary>> {
    let f0 = cfg.initial_field()?;
    let params = cfg.resolve_params(&f0)?;
    let hash = cfg.hash();
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(DIAGNOSTICS_FILE);
    let settings = cfg.diagnostics.record_settings();
    let mut writer = SnapshotWriter::spawn();

    let (mut sim, mut csv) = if opts.resume {
        let (meta, f) = io::read_checkpoint(dir, &hash)?;
        let sim = Simulation::resume(f, params, cfg.t_end, settings, meta.mean0, meta.step);
        (sim, CsvWriter::truncate_to(&csv_path, meta.step + 1)?)
    } else {
        let sim = Simulation::new(f0, params, cfg.t_end, settings)?;
        let mut csv = CsvWriter::create(&csv_path, settings.k_max)?;
        csv.push(&sim.record())?;
        let header = SnapshotHeader::new(sim.field().grid(), 0, 0.0, params);
        writer.snapshot(dir.join(io::snapshot_name(0)), &header, sim.field())?;
        (sim, csv)
    };

    let stride = cfg.snapshot_stride;
    let checkpoint_every = cfg.checkpoint_every.unwrap_or(0);
    while !sim.is_done() {
        if opts.stop_after.is_some_and(|s| sim.step_index() >= s) {
            csv.flush()?;
            writer.finish()?;
            return Ok(None);
        }
        let rec = sim.advance()?;
        csv.push(&rec)?;
        let step = sim.step_index();
        let header = SnapshotHeader::new(sim.field().grid(), step, sim.time(), params);
        if step % stride == 0 || sim.is_done() {
            writer.snapshot(dir.join(io::snapshot_name(step)), &header, sim.field())?;
        }
        if checkpoint_every > 0 && step % checkpoint_every == 0 {
            csv.flush()?;
            let meta = CheckpointMeta {
                config_hash: hash.clone(),
                step,
                t: sim.time(),
                mean0: sim.mean0(),
            };
            writer.checkpoint(dir.to_path_buf(), &header, sim.field(), meta)?;
        }
    }
    csv.flush()?;
    writer.finish()?;

    let records = io::read_csv(&csv_path)?;
    let n = sim.n_steps();
    let steps: Vec<usize> = (0..=n).filter(|s| s % stride == 0 || *s == n).collect();
    let truncation = truncation_from_disk(cfg, &params, &steps)?;
    let summary = summarize(cfg, &params, &sim, &records, truncation);
    fs::write(
        dir.join(SUMMARY_FILE),
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    Ok(Some(summary))
}

pub fn cmd_simulate(path: &Path, resume: bool) -> i32 {
    exit_code((|| {
        let cfg = load_config(path)?;
        if let Some(summary) = simulate(
            &cfg,
            SimulateOptions {
                resume,
                stop_after: None,
            },
        )? {
            print_json(&summary);
        }
        Ok(EXIT_OK)
    })())
}

/// Verification scale taken from a configuration: its grid, Pe, Dₑ and dt.
pub fn verify_settings(cfg: &RunConfig) -> Result<VerifySettings> {
    let f0 = cfg.initial_field()?;
    let params = cfg.resolve_params(&f0)?;
    Ok(VerifySettings {
        grid: cfg.grid_spec()?,
        pe: params.pe,
        de: params.de,
        dt: params.dt,
    })
}

pub fn cmd_verify(path: &Path) -> i32 {
    exit_code((|| {
        let settings = verify_settings(&load_config(path)?)?;
        println!(
            "verification at {}x{}x{}, Pe={}, De={}, dt={}",
            settings.grid.n_x(),
            settings.grid.n_x(),
            settings.grid.n_theta(),
            settings.pe,
            settings.de,
            settings.dt
        );
        let results = verify::run_all(&settings);
        for r in &results {
            println!("{r}");
        }
        Ok(if verify::all_passed(&results) {
            EXIT_OK
        } else {
            EXIT_FAILED
        })
    })())
}

fn initial_and_params(cfg: &RunConfig) -> Result<(Field3, Params)> {
    let f0 = cfg.initial_field()?;
    let params = cfg.resolve_params(&f0)?;
    Ok((f0, params))
}

pub fn decay_report(cfg: &RunConfig) -> Result<EquilibriumReport> {
    let (f0, params) = initial_and_params(cfg)?;
    equilibrium::verify_small_pe_decay(&f0, &params, cfg.t_end)
}

pub fn cmd_decay(path: &Path) -> i32 {
    exit_code((|| {
        print_json(&decay_report(&load_config(path)?)?);
        Ok(EXIT_OK)
    })())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryReport {
    pub converged: bool,
    pub residual: f64,
    pub t: f64,
    pub mean: f64,
    /// ‖f − ⟨f₀⟩‖∞ of the returned field.
    pub linf_to_mean: f64,
    pub tolerance: f64,
}

/// March to a stationary state for at most `t_end`; not converging is
/// reported, not treated as an error.
pub fn stationary_report(cfg: &RunConfig) -> Result<StationaryReport> {
    let (f0, params) = initial_and_params(cfg)?;
    let mean = f0.mean();
    match equilibrium::solve_stationary(&f0, &params, STATIONARY_TOL, cfg.t_end) {
        Ok(sol) => Ok(StationaryReport {
            converged: true,
            residual: sol.residual,
            t: sol.t,
            mean,
            linf_to_mean: sol.field.max_abs_diff(&Field3::constant(f0.grid(), mean)?),
            tolerance: STATIONARY_TOL,
        }),
        Err(Error::NotConverged { t_max, residual }) => Ok(StationaryReport {
            converged: false,
            residual,
            t: t_max,
            mean,
            linf_to_mean: f64::NAN,
            tolerance: STATIONARY_TOL,
        }),
        Err(e) => Err(e),
    }
}

pub fn cmd_stationary(path: &Path) -> i32 {
    exit_code((|| {
        print_json(&stationary_report(&load_config(path)?)?);
        Ok(EXIT_OK)
    })())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub n_x: usize,
    pub n_theta: usize,
    pub t_end: f64,
    pub dt: f64,
    pub dt_fine: f64,
    pub max_diff: f64,
    pub threshold: f64,
    pub oracle_mass_drift: f64,
    pub pass: bool,
}

/// The configured run with both solvers on the configured (small) grid.
pub fn oracle_report(cfg: &RunConfig) -> Result<OracleReport> {
    let (f0, params) = initial_and_params(cfg)?;
    let grid = f0.grid();
    let bound = OracleConfig::stability_bound(grid, &params);
    let ocfg = OracleConfig {
        grid,
        dt_fine: (params.dt / 50.0).min(bound),
    };
    let fd = oracle::fd_run(&f0, &params, cfg.t_end, &ocfg)?;
    let spectral_run = dynamics::run(&f0, &params, cfg.t_end, usize::MAX)?;
    let max_diff = spectral_run.last().max_abs_diff(&fd);
    Ok(OracleReport {
        n_x: grid.n_x(),
        n_theta: grid.n_theta(),
        t_end: cfg.t_end,
        dt: spectral_run.dt(),
        dt_fine: ocfg.dt_fine,
        max_diff,
        threshold: ORACLE_TOL,
        oracle_mass_drift: (fd.mean() - f0.mean()).abs() / f0.mean().abs().max(f64::MIN_POSITIVE),
        pass: max_diff <= ORACLE_TOL,
    })
}

pub fn cmd_oracle_compare(path: &Path) -> i32 {
    exit_code((|| {
        let report = oracle_report(&load_config(path)?)?;
        print_json(&report);
        Ok(if report.pass { EXIT_OK } else { EXIT_FAILED })
    })())
}
