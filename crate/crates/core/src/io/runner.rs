//! Run directories: configuration snapshot, diagnostics, fields and summary for the
//! coupled model and for Cahn–Hilliard runs with a prescribed velocity.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::cahn_hilliard::{ch_step, CHState};
use crate::coupled::{
    diagnostics_of, energy_budget, initial_phase, initial_state, initialize, run, DiagnosticsRecord, SimulationState,
    VelocityInit,
};
use crate::discretization::Discretization;
use crate::error::{NschError, Result};
use crate::materials::CheckStatus;
use crate::stokes::FlowState;

use super::config::{ConfigFormat, LoadedConfig, PrescribedVelocity, RunConfig};
use super::output::{write_fields, write_json, DiagnosticsWriter};

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub mode: String,
    pub steps: usize,
    pub t_final: f64,
    pub mass_bulk: f64,
    pub mass_surface: f64,
    pub mass_combined: f64,
    pub e_tot: f64,
    pub min_separation: f64,
    /// Largest increase E^{n+1} − E^n relative to |E^n| over all steps (negative when
    /// the energy decreased at every step).
    pub max_relative_energy_increase: f64,
    pub total_retries: usize,
    pub wall_seconds: f64,
    pub aborted: Option<String>,
    pub warnings: Vec<String>,
}

impl RunSummary {
    fn from_records(mode: &str, records: &[DiagnosticsRecord], wall: f64, warnings: Vec<String>) -> Self {
        let last = records.last().expect("initial record present");
        let max_inc = records
            .windows(2)
            .map(|w| (w[1].e_tot - w[0].e_tot) / w[0].e_tot.abs().max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max);
        Self {
            mode: mode.into(),
            steps: last.step,
            t_final: last.t,
            mass_bulk: last.mass_bulk,
            mass_surface: last.mass_surface,
            mass_combined: last.mass_combined,
            e_tot: last.e_tot,
            min_separation: records.iter().map(|r| r.separation).fold(f64::INFINITY, f64::min),
            max_relative_energy_increase: max_inc,
            total_retries: records.iter().map(|r| r.retries).sum(),
            wall_seconds: wall,
            aborted: None,
            warnings,
        }
    }
}

/// Creates `dir` and writes the configuration snapshots: the input text verbatim as
/// `config.<ext>` and the fully defaulted configuration as `config.resolved.toml`.
pub fn prepare_run_dir(dir: &Path, loaded: &LoadedConfig) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("config.{}", loaded.format.extension())), &loaded.source)?;
    std::fs::write(dir.join("config.resolved.toml"), loaded.config.to_string_as(ConfigFormat::Toml)?)?;
    write_json(&dir.join("validation.json"), &loaded.validation)?;
    Ok(())
}

fn validation_warnings(loaded: &LoadedConfig) -> Vec<String> {
    loaded
        .validation
        .checks
        .iter()
        .filter(|c| c.status == CheckStatus::Warn)
        .map(|c| format!("{}: {}", c.rule, c.detail))
        .collect()
}

struct Output<'a> {
    dir: &'a Path,
    stride: usize,
    disc: &'a Discretization,
    diag: DiagnosticsWriter,
}

impl Output<'_> {
    fn record(&mut self, rec: &DiagnosticsRecord, ch: &CHState, flow: &FlowState) -> Result<()> {
        self.diag.write(rec)?;
        if self.stride > 0 && rec.step % self.stride == 0 {
            write_fields(self.dir, rec.step, self.disc, ch, flow)?;
        }
        Ok(())
    }
}

fn finish(
    dir: &Path,
    mode: &str,
    records: &[DiagnosticsRecord],
    started: Instant,
    warnings: Vec<String>,
    outcome: Result<()>,
) -> Result<RunSummary> {
    let mut summary = RunSummary::from_records(mode, records, started.elapsed().as_secs_f64(), warnings);
    if let Err(e) = &outcome {
        summary.aborted = Some(e.to_string());
    }
    write_json(&dir.join("summary.json"), &summary)?;
    outcome.map(|_| summary)
}

/// Coupled run. Writes into `dir` and returns the summary; on abort everything up to the
/// failing step is on disk and the error is returned.
pub fn execute_run(loaded: &LoadedConfig, dir: &Path) -> Result<RunSummary> {
    let cfg = &loaded.config;
    prepare_run_dir(dir, loaded)?;
    let started = Instant::now();
    let disc = Discretization::new(cfg.mesh()?)?;
    let (state, init) = initial_state(&disc, &cfg.params, &cfg.initial, cfg.seed)?;
    let mut warnings = validation_warnings(loaded);
    warnings.extend(init.warnings);
    let mut out = Output { dir, stride: cfg.time.stride, disc: &disc, diag: DiagnosticsWriter::create(&dir.join("diagnostics.csv"))? };
    out.record(&state.diagnostics[0], &state.ch, &state.flow)?;
    let mut records = state.diagnostics.clone();
    let outcome = run(&disc, &cfg.params, &cfg.coupling(), state, cfg.time.n_steps, |s: &SimulationState, _| {
        let rec = s.diagnostics.last().expect("step appends a record");
        records.push(rec.clone());
        out.record(rec, &s.ch, &s.flow)
    })
    .map(|_| ());
    finish(dir, "run", &records, started, warnings, outcome)
}

/// Cahn–Hilliard alone, transported by a fixed velocity (zero or a rigid rotation).
pub fn execute_ch_only(loaded: &LoadedConfig, dir: &Path) -> Result<RunSummary> {
    let cfg = &loaded.config;
    prepare_run_dir(dir, loaded)?;
    let started = Instant::now();
    let disc = Discretization::new(cfg.mesh()?)?;
    let (ch0, flow, warnings) = ch_only_initial(cfg, &disc)?;
    let mut all_warnings = validation_warnings(loaded);
    all_warnings.extend(warnings);
    let mut out = Output { dir, stride: cfg.time.stride, disc: &disc, diag: DiagnosticsWriter::create(&dir.join("diagnostics.csv"))? };
    let mut records = vec![ch_only_record(&disc, cfg, &ch0, &flow, 0, 0.0)?];
    out.record(&records[0], &ch0, &flow)?;
    let mut ch = ch0;
    let mut outcome = Ok(());
    for step in 1..=cfg.time.n_steps {
        match ch_only_step(&disc, cfg, &ch, &flow) {
            Ok((next, dt, iterations, retries)) => {
                let mut rec = ch_only_record(&disc, cfg, &next, &flow, step, dt)?;
                rec.newton_iterations = iterations;
                rec.retries = retries;
                rec.budget_residual = energy_budget(records.last().expect("initial record"), &rec, dt);
                out.record(&rec, &next, &flow)?;
                records.push(rec);
                ch = next;
            }
            Err(e) => {
                outcome = Err(NschError::RunAborted { step, reason: e.to_string() });
                break;
            }
        }
    }
    finish(dir, "ch-only", &records, started, all_warnings, outcome)
}

fn ch_only_initial(cfg: &RunConfig, disc: &Discretization) -> Result<(CHState, FlowState, Vec<String>)> {
    let flow = match cfg.experiment.prescribed_velocity {
        PrescribedVelocity::Zero => FlowState::at_rest(disc),
        PrescribedVelocity::RigidRotation { omega } => {
            crate::coupled::initial_velocity(disc, &VelocityInit::RigidRotation { omega }, cfg.seed)?
        }
    };
    let phase = initial_phase(disc, &cfg.initial.phase, cfg.seed)?;
    let (state, init) = initialize(disc, &cfg.params, phase, FlowState::at_rest(disc))?;
    Ok((state.ch, flow, init.warnings))
}

/// Diagnostics of a Cahn–Hilliard state; the prescribed velocity is not part of the
/// energy, so the kinetic and flow-dissipation columns are zero.
fn ch_only_record(
    disc: &Discretization,
    cfg: &RunConfig,
    ch: &CHState,
    flow: &FlowState,
    step: usize,
    dt: f64,
) -> Result<DiagnosticsRecord> {
    let mut rec = diagnostics_of(disc, ch, &FlowState::at_rest(disc), &cfg.params, step, dt)?;
    rec.courant = crate::stokes::courant_number(disc, flow, dt);
    Ok(rec)
}

fn ch_only_step(
    disc: &Discretization,
    cfg: &RunConfig,
    ch: &CHState,
    flow: &FlowState,
) -> Result<(CHState, f64, usize, usize)> {
    let coupling = cfg.coupling();
    let mut dt = cfg.time.dt;
    let mut retries = 0;
    loop {
        let mut step_cfg = crate::cahn_hilliard::CHStepConfig::new(dt, coupling.scheme);
        step_cfg.newton_tol = coupling.newton_tol;
        step_cfg.max_newton = coupling.max_newton;
        match ch_step(disc, ch, &flow.v, flow.omega, &cfg.params, &step_cfg) {
            Ok((next, stats)) => return Ok((next, dt, stats.iterations, retries)),
            Err(e @ (NschError::StepFailure { .. } | NschError::Barrier(_))) => {
                if retries >= coupling.max_retries {
                    return Err(e);
                }
                retries += 1;
                dt *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
}

/// `dir` when given, otherwise `<output root>/<name>`.
pub fn resolve_run_dir(explicit: Option<&Path>, config: &RunConfig, name: &str) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| super::output::default_output_root().join(name))
}
