//! Time loop of the full model: a Cahn–Hilliard step transported by the current
//! velocity, then a momentum step driven by the new phase and chemical potentials.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cahn_hilliard::{
    ch_dissipation, ch_step, constitutive_solve, free_energy, mass_functionals, CHState, CHStepConfig, ChScheme,
};
use crate::discretization::Discretization;
use crate::error::{NschError, Result};
use crate::random::SmoothRandomFunction;
use crate::spaces::{BulkSurfaceField, BulkVectorField};
use crate::stokes::{
    flow_dissipation, kinetic_energy, ns_step, project_velocity, FlowState, MomentumForm, NsConfig, StokesVariant,
};
use crate::materials::ModelParameters;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub dt: f64,
    #[serde(default)]
    pub scheme: ChScheme,
    #[serde(default)]
    pub momentum: MomentumForm,
    #[serde(default)]
    pub stokes_variant: StokesVariant,
    /// Number of Cahn–Hilliard/momentum sweeps per step; sweeps after the first re-solve the
    /// Cahn–Hilliard step with the latest velocity.
    #[serde(default = "default_sweeps")]
    pub picard_sweeps: usize,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_newton_max")]
    pub max_newton: usize,
}

fn default_sweeps() -> usize {
    1
}
fn default_retries() -> usize {
    5
}
fn default_newton_tol() -> f64 {
    1e-10
}
fn default_newton_max() -> usize {
    50
}

impl CouplingConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            scheme: ChScheme::default(),
            momentum: MomentumForm::default(),
            stokes_variant: StokesVariant::default(),
            picard_sweeps: default_sweeps(),
            max_retries: default_retries(),
            newton_tol: default_newton_tol(),
            max_newton: default_newton_max(),
        }
    }

    fn ch_config(&self, dt: f64) -> CHStepConfig {
        let mut c = CHStepConfig::new(dt, self.scheme);
        c.newton_tol = self.newton_tol;
        c.max_newton = self.max_newton;
        c
    }
}

/// One row of diagnostics.csv; the column order is the field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub kinetic_bulk: f64,
    pub kinetic_surface: f64,
    pub free_bulk: f64,
    pub free_surface: f64,
    pub free_penalty: f64,
    pub e_tot: f64,
    pub mass_bulk: f64,
    pub mass_surface: f64,
    pub mass_combined: f64,
    pub diss_viscous: f64,
    pub diss_friction: f64,
    pub diss_mobility_bulk: f64,
    pub diss_mobility_surface: f64,
    pub diss_exchange: f64,
    pub separation: f64,
    pub newton_iterations: usize,
    pub retries: usize,
    pub courant: f64,
    pub budget_residual: f64,
    /// Wall-clock seconds spent in sparse factorizations; kept out of the CSV.
    #[serde(skip)]
    pub solve_seconds: f64,
}

impl DiagnosticsRecord {
    pub const COLUMNS: [&'static str; 22] = [
        "step",
        "t",
        "dt",
        "kinetic_bulk",
        "kinetic_surface",
        "free_bulk",
        "free_surface",
        "free_penalty",
        "e_tot",
        "mass_bulk",
        "mass_surface",
        "mass_combined",
        "diss_viscous",
        "diss_friction",
        "diss_mobility_bulk",
        "diss_mobility_surface",
        "diss_exchange",
        "separation",
        "newton_iterations",
        "retries",
        "courant",
        "budget_residual",
    ];

    pub fn dissipation_total(&self) -> f64 {
        self.diss_viscous + self.diss_friction + self.diss_mobility_bulk + self.diss_mobility_surface + self.diss_exchange
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    /// Numeric values in column order.
    pub fn values(&self) -> [f64; 22] {
        [
            self.step as f64,
            self.t,
            self.dt,
            self.kinetic_bulk,
            self.kinetic_surface,
            self.free_bulk,
            self.free_surface,
            self.free_penalty,
            self.e_tot,
            self.mass_bulk,
            self.mass_surface,
            self.mass_combined,
            self.diss_viscous,
            self.diss_friction,
            self.diss_mobility_bulk,
            self.diss_mobility_surface,
            self.diss_exchange,
            self.separation,
            self.newton_iterations as f64,
            self.retries as f64,
            self.courant,
            self.budget_residual,
        ]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationState {
    pub ch: CHState,
    pub flow: FlowState,
    pub step: usize,
    pub diagnostics: Vec<DiagnosticsRecord>,
}

/// Evaluates energies, masses and dissipation of a state.
pub fn diagnostics_of(
    disc: &Discretization,
    ch: &CHState,
    flow: &FlowState,
    params: &ModelParameters,
    step: usize,
    dt: f64,
) -> Result<DiagnosticsRecord> {
    let (kb, ks) = kinetic_energy(disc, flow, &ch.phase, params);
    let fe = free_energy(disc, ch, params)?;
    let m = mass_functionals(disc, ch, params);
    let (dv, df) = flow_dissipation(disc, flow, &ch.phase, &params.coefficients);
    let dc = ch_dissipation(disc, ch, params);
    Ok(DiagnosticsRecord {
        step,
        t: ch.t,
        dt,
        kinetic_bulk: kb,
        kinetic_surface: ks,
        free_bulk: fe.bulk,
        free_surface: fe.surface,
        free_penalty: fe.penalty,
        e_tot: kb + ks + fe.total,
        mass_bulk: m.bulk,
        mass_surface: m.surface,
        mass_combined: m.combined,
        diss_viscous: dv,
        diss_friction: df,
        diss_mobility_bulk: dc.bulk,
        diss_mobility_surface: dc.surface,
        diss_exchange: dc.exchange,
        separation: ch.phase.separation_margin(),
        newton_iterations: 0,
        retries: 0,
        courant: 0.0,
        budget_residual: 0.0,
        solve_seconds: 0.0,
    })
}

/// (E^{n+1} − E^n)/dt + dissipation at t^{n+1}.
pub fn energy_budget(prev: &DiagnosticsRecord, next: &DiagnosticsRecord, dt: f64) -> f64 {
    (next.e_tot - prev.e_tot) / dt + next.dissipation_total()
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct StepReport {
    pub dt_used: f64,
    pub retries: usize,
    pub newton_iterations: usize,
    pub courant: f64,
    pub cfl_warning: bool,
    pub flux_terms: bool,
    pub solve_seconds: f64,
}

fn attempt(
    disc: &Discretization,
    state: &SimulationState,
    params: &ModelParameters,
    cfg: &CouplingConfig,
    dt: f64,
) -> Result<(CHState, FlowState, StepReport)> {
    let ch_cfg = cfg.ch_config(dt);
    let ns_cfg = NsConfig { dt, form: cfg.momentum, variant: cfg.stokes_variant };
    let mut report = StepReport { dt_used: dt, ..Default::default() };
    let mut velocity = (state.flow.v.clone(), state.flow.omega);
    let mut out = None;
    for _ in 0..cfg.picard_sweeps.max(1) {
        let (ch, stats) = ch_step(disc, &state.ch, &velocity.0, velocity.1, params, &ch_cfg)?;
        report.newton_iterations += stats.iterations;
        report.solve_seconds += stats.solve_seconds;
        let (flow, ns) = ns_step(disc, &state.flow, &state.ch.phase, &ch, params, &ns_cfg)?;
        report.courant = ns.courant;
        report.cfl_warning = ns.cfl_warning;
        report.flux_terms = ns.flux_terms;
        report.solve_seconds += ns.solve_seconds;
        velocity = (flow.v.clone(), flow.omega);
        out = Some((ch, flow));
    }
    let (ch, flow) = out.expect("at least one sweep");
    Ok((ch, flow, report))
}

/// One coupled step; the step size is halved after a Cahn–Hilliard failure, at most
/// `max_retries` times.
pub fn nsch_step(
    disc: &Discretization,
    state: &SimulationState,
    params: &ModelParameters,
    cfg: &CouplingConfig,
) -> Result<(SimulationState, StepReport)> {
    let mut dt = cfg.dt;
    let mut retries = 0;
    let (ch, flow, mut report) = loop {
        match attempt(disc, state, params, cfg, dt) {
            Ok(r) => break r,
            Err(e @ (NschError::StepFailure { .. } | NschError::Barrier(_))) => {
                if retries >= cfg.max_retries {
                    return Err(NschError::RunAborted {
                        step: state.step + 1,
                        reason: format!("{e} after {retries} step-size halvings"),
                    });
                }
                retries += 1;
                dt *= 0.5;
            }
            Err(e) => return Err(e),
        }
    };
    report.retries = retries;
    let mut rec = diagnostics_of(disc, &ch, &flow, params, state.step + 1, dt)?;
    rec.newton_iterations = report.newton_iterations;
    rec.retries = retries;
    rec.courant = report.courant;
    rec.solve_seconds = report.solve_seconds;
    if let Some(prev) = state.diagnostics.last() {
        rec.budget_residual = energy_budget(prev, &rec, dt);
    }
    if !rec.is_finite() {
        return Err(NschError::RunAborted { step: rec.step, reason: "non-finite diagnostics".into() });
    }
    let mut diagnostics = state.diagnostics.clone();
    diagnostics.push(rec);
    Ok((SimulationState { ch, flow, step: state.step + 1, diagnostics }, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PhaseInit {
    /// Smooth random field rescaled to max |φ| = amplitude; ψ is the trace of φ.
    SmoothRandom {
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_modes")]
        modes: usize,
        #[serde(default = "default_wavenumber")]
        max_wavenumber: f64,
    },
    Constant { bulk: f64, surface: f64 },
}

fn default_amplitude() -> f64 {
    0.9
}
fn default_modes() -> usize {
    8
}
fn default_wavenumber() -> f64 {
    4.0
}

impl Default for PhaseInit {
    fn default() -> Self {
        PhaseInit::SmoothRandom { amplitude: default_amplitude(), modes: default_modes(), max_wavenumber: default_wavenumber() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum VelocityInit {
    #[default]
    Zero,
    RigidRotation { omega: f64 },
    /// Smooth random field of the given maximum size, projected.
    SmoothRandom { amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InitialData {
    #[serde(default)]
    pub phase: PhaseInit,
    #[serde(default)]
    pub velocity: VelocityInit,
}

pub fn initial_phase(disc: &Discretization, init: &PhaseInit, seed: u64) -> Result<BulkSurfaceField> {
    match *init {
        PhaseInit::Constant { bulk, surface } => Ok(BulkSurfaceField::constant(&disc.mesh, bulk, surface)),
        PhaseInit::SmoothRandom { amplitude, modes, max_wavenumber } => {
            if !(amplitude > 0.0 && amplitude < 1.0) {
                return Err(NschError::InvalidInput(format!("initial amplitude {amplitude} outside (0, 1)")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = SmoothRandomFunction::new(&mut rng, modes, max_wavenumber);
            let raw: Vec<f64> = disc.mesh.vertices.iter().map(|&x| f.eval(x)).collect();
            let scale = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let phi: Vec<f64> = raw.iter().map(|v| amplitude * v / scale).collect();
            let psi = disc.boundary_vertices().iter().map(|&v| phi[v]).collect();
            Ok(BulkSurfaceField::new(phi, psi))
        }
    }
}

pub fn initial_velocity(disc: &Discretization, init: &VelocityInit, seed: u64) -> Result<FlowState> {
    let v = match *init {
        VelocityInit::Zero => return Ok(FlowState::at_rest(disc)),
        VelocityInit::RigidRotation { omega } => BulkVectorField::from_fn(&disc.mesh, |x| [-omega * x[1], omega * x[0]]),
        VelocityInit::SmoothRandom { amplitude } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
            let fx = SmoothRandomFunction::new(&mut rng, 6, 3.0);
            let fy = SmoothRandomFunction::new(&mut rng, 6, 3.0);
            let raw = BulkVectorField::from_fn(&disc.mesh, |x| [fx.eval(x), fy.eval(x)]);
            let s = raw.max_abs();
            BulkVectorField { values: raw.values.iter().map(|v| [amplitude * v[0] / s, amplitude * v[1] / s]).collect() }
        }
    };
    project_velocity(disc, &v)
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct InitReport {
    pub identification_defect: f64,
    pub projected_chemical_potential: bool,
    pub warnings: Vec<String>,
}

/// State at t = 0 with (μ, θ) from the constitutive relations and a projected velocity.
pub fn initialize(
    disc: &Discretization,
    params: &ModelParameters,
    phase: BulkSurfaceField,
    flow: FlowState,
) -> Result<(SimulationState, InitReport)> {
    let cs = constitutive_solve(disc, &phase, params)?;
    let mut report = InitReport {
        identification_defect: cs.identification_defect,
        projected_chemical_potential: cs.projected,
        warnings: Vec::new(),
    };
    if cs.projected {
        report.warnings.push(format!(
            "initial chemical potentials violate mu = beta*theta on the boundary by {:.3e}; projected",
            cs.identification_defect
        ));
    }
    let ch = CHState { phase, chem: cs.chem, t: 0.0 };
    let rec = diagnostics_of(disc, &ch, &flow, params, 0, 0.0)?;
    Ok((SimulationState { ch, flow, step: 0, diagnostics: vec![rec] }, report))
}

pub fn initial_state(
    disc: &Discretization,
    params: &ModelParameters,
    init: &InitialData,
    seed: u64,
) -> Result<(SimulationState, InitReport)> {
    let phase = initial_phase(disc, &init.phase, seed)?;
    let flow = initial_velocity(disc, &init.velocity, seed)?;
    initialize(disc, params, phase, flow)
}

/// Advances `n_steps` coupled steps, handing each new state to `observer`. On abort the
/// error carries the failing step; everything observed before stays written.
pub fn run(
    disc: &Discretization,
    params: &ModelParameters,
    cfg: &CouplingConfig,
    mut state: SimulationState,
    n_steps: usize,
    mut observer: impl FnMut(&SimulationState, &StepReport) -> Result<()>,
) -> Result<SimulationState> {
    for _ in 0..n_steps {
        let (next, report) = nsch_step(disc, &state, params, cfg)?;
        observer(&next, &report)?;
        state = next;
    }
    Ok(state)
}

/// Coupled 𝓛² distance of two trajectories' phase and velocity fields.
pub fn state_distance(disc: &Discretization, a: &SimulationState, b: &SimulationState) -> Result<f64> {
    let dphase = a.ch.phase.add_scaled(-1.0, &b.ch.phase);
    let phase2 = disc.ops.l2_norm(&dphase).powi(2);
    let dflow = FlowState {
        v: BulkVectorField {
            values: a.flow.v.values.iter().zip(&b.flow.v.values).map(|(x, y)| [x[0] - y[0], x[1] - y[1]]).collect(),
        },
        p: vec![0.0; disc.nv()],
        omega: a.flow.omega - b.flow.omega,
        q: vec![0.0; disc.nb()],
        t: 0.0,
    };
    let vel2 = crate::stokes::flow_inner(disc, &dflow, &dflow)?;
    Ok((phase2 + vel2).sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct DependenceRow {
    pub epsilon: f64,
    pub initial_distance: f64,
    pub final_distance: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DependenceReport {
    pub t_final: f64,
    pub rows: Vec<DependenceRow>,
    /// max ratio / min ratio over the ε set.
    pub spread: f64,
    pub max_ratio: f64,
}

/// Runs the base trajectory and one perturbed trajectory per ε to `t_final` and reports
/// the distance at `t_final` divided by ε.
pub fn continuous_dependence_experiment(
    disc: &Discretization,
    params: &ModelParameters,
    cfg: &CouplingConfig,
    init: &InitialData,
    epsilons: &[f64],
    t_final: f64,
    seed: u64,
) -> Result<DependenceReport> {
    if params.l == 0.0 {
        return Err(NschError::Assumption {
            rule: "uniqueness-scope".into(),
            message: "continuous dependence is only established for L in (0, inf]; L = 0 is refused".into(),
        });
    }
    for &e in epsilons {
        if !(e >= 0.0 && e <= 1e-2) {
            return Err(NschError::InvalidInput(format!("perturbation size {e} outside [0, 1e-2]")));
        }
    }
    let n_steps = (t_final / cfg.dt).round() as usize;
    if n_steps == 0 {
        return Err(NschError::InvalidInput("t_final shorter than one step".into()));
    }
    let base_phase = initial_phase(disc, &init.phase, seed)?;
    let base_flow = initial_velocity(disc, &init.velocity, seed)?;
    let (base0, _) = initialize(disc, params, base_phase.clone(), base_flow.clone())?;
    let base = run(disc, params, cfg, base0.clone(), n_steps, |_, _| Ok(()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(17));
    let g = SmoothRandomFunction::new(&mut rng, 6, 3.0);
    let pert = BulkSurfaceField::from_fns(&disc.mesh, |x| g.eval(x), |x| g.eval(x));
    let unit = pert.scaled(1.0 / disc.ops.l2_norm(&pert));
    let mut rows = Vec::new();
    for &eps in epsilons {
        let phase = base_phase.add_scaled(eps, &unit);
        let (s0, _) = initialize(disc, params, phase, base_flow.clone())?;
        let initial_distance = state_distance(disc, &base0, &s0)?;
        let s = run(disc, params, cfg, s0, n_steps, |_, _| Ok(()))?;
        let final_distance = state_distance(disc, &base, &s)?;
        let ratio = if eps > 0.0 { final_distance / eps } else { 0.0 };
        rows.push(DependenceRow { epsilon: eps, initial_distance, final_distance, ratio });
    }
    let ratios: Vec<f64> = rows.iter().filter(|r| r.epsilon > 0.0).map(|r| r.ratio).collect();
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    let min_ratio = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = if ratios.is_empty() { 1.0 } else { max_ratio / min_ratio };
    Ok(DependenceReport { t_final: n_steps as f64 * cfg.dt, rows, spread, max_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::PotentialSpec;

    #[test]
    fn constant_state_is_a_fixed_point() {
        let disc = Discretization::disk(3, 1.0).unwrap();
        let p = ModelParameters::with_potentials(PotentialSpec::logarithmic(1.0, 2.0), PotentialSpec::logarithmic(1.0, 2.0));
        let phase = BulkSurfaceField::constant(&disc.mesh, 0.0, 0.0);
        let (s0, _) = initialize(&disc, &p, phase, FlowState::at_rest(&disc)).unwrap();
        let (s1, _) = nsch_step(&disc, &s0, &p, &CouplingConfig::new(1e-3)).unwrap();
        assert!(s1.ch.phase.max_abs() < 1e-14);
        assert!(s1.flow.v.max_abs() < 1e-14 && s1.flow.omega.abs() < 1e-14);
        assert!(s1.diagnostics[1].budget_residual.abs() < 1e-12);
    }
}
