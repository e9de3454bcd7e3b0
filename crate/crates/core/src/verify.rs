//! Property suite behind the `verify` subcommand: each check reports the measured value
//! next to the threshold it is held to.

use std::time::Instant;

use serde::Serialize;

use crate::coupled::{initial_state, run, DiagnosticsRecord};
use crate::discretization::Discretization;
use crate::elliptic::{manufactured_convergence, norm_equivalence_check};
use crate::error::Result;
use crate::io::output::{diagnostics_header, diagnostics_row};
use crate::io::RunConfig;
use crate::spaces::{inner_lb, poincare_check, BulkSurfaceField};
use crate::stokes::{korn_check, rigid_rotation_check, stokes_eigenpairs, StokesVariant};

#[derive(Debug, Clone, Serialize)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub checks: Vec<PropertyCheck>,
    pub passed: bool,
    pub seconds: f64,
}

impl VerificationReport {
    pub fn failures(&self) -> impl Iterator<Item = &PropertyCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Outcome of one property: (passed, measured, threshold, detail).
type Outcome = (bool, f64, f64, String);

fn record(checks: &mut Vec<PropertyCheck>, name: &str, f: impl FnOnce() -> Result<Outcome>) {
    let c = match f() {
        Ok((passed, measured, threshold, detail)) => {
            PropertyCheck { name: name.into(), passed, measured, threshold, detail }
        }
        Err(e) => PropertyCheck {
            name: name.into(),
            passed: false,
            measured: f64::NAN,
            threshold: f64::NAN,
            detail: format!("error: {e}"),
        },
    };
    checks.push(c);
}

/// Steps of the short coupled runs inside the suite.
pub const VERIFY_STEPS: usize = 20;

fn short_run(disc: &Discretization, cfg: &RunConfig, steps: usize) -> Result<Vec<DiagnosticsRecord>> {
    let (s0, _) = initial_state(disc, &cfg.params, &cfg.initial, cfg.seed)?;
    Ok(run(disc, &cfg.params, &cfg.coupling(), s0, steps, |_, _| Ok(()))?.diagnostics)
}

pub fn verify(cfg: &RunConfig) -> Result<VerificationReport> {
    let started = Instant::now();
    let validation = cfg.validate()?;
    let disc = Discretization::new(cfg.mesh()?)?;
    let p = &cfg.params;
    let mut checks = Vec::new();

    record(&mut checks, "config-admissible", || {
        let warnings = validation.checks.iter().filter(|c| c.status == crate::materials::CheckStatus::Warn).count();
        Ok((validation.is_admissible(), warnings as f64, 0.0, format!("{warnings} warning(s)")))
    });

    let steps = VERIFY_STEPS.min(cfg.time.n_steps.max(1));
    let records = short_run(&disc, cfg, steps);
    let records = records.as_ref();
    record(&mut checks, "mass-law", || {
        let r = records.map_err(clone_err)?;
        let drift = |f: fn(&DiagnosticsRecord) -> f64| r.iter().map(|x| (f(x) - f(&r[0])).abs()).fold(0.0, f64::max);
        let (measured, what) = if p.l.is_infinite() {
            (drift(|x| x.mass_bulk).max(drift(|x| x.mass_surface)), "bulk and surface masses separately")
        } else {
            (drift(|x| x.mass_combined), "combined mass beta*m_bulk + m_surface")
        };
        Ok((measured <= 1e-9, measured, 1e-9, format!("{what}, {steps} steps")))
    });
    record(&mut checks, "energy-decay", || {
        let r = records.map_err(clone_err)?;
        let worst = r
            .windows(2)
            .map(|w| (w[1].e_tot - w[0].e_tot) / w[0].e_tot.abs().max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max);
        Ok((worst <= 1e-8, worst, 1e-8, "largest relative energy increase per step".into()))
    });
    record(&mut checks, "separation", || {
        let r = records.map_err(clone_err)?;
        let delta = r.iter().map(|x| x.separation).fold(f64::INFINITY, f64::min);
        let singular = p.bulk_potential.is_singular() || p.surface_potential.is_singular();
        let ok = if singular { delta > 1e-4 } else { delta.is_finite() };
        Ok((ok, delta, 1e-4, "min over the run of 1 - max|phi|, 1 - max|psi|".into()))
    });
    record(&mut checks, "diagnostics-finite", || {
        let r = records.map_err(clone_err)?;
        let bad = r.iter().filter(|x| !x.is_finite()).count();
        let sum_defect = r
            .iter()
            .map(|x| (x.e_tot - (x.kinetic_bulk + x.kinetic_surface + x.free_bulk + x.free_surface + x.free_penalty)).abs())
            .fold(0.0, f64::max);
        Ok((bad == 0 && sum_defect <= 1e-12, sum_defect, 1e-12, format!("{bad} non-finite rows; E_tot minus its parts")))
    });
    record(&mut checks, "determinism", || {
        let a = short_run(&disc, cfg, 3)?;
        let b = short_run(&disc, cfg, 3)?;
        let same = a.iter().map(diagnostics_row).eq(b.iter().map(diagnostics_row));
        Ok((same, if same { 0.0 } else { 1.0 }, 0.0, "two identical runs give identical CSV rows".into()))
    });
    record(&mut checks, "csv-schema", || {
        let h = diagnostics_header();
        let ok = h.starts_with("step,t,dt,") && h.split(',').count() == DiagnosticsRecord::COLUMNS.len();
        Ok((ok, DiagnosticsRecord::COLUMNS.len() as f64, 22.0, "column count".into()))
    });
    record(&mut checks, "elliptic-convergence", || {
        let rows = manufactured_convergence(&[4, 8, 16])?;
        let rate = rows.last().and_then(|r| r.rate).unwrap_or(f64::NAN);
        let res = rows.iter().map(|r| r.weak_residual).fold(0.0, f64::max);
        Ok(((rate - 2.0).abs() <= 0.3 && res <= 1e-10, rate, 2.0, format!("L2 rate on 4/8/16 rings; max weak residual {res:.3e}")))
    });
    record(&mut checks, "inner-lb-symmetry", || {
        let a = BulkSurfaceField::from_fns(&disc.mesh, |x| x[0] * x[1] + 0.3, |x| x[0]);
        let b = BulkSurfaceField::from_fns(&disc.mesh, |x| x[0] - x[1] * x[1], |x| x[1] * x[0]);
        let ab = inner_lb(&disc.ops, &a, &b, p.l, p.beta);
        let ba = inner_lb(&disc.ops, &b, &a, p.l, p.beta);
        let d = (ab - ba).abs();
        Ok((d <= 1e-12, d, 1e-12, "|(a,b) - (b,a)|".into()))
    });
    record(&mut checks, "poincare-constant", || {
        let c = poincare_check(&disc.mesh, p.k, p.alpha, p.beta)?;
        Ok((c.is_finite() && c > 0.0, c, 0.0, "finite and positive".into()))
    });
    record(&mut checks, "norm-equivalence", || {
        let r = norm_equivalence_check(&disc.mesh, &disc.ops, p.l, p.beta, 0.5, 2.0, 100, cfg.seed)?;
        let v = (r.primal_violations + r.dual_violations) as f64;
        Ok((v == 0.0, v, 0.0, format!("violations over 100 samples, mobilities in [0.5, 2]; min slack {:.3e}", r.min_slack)))
    });
    record(&mut checks, "stokes-rigid-rotation", || {
        let r = rigid_rotation_check(&disc, cfg.scheme.stokes_variant)?;
        let ok = r.max_velocity_error <= 1e-6
            && r.omega_error <= 1e-8
            && r.bulk_pressure_l2 <= 1e-8
            && r.surface_pressure_l2 <= 1e-8;
        Ok((
            ok,
            r.max_velocity_error,
            1e-6,
            format!(
                "velocity error; omega error {:.3e}, pressure norms {:.3e} / {:.3e}",
                r.omega_error, r.bulk_pressure_l2, r.surface_pressure_l2
            ),
        ))
    });
    record(&mut checks, "stokes-variants-agree", || {
        let a = rigid_rotation_check(&disc, StokesVariant::Reduced)?;
        let b = rigid_rotation_check(&disc, StokesVariant::Full)?;
        let d = (a.max_velocity_error - b.max_velocity_error).abs() + (a.omega_error - b.omega_error).abs();
        Ok((d <= 1e-8, d, 1e-8, "reduced vs full surface-pressure formulation".into()))
    });
    record(&mut checks, "stokes-eigenpairs", || {
        let k = cfg.experiment.eig_count;
        let e = stokes_eigenpairs(&disc, k)?;
        let min = e.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let ok = min > 0.0 && e.orthonormality_defect <= 1e-8;
        Ok((ok, e.orthonormality_defect, 1e-8, format!("{k} eigenvalues, smallest {min:.6}; Gram defect")))
    });
    record(&mut checks, "korn-constant", || {
        let c = korn_check(&disc)?;
        Ok((c.is_finite() && c > 0.0, c, 0.0, "finite and positive".into()))
    });

    let passed = checks.iter().all(|c| c.passed);
    Ok(VerificationReport { checks, passed, seconds: started.elapsed().as_secs_f64() })
}

fn clone_err(e: &crate::error::NschError) -> crate::error::NschError {
    crate::error::NschError::RunAborted { step: 0, reason: e.to_string() }
}
