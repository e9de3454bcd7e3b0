use nsch_core::coupled::{initial_state, nsch_step, run, CouplingConfig, InitialData, PhaseInit, VelocityInit};
use nsch_core::discretization::Discretization;
use nsch_core::materials::{Densities, ModelParameters, PotentialSpec};
use nsch_core::stokes::{
    boundary_kinematics_defect, divergence_residual, korn_check, stokes_eigenpairs, MomentumForm, StokesVariant,
};

fn log_params(l: f64) -> ModelParameters {
    let log = PotentialSpec::logarithmic(1.0, 2.0);
    let mut p = ModelParameters::with_potentials(log.clone(), log);
    p.l = l;
    p
}

fn stirred() -> InitialData {
    InitialData { velocity: VelocityInit::RigidRotation { omega: 0.5 }, ..InitialData::default() }
}

#[test]
fn coupled_steps_keep_flow_admissible() {
    let disc = Discretization::disk(4, 1.0).unwrap();
    let p = log_params(1.0);
    let (s0, _) = initial_state(&disc, &p, &stirred(), 3).unwrap();
    let s = run(&disc, &p, &CouplingConfig::new(1e-3), s0, 5, |_, _| Ok(())).unwrap();
    assert!(divergence_residual(&disc, &s.flow).unwrap() < 1e-10);
    assert!(boundary_kinematics_defect(&disc, &s.flow) < 1e-10);
    assert_eq!(s.step, 5);
    assert!((s.ch.t - 5e-3).abs() < 1e-15);
}

#[test]
fn energy_decays_for_every_variant_and_form() {
    let disc = Discretization::disk(4, 1.0).unwrap();
    let mut p = log_params(1.0);
    p.densities = Densities { rho1: 1.0, rho2: 3.0, sigma1: 1.0, sigma2: 2.0 };
    for variant in [StokesVariant::Reduced, StokesVariant::Full] {
        for momentum in [MomentumForm::Skew, MomentumForm::NonConservative] {
            let mut cfg = CouplingConfig::new(1e-3);
            cfg.stokes_variant = variant;
            cfg.momentum = momentum;
            let (s0, _) = initial_state(&disc, &p, &stirred(), 5).unwrap();
            let s = run(&disc, &p, &cfg, s0, 4, |_, _| Ok(())).unwrap();
            let d = &s.diagnostics;
            for w in d.windows(2) {
                assert!(w[1].e_tot <= w[0].e_tot + 1e-8 * w[0].e_tot.abs(), "{variant:?} {momentum:?}");
                assert!((w[1].mass_combined - d[0].mass_combined).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn zero_exchange_parameter_conserves_combined_mass() {
    let disc = Discretization::disk(4, 1.0).unwrap();
    let p = log_params(0.0);
    let (s0, _) = initial_state(&disc, &p, &InitialData::default(), 9).unwrap();
    let m0 = s0.diagnostics[0].mass_combined;
    let s = run(&disc, &p, &CouplingConfig::new(1e-3), s0, 3, |_, _| Ok(())).unwrap();
    assert!((s.diagnostics.last().unwrap().mass_combined - m0).abs() < 1e-10);
}

#[test]
fn steps_are_reproducible() {
    let disc = Discretization::disk(4, 1.0).unwrap();
    let p = log_params(2.0);
    let (s0, _) = initial_state(&disc, &p, &stirred(), 21).unwrap();
    let cfg = CouplingConfig::new(2e-3);
    let (a, _) = nsch_step(&disc, &s0, &p, &cfg).unwrap();
    let (b, _) = nsch_step(&disc, &s0, &p, &cfg).unwrap();
    assert_eq!(a.ch.phase, b.ch.phase);
    assert_eq!(a.flow.omega.to_bits(), b.flow.omega.to_bits());
}

#[test]
fn seeds_change_the_initial_phase() {
    let disc = Discretization::disk(4, 1.0).unwrap();
    let p = log_params(1.0);
    let (a, _) = initial_state(&disc, &p, &InitialData::default(), 1).unwrap();
    let (b, _) = initial_state(&disc, &p, &InitialData::default(), 2).unwrap();
    assert_ne!(a.ch.phase, b.ch.phase);
    assert!(matches!(InitialData::default().phase, PhaseInit::SmoothRandom { .. }));
}

#[test]
fn stokes_spectrum_is_positive_and_sorted() {
    let disc = Discretization::disk(6, 1.0).unwrap();
    let e = stokes_eigenpairs(&disc, 5).unwrap();
    assert!(e.values[0] > 0.0);
    assert!(e.values.windows(2).all(|w| w[0] <= w[1] * (1.0 + 1e-10)));
    assert!(e.residuals.iter().all(|r| *r < 1e-6), "{:?}", e.residuals);
    assert!(e.orthonormality_defect < 1e-8);
}

#[test]
fn korn_constant_is_bounded_away_from_zero() {
    let c8 = korn_check(&Discretization::disk(8, 1.0).unwrap()).unwrap();
    let c4 = korn_check(&Discretization::disk(4, 1.0).unwrap()).unwrap();
    assert!(c8 > 0.05 && c4 > 0.05, "{c4} {c8}");
    assert!((c8 - c4).abs() / c8 < 0.5);
}
