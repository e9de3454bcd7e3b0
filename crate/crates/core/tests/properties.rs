use proptest::prelude::*;

use nsch_core::cahn_hilliard::{ch_step, mass_functionals, CHState, CHStepConfig, ChScheme};
use nsch_core::discretization::Discretization;
use nsch_core::io::output::fmt_f64;
use nsch_core::io::{ConfigFormat, RunConfig};
use nsch_core::materials::{chi, Densities, ModelParameters, PotentialSpec};
use nsch_core::spaces::{inner_lb, BulkSurfaceField, BulkVectorField};

fn disc4() -> Discretization {
    Discretization::disk(4, 1.0).unwrap()
}

fn field(mesh_disc: &Discretization, values: &[f64]) -> BulkSurfaceField {
    let nv = mesh_disc.nv();
    let nb = mesh_disc.nb();
    BulkSurfaceField::new(
        (0..nv).map(|i| values[i % values.len()]).collect(),
        (0..nb).map(|k| values[(7 * k + 3) % values.len()]).collect(),
    )
}

fn exchange() -> impl Strategy<Value = f64> {
    prop_oneof![Just(f64::INFINITY), Just(0.0), 0.1f64..100.0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn inner_lb_is_symmetric_and_nonnegative(
        a in prop::collection::vec(-1.0f64..1.0, 16),
        b in prop::collection::vec(-1.0f64..1.0, 16),
        l in exchange(),
        beta in 0.2f64..5.0,
    ) {
        let d = disc4();
        let (fa, fb) = (field(&d, &a), field(&d, &b));
        let ab = inner_lb(&d.ops, &fa, &fb, l, beta);
        let ba = inner_lb(&d.ops, &fb, &fa, l, beta);
        prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab.abs()));
        prop_assert!(inner_lb(&d.ops, &fa, &fa, l, beta) >= -1e-12);
    }

    #[test]
    fn chi_inverts_positive_reals(r in 1e-6f64..1e6) {
        prop_assert!((chi(r) * r - 1.0).abs() < 1e-14);
    }

    #[test]
    fn logarithmic_derivatives_match_differences(s in -0.95f64..0.95, theta in 0.1f64..2.0, tc in 0.5f64..4.0) {
        let p = PotentialSpec::logarithmic(theta, tc);
        let h = 1e-5;
        for order in 0..2u8 {
            let fd = (p.eval(s + h, order).unwrap() - p.eval(s - h, order).unwrap()) / (2.0 * h);
            let exact = p.eval(s, order + 1).unwrap();
            prop_assert!((fd - exact).abs() <= 1e-5 * (1.0 + exact.abs()), "order {order}: {fd} vs {exact}");
        }
    }

    #[test]
    fn logarithmic_potential_refuses_pure_phases(s in prop_oneof![Just(1.0f64), Just(-1.0), 1.0f64..3.0]) {
        prop_assert!(PotentialSpec::logarithmic(1.0, 2.0).eval(s, 1).is_err());
    }

    #[test]
    fn densities_stay_between_pure_values(
        r1 in 0.1f64..10.0, r2 in 0.1f64..10.0, s1 in 0.1f64..10.0, s2 in 0.1f64..10.0, s in -2.0f64..2.0,
    ) {
        let d = Densities { rho1: r1, rho2: r2, sigma1: s1, sigma2: s2 };
        let (lo, hi) = d.rho_bounds();
        prop_assert!(d.rho(s) >= lo - 1e-14 && d.rho(s) <= hi + 1e-14);
        let (lo, hi) = d.sigma_bounds();
        prop_assert!(d.sigma(s) >= lo - 1e-14 && d.sigma(s) <= hi + 1e-14);
    }

    #[test]
    fn fmt_f64_round_trips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        let s = fmt_f64(x);
        prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn config_round_trips(
        n in 1usize..64, dt in 1e-6f64..1.0, steps in 0usize..10_000, seed in any::<u64>(),
        l in exchange(), k in 0.01f64..10.0, json in any::<bool>(),
    ) {
        let mut cfg = RunConfig::default();
        cfg.mesh.n_rings = n;
        cfg.time.dt = dt;
        cfg.time.n_steps = steps;
        cfg.seed = seed;
        cfg.params.l = l;
        cfg.params.k = k;
        let fmt = if json { ConfigFormat::Json } else { ConfigFormat::Toml };
        let back = RunConfig::from_str_as(&cfg.to_string_as(fmt).unwrap(), fmt).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn one_step_conserves_the_relevant_masses(
        amp in 0.05f64..0.5,
        mode in 1usize..4,
        l in exchange(),
        beta in 0.5f64..2.0,
        omega in -1.0f64..1.0,
        convex_split in any::<bool>(),
    ) {
        let d = disc4();
        let log = PotentialSpec::logarithmic(1.0, 2.0);
        let mut p = ModelParameters::with_potentials(log.clone(), log);
        p.l = l;
        p.beta = beta;
        let phase = BulkSurfaceField::from_fns(
            &d.mesh,
            |x| amp * (mode as f64 * x[0]).sin() + 0.1,
            |x| amp * (mode as f64 * x[1]).cos() - 0.1,
        );
        let s0 = CHState { chem: BulkSurfaceField::zeros(&d.mesh), phase, t: 0.0 };
        let v = BulkVectorField::from_fn(&d.mesh, |x| [-omega * x[1], omega * x[0]]);
        let scheme = if convex_split { ChScheme::ConvexSplitting } else { ChScheme::FullyImplicit };
        let (s1, _) = ch_step(&d, &s0, &v, omega, &p, &CHStepConfig::new(1e-3, scheme)).unwrap();
        let (m0, m1) = (mass_functionals(&d, &s0, &p), mass_functionals(&d, &s1, &p));
        prop_assert!((m1.combined - m0.combined).abs() <= 1e-10, "combined {} -> {}", m0.combined, m1.combined);
        if l.is_infinite() {
            prop_assert!((m1.bulk - m0.bulk).abs() <= 1e-10);
            prop_assert!((m1.surface - m0.surface).abs() <= 1e-10);
        }
        prop_assert!(s1.phase.max_abs() < 1.0);
    }
}
