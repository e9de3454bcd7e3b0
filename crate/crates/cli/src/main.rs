use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nsch_core::coupled::continuous_dependence_experiment;
use nsch_core::discretization::Discretization;
use nsch_core::elliptic::manufactured_convergence;
use nsch_core::io::output::{write_fields, write_json, write_table};
use nsch_core::io::runner::{prepare_run_dir, resolve_run_dir};
use nsch_core::io::{execute_ch_only, execute_run, read_config, LoadedConfig, RunConfig, OUTPUT_ROOT_ENV};
use nsch_core::spaces::BulkVectorField;
use nsch_core::stokes::{rigid_rotation_check, solve_bs_stokes, stokes_eigenpairs, SurfaceForcing};
use nsch_core::verify::verify;
use nsch_core::NschError;

const PROPERTY_FAILURE: u8 = 3;

/// Stdout may be a closed pipe (`| head`); console output is best effort, files are not.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(name = "nsch", version, about = "Bulk-surface Navier-Stokes-Cahn-Hilliard simulator on a disk")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Coupled time loop.
    Run(Common),
    /// Cahn-Hilliard alone with a prescribed velocity.
    ChOnly(Common),
    /// Bulk-surface Stokes problem with tangential unit surface forcing.
    StokesSolve(Common),
    /// Smallest eigenpairs of the Stokes operator.
    Eigs(Common),
    /// Manufactured-solution refinement study of the elliptic solver.
    Convergence(Common),
    /// Property suite; exits with status 3 on any failure.
    Verify(Common),
    /// Perturbation study of solution stability.
    ContinuousDependence(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML or JSON configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory.
    #[arg(long, long_help = format!("Run directory (default: ${OUTPUT_ROOT_ENV}/<subcommand>, or runs/<subcommand>)"))]
    out: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Field output every N steps (0 disables).
    #[arg(long)]
    stride: Option<usize>,
    /// Admit parameters outside the verified range of K.
    #[arg(long)]
    experimental: bool,
}

enum Failure {
    Error(NschError),
    Property(String),
}

impl From<NschError> for Failure {
    fn from(e: NschError) -> Self {
        Failure::Error(e)
    }
}

type Outcome = Result<(), Failure>;

fn load(c: &Common) -> Result<LoadedConfig, NschError> {
    let (mut config, source, format) = match &c.config {
        Some(path) => read_config(path)?,
        None => {
            let cfg = RunConfig::default();
            let src = cfg.to_string_as(nsch_core::io::ConfigFormat::Toml)?;
            (cfg, src, nsch_core::io::ConfigFormat::Toml)
        }
    };
    if let Some(n) = c.steps {
        config.time.n_steps = n;
    }
    if let Some(dt) = c.dt {
        config.time.dt = dt;
    }
    if let Some(s) = c.seed {
        config.seed = s;
    }
    if let Some(s) = c.stride {
        config.time.stride = s;
    }
    config.experimental |= c.experimental;
    LoadedConfig::new(config, source, format)
}

fn run_dir(c: &Common, loaded: &LoadedConfig, name: &str) -> PathBuf {
    resolve_run_dir(c.out.as_deref(), &loaded.config, name)
}

fn print_json<T: serde::Serialize>(v: &T) {
    out!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn warn_experimental(loaded: &LoadedConfig) {
    if loaded.config.experimental {
        eprintln!("warning: --experimental lifts the K-range gate; results are outside the verified envelope");
    }
    for c in &loaded.validation.checks {
        if c.status == nsch_core::materials::CheckStatus::Warn {
            eprintln!("warning: {}: {}", c.rule, c.detail);
        }
    }
}

fn cmd_run(c: &Common, ch_only: bool) -> Outcome {
    let loaded = load(c)?;
    warn_experimental(&loaded);
    let dir = run_dir(c, &loaded, if ch_only { "ch-only" } else { "run" });
    let summary = if ch_only { execute_ch_only(&loaded, &dir)? } else { execute_run(&loaded, &dir)? };
    print_json(&summary);
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn cmd_stokes(c: &Common) -> Outcome {
    let loaded = load(c)?;
    let cfg = &loaded.config;
    let dir = run_dir(c, &loaded, "stokes-solve");
    prepare_run_dir(&dir, &loaded)?;
    let disc = Discretization::new(cfg.mesh()?)?;
    let phase = nsch_core::coupled::initial_phase(&disc, &cfg.initial.phase, cfg.seed)?;
    let (flow, report) = solve_bs_stokes(
        &disc,
        &phase,
        &cfg.params.coefficients,
        &BulkVectorField::zeros(&disc.mesh),
        &SurfaceForcing::Tangential(vec![1.0; disc.nb()]),
        cfg.scheme.stokes_variant,
    )?;
    let rigid = rigid_rotation_check(&disc, cfg.scheme.stokes_variant)?;
    let ch = nsch_core::cahn_hilliard::CHState {
        chem: nsch_core::spaces::BulkSurfaceField::zeros(&disc.mesh),
        phase,
        t: 0.0,
    };
    write_fields(&dir, 0, &disc, &ch, &flow)?;
    let out = serde_json::json!({ "report": report, "omega": flow.omega, "rigid_rotation": rigid });
    write_json(&dir.join("stokes.json"), &out)?;
    print_json(&out);
    Ok(())
}

fn cmd_eigs(c: &Common) -> Outcome {
    let loaded = load(c)?;
    let cfg = &loaded.config;
    let dir = run_dir(c, &loaded, "eigs");
    prepare_run_dir(&dir, &loaded)?;
    let disc = Discretization::new(cfg.mesh()?)?;
    let e = stokes_eigenpairs(&disc, cfg.experiment.eig_count)?;
    let rows: Vec<Vec<f64>> =
        e.values.iter().zip(&e.residuals).enumerate().map(|(i, (v, r))| vec![i as f64, *v, *r]).collect();
    write_table(&dir.join("eigenvalues.csv"), &["index", "eigenvalue", "residual"], &rows)?;
    let ch = nsch_core::cahn_hilliard::CHState {
        phase: nsch_core::spaces::BulkSurfaceField::zeros(&disc.mesh),
        chem: nsch_core::spaces::BulkSurfaceField::zeros(&disc.mesh),
        t: 0.0,
    };
    for (i, f) in e.fields.iter().enumerate() {
        write_fields(&dir, i, &disc, &ch, f)?;
    }
    let out = serde_json::json!({
        "values": e.values,
        "residuals": e.residuals,
        "orthonormality_defect": e.orthonormality_defect,
    });
    write_json(&dir.join("eigs.json"), &out)?;
    print_json(&out);
    if e.values.iter().any(|v| !(*v > 0.0)) || e.orthonormality_defect > 1e-8 {
        return Err(Failure::Property("eigenvalues not all positive or eigenfields not orthonormal".into()));
    }
    Ok(())
}

fn cmd_convergence(c: &Common) -> Outcome {
    let loaded = load(c)?;
    let dir = run_dir(c, &loaded, "convergence");
    prepare_run_dir(&dir, &loaded)?;
    let rows = manufactured_convergence(&loaded.config.experiment.convergence_rings)?;
    let table: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| vec![r.n_rings as f64, r.h, r.l2_error, r.rate.unwrap_or(f64::NAN), r.weak_residual])
        .collect();
    write_table(&dir.join("convergence.csv"), &["n_rings", "h", "l2_error", "rate", "weak_residual"], &table)?;
    out!("{:>8} {:>12} {:>14} {:>8} {:>12}", "n_rings", "h", "L2 error", "rate", "residual");
    for r in &rows {
        let rate = r.rate.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
        out!("{:>8} {:>12.5e} {:>14.6e} {:>8} {:>12.3e}", r.n_rings, r.h, r.l2_error, rate, r.weak_residual);
    }
    let rate = rows.last().and_then(|r| r.rate);
    match rate {
        Some(r) if (r - 2.0).abs() <= 0.3 => Ok(()),
        _ => Err(Failure::Property(format!("final rate {rate:?} outside 2.0 +- 0.3"))),
    }
}

fn cmd_verify(c: &Common) -> Outcome {
    let loaded = load(c)?;
    let dir = run_dir(c, &loaded, "verify");
    prepare_run_dir(&dir, &loaded)?;
    let report = verify(&loaded.config)?;
    write_json(&dir.join("verify.json"), &report)?;
    for ch in &report.checks {
        out!(
            "{:<4} {:<24} measured {:<24} threshold {:<10} {}",
            if ch.passed { "PASS" } else { "FAIL" },
            ch.name,
            format!("{:.6e}", ch.measured),
            format!("{:.1e}", ch.threshold),
            ch.detail
        );
    }
    if report.passed {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        Err(Failure::Property(format!("failed: {}", names.join(", "))))
    }
}

fn cmd_dependence(c: &Common) -> Outcome {
    let loaded = load(c)?;
    let cfg = &loaded.config;
    let dir = run_dir(c, &loaded, "continuous-dependence");
    prepare_run_dir(&dir, &loaded)?;
    let disc = Discretization::new(cfg.mesh()?)?;
    let report = continuous_dependence_experiment(
        &disc,
        &cfg.params,
        &cfg.coupling(),
        &cfg.initial,
        &cfg.experiment.epsilons,
        cfg.experiment.t_final,
        cfg.seed,
    )?;
    let rows: Vec<Vec<f64>> =
        report.rows.iter().map(|r| vec![r.epsilon, r.initial_distance, r.final_distance, r.ratio]).collect();
    write_table(&dir.join("dependence.csv"), &["epsilon", "initial_distance", "final_distance", "ratio"], &rows)?;
    write_json(&dir.join("dependence.json"), &report)?;
    print_json(&report);
    if report.max_ratio > 100.0 || report.spread >= 2.0 {
        return Err(Failure::Property(format!(
            "ratio {} (bound 100), spread {} (bound 2)",
            report.max_ratio, report.spread
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Run(c) => cmd_run(c, false),
        Command::ChOnly(c) => cmd_run(c, true),
        Command::StokesSolve(c) => cmd_stokes(c),
        Command::Eigs(c) => cmd_eigs(c),
        Command::Convergence(c) => cmd_convergence(c),
        Command::Verify(c) => cmd_verify(c),
        Command::ContinuousDependence(c) => cmd_dependence(c),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(Failure::Property(msg)) => {
            eprintln!("property failure: {msg}");
            ExitCode::from(PROPERTY_FAILURE)
        }
    }
}
