use std::fs;
use std::path::Path;

use nsch_core::io::output::{diagnostics_header, write_fields};
use nsch_core::io::{execute_ch_only, execute_run, parse_config, read_config, ConfigFormat, LoadedConfig, RunConfig};
use nsch_core::coupled::{initial_state, InitialData};
use nsch_core::discretization::Discretization;
use nsch_core::NschError;

fn data(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn small(steps: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.mesh.n_rings = 4;
    cfg.time.n_steps = steps;
    cfg.time.stride = 0;
    cfg.seed = 11;
    cfg
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path).unwrap().lines().map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn diagnostics_header_matches_golden_file() {
    let golden = fs::read_to_string(data("diagnostics_header.csv")).unwrap();
    assert_eq!(diagnostics_header(), golden.trim_end());

    let tmp = tempfile::tempdir().unwrap();
    execute_run(&LoadedConfig::from_config(small(2)).unwrap(), tmp.path()).unwrap();
    let rows = csv_rows(&tmp.path().join("diagnostics.csv"));
    assert_eq!(rows[0].join(","), golden.trim_end());
    assert_eq!(rows.len(), 1 + 3);
    for row in &rows[1..] {
        assert_eq!(row.len(), rows[0].len());
        for cell in row {
            assert!(cell.parse::<f64>().unwrap().is_finite(), "{cell}");
        }
    }
}

#[test]
fn csv_floats_carry_seventeen_significant_digits() {
    let tmp = tempfile::tempdir().unwrap();
    execute_run(&LoadedConfig::from_config(small(1)).unwrap(), tmp.path()).unwrap();
    let rows = csv_rows(&tmp.path().join("diagnostics.csv"));
    let e_tot = rows[0].iter().position(|c| c == "e_tot").unwrap();
    let cell = &rows[1][e_tot];
    let mantissa = cell.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
    assert_eq!(mantissa.len(), 17, "{cell}");
}

#[test]
fn minimal_config_takes_defaults() {
    let loaded = parse_config(&data("minimal.toml")).unwrap();
    let cfg = &loaded.config;
    assert!(cfg.params.l.is_infinite());
    assert_eq!(cfg.params.k, 1.0);
    assert_eq!(cfg.mesh.n_rings, 16);
    assert_eq!(cfg.time.dt, 1e-3);
    assert_eq!(cfg.time.n_steps, 200);
    assert_eq!(cfg.seed, 0);
    assert!(!cfg.experimental);
}

#[test]
fn run_directory_echoes_the_configuration() {
    let (cfg, source, format) = read_config(&data("minimal.toml")).unwrap();
    let mut cfg = cfg;
    cfg.mesh.n_rings = 4;
    cfg.time.n_steps = 1;
    let loaded = LoadedConfig::new(cfg.clone(), source.clone(), format).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    execute_run(&loaded, tmp.path()).unwrap();
    assert_eq!(fs::read_to_string(tmp.path().join("config.toml")).unwrap(), source);
    let resolved = fs::read_to_string(tmp.path().join("config.resolved.toml")).unwrap();
    assert_eq!(RunConfig::from_str_as(&resolved, ConfigFormat::Toml).unwrap(), cfg);
    assert!(resolved.contains("L = \"inf\""));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["steps"], 1);
    assert!(summary["aborted"].is_null());
    assert!(tmp.path().join("validation.json").exists());
}

#[test]
fn json_and_toml_configs_agree() {
    let toml_cfg = parse_config(&data("minimal.toml")).unwrap().config;
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("c.json");
    fs::write(&path, toml_cfg.to_string_as(ConfigFormat::Json).unwrap()).unwrap();
    assert_eq!(parse_config(&path).unwrap().config, toml_cfg);
}

#[test]
fn zero_k_is_rejected_unless_experimental() {
    let mut cfg = small(1);
    cfg.params.k = 0.0;
    match LoadedConfig::from_config(cfg.clone()) {
        Err(e @ NschError::Assumption { .. }) => {
            assert_eq!(e.exit_code(), 1);
            assert!(e.to_string().contains("K-range"), "{e}");
        }
        other => panic!("expected an assumption error, got {other:?}"),
    }
    cfg.experimental = true;
    assert!(LoadedConfig::from_config(cfg).is_ok());
}

#[test]
fn malformed_and_unknown_inputs_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("broken.toml", "[params\nL = 1"),
        ("broken.json", "{\"params\": "),
        ("unknown.toml", "typo = 1\n[params]\nbulk_potential = { kind = \"logarithmic\", theta = 1.0, theta_c = 2.0 }\nsurface_potential = { kind = \"logarithmic\", theta = 1.0, theta_c = 2.0 }\n"),
        ("config.yaml", "params: {}"),
    ];
    for (name, text) in cases {
        let path = tmp.path().join(name);
        fs::write(&path, text).unwrap();
        let err = parse_config(&path).unwrap_err();
        assert_eq!(err.exit_code(), 1, "{name}: {err}");
    }
    let err = parse_config(&tmp.path().join("missing.toml")).unwrap_err();
    assert!(matches!(err, NschError::Config(_)));
}

#[test]
fn negative_time_step_is_rejected() {
    let mut cfg = small(1);
    cfg.time.dt = -1.0;
    assert_eq!(LoadedConfig::from_config(cfg).unwrap_err().exit_code(), 1);
}

#[test]
fn vtk_files_have_consistent_counts() {
    let disc = Discretization::disk(3, 1.0).unwrap();
    let cfg = small(0);
    let (state, _) = initial_state(&disc, &cfg.params, &InitialData::default(), 1).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    write_fields(tmp.path(), 7, &disc, &state.ch, &state.flow).unwrap();

    let bulk = fs::read_to_string(tmp.path().join("bulk_000007.vtk")).unwrap();
    let (nv, nt) = (disc.nv(), disc.mesh.triangles.len());
    assert!(bulk.starts_with("# vtk DataFile Version 3.0\n"));
    assert!(bulk.contains(&format!("POINTS {nv} double")));
    assert!(bulk.contains(&format!("CELLS {nt} {}", 4 * nt)));
    assert!(bulk.contains(&format!("POINT_DATA {nv}")));
    for name in ["SCALARS phi", "SCALARS mu", "SCALARS p", "VECTORS v"] {
        assert!(bulk.contains(name), "{name}");
    }
    let lines = bulk.lines().count();
    // header 4, points, cells, cell types, point data with three scalar blocks and one vector block
    assert_eq!(lines, 4 + (1 + nv) + (1 + nt) + (1 + nt) + 1 + 3 * (2 + nv) + (1 + nv));

    let surf = fs::read_to_string(tmp.path().join("surface_000007.vtk")).unwrap();
    let nb = disc.nb();
    assert!(surf.contains(&format!("POINTS {nb} double")));
    assert!(surf.contains(&format!("CELL_DATA {nb}")));
    for name in ["SCALARS psi", "SCALARS theta", "SCALARS q", "VECTORS w"] {
        assert!(surf.contains(name), "{name}");
    }
}

#[test]
fn stride_controls_field_output() {
    let mut cfg = small(4);
    cfg.time.stride = 2;
    let tmp = tempfile::tempdir().unwrap();
    execute_run(&LoadedConfig::from_config(cfg).unwrap(), tmp.path()).unwrap();
    for step in [0, 2, 4] {
        assert!(tmp.path().join(format!("bulk_{step:06}.vtk")).exists());
    }
    assert!(!tmp.path().join("bulk_000001.vtk").exists());
}

#[test]
fn aborted_run_keeps_what_was_written() {
    let mut cfg = small(3);
    cfg.scheme.max_newton = 1;
    cfg.scheme.newton_tol = 1e-300;
    cfg.scheme.max_retries = 0;
    let tmp = tempfile::tempdir().unwrap();
    let err = execute_run(&LoadedConfig::from_config(cfg).unwrap(), tmp.path()).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
    let rows = csv_rows(&tmp.path().join("diagnostics.csv"));
    assert_eq!(rows.len(), 2, "header and the initial state");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert!(summary["aborted"].is_string());
}

#[test]
fn ch_only_run_conserves_mass_and_reports_no_kinetic_energy() {
    let cfg = small(3);
    let tmp = tempfile::tempdir().unwrap();
    let summary = execute_ch_only(&LoadedConfig::from_config(cfg).unwrap(), tmp.path()).unwrap();
    assert_eq!(summary.steps, 3);
    let rows = csv_rows(&tmp.path().join("diagnostics.csv"));
    let col = |name: &str| rows[0].iter().position(|c| c == name).unwrap();
    let m0: f64 = rows[1][col("mass_combined")].parse().unwrap();
    for row in &rows[1..] {
        assert_eq!(row[col("kinetic_bulk")].parse::<f64>().unwrap(), 0.0);
        assert!((row[col("mass_combined")].parse::<f64>().unwrap() - m0).abs() < 1e-10);
    }
}
