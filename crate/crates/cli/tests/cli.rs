use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nsch(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsch"))
        .args(args)
        .env("NSCH_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(
        &path,
        format!(
            "seed = 4\n\n[mesh]\nn_rings = 4\n\n[time]\nn_steps = 3\nstride = 0\n\n\
             [params]\nL = 1.0\nbulk_potential = {{ kind = \"logarithmic\", theta = 1.0, theta_c = 2.0 }}\n\
             surface_potential = {{ kind = \"logarithmic\", theta = 1.0, theta_c = 2.0 }}\n\n\
             [experiment]\nconvergence_rings = [4, 8, 16]\neig_count = 3\nepsilons = [1e-3]\nt_final = 0.004\n"
        ),
    )
    .unwrap();
    path.to_str().unwrap().to_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn run_writes_into_the_environment_root() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let o = nsch(&["run", "--config", &cfg], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = tmp.path().join("run");
    for f in ["diagnostics.csv", "summary.json", "config.toml", "config.resolved.toml", "validation.json"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["steps"], 3);
}

#[test]
fn flags_override_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("explicit");
    let o = nsch(
        &["ch-only", "--config", &cfg, "--out", out.to_str().unwrap(), "--steps", "2", "--dt", "5e-4", "--seed", "9", "--stride", "1"],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lines = fs::read_to_string(out.join("diagnostics.csv")).unwrap().lines().count();
    assert_eq!(lines, 1 + 3);
    assert!(out.join("bulk_000002.vtk").exists());
    let resolved = fs::read_to_string(out.join("config.resolved.toml")).unwrap();
    assert!(resolved.contains("seed = 9") && resolved.contains("dt = 0.0005"), "{resolved}");
}

#[test]
fn configuration_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&nsch(&["run", "--config", "/nonexistent/c.toml"], tmp.path())), 1);
    let cfg = small_config(tmp.path());
    assert_eq!(code(&nsch(&["run", "--config", &cfg, "--dt", "-1"], tmp.path())), 1);
    assert_eq!(code(&nsch(&["run", "--bogus"], tmp.path())), 1);

    let k0 = tmp.path().join("k0.toml");
    fs::write(&k0, fs::read_to_string(&cfg).unwrap().replace("L = 1.0", "L = 1.0\nK = 0.0")).unwrap();
    let o = nsch(&["run", "--config", k0.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("K-range"));
    let o = nsch(&["run", "--config", k0.to_str().unwrap(), "--experimental"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
}

#[test]
fn solver_failure_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let extra = "\n[scheme]\nmax_newton = 1\nnewton_tol = 1e-300\nmax_retries = 0\n";
    let cfg = small_config(tmp.path());
    let text = fs::read_to_string(&cfg).unwrap() + extra;
    fs::write(&cfg, text).unwrap();
    let o = nsch(&["run", "--config", &cfg], tmp.path());
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("run/summary.json").exists());
}

#[test]
fn property_failure_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    // Two rings are too coarse for the asymptotic rate.
    let coarse = fs::read_to_string(&cfg).unwrap().replace("[4, 8, 16]", "[1, 2]");
    fs::write(&cfg, coarse).unwrap();
    let o = nsch(&["convergence", "--config", &cfg], tmp.path());
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(tmp.path().join("convergence/convergence.csv").exists());
}

#[test]
fn experiment_subcommands_succeed_on_a_small_mesh() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    for (sub, file) in [
        ("convergence", "convergence.csv"),
        ("eigs", "eigenvalues.csv"),
        ("stokes-solve", "stokes.json"),
        ("continuous-dependence", "dependence.csv"),
    ] {
        let o = nsch(&[sub, "--config", &cfg], tmp.path());
        assert_eq!(code(&o), 0, "{sub}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(tmp.path().join(sub).join(file).exists(), "{sub}");
    }
}

#[test]
fn json_configs_are_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let toml_path = small_config(tmp.path());
    let (cfg, _, _) = nsch_core::io::read_config(Path::new(&toml_path)).unwrap();
    let json_path = tmp.path().join("small.json");
    fs::write(&json_path, cfg.to_string_as(nsch_core::io::ConfigFormat::Json).unwrap()).unwrap();
    let o = nsch(&["run", "--config", json_path.to_str().unwrap(), "--steps", "1"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("run/config.json").exists());
}
