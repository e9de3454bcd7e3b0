"""Smoke test of the nsch Python module.

Build and install first, e.g.

    maturin build -m crates/py/Cargo.toml --release -o dist && pip install dist/nsch-*.whl

then run `python python/smoke_test.py`.
"""

import math
import sys
import tempfile
from pathlib import Path

import nsch


def main() -> int:
    assert nsch.chi(2.0) == 0.5
    assert nsch.chi(0.0) == 0.0 and nsch.chi(math.inf) == 0.0

    mesh = nsch.Mesh(4)
    assert mesh.n_vertices == 1 + 3 * 4 * 5
    assert mesh.n_triangles == 6 * 16
    assert mesh.n_boundary == 24
    rot = mesh.rigid_rotation_check()
    assert rot["max_velocity_error"] < 1e-8, rot
    eig = mesh.stokes_eigenvalues(4)
    assert len(eig) == 4 and all(v > 0 for v in eig), eig

    cfg = nsch.Config()
    cfg.n_rings = 4
    cfg.n_steps = 3
    cfg.stride = 0
    cfg.seed = 7
    again = nsch.Config.from_toml(cfg.to_toml())
    assert again.to_toml() == cfg.to_toml()
    report = cfg.validate()
    assert all(c["status"] != "fail" for c in report["checks"])

    sim = nsch.Simulation(cfg)
    sim.step(3)
    diag = sim.diagnostics()
    assert len(diag) == 4
    m0 = diag[0]["mass_combined"]
    assert all(abs(d["mass_combined"] - m0) < 1e-9 for d in diag)
    assert all(b["e_tot"] <= a["e_tot"] + 1e-8 * abs(a["e_tot"]) for a, b in zip(diag, diag[1:]))
    phi, psi = sim.phase()
    assert len(phi) == mesh.n_vertices and len(psi) == mesh.n_boundary
    assert max(abs(x) for x in phi) < 1.0

    with tempfile.TemporaryDirectory() as tmp:
        summary = nsch.run(cfg, tmp)
        assert summary["steps"] == 3
        assert (Path(tmp) / "diagnostics.csv").exists()

    bad = nsch.Config()
    bad.K = 0.0
    try:
        bad.validate()
    except ValueError as e:
        assert "K" in str(e)
    else:
        raise AssertionError("K = 0 accepted")

    rows = nsch.convergence([4, 8])
    assert rows[-1]["rate"] > 1.5, rows

    print("python smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
