import json
import subprocess
import sys

import numpy as np
import pytest

from cosserat_lab import cli
from cosserat_lab.grid import field_from_functions, make_domain, read_field, rigid_base_field, write_field


def invoke(capsys, command, tmp_path, cfg=None, name="out", extra=()):
    argv = [command, "--out", str(tmp_path / name)]
    if cfg is not None:
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(cfg))
        argv += ["--config", str(path)]
    code = cli.main(argv + list(extra))
    return code, json.loads(capsys.readouterr().out)


def manifest(tmp_path, name="out", file="manifest.json"):
    return json.loads((tmp_path / name / file).read_text())


@pytest.fixture
def hedgehog_file(tmp_path):
    dom = make_domain("ball", 1 / 16, radius=1.0)
    a = np.array([0.07, -0.05, 0.03])
    path = tmp_path / "hedgehog.csrf"
    write_field(path, field_from_functions(dom, lambda x: x, lambda x: x - a))
    return path


@pytest.fixture
def dipole_file(tmp_path):
    dom = make_domain("ball", 1 / 24, radius=1.0)

    def n_fn(x):
        return np.stack([x[:, 0], x[:, 1], (x[:, 2] + 0.3) * (x[:, 2] - 0.3)], axis=-1)

    path = tmp_path / "dipole.csrf"
    write_field(path, field_from_functions(dom, lambda x: x, n_fn))
    return path


@pytest.fixture
def rigid_file(tmp_path):
    path = tmp_path / "rigid.csrf"
    write_field(path, rigid_base_field(make_domain("ball", 1 / 8, radius=1.0), dirichlet_boundary=True))
    return path


class TestConfig:
    def test_defaults_echoed(self):
        cfg = cli.resolve_config("minimize", {"solver": {"max_iters": 5}})
        assert cfg["solver"]["max_iters"] == 5
        assert cfg["solver"]["step_rule"] == "backtracking"
        assert cfg["constants"] == cli.CONSTANTS

    def test_round_trip(self):
        cfg = cli.resolve_config("build-boundary", {"N_target": 2, "epsilon": 3e-4})
        assert cli.resolve_config("build-boundary", json.loads(cli.dumps(cfg))) == cfg

    def test_unknown_key(self, capsys, tmp_path):
        code, err = invoke(capsys, "energy", tmp_path, {"feild": "x"})
        assert code == 2 and err["error"] == "InvalidConfig"

    def test_bad_constants(self, capsys, tmp_path, rigid_file):
        code, err = invoke(capsys, "energy", tmp_path, {"field": str(rigid_file), "constants": {"mu1": -1}})
        assert code == 2 and err["error"] == "InvalidConstants"

    def test_missing_field(self, capsys, tmp_path):
        code, err = invoke(capsys, "energy", tmp_path, {"field": str(tmp_path / "none.csrf")})
        assert code == 2

    def test_threads_from_environment(self, monkeypatch):
        from cosserat_lab.minimize import default_threads

        monkeypatch.setenv("COSSERAT_THREADS", "3")
        assert default_threads() == 3


class TestBuildBoundary:
    def test_energy_and_determinism(self, capsys, tmp_path):
        cfg = {"N_target": 1, "epsilon": 1e-3, "h": 1 / 32}
        code, files = invoke(capsys, "build-boundary", tmp_path, cfg, "a")
        assert code == 0
        assert set(files) == {"field", "manifest"}
        man = manifest(tmp_path, "a")
        assert man["energy"] < np.pi
        assert man["boundary_degree"]["mod2_degree"] == 0
        assert man["config"]["epsilon"] == 1e-3 and man["config"]["m"] == 4
        assert all(r["verified"] for r in man["dipole_records"])
        assert invoke(capsys, "build-boundary", tmp_path, cfg, "b")[0] == 0
        for f in ("manifest.json", "field.csrf"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_separation(self, capsys, tmp_path):
        code, err = invoke(capsys, "build-boundary", tmp_path, {"N_target": 3, "epsilon": 0.05})
        assert code == 2 and err["error"] == "SeparationViolated"


class TestInsertDipole:
    def test_minimal(self, capsys, tmp_path):
        code, _ = invoke(capsys, "insert-dipole", tmp_path, {"m": 2})
        assert code == 0
        ledger = manifest(tmp_path)["degree_ledger"]
        assert len(ledger) == 2
        assert [p["mod2_degree"] for p in ledger] == [1, 1]
        assert sorted(p["lift_degree"] for p in ledger) == [-1, 1]

    def test_sixteen(self, capsys, tmp_path):
        code, _ = invoke(capsys, "insert-dipole", tmp_path, {"m": 16})
        assert code == 0
        man = manifest(tmp_path)
        assert man["energy_K"] <= 64 * np.pi * 0.5 * 1.2
        assert "region_table" in man and man["config"]["m"] == 16

    def test_grid_output(self, capsys, tmp_path):
        code, files = invoke(capsys, "insert-dipole", tmp_path, {"m": 4, "h": 1 / 32})
        assert code == 0 and "field" in files
        assert read_field(files["field"]).domain.shape == "box"

    def test_alpha_too_large(self, capsys, tmp_path):
        code, err = invoke(capsys, "insert-dipole", tmp_path, {"m": 4, "alpha": 0.2})
        assert code == 2 and err["error"] == "AlphaTooLarge"


class TestFieldCommands:
    def test_energy(self, capsys, tmp_path, rigid_file):
        code, _ = invoke(capsys, "energy", tmp_path, {"field": str(rigid_file)})
        assert code == 0
        rep = manifest(tmp_path, file="energy.json")
        assert rep["total"] == 0.0 and rep["config"]["field"] == str(rigid_file)

    def test_minimize_base_state(self, capsys, tmp_path, rigid_file):
        code, files = invoke(capsys, "minimize", tmp_path, {"field": str(rigid_file)}, extra=["--threads", "2"])
        assert code == 0
        assert set(files) == {"field", "trace", "manifest"}
        man = manifest(tmp_path)
        assert man["energy"]["total"] == 0.0
        assert man["singularities"] == []
        assert "threads" not in man["config"]["solver"]

    def test_minimize_with_spec(self, capsys, tmp_path, rigid_file):
        cfg = {"field": str(rigid_file), "N_target": 1, "epsilon": 1e-3, "solver": {"max_iters": 3}}
        code, files = invoke(capsys, "minimize", tmp_path, cfg)
        assert code == 0 and "slice_report" in files
        man = manifest(tmp_path)
        assert man["audit"]["passed"]
        rep = json.loads((tmp_path / "out" / "slice_report.json").read_text())
        assert rep["disc_degrees"] == [0]

    def test_minimize_corrupted(self, capsys, tmp_path, rigid_file):
        data = rigid_file.read_bytes()
        rigid_file.write_bytes(data[: len(data) // 2])
        code, err = invoke(capsys, "minimize", tmp_path, {"field": str(rigid_file)})
        assert code == 2 and err["error"] == "FormatError"

    def test_analyze_hedgehog(self, capsys, tmp_path, hedgehog_file):
        code, _ = invoke(capsys, "analyze", tmp_path, {"field": str(hedgehog_file), "probe_radius": 0.2})
        assert code == 0
        pts = manifest(tmp_path, file="analysis.json")["singularities"]
        assert len(pts) == 1 and pts[0]["mod2_degree"] == 1

    def test_analyze_dipole(self, capsys, tmp_path, dipole_file):
        cfg = {"field": str(dipole_file), "probe_radius": 0.125,
               "dipoles": [{"P": [0, 0, -0.3], "N": [0, 0, 0.3], "cylinder_radius": 0.25}]}
        code, _ = invoke(capsys, "analyze", tmp_path, cfg)
        assert code == 0
        rec = manifest(tmp_path, file="analysis.json")["dipole_records"][0]
        assert rec["verified"] and abs(rec["degree"]) == 1

    def test_export_round_trip(self, capsys, tmp_path, hedgehog_file):
        from cosserat_lab.grid import import_vtk

        code, files = invoke(capsys, "export", tmp_path, {"field": str(hedgehog_file)})
        assert code == 0
        a, b = read_field(hedgehog_file), import_vtk(files["vtk"])
        np.testing.assert_array_equal(a.n, b.n)
        np.testing.assert_array_equal(a.phi, b.phi)
        np.testing.assert_array_equal(a.domain.mask, b.domain.mask)

    def test_export_bad_format(self, capsys, tmp_path, hedgehog_file):
        code, err = invoke(capsys, "export", tmp_path, {"field": str(hedgehog_file), "format": "png"})
        assert code == 2 and err["error"] == "InvalidConfig"


def test_console_script(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"m": 4, "alpha": 0.5}))
    proc = subprocess.run([sys.executable, "-m", "cosserat_lab.cli", "insert-dipole", "--config", str(cfg),
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 2
    assert json.loads(proc.stdout)["error"] == "AlphaTooLarge"
