import json
import subprocess
import sys
from pathlib import Path

import pytest

from waveguide.cli import (RunConfig, ValidationError, config_from_args, main,
                           read_config_file)
from waveguide.storage import read_field, read_table, sha256_file


def run(argv):
    return main([str(a) for a in argv])


def manifest(out: Path) -> dict:
    return json.loads((out / "manifest.json").read_text())


def assert_manifest_complete(out: Path):
    data = manifest(out)
    listed = {e["path"]: e["sha256"] for e in data["files"]}
    on_disk = {str(p.relative_to(out)) for p in out.rglob("*")
               if p.is_file() and p.name != "manifest.json"}
    assert set(listed) == on_disk
    for rel, digest in listed.items():
        assert sha256_file(out / rel) == digest


class TestConfig:
    def test_flags_override_file(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("# comment\np = 2.5\nomega-min = 0.2\ndt=0.002\n")
        cfg, _ = config_from_args(["evolve", "--config", str(cfg_file), "--p", "3"])
        assert cfg.p == 3.0 and cfg.omega_min == 0.2 and cfg.dt == 0.002

    @pytest.mark.parametrize("text, match", [("nonsense\n", "key=value"),
                                             ("colour = red\n", "unknown key"),
                                             ("nx = many\n", "bad value")])
    def test_bad_config_file(self, tmp_path, text, match):
        path = tmp_path / "bad.cfg"
        path.write_text(text)
        with pytest.raises(ValidationError, match=match):
            read_config_file(str(path))

    @pytest.mark.parametrize("kwargs", [dict(p=5.0), dict(omega=-1.0), dict(omega_min=0.5,
                                        omega_max=0.1), dict(omega_steps=0), dict(dt=0.0),
                                        dict(delta=-1.0), dict(workers=0), dict(tol=0.0),
                                        dict(field_format="hdf5"), dict(nx=100)])
    def test_validation(self, kwargs):
        with pytest.raises(ValidationError):
            RunConfig("groundstate", **kwargs).validate()

    def test_omega_list(self):
        cfg = RunConfig("groundstate", omega_min=0.1, omega_max=0.3, omega_steps=3)
        assert cfg.omegas([1.0]) == pytest.approx([0.1, 0.2, 0.3])
        assert RunConfig("groundstate", omega=0.7).omegas([1.0]) == [0.7]
        assert RunConfig("groundstate").omegas([1.0, 2.0]) == [1.0, 2.0]

    def test_environment_output_root(self, tmp_path, monkeypatch):
        monkeypatch.setenv("WAVEGUIDE_OUT", str(tmp_path))
        assert RunConfig("threshold").output_dir() == tmp_path / "threshold"


class TestCommands:
    def test_threshold(self, tmp_path):
        out = tmp_path / "thr"
        assert run(["threshold", "--p", 3, "--out", out]) == 0
        header, rows = read_table(out / "threshold.csv")
        est = float(rows[0][header.index("omega_threshold")])
        assert est == pytest.approx(1 / 3, abs=1e-4)
        assert_manifest_complete(out)

    def test_negative_omega_rejected(self, tmp_path, capsys):
        assert run(["groundstate", "--p", 3, "--omega", -1, "--out", tmp_path / "g"]) == 2
        assert "omega must be positive" in capsys.readouterr().err

    def test_unknown_command(self):
        assert run(["fly"]) == 2

    def test_omegastar(self, tmp_path):
        out = tmp_path / "star"
        assert run(["omegastar", "--p", 3, "--out", out]) == 0
        data = json.loads((out / "omegastar.json").read_text())
        assert data["omega_star"] <= 0.3334
        assert data["omega_star_le_omega_p"] is True

    def test_spectrum(self, tmp_path):
        out = tmp_path / "spec"
        assert run(["spectrum", "--p", 3, "--omega", 1.0, "--out", out]) == 0
        header, rows = read_table(out / "spectrum_plus.csv")
        assert header == ["p", "omega", "a", "eigenvalue_index", "eigenvalue", "residual"]
        assert float(rows[0][4]) == pytest.approx(-3.0, rel=1e-6)
        _, growth = read_table(out / "growth.csv")
        assert float(growth[0][4]) == pytest.approx(1.4688099, rel=1e-6)
        assert_manifest_complete(out)

    def test_groundstate_deterministic(self, tmp_path):
        outs = [tmp_path / "a", tmp_path / "b"]
        for out in outs:
            assert run(["groundstate", "--p", 3, "--omega", 0.2, "--seed", 7,
                        "--second-eigenvalue", "--out", out]) == 0
        assert (outs[0] / "groundstate.csv").read_bytes() == (outs[1] / "groundstate.csv"
                                                               ).read_bytes()
        fields_a = sorted((outs[0] / "fields").iterdir())
        assert fields_a
        for f in fields_a:
            assert f.read_bytes() == (outs[1] / "fields" / f.name).read_bytes()
        q = read_field(next(f for f in fields_a if f.suffix == ".wgf"))
        assert q.grid.p == 3.0
        assert_manifest_complete(outs[0])

    def test_evolve(self, tmp_path):
        out = tmp_path / "ev"
        assert run(["evolve", "--p", 3, "--omega", 1.0, "--delta", 1e-4, "--t-final", 1.0,
                    "--ny", 8, "--out", out, "--field-format", "csv"]) == 0
        header, rows = read_table(out / "trajectory.csv")
        assert header == ["t", "mass_drift", "energy_drift", "orbital_distance",
                          "mode1_amplitude"]
        assert len(rows) == 11
        assert (out / "final.csv").exists()
        assert json.loads((out / "evolve.json").read_text())["status"] == "completed"

    def test_evolve_rejects_unstable_step(self, tmp_path):
        assert run(["evolve", "--dt", 0.5, "--out", tmp_path / "ev"]) == 2

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "waveguide", "threshold", "--p", "2",
                               "--out", str(tmp_path / "m")], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr


@pytest.fixture(scope="module")
def scan(tmp_path_factory):
    root = tmp_path_factory.mktemp("scan")
    assert run(["threshold", "--p", 3, "--out", root / "threshold"]) == 0
    assert run(["omegastar", "--p", 3, "--out", root / "omegastar"]) == 0
    assert run(["groundstate", "--p", 3, "--omega-min", 0.1, "--omega-max", 0.6,
                "--omega-steps", 3, "--workers", 1, "--out", root / "gs"]) == 0
    assert run(["evolve", "--omega", 1.0, "--delta", 1e-4, "--t-final", 0.5, "--ny", 8,
                "--out", root / "ev"]) == 0
    return root


class TestReport:
    def test_summary(self, scan, tmp_path):
        out = tmp_path / "rep"
        assert run(["report", scan, "--out", out]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["threshold_estimates"][0]["omega_threshold"] == pytest.approx(
            1 / 3, abs=1e-4)
        assert summary["omega_star_estimates"][0]["omega_star"] <= 0.3334
        assert summary["omega_star_le_omega_p"] is True
        for name in ("gap_table.csv", "actions.png", "distance.png"):
            assert (out / name).exists()
        assert_manifest_complete(out)

    def test_rerun_is_byte_identical(self, scan, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(["report", scan, "--out", a]) == 0
        assert run(["report", scan, "--out", b]) == 0
        files = sorted(p.relative_to(a) for p in a.rglob("*")
                       if p.is_file() and p.name != "manifest.json")
        assert files
        for rel in files:
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
        # the manifests differ only in the recorded output path
        assert manifest(a)["files"] == manifest(b)["files"]

    def test_empty_directory(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert run(["report", empty, "--out", tmp_path / "rep"]) == 2
        assert "no run outputs" in capsys.readouterr().err

    def test_corrupt_input(self, tmp_path):
        bad = tmp_path / "bad"
        bad.mkdir()
        (bad / "threshold.csv").write_text("p,omega_threshold\n3,not-a-number\n")
        assert run(["report", bad, "--out", tmp_path / "rep"]) == 2
