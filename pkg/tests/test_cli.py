"""Command line behavior: exit codes, artifacts, and printed output."""

import sys
import types

import pytest

import qpiston
from qpiston.cli import EXIT_ACCEPTANCE, EXIT_CONFIG, EXIT_OK, EXIT_PHYSICS, main
from qpiston.scenarios import preset_names, preset_text

from test_scenarios import base_sections, render


def write_ini(tmp_path, sections, name="case.ini"):
    path = tmp_path / name
    path.write_text(render(sections), encoding="utf-8")
    return path


class TestRunCommand:
    def test_successful_run(self, tmp_path, capsys):
        sections = base_sections()
        sections["run"]["outputs"] = "thermo_csv,report"
        path = write_ini(tmp_path, sections)
        code = main(["run", str(path), "--out", str(tmp_path / "out")])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "wrote" in out
        assert "run report: case" in out
        assert (tmp_path / "out" / "case_thermo.csv").exists()
        assert (tmp_path / "out" / "case_report.txt").exists()

    def test_missing_file_is_config_error(self, tmp_path, capsys):
        code = main(["run", str(tmp_path / "absent.ini")])
        assert code == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_unknown_key_is_config_error(self, tmp_path, capsys):
        sections = base_sections()
        sections["machine"]["mass"] = "1.0"
        path = write_ini(tmp_path, sections)
        code = main(["run", str(path), "--out", str(tmp_path)])
        assert code == EXIT_CONFIG
        assert "unknown keys: mass" in capsys.readouterr().err

    def test_undefined_qubit_rates_are_physics_error(self, tmp_path, capsys):
        # baths that drive the sidebands but never the qubit transition leave
        # the qubit populations undefined
        sections = base_sections()
        for bath in ("hot", "cold"):
            sections[bath] = {
                "temperature": sections[bath]["temperature"],
                "spectrum": "flat",
                "amplitude": "0.01",
                "cutoff": "9.0",
            }
        path = write_ini(tmp_path, sections)
        code = main(["run", str(path), "--out", str(tmp_path)])
        assert code == EXIT_PHYSICS
        assert "physics audit failure" in capsys.readouterr().err

    def test_truncation_is_physics_error(self, tmp_path, capsys):
        sections = base_sections()
        sections["machine"]["n_fock"] = "6"
        sections["initial"] = {"family": "thermal", "nbar": "2.0"}
        path = write_ini(tmp_path, sections)
        code = main(["run", str(path), "--out", str(tmp_path)])
        assert code == EXIT_PHYSICS
        err = capsys.readouterr().err
        assert "physics audit failure" in err


class TestSweepCommand:
    def test_sweep_ok(self, tmp_path, capsys):
        path = write_ini(tmp_path, base_sections())
        out = tmp_path / "sweep"
        code = main(
            [
                "sweep",
                str(path),
                "--axis",
                "initial_piston.alpha",
                "--values",
                "0.5,1.0",
                "--out",
                str(out),
            ]
        )
        assert code == EXIT_OK
        stdout = capsys.readouterr().out
        assert stdout.count(": ok") == 2
        assert (out / "sweep_index.csv").exists()

    def test_sweep_reports_failed_values(self, tmp_path, capsys):
        path = write_ini(tmp_path, base_sections())
        out = tmp_path / "sweep"
        code = main(
            ["sweep", str(path), "--axis", "config.g", "--values", "0.05,5.0", "--out", str(out)]
        )
        assert code == EXIT_PHYSICS
        stdout = capsys.readouterr().out
        assert ": ok" in stdout
        assert ": error" in stdout

    def test_bad_values_string(self, tmp_path, capsys):
        path = write_ini(tmp_path, base_sections())
        code = main(["sweep", str(path), "--axis", "config.g", "--values", "a,b"])
        assert code == EXIT_CONFIG


class TestPresetsCommand:
    def test_list(self, capsys):
        assert main(["presets", "list"]) == EXIT_OK
        out = capsys.readouterr().out
        for name in preset_names():
            assert f"{name}: " in out

    def test_show(self, capsys):
        assert main(["presets", "show", "engine-coherent"]) == EXIT_OK
        assert capsys.readouterr().out == preset_text("engine-coherent")

    def test_show_without_name(self, capsys):
        assert main(["presets", "show"]) == EXIT_CONFIG

    def test_show_unknown(self, capsys):
        assert main(["presets", "show", "toaster"]) == EXIT_CONFIG

    def test_shown_preset_runs(self, tmp_path, capsys):
        text = preset_text("fridge-thermal")
        path = tmp_path / "fridge.ini"
        # shrink the horizon so the round trip stays fast
        text = text.replace("t_max = 250000.0", "t_max = 5000.0")
        path.write_text(text, encoding="utf-8")
        code = main(["run", str(path), "--out", str(tmp_path / "out")])
        assert code == EXIT_OK
        assert (tmp_path / "out" / "fridge-thermal_thermo.csv").exists()


class TestValidateCommand:
    def _install_fake(self, monkeypatch, results):
        # patch both the module table and the package attribute: once the
        # real submodule has been imported, `from . import acceptance`
        # resolves through the attribute
        module = types.ModuleType("qpiston.acceptance")
        module.run_all = lambda: results
        monkeypatch.setitem(sys.modules, "qpiston.acceptance", module)
        monkeypatch.setattr(qpiston, "acceptance", module, raising=False)

    def test_all_pass(self, monkeypatch, capsys):
        result = types.SimpleNamespace(name="check-one", passed=True, detail="fine")
        self._install_fake(monkeypatch, [result])
        assert main(["validate"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "PASS check-one: fine" in out
        assert "1 of 1 acceptance checks passed" in out

    def test_failure_sets_exit_code(self, monkeypatch, capsys):
        results = [
            types.SimpleNamespace(name="good", passed=True, detail="fine"),
            types.SimpleNamespace(name="bad", passed=False, detail="off by 7%"),
        ]
        self._install_fake(monkeypatch, results)
        assert main(["validate"]) == EXIT_ACCEPTANCE
        out = capsys.readouterr().out
        assert "FAIL bad: off by 7%" in out
        assert "1 of 2 acceptance checks passed" in out
