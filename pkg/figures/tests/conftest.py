"""Shared fixture: artifact CSVs are produced by the qpiston command line,
which is the only interface this package consumes."""

import shutil
import subprocess

import pytest

PRESETS = ("engine-coherent", "engine-fock", "fridge-fock", "fridge-thermal")


@pytest.fixture(scope="session")
def artifact_dir(tmp_path_factory):
    qpiston = shutil.which("qpiston")
    if qpiston is None:
        raise RuntimeError(
            "these tests generate their fixture CSVs with the qpiston command; "
            "install the simulator package first"
        )
    root = tmp_path_factory.mktemp("artifacts")
    for preset in PRESETS:
        shown = subprocess.run(
            [qpiston, "presets", "show", preset],
            check=True,
            capture_output=True,
            text=True,
        )
        ini = root / f"{preset}.ini"
        ini.write_text(shown.stdout, encoding="utf-8")
        subprocess.run(
            [qpiston, "run", str(ini), "--out", str(root)],
            check=True,
            capture_output=True,
            text=True,
        )
    return root
