"""Strict parsing of the two artifact kinds on small handcrafted files."""

import numpy as np
import pytest

from qpiston_figures.loader import load_distribution, load_thermo

THERMO = """\
# format = qpiston-thermo-1
# t_hot = 12.0
# t_cold = 2.0
t,energy,entropy,cop,regime
0,1.0,0.0,nan,engine
1,1.5,0.25,0.5,refrigerator
"""

DISTRIBUTION = """\
# time = 5.0
# representation = husimi
r,theta,P
0.0,0.0,1.0
0.0,3.14,2.0
1.0,0.0,3.0
1.0,3.14,4.0
"""


def write(tmp_path, text, name="case.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestThermo:
    def test_parses_metadata_and_columns(self, tmp_path):
        run = load_thermo(write(tmp_path, THERMO), required=("t", "energy", "cop"))
        assert run.meta_float("t_hot") == 12.0
        assert run.metadata["format"] == "qpiston-thermo-1"
        np.testing.assert_allclose(run.columns["energy"], [1.0, 1.5])
        assert np.isnan(run.columns["cop"][0]) and run.columns["cop"][1] == 0.5
        assert list(run.regime) == ["engine", "refrigerator"]
        assert len(run) == 2

    def test_missing_columns_listed_by_name(self, tmp_path):
        path = write(tmp_path, THERMO)
        with pytest.raises(ValueError, match="missing columns: ergotropy, j_cold"):
            load_thermo(path, required=("t", "ergotropy", "j_cold"))

    def test_empty_trajectory_names_missing_rows(self, tmp_path):
        header_only = "\n".join(THERMO.splitlines()[:4]) + "\n"
        path = write(tmp_path, header_only)
        with pytest.raises(ValueError, match="no data rows"):
            load_thermo(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nowhere.csv"):
            load_thermo(tmp_path / "nowhere.csv")

    def test_missing_metadata_key(self, tmp_path):
        run = load_thermo(write(tmp_path, THERMO))
        with pytest.raises(ValueError, match="missing 't_max'"):
            run.meta_float("t_max")

    def test_wrong_format_tag(self, tmp_path):
        path = write(tmp_path, THERMO.replace("qpiston-thermo-1", "qpiston-thermo-9"))
        with pytest.raises(ValueError, match="format tag"):
            load_thermo(path)


class TestDistribution:
    def test_reshapes_polar_grid(self, tmp_path):
        snap = load_distribution(write(tmp_path, DISTRIBUTION))
        assert snap.representation == "husimi"
        assert snap.meta_float("time") == 5.0
        np.testing.assert_allclose(snap.radii, [0.0, 1.0])
        np.testing.assert_allclose(snap.thetas, [0.0, 3.14])
        np.testing.assert_allclose(snap.values, [[1.0, 2.0], [3.0, 4.0]])

    def test_row_order_does_not_matter(self, tmp_path):
        lines = DISTRIBUTION.splitlines()
        shuffled = "\n".join(lines[:3] + [lines[6], lines[4], lines[5], lines[3]]) + "\n"
        snap = load_distribution(write(tmp_path, shuffled))
        np.testing.assert_allclose(snap.values, [[1.0, 2.0], [3.0, 4.0]])

    def test_incomplete_grid_rejected(self, tmp_path):
        truncated = "\n".join(DISTRIBUTION.splitlines()[:-1]) + "\n"
        with pytest.raises(ValueError, match="full r x theta grid"):
            load_distribution(write(tmp_path, truncated))

    def test_missing_value_column(self, tmp_path):
        text = DISTRIBUTION.replace("theta,P", "theta,weight")
        with pytest.raises(ValueError, match="P or Q"):
            load_distribution(write(tmp_path, text))

    def test_empty_snapshot(self, tmp_path):
        header_only = "\n".join(DISTRIBUTION.splitlines()[:3]) + "\n"
        with pytest.raises(ValueError, match="no data rows"):
            load_distribution(write(tmp_path, header_only))
