"""Readers for the machine's CSV artifacts.

Both artifact kinds start with '# key = value' metadata lines followed by a
header row and data rows.  Parsing is strict: a figure that silently
tolerated a missing column or an empty trajectory would render an empty
panel instead of failing, so both are hard errors that name what is absent.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

THERMO_FORMAT = "qpiston-thermo-1"


def _read_sections(path: Path) -> tuple[dict[str, str], list[str], list[list[str]]]:
    if not path.exists():
        raise FileNotFoundError(f"{path} does not exist")
    metadata: dict[str, str] = {}
    header: list[str] | None = None
    rows: list[list[str]] = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, sep, value = line.lstrip("# ").partition(" = ")
                if sep:
                    metadata[key.strip()] = value.strip()
                continue
            if header is None:
                header = [c.strip() for c in line.split(",")]
            else:
                rows.append(line.split(","))
    if header is None:
        raise ValueError(f"{path} has no header row")
    return metadata, header, rows


def _meta_float(metadata: dict[str, str], key: str, path: Path) -> float:
    if key not in metadata:
        raise ValueError(f"{path} metadata is missing '{key}'")
    return float(metadata[key])


@dataclass(frozen=True)
class Trajectory:
    """One thermodynamics CSV: metadata plus named numeric columns."""

    path: Path
    metadata: dict[str, str]
    columns: dict[str, np.ndarray]
    regime: np.ndarray

    def meta_float(self, key: str) -> float:
        return _meta_float(self.metadata, key, self.path)

    def __len__(self) -> int:
        return len(self.regime)


def load_thermo(path, required: tuple[str, ...] = ("t",)) -> Trajectory:
    """Load a thermodynamics CSV; `required` lists every column the caller
    will touch, and any that are absent are reported together by name."""
    path = Path(path)
    metadata, header, rows = _read_sections(path)
    tag = metadata.get("format")
    if tag is not None and tag != THERMO_FORMAT:
        raise ValueError(f"{path} has format tag '{tag}', expected '{THERMO_FORMAT}'")
    missing = [name for name in required if name not in header]
    if missing:
        raise ValueError(f"{path} is missing columns: {', '.join(missing)}")
    if not rows:
        raise ValueError(f"{path} has no data rows (header only)")
    table = np.asarray(rows, dtype=object)
    columns: dict[str, np.ndarray] = {}
    regime = np.asarray([""], dtype=object)
    for i, name in enumerate(header):
        if name == "regime":
            regime = table[:, i].astype(str)
        else:
            columns[name] = table[:, i].astype(float)
    return Trajectory(path, metadata, columns, regime)


@dataclass(frozen=True)
class Snapshot:
    """One phase-space distribution CSV on its polar grid."""

    path: Path
    metadata: dict[str, str]
    radii: np.ndarray
    thetas: np.ndarray
    values: np.ndarray  # shape (radii, thetas)

    @property
    def representation(self) -> str:
        return self.metadata.get("representation", "")

    def meta_float(self, key: str) -> float:
        return _meta_float(self.metadata, key, self.path)


def load_distribution(path) -> Snapshot:
    path = Path(path)
    metadata, header, rows = _read_sections(path)
    missing = [name for name in ("r", "theta") if name not in header]
    if not any(name in header for name in ("P", "Q")):
        missing.append("P or Q")
    if missing:
        raise ValueError(f"{path} is missing columns: {', '.join(missing)}")
    if not rows:
        raise ValueError(f"{path} has no data rows (header only)")
    table = np.asarray(rows, dtype=object)
    value_col = "P" if "P" in header else "Q"
    r = table[:, header.index("r")].astype(float)
    theta = table[:, header.index("theta")].astype(float)
    p = table[:, header.index(value_col)].astype(float)
    radii, r_index = np.unique(r, return_inverse=True)
    thetas, t_index = np.unique(theta, return_inverse=True)
    values = np.full((radii.size, thetas.size), np.nan)
    values[r_index, t_index] = p
    if np.isnan(values).any():
        raise ValueError(f"{path} does not cover a full r x theta grid")
    return Snapshot(path, metadata, radii, thetas, values)
