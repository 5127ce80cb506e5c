"""Figure builders over the machine's CSV artifacts.

Every physics number in a panel originates in the CSVs: curves are drawn
as stored, and reference lines are recomputed from the metadata
temperatures on every render, never hard-coded, so figure and data cannot
drift apart.  Rendering is deterministic: identical inputs give
byte-identical images.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .loader import Snapshot, load_distribution, load_thermo

DPI = 150
PNG_METADATA = {"Software": "qpiston-figures"}


@dataclass(frozen=True)
class FigureSpec:
    name: str
    description: str
    inputs: tuple[str, ...]
    build: Callable[[Path], tuple[plt.Figure, dict[str, float]]]


@dataclass(frozen=True)
class RenderResult:
    name: str
    path: Path
    references: dict[str, float]


def _phase_plane(ax, fig, snapshot: Snapshot, title: str) -> None:
    if snapshot.representation != "husimi":
        raise ValueError(
            f"{snapshot.path} carries representation "
            f"'{snapshot.representation or 'unknown'}'; phase-plane panels "
            f"need husimi snapshots"
        )
    # close the angular seam so the mesh has no radial gap at theta = 0
    thetas = np.append(snapshot.thetas, snapshot.thetas[0] + 2.0 * np.pi)
    values = np.concatenate([snapshot.values, snapshot.values[:, :1]], axis=1)
    theta_grid, r_grid = np.meshgrid(thetas, snapshot.radii)
    x = r_grid * np.cos(theta_grid)
    y = r_grid * np.sin(theta_grid)
    mesh = ax.pcolormesh(x, y, values, shading="gouraud", cmap="magma", rasterized=True)
    ax.set_aspect("equal")
    ax.set_xlabel(r"Re $\beta$")
    ax.set_ylabel(r"Im $\beta$")
    ax.set_title(title)
    fig.colorbar(mesh, ax=ax, label="Husimi density")


def _build_engine(input_dir: Path) -> tuple[plt.Figure, dict[str, float]]:
    coherent = load_thermo(
        input_dir / "engine-coherent_thermo.csv",
        required=("t", "ergotropy", "eta_max", "t_eff"),
    )
    fock = load_thermo(input_dir / "engine-fock_thermo.csv", required=("t", "ergotropy"))
    snapshot = load_distribution(input_dir / "engine-coherent_distribution.csv")
    t_hot = coherent.meta_float("t_hot")
    t_cold = coherent.meta_float("t_cold")
    carnot = 1.0 - t_cold / t_hot
    references = {"carnot_efficiency": carnot}

    fig, axes = plt.subplots(1, 3, figsize=(12.5, 3.8), dpi=DPI)

    ax = axes[0]
    for run, label, color in ((coherent, "coherent", "tab:blue"), (fock, "fock", "tab:orange")):
        delta = run.columns["ergotropy"] - run.columns["ergotropy"][0]
        ax.plot(run.columns["t"], delta, color=color, label=label)
    ax.axhline(0.0, color="0.75", lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel(r"$\Delta W_{\mathrm{Max}}$")
    ax.set_title("work capacity change")
    ax.legend(frameon=False)

    ax = axes[1]
    t = coherent.columns["t"]
    ax.plot(t, coherent.columns["eta_max"], color="tab:blue", label="max efficiency")
    ax.plot(
        t,
        1.0 - coherent.columns["t_eff"] / t_hot,
        color="tab:green",
        label=r"bound $1 - T_P/T_H$",
    )
    ax.axhline(carnot, color="tab:red", ls="--", label=rf"Carnot $1 - T_C/T_H$ = {carnot:.3f}")
    ax.set_xlabel("t")
    ax.set_ylabel("efficiency")
    ax.set_ylim(0.0, 1.05)
    ax.set_title("efficiency and bounds")
    ax.legend(frameon=False, fontsize=8)

    _phase_plane(axes[2], fig, snapshot, f"piston at t = {snapshot.meta_float('time'):g}")
    fig.tight_layout()
    return fig, references


def _build_fridge(input_dir: Path) -> tuple[plt.Figure, dict[str, float]]:
    fock = load_thermo(
        input_dir / "fridge-fock_thermo.csv", required=("t", "cop", "entropy", "t_eff")
    )
    thermal = load_thermo(
        input_dir / "fridge-thermal_thermo.csv", required=("t", "cop", "entropy", "t_eff")
    )
    snapshot = load_distribution(input_dir / "fridge-thermal_distribution.csv")
    t_hot = fock.meta_float("t_hot")
    t_cold = fock.meta_float("t_cold")
    carnot_cop = t_cold / (t_hot - t_cold)
    references = {"carnot_cop": carnot_cop}

    fig, axes = plt.subplots(1, 3, figsize=(12.5, 3.8), dpi=DPI)

    ax = axes[0]
    # the measured COP curves coincide on matched trajectories, so the
    # second one is dashed to keep both visible
    for run, label, color, ls in (
        (fock, "fock", "tab:orange", "-"),
        (thermal, "thermal", "tab:purple", "--"),
    ):
        t = run.columns["t"]
        cop = run.columns["cop"]
        keep = np.isfinite(cop) & (t > 0)
        ax.plot(t[keep], cop[keep], color=color, ls=ls, label=label)
    # absorption-style bound along the thermal run, from its stored piston
    # temperature and the metadata bath temperatures
    t_eff = thermal.columns["t_eff"]
    keep = (thermal.columns["t"] > 0) & (t_eff > 0)
    ax.plot(
        thermal.columns["t"][keep],
        carnot_cop * (1.0 - t_hot / t_eff[keep]),
        color="0.4",
        ls=":",
        label="absorption bound",
    )
    ax.axhline(carnot_cop, color="tab:red", ls="--", label=f"Carnot COP = {carnot_cop:.2f}")
    ax.set_xscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("COP")
    ax.set_title("cooling performance")
    ax.legend(frameon=False, fontsize=8)

    ax = axes[1]
    for run, label, color in ((fock, "fock", "tab:orange"), (thermal, "thermal", "tab:purple")):
        keep = run.columns["t"] > 0
        ax.plot(run.columns["t"][keep], run.columns["entropy"][keep], color=color, label=label)
    ax.set_xscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel(r"$S(\rho_P)$")
    ax.set_title("piston entropy")
    ax.legend(frameon=False)

    _phase_plane(axes[2], fig, snapshot, f"piston at t = {snapshot.meta_float('time'):g}")
    fig.tight_layout()
    return fig, references


FIGURES: dict[str, FigureSpec] = {
    spec.name: spec
    for spec in (
        FigureSpec(
            "engine",
            "work capacity growth, efficiency against its bounds, final phase plane",
            (
                "engine-coherent_thermo.csv",
                "engine-fock_thermo.csv",
                "engine-coherent_distribution.csv",
            ),
            _build_engine,
        ),
        FigureSpec(
            "fridge",
            "COP against Carnot and absorption bounds, piston entropy, final phase plane",
            (
                "fridge-fock_thermo.csv",
                "fridge-thermal_thermo.csv",
                "fridge-thermal_distribution.csv",
            ),
            _build_fridge,
        ),
    )
}


def render(name: str, input_dir, output_dir) -> RenderResult:
    if name not in FIGURES:
        raise ValueError(f"unknown figure '{name}'; known: {', '.join(sorted(FIGURES))}")
    fig, references = FIGURES[name].build(Path(input_dir))
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    path = output_dir / f"{name}.png"
    fig.savefig(path, dpi=DPI, metadata=PNG_METADATA)
    plt.close(fig)
    return RenderResult(name, path, references)
