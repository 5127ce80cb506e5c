"""Scenario configuration, execution, presets and parameter sweeps.

A scenario bundles a machine configuration, a backend choice, an initial
piston state and an output plan.  Scenario files are flat INI text:

    [machine]   omega0, nu, g, coupling (dispersive|spin_boson), n_fock,
                delta (spin_boson only)
    [hot]       temperature, spectrum (flat|ohmic|lorentzian|tabulated)
    [cold]      with its shape keys (flat: amplitude [, cutoff]; ohmic:
                amplitude, cutoff; lorentzian: amplitude, center, width;
                tabulated: path), plus optional filter_omega, filter_gamma
                (both or neither)
    [initial]   family (coherent|thermal|displaced_thermal|fock|squeezed|
                cat) and its parameters: alpha_re [, alpha_im], nbar, n,
                r [, phi], theta
    [run]       backend (full_me|reduced), t_max, dt, record_stride
                (default 1), outputs (comma list drawn from thermo_csv,
                distribution_csv, report), name
    [rates]     optional gamma, dee: overrides the bath-derived piston
                rates (reduced backend only; heat currents are then
                reported as zero since no bath produced them)

Unknown sections or keys are hard errors, as are values outside the
validated domain.  Runs integrate on the record grid (spacing
dt * record_stride): the generator is time independent, so one exact
exponential per interval reproduces the micro-stepped trajectory, and the
truncation audit runs at every record.  dt itself is still validated
against the fastest system frequency (dt * max(omega0, nu, peak bath
response) <= 0.1) so that finite-difference rates computed from the
records stay meaningful.

Every run is deterministic: the same scenario writes byte-identical CSV,
distribution and report files.  All files are written atomically
(temp file + rename) and carry '#'-prefixed metadata including the
canonical config hash, package version and backend.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import math
import os
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, is_dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .baths import (
    BathSpec,
    FilterSpec,
    FlatSpectrum,
    LorentzianSpectrum,
    OhmicSpectrum,
    lamb_shift,
    load_tabulated,
)
from .lindblad import (
    MachineConfig,
    RatePair,
    build_liouvillian,
    evolve,
    reduce_to_piston,
    reduced_heat_coefficients,
    tls_steady_populations,
)
from .operators import HilbertDims, partial_trace_tls
from .phase_space import (
    FAMILY_KINDS,
    AnalyticFamily,
    drift_occupation,
    distribution_to_csv,
    husimi_distribution,
    make_polar_grid,
    reduced_evolve,
)
from .thermo import (
    engine_efficiency,
    records_to_csv,
    refrigeration_cop,
    thermo_records,
    work_capacity_change,
)

BACKENDS = ("full_me", "reduced")
OUTPUT_KINDS = ("thermo_csv", "distribution_csv", "report")
DT_FREQUENCY_BOUND = 0.1


class ConfigError(ValueError):
    """A scenario file or scenario value is invalid."""


# ---------------------------------------------------------------------------
# scenario type


@dataclass(frozen=True)
class Scenario:
    name: str
    config: MachineConfig
    backend: str
    initial_piston: AnalyticFamily
    t_max: float
    dt: float
    record_stride: int = 1
    outputs: tuple[str, ...] = ("thermo_csv", "report")
    rates_override: RatePair | None = None

    def __post_init__(self):
        if not self.name:
            raise ConfigError("scenario name must be nonempty")
        if self.backend not in BACKENDS:
            raise ConfigError(f"unknown backend {self.backend!r} (choose full_me or reduced)")
        if self.backend == "full_me" and self.config.coupling != "dispersive":
            raise ConfigError("full_me backend needs dispersive coupling; use the reduced backend")
        if self.backend == "full_me" and self.rates_override is not None:
            raise ConfigError("synthetic [rates] apply to the reduced backend only")
        if not isinstance(self.initial_piston, AnalyticFamily):
            raise ConfigError("initial_piston must be an AnalyticFamily")
        if self.dt <= 0 or self.t_max <= 0:
            raise ConfigError("dt and t_max must be positive")
        if self.record_stride < 1 or self.record_stride != int(self.record_stride):
            raise ConfigError("record_stride must be a positive integer")
        fastest = self._fastest_rate()
        if self.dt * fastest > DT_FREQUENCY_BOUND * (1.0 + 1e-12):
            raise ConfigError(
                f"dt = {self.dt} too coarse: dt * max(omega0, nu, peak response) = "
                f"{self.dt * fastest:.3g} exceeds {DT_FREQUENCY_BOUND}"
            )
        if len(record_times(self)) < 3:
            raise ConfigError(
                "record grid needs at least three records; shrink dt * record_stride or raise t_max"
            )
        if not self.outputs:
            raise ConfigError("outputs must name at least one artifact")
        seen = set()
        for kind in self.outputs:
            if kind not in OUTPUT_KINDS:
                raise ConfigError(f"unknown output {kind!r} (choose from {', '.join(OUTPUT_KINDS)})")
            if kind in seen:
                raise ConfigError(f"duplicate output {kind!r}")
            seen.add(kind)

    def _fastest_rate(self) -> float:
        cfg = self.config
        wp, wm = cfg.combination_frequencies()
        responses = [cfg.total_response(w) for f in (cfg.omega0, wp, wm) for w in (f, -f)]
        return max(cfg.omega0, cfg.nu, *responses)


def record_times(scenario: Scenario) -> np.ndarray:
    """The output grid: multiples of dt * record_stride up to t_max."""
    spacing = scenario.dt * scenario.record_stride
    count = int(math.floor(scenario.t_max / spacing + 1e-9))
    return spacing * np.arange(count + 1, dtype=float)


# ---------------------------------------------------------------------------
# INI parsing and canonical serialization

_SPECTRUM_KEYS = {
    "flat": ({"amplitude"}, {"cutoff"}),
    "ohmic": ({"amplitude", "cutoff"}, set()),
    "lorentzian": ({"amplitude", "center", "width"}, set()),
    "tabulated": ({"path"}, set()),
}
_FAMILY_KEYS = {
    "coherent": ({"alpha_re"}, {"alpha_im"}),
    "thermal": ({"nbar"}, set()),
    "displaced_thermal": ({"alpha_re", "nbar"}, {"alpha_im"}),
    "fock": ({"n"}, set()),
    "squeezed": ({"r"}, {"phi"}),
    "cat": ({"alpha_re", "theta"}, {"alpha_im"}),
}


def _check_keys(section: str, present: set, required: set, optional: set) -> None:
    missing = required - present
    if missing:
        raise ConfigError(f"[{section}] missing keys: {', '.join(sorted(missing))}")
    extra = present - required - optional
    if extra:
        raise ConfigError(f"[{section}] unknown keys: {', '.join(sorted(extra))}")


def _get_float(parser, section: str, key: str) -> float:
    raw = parser[section][key]
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} must be a number, got {raw!r}") from None


def _get_int(parser, section: str, key: str) -> int:
    raw = parser[section][key]
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} must be an integer, got {raw!r}") from None


def _parse_bath(parser, section: str, label: str, base_dir: Path) -> BathSpec:
    present = set(parser[section].keys())
    if "spectrum" not in present:
        raise ConfigError(f"[{section}] missing keys: spectrum")
    kind = parser[section]["spectrum"].strip()
    if kind not in _SPECTRUM_KEYS:
        raise ConfigError(
            f"[{section}] unknown spectrum {kind!r} (choose {', '.join(sorted(_SPECTRUM_KEYS))})"
        )
    required, optional = _SPECTRUM_KEYS[kind]
    _check_keys(
        section,
        present,
        {"temperature", "spectrum"} | required,
        optional | {"filter_omega", "filter_gamma"},
    )
    try:
        if kind == "flat":
            cutoff = _get_float(parser, section, "cutoff") if "cutoff" in present else None
            shape = FlatSpectrum(_get_float(parser, section, "amplitude"), cutoff=cutoff)
        elif kind == "ohmic":
            shape = OhmicSpectrum(
                _get_float(parser, section, "amplitude"), _get_float(parser, section, "cutoff")
            )
        elif kind == "lorentzian":
            shape = LorentzianSpectrum(
                _get_float(parser, section, "amplitude"),
                _get_float(parser, section, "center"),
                _get_float(parser, section, "width"),
            )
        else:
            raw = Path(parser[section]["path"])
            shape = load_tabulated(raw if raw.is_absolute() else base_dir / raw)
        filt = None
        if ("filter_omega" in present) != ("filter_gamma" in present):
            raise ConfigError(f"[{section}] filter_omega and filter_gamma come as a pair")
        if "filter_omega" in present:
            filt = FilterSpec(
                _get_float(parser, section, "filter_omega"),
                _get_float(parser, section, "filter_gamma"),
            )
        return BathSpec(label, _get_float(parser, section, "temperature"), shape, filt)
    except ConfigError:
        raise
    except (ValueError, OSError) as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def _parse_initial(parser) -> AnalyticFamily:
    present = set(parser["initial"].keys())
    if "family" not in present:
        raise ConfigError("[initial] missing keys: family")
    kind = parser["initial"]["family"].strip()
    if kind not in FAMILY_KINDS:
        raise ConfigError(
            f"[initial] unknown family {kind!r} (choose {', '.join(FAMILY_KINDS)})"
        )
    required, optional = _FAMILY_KEYS[kind]
    _check_keys("initial", present, {"family"} | required, optional)
    kwargs = {}
    if "alpha_re" in present:
        imag = _get_float(parser, "initial", "alpha_im") if "alpha_im" in present else 0.0
        kwargs["alpha"] = complex(_get_float(parser, "initial", "alpha_re"), imag)
    if "nbar" in present:
        kwargs["nbar"] = _get_float(parser, "initial", "nbar")
    if "n" in present:
        kwargs["n"] = _get_int(parser, "initial", "n")
    if "r" in present:
        kwargs["r"] = _get_float(parser, "initial", "r")
    if "phi" in present:
        kwargs["phi"] = _get_float(parser, "initial", "phi")
    if "theta" in present:
        kwargs["theta"] = _get_float(parser, "initial", "theta")
    try:
        return AnalyticFamily(kind, **kwargs)
    except ValueError as exc:
        raise ConfigError(f"[initial] {exc}") from exc


def parse_scenario(text: str, default_name: str = "scenario", base_dir: Path | None = None) -> Scenario:
    """Parse scenario INI text.  Unknown sections or keys are hard errors."""
    base_dir = Path(".") if base_dir is None else Path(base_dir)
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed scenario file: {exc}") from exc
    sections = set(parser.sections())
    required = {"machine", "hot", "cold", "initial", "run"}
    missing = required - sections
    if missing:
        raise ConfigError(f"missing sections: {', '.join(sorted(missing))}")
    unknown = sections - required - {"rates"}
    if unknown:
        raise ConfigError(f"unknown sections: {', '.join(sorted(unknown))}")

    _check_keys(
        "machine",
        set(parser["machine"].keys()),
        {"omega0", "nu", "g", "coupling", "n_fock"},
        {"delta"},
    )
    hot = _parse_bath(parser, "hot", "H", base_dir)
    cold = _parse_bath(parser, "cold", "C", base_dir)
    try:
        config = MachineConfig(
            omega0=_get_float(parser, "machine", "omega0"),
            nu=_get_float(parser, "machine", "nu"),
            g=_get_float(parser, "machine", "g"),
            coupling=parser["machine"]["coupling"].strip(),
            hot=hot,
            cold=cold,
            dims=HilbertDims(_get_int(parser, "machine", "n_fock")),
            delta=_get_float(parser, "machine", "delta") if "delta" in parser["machine"] else None,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[machine] {exc}") from exc

    initial = _parse_initial(parser)

    _check_keys(
        "run",
        set(parser["run"].keys()),
        {"backend", "t_max", "dt"},
        {"record_stride", "outputs", "name"},
    )
    outputs = ("thermo_csv", "report")
    if "outputs" in parser["run"]:
        parts = [p.strip() for p in parser["run"]["outputs"].split(",")]
        outputs = tuple(p for p in parts if p)
        if not outputs:
            raise ConfigError("[run] outputs must name at least one artifact")
    rates = None
    if "rates" in sections:
        _check_keys("rates", set(parser["rates"].keys()), {"gamma", "dee"}, set())
        try:
            rates = RatePair(
                _get_float(parser, "rates", "gamma"), _get_float(parser, "rates", "dee")
            )
        except ValueError as exc:
            raise ConfigError(f"[rates] {exc}") from exc
    return Scenario(
        name=parser["run"].get("name", default_name).strip(),
        config=config,
        backend=parser["run"]["backend"].strip(),
        initial_piston=initial,
        t_max=_get_float(parser, "run", "t_max"),
        dt=_get_float(parser, "run", "dt"),
        record_stride=_get_int(parser, "run", "record_stride")
        if "record_stride" in parser["run"]
        else 1,
        outputs=outputs,
        rates_override=rates,
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}") from exc
    return parse_scenario(text, default_name=path.stem, base_dir=path.parent)


def _spectrum_lines(shape) -> list[str]:
    if isinstance(shape, FlatSpectrum):
        lines = ["spectrum = flat", f"amplitude = {shape.amplitude!r}"]
        if shape.cutoff is not None:
            lines.append(f"cutoff = {shape.cutoff!r}")
        return lines
    if isinstance(shape, OhmicSpectrum):
        return [
            "spectrum = ohmic",
            f"amplitude = {shape.amplitude!r}",
            f"cutoff = {shape.cutoff!r}",
        ]
    if isinstance(shape, LorentzianSpectrum):
        return [
            "spectrum = lorentzian",
            f"amplitude = {shape.amplitude!r}",
            f"center = {shape.center!r}",
            f"width = {shape.width!r}",
        ]
    raise ValueError("tabulated spectra have no canonical scenario text")


def _initial_lines(family: AnalyticFamily) -> list[str]:
    lines = [f"family = {family.kind}"]
    if family.kind in ("coherent", "displaced_thermal", "cat"):
        lines.append(f"alpha_re = {family.alpha.real!r}")
        lines.append(f"alpha_im = {family.alpha.imag!r}")
    if family.kind in ("thermal", "displaced_thermal"):
        lines.append(f"nbar = {family.nbar!r}")
    if family.kind == "fock":
        lines.append(f"n = {family.n}")
    if family.kind == "squeezed":
        lines.append(f"r = {family.r!r}")
        lines.append(f"phi = {family.phi!r}")
    if family.kind == "cat":
        lines.append(f"theta = {family.theta!r}")
    return lines


def scenario_config_text(scenario: Scenario) -> str:
    """Canonical INI text: parsing it back yields an equal Scenario, and its
    SHA-256 is the config hash stamped into every output file."""
    cfg = scenario.config
    lines = [
        "[machine]",
        f"omega0 = {cfg.omega0!r}",
        f"nu = {cfg.nu!r}",
        f"g = {cfg.g!r}",
        f"coupling = {cfg.coupling}",
        f"n_fock = {cfg.dims.fock_cutoff}",
    ]
    if cfg.delta is not None:
        lines.append(f"delta = {cfg.delta!r}")
    for section, bath in (("hot", cfg.hot), ("cold", cfg.cold)):
        lines += ["", f"[{section}]", f"temperature = {bath.temperature!r}"]
        lines += _spectrum_lines(bath.base_spectrum)
        if bath.filter is not None:
            lines.append(f"filter_omega = {bath.filter.omega_f!r}")
            lines.append(f"filter_gamma = {bath.filter.gamma_f!r}")
    lines += ["", "[initial]"] + _initial_lines(scenario.initial_piston)
    lines += [
        "",
        "[run]",
        f"backend = {scenario.backend}",
        f"t_max = {scenario.t_max!r}",
        f"dt = {scenario.dt!r}",
        f"record_stride = {scenario.record_stride}",
        f"outputs = {','.join(scenario.outputs)}",
        f"name = {scenario.name}",
    ]
    if scenario.rates_override is not None:
        lines += [
            "",
            "[rates]",
            f"gamma = {scenario.rates_override.gamma!r}",
            f"dee = {scenario.rates_override.dee!r}",
        ]
    return "\n".join(lines) + "\n"


def config_sha256(scenario: Scenario) -> str:
    return hashlib.sha256(scenario_config_text(scenario).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# execution


@dataclass
class RunResult:
    scenario: Scenario
    times: np.ndarray
    records: list
    metadata: dict
    paths: dict
    report: str
    positivity_repairs: int


def _zero_response_everywhere(cfg: MachineConfig) -> bool:
    wp, wm = cfg.combination_frequencies()
    return all(
        cfg.total_response(w) == 0.0 for f in (cfg.omega0, wp, wm) for w in (f, -f)
    )


def _bath_rates(cfg: MachineConfig) -> RatePair:
    try:
        return reduce_to_piston(cfg)
    except ValueError:
        if _zero_response_everywhere(cfg):
            return RatePair(0.0, 0.0)
        raise


def _initial_tls_populations(cfg: MachineConfig) -> tuple[float, float]:
    try:
        return tls_steady_populations(cfg)
    except ValueError:
        if _zero_response_everywhere(cfg):
            return 0.0, 1.0
        raise


def _heat_arrays(cfg: MachineConfig, occupations: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if _zero_response_everywhere(cfg):
        zero = np.zeros_like(occupations)
        return zero, zero.copy()
    coeff = reduced_heat_coefficients(cfg)
    j_hot = coeff["H"][0] + coeff["H"][1] * occupations
    j_cold = coeff["C"][0] + coeff["C"][1] * occupations
    return j_hot, j_cold


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "-", name)


def _atomic_write(path: Path, writer) -> None:
    tmp = path.with_name(path.name + ".tmp")
    writer(tmp)
    os.replace(tmp, path)


def _validate_records(records) -> None:
    """Re-check the row invariants right before anything is written."""
    finite_fields = (
        "t", "energy", "entropy", "t_eff", "ergotropy", "w_bound",
        "j_hot", "j_cold", "power_max", "spohn_residual",
    )
    for rec in records:
        for name in finite_fields:
            if not math.isfinite(getattr(rec, name)):
                raise RuntimeError(f"record at t = {rec.t}: {name} is not finite")
        if rec.entropy < -1e-12:
            raise RuntimeError(f"record at t = {rec.t}: negative entropy {rec.entropy}")
        if rec.t_eff < 0.0:
            raise RuntimeError(f"record at t = {rec.t}: negative effective temperature")
        if rec.ergotropy < 0.0:
            raise RuntimeError(f"record at t = {rec.t}: negative ergotropy")
        slack = 1e-9 * max(1.0, abs(rec.w_bound))
        if rec.w_bound + slack < rec.ergotropy:
            raise RuntimeError(
                f"record at t = {rec.t}: work bound {rec.w_bound} below ergotropy {rec.ergotropy}"
            )
        if rec.regime not in ("engine", "refrigerator", "absorption", "relaxation"):
            raise RuntimeError(f"record at t = {rec.t}: unknown regime {rec.regime!r}")


def _run_metadata(scenario, rates, synthetic, repairs, times) -> dict:
    cfg = scenario.config
    drift_time = math.inf if rates.gamma == 0.0 else 1.0 / abs(rates.gamma)
    return {
        "format": "qpiston-thermo-1",
        "qpiston_version": __version__,
        "name": scenario.name,
        "backend": scenario.backend,
        "coupling": cfg.coupling,
        "config_sha256": config_sha256(scenario),
        "omega0": cfg.omega0,
        "nu": cfg.nu,
        "g": cfg.g,
        "n_fock": cfg.dims.fock_cutoff,
        "t_hot": cfg.hot.temperature,
        "t_cold": cfg.cold.temperature,
        "t_max": scenario.t_max,
        "dt": scenario.dt,
        "record_stride": scenario.record_stride,
        "records": len(times),
        "t_final": float(times[-1]),
        "initial_family": scenario.initial_piston.kind,
        "initial_mean_n": scenario.initial_piston.mean_n(),
        "gamma": rates.gamma,
        "dee": rates.dee,
        "synthetic_rates": "true" if synthetic else "false",
        "piston_period": 2.0 * math.pi / cfg.nu,
        "drift_time": drift_time,
        "positivity_repairs": repairs,
    }


def _spohn_tolerance(records) -> float:
    scale = max(
        (abs(r.j_hot) / r.t_hot + abs(r.j_cold) / r.t_cold for r in records), default=0.0
    )
    return max(1e-6 * scale, 1e-12)


def _build_report(scenario, records, metadata, synthetic) -> str:
    lines = [
        f"run report: {scenario.name}",
        f"backend: {scenario.backend}",
        f"coupling: {scenario.config.coupling}",
        f"config_sha256: {metadata['config_sha256']}",
        f"records: {len(records)}",
        f"time_range: {records[0].t!r} .. {records[-1].t!r}",
        f"piston_period: {metadata['piston_period']!r}",
        f"drift_time: {metadata['drift_time']!r}",
        f"rates: gamma = {metadata['gamma']!r}, dee = {metadata['dee']!r}, "
        f"synthetic = {metadata['synthetic_rates']}",
        f"positivity_repairs: {metadata['positivity_repairs']}",
    ]
    counts = Counter(r.regime for r in records)
    lines.append("regimes: " + " ".join(f"{k}={counts[k]}" for k in sorted(counts)))
    if synthetic:
        lines.append("spohn_violations: n/a (synthetic rates, no bath attribution)")
    else:
        tol = _spohn_tolerance(records)
        bad = sum(1 for r in records if r.spohn_residual < -tol)
        lines.append(f"spohn_violations: {bad} of {len(records)} (tolerance {tol!r})")
    eta_total = eta_bad = 0
    for rec in records:
        if rec.regime != "engine":
            continue
        report = engine_efficiency(rec)
        if math.isfinite(report["value"]) and math.isfinite(report["tp_bound"]):
            eta_total += 1
            eta_bad += 0 if report["within_tp_bound"] else 1
    lines.append(
        f"eta_bound: {eta_bad} violations in {eta_total} applicable records"
        if eta_total
        else "eta_bound: n/a (no applicable records)"
    )
    cop_total = cop_bad = 0
    for rec in records:
        if rec.regime not in ("refrigerator", "absorption"):
            continue
        report = refrigeration_cop(rec)
        if math.isfinite(report["value"]) and math.isfinite(report["bound"]):
            cop_total += 1
            cop_bad += 0 if report["within_bound"] else 1
    lines.append(
        f"cop_bound: {cop_bad} violations in {cop_total} applicable records"
        if cop_total
        else "cop_bound: n/a (no applicable records)"
    )
    lines.append(f"work_capacity_change: {work_capacity_change(records)!r}")
    last = records[-1]
    lines.append(
        f"final: mean_n = {last.energy / scenario.config.nu!r}, energy = {last.energy!r}, "
        f"entropy = {last.entropy!r}, ergotropy = {last.ergotropy!r}, t_eff = {last.t_eff!r}"
    )
    return "\n".join(lines) + "\n"


def _distribution_grid(scenario, rates, t_final):
    family = scenario.initial_piston
    m0 = family.mean_n()
    m_end = m0 * math.exp(-rates.gamma * t_final) + drift_occupation(rates, t_final)
    r_max = max(4.0, 2.0 * math.sqrt(max(m0, m_end)) + 4.0)
    return make_polar_grid(r_max, 257, 64)


def run(scenario: Scenario, out_dir) -> RunResult:
    """Execute one scenario and write its requested artifacts into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = scenario.config
    times = record_times(scenario)
    synthetic = scenario.rates_override is not None
    rates = scenario.rates_override if synthetic else _bath_rates(cfg)

    if scenario.backend == "reduced":
        rho0 = scenario.initial_piston.materialize(cfg.dims.fock_cutoff)
        evolution = reduced_evolve(rho0, rates, cfg.nu, times)
        piston_states = evolution.states
        occupations = np.array(
            [float(np.arange(s.shape[0]) @ np.real(np.diag(s))) for s in piston_states]
        )
        if synthetic:
            j_hot = np.zeros_like(occupations)
            j_cold = np.zeros_like(occupations)
        else:
            j_hot, j_cold = _heat_arrays(cfg, occupations)
    else:
        liou = build_liouvillian(cfg)
        p_excited, p_ground = _initial_tls_populations(cfg)
        rho0 = np.kron(
            np.diag([p_excited, p_ground]).astype(complex),
            scenario.initial_piston.materialize(cfg.dims.fock_cutoff),
        )
        evolution = evolve(liou, rho0, times)
        piston_states = [partial_trace_tls(rho, cfg.dims) for rho in evolution.states]
        j_hot = np.array([liou.heat_current(rho, "H") for rho in evolution.states])
        j_cold = np.array([liou.heat_current(rho, "C") for rho in evolution.states])

    records = thermo_records(
        times,
        piston_states,
        cfg.nu,
        j_hot,
        j_cold,
        cfg.hot.temperature,
        cfg.cold.temperature,
        gamma=rates.gamma,
    )
    _validate_records(records)
    metadata = _run_metadata(scenario, rates, synthetic, evolution.positivity_repairs, times)
    report = _build_report(scenario, records, metadata, synthetic)

    safe = _safe_name(scenario.name)
    paths = {}
    if "thermo_csv" in scenario.outputs:
        path = out / f"{safe}_thermo.csv"
        _atomic_write(path, lambda tmp: records_to_csv(records, tmp, metadata=metadata))
        paths["thermo_csv"] = path
    if "distribution_csv" in scenario.outputs:
        radii, thetas = _distribution_grid(scenario, rates, float(times[-1]))
        dist = husimi_distribution(piston_states[-1], radii, thetas)
        path = out / f"{safe}_distribution.csv"
        _atomic_write(
            path,
            lambda tmp: distribution_to_csv(dist, tmp, time=float(times[-1]), rates=rates),
        )
        paths["distribution_csv"] = path
    if "report" in scenario.outputs:
        path = out / f"{safe}_report.txt"
        _atomic_write(path, lambda tmp: Path(tmp).write_text(report, encoding="utf-8"))
        paths["report"] = path
    return RunResult(
        scenario=scenario,
        times=times,
        records=records,
        metadata=metadata,
        paths=paths,
        report=report,
        positivity_repairs=evolution.positivity_repairs,
    )


# ---------------------------------------------------------------------------
# presets


def _engine_config(n_fock: int = 48) -> MachineConfig:
    # The hot filter sits on omega_plus; its base amplitude is kept small so
    # the filtered wing at omega0 stays far below the cold bath there and the
    # inter-bath leak through the qubit is a fraction of a percent of the pump.
    hot = BathSpec("H", 12.0, FlatSpectrum(0.005, cutoff=24.0), FilterSpec(12.0, 0.1 * math.pi))
    cold = BathSpec("C", 2.0, FlatSpectrum(0.01, cutoff=20.0), FilterSpec(10.0, math.pi))
    return MachineConfig(10.0, 2.0, 0.1, "dispersive", hot, cold, HilbertDims(n_fock))


def _fridge_config(n_fock: int = 40) -> MachineConfig:
    # The cold base amplitude is kept small for the same reason: its wing at
    # omega0 would otherwise carry a constant hot-to-cold leak comparable to
    # the cooling current and shift the apparent cooling endpoint.
    hot = BathSpec("H", 1.618, FlatSpectrum(0.03, cutoff=8.0), FilterSpec(4.0, 0.5 * math.pi))
    cold_base = FlatSpectrum(0.003, cutoff=5.0)
    cold = BathSpec(
        "C", 1.456, cold_base, FilterSpec(2.0 - lamb_shift(cold_base, 2.0), 0.5 * math.pi)
    )
    return MachineConfig(4.0, 2.0, 0.05, "dispersive", hot, cold, HilbertDims(n_fock))


def _preset_engine_coherent() -> Scenario:
    return Scenario(
        name="engine-coherent",
        config=_engine_config(),
        backend="full_me",
        initial_piston=AnalyticFamily("coherent", alpha=1.0 + 0.0j),
        t_max=200.0,
        dt=0.01,
        record_stride=100,
        outputs=("thermo_csv", "distribution_csv", "report"),
    )


def _preset_engine_fock() -> Scenario:
    return Scenario(
        name="engine-fock",
        config=_engine_config(),
        backend="full_me",
        initial_piston=AnalyticFamily("fock", n=3),
        t_max=200.0,
        dt=0.01,
        record_stride=100,
        outputs=("thermo_csv", "report"),
    )


def _preset_fridge_fock() -> Scenario:
    return Scenario(
        name="fridge-fock",
        config=_fridge_config(),
        backend="full_me",
        initial_piston=AnalyticFamily("fock", n=2),
        t_max=250000.0,
        dt=0.02,
        record_stride=12500,
        outputs=("thermo_csv", "report"),
    )


def _preset_fridge_thermal() -> Scenario:
    return Scenario(
        name="fridge-thermal",
        config=_fridge_config(),
        backend="reduced",
        initial_piston=AnalyticFamily("thermal", nbar=2.0),
        t_max=250000.0,
        dt=0.02,
        record_stride=12500,
        outputs=("thermo_csv", "distribution_csv", "report"),
    )


PRESETS = {
    "engine-coherent": (
        _preset_engine_coherent,
        "spectrally separated engine amplifying a coherent piston: positive power "
        "output and growing work capacity",
    ),
    "engine-fock": (
        _preset_engine_fock,
        "the same engine pumping a three-quantum Fock piston: energy grows while "
        "the extractable work decays",
    ),
    "fridge-fock": (
        _preset_fridge_fock,
        "filtered two-bath refrigerator driven by a two-quantum Fock piston: cold "
        "heat uptake until the occupation reaches the cooling floor",
    ),
    "fridge-thermal": (
        _preset_fridge_thermal,
        "the same refrigerator with a thermal piston at occupation 2: "
        "absorption-style cooling sustained without work capacity",
    ),
}


def preset_names() -> tuple[str, ...]:
    return tuple(PRESETS)


def preset_scenario(name: str) -> Scenario:
    try:
        builder, _ = PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r} (choose {', '.join(PRESETS)})"
        ) from None
    return builder()


def preset_text(name: str) -> str:
    """Scenario file for a preset: a description comment plus canonical text."""
    builder, description = PRESETS[name] if name in PRESETS else (None, None)
    if builder is None:
        raise ConfigError(f"unknown preset {name!r} (choose {', '.join(PRESETS)})")
    scenario = builder()
    clocks = (
        f"# clocks: piston period 2 pi / nu = {2.0 * math.pi / scenario.config.nu!r}, "
        f"drift time 1/|Gamma| printed in every run report"
    )
    return f"# preset: {name}\n# {description}\n{clocks}\n{scenario_config_text(scenario)}"


# ---------------------------------------------------------------------------
# parameter sweeps


def _coerce_like(current, value, path: str):
    if isinstance(current, bool) or not isinstance(current, (int, float, complex)):
        raise ConfigError(f"parameter path {path!r} does not address a numeric field")
    if isinstance(current, int):
        if float(value) != int(value):
            raise ConfigError(f"parameter path {path!r} needs an integer, got {value!r}")
        return int(value)
    if isinstance(current, float):
        return float(value)
    return complex(value)


def set_scenario_value(scenario: Scenario, path: str, value) -> Scenario:
    """Return a copy of the scenario with the numeric field at a dotted
    path (for example config.g, config.hot.temperature, initial_piston.alpha,
    t_max) replaced.  Domain validation reruns, so invalid values raise."""
    parts = path.split(".")

    def descend(obj, remaining):
        if not is_dataclass(obj):
            raise ConfigError(
                f"parameter path {path!r}: {type(obj).__name__} is not a parameter group"
            )
        name = remaining[0]
        if name.startswith("_") or name not in {f.name for f in fields(obj)}:
            raise ConfigError(f"parameter path {path!r}: unknown field {name!r}")
        current = getattr(obj, name)
        if len(remaining) == 1:
            return replace(obj, **{name: _coerce_like(current, value, path)})
        return replace(obj, **{name: descend(current, remaining[1:])})

    return descend(scenario, parts)


def _format_value(value) -> str:
    if isinstance(value, (int, float)):
        return f"{value:.12g}"
    return repr(value)


def sweep(scenario: Scenario, axis: str, values, out_dir, workers: int = 1) -> list[dict]:
    """Run one scenario per value of a swept parameter.  Each run lands in
    its own subdirectory; failures are recorded in the combined index
    without aborting sibling runs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    leaf = axis.split(".")[-1]
    # resolve the path once up front so a bad axis fails before any run
    set_scenario_value(scenario, axis, values[0])

    def job(value):
        label = _format_value(value)
        directory = _safe_name(f"{axis}={label}")
        entry = {
            "value": label,
            "status": "ok",
            "name": "",
            "directory": directory,
            "thermo_csv": "",
            "error": "",
        }
        try:
            candidate = set_scenario_value(scenario, axis, value)
            candidate = replace(candidate, name=f"{scenario.name}-{leaf}-{label}")
            entry["name"] = candidate.name
            result = run(candidate, out / directory)
            if "thermo_csv" in result.paths:
                entry["thermo_csv"] = str(
                    Path(directory) / result.paths["thermo_csv"].name
                )
        except Exception as exc:  # noqa: BLE001 - sibling runs must continue
            entry["status"] = "error"
            entry["error"] = f"{type(exc).__name__}: {exc}"
        return entry

    if workers <= 1:
        entries = [job(v) for v in values]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(job, values))

    buffer = io.StringIO()
    buffer.write(f"# axis = {axis}\n")
    buffer.write(f"# base_config_sha256 = {config_sha256(scenario)}\n")
    buffer.write(f"# qpiston_version = {__version__}\n")
    writer = csv.DictWriter(
        buffer, fieldnames=("value", "status", "name", "directory", "thermo_csv", "error")
    )
    writer.writeheader()
    writer.writerows(entries)
    index_path = out / "sweep_index.csv"
    _atomic_write(index_path, lambda tmp: Path(tmp).write_text(buffer.getvalue(), encoding="utf-8"))
    return entries
