"""Thermodynamic accounting for the piston.

Work capacity is measured by nonpassivity: the ergotropy of a state is the
energy gap to its passive companion (populations rearranged to decrease with
energy), and the Gibbs-bound work capacity compares against the thermal state
with the same entropy instead.  The effective piston temperature T_P is the
temperature of that entropy-matched oscillator Gibbs state, which turns the
entropy-rate term T_P * dS/dt into the heat part of the energy flow and
leaves

    P_max = d<H_P>/dt - T_P dS_P/dt

as the maximal extractable power.  Efficiency and COP bounds, the cooling
window, the critical piston temperature and the semiclassical maser limit
are closed-form consequences of the reduced drift/diffusion rates.

Time derivatives along a recorded trajectory are centered finite differences
on the recorded grid; every interior record carries a flag that is set when
a doubled-stencil derivative differs by more than 1%, which is the signal
that the recording stride is too coarse for rate-based quantities.

Sign conventions: heat currents are positive when energy flows from the bath
into the machine, so a working refrigerator has j_cold > 0 while the piston
energy decreases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .baths import response, spectral_separation_report
from .lindblad import MachineConfig, RatePair, TRUNCATION_LIMIT, reduce_to_piston
from .operators import eigh_spectrum, thermal_entropy, von_neumann_entropy
from .phase_space import AnalyticFamily, PistonState, drift_occupation

PURE_ENTROPY_TOL = 1e-12
ERGOTROPY_ZERO_TOL = 1e-12
UNITARITY_TOL = 1e-10
ENTROPY_PRESERVATION_TOL = 1e-8
OCCUPATION_REL_TOL = 1e-10
FD_FLAG_THRESHOLD = 0.01
SEPARATION_THRESHOLD = 100.0

CSV_COLUMNS = (
    "t",
    "energy",
    "entropy",
    "t_eff",
    "ergotropy",
    "w_bound",
    "j_hot",
    "j_cold",
    "power_max",
    "eta_max",
    "cop",
    "spohn_residual",
    "regime",
)


@dataclass(frozen=True)
class ThermoRecord:
    """One thermodynamic snapshot along a piston trajectory.

    The first thirteen fields are the CSV columns (fixed order); the rest are
    carried for bound evaluation but not serialized.
    """

    t: float
    energy: float
    entropy: float
    t_eff: float
    ergotropy: float
    w_bound: float
    j_hot: float
    j_cold: float
    power_max: float
    eta_max: float
    cop: float
    spohn_residual: float
    regime: str
    t_hot: float = math.nan
    t_cold: float = math.nan
    de_dt: float = math.nan
    s_dot: float = math.nan
    fd_flagged: bool = False


@dataclass(frozen=True)
class MaserLimit:
    """Semiclassical closed forms for a large coherent piston amplitude."""

    alpha0_sq: float
    j_hot: float
    power: float
    gamma: float
    eta: float


def ergotropy(rho: np.ndarray, h: np.ndarray) -> tuple[float, np.ndarray]:
    """Maximal unitary-extractable work and the passive companion state.

    The passive state pairs the eigenvalues of rho sorted descending with the
    eigenvalues of h sorted ascending.  Ties among rho eigenvalues are broken
    by their eigenvector's energy expectation (ascending) so the companion is
    deterministic; the work value itself never depends on the tie order.
    Work below 1e-12 of the spectral span of h is returned as exactly 0.0.
    """
    pops, rho_vecs = eigh_spectrum(rho)
    energies, h_vecs = eigh_spectrum(h)
    mean_h = np.real(np.einsum("ij,ij->j", rho_vecs.conj(), h @ rho_vecs))
    order = np.lexsort((mean_h, -pops))  # primary: population descending
    pops = pops[order]
    passive = (h_vecs * pops) @ h_vecs.conj().T
    work = float(np.real(np.trace(h @ rho)) - pops @ energies)
    scale = max(abs(energies[0]), abs(energies[-1]), 1e-300)
    if abs(work) <= ERGOTROPY_ZERO_TOL * scale:
        return 0.0, passive
    return max(work, 0.0), passive


def matched_occupation(entropy: float) -> float:
    """Thermal occupation nbar with S_thermal(nbar) = entropy.

    Bisection to 1e-10 relative in nbar; entropy at or below the purity
    floor returns 0.0.
    """
    if entropy <= PURE_ENTROPY_TOL:
        return 0.0
    lo, hi = 0.0, 1.0
    while thermal_entropy(hi) < entropy:
        lo, hi = hi, 2.0 * hi
    while hi - lo > OCCUPATION_REL_TOL * hi:
        mid = 0.5 * (lo + hi)
        if thermal_entropy(mid) < entropy:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _check_representable(nbar: float, n_levels: int, entropy: float) -> None:
    # Top-level population of the matched Gibbs state at this cutoff must
    # stay below the truncation budget, otherwise entropy-matched
    # comparisons on the truncated space are meaningless.
    if nbar <= 0.0:
        return
    q = nbar / (1.0 + nbar)
    top = (1.0 - q) * q ** (n_levels - 1)
    if top > TRUNCATION_LIMIT:
        needed = math.ceil(1.0 + math.log(TRUNCATION_LIMIT * (1.0 + nbar)) / math.log(q))
        raise ValueError(
            f"entropy {entropy:.6g} matches thermal occupation {nbar:.6g}, which is not "
            f"representable at N = {n_levels} (top population {top:.3e}); "
            f"increase the piston cutoff to N >= {needed}"
        )


def effective_temperature(rho: np.ndarray, nu: float) -> float:
    """Temperature of the oscillator Gibbs state with the same entropy.

    Pure states return the T_P = 0 flag.  Raises when the matched thermal
    state does not fit the state's own Fock cutoff.
    """
    entropy = von_neumann_entropy(rho)
    if entropy <= PURE_ENTROPY_TOL:
        return 0.0
    nbar = matched_occupation(entropy)
    _check_representable(nbar, rho.shape[0], entropy)
    return nu / math.log((1.0 + nbar) / nbar)


def _derivative(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    return np.gradient(values, times, edge_order=2)


def _fd_flags(values: np.ndarray, times: np.ndarray, deriv: np.ndarray) -> np.ndarray:
    """Flag interior records where a doubled-stencil derivative moves > 1%."""
    flags = np.zeros(len(times), dtype=bool)
    scale = np.abs(deriv).max()
    if scale == 0.0:
        return flags
    for i in range(2, len(times) - 2):
        wide = (values[i + 2] - values[i - 2]) / (times[i + 2] - times[i - 2])
        if abs(wide - deriv[i]) > FD_FLAG_THRESHOLD * max(abs(deriv[i]), 1e-12 * scale):
            flags[i] = True
    return flags


def classify_regime(
    j_hot: float,
    j_cold: float,
    de_dt: float,
    dw_dt: float,
    power_max: float,
    gamma: float | None = None,
    scale: float = 1.0,
) -> str:
    """Operating regime from the signs of the recorded rates.

    refrigerator: cold heat extracted while the piston discharges its work
    capacity; absorption: same heat flow but a thermal-like piston whose
    work capacity is flat; engine: positive extractable power fed by the hot
    bath (drift gain when the reduced rate is known); relaxation otherwise.
    """
    tol = 1e-12 * max(scale, 1e-300)
    if j_cold > tol and de_dt < -tol:
        return "refrigerator" if dw_dt < -tol else "absorption"
    if power_max > tol and j_hot > tol and (gamma is None or gamma < 0.0):
        return "engine"
    return "relaxation"


def thermo_records(
    times: Sequence[float],
    states: Sequence[np.ndarray],
    nu: float,
    j_hot: Sequence[float],
    j_cold: Sequence[float],
    t_hot: float,
    t_cold: float,
    gamma: float | None = None,
) -> list[ThermoRecord]:
    """Full thermodynamic bookkeeping along a piston trajectory.

    states are reduced piston density matrices on a common cutoff; j_hot and
    j_cold are the already-computed heat currents (positive into the
    machine).  gamma, when given, is the reduced drift rate and sharpens the
    regime classification.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) < 3:
        raise ValueError("need at least three records for finite-difference rates")
    if np.any(np.diff(times) <= 0):
        raise ValueError("record times must be strictly increasing")
    if not len(states) == len(times) == len(j_hot) == len(j_cold):
        raise ValueError("times, states and currents must have matching lengths")
    if t_hot <= 0 or t_cold <= 0:
        raise ValueError("bath temperatures must be positive")

    j_hot = np.asarray(j_hot, dtype=float)
    j_cold = np.asarray(j_cold, dtype=float)
    number = np.arange(states[0].shape[0], dtype=float)
    h_p = np.diag(nu * number).astype(complex)

    energies = np.empty(len(times))
    entropies = np.empty(len(times))
    t_effs = np.empty(len(times))
    works = np.empty(len(times))
    bounds = np.empty(len(times))
    for i, rho in enumerate(states):
        occ = float(number @ np.real(np.diag(rho)))
        energies[i] = nu * occ
        entropies[i] = von_neumann_entropy(rho)
        nbar = matched_occupation(entropies[i])
        _check_representable(nbar, rho.shape[0], entropies[i])
        t_effs[i] = 0.0 if nbar == 0.0 else nu / math.log((1.0 + nbar) / nbar)
        works[i], _ = ergotropy(rho, h_p)
        bounds[i] = nu * (occ - nbar)

    de_dt = _derivative(energies, times)
    s_dot = _derivative(entropies, times)
    dw_dt = _derivative(works, times)
    flags = _fd_flags(energies, times, de_dt) | _fd_flags(entropies, times, s_dot)
    power = de_dt - t_effs * s_dot
    spohn = s_dot - j_hot / t_hot - j_cold / t_cold
    scale = max(np.abs(j_hot).max(), np.abs(j_cold).max(), np.abs(de_dt).max(), np.abs(power).max())

    records = []
    for i in range(len(times)):
        regime = classify_regime(j_hot[i], j_cold[i], de_dt[i], dw_dt[i], power[i], gamma, scale)
        eta = power[i] / j_hot[i] if regime == "engine" else math.nan
        cop = j_cold[i] / -de_dt[i] if j_cold[i] > 0 and de_dt[i] < 0 else math.nan
        records.append(
            ThermoRecord(
                t=float(times[i]),
                energy=float(energies[i]),
                entropy=float(entropies[i]),
                t_eff=float(t_effs[i]),
                ergotropy=float(works[i]),
                w_bound=float(bounds[i]),
                j_hot=float(j_hot[i]),
                j_cold=float(j_cold[i]),
                power_max=float(power[i]),
                eta_max=float(eta),
                cop=float(cop),
                spohn_residual=float(spohn[i]),
                regime=regime,
                t_hot=t_hot,
                t_cold=t_cold,
                de_dt=float(de_dt[i]),
                s_dot=float(s_dot[i]),
                fd_flagged=bool(flags[i]),
            )
        )
    return records


def work_capacity_change(records: Sequence[ThermoRecord]) -> float:
    """Net ergotropy change over the trajectory; > 0 means work was produced."""
    if not records:
        raise ValueError("no records")
    return records[-1].ergotropy - records[0].ergotropy


def max_power(records: Sequence[ThermoRecord]) -> np.ndarray:
    """Recompute P_max = dE/dt - T_P dS/dt from the recorded columns."""
    if len(records) < 3:
        raise ValueError("need at least three records for finite-difference rates")
    times = np.array([r.t for r in records])
    energies = np.array([r.energy for r in records])
    entropies = np.array([r.entropy for r in records])
    t_effs = np.array([r.t_eff for r in records])
    return _derivative(energies, times) - t_effs * _derivative(entropies, times)


def engine_efficiency(record: ThermoRecord) -> dict:
    """Work-production efficiency eta = P_max / j_hot with its bounds.

    Outside the work-production regime (j_hot > 0 and P_max > 0) no value is
    reported.  tp_bound = 1 - T_P/T_H applies when T_P < T_C and can exceed
    the two-bath Carnot value 1 - T_C/T_H, which is reported alongside.
    """
    regime_ok = record.j_hot > 0.0 and record.power_max > 0.0
    value = record.power_max / record.j_hot if regime_ok else math.nan
    carnot = 1.0 - record.t_cold / record.t_hot
    tp_bound = 1.0 - record.t_eff / record.t_hot if record.t_eff < record.t_cold else math.nan
    return {
        "value": value,
        "carnot": carnot,
        "tp_bound": tp_bound,
        "within_tp_bound": bool(value <= tp_bound) if regime_ok and not math.isnan(tp_bound) else None,
        "exceeds_carnot": bool(value > carnot) if regime_ok else None,
        "regime_ok": regime_ok,
    }


def refrigeration_cop(record: ThermoRecord) -> dict:
    """COP = j_cold / (-dE/dt) with the entropy-rate and absorption bounds.

    The general bound multiplies the Carnot reciprocal T_C/(T_H - T_C) by
    (1 - s_dot T_H / de_dt); when the piston stays thermal (de_dt = T_P
    s_dot) this collapses to the absorption form (1 - T_H/T_P) times the
    same prefactor.  A nonpassive piston with growing entropy makes the
    bracket exceed 1, so the COP may legitimately exceed Carnot.
    """
    regime_ok = record.j_cold > 0.0 and record.de_dt < 0.0
    value = record.j_cold / -record.de_dt if regime_ok else math.nan
    carnot = record.t_cold / (record.t_hot - record.t_cold)
    bound = carnot * (1.0 - record.s_dot * record.t_hot / record.de_dt)
    absorption = (
        carnot * (1.0 - record.t_hot / record.t_eff) if record.t_eff > 0.0 else math.nan
    )
    return {
        "value": value,
        "carnot": carnot,
        "bound": bound,
        "absorption_bound": absorption,
        "within_bound": bool(value <= bound) if regime_ok else None,
        "regime_ok": regime_ok,
    }


def cooling_window(cfg: MachineConfig) -> dict:
    """Admissible omega_minus interval for refrigeration and the threshold
    occupation n_min below which the cold current changes sign.

    The window is 0 < omega_minus < nu / (T_H/T_C - 1); n_min =
    1/(exp(omega0/T_H - omega_minus/T_C) - 1) and is reported as infinite
    (no cooling at any occupation) when the exponent is nonpositive.
    """
    t_hot, t_cold = cfg.hot.temperature, cfg.cold.temperature
    if t_hot <= t_cold:
        raise ValueError("cooling window needs T_H > T_C")
    _, wm = cfg.combination_frequencies()
    upper = cfg.nu / (t_hot / t_cold - 1.0)
    exponent = cfg.omega0 / t_hot - wm / t_cold
    in_window = 0.0 < wm < upper
    if exponent > 0.0:
        n_min = 1.0 / math.expm1(exponent)
        possible = True
    else:
        n_min = math.inf
        possible = False
    return {
        "omega_minus_window": (0.0, upper),
        "omega_minus": wm,
        "in_window": in_window,
        "exponent": exponent,
        "n_min": n_min,
        "cooling_possible": possible,
    }


def cooling_parameter_search(
    omega0_values: Sequence[float],
    nu_values: Sequence[float],
    t_hot: float,
    t_cold: float,
) -> list[dict]:
    """Grid search for (omega0, nu) pairs that admit refrigeration.

    Returns entries with omega_minus = omega0 - nu inside the cooling window
    and a positive threshold exponent, each with its n_min.
    """
    if t_hot <= t_cold:
        raise ValueError("cooling window needs T_H > T_C")
    upper = lambda nu: nu / (t_hot / t_cold - 1.0)  # noqa: E731
    found = []
    for w0 in omega0_values:
        for nu in nu_values:
            wm = w0 - nu
            if wm <= 0 or not wm < upper(nu):
                continue
            exponent = w0 / t_hot - wm / t_cold
            if exponent <= 0.0:
                continue
            found.append(
                {
                    "omega0": w0,
                    "nu": nu,
                    "omega_minus": wm,
                    "exponent": exponent,
                    "n_min": 1.0 / math.expm1(exponent),
                }
            )
    return found


def critical_temperature(cfg: MachineConfig) -> dict:
    """Piston temperature at which the thermal fixed point sits,
    T_H (nu/omega0) / (1 - (omega_minus/omega0)(T_H/T_C)).

    A vanishing denominator (the cooling-window boundary) reports infinity
    and a negative value reports the no-finite-fixed-point caveat; neither
    raises.
    """
    t_hot, t_cold = cfg.hot.temperature, cfg.cold.temperature
    _, wm = cfg.combination_frequencies()
    denom = 1.0 - (wm / cfg.omega0) * (t_hot / t_cold)
    if abs(denom) < 1e-12:
        return {
            "value": math.inf,
            "note": "critical temperature diverges at the cooling-window boundary",
        }
    value = t_hot * (cfg.nu / cfg.omega0) / denom
    note = ""
    if value < 0.0:
        note = "no finite positive critical temperature: omega_minus lies beyond the cooling window"
    return {"value": value, "note": note}


def cold_current_threshold(state: PistonState, cfg: MachineConfig) -> dict:
    """Sign of the spectrally-separated cold current at the given occupation.

    The cold current is proportional to
        exp(-omega_minus/T_C) <n> - exp(-omega0/T_H) (<n>+1),
    positive (cooling) exactly when <n> exceeds the window's n_min.  Only
    the sign is meaningful here; absolute currents come from the full
    generator.  The returned `separated` flag records whether the preset
    actually honors the separation the formula assumes (cold bath dominant
    at omega_minus, hot at omega0).
    """
    t_hot, t_cold = cfg.hot.temperature, cfg.cold.temperature
    _, wm = cfg.combination_frequencies()
    occ = state.mean_n()
    bracket = math.exp(-wm / t_cold) * occ - math.exp(-cfg.omega0 / t_hot) * (occ + 1.0)
    report = spectral_separation_report(
        cfg.hot, cfg.cold, {"omega0": cfg.omega0, "omega_minus": wm}, SEPARATION_THRESHOLD
    )
    dom0, _ = report.ratios["omega0"]
    domm, _ = report.ratios["omega_minus"]
    separated = dom0 == "H" and domm == "C" and not report.weak
    return {
        "bracket": bracket,
        "sign": int(np.sign(bracket)),
        "cooling": bracket > 0.0,
        "separated": separated,
        "mean_n": occ,
    }


def entropy_rate_closed_forms(
    family: AnalyticFamily, rates: RatePair, nu: float, t: float
) -> dict:
    """Closed-form T_P and dS/dt for coherent and thermal pistons.

    Both families stay in shape under drift/diffusion, so the entropy is
    that of the thermal part alone: occupation d(t) for a coherent state,
    n0 exp(-Gamma t) + d(t) for a thermal one, and

        S_dot = nu (D - Gamma n0) exp(-Gamma t) / T_P,   n0 = 0 if coherent,

    with 1/T_P = log((1 + occ)/occ) / nu.  At zero occupation the state is
    pure: the rate is 0 when nothing is diffusing in, infinite otherwise.
    """
    if family.kind not in ("coherent", "thermal"):
        raise ValueError(
            f"closed-form entropy rates exist for coherent and thermal pistons only, not {family.kind!r}"
        )
    n0 = family.nbar if family.kind == "thermal" else 0.0
    occ = n0 * math.exp(-rates.gamma * t) + drift_occupation(rates, t)
    pump = (rates.dee - rates.gamma * n0) * math.exp(-rates.gamma * t)
    if occ <= 0.0:
        t_p = 0.0
        s_dot = 0.0 if pump == 0.0 else math.inf
    else:
        t_p = nu / math.log((1.0 + occ) / occ)
        s_dot = nu * pump / t_p
    return {"t_p": t_p, "s_dot": s_dot, "occupation": occ}


def maser_limit(cfg: MachineConfig, alpha0_sq: float) -> MaserLimit:
    """Closed-form gain, power and heat current for a large coherent piston.

    Requires a spectrally separated engine: the cold bath dominant at
    omega0, the hot bath dominant at omega_plus, and both bath responses
    negligible at omega_minus.  In that limit the drift is purely
    hot-pumped, every extracted quantum nu is drawn from a hot quantum
    omega_plus, and the efficiency is exactly nu/omega_plus.
    """
    if alpha0_sq < 0:
        raise ValueError("alpha0_sq must be nonnegative")
    wp, wm = cfg.combination_frequencies()
    report = spectral_separation_report(
        cfg.hot, cfg.cold, {"omega0": cfg.omega0, "omega_plus": wp}, SEPARATION_THRESHOLD
    )
    dom0, _ = report.ratios["omega0"]
    domp, _ = report.ratios["omega_plus"]
    if dom0 != "C" or domp != "H" or report.weak:
        raise ValueError(
            "maser closed forms need a spectrally separated engine "
            f"(cold dominant at omega0, hot at omega_plus); weak separations: {report.weak or 'dominance inverted'}"
        )
    stray = cfg.total_response(wm)
    pump = response(cfg.hot, wp)
    if stray > 0.01 * pump:
        raise ValueError(
            f"bath response {stray:.3e} at omega_minus is not negligible "
            f"against the hot pump {pump:.3e}; the maser limit does not apply"
        )
    gamma = reduce_to_piston(cfg).gamma
    base = -gamma * alpha0_sq
    return MaserLimit(
        alpha0_sq=alpha0_sq,
        j_hot=base * wp,
        power=base * cfg.nu,
        gamma=gamma,
        eta=cfg.nu / wp,
    )


def unitary_work_identity_check(rho: np.ndarray, u: np.ndarray, h: np.ndarray) -> dict:
    """Verify that a unitary stroke moves energy without moving entropy."""
    deviation = np.abs(u.conj().T @ u - np.eye(u.shape[0])).max()
    if deviation > UNITARITY_TOL:
        raise ValueError(f"matrix is not unitary: |U†U - 1| = {deviation:.3e}")
    evolved = u @ rho @ u.conj().T
    delta_e = float(np.real(np.trace(h @ evolved) - np.trace(h @ rho)))
    delta_s = abs(von_neumann_entropy(evolved) - von_neumann_entropy(rho))
    return {
        "delta_e": delta_e,
        "delta_s": delta_s,
        "entropy_preserved": delta_s <= ENTROPY_PRESERVATION_TOL,
    }


def records_to_csv(records: Sequence[ThermoRecord], path, metadata: dict | None = None) -> None:
    """Serialize records with the fixed column order; metadata lines start '#'."""
    lines = []
    for key, value in (metadata or {}).items():
        lines.append(f"# {key} = {value}")
    lines.append(",".join(CSV_COLUMNS))
    for r in records:
        cells = []
        for name in CSV_COLUMNS:
            value = getattr(r, name)
            cells.append(value if name == "regime" else f"{value:.17g}")
        lines.append(",".join(cells))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
