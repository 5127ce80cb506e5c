"""End-to-end physics acceptance checks.

Each check exercises one falsifiable claim about the piston machine at a
stated tolerance and returns a CheckResult.  run_all() executes the whole
list; the CLI command `qpiston validate` prints one PASS/FAIL line per
check and tests/test_acceptance.py runs the same list under pytest.

The checks prefer measured quantities from full runs over closed forms,
and where a closed form appears on the right-hand side it was derived
independently of the code path that produced the left-hand side.
"""

from __future__ import annotations

import dataclasses
import math
import tempfile
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from . import operators as ops
from .baths import (
    BathSpec,
    FilterSpec,
    FlatSpectrum,
    LorentzianSpectrum,
    OhmicSpectrum,
    filter_resonance,
    lamb_shift,
    response,
)
from .lindblad import (
    RatePair,
    build_liouvillian,
    evolve,
    reduce_to_piston,
    tls_steady_populations,
)
from .operators import HilbertDims, annihilation, partial_trace_tls
from .phase_space import AnalyticFamily, reduced_evolve
from .scenarios import Scenario, config_sha256, preset_scenario, run
from .thermo import (
    cooling_window,
    effective_temperature,
    ergotropy,
    maser_limit,
    refrigeration_cop,
    thermo_records,
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


# ---------------------------------------------------------------------------
# shared runs: scenarios are cached on their config hash so checks that
# inspect the same preset trajectory run it only once

_RECORD_CACHE: dict[str, list] = {}


def _run_records(scenario: Scenario) -> list:
    key = config_sha256(scenario)
    if key not in _RECORD_CACHE:
        with tempfile.TemporaryDirectory() as tmp:
            _RECORD_CACHE[key] = run(scenario, tmp).records
    return _RECORD_CACHE[key]


def _engine_coherent() -> Scenario:
    base = preset_scenario("engine-coherent")
    return dataclasses.replace(base, outputs=("thermo_csv",))


def _engine_fock() -> Scenario:
    base = preset_scenario("engine-fock")
    return dataclasses.replace(base, outputs=("thermo_csv",))


def _fridge_with(family: AnalyticFamily) -> Scenario:
    base = preset_scenario("fridge-fock")
    return dataclasses.replace(
        base,
        name=f"fridge-{family.kind}",
        initial_piston=family,
        outputs=("thermo_csv",),
    )


def _mean_occupation(rho: np.ndarray) -> float:
    return float(np.arange(rho.shape[0]) @ np.real(np.diag(rho)))


# ---------------------------------------------------------------------------
# 1. closed-form energy law of the reduced piston equation


def check_energy_law() -> CheckResult:
    """<H_P>(t) = nu (D/Gamma)(1 - e^{-Gamma t}) + e^{-Gamma t} <H_P>(0)
    for twenty random rate pairs of both drift signs, 1e-8 relative."""
    rng = np.random.default_rng(1)
    nu = 1.3
    worst = 0.0
    for case in range(20):
        mag = float(rng.uniform(0.3, 1.2))
        if case >= 10:  # linear gain; diffusion at or above the CP floor
            gamma = -mag
            dee = mag * float(rng.uniform(1.0, 1.05))
            family = AnalyticFamily("thermal", nbar=float(rng.uniform(0.02, 0.12)))
            t_end, n_levels = 2.0 / mag, 176
        else:
            gamma = mag
            dee = mag * float(rng.uniform(0.1, 1.4))
            if case % 2:
                family = AnalyticFamily("fock", n=int(rng.integers(1, 4)))
            else:
                family = AnalyticFamily("thermal", nbar=float(rng.uniform(0.3, 2.0)))
            t_end, n_levels = 3.0 / mag, 96
        rho0 = family.materialize(n_levels)
        e0 = nu * _mean_occupation(rho0)
        grid = np.linspace(0.0, t_end, 7)
        evolution = reduced_evolve(rho0, RatePair(gamma, dee), nu, grid)
        for t, state in zip(grid, evolution.states):
            energy = nu * _mean_occupation(state)
            law = nu * (dee / gamma) * -math.expm1(-gamma * t) + math.exp(-gamma * t) * e0
            worst = max(worst, abs(energy - law) / max(abs(law), 1e-30))
    return CheckResult(
        "energy-law",
        worst <= 1e-8,
        f"20 rate pairs, both drift signs, Gamma t in [-2, 3]: "
        f"max relative deviation {worst:.2e} (tolerance 1e-8)",
    )


# ---------------------------------------------------------------------------
# 2. coherent-state work growth under gain


def check_coherent_work_law() -> CheckResult:
    """Ergotropy of an amplified coherent piston follows nu |alpha0|^2
    e^{-Gamma t} within 2% while diffusion stays at D = 0.1 |Gamma|."""
    cfg = preset_scenario("engine-coherent").config
    bath_gamma = reduce_to_piston(cfg).gamma
    synthetic = RatePair(bath_gamma, 0.1 * abs(bath_gamma))
    worst = 0.0
    for amp in (0.5, 1.0, 2.0):
        scenario = Scenario(
            name=f"work-law-{amp}",
            config=cfg,
            backend="reduced",
            initial_piston=AnalyticFamily("coherent", alpha=complex(amp)),
            t_max=11000.0,
            dt=0.01,
            record_stride=100000,
            outputs=("thermo_csv",),
            rates_override=synthetic,
        )
        for record in _run_records(scenario):
            law = cfg.nu * amp**2 * math.exp(-synthetic.gamma * record.t)
            worst = max(worst, abs(record.ergotropy - law) / law)
    return CheckResult(
        "coherent-work-law",
        worst <= 0.02,
        f"|alpha0| in {{0.5, 1, 2}}, |Gamma| t <= 1, D/|Gamma| = 0.1: "
        f"max relative deviation {worst:.2e} (tolerance 2e-2)",
    )


# ---------------------------------------------------------------------------
# 3. passivation under decay; passivity preserved under gain


def check_passivity() -> CheckResult:
    """(a) Under net decay every state family loses its ergotropy
    (< 1e-6 nu by Gamma t = 5); (b) under gain a thermal piston stays
    passive (< 1e-8 nu throughout)."""
    nu = 2.0
    decay = RatePair(0.5, 0.25)
    n_levels = 48
    h = nu * np.diag(np.arange(n_levels))
    grid = np.linspace(0.0, 10.0, 11)
    families = (
        AnalyticFamily("coherent", alpha=0.008 + 0.0j),
        AnalyticFamily("thermal", nbar=1.0),
        AnalyticFamily("fock", n=2),
        AnalyticFamily("squeezed", r=0.08),
        AnalyticFamily("cat", alpha=0.3 + 0.0j, theta=0.0),
    )
    worst_a = 0.0
    for family in families:
        evolution = reduced_evolve(family.materialize(n_levels), decay, nu, grid)
        worst_a = max(worst_a, ergotropy(evolution.states[-1], h)[0] / nu)

    gain = RatePair(-0.5, 0.55)
    n_levels = 96
    h = nu * np.diag(np.arange(n_levels))
    thermal = AnalyticFamily("thermal", nbar=0.5).materialize(n_levels)
    evolution = reduced_evolve(thermal, gain, nu, np.linspace(0.0, 2.0, 11))
    worst_b = max(ergotropy(state, h)[0] / nu for state in evolution.states)
    return CheckResult(
        "passivity",
        worst_a < 1e-6 and worst_b < 1e-8,
        f"five families at Gamma t = 5: max W/nu = {worst_a:.2e} (tolerance 1e-6); "
        f"thermal under gain: max W/nu = {worst_b:.2e} (tolerance 1e-8)",
    )


# ---------------------------------------------------------------------------
# 4. number states only lose work capacity, even under gain


def check_fock_work_loss() -> CheckResult:
    records = _run_records(_engine_fock())
    w0 = records[0].ergotropy
    deltas = [record.ergotropy - w0 for record in records[1:]]
    worst = max(deltas)
    return CheckResult(
        "fock-work-loss",
        worst < 0.0,
        f"fock(3) piston on the amplifying engine: max work-capacity change "
        f"{worst:.2e} across {len(deltas)} recorded times (must stay < 0)",
    )


# ---------------------------------------------------------------------------
# 5. entropy production is nonnegative on every preset


def check_entropy_production() -> CheckResult:
    """Spohn residual -J_H/T_H - J_C/T_C + dS_P/dt >= 0 (within the
    finite-difference tolerance) once the qubit has settled."""
    scenarios = (
        _engine_coherent(),
        _engine_fock(),
        _fridge_with(AnalyticFamily("fock", n=2)),
        _fridge_with(AnalyticFamily("thermal", nbar=2.0)),
    )
    worst_margin = math.inf
    checked = 0
    for scenario in scenarios:
        cfg = scenario.config
        settle = 10.0 / (cfg.total_response(cfg.omega0) + cfg.total_response(-cfg.omega0))
        for record in _run_records(scenario):
            if record.t < settle:
                continue
            tol = max(
                1e-6 * max(abs(record.j_hot) / record.t_hot, abs(record.j_cold) / record.t_cold),
                1e-15,
            )
            checked += 1
            worst_margin = min(worst_margin, record.spohn_residual / tol)
    return CheckResult(
        "entropy-production",
        worst_margin >= -1.0,
        f"four presets (full master equation), {checked} settled records: "
        f"min residual = {worst_margin:.1f} tolerance units (fails below -1)",
    )


# ---------------------------------------------------------------------------
# 6. reduced piston model tracks the full master equation at order (g/nu)^2


def check_reduced_model_agreement() -> CheckResult:
    cfg = preset_scenario("engine-coherent").config
    rates = reduce_to_piston(cfg)
    grid = np.linspace(0.0, 1.0 / abs(rates.gamma), 21)
    n_levels = cfg.dims.fock_cutoff
    b = annihilation(n_levels)
    rho0_piston = AnalyticFamily("coherent", alpha=1.0 + 0.0j).materialize(n_levels)
    reduced = reduced_evolve(rho0_piston, rates, cfg.nu, grid)
    pe, pg = tls_steady_populations(cfg)
    rho0 = np.kron(np.diag([pe, pg]).astype(complex), rho0_piston)
    full = evolve(build_liouvillian(cfg), rho0, grid)
    worst_n = worst_b = 0.0
    for i in range(1, len(grid)):
        red_state = reduced.states[i]
        full_state = partial_trace_tls(full.states[i], cfg.dims)
        n_red, n_full = _mean_occupation(red_state), _mean_occupation(full_state)
        b_red = complex(np.trace(b @ red_state))
        b_full = complex(np.trace(b @ full_state))
        worst_n = max(worst_n, abs(n_full - n_red) / abs(n_red))
        worst_b = max(worst_b, abs(b_full - b_red) / abs(b_red))
    tol = 3.0 * (cfg.g / cfg.nu) ** 2
    return CheckResult(
        "reduced-model-agreement",
        worst_n <= tol and worst_b <= tol,
        f"g/nu = {cfg.g / cfg.nu}, Gamma t in [0, 1]: occupation deviation "
        f"{worst_n:.2e}, displacement deviation {worst_b:.2e} "
        f"(tolerance 3 (g/nu)^2 = {tol:.2e})",
    )


# ---------------------------------------------------------------------------
# 7. qubit-piston correlations scale quadratically in the coupling


def check_correlation_scaling() -> CheckResult:
    """Trace distance between the joint state and the product of its
    marginals at fixed Gamma t, for three couplings: log-log slope 2 +- 0.3."""
    cfg0 = preset_scenario("engine-coherent").config
    ratios = (0.02, 0.04, 0.08)
    n_levels = 32
    distances = []
    for ratio in ratios:
        cfg = dataclasses.replace(cfg0, g=ratio * cfg0.nu, dims=HilbertDims(n_levels))
        rates = reduce_to_piston(cfg)
        t_star = 0.3 / abs(rates.gamma)
        pe, pg = tls_steady_populations(cfg)
        rho0 = np.kron(
            np.diag([pe, pg]).astype(complex),
            AnalyticFamily("coherent", alpha=1.0 + 0.0j).materialize(n_levels),
        )
        full = evolve(build_liouvillian(cfg), rho0, np.array([0.0, t_star / 2, t_star]))
        rho = full.states[-1]
        rho_piston = partial_trace_tls(rho, cfg.dims)
        rho_tls = np.einsum("injn->ij", rho.reshape(2, n_levels, 2, n_levels))
        delta = rho - np.kron(rho_tls, rho_piston)
        distances.append(0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(delta)))))
    slope = float(np.polyfit(np.log(ratios), np.log(distances), 1)[0])
    return CheckResult(
        "correlation-scaling",
        1.7 <= slope <= 2.3,
        f"trace distances {', '.join(f'{d:.2e}' for d in distances)} at "
        f"g/nu = {ratios}: log-log slope {slope:.3f} (required 2.0 +- 0.3)",
    )


# ---------------------------------------------------------------------------
# 8. maser limit of the engine


def check_maser_limit() -> CheckResult:
    """Analytic closed forms give eta = nu/(omega0 + nu) exactly.  The full
    master equation at |alpha0|^2 = 9 is required to reproduce that ratio
    within 5%; the measured hot current, however, includes the spontaneous
    term D >= |Gamma| (a completely-positive floor for thermal baths) that
    the closed form drops as subleading, which displaces the measured ratio
    by about (D/|Gamma| + drift)/|alpha0|^2 ~ 10%.  The check is kept at
    its stated tolerance and fails; the measurement itself is correct."""
    cfg_small = preset_scenario("engine-coherent").config
    limit = maser_limit(cfg_small, 9.0)
    target = cfg_small.nu / (cfg_small.omega0 + cfg_small.nu)
    analytic_ok = abs(limit.eta - target) <= 1e-15 * target

    cfg = dataclasses.replace(cfg_small, dims=HilbertDims(96))
    rates = reduce_to_piston(cfg)
    grid = np.linspace(0.0, 0.1 / abs(rates.gamma), 11)
    pe, pg = tls_steady_populations(cfg)
    rho0 = np.kron(
        np.diag([pe, pg]).astype(complex),
        AnalyticFamily("coherent", alpha=3.0 + 0.0j).materialize(96),
    )
    liouvillian = build_liouvillian(cfg)
    full = evolve(liouvillian, rho0, grid)
    piston = [partial_trace_tls(state, cfg.dims) for state in full.states]
    j_hot = np.array([liouvillian.heat_current(state, "H") for state in full.states])
    j_cold = np.array([liouvillian.heat_current(state, "C") for state in full.states])
    records = thermo_records(
        grid, piston, cfg.nu, j_hot, j_cold,
        cfg.hot.temperature, cfg.cold.temperature, gamma=rates.gamma,
    )
    worst = max(abs(r.power_max / r.j_hot - target) / target for r in records)
    full_ok = worst <= 0.05
    return CheckResult(
        "maser-limit",
        analytic_ok and full_ok,
        f"analytic eta = nu/(omega0+nu) {'exact' if analytic_ok else 'WRONG'}; "
        f"full run at |alpha0|^2 = 9: max deviation {worst:.1%} vs 5% tolerance"
        + (
            "" if full_ok else
            " (spontaneous emission D >= |Gamma| enters the measured hot "
            "current but not the closed form; at this amplitude the gap "
            "cannot drop below ~10% for any thermal bath pair)"
        ),
    )


# ---------------------------------------------------------------------------
# 9. efficiency bound window above the two-bath Carnot value


def check_efficiency_bound_window() -> CheckResult:
    """While the piston runs colder than the cold bath, the applicable
    efficiency bound 1 - T_P/T_H exceeds the standard Carnot value, and the
    measured efficiency respects the bound at every such record."""
    records = _run_records(_engine_coherent())
    t_hot = records[0].t_hot
    t_cold = records[0].t_cold
    carnot = 1.0 - t_cold / t_hot
    window = 0
    longest = 0
    consistent = True
    worst_excess = -math.inf
    for record in records:
        bound = 1.0 - record.t_eff / t_hot
        if record.t_eff < t_cold and bound > carnot:
            window += 1
            longest = max(longest, window)
        else:
            window = 0
        if record.t_eff < t_cold and math.isfinite(record.eta_max):
            excess = record.eta_max - bound
            worst_excess = max(worst_excess, excess)
            if excess > 1e-6:
                consistent = False
    return CheckResult(
        "efficiency-bound-window",
        longest >= 10 and consistent,
        f"bound exceeds Carnot ({carnot:.4f}) on {longest} consecutive records; "
        f"max (eta - bound) = {worst_excess:.2e} (must stay <= 1e-6)",
    )


# ---------------------------------------------------------------------------
# 10. refrigeration: initial-state ordering of the COP bound and the
#     occupation where cooling stops


def check_cop_ordering() -> CheckResult:
    families = {
        "fock": AnalyticFamily("fock", n=2),
        "cat": AnalyticFamily("cat", alpha=complex(math.sqrt(2.0)), theta=math.pi / 2),
        "coherent": AnalyticFamily("coherent", alpha=complex(math.sqrt(2.0))),
        "thermal": AnalyticFamily("thermal", nbar=2.0),
    }
    records = {label: _run_records(_fridge_with(f)) for label, f in families.items()}
    bounds = {
        label: [refrigeration_cop(r)["bound"] for r in recs]
        for label, recs in records.items()
    }
    times = [r.t for r in records["fock"]]
    first = times[1]
    decade = [i for i, t in enumerate(times) if 0 < t <= 10.0 * first]
    ordered = all(
        bounds["fock"][i] > bounds["cat"][i] > bounds["coherent"][i] for i in decade
    )
    # the fock and thermal bounds coincide asymptotically; allow 1e-3 there
    never_above = all(
        bounds["thermal"][i] <= bounds["fock"][i] * (1.0 + 1e-3) + 1e-12
        for i in range(1, len(times))
    )

    cfg = preset_scenario("fridge-fock").config
    n_min = cooling_window(cfg)["n_min"]
    crossing = math.nan
    previous = None
    for record in records["fock"]:
        if previous is not None and previous.j_cold > 0.0 >= record.j_cold:
            frac = previous.j_cold / (previous.j_cold - record.j_cold)
            n_prev = previous.energy / cfg.nu
            n_cur = record.energy / cfg.nu
            crossing = n_prev + frac * (n_cur - n_prev)
            break
        previous = record
    endpoint_ok = math.isfinite(crossing) and abs(crossing / n_min - 1.0) <= 0.05
    return CheckResult(
        "cop-ordering",
        ordered and never_above and endpoint_ok,
        f"decade t in ({first:g}, {10 * first:g}]: fock > cat > coherent "
        f"{'holds' if ordered else 'FAILS'}; thermal <= fock at all times "
        f"{'holds' if never_above else 'FAILS'}; cooling stops at <n> = "
        f"{crossing:.4f} vs threshold {n_min:.4f} "
        f"({(crossing / n_min - 1.0) * 100:+.1f}%, tolerance 5%)",
    )


# ---------------------------------------------------------------------------
# 11. effective-temperature inversion


def check_temperature_inversion() -> CheckResult:
    """The entropy-matched temperature of a thermal state with occupation d
    must invert to nu / ln((1+d)/d) across d in [0.01, 5]."""
    nu = 2.0
    worst = 0.0
    for d in np.geomspace(0.01, 5.0, 25):
        n_levels = max(32, int(40.0 * d))
        rho = ops.thermal_state(float(d), n_levels)
        measured = effective_temperature(rho, nu)
        closed = nu / math.log((1.0 + d) / d)
        worst = max(worst, abs(measured - closed) / closed)
    return CheckResult(
        "temperature-inversion",
        worst <= 1e-4,
        f"25 occupations in [0.01, 5]: max relative deviation {worst:.2e} "
        f"(tolerance 1e-4)",
    )


# ---------------------------------------------------------------------------
# 12. filtered bath responses


def check_filter_response() -> CheckResult:
    # (a) at the self-consistent resonance the response equals gamma_f/pi
    worst_peak = 0.0
    for preset in ("engine-coherent", "fridge-fock"):
        cfg = preset_scenario(preset).config
        for bath in (cfg.hot, cfg.cold):
            star = filter_resonance(bath)
            expected = bath.filter.gamma_f / math.pi
            worst_peak = max(worst_peak, abs(response(bath, star) - expected) / expected)

    # (b) the response maximum sits at the shifted resonance within the scan grid
    detuned = BathSpec("H", 5.0, FlatSpectrum(0.01, cutoff=20.0), FilterSpec(7.0, 0.2))
    star = filter_resonance(detuned)
    step = 1e-4
    grid = np.arange(star - 0.05, star + 0.05, step)
    values = np.array([response(detuned, w) for w in grid])
    peak_error = abs(float(grid[np.argmax(values)]) - star)

    # (c) the pole-subtracted Lamb integral against a Cauchy-weight quadrature
    def cauchy_oracle(shape, omega: float) -> float:
        value, _ = quad(
            lambda w: float(shape.value(w)),
            0.0,
            shape.support_limit(),
            weight="cauchy",
            wvar=omega,
            limit=800,
        )
        return -value

    worst_lamb = 0.0
    for shape, omega in (
        (FlatSpectrum(0.05, cutoff=24.0), 9.0),
        (OhmicSpectrum(0.02, 10.0), 6.0),
        (LorentzianSpectrum(0.3, 8.0, 2.0), 5.0),
        (FlatSpectrum(0.003, cutoff=5.0), 2.0),
    ):
        reference = cauchy_oracle(shape, omega)
        worst_lamb = max(worst_lamb, abs(lamb_shift(shape, omega) - reference) / abs(reference))

    passed = worst_peak <= 1e-10 and peak_error <= step and worst_lamb <= 1e-6
    return CheckResult(
        "filter-response",
        passed,
        f"resonance value deviation {worst_peak:.1e} (tolerance 1e-10); peak "
        f"location error {peak_error:.1e} (grid step {step:g}); Lamb shift vs "
        f"Cauchy quadrature {worst_lamb:.1e} (tolerance 1e-6)",
    )


# ---------------------------------------------------------------------------

CHECKS = (
    check_energy_law,
    check_coherent_work_law,
    check_passivity,
    check_fock_work_loss,
    check_entropy_production,
    check_reduced_model_agreement,
    check_correlation_scaling,
    check_maser_limit,
    check_efficiency_bound_window,
    check_cop_ordering,
    check_temperature_inversion,
    check_filter_response,
)


def run_all() -> list[CheckResult]:
    results = []
    for check in CHECKS:
        name = check.__name__.removeprefix("check_").replace("_", "-")
        try:
            results.append(check())
        except Exception as exc:  # noqa: BLE001 - a crash is a failed check
            results.append(CheckResult(name, False, f"raised {type(exc).__name__}: {exc}"))
    return results
