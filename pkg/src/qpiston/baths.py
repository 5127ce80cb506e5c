"""Bath response spectra, detailed-balance extension, and filter engineering.

A bath is a temperature plus a nonnegative response G(omega) on omega >= 0.
Negative frequencies are defined by the KMS condition
G(-omega) = exp(-omega/T) G(omega), which is what makes the second-law
checks downstream meaningful.  An optional harmonic filter reshapes the
response into a skewed Lorentzian of height gamma_f/pi whose center is
displaced by the principal-value Lamb shift of the base spectrum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

# base responses are treated as zero where they fall below this fraction of
# their maximum; sets the upper limit of the Lamb-shift integral
TAIL_FRACTION = 1e-12


@dataclass(frozen=True)
class FlatSpectrum:
    """G = amplitude on [0, cutoff); cutoff None means no upper edge."""

    amplitude: float
    cutoff: float | None = None
    kind = "flat"

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be nonnegative")
        if self.cutoff is not None and self.cutoff <= 0:
            raise ValueError("cutoff must be positive")

    def value(self, omega):
        omega = np.asarray(omega, dtype=float)
        inside = omega >= 0
        if self.cutoff is not None:
            inside = inside & (omega <= self.cutoff)
        out = np.where(inside, self.amplitude, 0.0)
        return float(out) if out.ndim == 0 else out

    def support_limit(self) -> float:
        if self.cutoff is None:
            raise ValueError("flat spectrum without cutoff has a non-integrable tail")
        return self.cutoff


@dataclass(frozen=True)
class OhmicSpectrum:
    """G = amplitude * omega * exp(-omega/cutoff)."""

    amplitude: float
    cutoff: float
    kind = "ohmic_exp_cutoff"

    def __post_init__(self):
        if self.amplitude < 0 or self.cutoff <= 0:
            raise ValueError("need amplitude >= 0 and cutoff > 0")

    def value(self, omega):
        omega = np.asarray(omega, dtype=float)
        out = np.where(omega >= 0, self.amplitude * omega * np.exp(-omega / self.cutoff), 0.0)
        return float(out) if out.ndim == 0 else out

    def support_limit(self) -> float:
        # peak at cutoff; w e^{-w/wc} drops below TAIL_FRACTION of the peak
        # well before 50 cutoffs
        w = 50.0 * self.cutoff
        peak = self.amplitude * self.cutoff * math.exp(-1.0)
        while self.value(w) > TAIL_FRACTION * peak:
            w *= 2.0
        return w


@dataclass(frozen=True)
class LorentzianSpectrum:
    """G = amplitude * width^2 / ((omega-center)^2 + width^2) on omega >= 0."""

    amplitude: float
    center: float
    width: float
    kind = "lorentzian"

    def __post_init__(self):
        if self.amplitude < 0 or self.width <= 0:
            raise ValueError("need amplitude >= 0 and width > 0")

    def value(self, omega):
        omega = np.asarray(omega, dtype=float)
        lor = self.amplitude * self.width**2 / ((omega - self.center) ** 2 + self.width**2)
        out = np.where(omega >= 0, lor, 0.0)
        return float(out) if out.ndim == 0 else out

    def support_limit(self) -> float:
        return self.center + self.width / math.sqrt(TAIL_FRACTION)


@dataclass(frozen=True)
class TabulatedSpectrum:
    """Linear interpolation through (omega, G) samples, zero outside the grid.

    Stored as tuples so the spectrum stays hashable for the Lamb-shift cache.
    """

    omegas: tuple[float, ...]
    values: tuple[float, ...]
    kind = "tabulated"

    def __post_init__(self):
        w = np.asarray(self.omegas, dtype=float)
        g = np.asarray(self.values, dtype=float)
        if w.size != g.size or w.size < 2:
            raise ValueError("need matching omega/value samples, at least two")
        if np.any(np.diff(w) <= 0):
            raise ValueError("tabulated grid must be strictly increasing")
        if w[0] < 0 or np.any(g < 0):
            raise ValueError("tabulated spectrum must be nonnegative on omega >= 0")

    def value(self, omega):
        omega = np.asarray(omega, dtype=float)
        out = np.interp(omega, self.omegas, self.values, left=0.0, right=0.0)
        out = np.where(omega >= 0, out, 0.0)
        return float(out) if out.ndim == 0 else out

    def support_limit(self) -> float:
        return self.omegas[-1]


SpectrumShape = FlatSpectrum | OhmicSpectrum | LorentzianSpectrum | TabulatedSpectrum


def load_tabulated(path) -> TabulatedSpectrum:
    """Two-column text (omega, G); '#' starts a comment."""
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns (omega, G)")
    return TabulatedSpectrum(tuple(data[:, 0]), tuple(data[:, 1]))


@dataclass(frozen=True)
class FilterSpec:
    omega_f: float
    gamma_f: float

    def __post_init__(self):
        if self.omega_f <= 0 or self.gamma_f <= 0:
            raise ValueError("filter needs omega_f > 0 and gamma_f > 0")


@dataclass(frozen=True)
class BathSpec:
    label: str  # "H" or "C"
    temperature: float
    base_spectrum: SpectrumShape
    filter: FilterSpec | None = None

    def __post_init__(self):
        if self.label not in ("H", "C"):
            raise ValueError("bath label must be 'H' or 'C'")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


@lru_cache(maxsize=4096)
def lamb_shift(base: SpectrumShape, omega: float) -> float:
    """Principal value of ∫_0^∞ G(w')/(omega - w') dw' by pole subtraction.

    On the truncated support [0, W] with the pole inside,
        PV ∫ G/(omega-w') = ∫ [G(w')-G(omega)]/(omega-w') + G(omega) ln(omega/(W-omega)),
    and the first integrand is bounded at the pole.
    """
    w_max = base.support_limit()
    omega = float(omega)
    if omega <= 0.0 or omega >= w_max:
        if omega == 0.0 and base.value(0.0) > 0.0:
            raise ValueError("Lamb shift diverges at omega = 0 for G(0) > 0")
        val, _ = quad(lambda w: base.value(w) / (omega - w), 0.0, w_max, limit=400)
        return val

    g_pole = base.value(omega)

    def subtracted(w):
        d = omega - w
        if abs(d) < 1e-9:
            # removable point; central-difference slope of G
            return (base.value(omega - 1e-6) - base.value(omega + 1e-6)) / 2e-6
        return (base.value(w) - g_pole) / d

    pts = [omega]
    if isinstance(base, TabulatedSpectrum):
        pts += [w for w in base.omegas if 0.0 < w < w_max]
    val, _ = quad(subtracted, 0.0, w_max, points=sorted(set(pts)), limit=400)
    return val + g_pole * math.log(omega / (w_max - omega))


def filtered_response(bath: BathSpec, omega: float) -> float:
    """Skewed-Lorentzian response of the filtered bath at omega >= 0:
    (gamma_f/pi) (pi G)^2 / [(omega - omega_f - Lamb(omega))^2 + (pi G)^2]."""
    if bath.filter is None:
        raise ValueError("bath has no filter")
    if omega < 0:
        raise ValueError("filtered_response is defined on omega >= 0; use response()")
    g = bath.base_spectrum.value(omega)
    if g == 0.0:
        return 0.0
    det = omega - bath.filter.omega_f - lamb_shift(bath.base_spectrum, omega)
    pg = math.pi * g
    return (bath.filter.gamma_f / math.pi) * pg**2 / (det**2 + pg**2)


def response(bath: BathSpec, omega: float) -> float:
    """Bath response rate at any frequency; omega < 0 by detailed balance."""
    if omega < 0:
        return math.exp(omega / bath.temperature) * response(bath, -omega)
    if bath.filter is not None:
        return filtered_response(bath, omega)
    return float(bath.base_spectrum.value(omega))


def filter_resonance(bath: BathSpec, bracket_width: float = 0.5) -> float:
    """Solve the self-consistent resonance omega = omega_f + Lamb(omega).

    Secant iteration from omega_f, falling back to bracketing if the secant
    leaves (0, support); at the returned frequency the filtered response
    equals gamma_f/pi exactly.
    """
    if bath.filter is None:
        raise ValueError("bath has no filter")
    base = bath.base_spectrum
    w_max = base.support_limit()

    def f(w):
        return w - bath.filter.omega_f - lamb_shift(base, w)

    x0 = bath.filter.omega_f
    x1 = x0 + lamb_shift(base, x0)
    if not 0.0 < x1 < w_max:
        x1 = x0 * (1.0 - 1e-3)
    f0, f1 = f(x0), f(x1)
    for _ in range(80):
        if f1 == f0:
            break
        x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
        if not 0.0 < x2 < w_max:
            break
        x0, f0, x1, f1 = x1, f1, x2, f(x2)
        if abs(f1) < 1e-13 * max(1.0, abs(x1)):
            return x1
    # secant failed to settle; widen a bracket around omega_f and bisect
    lo = max(bath.filter.omega_f - bracket_width, 1e-12)
    hi = min(bath.filter.omega_f + bracket_width, w_max * (1 - 1e-12))
    while f(lo) * f(hi) > 0:
        lo = max(lo - bracket_width, 1e-12)
        hi = min(hi + bracket_width, w_max * (1 - 1e-12))
        if lo <= 1e-12 and hi >= w_max * (1 - 1e-12):
            raise ValueError("no self-consistent filter resonance in the spectrum support")
    return float(brentq(f, lo, hi, xtol=1e-13, rtol=8.9e-16))


@dataclass(frozen=True)
class SeparationReport:
    """Responses of both baths at the machine harmonics, with dominance ratios."""

    values: dict          # (label, freq_name) -> response
    ratios: dict          # freq_name -> (dominant_label, ratio)
    weak: tuple           # freq names whose ratio < threshold
    threshold: float

    def __str__(self):
        lines = ["freq      G_H           G_C           dominant  ratio"]
        names = sorted({k[1] for k in self.values})
        for name in names:
            gh = self.values[("H", name)]
            gc = self.values[("C", name)]
            lab, ratio = self.ratios[name]
            flag = "  WEAK" if name in self.weak else ""
            lines.append(f"{name:<8}  {gh:.6e}  {gc:.6e}  {lab:<8}  {ratio:.3g}{flag}")
        return "\n".join(lines)


def spectral_separation_report(
    hot: BathSpec, cold: BathSpec, freqs: dict, threshold: float = 100.0
) -> SeparationReport:
    """Evaluate G_H, G_C at the named positive frequencies and flag any
    frequency where neither bath dominates by at least `threshold`."""
    values, ratios, weak = {}, {}, []
    for name, w in freqs.items():
        if w <= 0:
            raise ValueError(f"frequency {name} must be positive")
        gh, gc = response(hot, w), response(cold, w)
        values[("H", name)] = gh
        values[("C", name)] = gc
        hi, lo = max(gh, gc), min(gh, gc)
        if hi == 0.0:
            ratios[name] = ("-", 1.0)
        else:
            ratios[name] = ("H" if gh >= gc else "C", math.inf if lo == 0.0 else hi / lo)
        if ratios[name][1] < threshold:
            weak.append(name)
    return SeparationReport(values, ratios, tuple(weak), threshold)
