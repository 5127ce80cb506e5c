"""Harmonic-resolved master equation for the TLS + piston machine.

Everything here works in the dressed frame where the static Hamiltonian is
diagonal: H = (omega0/2) sigma_z + nu b†b (constant offsets dropped).  The
dissipator is harmonic-resolved: the TLS thermalizes at omega0, and the
piston-assisted channels sample the baths at the combination frequencies
omega_pm, carrying the (g/nu)^2 dressing weight.  Jump operators are
sigma_- (q=0), sigma_- b (q=+1, emission at omega_plus) and sigma_- b†
(q=-1, emission at omega_minus), plus their KMS-weighted reverses.

Because every jump operator shifts the Fock stripe index n-m and the TLS
sector in a fixed way, the generator never mixes stripes: the (ee, gg)
populations on stripe k close into a real matrix of size 2(N-k), and TLS
coherences decay elementwise.  The propagator exploits this instead of
storing the d^2 x d^2 superoperator, which is mathematically identical and
fits in memory for the Fock cutoffs the acceptance runs need.  A dense
superoperator is still available for small spaces (complete-positivity
and cross-validation tests).
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .baths import BathSpec, response
from .operators import (
    HilbertDims,
    annihilation,
    dressing_unitary,
    pauli,
    validate_density_operator,
)

TRUNCATION_LIMIT = 1e-6
MAX_POSITIVITY_REPAIRS = 10


class TruncationError(RuntimeError):
    pass


@dataclass(frozen=True)
class MachineConfig:
    omega0: float
    nu: float
    g: float
    coupling: str  # "dispersive" or "spin_boson"
    hot: BathSpec
    cold: BathSpec
    dims: HilbertDims
    delta: float | None = None  # omega0 - nu detuning, spin_boson only

    def __post_init__(self):
        if min(self.omega0, self.nu, self.g) <= 0:
            raise ValueError("omega0, nu, g must be positive")
        if self.g / self.nu > 0.3:
            raise ValueError(f"g/nu = {self.g / self.nu:.3f} outside the weak-coupling domain (max 0.3)")
        if self.coupling not in ("dispersive", "spin_boson"):
            raise ValueError(f"unknown coupling {self.coupling!r}")
        if self.coupling == "spin_boson":
            if self.delta is None or self.delta == 0:
                raise ValueError("spin_boson coupling needs a nonzero delta = omega0 - nu")
            if abs(self.delta - (self.omega0 - self.nu)) > 1e-9 * max(self.omega0, self.nu):
                raise ValueError("delta must equal omega0 - nu")
        elif self.delta is not None:
            raise ValueError("delta applies to spin_boson coupling only")
        if self.hot.label != "H" or self.cold.label != "C":
            raise ValueError("bath labels must be H (hot) and C (cold)")
        wp, wm = self.combination_frequencies()
        if wm <= 0:
            raise ValueError(f"omega_minus = {wm:.6g} must be positive")
        if wp <= 0:
            raise ValueError(f"omega_plus = {wp:.6g} must be positive")

    def combination_frequencies(self) -> tuple[float, float]:
        """(omega_plus, omega_minus) sampled by the piston-assisted channels."""
        if self.coupling == "dispersive":
            return self.omega0 + self.nu, self.omega0 - self.nu
        shift = self.g**2 / (4.0 * self.delta)
        return self.nu + shift, self.nu - shift

    def total_response(self, omega: float) -> float:
        return response(self.hot, omega) + response(self.cold, omega)


@dataclass(frozen=True)
class RatePair:
    """Drift and diffusion of the reduced piston evolution.

    gamma > 0 is net dissipation, gamma < 0 linear gain; dee is the diffusion
    rate and can never be negative for bath-generated rates.
    """

    gamma: float
    dee: float

    def __post_init__(self):
        if self.dee < 0:
            raise ValueError("diffusion rate must be nonnegative")


@dataclass(frozen=True)
class HarmonicTerm:
    """One Lindblad dissipator rate · D[A].

    q: harmonic index 0/+1/-1; direction "down" means A = sigma_- x B_q
    (system emits omega_q into the bath), "up" the Hermitian conjugate jump.
    B_q is I, b, b† for q = 0, +1, -1.
    """

    bath: str
    q: int
    omega: float
    direction: str
    rate: float

    def jump_operator(self, dims: HilbertDims) -> np.ndarray:
        a = annihilation(dims.fock_cutoff)
        b_part = {0: np.eye(dims.fock_cutoff, dtype=complex), 1: a, -1: a.conj().T}[self.q]
        sigma = pauli("-") if self.direction == "down" else pauli("+")
        fock = b_part if self.direction == "down" else b_part.conj().T
        return np.kron(sigma, fock)


@dataclass
class Liouvillian:
    dims: HilbertDims
    omega0: float
    nu: float
    terms: list[HarmonicTerm]
    _rate_sums: dict = field(init=False, repr=False)

    def __post_init__(self):
        sums = {("down", 0): 0.0, ("up", 0): 0.0, ("down", 1): 0.0,
                ("up", 1): 0.0, ("down", -1): 0.0, ("up", -1): 0.0}
        for t in self.terms:
            sums[(t.direction, t.q)] += t.rate
        self._rate_sums = sums

    def rate(self, direction: str, q: int) -> float:
        return self._rate_sums[(direction, q)]

    # -- diagnostics on small spaces ------------------------------------
    def hamiltonian(self) -> np.ndarray:
        n = self.dims.fock_cutoff
        num = np.kron(np.eye(2), np.diag(np.arange(n, dtype=float)))
        return 0.5 * self.omega0 * pauli("z", self.dims).real + self.nu * num

    def dense_superoperator(self) -> np.ndarray:
        """Superoperator matrix acting on rho.reshape(-1) (row-major vec,
        so A rho B maps to kron(A, B^T)); only for small spaces."""
        d = self.dims.dim
        if d > 64:
            raise ValueError("dense superoperator limited to dim <= 64; use evolve()")
        ident = np.eye(d, dtype=complex)
        h = self.hamiltonian().astype(complex)
        sup = -1j * (np.kron(h, ident) - np.kron(ident, h.T))
        for t in self.terms:
            if t.rate == 0.0:
                continue
            a = t.jump_operator(self.dims)
            ada = a.conj().T @ a
            sup += t.rate * (
                np.kron(a, a.conj())
                - 0.5 * np.kron(ada, ident)
                - 0.5 * np.kron(ident, ada.T)
            )
        return sup

    # -- heat currents ----------------------------------------------------
    def heat_current(self, rho: np.ndarray, bath: str) -> float:
        """Tr(H sum_q L_q^bath rho): positive = heat flowing from that bath
        into the machine.  Uses the eigenoperator identity
        Tr(H D[A] rho) = -omega_A <A†A> (H diagonal, A lowering by omega_A).
        """
        n = self.dims.fock_cutoff
        diag = np.real(np.diag(rho))
        pe, pg = diag[:n], diag[n:]
        ns = np.arange(n, dtype=float)
        bbd = _bbdag_diagonal(n)
        out = 0.0
        for t in self.terms:
            if t.bath != bath or t.rate == 0.0:
                continue
            if t.direction == "down":
                occ = {0: pe.sum(), 1: ns @ pe, -1: bbd @ pe}[t.q]
                out -= t.omega * t.rate * occ
            else:
                occ = {0: pg.sum(), 1: bbd @ pg, -1: ns @ pg}[t.q]
                out += t.omega * t.rate * occ
        return out


def build_liouvillian(cfg: MachineConfig) -> Liouvillian:
    if cfg.coupling != "dispersive":
        raise ValueError(
            "full master equation is derived for dispersive coupling only; "
            "spin_boson runs go through reduce_to_piston and the reduced backend"
        )
    wp, wm = cfg.combination_frequencies()
    weight = (cfg.g / cfg.nu) ** 2
    terms = []
    for bath in (cfg.hot, cfg.cold):
        for q, w, wt in ((0, cfg.omega0, 1.0), (1, wp, weight), (-1, wm, weight)):
            terms.append(HarmonicTerm(bath.label, q, w, "down", wt * response(bath, w)))
            terms.append(HarmonicTerm(bath.label, q, w, "up", wt * response(bath, -w)))
    return Liouvillian(cfg.dims, cfg.omega0, cfg.nu, terms)


def tls_steady_populations(cfg: MachineConfig) -> tuple[float, float]:
    """(rho11, rho00): fast-TLS steady populations from the q = 0 channel,
    rho11 = G(-omega0) / (G(omega0) + G(-omega0)) with G = G_H + G_C."""
    g_down = cfg.total_response(cfg.omega0)
    g_up = cfg.total_response(-cfg.omega0)
    if g_down + g_up <= 0.0:
        raise ValueError("no bath response at omega0: TLS never thermalizes, reduction invalid")
    return g_up / (g_down + g_up), g_down / (g_down + g_up)


def reduced_heat_coefficients(cfg: MachineConfig) -> dict[str, tuple[float, float]]:
    """Per-bath heat currents of the reduced piston model, linear in the
    piston occupation:

        j_b(<n>) = const_b + slope_b * <n>,   b in {"H", "C"}

    with the same sign convention as Liouvillian.heat_current (positive =
    heat flowing from that bath into the machine).  Each piston-assisted
    channel moves one omega_pm quantum between its bath and the machine;
    the q = 0 channel carries the steady inter-bath TLS leak plus a
    compensation term that reroutes the net TLS pumping done by the piston
    channels back through the baths in proportion to their q = 0
    conductance.  The two currents always sum to the piston energy flow
    nu (D - Gamma <n>) exactly, and each reduces to the expected limit for
    a single bath or for spectrally separated baths."""
    rho11, rho00 = tls_steady_populations(cfg)
    wp, wm = cfg.combination_frequencies()
    k = (cfg.g / cfg.nu) ** 2
    w0 = cfg.omega0
    baths = {"H": cfg.hot, "C": cfg.cold}
    conductance = {
        label: response(spec, w0) + response(spec, -w0) for label, spec in baths.items()
    }
    total_conductance = sum(conductance.values())
    # channel responses per bath and the total TLS pumping P(n) = p_c + p_s n
    channel = {}
    p_const = p_slope = 0.0
    for label, spec in baths.items():
        g_pd, g_pu = response(spec, wp), response(spec, -wp)
        g_md, g_mu = response(spec, wm), response(spec, -wm)
        channel[label] = (g_pd, g_pu, g_md, g_mu)
        p_const += k * (g_pu * rho00 - g_md * rho11)
        p_slope += k * ((g_pu + g_mu) * rho00 - (g_pd + g_md) * rho11)
    out = {}
    for label, spec in baths.items():
        g_pd, g_pu, g_md, g_mu = channel[label]
        leak = w0 * (response(spec, -w0) * rho00 - response(spec, w0) * rho11)
        share = conductance[label] / total_conductance
        const = k * (wp * g_pu * rho00 - wm * g_md * rho11) + leak - w0 * share * p_const
        slope = (
            k * (wm * g_mu * rho00 + wp * g_pu * rho00 - wp * g_pd * rho11 - wm * g_md * rho11)
            - w0 * share * p_slope
        )
        out[label] = (const, slope)
    return out


def reduce_to_piston(cfg: MachineConfig) -> RatePair:
    """Adiabatic elimination of the fast TLS: drift and diffusion rates

        Gamma = (g/nu)^2 [(G(w+) - G(w-)) rho11 + (G(-w-) - G(-w+)) rho00]
        D     = (g/nu)^2 [G(w-) rho11 + G(-w+) rho00]

    with summed bath responses at the combination frequencies."""
    rho11, rho00 = tls_steady_populations(cfg)
    wp, wm = cfg.combination_frequencies()
    weight = (cfg.g / cfg.nu) ** 2
    g_pd, g_pu = cfg.total_response(wp), cfg.total_response(-wp)
    g_md, g_mu = cfg.total_response(wm), cfg.total_response(-wm)
    gamma = weight * ((g_pd - g_md) * rho11 + (g_mu - g_pu) * rho00)
    dee = weight * (g_md * rho11 + g_pu * rho00)
    return RatePair(gamma, dee)


# ---------------------------------------------------------------------------
# stripe-factorized exact propagation

def _bbdag_diagonal(n_fock: int) -> np.ndarray:
    """Diagonal of b b† on the truncated space: n+1, but 0 at the top level
    (the upward jump out of the space does not exist, which is what keeps
    the truncated generator exactly trace-preserving)."""
    d = np.arange(1.0, n_fock + 1.0)
    d[-1] = 0.0
    return d


def _stripe_matrix(liou: Liouvillian, k: int) -> np.ndarray:
    """Real generator coupling the (ee, gg) populations on Fock stripe
    x_n = rho_{n+k,n}."""
    n_f = liou.dims.fock_cutoff
    size = n_f - k
    ns = np.arange(size, dtype=float)
    bbd = _bbdag_diagonal(n_f)
    g0d, g0u = liou.rate("down", 0), liou.rate("up", 0)
    gpd, gpu = liou.rate("down", 1), liou.rate("up", 1)
    gmd, gmu = liou.rate("down", -1), liou.rate("up", -1)

    m = np.zeros((2 * size, 2 * size))
    ee, gg = slice(0, size), slice(size, 2 * size)

    low = ns            # b†b diagonal at the stripe's lower index n
    high = ns + k       # and at the upper index n+k
    m[ee, ee] -= np.diag(g0d + 0.5 * gpd * (low + high) + 0.5 * gmd * (bbd[:size] + bbd[k:]))
    m[gg, gg] -= np.diag(g0u + 0.5 * gpu * (bbd[:size] + bbd[k:]) + 0.5 * gmu * (low + high))

    m[gg, ee] += np.diag(np.full(size, g0d))
    m[ee, gg] += np.diag(np.full(size, g0u))

    lower = np.sqrt((ns[1:]) * (ns[1:] + k))          # couples n and n-1
    upper = np.sqrt((ns[:-1] + 1) * (ns[:-1] + k + 1))  # couples n and n+1
    # sigma_- b: gg_n <- ee_{n+1};  sigma_+ b†: ee_n <- gg_{n-1}
    m[size : 2 * size - 1, 1:size] += gpd * np.diag(upper)
    m[1:size, size : 2 * size - 1] += gpu * np.diag(lower)
    # sigma_- b†: gg_n <- ee_{n-1};  sigma_+ b: ee_n <- gg_{n+1}
    m[size + 1 :, : size - 1] += gmd * np.diag(lower)
    m[: size - 1, size + 1 :] += gmu * np.diag(upper)
    return m


class StripePropagator:
    """exp(L dt) in factorized form for one fixed time step."""

    def __init__(self, liou: Liouvillian, dt: float):
        self.liou = liou
        self.dt = float(dt)
        self._stripe_cache: dict[int, np.ndarray] = {}
        n = liou.dims.fock_cutoff
        ns = np.arange(n, dtype=float)
        bbd = _bbdag_diagonal(n)
        lam_e = 0.5 * (liou.rate("down", 0) + liou.rate("down", 1) * ns
                       + liou.rate("down", -1) * bbd)
        lam_g = 0.5 * (liou.rate("up", 0) + liou.rate("up", 1) * bbd
                       + liou.rate("up", -1) * ns)
        phase = -1j * (liou.omega0 + liou.nu * (ns[:, None] - ns[None, :]))
        self._eg_factor = np.exp((phase - lam_e[:, None] - lam_g[None, :]) * self.dt)

    def _stripe_step(self, k: int) -> np.ndarray:
        if k not in self._stripe_cache:
            self._stripe_cache[k] = expm(_stripe_matrix(self.liou, k) * self.dt)
        return self._stripe_cache[k]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        n = self.liou.dims.fock_cutoff
        ee, gg = rho[:n, :n], rho[n:, n:]
        eg = rho[:n, n:]
        out = np.zeros_like(rho)
        for k in range(n):
            x = np.concatenate([ee.diagonal(-k), gg.diagonal(-k)])
            if not np.any(x):
                continue
            y = (self._stripe_step(k) @ x) * np.exp(-1j * self.liou.nu * k * self.dt)
            size = n - k
            idx = np.arange(size)
            out[idx + k, idx] = y[:size]
            out[n + idx + k, n + idx] = y[size:]
            if k:
                out[idx, idx + k] = np.conj(y[:size])
                out[n + idx, n + idx + k] = np.conj(y[size:])
        out[:n, n:] = eg * self._eg_factor
        out[n:, :n] = out[:n, n:].conj().T
        return out


@dataclass
class EvolutionResult:
    times: np.ndarray
    states: list
    positivity_repairs: int


def evolve(liou: Liouvillian, rho0: np.ndarray, t_grid) -> EvolutionResult:
    """Propagate rho0 through the ascending times t_grid (t_grid[0] is the
    initial time; its entry returns rho0 itself).

    Exact exponential stepping: each distinct grid spacing gets its own
    factorized propagator, so nonuniform grids cost extra exponentials but
    no accuracy.  States are audited for truncation overflow and repaired
    for positivity round-off, counting repairs.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be nonempty ascending")
    validate_density_operator(rho0, "initial state")
    n = liou.dims.fock_cutoff
    if rho0.shape != (2 * n, 2 * n):
        raise ValueError("initial state does not match the configured space")

    props: dict[str, StripePropagator] = {}
    repairs = 0
    rho = rho0.copy()
    _audit_truncation(rho, n, t_grid[0])
    states = [rho]
    for t_prev, t_next in zip(t_grid[:-1], t_grid[1:]):
        dt = float(t_next - t_prev)
        # cluster spacings that differ only in round-off so uniform grids
        # reuse one set of stripe exponentials
        key = np.format_float_scientific(dt, precision=12)
        if key not in props:
            props[key] = StripePropagator(liou, float(key))
        rho = props[key].apply(states[-1])
        rho, fixed = _repair_positivity(rho)
        repairs += fixed
        if repairs > MAX_POSITIVITY_REPAIRS:
            raise RuntimeError(f"positivity repaired more than {MAX_POSITIVITY_REPAIRS} times; generator or step size is unsound")
        _audit_truncation(rho, n, t_next)
        states.append(rho)
    return EvolutionResult(t_grid, states, repairs)


def _audit_truncation(rho: np.ndarray, n_fock: int, t: float) -> None:
    top = float(np.real(rho[n_fock - 1, n_fock - 1] + rho[2 * n_fock - 1, 2 * n_fock - 1]))
    if top > TRUNCATION_LIMIT:
        raise TruncationError(
            f"top Fock level holds population {top:.3e} > {TRUNCATION_LIMIT:g} at t = {t:g}; "
            f"increase fock_cutoff (currently {n_fock})"
        )


REPAIR_CLIP = 1e-12


def _repair_positivity(rho: np.ndarray) -> tuple[np.ndarray, int]:
    if np.linalg.eigvalsh(rho).min() >= -REPAIR_CLIP:
        return rho, 0
    vals, vecs = np.linalg.eigh(rho)
    vals = np.maximum(vals, 0.0)
    rho = (vecs * vals) @ vecs.conj().T
    return rho / np.trace(rho).real, 1


def to_lab_frame(rho_dressed: np.ndarray, cfg: MachineConfig) -> np.ndarray:
    """Diagnostic transform back to the bare (a, sigma) frame."""
    u = dressing_unitary(cfg.g, cfg.nu, cfg.dims)
    return u @ rho_dressed @ u.conj().T


def to_dressed_frame(rho_lab: np.ndarray, cfg: MachineConfig) -> np.ndarray:
    u = dressing_unitary(cfg.g, cfg.nu, cfg.dims)
    return u.conj().T @ rho_lab @ u


# ---------------------------------------------------------------------------
# trajectory checkpoints

CHECKPOINT_MAGIC = b"QPCHKPT1"
_CHECKPOINT_HEADER = struct.Struct("<8s64sBId")  # magic, config hash, has_tls, n_fock, t


@dataclass(frozen=True, eq=False)
class Checkpoint:
    config_sha256: str
    dims: HilbertDims
    t: float
    rho: np.ndarray


def save_checkpoint(path, rho: np.ndarray, t: float, config_sha256: str, dims: HilbertDims) -> None:
    """Write a trajectory snapshot: fixed-size header (magic, config hash,
    space dimensions, time) followed by the density matrix as row-major
    complex entries, little-endian 64-bit floats.  The write is atomic
    (temp file + rename)."""
    if len(config_sha256) != 64:
        raise ValueError("config hash must be 64 hex characters")
    d = dims.dim
    state = np.ascontiguousarray(rho, dtype=complex)
    if state.shape != (d, d):
        raise ValueError(f"state shape {state.shape} does not match dims (dim {d})")
    header = _CHECKPOINT_HEADER.pack(
        CHECKPOINT_MAGIC,
        config_sha256.encode("ascii"),
        1 if dims.has_tls else 0,
        dims.fock_cutoff,
        float(t),
    )
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(state.astype("<c16").tobytes(order="C"))
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < _CHECKPOINT_HEADER.size or buf[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a trajectory checkpoint")
    _, hash_bytes, has_tls, n_fock, t = _CHECKPOINT_HEADER.unpack(buf[: _CHECKPOINT_HEADER.size])
    dims = HilbertDims(int(n_fock), has_tls=bool(has_tls))
    d = dims.dim
    expected = _CHECKPOINT_HEADER.size + 16 * d * d
    if len(buf) != expected:
        raise ValueError(
            f"{path}: payload is {len(buf) - _CHECKPOINT_HEADER.size} bytes, "
            f"expected {16 * d * d} for dim {d}"
        )
    rho = np.frombuffer(buf[_CHECKPOINT_HEADER.size :], dtype="<c16").reshape(d, d)
    return Checkpoint(hash_bytes.decode("ascii"), dims, float(t), rho.astype(complex))
