"""Operator algebra on a truncated two-level ⊗ Fock space.

Basis ordering is fixed everywhere in this package: the two-level system
(TLS) index runs over (excited, ground) and multiplies the Fock index,
so a composite basis vector is |s⟩⊗|n⟩ with flat index s*N + n.  With
this ordering sigma_z|excited⟩ = +|excited⟩.

All operators are dense complex numpy arrays; there is no lazy algebra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

# validation tolerances used for density operators throughout the package
HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-8
POSITIVITY_TOL = 1e-10

# eigenvalues below this are treated as exact zeros in entropies
EIGENVALUE_FLOOR = 1e-14


@dataclass(frozen=True)
class HilbertDims:
    """Shape of the working Hilbert space.

    fock_cutoff : number of oscillator levels N kept (|0⟩ .. |N-1⟩)
    has_tls     : whether the TLS factor is present (the reduced piston
                  model works on the bare Fock space)
    """

    fock_cutoff: int
    has_tls: bool = True

    def __post_init__(self):
        if self.fock_cutoff < 2:
            raise ValueError("fock_cutoff must be at least 2")

    @property
    def dim(self) -> int:
        return (2 if self.has_tls else 1) * self.fock_cutoff


def annihilation(n_levels: int) -> np.ndarray:
    """Truncated oscillator annihilation operator, ⟨n-1|a|n⟩ = sqrt(n)."""
    a = np.zeros((n_levels, n_levels), dtype=complex)
    ns = np.arange(1, n_levels)
    a[ns - 1, ns] = np.sqrt(ns)
    return a


def number_op(n_levels: int) -> np.ndarray:
    return np.diag(np.arange(n_levels, dtype=float)).astype(complex)


_PAULI = {
    "x": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    "z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
    "+": np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex),
    "-": np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex),
}


def pauli(axis: str, dims: HilbertDims | None = None) -> np.ndarray:
    """Pauli operator ('x','y','z','+','-'), optionally embedded as σ⊗I_N.

    The matrix acts on the (excited, ground) ordered TLS basis, so
    pauli('+') = |excited⟩⟨ground|.
    """
    try:
        sigma = _PAULI[axis]
    except KeyError:
        raise ValueError(f"unknown Pauli axis {axis!r}") from None
    if dims is None:
        return sigma.copy()
    if not dims.has_tls:
        raise ValueError("cannot embed a Pauli operator without a TLS factor")
    return np.kron(sigma, np.eye(dims.fock_cutoff, dtype=complex))


def piston_op(op: np.ndarray, dims: HilbertDims) -> np.ndarray:
    """Embed an oscillator operator as I_2 ⊗ op (or return it unchanged
    when the space has no TLS factor)."""
    if op.shape != (dims.fock_cutoff, dims.fock_cutoff):
        raise ValueError("operator does not match fock_cutoff")
    if not dims.has_tls:
        return op.astype(complex)
    return np.kron(np.eye(2, dtype=complex), op)


def displacement_operator(alpha: complex, n_levels: int) -> np.ndarray:
    """D(α) = exp(α a† - α* a) on the truncated space."""
    a = annihilation(n_levels)
    return expm(alpha * a.conj().T - np.conj(alpha) * a)


def dressing_unitary(g: float, nu: float, dims: HilbertDims) -> np.ndarray:
    """Polaron-style dressing U = exp[(g/2ν)(a† - a) σ_z].

    U block-diagonalises the static TLS-piston Hamiltonian; it displaces
    the oscillator by ±g/2ν conditioned on the TLS state.  The expansion
    behind the weak-coupling generators assumes g/ν < 1, so larger ratios
    are rejected.
    """
    if nu <= 0:
        raise ValueError("nu must be positive")
    if abs(g) / nu >= 1.0:
        raise ValueError(f"dressing requires g/nu < 1, got {abs(g) / nu:.3f}")
    if not dims.has_tls:
        raise ValueError("dressing acts on the TLS ⊗ Fock space")
    a = annihilation(dims.fock_cutoff)
    gen = (g / (2.0 * nu)) * np.kron(_PAULI["z"], a.conj().T - a)
    return expm(gen)


def eigh_spectrum(op: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian operator.

    Returns (eigenvalues ascending, eigenvectors as columns).  Raises if
    the operator is not Hermitian to HERMITICITY_TOL (relative to its
    largest entry).
    """
    scale = max(np.abs(op).max(), 1.0)
    if np.abs(op - op.conj().T).max() > HERMITICITY_TOL * scale:
        raise ValueError("operator is not Hermitian")
    vals, vecs = np.linalg.eigh(op)
    return vals, vecs


def von_neumann_entropy(rho: np.ndarray) -> float:
    """-Tr ρ ln ρ in nats; eigenvalues below EIGENVALUE_FLOOR are dropped."""
    vals = np.linalg.eigvalsh((rho + rho.conj().T) / 2.0)
    vals = vals[vals > EIGENVALUE_FLOOR]
    if vals.size == 0:
        return 0.0
    return float(max(-np.sum(vals * np.log(vals)), 0.0))


def thermal_entropy(nbar: float) -> float:
    """Entropy of an oscillator thermal state with mean occupation nbar."""
    if nbar <= 0.0:
        return 0.0
    return float((nbar + 1.0) * np.log(nbar + 1.0) - nbar * np.log(nbar))


def partial_trace_tls(rho: np.ndarray, dims: HilbertDims) -> np.ndarray:
    """Trace out the TLS factor, returning the N×N piston state."""
    n = dims.fock_cutoff
    if not dims.has_tls:
        return rho.copy()
    r = rho.reshape(2, n, 2, n)
    return r[0, :, 0, :] + r[1, :, 1, :]


def partial_trace_piston(rho: np.ndarray, dims: HilbertDims) -> np.ndarray:
    """Trace out the oscillator, returning the 2×2 TLS state."""
    n = dims.fock_cutoff
    if not dims.has_tls:
        raise ValueError("no TLS factor present")
    r = rho.reshape(2, n, 2, n)
    return np.trace(r, axis1=1, axis2=3)


def validate_density_operator(rho: np.ndarray, context: str = "") -> None:
    """Check Hermiticity / unit trace / positivity, raising on violation."""
    where = f" ({context})" if context else ""
    scale = max(np.abs(rho).max(), 1.0)
    if np.abs(rho - rho.conj().T).max() > HERMITICITY_TOL * scale:
        raise ValueError(f"density operator not Hermitian{where}")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > TRACE_TOL:
        raise ValueError(f"density operator trace {tr!r} != 1{where}")
    wmin = np.linalg.eigvalsh((rho + rho.conj().T) / 2.0).min()
    if wmin < -POSITIVITY_TOL:
        raise ValueError(f"density operator has eigenvalue {wmin:.3e}{where}")


# ---------------------------------------------------------------------------
# oscillator state constructors (all on the bare Fock space)

def fock_state(n: int, n_levels: int) -> np.ndarray:
    if not 0 <= n < n_levels:
        raise ValueError("Fock index outside the truncated space")
    psi = np.zeros(n_levels, dtype=complex)
    psi[n] = 1.0
    return np.outer(psi, psi.conj())


def coherent_vector(alpha: complex, n_levels: int) -> np.ndarray:
    """Unit vector for |α⟩, renormalised on the truncated space."""
    psi = np.zeros(n_levels, dtype=complex)
    psi[0] = 1.0
    for n in range(1, n_levels):
        psi[n] = psi[n - 1] * alpha / np.sqrt(n)
    return psi / np.linalg.norm(psi)


def coherent_state(alpha: complex, n_levels: int) -> np.ndarray:
    psi = coherent_vector(alpha, n_levels)
    return np.outer(psi, psi.conj())


def thermal_state(nbar: float, n_levels: int) -> np.ndarray:
    if nbar < 0:
        raise ValueError("nbar must be nonnegative")
    if nbar == 0:
        return fock_state(0, n_levels)
    q = nbar / (nbar + 1.0)
    p = q ** np.arange(n_levels)
    p /= p.sum()
    return np.diag(p).astype(complex)


def displaced_thermal_state(alpha: complex, nbar: float, n_levels: int) -> np.ndarray:
    d = displacement_operator(alpha, n_levels)
    return d @ thermal_state(nbar, n_levels) @ d.conj().T


def squeezed_state(r: float, phi: float, n_levels: int) -> np.ndarray:
    """Squeezed vacuum S(z)|0⟩⟨0|S†(z) with z = r e^{iφ}."""
    a = annihilation(n_levels)
    z = r * np.exp(1j * phi)
    s = expm(0.5 * (np.conj(z) * (a @ a) - z * (a.conj().T @ a.conj().T)))
    psi = s[:, 0]
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def cat_state(alpha: complex, theta: float, n_levels: int) -> np.ndarray:
    """Normalised |α⟩ + e^{iθ}|-α⟩; the norm carries the ⟨α|-α⟩ = e^{-2|α|²}
    overlap term."""
    psi = coherent_vector(alpha, n_levels) + np.exp(1j * theta) * coherent_vector(-alpha, n_levels)
    norm = np.linalg.norm(psi)
    if norm < 1e-12:
        raise ValueError("cat state is null for this (alpha, theta)")
    psi = psi / norm
    return np.outer(psi, psi.conj())
