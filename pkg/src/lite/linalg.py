"""Dense Hermitian-operator algebra on small tensor-product spaces.

All routines act on complex arrays of shape ``(..., D, D)`` where ``D = d**s``
for a chain of ``s`` sites with local dimension ``d``; leading axes are batch
axes. The leftmost physical site is the most significant tensor factor
(row-major layout), which fixes the meaning of "left" and "right" partial
traces.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

# Floor applied to eigenvalues before ln / x^(-1/2); near-singular marginals
# show up in recovery maps even though evolved states stay full rank.
EIG_FLOOR = 1e-14

# Eigenvalues of a density matrix in [-PSD_TOL, 0) are tolerated; anything
# more negative indicates a genuine positivity breakdown.
PSD_TOL = 1e-10


def dag(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose of the last two axes."""
    return np.conj(np.swapaxes(a, -1, -2))


def hermitize(a: np.ndarray) -> np.ndarray:
    """Hermitian part (a + a†)/2."""
    return 0.5 * (a + dag(a))


def is_hermitian(a: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(a - dag(a))) <= tol)


def n_sites(dim: int, d: int = 2) -> int:
    """Number of sites for a Hilbert-space dimension ``dim = d**s``."""
    s = round(np.log(dim) / np.log(d))
    if d**s != dim:
        raise ValueError(f"dimension {dim} is not a power of d={d}")
    return s


def partial_trace(m: np.ndarray, k: int, side: str = "left", d: int = 2) -> np.ndarray:
    """Trace out the ``k`` leftmost (or rightmost) sites of ``m``.

    Trace-preserving and linear; the result acts on ``s - k`` sites.
    """
    dim = m.shape[-1]
    s = n_sites(dim, d)
    if k < 0 or k > s:
        raise ValueError(f"cannot trace {k} sites out of {s}")
    if k == 0:
        return m.copy()
    dk = d**k
    rest = dim // dk
    batch = m.shape[:-2]
    if side == "left":
        mr = m.reshape(batch + (dk, rest, dk, rest))
        return np.einsum("...iaib->...ab", mr)
    if side == "right":
        mr = m.reshape(batch + (rest, dk, rest, dk))
        return np.einsum("...aibi->...ab", mr)
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def embed(m: np.ndarray, left_sites: int, right_sites: int, d: int = 2) -> np.ndarray:
    """Tensor product 1_{d^left} ⊗ m ⊗ 1_{d^right}."""
    if left_sites < 0 or right_sites < 0:
        raise ValueError("site counts must be non-negative")
    out = m
    if left_sites:
        out = np.kron(np.eye(d**left_sites), out)
    if right_sites:
        out = np.kron(out, np.eye(d**right_sites))
    return out


@dataclass
class SpectralDecomp:
    """Eigendecomposition of a Hermitian operator: ascending eigenvalues and
    the unitary whose columns are the eigenvectors."""

    eigenvalues: np.ndarray
    basis: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.basis * self.eigenvalues[..., None, :]) @ dag(self.basis)


def spectral(m: np.ndarray, check_tol: float = 1e-10) -> SpectralDecomp:
    """Eigendecomposition with a Hermiticity contract check."""
    dev = np.max(np.abs(m - dag(m)))
    if dev > check_tol:
        raise ValueError(f"operator is not Hermitian (deviation {dev:.3e})")
    w, u = np.linalg.eigh(hermitize(m))
    return SpectralDecomp(w, u)


def matrix_fn(
    m: np.ndarray,
    f: Callable[[np.ndarray], np.ndarray],
    floor: float | None = None,
) -> np.ndarray:
    """Apply a real scalar function to a Hermitian operator, U f(κ) U†.

    ``floor`` clamps eigenvalues from below before applying ``f`` (required
    for ln and inverse square root near rank deficiency).
    """
    w, u = np.linalg.eigh(hermitize(m))
    if floor is not None:
        w = np.maximum(w, floor)
    return hermitize((u * f(w)[..., None, :]) @ dag(u))


def matrix_log(m: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    if floor <= 0:
        raise ValueError("log requires a positive eigenvalue floor")
    return matrix_fn(m, np.log, floor=floor)


def matrix_exp(m: np.ndarray) -> np.ndarray:
    return matrix_fn(m, np.exp)


def matrix_sqrt(m: np.ndarray) -> np.ndarray:
    return matrix_fn(m, np.sqrt, floor=0.0)


def matrix_inv_sqrt(m: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    if floor <= 0:
        raise ValueError("inverse sqrt requires a positive eigenvalue floor")
    return matrix_fn(m, lambda w: 1.0 / np.sqrt(w), floor=floor)


def trace_norm(a: np.ndarray) -> float | np.ndarray:
    """Trace norm; for Hermitian input this is the sum of |eigenvalues|."""
    w = np.linalg.eigvalsh(hermitize(a))
    out = np.sum(np.abs(w), axis=-1)
    return float(out) if out.ndim == 0 else out


def frob_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a))


def entropy_from_eigs(w: np.ndarray) -> np.ndarray:
    """Von Neumann entropy -Σ κ ln κ from eigenvalues; x ln x → 0 at x = 0."""
    wc = np.where(w > 0.0, w, 1.0)
    return -np.sum(wc * np.log(wc), axis=-1)


def vn_entropy(rho: np.ndarray) -> float | np.ndarray:
    w = np.linalg.eigvalsh(hermitize(rho))
    s = entropy_from_eigs(w)
    return float(s) if np.ndim(s) == 0 else s


def psd_repair(rho: np.ndarray, tol: float = PSD_TOL) -> np.ndarray:
    """Clip tiny negative eigenvalues (within ``tol``) and renormalize.

    Raises if an eigenvalue is more negative than ``tol``; that is a
    breakdown, not rounding noise.
    """
    w, u = np.linalg.eigh(hermitize(rho))
    wmin = w.min()
    if wmin < -tol:
        raise ValueError(f"density matrix has eigenvalue {wmin:.3e} < -{tol:.0e}")
    if wmin >= 0.0:
        return rho
    w = np.clip(w, 0.0, None)
    out = (u * w[..., None, :]) @ dag(u)
    tr = np.trace(out, axis1=-2, axis2=-1).real
    return out / tr[..., None, None]


def check_density_matrix(rho: np.ndarray, d: int = 2) -> None:
    """Validate the density-matrix invariants (Hermitian, unit trace, PSD)."""
    if not is_hermitian(rho, 1e-12):
        raise ValueError("density matrix is not Hermitian within 1e-12")
    tr = complex(np.trace(rho))
    if abs(tr - 1.0) > 1e-10:
        raise ValueError(f"density matrix trace {tr} deviates from 1")
    wmin = float(np.linalg.eigvalsh(hermitize(rho)).min())
    if wmin < -PSD_TOL:
        raise ValueError(f"density matrix eigenvalue {wmin:.3e} below -{PSD_TOL:.0e}")


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return hermitize(a)


def random_density_matrix(
    dim: int, rng: np.random.Generator, rank: int | None = None
) -> np.ndarray:
    """Random mixed state: partial trace of a Haar-random pure state on
    dim × rank (rank defaults to dim)."""
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
