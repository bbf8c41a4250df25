"""Local Hamiltonians, onsite jump operators, and subsystem Hamiltonians.

A chain Hamiltonian is a sum of local terms h_m of range r (each acting on
sites m..m+r). The subsystem Hamiltonian of a block is the partial trace of
the full Hamiltonian over the block's complement, divided by the complement's
Hilbert-space dimension; for traceless local terms only terms overlapping the
block survive.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import embed, hermitize, n_sites, partial_trace

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
ID2 = np.eye(2, dtype=complex)


@dataclass
class HamiltonianSpec:
    """Sum of local terms h_m of fixed range r on an infinite or finite chain.

    ``term`` is the translation-invariant local term on r+1 sites; a finite
    chain of ``chain_length`` sites keeps only the bonds m = 0..L-1-r. Terms
    must be traceless (constant shifts are rejected, not refolded).
    """

    range: int
    term: np.ndarray
    chain_length: int | None = None
    d: int = 2
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self.term = np.asarray(self.term, dtype=complex)
        dim = self.d ** (self.range + 1)
        if self.term.shape != (dim, dim):
            raise ValueError(f"local term must be {dim}x{dim} for range {self.range}")
        if np.max(np.abs(self.term - self.term.conj().T)) > 1e-12:
            raise ValueError("local term must be Hermitian")
        if abs(np.trace(self.term)) > 1e-12:
            raise ValueError("local term must be traceless")

    @property
    def finite(self) -> bool:
        return self.chain_length is not None

    def local_term(self, m: int) -> np.ndarray | None:
        """h_m on sites m..m+r, or None where the chain has no such bond."""
        if self.finite and not (0 <= m <= self.chain_length - 1 - self.range):
            return None
        return self.term

    def subsystem_hamiltonian(self, first_site: int, level: int) -> np.ndarray:
        """Subsystem Hamiltonian on sites first_site..first_site+level.

        Terms fully inside the block enter with unit weight; terms straddling
        a boundary are traced over the outside sites and divided by the traced
        dimension.
        """
        key = ("H", level, first_site if self.finite else None)
        if key in self._cache:
            return self._cache[key]
        d, r = self.d, self.range
        a, b = first_site, first_site + level
        dim = d ** (level + 1)
        h = np.zeros((dim, dim), dtype=complex)
        for m in range(a - r, b + 1):
            term = self.local_term(m)
            if term is None:
                continue
            lo, hi = m, m + r
            cut_l = max(a - lo, 0)
            cut_r = max(hi - b, 0)
            if cut_l + cut_r > r:
                continue
            inner = term
            if cut_l:
                inner = partial_trace(inner, cut_l, "left", d) / d**cut_l
            if cut_r:
                inner = partial_trace(inner, cut_r, "right", d) / d**cut_r
            h += embed(inner, (lo + cut_l) - a, b - (hi - cut_r), d)
        h = hermitize(h)
        self._cache[key] = h
        return h

    def boundary_deltas(self, first_site: int, level: int) -> tuple[np.ndarray, np.ndarray]:
        """ΔH_L = H^{l+r}(a-r) - 1_{d^r} ⊗ H^l(a) and the mirrored ΔH_R.

        These are the coupling operators entering the subsystem equation of
        motion; both act on level+r+1 sites and are supported on the 2r sites
        nearest the corresponding boundary.
        """
        key = ("dH", level, first_site if self.finite else None)
        if key in self._cache:
            return self._cache[key]
        d, r = self.d, self.range
        h_own = self.subsystem_hamiltonian(first_site, level)
        dh_l = self.subsystem_hamiltonian(first_site - r, level + r) - embed(h_own, r, 0, d)
        dh_r = self.subsystem_hamiltonian(first_site, level + r) - embed(h_own, 0, r, d)
        self._cache[key] = (dh_l, dh_r)
        return dh_l, dh_r

    def boundary_blocks(self, level: int) -> tuple[np.ndarray, np.ndarray]:
        """Compress ΔH_L, ΔH_R of a bulk subsystem to their 2r-site blocks.

        Only valid for infinite chains, where ΔH_L = B_L ⊗ 1 exactly; the
        factorization is verified once and cached.
        """
        if self.finite:
            raise ValueError("boundary blocks require an infinite chain")
        key = ("B", level)
        if key in self._cache:
            return self._cache[key]
        d, r = self.d, self.range
        rest = level + 1 - r
        dh_l, dh_r = self.boundary_deltas(0, level)
        b_l = partial_trace(dh_l, rest, "right", d) / d**rest
        b_r = partial_trace(dh_r, rest, "left", d) / d**rest
        if np.max(np.abs(dh_l - embed(b_l, 0, rest, d))) > 1e-10:
            raise AssertionError("left boundary coupling does not factorize")
        if np.max(np.abs(dh_r - embed(b_r, rest, 0, d))) > 1e-10:
            raise AssertionError("right boundary coupling does not factorize")
        self._cache[key] = (b_l, b_r)
        return b_l, b_r


@dataclass
class LindbladSpec:
    """Onsite jump operators with rates, the same on every physical site.

    The dissipator follows the standard normalization
    Σ_m γ_m (L ρ L† − ½{L†L, ρ}).
    """

    jumps: Sequence[tuple[np.ndarray, float]]
    d: int = 2

    def __post_init__(self) -> None:
        ops = []
        for op, rate in self.jumps:
            op = np.asarray(op, dtype=complex)
            if op.shape != (self.d, self.d):
                raise ValueError("jump operators act on a single site")
            if rate < 0:
                raise ValueError("jump rates must be non-negative")
            ops.append((op, float(rate)))
        self.jumps = ops

    @property
    def is_diagonal(self) -> bool:
        return all(np.max(np.abs(op - np.diag(np.diag(op)))) == 0.0 for op, _ in self.jumps)

    def dephasing_mask(self, sites: int) -> np.ndarray:
        """For diagonal jumps: coefficient matrix C with D[ρ] = C ⊙ ρ.

        C_{ab} = Σ_m Σ_j γ_j (z_a z_b* − ½|z_a|² − ½|z_b|²) built from the
        jump diagonals z on each site; elementwise application replaces the
        per-site operator products.
        """
        if not self.is_diagonal:
            raise ValueError("mask only defined for diagonal jumps")
        dim = self.d**sites
        m = np.zeros((dim, dim), dtype=complex)
        idx = np.arange(dim)
        for op, rate in self.jumps:
            z = np.diag(op)
            for site in range(sites):
                shift = self.d ** (sites - 1 - site)
                vals = z[(idx // shift) % self.d]
                m += rate * np.outer(vals, vals.conj())
        diag = np.diag(m).real
        return m - 0.5 * (diag[:, None] + diag[None, :])


def apply_dissipator(rho: np.ndarray, lindblad: LindbladSpec, d: int = 2) -> np.ndarray:
    """Σ_{m in block} γ_m (L_m ρ L_m† − ½{L_m†L_m, ρ}) for onsite jumps."""
    dim = rho.shape[-1]
    sites = n_sites(dim, d)
    out = np.zeros_like(rho)
    for op, rate in lindblad.jumps:
        for site in range(sites):
            l_full = embed(op, site, sites - 1 - site, d)
            ldl = l_full.conj().T @ l_full
            out += rate * (l_full @ rho @ l_full.conj().T - 0.5 * (ldl @ rho + rho @ ldl))
    return out


def mixed_field_ising(j: float, h_t: float, h_l: float, chain_length: int | None = None) -> HamiltonianSpec:
    """Nearest-neighbor Ising chain with transverse and longitudinal fields.

    The local term uses the symmetric field split, so the same h_m serves as
    the local-energy partition for transport observables.
    """
    term = (
        j * np.kron(SZ, SZ)
        + 0.5 * h_t * (np.kron(SX, ID2) + np.kron(ID2, SX))
        + 0.5 * h_l * (np.kron(SZ, ID2) + np.kron(ID2, SZ))
    )
    return HamiltonianSpec(range=1, term=term, chain_length=chain_length)


def xx_dephasing(j: float, gamma: float, chain_length: int | None = None) -> tuple[HamiltonianSpec, LindbladSpec]:
    """XX chain with uniform onsite σ^z dephasing of strength gamma."""
    term = j * (np.kron(SX, SX) + np.kron(SY, SY))
    spec = HamiltonianSpec(range=1, term=term, chain_length=chain_length)
    return spec, LindbladSpec(jumps=[(SZ, gamma)])
