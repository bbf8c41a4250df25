"""Exact small-system reference engine.

Dense evolution of the full density matrix (unitary via the spectral
propagator, dissipative via tightly-toleranced adaptive Runge-Kutta) and
brickwork random-unitary circuits. Used by tests and the information-lattice
demos; practical up to about 12 sites.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rkf45
from .hamiltonian import HamiltonianSpec, LindbladSpec, apply_dissipator, embed
from .lattice import InfoLattice, LatticeLabel, LatticeState
from .linalg import (
    check_density_matrix,
    entropy_from_eigs,
    hermitize,
    n_sites,
    partial_trace,
)

ORACLE_RK_TOL = 1e-10


@dataclass
class FullState:
    """Density matrix of the entire chain."""

    sites: int
    matrix: np.ndarray
    d: int = 2

    def __post_init__(self) -> None:
        dim = self.d**self.sites
        if self.matrix.shape != (dim, dim):
            raise ValueError(f"matrix must be {dim}x{dim} for {self.sites} sites")

    def check(self) -> None:
        check_density_matrix(self.matrix, self.d)

    def block(self, first_site: int, level: int) -> np.ndarray:
        """Marginal on sites first_site..first_site+level."""
        right = self.sites - (first_site + level + 1)
        out = partial_trace(self.matrix, first_site, "left", self.d) if first_site else self.matrix
        return partial_trace(out, right, "right", self.d) if right else out


def full_hamiltonian(spec: HamiltonianSpec, sites: int) -> np.ndarray:
    """Σ_m h_m embedded on the full chain of the given length."""
    dim = spec.d**sites
    h = np.zeros((dim, dim), dtype=complex)
    for m in range(sites - spec.range):
        term = spec.local_term(m)
        if term is None:
            continue
        h += embed(term, m, sites - spec.range - 1 - m, spec.d)
    return hermitize(h)


def full_lindbladian(rho: np.ndarray, h: np.ndarray, lindblad: LindbladSpec | None, d: int = 2) -> np.ndarray:
    """dρ/dt = −i[H, ρ] + Σ_m γ (L ρ L† − ½{L†L, ρ})."""
    out = -1j * (h @ rho - rho @ h)
    if lindblad is not None:
        out = out + apply_dissipator(rho, lindblad, d)
    return out


def exact_evolve(
    state: FullState,
    spec: HamiltonianSpec,
    t: float,
    lindblad: LindbladSpec | None = None,
    tol: float = ORACLE_RK_TOL,
) -> FullState:
    """Evolve the full density matrix for time t.

    Closed systems use the exact propagator from the spectral decomposition
    of H; open systems integrate the Lindblad equation with a tolerance
    tighter than the engine's so oracle error never dominates comparisons.
    """
    h = full_hamiltonian(spec, state.sites)
    if lindblad is None:
        w, u = np.linalg.eigh(h)
        phase = np.exp(-1j * w * t)
        prop = (u * phase[None, :]) @ u.conj().T
        rho = prop @ state.matrix @ prop.conj().T
    else:
        rho = rkf45.integrate(
            lambda r: full_lindbladian(r, h, lindblad, state.d),
            state.matrix,
            t,
            tol=tol,
        )
    return FullState(state.sites, hermitize(rho), state.d)


def lattice_state_from_full(state: FullState, level: int, first_site: int = 0) -> LatticeState:
    """Exact level-`level` LatticeState of the full chain (finite window)."""
    n = state.sites - level
    if n < 1:
        raise ValueError(f"level {level} too high for {state.sites} sites")
    dim = state.d ** (level + 1)
    mats = np.empty((n, dim, dim), dtype=complex)
    for k in range(n):
        mats[k] = state.block(k, level)
    return LatticeState(
        level=level,
        first_site=first_site,
        mats=mats,
        d=state.d,
        chain_length=state.sites,
    )


def info_lattice_from_full(state: FullState, first_site: int = 0) -> InfoLattice:
    """Local information on every label of the full chain."""
    d, L = state.d, state.sites
    infos: list[np.ndarray] = []
    stack = state.matrix[None, :, :]
    for level in range(L - 1, -1, -1):
        w = np.linalg.eigvalsh(hermitize(stack))
        infos.append(np.log(d ** (level + 1)) - entropy_from_eigs(w))
        if level > 0:
            n, dim = stack.shape[0], stack.shape[-1]
            child = np.empty((n + 1, dim // d, dim // d), dtype=complex)
            child[:-1] = partial_trace(stack, 1, "right", d)
            child[-1] = partial_trace(stack[-1], 1, "left", d)
            stack = child
    infos.reverse()  # infos[level][k]
    values: dict[LatticeLabel, float] = {}
    for level in range(L):
        for k in range(L - level):
            i_val = infos[level][k]
            if level == 1:
                i_val -= infos[0][k] + infos[0][k + 1]
            elif level >= 2:
                i_val -= infos[level - 1][k] + infos[level - 1][k + 1]
                i_val += infos[level - 2][k + 1]
            values[LatticeLabel.from_first_site(first_site + k, level)] = float(i_val)
    return InfoLattice(values)


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Circular-unitary-ensemble sample via QR with phase correction."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))[None, :]


def brickwork_layer(sites: int, start: int, rng: np.random.Generator, d: int = 2) -> np.ndarray:
    """Unitary of one brickwork layer: two-site CUE gates on pairs
    (start, start+1), (start+2, start+3), ...; unpaired edge sites idle."""
    u = np.eye(d**start, dtype=complex)
    pos = start
    while pos + 1 < sites:
        u = np.kron(u, haar_unitary(d * d, rng))
        pos += 2
    if pos < sites:
        u = np.kron(u, np.eye(d, dtype=complex))
    return u


def random_circuit_cycle(state: FullState, rng: np.random.Generator) -> FullState:
    """One brickwork cycle U = U_odd U_even of fresh CUE two-site gates.

    Gates couple neighbor pairs; the even layer starts on the second site,
    so the chain boundaries only feel the odd layer.
    """
    u_even = brickwork_layer(state.sites, 1, rng, state.d)
    u_odd = brickwork_layer(state.sites, 0, rng, state.d)
    u = u_odd @ u_even
    return FullState(state.sites, hermitize(u @ state.matrix @ u.conj().T), state.d)


def product_state(single_sites: list[np.ndarray], d: int = 2) -> FullState:
    rho = single_sites[0]
    for s in single_sites[1:]:
        rho = np.kron(rho, s)
    return FullState(len(single_sites), np.asarray(rho, dtype=complex), d)


def all_up_state(sites: int) -> FullState:
    up = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
    return product_state([up] * sites)


def singlet_pair_vector() -> np.ndarray:
    return np.array([0.0, 1.0, -1.0, 0.0], dtype=complex) / np.sqrt(2.0)


def singlet_chain_state(sites: int) -> FullState:
    """Product of singlets on consecutive site pairs (sites must be even)."""
    if sites % 2:
        raise ValueError("singlet chain needs an even number of sites")
    psi = np.array([1.0], dtype=complex)
    for _ in range(sites // 2):
        psi = np.kron(psi, singlet_pair_vector())
    return FullState(sites, np.outer(psi, psi.conj()))


def random_singlet_state(sites: int, rng: np.random.Generator) -> tuple[FullState, list[tuple[int, int]]]:
    """Product of singlets on a random perfect matching of the sites."""
    if sites % 2:
        raise ValueError("random singlets need an even number of sites")
    perm = list(rng.permutation(sites))
    pairs = sorted(tuple(sorted((perm[2 * i], perm[2 * i + 1]))) for i in range(sites // 2))
    # Build the state vector pair by pair, then restore site ordering.
    psi = np.array([1.0], dtype=complex)
    order: list[int] = []
    for a, b in pairs:
        psi = np.kron(psi, singlet_pair_vector())
        order += [a, b]
    tensor = psi.reshape((2,) * sites)
    inv = np.argsort(order)
    tensor = np.transpose(tensor, axes=inv)
    psi = tensor.reshape(-1)
    return FullState(sites, np.outer(psi, psi.conj())), pairs
