"""Subsystem lattice and information lattice.

A label (n, l) addresses the block of l+1 contiguous sites centered at n;
n is integer on even levels and half-integer on odd ones, so it is stored
doubled (n2 = 2n). A LatticeState holds all subsystem density matrices of
one level over a finite window of the chain, stacked into a single array.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .linalg import entropy_from_eigs, hermitize, n_sites, partial_trace

# Local information below this magnitude is treated as numerically zero.
INFO_EPS = 1e-12


@dataclass(frozen=True, order=True)
class LatticeLabel:
    """Subsystem label: n2 = 2n (so half-integer centers stay exact) and level."""

    n2: int
    level: int

    def __post_init__(self) -> None:
        if (self.n2 + self.level) % 2 != 0:
            raise ValueError(
                f"label parity violated: n2={self.n2} level={self.level} "
                "(n is integer on even levels, half-integer on odd)"
            )
        if self.level < 0:
            raise ValueError("level must be non-negative")

    @property
    def center(self) -> float:
        return self.n2 / 2.0

    @property
    def first_site(self) -> int:
        return (self.n2 - self.level) // 2

    @property
    def sites(self) -> int:
        return self.level + 1

    @staticmethod
    def from_first_site(first_site: int, level: int) -> "LatticeLabel":
        return LatticeLabel(2 * first_site + level, level)


@dataclass
class LatticeState:
    """All subsystem density matrices at one level over a site window.

    ``mats[k]`` is the state of the block starting at ``first_site + k``; the
    window covers sites [first_site, first_site + n_labels + level). A finite
    chain fixes the window; otherwise the window floats inside an implicit
    infinite-temperature background.
    """

    level: int
    first_site: int
    mats: np.ndarray
    time: float = 0.0
    d: int = 2
    info_baseline: float = 0.0
    chain_length: int | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_labels(self) -> int:
        return self.mats.shape[0]

    @property
    def window(self) -> tuple[int, int]:
        return self.first_site, self.first_site + self.n_labels + self.level

    @property
    def window_size(self) -> int:
        return self.n_labels + self.level

    def labels(self) -> list[LatticeLabel]:
        return [
            LatticeLabel.from_first_site(self.first_site + k, self.level)
            for k in range(self.n_labels)
        ]

    def index_of(self, label: LatticeLabel) -> int:
        if label.level != self.level:
            raise KeyError(f"state holds level {self.level}, not {label.level}")
        k = label.first_site - self.first_site
        if not 0 <= k < self.n_labels:
            raise KeyError(f"label {label} outside window {self.window}")
        return k

    def __getitem__(self, label: LatticeLabel) -> np.ndarray:
        return self.mats[self.index_of(label)]

    def copy(self) -> "LatticeState":
        return replace(self, mats=self.mats.copy(), _cache={})

    def child_stack(self, mats: np.ndarray | None = None) -> np.ndarray:
        """Level-(l-1) marginals over the same window (one more label).

        Adjacent parents share each child; the two available partial traces
        are averaged, which is exact for neighbor-compatible states.
        """
        mats = self.mats if mats is None else mats
        n, dim = mats.shape[0], mats.shape[-1]
        dlow = dim // self.d
        out = np.empty((n + 1, dlow, dlow), dtype=complex)
        out[:-1] = partial_trace(mats, 1, "right", self.d)
        left = partial_trace(mats, 1, "left", self.d)
        out[-1] = left[-1]
        out[1:-1] = 0.5 * (out[1:-1] + left[:-1])
        return out

    def level_stacks(self, down_to: int = 0) -> list[np.ndarray]:
        """Stacks for levels level, level-1, ..., down_to (by partial traces)."""
        key = ("stacks", down_to)
        if key in self._cache:
            return self._cache[key]
        stacks = [self.mats]
        st = self
        for _ in range(self.level - down_to):
            child = st.child_stack()
            stacks.append(child)
            st = replace(st, level=st.level - 1, mats=child, _cache={})
        self._cache[key] = stacks
        return stacks

    def site_marginals(self) -> np.ndarray:
        """Single-site density matrices for every site in the window."""
        return self.level_stacks()[self.level]

    def check_compatibility(self, tol: float = 1e-8) -> float:
        """Max deviation between the shared marginals of adjacent labels."""
        if self.n_labels < 2:
            return 0.0
        left = partial_trace(self.mats[1:], 1, "right", self.d)
        right = partial_trace(self.mats[:-1], 1, "left", self.d)
        dev = float(np.max(np.abs(left - right)))
        if dev > tol:
            raise ValueError(f"neighbor compatibility violated: {dev:.3e} > {tol:.0e}")
        return dev


@dataclass
class InfoLattice:
    """Local information values on the subsystem lattice."""

    values: dict[LatticeLabel, float]

    @property
    def total(self) -> float:
        return float(sum(self.values.values()))

    def level_sum(self, level: int) -> float:
        return float(sum(v for lab, v in self.values.items() if lab.level == level))

    def level_max(self, level: int) -> float:
        vals = [v for lab, v in self.values.items() if lab.level == level]
        return max(vals) if vals else 0.0

    def records(self) -> list[dict]:
        return [
            {"n2": lab.n2, "level": lab.level, "i": float(v)}
            for lab, v in sorted(self.values.items(), key=lambda kv: (kv[0].level, kv[0].n2))
        ]

    def to_json(self) -> str:
        return json.dumps(self.records())


def von_neumann_information(rho: np.ndarray, d: int = 2) -> float:
    """I(ρ) = ln(dim) + Tr(ρ ln ρ): the deficit of entropy from maximal."""
    w = np.linalg.eigvalsh(hermitize(rho))
    return float(np.log(rho.shape[-1]) - entropy_from_eigs(w))


def mutual_information(
    rho_ab: np.ndarray,
    rho_a: np.ndarray,
    rho_b: np.ndarray,
    rho_overlap: np.ndarray | None = None,
    d: int = 2,
    validate: bool = False,
) -> float:
    """i(A;B) = I(AB) − I(A) − I(B) + I(A∩B); empty overlap contributes 0."""
    if validate:
        da, db = rho_a.shape[-1], rho_b.shape[-1]
        dov = 1 if rho_overlap is None else rho_overlap.shape[-1]
        ka = partial_trace(rho_ab, n_sites(rho_ab.shape[-1] // da, d), "right", d)
        kb = partial_trace(rho_ab, n_sites(rho_ab.shape[-1] // db, d), "left", d)
        if np.max(np.abs(ka - rho_a)) > 1e-8 or np.max(np.abs(kb - rho_b)) > 1e-8:
            raise ValueError("marginals inconsistent with the joint state")
        if da * db != rho_ab.shape[-1] * dov:
            raise ValueError("overlap dimension inconsistent with A, B, AB")
    i = von_neumann_information(rho_ab, d) - von_neumann_information(rho_a, d) - von_neumann_information(rho_b, d)
    if rho_overlap is not None:
        i += von_neumann_information(rho_overlap, d)
    return i


def _level_informations(stacks: list[np.ndarray]) -> list[np.ndarray]:
    """I values per label for each stack in a level_stacks result."""
    out = []
    for st in stacks:
        w = np.linalg.eigvalsh(hermitize(st))
        out.append(np.log(st.shape[-1]) - entropy_from_eigs(w))
    return out


def local_information_values(state: LatticeState) -> list[np.ndarray]:
    """Local information per label for levels state.level .. 0.

    Element j of the result is the array of i values at level (state.level-j),
    indexed by label position. i at level l is the mutual information between
    the two level-(l-1) children; at l = 0 it equals the von Neumann
    information of the site.
    """
    if "local_info" in state._cache:
        return state._cache["local_info"]
    stacks = state.level_stacks()
    infos = _level_informations(stacks)
    vals: list[np.ndarray] = []
    for j in range(len(stacks)):
        level = state.level - j
        if level == 0:
            vals.append(infos[j].copy())
        elif level == 1:
            vals.append(infos[j] - infos[j + 1][:-1] - infos[j + 1][1:])
        else:
            vals.append(infos[j] - infos[j + 1][:-1] - infos[j + 1][1:] + infos[j + 2][1:-1])
    state._cache["local_info"] = vals
    return vals


def local_information(state: LatticeState, label: LatticeLabel) -> float:
    """Local information at one label of the state (label.level ≤ state.level)."""
    if label.level > state.level:
        raise ValueError(f"label level {label.level} above state level {state.level}")
    vals = local_information_values(state)
    k = label.first_site - state.first_site
    row = vals[state.level - label.level]
    if not 0 <= k < len(row):
        raise KeyError(f"label {label} outside window {state.window}")
    return float(row[k])


def info_lattice(state: LatticeState) -> InfoLattice:
    """Local information for every label with level ≤ state.level in the window."""
    vals = local_information_values(state)
    out: dict[LatticeLabel, float] = {}
    for j, row in enumerate(vals):
        level = state.level - j
        for k, v in enumerate(row):
            out[LatticeLabel.from_first_site(state.first_site + k, level)] = float(v)
    return InfoLattice(out)


def total_information(state: LatticeState) -> float:
    return float(sum(row.sum() for row in local_information_values(state)))


def reduce_level(state: LatticeState, target: int) -> LatticeState:
    """Partial-trace the state down to the target level (same window)."""
    if target > state.level:
        raise ValueError(f"cannot reduce level {state.level} to {target}")
    if target < 0:
        raise ValueError("target level must be non-negative")
    if target == state.level:
        return state.copy()
    stacks = state.level_stacks(down_to=target)
    return replace(
        state,
        level=target,
        mats=stacks[state.level - target].copy(),
        _cache={},
    )
