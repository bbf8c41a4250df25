"""Initial states and transport observables.

Charge distributions (local energy or magnetization) are read off the
evolving window; their variance growth yields the diffusion coefficient,
computed from commutator expectations so no numerical time derivative is
needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hamiltonian import SZ, HamiltonianSpec
from .lattice import LatticeState, total_information
from .linalg import embed, hermitize
from .oracle import FullState, lattice_state_from_full
from .recovery import recover_to


def _window_state_from_product(factors: list[np.ndarray], level: int, first_site: int) -> LatticeState:
    full = FullState(len(factors), _kron_chain(factors))
    st = lattice_state_from_full(full, level)
    return LatticeState(level=level, first_site=first_site, mats=st.mats)


def _kron_chain(factors: list[np.ndarray]) -> np.ndarray:
    out = np.array([[1.0]], dtype=complex)
    for f in factors:
        out = np.kron(out, f)
    return out


def thermal_bump_initial(spec: HamiltonianSpec, beta: float, width: int) -> LatticeState:
    """Thermal bump exp(-β H_bump)/Z on `width` sites in an
    infinite-temperature background; window of 3·width sites."""
    if width < 1:
        raise ValueError("bump width must be at least 1")
    level = width - 1
    h_bump = spec.subsystem_hamiltonian(0, level)
    w, u = np.linalg.eigh(h_bump)
    z = np.exp(-beta * (w - w.min()))
    bump = hermitize((u * (z / z.sum())[None, :]) @ u.conj().T)
    pad = np.eye(spec.d) / spec.d
    margin = width  # level+1 sites per side
    factors = [pad] * margin + [bump] + [pad] * margin
    first_site = -(3 * width) // 2
    return _window_state_from_product(factors, level, first_site)


def magnetization_bump_initial(polarization: float, width: int, d: int = 2) -> LatticeState:
    """Product bump of single-site states (1 + p σ^z)/2 on `width` sites."""
    if abs(polarization) > 1:
        raise ValueError("|polarization| must not exceed 1")
    site = 0.5 * (np.eye(2) + polarization * SZ)
    pad = np.eye(2) / 2
    factors = [pad] + [site] * width + [pad]
    first_site = -(width + 2) // 2
    return _window_state_from_product(factors, 0, first_site)


@dataclass
class TransportRecord:
    """One measurement row of a transport run."""

    time: float
    distribution: dict[int, float]
    mean: float
    variance: float
    diffusion_coefficient: float
    total_charge: float
    total_information: float
    valid: bool = True


def _charge_operators(spec: HamiltonianSpec, charge: str) -> tuple[np.ndarray, int, np.ndarray, int, int]:
    """(density op, its site count, i[H, density] op, its site count, offset).

    offset is the distance from the commutator support's first site to the
    density's first site.
    """
    r = spec.range
    term = spec.term
    if charge == "energy":
        q_op = term
        q_sites = r + 1
        # i [H, h_m] = i Σ_{m'≠m} [h_m', h_m], supported on 3r+1 sites.
        c_sites = 3 * r + 1
        h_m = embed(term, r, r, spec.d)
        c_op = np.zeros((spec.d**c_sites,) * 2, dtype=complex)
        for shift in range(2 * r + 1):
            if shift == r:
                continue
            h_other = embed(term, shift, 2 * r - shift, spec.d)
            c_op += 1j * (h_other @ h_m - h_m @ h_other)
        return q_op, q_sites, hermitize(c_op), c_sites, r
    if charge == "magnetization":
        q_op = SZ.astype(complex)
        q_sites = 1
        c_sites = 2 * r + 1
        s_m = embed(SZ, r, r, spec.d)
        c_op = np.zeros((spec.d**c_sites,) * 2, dtype=complex)
        for shift in range(r + 1):
            h_other = embed(term, shift, r - shift, spec.d)
            c_op += 1j * (h_other @ s_m - s_m @ h_other)
        return q_op, q_sites, hermitize(c_op), c_sites, r
    raise ValueError(f"unknown charge {charge!r}")


def transport_record(
    state: LatticeState,
    spec: HamiltonianSpec,
    charge: str = "energy",
) -> TransportRecord:
    """Distribution, variance and diffusion coefficient of the charge.

    Commutator expectations are evaluated on recovered higher-level states so
    every operator support is covered regardless of the current level.
    """
    q_op, q_sites, c_op, c_sites, offset = _charge_operators(spec, charge)
    itot = total_information(state)

    need = max(state.level + spec.range, c_sites - 1)
    eval_state = recover_to(state, need - state.level) if need > state.level else state

    stacks = eval_state.level_stacks()
    q_stack = stacks[eval_state.level - (q_sites - 1)]
    c_stack = stacks[eval_state.level - (c_sites - 1)]
    w_lo = eval_state.first_site

    e_vals = np.einsum("ij,nji->n", q_op, q_stack).real
    c_vals = np.einsum("ij,nji->n", c_op, c_stack).real
    sites_e = np.arange(w_lo, w_lo + len(e_vals))
    sites_c = np.arange(w_lo + offset, w_lo + offset + len(c_vals))

    total = float(e_vals.sum())
    if abs(total) < 1e-12:
        return TransportRecord(
            time=state.time,
            distribution={int(m): float(v) for m, v in zip(sites_e, e_vals)},
            mean=0.0, variance=0.0, diffusion_coefficient=0.0,
            total_charge=total, total_information=itot, valid=False,
        )
    mean = float((sites_e * e_vals).sum() / total)
    var = float(((sites_e - mean) ** 2 * e_vals).sum() / total)
    var -= float(((sites_e - mean) * e_vals).sum() / total) ** 2

    dvar = float(((sites_c - mean) ** 2 * c_vals).sum() / total)
    corr = float(((sites_e - mean) * e_vals).sum() / total) * float(
        ((sites_c - mean) * c_vals).sum() / total
    )
    diff = 0.5 * dvar - corr
    return TransportRecord(
        time=state.time,
        distribution={int(m): float(v) for m, v in zip(sites_e, e_vals)},
        mean=mean,
        variance=var,
        diffusion_coefficient=diff,
        total_charge=total,
        total_information=itot,
    )


def powerlaw_exponent(times: np.ndarray, variances: np.ndarray, t_w: float, delta_t: float = 10.0) -> float:
    """Least-squares slope of ln σ² against ln t over [t_w, t_w + Δt]."""
    times = np.asarray(times, dtype=float)
    variances = np.asarray(variances, dtype=float)
    pick = (times >= t_w) & (times <= t_w + delta_t) & (times > 0) & (variances > 0)
    if pick.sum() < 5:
        raise ValueError("need at least 5 samples in the fit window")
    x = np.log(times[pick])
    y = np.log(variances[pick])
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)
