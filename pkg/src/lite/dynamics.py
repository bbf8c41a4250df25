"""Subsystem equations of motion and the adaptive evolution step.

Each level-l state evolves under its own subsystem Hamiltonian plus boundary
couplings that involve the two level-(l+r) neighbors, which are rebuilt by
projected recovery at every Runge-Kutta stage so the stage derivatives see
consistent neighbors. Onsite dissipators act within the subsystem alone.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import rkf45
from .hamiltonian import HamiltonianSpec, LindbladSpec, apply_dissipator
from .lattice import LatticeState, local_information_values
from .linalg import dag, embed, hermitize, partial_trace, trace_norm
from .minimizer import entropy_gradient
from .recovery import recover_stack, recover_to


class NegativityError(RuntimeError):
    """A state lost positivity beyond tolerance; carries time and label."""

    def __init__(self, time: float, first_site: int, level: int, eigmin: float):
        super().__init__(
            f"positivity breakdown at t={time:.6g}, "
            f"label (first_site={first_site}, level={level}): eigmin={eigmin:.3e}"
        )
        self.time = time
        self.first_site = first_site
        self.level = level
        self.eigmin = eigmin


class StiffnessError(RuntimeError):
    """The adaptive step shrank below the configured minimum."""


@dataclass
class StepResult:
    state: LatticeState
    dt_used: float
    error_estimate: float
    escalated: bool = False
    window_grown: int = 0
    dt_next: float = 0.0


def subsystem_derivative(
    rho: np.ndarray,
    rho_left: np.ndarray | None,
    rho_right: np.ndarray | None,
    spec: HamiltonianSpec,
    first_site: int,
    level: int,
    lindblad: LindbladSpec | None = None,
) -> np.ndarray:
    """Reference evaluation of the equation of motion for one label.

    rho_left / rho_right are the level-(l+r) neighbor states; None drops the
    corresponding coupling (finite-chain edge).
    """
    d, r = spec.d, spec.range
    h_own = spec.subsystem_hamiltonian(first_site, level)
    out = -1j * (h_own @ rho - rho @ h_own)
    if lindblad is not None:
        out = out + apply_dissipator(rho, lindblad, d)
    if rho_left is not None:
        dh_l, _ = spec.boundary_deltas(first_site, level)
        out = out + -1j * partial_trace(dh_l @ rho_left - rho_left @ dh_l, r, "left", d)
    if rho_right is not None:
        _, dh_r = spec.boundary_deltas(first_site, level)
        out = out + -1j * partial_trace(dh_r @ rho_right - rho_right @ dh_r, r, "right", d)
    return out


def info_currents(
    state: LatticeState,
    label_index: int,
    spec: HamiltonianSpec,
    recovered: LatticeState | None = None,
) -> tuple[float, float]:
    """Left and right information currents of one label.

    Defined so that dI/dt = J_L + J_R holds for the subsystem equation of
    motion; the sign convention follows from dI/dt = -Tr(∇S ∂ρ).
    """
    d, r = spec.d, spec.range
    level = state.level
    a = state.first_site + label_index
    if recovered is None:
        recovered = recover_to(state, r)
    ns = embed(entropy_gradient(state.mats[label_index]), r, 0, d)
    dh_l, dh_r = spec.boundary_deltas(a, level)
    left = _neighbor(state, recovered, label_index - r, "left", r)
    right = _neighbor(state, recovered, label_index, "right", r)
    j_l = 0.0
    if left is not None:
        comm = ns @ dh_l - dh_l @ ns
        j_l = float(np.real(1j * np.trace(comm @ left)))
    j_r = 0.0
    if right is not None:
        ns = embed(entropy_gradient(state.mats[label_index]), 0, r, d)
        comm = ns @ dh_r - dh_r @ ns
        j_r = float(np.real(1j * np.trace(comm @ right)))
    return j_l, j_r


def _neighbor(
    state: LatticeState, recovered: LatticeState, rec_index: int, side: str, r: int
) -> np.ndarray | None:
    """Level-(l+r) neighbor state for one label, synthesizing the
    infinite-temperature extension past the window edge."""
    if 0 <= rec_index < recovered.n_labels:
        return recovered.mats[rec_index]
    if state.chain_length is not None:
        return None
    d = state.d
    k = rec_index + r if side == "left" else rec_index
    own = state.mats[k]
    pad = np.eye(d**r) / d**r
    return np.kron(pad, own) if side == "left" else np.kron(own, pad)


# --- batched stage pipeline -------------------------------------------------


class _StagePlan:
    """Precomputed fixed operators for one (spec, level, window) combination.

    Valid for translation-invariant infinite chains; finite chains fall back
    to the per-label reference derivative.
    """

    def __init__(self, spec: HamiltonianSpec, lindblad: LindbladSpec | None, level: int):
        d, r = spec.d, spec.range
        self.d, self.r, self.level = d, r, level
        self.h_own = spec.subsystem_hamiltonian(0, level)
        b_l, b_r = spec.boundary_blocks(level)
        q = d**r
        self.b_l4 = b_l.reshape(q, q, q, q)
        self.b_r4 = b_r.reshape(q, q, q, q)
        self.q = q
        self.mask = None
        self.jumps = None
        if lindblad is not None:
            if lindblad.is_diagonal:
                self.mask = lindblad.dephasing_mask(level + 1)
            else:
                self.jumps = [
                    (embed(op, s, level - s, d), rate)
                    for op, rate in lindblad.jumps
                    for s in range(level + 1)
                ]

    def derivative(self, mats: np.ndarray, recovered: np.ndarray) -> np.ndarray:
        """Equation-of-motion right-hand side for the whole window."""
        n, dh = mats.shape[0], mats.shape[-1]
        q, r = self.q, self.r
        rest = (dh * q) // (q * q)

        p = np.matmul(mats.reshape(n * dh, dh), self.h_own).reshape(n, dh, dh)
        out = 1j * (p - dag(p))
        if self.mask is not None:
            out += self.mask * mats
        elif self.jumps is not None:
            for l_full, rate in self.jumps:
                ldl = l_full.conj().T @ l_full
                lr = np.matmul(np.matmul(l_full, mats), l_full.conj().T)
                anti = np.matmul(ldl, mats) + np.matmul(mats, ldl)
                out += rate * (lr - 0.5 * anti)

        # Boundary couplings; the recovered neighbors are Hermitian, so
        # Tr_L([B, X]) = T - T† with T = Tr_L(B X), one product per side.
        m = recovered.shape[0]
        big = dh * q
        q2 = q * q

        bx = np.matmul(self.b_l4.reshape(q2, q2), recovered.reshape(-1, q2, rest * big))
        bx = bx.reshape(m, q, q, rest, q, q, rest)
        tl = np.einsum("mabcade->mbcde", bx).reshape(m, dh, dh)
        left_bulk = -1j * (tl - dag(tl))
        edge_l = [self._edge_term(mats[k], "left") for k in range(r)]
        out[:r] += np.stack(edge_l) if edge_l else 0.0
        out[r:] += left_bulk

        xb = np.matmul(recovered.reshape(-1, rest * big, q2), self.b_r4.reshape(q2, q2))
        xb = xb.reshape(m, rest, q, q, rest, q, q)
        tr = np.einsum("mabcdec->mabde", xb).reshape(m, dh, dh)
        right_bulk = -1j * (dag(tr) - tr)
        out[: n - r] += right_bulk
        edge_r = [self._edge_term(mats[k], "right") for k in range(n - r, n)]
        out[n - r :] += np.stack(edge_r) if edge_r else 0.0
        return out

    def _edge_term(self, rho: np.ndarray, side: str) -> np.ndarray:
        d, r = self.d, self.r
        pad = np.eye(d**r) / d**r
        if side == "left":
            nb = np.kron(pad, rho)
            dh_full = embed(self.b_l4.reshape(self.q**2, self.q**2), 0, self.level + 1 - r, d)
            return -1j * partial_trace(dh_full @ nb - nb @ dh_full, r, "left", d)
        nb = np.kron(rho, pad)
        dh_full = embed(self.b_r4.reshape(self.q**2, self.q**2), self.level + 1 - r, 0, d)
        return -1j * partial_trace(dh_full @ nb - nb @ dh_full, r, "right", d)


def _rhs_reference(
    mats: np.ndarray,
    state: LatticeState,
    spec: HamiltonianSpec,
    lindblad: LindbladSpec | None,
) -> np.ndarray:
    """Per-label derivative via the reference path (finite chains)."""
    r = spec.range
    work = replace(state, mats=mats, _cache={})
    if state.n_labels > r:
        rec = work
        for _ in range(r):
            rec = replace(
                rec, level=rec.level + 1, mats=recover_stack(rec.mats, spec.d), _cache={}
            )
    else:
        # Nothing above this level (finite chain top): no boundary coupling.
        dim = mats.shape[-1] * spec.d**r
        rec = replace(work, level=work.level + r, mats=np.empty((0, dim, dim)), _cache={})
    out = np.empty_like(mats)
    for k in range(state.n_labels):
        left = _neighbor(work, rec, k - r, "left", r)
        right = _neighbor(work, rec, k, "right", r)
        out[k] = subsystem_derivative(
            mats[k], left, right, spec, state.first_site + k, state.level, lindblad
        )
    return out


def _rhs_fast(mats: np.ndarray, plan: _StagePlan) -> np.ndarray:
    rec = mats
    for _ in range(plan.r):
        rec = recover_stack(rec, plan.d)
    return plan.derivative(mats, rec)


def rk45_step(
    state: LatticeState,
    spec: HamiltonianSpec,
    lindblad: LindbladSpec | None,
    rk_tol: float,
    dt: float,
    dt_min: float = 1e-10,
    alpha: float = 1e-8,
    alpha_threshold: float = 1e-10,
) -> StepResult:
    """One accepted adaptive step of the whole window.

    All labels advance by the same dt; the embedded fourth-order error is the
    max-abs entry over every label. When the smallest eigenvalue across the
    window is below the threshold, states are blended with the maximally
    mixed state by alpha before the stages and unblended afterwards.
    """
    plan = None
    if state.chain_length is None:
        plan = _StagePlan(spec, lindblad, state.level)

    dim = state.mats.shape[-1]
    eigs = np.linalg.eigvalsh(state.mats)
    use_shift = alpha > 0 and float(eigs.min()) < alpha_threshold
    mats0 = state.mats
    if use_shift:
        mats0 = (mats0 + (alpha / dim) * np.eye(dim)) / (1.0 + alpha)

    def rhs(m):
        if plan is not None:
            return _rhs_fast(m, plan)
        return _rhs_reference(m, state, spec, lindblad)

    while True:
        k = [rhs(mats0)]
        for s in range(1, rkf45.N_STAGES):
            ys = mats0 + dt * sum(a * ks for a, ks in zip(rkf45.A[s], k))
            k.append(rhs(ys))
        err_mat = sum(e * ks for e, ks in zip(rkf45.ERR, k))
        err = dt * float(np.max(np.abs(err_mat)))
        if err <= rk_tol:
            break
        dt = rkf45.next_dt(dt, err, rk_tol)
        if dt < dt_min:
            raise StiffnessError(f"dt underflow ({dt:.3e}) at t={state.time:.6g}")

    new = mats0 + dt * sum(b * ks for b, ks in zip(rkf45.B5, k))
    if use_shift:
        new = (1.0 + alpha) * new - (alpha / dim) * np.eye(dim)
    new = hermitize(new)

    eigs = np.linalg.eigvalsh(new)
    worst = int(np.argmin(eigs.min(axis=-1)))
    eigmin = float(eigs[worst].min())
    if eigmin < -1e-8:
        raise NegativityError(state.time + dt, state.first_site + worst, state.level, eigmin)

    out = replace(state, mats=new, time=state.time + dt, _cache={})
    return StepResult(
        state=out,
        dt_used=dt,
        error_estimate=err,
        dt_next=rkf45.next_dt(dt, err, rk_tol),
    )


def enlarge_window(state: LatticeState, sites_per_side: int) -> LatticeState:
    """Add infinite-temperature sites at both window edges.

    Valid while the window keeps enough infinite-temperature margin that
    every new label is exactly maximally mixed.
    """
    if state.chain_length is not None:
        return state
    n, dim = state.n_labels, state.mats.shape[-1]
    pad = sites_per_side
    mats = np.empty((n + 2 * pad, dim, dim), dtype=complex)
    eye = np.eye(dim) / dim
    mats[:pad] = eye
    mats[pad : pad + n] = state.mats
    mats[pad + n :] = eye
    return replace(state, first_site=state.first_site - pad, mats=mats, _cache={})


def site_deviation(state: LatticeState) -> np.ndarray:
    """Trace-norm distance of each site marginal from infinite temperature."""
    margs = state.site_marginals()
    return trace_norm(margs - np.eye(state.d) / state.d)


def manage_window(state: LatticeState, p_threshold: float, keep: int | None = None) -> LatticeState:
    """Trim excess infinite-temperature sites, keeping `keep` per side.

    Sites whose single-site state is within trace norm p of the maximally
    mixed one count as infinite temperature. Defaults to keeping level+1
    margin sites on each side.
    """
    if state.chain_length is not None:
        return state
    keep = state.level + 1 if keep is None else keep
    dev = site_deviation(state) > p_threshold
    w_lo, w_hi = state.window
    if not dev.any():
        size = max(state.level + 1, 2 * keep)
        mid = (w_lo + w_hi) // 2
        lo, hi = mid - size // 2, mid - size // 2 + size
    else:
        sites = np.arange(w_lo, w_hi)
        lo = int(sites[dev].min()) - keep
        hi = int(sites[dev].max()) + 1 + keep
    lo, hi = max(lo, w_lo), min(hi, w_hi)
    if hi - lo < state.level + 1:
        return state
    start = lo - w_lo
    count = (hi - lo) - state.level
    if start == 0 and count == state.n_labels:
        return state
    return replace(
        state,
        first_site=lo,
        mats=state.mats[start : start + count].copy(),
        _cache={},
    )


def maybe_escalate(
    state: LatticeState,
    spec: HamiltonianSpec,
    q_lstar: float,
    lmax: int,
) -> tuple[LatticeState, bool]:
    """Raise the evolution level by r when local information at the current
    level exceeds the threshold (and the ceiling permits)."""
    if state.level >= lmax:
        return state, False
    top_info = local_information_values(state)[0]
    if float(top_info.max(initial=0.0)) <= q_lstar:
        return state, False
    r = spec.range
    grown = enlarge_window(state, r)
    if grown.n_labels < r + 1:
        return state, False
    new = recover_to(grown, r)
    return new, True
