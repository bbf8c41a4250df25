"""Petz recovery maps on the subsystem lattice.

Level-(l+1) density matrices are rebuilt from overlapping level-l neighbors.
The production route is the square-root map (only the small factors are
diagonalized), picking the form whose outer factor carries less local
information, followed by a projection shift that restores the exact input
marginals. The twisted (exponential) map is kept for cross-checks.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .lattice import LatticeState, local_information_values
from .linalg import (
    EIG_FLOOR,
    dag,
    embed,
    entropy_from_eigs,
    hermitize,
    matrix_log,
    n_sites,
    partial_trace,
    trace_norm,
)

# |i_n - i_{n+1}| below this ties the two sqrt forms; they get averaged.
TIE_TOL = 1e-12


@dataclass
class RecoveryReport:
    """Diagnostics of one recovered label."""

    used_form: str  # twisted | sqrt_left | sqrt_right | averaged
    correction_norm: float
    mutual_info_in: float
    overlap_clamped: bool = False


def _embed_three(a: np.ndarray, b: np.ndarray, overlap: np.ndarray | None, d: int):
    """Embeddings of A (left block), B (right block) and their overlap into
    the union space; returns (total_sites, pad counts)."""
    sa, sb = n_sites(a.shape[-1], d), n_sites(b.shape[-1], d)
    sov = 0 if overlap is None else n_sites(overlap.shape[-1], d)
    total = sa + sb - sov
    return total, sa, sb, sov


def twisted_petz(
    rho_a: np.ndarray,
    rho_b: np.ndarray,
    rho_overlap: np.ndarray | None = None,
    d: int = 2,
) -> np.ndarray:
    """exp[ln ρ_A + ln ρ_B − ln ρ_{A∩B}], A the left block, B the right.

    Exact when the mutual information between A and B vanishes; Hermitian and
    renormalized to unit trace otherwise.
    """
    total, sa, sb, sov = _embed_three(rho_a, rho_b, rho_overlap, d)
    arg = embed(matrix_log(rho_a), 0, total - sa, d) + embed(matrix_log(rho_b), total - sb, 0, d)
    if rho_overlap is not None and sov:
        arg -= embed(matrix_log(rho_overlap), total - sb, total - sa, d)
    w, u = np.linalg.eigh(hermitize(arg))
    # Exponentiate at shifted eigenvalues for stability, renormalize after.
    ew = np.exp(w - w.max())
    out = hermitize((u * ew[None, :]) @ dag(u))
    return out / np.trace(out).real


def sqrt_petz(
    rho_outer: np.ndarray,
    rho_inner: np.ndarray,
    rho_overlap: np.ndarray | None = None,
    outer_side: str = "left",
    d: int = 2,
    floor: float = EIG_FLOOR,
) -> np.ndarray:
    """ρ_outer^{1/2} ρ_ov^{-1/2} ρ_inner ρ_ov^{-1/2} ρ_outer^{1/2} with the
    operators embedded into the union space.

    ``outer_side`` says whether the outer factor is the left or the right
    block. Agrees with twisted_petz when the pair's mutual information
    vanishes, without diagonalizing anything at the joint dimension.
    """
    if outer_side == "left":
        a, b = rho_outer, rho_inner
    elif outer_side == "right":
        a, b = rho_inner, rho_outer
    else:
        raise ValueError("outer_side must be 'left' or 'right'")
    total, sa, sb, sov = _embed_three(a, b, rho_overlap, d)

    def _sqrt(m):
        w, u = np.linalg.eigh(hermitize(m))
        return hermitize((u * np.sqrt(np.clip(w, 0.0, None))[..., None, :]) @ dag(u))

    def _inv_sqrt(m):
        w, u = np.linalg.eigh(hermitize(m))
        return hermitize((u * (1.0 / np.sqrt(np.maximum(w, floor)))[..., None, :]) @ dag(u))

    s_out = _sqrt(rho_outer)
    if outer_side == "left":
        e_out = embed(s_out, 0, total - sa, d)
        e_in = embed(rho_inner, total - sb, 0, d)
    else:
        e_out = embed(s_out, total - sb, 0, d)
        e_in = embed(rho_inner, 0, total - sa, d)
    if rho_overlap is not None and sov:
        e_ov = embed(_inv_sqrt(rho_overlap), total - sb, total - sa, d)
        mid = e_ov @ e_in @ e_ov
    else:
        mid = e_in
    return hermitize(e_out @ mid @ e_out)


def projection_shift(
    rho_tilde: np.ndarray,
    rho_left: np.ndarray,
    rho_right: np.ndarray,
    rho_overlap: np.ndarray,
    d: int = 2,
) -> np.ndarray:
    """Shift restoring the exact one-site marginals of a recovered state.

    Tr_R¹(ρ̃+shift) = ρ_left and Tr_L¹(ρ̃+shift) = ρ_right hold exactly for
    neighbor-compatible inputs; applying it to an already-compatible ρ̃ gives
    zero.
    """
    eye = np.eye(d) / d
    shift = np.kron(rho_left - partial_trace(rho_tilde, 1, "right", d), eye)
    shift += np.kron(eye, rho_right - partial_trace(rho_tilde, 1, "left", d))
    inner = rho_overlap - partial_trace(partial_trace(rho_tilde, 1, "left", d), 1, "right", d)
    shift -= np.kron(np.kron(eye, inner), eye)
    return shift


def _pair_recover(
    rho_left: np.ndarray,
    rho_right: np.ndarray,
    i_left: float,
    i_right: float,
    d: int,
    tie_tol: float = TIE_TOL,
    floor: float = EIG_FLOOR,
) -> tuple[np.ndarray, RecoveryReport]:
    """Projected sqrt recovery of one neighboring pair (reference path)."""
    overlap = 0.5 * (
        partial_trace(rho_left, 1, "left", d) + partial_trace(rho_right, 1, "right", d)
    )
    clamped = bool(np.linalg.eigvalsh(hermitize(overlap)).min() < floor)
    if i_left < i_right - tie_tol:
        tilde = sqrt_petz(rho_left, rho_right, overlap, "left", d, floor)
        form = "sqrt_left"
    elif i_right < i_left - tie_tol:
        tilde = sqrt_petz(rho_right, rho_left, overlap, "right", d, floor)
        form = "sqrt_right"
    else:
        tilde = 0.5 * (
            sqrt_petz(rho_left, rho_right, overlap, "left", d, floor)
            + sqrt_petz(rho_right, rho_left, overlap, "right", d, floor)
        )
        form = "averaged"
    shift = projection_shift(tilde, rho_left, rho_right, overlap, d)
    out = hermitize(tilde + shift)
    info_in = (
        np.log(out.shape[-1])
        - entropy_from_eigs(np.linalg.eigvalsh(out))
        - (np.log(rho_left.shape[-1]) - entropy_from_eigs(np.linalg.eigvalsh(hermitize(rho_left))))
        - (np.log(rho_right.shape[-1]) - entropy_from_eigs(np.linalg.eigvalsh(hermitize(rho_right))))
        + (np.log(overlap.shape[-1]) - entropy_from_eigs(np.linalg.eigvalsh(hermitize(overlap))))
    )
    report = RecoveryReport(form, trace_norm(shift), float(info_in), clamped)
    return out, report


def recover_stack(
    mats: np.ndarray,
    d: int = 2,
    tie_tol: float = TIE_TOL,
    floor: float = EIG_FLOOR,
) -> np.ndarray:
    """Vectorized projected sqrt recovery: (N, Dh, Dh) → (N-1, 2Dh, 2Dh).

    Works on the stacked level-l states of a window and produces the level
    l+1 stack. This is the hot path of the evolution loop; it matches
    _pair_recover label by label.
    """
    n, dh = mats.shape[0], mats.shape[-1]
    if n < 2:
        raise ValueError("recovery needs at least two labels")
    dq = dh // d
    big = dh * d

    w_p, u_p = np.linalg.eigh(hermitize(mats))
    # Children over the window; inner entries are the pair overlaps.
    child = np.empty((n + 1, dq, dq), dtype=complex)
    tr_r = partial_trace(mats, 1, "right", d)
    tr_l = partial_trace(mats, 1, "left", d)
    child[0] = tr_r[0]
    child[-1] = tr_l[-1]
    child[1:-1] = 0.5 * (tr_r[1:] + tr_l[:-1])
    w_c, u_c = np.linalg.eigh(child)

    # Local information of the parents decides which sqrt form is used.
    i_p = np.log(dh) - entropy_from_eigs(w_p)
    i_c = np.log(dq) - entropy_from_eigs(w_c)
    i_par = i_p - i_c[:-1] - i_c[1:]
    if dq > 1:
        grand = np.empty((n + 2, dq // d, dq // d), dtype=complex)
        grand[:-1] = partial_trace(child, 1, "right", d)
        grand[-1] = partial_trace(child[-1], 1, "left", d)
        i_g = np.log(dq // d) - entropy_from_eigs(np.linalg.eigvalsh(grand))
        i_par = i_par + i_g[1:-1]

    sq = np.matmul(u_p * np.sqrt(np.clip(w_p, 0.0, None))[:, None, :], dag(u_p))
    inv = np.matmul(u_c * (1.0 / np.sqrt(np.maximum(w_c, floor)))[:, None, :], dag(u_c))

    i_l, i_r = i_par[:-1], i_par[1:]
    pick_l = i_l < i_r - tie_tol
    pick_r = i_r < i_l - tie_tol
    tie = ~(pick_l | pick_r)

    tilde = np.zeros((n - 1, big, big), dtype=complex)
    for idx, form in ((np.where(pick_l | tie)[0], "left"), (np.where(pick_r | tie)[0], "right")):
        if idx.size == 0:
            continue
        part = _sqrt_form_batch(mats, sq, inv, idx, form, d)
        weights = np.where(tie[idx], 0.5, 1.0)
        tilde[idx] += weights[:, None, None] * part

    # Projection: restore the exact pair marginals (kron-with-identity terms
    # written as strided adds).
    tr_r_t = partial_trace(tilde, 1, "right", d)
    tr_l_t = partial_trace(tilde, 1, "left", d)
    inner = (child[1:-1] - partial_trace(tr_l_t, 1, "right", d)) / (d * d)
    left_fix = (mats[:-1] - tr_r_t) / d
    right_fix = (mats[1:] - tr_l_t) / d
    out = tilde
    v6 = out.reshape(n - 1, d, dq, d, d, dq, d)
    lf = left_fix.reshape(n - 1, d, dq, d, dq)
    rf = right_fix.reshape(n - 1, dq, d, dq, d)
    inn = inner.reshape(n - 1, dq, dq)
    for i in range(d):
        v6[:, :, :, i, :, :, i] += lf
        v6[:, i, :, :, i, :, :] += rf
        for j in range(d):
            v6[:, i, :, j, i, :, j] -= inn
    return hermitize(out)


def recover_level(
    state: LatticeState,
    with_reports: bool = False,
    tie_tol: float = TIE_TOL,
    floor: float = EIG_FLOOR,
):
    """Projected recovery of the whole window: level l → level l+1.

    Each new state preserves its two parent marginals exactly, so neighbor
    compatibility holds at the new level. Positivity is not guaranteed by the
    projection; violations surface later through the density-matrix checks.
    """
    if state.n_labels < 2:
        raise ValueError("window too small to recover the next level")
    new = replace(
        state,
        level=state.level + 1,
        mats=recover_stack(state.mats, state.d, tie_tol, floor),
        _cache={},
    )
    if not with_reports:
        return new
    i_vals = local_information_values(state)[0]
    reports = []
    for k in range(state.n_labels - 1):
        _, rep = _pair_recover(
            state.mats[k], state.mats[k + 1], i_vals[k], i_vals[k + 1], state.d, tie_tol, floor
        )
        reports.append(rep)
    return new, reports


def recover_to(state: LatticeState, steps: int) -> LatticeState:
    """Iterate the projected recovery r times (level l → l+r).

    Always realized by composing single-level projected recoveries, which
    keeps every intermediate marginal pinned.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    out = state
    for _ in range(steps):
        out = recover_level(out)
    return out


_REVERSAL_CACHE: dict[tuple[int, int], np.ndarray] = {}


def site_reversal_permutation(dim: int, d: int = 2) -> np.ndarray:
    """Index permutation implementing the reversal of the tensor factors."""
    key = (dim, d)
    if key not in _REVERSAL_CACHE:
        s = n_sites(dim, d)
        idx = np.arange(dim)
        out = np.zeros(dim, dtype=np.intp)
        for _ in range(s):
            out = out * d + idx % d
            idx //= d
        _REVERSAL_CACHE[key] = out
    return _REVERSAL_CACHE[key]


def _mirror(stack: np.ndarray, d: int) -> np.ndarray:
    """Conjugate by the site-reversal permutation (a tensor-leg transpose)."""
    s = n_sites(stack.shape[-1], d)
    lead = stack.ndim - 2
    t = stack.reshape(stack.shape[:-2] + (d,) * (2 * s))
    axes = (
        tuple(range(lead))
        + tuple(lead + s - 1 - i for i in range(s))
        + tuple(lead + 2 * s - 1 - i for i in range(s))
    )
    return np.ascontiguousarray(t.transpose(axes)).reshape(stack.shape)


def _sqrt_form_left(
    outer_sq: np.ndarray, inner: np.ndarray, ov_inv: np.ndarray, d: int
) -> np.ndarray:
    """sqrt map with the left state outside: S (o ρ_in o) S with embeddings.

    All contractions are batched matrix products; intermediate transposes
    re-group tensor legs so each product is a plain GEMM.
    """
    g, dh = inner.shape[0], inner.shape[-1]
    dq = dh // d
    big = dh * d
    # K = (o ⊗ 1) ρ_inner (o ⊗ 1), overlap on the inner state's left block.
    t1 = np.matmul(ov_inv, inner.reshape(g, dq, d * dh)).reshape(g, dh, dq, d)
    t1 = np.ascontiguousarray(t1.transpose(0, 1, 3, 2)).reshape(g, dh * d, dq)
    k_mid = np.matmul(t1, ov_inv).reshape(g, dh, d, dq)
    k_mid = np.ascontiguousarray(k_mid.transpose(0, 1, 3, 2)).reshape(g, dh, dh)
    # Sandwich with S ⊗ 1 on sites 0..l and 1 ⊗ K on sites 1..l+1.
    p1 = np.matmul(outer_sq.reshape(g, dh * d, dq), k_mid.reshape(g, dq, d * dh))
    p1 = p1.reshape(g, dh, d, d, dq, d)
    p1 = np.ascontiguousarray(p1.transpose(0, 1, 3, 5, 2, 4)).reshape(g, dh * d * d, dh)
    p2 = np.matmul(p1, outer_sq).reshape(g, dh, d, d, d, dq)
    p2 = np.ascontiguousarray(p2.transpose(0, 1, 2, 4, 5, 3))
    return p2.reshape(g, big, big)


def _sqrt_form_batch(
    mats: np.ndarray,
    sq: np.ndarray,
    inv: np.ndarray,
    idx: np.ndarray,
    form: str,
    d: int,
) -> np.ndarray:
    """One sqrt-map branch for the selected pair indices.

    form='left': outer = ρ_k, inner = ρ_{k+1}; form='right' is realized as
    the site-reversal conjugate of the left form, which is exact and keeps a
    single optimized kernel.
    """
    if form == "left":
        return _sqrt_form_left(sq[idx], mats[idx + 1], inv[idx + 1], d)
    out = _sqrt_form_left(_mirror(sq[idx + 1], d), _mirror(mats[idx], d), _mirror(inv[idx + 1], d), d)
    return _mirror(out, d)
