"""Constrained removal of local information.

A subsystem state is shifted by a Hermitian χ that (i) leaves both one-site
marginals unchanged and (ii) generates no information current into the two
lower-level children. Within that affine subspace the von Neumann entropy is
maximized by a Newton step whose linear system is solved with a damped,
preconditioned conjugate-gradient iteration; the Hessian and its inverse act
as Hadamard multipliers in the eigenbasis of the state.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .hamiltonian import HamiltonianSpec
from .lattice import LatticeState
from .linalg import (
    EIG_FLOOR,
    dag,
    embed,
    entropy_from_eigs,
    hermitize,
    matrix_log,
    partial_trace,
)
from .recovery import projection_shift, sqrt_petz

# Constraint directions with squared norm below this are identically
# satisfied; projecting along them would divide by ~0.
CONSTRAINT_NORM_FLOOR = 1e-20

# Eigenvalue gaps below this use the analytic limit of the Hessian element.
DEGENERACY_TOL = 1e-12


def trace_projector(chi: np.ndarray, d: int = 2) -> np.ndarray:
    """Project onto matrices with vanishing left and right one-site traces."""
    dim = chi.shape[-1]
    low = dim // d
    out = chi.copy()
    r4 = out.reshape(d, low, d, low)
    t = np.einsum("iaib->ab", r4) / d
    for i in range(d):
        r4[i, :, i, :] -= t
    r4 = out.reshape(low, d, low, d)
    t = np.einsum("aibi->ab", r4) / d
    for i in range(d):
        r4[:, i, :, i] -= t
    return out


def entropy_gradient(rho: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    """∇S = −ln ρ − 1 (eigenvalues clamped at the floor)."""
    return -matrix_log(rho, floor) - np.eye(rho.shape[-1])


def hessian_elements(eigs: np.ndarray) -> np.ndarray:
    """Matrix h with h_ij = −(ln κ_i − ln κ_j)/(κ_i − κ_j).

    This is the divided-difference (Loewner) matrix of −ln at the clamped
    eigenvalues; the degenerate limit is −1/κ. All entries are strictly
    negative for κ > 0.
    """
    k = eigs
    diff = k[:, None] - k[None, :]
    near = np.abs(diff) < DEGENERACY_TOL
    safe = np.where(near, 1.0, diff)
    h = -(np.log(k)[:, None] - np.log(k)[None, :]) / safe
    lim = -2.0 / (k[:, None] + k[None, :])
    return np.where(near, lim, h)


@dataclass
class ConstraintContext:
    """Frozen data of one site's constrained Newton problem.

    f and g span the current constraints (g already orthogonalized against
    f); eigen data and h describe the entropy Hessian at the current iterate.
    """

    f: np.ndarray | None
    g: np.ndarray | None
    gradient: np.ndarray
    eigenvalues: np.ndarray
    basis: np.ndarray
    h: np.ndarray
    d: int = 2

    def refresh_curvature(self, rho: np.ndarray, floor: float = EIG_FLOOR) -> "ConstraintContext":
        w, u = np.linalg.eigh(hermitize(rho))
        w = np.maximum(w, floor)
        grad = -hermitize((u * np.log(w)[None, :]) @ dag(u)) - np.eye(rho.shape[-1])
        return replace(self, gradient=grad, eigenvalues=w, basis=u, h=hessian_elements(w))


def current_constraint_operators(
    rho: np.ndarray, spec: HamiltonianSpec, first_site: int, level: int
) -> tuple[np.ndarray | None, np.ndarray | None]:
    """Trace-free constraint operators f (left current) and g (right current).

    f represents J into the right child, g into the left child; both are
    built from the child entropy gradients, projected trace-free, and g is
    orthogonalized against f. Near-degenerate directions (e.g. children at
    infinite temperature near window edges) come back as None.
    """
    d, r = spec.d, spec.range
    if level < r:
        return None, None
    h_own = spec.subsystem_hamiltonian(first_site, level)

    child_r = partial_trace(rho, r, "left", d)
    ns_r = entropy_gradient(child_r)
    dh = h_own - embed(spec.subsystem_hamiltonian(first_site + r, level - r), r, 0, d)
    f_raw = -1j * _commutator(embed(ns_r, r, 0, d), dh)
    f = trace_projector(hermitize(f_raw), d)
    if _inner(f, f) < CONSTRAINT_NORM_FLOOR:
        f = None

    child_l = partial_trace(rho, r, "right", d)
    ns_l = entropy_gradient(child_l)
    dh = h_own - embed(spec.subsystem_hamiltonian(first_site, level - r), 0, r, d)
    g_raw = -1j * _commutator(embed(ns_l, 0, r, d), dh)
    g = trace_projector(hermitize(g_raw), d)
    if f is not None:
        g = g - (_inner(f, g) / _inner(f, f)) * f
    if _inner(g, g) < CONSTRAINT_NORM_FLOOR:
        g = None
    return f, g


def build_context(
    rho: np.ndarray, spec: HamiltonianSpec, first_site: int, level: int, floor: float = EIG_FLOOR
) -> ConstraintContext:
    f, g = current_constraint_operators(rho, spec, first_site, level)
    ctx = ConstraintContext(
        f=f, g=g, gradient=np.empty(0), eigenvalues=np.empty(0), basis=np.empty(0),
        h=np.empty(0), d=spec.d,
    )
    return ctx.refresh_curvature(rho, floor)


def total_projector(chi: np.ndarray, ctx: ConstraintContext) -> np.ndarray:
    """Orthogonal projector onto the constrained subspace (trace-free both
    sides, zero current along f and g)."""
    out = trace_projector(chi, ctx.d)
    if ctx.f is not None:
        out = out - (_inner(ctx.f, out) / _inner(ctx.f, ctx.f)) * ctx.f
    if ctx.g is not None:
        out = out - (_inner(ctx.g, out) / _inner(ctx.g, ctx.g)) * ctx.g
    return out


def hessian_apply(ctx: ConstraintContext, xi: np.ndarray) -> np.ndarray:
    """Entropy Hessian at ρ applied to ξ: U (h ⋆ (U† ξ U)) U†."""
    u = ctx.basis
    return u @ (ctx.h * (dag(u) @ xi @ u)) @ dag(u)


def hessian_inverse_apply(ctx: ConstraintContext, xi: np.ndarray) -> np.ndarray:
    u = ctx.basis
    return u @ ((dag(u) @ xi @ u) / ctx.h) @ dag(u)


def _commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def _inner(a: np.ndarray, b: np.ndarray) -> float:
    """Real trace inner product Re Tr(a† b)."""
    return float(np.vdot(a, b).real)


@dataclass
class MinimizeResult:
    rho: np.ndarray
    info_removed: float
    residual: float
    grad_norm: float
    pcg_iterations: int
    converged: bool
    used_dual_rescue: bool = False


_MARGINAL_BASIS_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _marginal_constraint_basis(dim: int, d: int) -> np.ndarray:
    """Orthonormal Hermitian basis of span{1_d ⊗ X} + span{Y ⊗ 1_d}.

    Fixing the expectations of these operators pins both one-site-traced
    marginals of a state.
    """
    key = (dim, d)
    if key in _MARGINAL_BASIS_CACHE:
        return _MARGINAL_BASIS_CACHE[key]
    low = dim // d
    ops = []
    for i in range(low):
        for j in range(i, low):
            base = np.zeros((low, low), dtype=complex)
            if i == j:
                base[i, i] = 1.0
                variants = [base]
            else:
                sym = base.copy()
                sym[i, j] = sym[j, i] = 1 / np.sqrt(2)
                asym = base.copy()
                asym[i, j] = 1j / np.sqrt(2)
                asym[j, i] = -1j / np.sqrt(2)
                variants = [sym, asym]
            for v in variants:
                ops.append(np.kron(np.eye(d) / np.sqrt(d), v))
                ops.append(np.kron(v, np.eye(d) / np.sqrt(d)))
    # Orthonormalize the overcomplete set (left and right spans overlap) in
    # the real vector space of Hermitian matrices, so combinations stay
    # Hermitian.
    vecs = np.array([o.reshape(-1) for o in ops])
    real_rep = np.hstack([vecs.real, vecs.imag])
    _, s, vt = np.linalg.svd(real_rep, full_matrices=False)
    keep = vt[s > 1e-10]
    basis = (keep[:, : dim * dim] + 1j * keep[:, dim * dim :]).reshape(-1, dim, dim)
    _MARGINAL_BASIS_CACHE[key] = basis
    return basis


def _dual_maxent(
    rho: np.ndarray,
    ctx: ConstraintContext,
    gtol: float = 1e-11,
    max_iter: int = 80,
) -> np.ndarray | None:
    """Globally convergent solve of the constrained entropy maximum.

    The optimum has Gibbs form exp(Σ λ_i B_i)/Z over the constraint span;
    Newton iterations on the dual potential ln Z − λ·c are unconstrained and
    positivity is automatic. Returns None if the dual does not converge.
    """
    dim = rho.shape[-1]
    basis = [b for b in _marginal_constraint_basis(dim, ctx.d)]
    for extra in (ctx.f, ctx.g):
        if extra is None:
            continue
        v = extra.copy()
        for b in basis:
            v = v - _inner(b, v) * b
        nv = np.linalg.norm(v)
        if nv > 1e-10:
            basis.append(v / nv)
    bs = np.array(basis)
    c = np.einsum("aij,ji->a", bs, rho).real

    lam = np.zeros(len(bs))
    for _ in range(max_iter):
        k = np.tensordot(lam, bs, axes=(0, 0))
        w, u = np.linalg.eigh(hermitize(k))
        lnz = w.max() + np.log(np.sum(np.exp(w - w.max())))
        p = np.exp(w - lnz)
        bt = np.matmul(u.conj().T, np.matmul(bs, u))
        grad = np.einsum("xaa,a->x", bt, p).real - c
        gn = float(np.abs(grad).max())
        if gn <= gtol:
            break
        diff = w[:, None] - w[None, :]
        near = np.abs(diff) < 1e-12
        phi = np.where(near, p[:, None], (p[:, None] - p[None, :]) / np.where(near, 1.0, diff))
        hess = np.einsum("xab,ab,yba->xy", bt, phi, bt, optimize=True).real
        hess -= np.outer(grad + c, grad + c)
        try:
            step = np.linalg.solve(hess + 1e-13 * np.eye(len(bs)), -grad)
        except np.linalg.LinAlgError:
            return None
        # Backtracking on the dual potential (convex).
        val = lnz - lam @ c
        t = 1.0
        for _ in range(40):
            lam_new = lam + t * step
            k2 = np.tensordot(lam_new, bs, axes=(0, 0))
            w2 = np.linalg.eigvalsh(hermitize(k2))
            lnz2 = w2.max() + np.log(np.sum(np.exp(w2 - w2.max())))
            if lnz2 - lam_new @ c <= val + 1e-12:
                lam = lam_new
                break
            t *= 0.5
        else:
            return None
    else:
        return None
    k = np.tensordot(lam, bs, axes=(0, 0))
    w, u = np.linalg.eigh(hermitize(k))
    lnz = w.max() + np.log(np.sum(np.exp(w - w.max())))
    return hermitize((u * np.exp(w - lnz)[None, :]) @ dag(u))


def _pcg_solve(
    ctx: ConstraintContext,
    b: np.ndarray,
    x0: np.ndarray,
    tol: float,
    damping: float,
    max_iter: int,
) -> tuple[np.ndarray, float, int]:
    """Damped PCG for (−P ℋ P) x = b on the constrained subspace.

    The preconditioner is −P ℋ⁻¹ P (elementwise-inverse Hadamard factors).
    Each update is scaled by the damping factor; the residual is tracked
    consistently.
    """

    # Inputs live in the constrained subspace throughout, so only the output
    # of each superoperator needs re-projection.
    def a_op(v):
        return -total_projector(hessian_apply(ctx, v), ctx)

    def m_op(v):
        return -total_projector(hessian_inverse_apply(ctx, v), ctx)

    x = total_projector(x0, ctx)
    r = b - a_op(x)
    z = m_op(r)
    p = z
    rz = _inner(r, z)
    res = float(np.linalg.norm(r))
    it = 0
    while res > tol and it < max_iter:
        ap = a_op(p)
        pap = _inner(p, ap)
        if pap <= 0:
            break
        alpha = damping * (rz / pap)
        x = x + alpha * p
        r = r - alpha * ap
        res = float(np.linalg.norm(r))
        z = m_op(r)
        rz_new = _inner(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
    return x, res, it


def _warm_start(rho: np.ndarray, d: int) -> np.ndarray:
    """Projected recovery of ρ from its own children, minus ρ.

    This is the paper-prescribed initial shift: the recovered state has
    near-minimal local information while sharing all child marginals.
    """
    child_l = partial_trace(rho, 1, "right", d)
    child_r = partial_trace(rho, 1, "left", d)
    ov = partial_trace(child_l, 1, "left", d)
    tilde = 0.5 * (
        sqrt_petz(child_l, child_r, ov, "left", d)
        + sqrt_petz(child_r, child_l, ov, "right", d)
    )
    rec = tilde + projection_shift(tilde, child_l, child_r, ov, d)
    return hermitize(rec) - rho


def minimize_site(
    rho: np.ndarray,
    spec: HamiltonianSpec,
    first_site: int,
    level: int,
    w_tol: float = 1e-5,
    damping: float = 0.9,
    max_pcg: int = 500,
    max_newton: int = 40,
    floor: float = EIG_FLOOR,
) -> MinimizeResult:
    """Maximize the entropy of one subsystem state under the four constraints.

    Newton steps (each an inner PCG solve) repeat until the projected
    gradient norm is within 10·w_tol; every step is backtracked if it would
    leave the density-matrix cone or raise the information.
    """
    dim = rho.shape[-1]
    ctx = build_context(rho, spec, first_site, level, floor)
    eigs0 = np.linalg.eigvalsh(hermitize(rho))
    info0 = np.log(dim) - entropy_from_eigs(eigs0)

    def backtrack(cur, info_cur, step):
        # Accept only strictly interior candidates that lower the information;
        # iterates touching the cone boundary wreck the clamped-log model.
        scale = 1.0
        for _ in range(30):
            cand = hermitize(cur + scale * step)
            eigs = np.linalg.eigvalsh(cand)
            if eigs.min() < 1e-12:
                scale *= 0.5
                continue
            info_new = np.log(dim) - entropy_from_eigs(eigs)
            if info_new > info_cur + 1e-13:
                scale *= 0.5
                continue
            return cand, info_new, True
        return cur, info_cur, False

    cur = rho
    info_cur = info0
    chi0 = total_projector(_warm_start(rho, spec.d), ctx)
    residual = 0.0
    total_pcg = 0
    grad_norm = np.inf
    converged = False
    best_grad = np.inf
    stall = 0
    for newton in range(max_newton):
        grad_p = total_projector(ctx.gradient, ctx)
        grad_norm = float(np.linalg.norm(grad_p))
        if grad_norm <= 5.0 * w_tol:
            converged = True
            break
        # Hand stubborn instances to the dual rescue instead of burning
        # through PCG iterations near the cone boundary.
        if grad_norm > 0.7 * best_grad:
            stall += 1
            if stall >= 4:
                break
        else:
            stall = 0
        best_grad = min(best_grad, grad_norm)
        chi, residual, its = _pcg_solve(ctx, grad_p, chi0, w_tol, damping, max_pcg)
        total_pcg += its
        cur2, info2, ok = backtrack(cur, info_cur, total_projector(chi, ctx))
        if not ok:
            # Preconditioned-gradient fallback: an ascent direction for the
            # entropy whenever the projected gradient is nonzero.
            fallback = -total_projector(hessian_inverse_apply(ctx, grad_p), ctx)
            cur2, info2, ok = backtrack(cur, info_cur, fallback)
        if not ok:
            break
        cur, info_cur = cur2, info2
        chi0 = np.zeros_like(rho)
        ctx = ctx.refresh_curvature(cur, floor)
    else:
        grad_p = total_projector(ctx.gradient, ctx)
        grad_norm = float(np.linalg.norm(grad_p))
        converged = grad_norm <= 10.0 * w_tol

    used_dual = False
    if not converged:
        # The damped primal iteration can crawl on ill-conditioned inputs;
        # the dual (Gibbs-form) solve is globally convergent. Its result is
        # re-projected so the constraints hold exactly, not just to dual
        # solver tolerance.
        cand = _dual_maxent(rho, ctx)
        if cand is not None:
            polished = hermitize(rho + total_projector(cand - rho, ctx))
            eigs = np.linalg.eigvalsh(polished)
            info_new = np.log(dim) - entropy_from_eigs(eigs)
            if eigs.min() >= -1e-10 and info_new <= info_cur + 1e-12:
                ctx = ctx.refresh_curvature(polished, floor)
                gp = total_projector(ctx.gradient, ctx)
                gn = float(np.linalg.norm(gp))
                if gn < grad_norm:
                    cur, info_cur, grad_norm = polished, info_new, gn
                    converged = grad_norm <= 10.0 * w_tol
                    used_dual = True

    return MinimizeResult(
        rho=cur,
        info_removed=float(info0 - info_cur),
        residual=residual,
        grad_norm=grad_norm,
        pcg_iterations=total_pcg,
        converged=converged,
        used_dual_rescue=used_dual,
    )


@dataclass
class MinimizationEvent:
    """Log record of one information-removal event."""

    time: float
    sites_minimized: int
    info_removed: float
    max_residual: float
    max_grad_norm: float
    all_converged: bool


def minimize_window(
    state: LatticeState,
    spec: HamiltonianSpec,
    w_tol: float = 1e-5,
    damping: float = 0.9,
    max_pcg: int = 500,
) -> tuple[LatticeState, MinimizationEvent]:
    """Minimize every label of a level-l_min state (order-independent)."""
    out = state.copy()
    removed = 0.0
    max_res = 0.0
    max_grad = 0.0
    ok = True
    for k in range(out.n_labels):
        res = minimize_site(
            out.mats[k], spec, out.first_site + k, out.level, w_tol, damping, max_pcg
        )
        out.mats[k] = res.rho
        removed += res.info_removed
        max_res = max(max_res, res.residual)
        max_grad = max(max_grad, res.grad_norm)
        ok = ok and res.converged
    out._cache = {}
    event = MinimizationEvent(
        time=state.time,
        sites_minimized=out.n_labels,
        info_removed=removed,
        max_residual=max_res,
        max_grad_norm=max_grad,
        all_converged=ok,
    )
    return out, event
