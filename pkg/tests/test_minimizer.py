import numpy as np
import pytest

from lite.hamiltonian import mixed_field_ising
from lite.lattice import von_neumann_information
from lite.linalg import hermitize, partial_trace, random_density_matrix, random_hermitian, vn_entropy
from lite.minimizer import (
    ConstraintContext,
    build_context,
    current_constraint_operators,
    entropy_gradient,
    hessian_apply,
    hessian_elements,
    hessian_inverse_apply,
    minimize_site,
    total_projector,
    trace_projector,
)

RNG = np.random.default_rng(41)
SPEC = mixed_field_ising(1.0, 1.4, 0.9045)


def traceless_hermitian(dim, rng):
    x = random_hermitian(dim, rng)
    return x - np.trace(x) / dim * np.eye(dim)


def current_of(chi, rho, spec, first_site, level, side):
    """Information current generated by a shift chi, evaluated directly from
    the definition (child entropy gradient against the boundary coupling)."""
    d, r = spec.d, spec.range
    from lite.linalg import embed

    h_own = spec.subsystem_hamiltonian(first_site, level)
    if side == "left":
        child = partial_trace(rho, r, "left", d)
        ns = embed(entropy_gradient(child), r, 0, d)
        dh = h_own - embed(spec.subsystem_hamiltonian(first_site + r, level - r), r, 0, d)
    else:
        child = partial_trace(rho, r, "right", d)
        ns = embed(entropy_gradient(child), 0, r, d)
        dh = h_own - embed(spec.subsystem_hamiltonian(first_site, level - r), 0, r, d)
    return float(np.real(1j * np.trace((ns @ dh - dh @ ns) @ chi)))


def test_trace_projector_idempotent_and_annihilates():
    chi = random_hermitian(16, RNG)
    p = trace_projector(chi)
    assert np.max(np.abs(partial_trace(p, 1, "left"))) < 1e-12
    assert np.max(np.abs(partial_trace(p, 1, "right"))) < 1e-12
    assert np.max(np.abs(trace_projector(p) - p)) < 1e-12
    # A right-marginal product part is annihilated.
    m = random_hermitian(8, RNG)
    assert np.max(np.abs(partial_trace(trace_projector(np.kron(m, np.eye(2) / 2)), 1, "right"))) < 1e-12


def test_total_projector_conditions():
    rho = random_density_matrix(16, RNG)
    ctx = build_context(rho, SPEC, 0, 3)
    chi = random_hermitian(16, RNG)
    p = total_projector(chi, ctx)
    assert np.max(np.abs(partial_trace(p, 1, "left"))) < 1e-10
    assert np.max(np.abs(partial_trace(p, 1, "right"))) < 1e-10
    assert abs(current_of(p, rho, SPEC, 0, 3, "left")) < 1e-10
    assert abs(current_of(p, rho, SPEC, 0, 3, "right")) < 1e-10
    # Idempotent and self-adjoint under the trace inner product.
    assert np.max(np.abs(total_projector(p, ctx) - p)) < 1e-12
    chi2 = random_hermitian(16, RNG)
    lhs = np.trace(total_projector(chi, ctx) @ chi2)
    rhs = np.trace(chi @ total_projector(chi2, ctx))
    assert abs(lhs - rhs) < 1e-10
    # Projecting the constraint directions themselves gives zero components.
    if ctx.g is not None:
        assert np.max(np.abs(total_projector(ctx.g, ctx))) < 1e-10


def test_entropy_gradient_values_and_finite_difference():
    rho = np.diag([0.75, 0.25]).astype(complex)
    g = entropy_gradient(rho)
    assert np.allclose(np.diag(g).real, [-np.log(0.75) - 1, -np.log(0.25) - 1])
    rho = random_density_matrix(8, RNG)
    delta = traceless_hermitian(8, RNG)
    delta /= np.linalg.norm(delta)
    eps = 1e-6
    fd = (vn_entropy(rho + eps * delta) - vn_entropy(rho - eps * delta)) / (2 * eps)
    grad = float(np.real(np.trace(entropy_gradient(rho) @ delta)))
    assert abs(fd - grad) < 1e-5


def test_hessian_elements_negative_and_diagonal_limit():
    w = np.array([0.5, 0.5 - 1e-14, 0.3, 1e-10])
    h = hessian_elements(w)
    assert np.all(h < 0)
    assert abs(h[0, 0] + 1 / 0.5) < 1e-10
    assert abs(h[0, 1] + 1 / 0.5) < 1e-3  # degenerate pair hits the limit


def test_hessian_quadratic_form_matches_finite_difference():
    # |S(rho+eps xi) - S - eps Tr(grad xi) - eps^2/2 Tr(xi H xi)| = O(eps^3)
    rng = np.random.default_rng(5)
    errs = []
    for eps in (1e-2, 5e-3, 2.5e-3):
        rho = random_density_matrix(8, rng)
        xi = traceless_hermitian(8, rng)
        xi /= np.linalg.norm(xi)
        ctx = build_context(rho, SPEC, 0, 2)
        s0 = vn_entropy(rho)
        lin = float(np.real(np.trace(ctx.gradient @ xi)))
        quad = float(np.real(np.trace(xi @ hessian_apply(ctx, xi))))
        model = s0 + eps * lin + 0.5 * eps**2 * quad
        errs.append(abs(vn_entropy(rho + eps * xi) - model))
    # Cubic scaling: one quarter the step gives ~1/64 the error.
    assert errs[2] < errs[0] / 30


def test_hessian_second_difference():
    rho = random_density_matrix(8, RNG)
    xi = traceless_hermitian(8, RNG)
    xi /= np.linalg.norm(xi)
    ctx = build_context(rho, SPEC, 0, 2)
    eps = 1e-4
    sdd = (vn_entropy(rho + eps * xi) - 2 * vn_entropy(rho) + vn_entropy(rho - eps * xi)) / eps**2
    quad = float(np.real(np.trace(xi @ hessian_apply(ctx, xi))))
    assert abs(sdd - quad) / abs(quad) < 1e-4


def test_hessian_inverse_roundtrip_and_diagonal_action():
    rho = random_density_matrix(8, RNG)
    ctx = build_context(rho, SPEC, 0, 2)
    xi = random_hermitian(8, RNG)
    assert np.max(np.abs(hessian_inverse_apply(ctx, hessian_apply(ctx, xi)) - xi)) < 1e-10
    # Diagonal rho, commuting xi: pure diagonal scaling by -1/kappa.
    w = np.array([0.4, 0.3, 0.2, 0.1])
    ctx2 = ConstraintContext(
        f=None, g=None, gradient=np.empty(0), eigenvalues=w,
        basis=np.eye(4, dtype=complex), h=hessian_elements(w),
    )
    xi = np.diag([1.0, -1.0, 2.0, -2.0]).astype(complex)
    out = hessian_apply(ctx2, xi)
    assert np.allclose(np.diag(out).real, np.diag(xi).real * (-1 / w))


def test_minimize_site_identity_is_fixed_point():
    rho = np.eye(16, dtype=complex) / 16
    res = minimize_site(rho, SPEC, 0, 3)
    assert np.max(np.abs(res.rho - rho)) < 1e-10
    assert res.info_removed < 1e-12


def test_minimize_site_product_thermal_unchanged():
    h1 = 1.4 * np.array([[0, 1], [1, 0]]) + 0.9045 * np.diag([1, -1])
    w, u = np.linalg.eigh(h1)
    z = np.exp(-0.4 * w)
    site = (u * (z / z.sum())[None, :]) @ u.conj().T
    rho = site
    for _ in range(3):
        rho = np.kron(rho, site)
    res = minimize_site(rho.astype(complex), SPEC, 0, 3)
    assert np.max(np.abs(res.rho - rho)) < 1e-8


def test_minimize_site_constraints_and_optimality():
    # Random 4-site states: marginals pinned, currents pinned, information
    # never up, projected gradient small at the output.
    for seed in range(25):
        rng = np.random.default_rng(1000 + seed)
        rho = random_density_matrix(16, rng)
        res = minimize_site(rho, SPEC, 0, 3)
        out = res.rho
        assert np.max(np.abs(partial_trace(out, 1, "left") - partial_trace(rho, 1, "left"))) < 1e-10
        assert np.max(np.abs(partial_trace(out, 1, "right") - partial_trace(rho, 1, "right"))) < 1e-10
        for side in ("left", "right"):
            j_before = current_of(np.zeros_like(rho), rho, SPEC, 0, 3, side)
            j_shift = current_of(out - rho, rho, SPEC, 0, 3, side)
            assert abs(j_shift - j_before) < 1e-9
        assert von_neumann_information(out) <= von_neumann_information(rho) + 1e-10
        ctx = build_context(out, SPEC, 0, 3)
        ctx = ConstraintContext(
            f=ctx.f, g=ctx.g, gradient=ctx.gradient,
            eigenvalues=ctx.eigenvalues, basis=ctx.basis, h=ctx.h,
        )
        assert np.linalg.norm(total_projector(ctx.gradient, ctx)) <= 10 * 1e-5
        assert np.linalg.eigvalsh(out).min() >= -1e-10


def test_minimize_site_matches_bruteforce_kernel_optimum():
    # Dense parametrization of the constraint kernel, optimized generically
    # (L-BFGS with an exact gradient; infeasible iterates are penalized, not
    # silently repaired).
    from scipy.optimize import minimize as scipy_minimize

    rng = np.random.default_rng(77)
    for _ in range(4):
        rho = random_density_matrix(16, rng)
        res = minimize_site(rho, SPEC, 0, 3)

        basis = _constraint_kernel_basis(rho)

        def info_and_grad(c):
            chi = np.tensordot(c, basis, axes=(0, 0))
            w, u = np.linalg.eigh(hermitize(rho + chi))
            neg = np.minimum(w, 0.0)
            pos = np.maximum(w, 1e-300)
            val = float(np.log(16) + np.sum(pos * np.log(pos)) + 1e4 * np.sum(-neg))
            lnp1 = np.where(w > 0, np.log(pos) + 1.0, -1e4)
            gmat = (u * lnp1[None, :]) @ u.conj().T
            grad = np.einsum("kij,ji->k", basis, gmat).real
            return val, grad

        opt = scipy_minimize(
            info_and_grad, np.zeros(len(basis)), jac=True, method="L-BFGS-B",
            options={"maxiter": 5000, "ftol": 1e-14, "gtol": 1e-10},
        )
        got = von_neumann_information(res.rho)
        assert got <= opt.fun + 1e-4
        # Both routes bracket the same optimum.
        assert abs(got - opt.fun) < 1e-4


def _constraint_kernel_basis(rho):
    """Orthonormal Hermitian basis of the constraint kernel at rho (4 sites)."""
    dim = 16
    herm_basis = []
    for i in range(dim):
        for j in range(i, dim):
            m = np.zeros((dim, dim), dtype=complex)
            if i == j:
                m[i, i] = 1.0
            else:
                m[i, j] = m[j, i] = 1 / np.sqrt(2)
            herm_basis.append(m)
            if i != j:
                m = np.zeros((dim, dim), dtype=complex)
                m[i, j] = 1j / np.sqrt(2)
                m[j, i] = -1j / np.sqrt(2)
                herm_basis.append(m)
    herm_basis = np.array(herm_basis)

    rows = []
    f, g = current_constraint_operators(rho, SPEC, 0, 3)
    raw_f, raw_g = _raw_current_ops(rho)
    for b in herm_basis:
        row = []
        row.extend(partial_trace(b, 1, "left").reshape(-1))
        row.extend(partial_trace(b, 1, "right").reshape(-1))
        row.append(np.trace(raw_f @ b))
        row.append(np.trace(raw_g @ b))
        rows.append(np.concatenate([np.real(row), np.imag(row)]))
    a = np.array(rows).T
    _, s, vt = np.linalg.svd(a, full_matrices=True)
    null_mask = np.zeros(vt.shape[0], dtype=bool)
    null_mask[: s.size] = s > 1e-10
    kernel = vt[~null_mask]
    return np.tensordot(kernel, herm_basis, axes=(1, 0))


def _raw_current_ops(rho):
    from lite.linalg import embed

    h_own = SPEC.subsystem_hamiltonian(0, 3)
    child_r = partial_trace(rho, 1, "left")
    dh_f = h_own - embed(SPEC.subsystem_hamiltonian(1, 2), 1, 0)
    ns = embed(entropy_gradient(child_r), 1, 0)
    f_raw = hermitize(-1j * (ns @ dh_f - dh_f @ ns))
    child_l = partial_trace(rho, 1, "right")
    dh_g = h_own - embed(SPEC.subsystem_hamiltonian(0, 2), 0, 1)
    ns = embed(entropy_gradient(child_l), 0, 1)
    g_raw = hermitize(-1j * (ns @ dh_g - dh_g @ ns))
    return f_raw, g_raw
