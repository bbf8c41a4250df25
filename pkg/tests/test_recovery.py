import numpy as np
import pytest

from lite.lattice import LatticeState, mutual_information
from lite.linalg import partial_trace, random_density_matrix, trace_norm
from lite.oracle import FullState, lattice_state_from_full
from lite.recovery import (
    _pair_recover,
    projection_shift,
    recover_level,
    recover_stack,
    recover_to,
    sqrt_petz,
    twisted_petz,
)

RNG = np.random.default_rng(31)


def markov_chain_state(da, db, rng):
    """3-block state A|B|C with vanishing i(AB;BC): B is a classical register
    correlating product factors on A and C."""
    dim_b = 2
    rho = 0.0
    p = rng.dirichlet(np.ones(dim_b))
    for k in range(dim_b):
        proj = np.zeros((dim_b, dim_b))
        proj[k, k] = 1.0
        rho = rho + p[k] * np.kron(
            np.kron(random_density_matrix(da, rng), proj), random_density_matrix(db, rng)
        )
    return rho


def random_pure(sites, rng):
    dim = 2**sites
    psi = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    psi /= np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def test_twisted_petz_product_no_overlap():
    rho_a = random_density_matrix(4, RNG)
    rho_b = random_density_matrix(2, RNG)
    out = twisted_petz(rho_a, rho_b)
    assert np.max(np.abs(out - np.kron(rho_a, rho_b))) < 1e-10


def test_twisted_petz_bell_marginals_give_maximally_mixed():
    eye2 = np.eye(2) / 2
    out = twisted_petz(eye2, eye2)
    assert np.max(np.abs(out - np.eye(4) / 4)) < 1e-12


def test_recovery_exact_on_markov_states():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        rho = markov_chain_state(2, 2, rng)
        rho_ab = partial_trace(rho, 1, "right")
        rho_bc = partial_trace(rho, 1, "left")
        rho_b = partial_trace(rho_ab, 1, "left")
        i = mutual_information(rho, rho_ab, rho_bc, rho_b)
        assert abs(i) < 1e-10
        tw = twisted_petz(rho_ab, rho_bc, rho_b)
        sq = sqrt_petz(rho_ab, rho_bc, rho_b, "left")
        assert trace_norm(tw - rho) < 1e-8
        assert trace_norm(sq - rho) < 1e-8
        assert trace_norm(sq - tw) < 1e-8


def test_error_bound_random_states():
    # Tr|rho − recovered| ≤ 2 sqrt(i(A;B)) on random 2- and 3-site states.
    for seed in range(60):
        rng = np.random.default_rng(100 + seed)
        sites = 2 if seed % 2 == 0 else 3
        rho = random_density_matrix(2**sites, rng)
        rho_a = partial_trace(rho, 1, "right")
        rho_b = partial_trace(rho, 1, "left")
        ov = partial_trace(rho_a, 1, "left") if sites == 3 else None
        i = mutual_information(rho, rho_a, rho_b, ov)
        out = twisted_petz(rho_a, rho_b, ov)
        assert trace_norm(rho - out) <= 2 * np.sqrt(max(i, 0.0)) + 1e-8


def test_sqrt_petz_agrees_with_twisted_at_zero_info():
    rho_a = random_density_matrix(2, RNG)
    rho_b = random_density_matrix(4, RNG)
    tw = twisted_petz(rho_a, rho_b)
    sq = sqrt_petz(rho_a, rho_b, None, "left")
    assert trace_norm(tw - sq) < 1e-8


def test_projection_restores_marginals_and_is_idempotent():
    rho = random_pure(4, RNG)
    joint = partial_trace(rho, 1, "right")  # 3-site state
    left = partial_trace(joint, 1, "right")
    right = partial_trace(joint, 1, "left")
    ov = partial_trace(left, 1, "left")
    # A deliberately wrong reconstruction gets its marginals restored...
    bad = np.kron(left, np.eye(2) / 2)
    fixed = bad + projection_shift(bad, left, right, ov)
    assert np.max(np.abs(partial_trace(fixed, 1, "right") - left)) < 1e-12
    assert np.max(np.abs(partial_trace(fixed, 1, "left") - right)) < 1e-12
    # ...and an already-compatible state is untouched.
    assert np.max(np.abs(projection_shift(joint, left, right, ov))) < 1e-12


def test_recover_level_marginal_preservation_random_inputs():
    # Build a compatible level-2 window from a random 6-site pure state.
    full = FullState(6, random_pure(6, RNG))
    st = lattice_state_from_full(full, 2)
    new = recover_level(st)
    assert new.level == 3 and new.n_labels == st.n_labels - 1
    for k in range(new.n_labels):
        assert np.max(np.abs(partial_trace(new.mats[k], 1, "right") - st.mats[k])) < 1e-12
        assert np.max(np.abs(partial_trace(new.mats[k], 1, "left") - st.mats[k + 1])) < 1e-12
    # Seam consistency between adjacent recovered labels.
    new.check_compatibility(tol=1e-12)


def test_recover_level_exact_when_no_high_information():
    # 6-site state with no information above level 3: product of a 3-site and
    # a 3-site pure state => recovery reproduces exact level-4 marginals.
    rho = np.kron(random_pure(3, RNG), random_pure(3, RNG))
    full = FullState(6, rho)
    st3 = lattice_state_from_full(full, 3)
    st4 = recover_level(st3)
    exact4 = lattice_state_from_full(full, 4)
    assert np.max(np.abs(st4.mats - exact4.mats)) < 1e-8
    # Two recovery steps stay exact within the stated tolerance.
    st5 = recover_to(st3, 2)
    exact5 = lattice_state_from_full(full, 5)
    assert np.max(np.abs(st5.mats - exact5.mats)) < 1e-7


def test_recover_stack_matches_pair_reference():
    full = FullState(6, random_pure(6, RNG))
    st = lattice_state_from_full(full, 2)
    batched, reports = recover_level(st, with_reports=True)
    from lite.lattice import local_information_values

    i_vals = local_information_values(st)[0]
    for k in range(st.n_labels - 1):
        ref, _ = _pair_recover(st.mats[k], st.mats[k + 1], i_vals[k], i_vals[k + 1], 2)
        assert np.max(np.abs(batched.mats[k] - ref)) < 1e-11
    assert len(reports) == st.n_labels - 1
    assert all(r.correction_norm >= 0 for r in reports)


def test_recover_infinite_temperature_window():
    mats = np.broadcast_to(np.eye(4) / 4, (5, 4, 4)).copy().astype(complex)
    st = LatticeState(level=1, first_site=0, mats=mats)
    new = recover_level(st)
    assert np.max(np.abs(new.mats - np.eye(8)[None] / 8)) < 1e-12


def test_recover_to_requires_positive_steps():
    mats = np.broadcast_to(np.eye(4) / 4, (3, 4, 4)).copy().astype(complex)
    st = LatticeState(level=1, first_site=0, mats=mats)
    with pytest.raises(ValueError):
        recover_to(st, 0)
