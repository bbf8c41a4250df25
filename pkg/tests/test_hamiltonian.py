import numpy as np
import pytest

from lite.hamiltonian import (
    ID2,
    SX,
    SZ,
    HamiltonianSpec,
    LindbladSpec,
    apply_dissipator,
    mixed_field_ising,
    xx_dephasing,
)
from lite.linalg import embed, partial_trace, random_hermitian

RNG = np.random.default_rng(11)


def test_ising_level0_subsystem_hamiltonian():
    spec = mixed_field_ising(1.0, 1.4, 0.9045)
    h0 = spec.subsystem_hamiltonian(0, 0)
    assert np.allclose(h0, 1.4 * SX + 0.9045 * SZ, atol=1e-12)


def test_ising_level1_subsystem_hamiltonian():
    j, ht, hl = 1.0, 1.4, 0.9045
    spec = mixed_field_ising(j, ht, hl)
    h1 = spec.subsystem_hamiltonian(0, 1)
    expected = (
        j * np.kron(SZ, SZ)
        + ht * (np.kron(SX, ID2) + np.kron(ID2, SX))
        + hl * (np.kron(SZ, ID2) + np.kron(ID2, SZ))
    )
    assert np.allclose(h1, expected, atol=1e-12)


def test_subsystem_hamiltonian_matches_bruteforce_embedding():
    # Random traceless 2-site term; compare H^l against tracing a 6-site
    # embedding of the full Hamiltonian over the complement.
    term = random_hermitian(4, RNG)
    term -= np.trace(term) / 4 * np.eye(4)
    spec = HamiltonianSpec(range=1, term=term, chain_length=6)
    big = np.zeros((64, 64), dtype=complex)
    for m in range(5):
        big += embed(term, m, 6 - 2 - m)
    # Subsystem = sites 2,3,4 (level 2).
    h = partial_trace(partial_trace(big, 2, "left"), 1, "right") / 2**3
    assert np.allclose(h, spec.subsystem_hamiltonian(2, 2), atol=1e-12)


def test_traceless_required():
    with pytest.raises(ValueError):
        HamiltonianSpec(range=0, term=np.eye(2))


def test_finite_chain_excludes_outside_bonds():
    spec = mixed_field_ising(1.0, 1.4, 0.9045, chain_length=4)
    assert spec.local_term(-1) is None
    assert spec.local_term(3) is None
    assert spec.local_term(2) is not None
    # Edge subsystem Hamiltonian has no traced coupling from outside.
    h_edge = spec.subsystem_hamiltonian(0, 1)
    h_bulk_finite = spec.subsystem_hamiltonian(1, 1)
    assert not np.allclose(h_edge, h_bulk_finite, atol=1e-12)


def test_boundary_deltas_support():
    # ΔH_L acts on the two leftmost sites only (range-1 chain).
    spec = mixed_field_ising(1.0, 1.4, 0.9045)
    level = 3
    dh_l, dh_r = spec.boundary_deltas(0, level)
    b_l, b_r = spec.boundary_blocks(level)
    assert np.allclose(dh_l, embed(b_l, 0, level - 1 + 1), atol=1e-12)
    assert np.allclose(dh_r, embed(b_r, level - 1 + 1, 0), atol=1e-12)


def test_xx_dephasing_conserves_total_magnetization():
    spec, lind = xx_dephasing(1.0, 0.5)
    # [H, Σ σ^z] = 0 on a 3-site window and the dissipator leaves σ^z alone.
    h = spec.subsystem_hamiltonian(0, 2)
    mz = sum(embed(SZ, k, 2 - k) for k in range(3))
    assert np.max(np.abs(h @ mz - mz @ h)) < 1e-12
    rho = np.diag(RNG.random(8))
    rho = (rho / np.trace(rho)).astype(complex)
    assert np.max(np.abs(apply_dissipator(rho, lind))) < 1e-14


def test_dissipator_standard_normalization():
    # Single-site dephasing of rho = (1 + a σ^x)/2 decays the coherence as
    # γ (σ^z ρ σ^z − ρ) = −γ a σ^x and leaves populations alone.
    lind = LindbladSpec(jumps=[(SZ, 0.7)])
    a = 0.3
    rho = 0.5 * (ID2 + a * SX)
    out = apply_dissipator(rho, lind)
    assert np.allclose(out, -0.7 * a * SX, atol=1e-14)
    assert abs(np.trace(out)) < 1e-14


def test_dephasing_mask_matches_operator_form():
    lind = LindbladSpec(jumps=[(SZ, 0.4)])
    rho = random_hermitian(8, RNG)
    mask = lind.dephasing_mask(3)
    assert np.allclose(mask * rho, apply_dissipator(rho, lind), atol=1e-12)
