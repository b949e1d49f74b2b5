"""Lattice assembly: term list, MPO, and Trotter gates versus dense oracles."""

import math

import numpy as np
import pytest
from scipy.linalg import expm

from frustro.bath import SpectralDensity, chain_coefficients_analytic
from frustro.dense import dense_hamiltonian, dense_mpo_matrix, embed_two_site
from frustro.errors import ParameterError
from frustro.lattice import (
    PAULI,
    boson_ops,
    build_model,
    to_gate_layers,
    to_mpo,
)

SD = SpectralDensity(alpha=0.25, omega_c=10.0)


def tiny_model(L=2, d=3, variant="frustrated", alpha=0.25):
    sd = SpectralDensity(alpha=alpha, omega_c=10.0)
    cc = chain_coefficients_analytic(sd, L)
    return build_model(cc, cc, delta=1.0, d=d, variant=variant)


def test_boson_operator_algebra():
    b, bdag, num = boson_ops(4)
    np.testing.assert_allclose(bdag @ b, num, atol=1e-15)
    comm = b @ bdag - bdag @ b
    # canonical commutator holds below the truncation level
    np.testing.assert_allclose(np.diag(comm)[:-1], 1.0, atol=1e-15)
    with pytest.raises(ParameterError):
        boson_ops(1)


def test_model_geometry():
    m = tiny_model(L=3, d=2)
    assert m.n_sites == 7
    assert m.spin_pos == 3
    assert m.dims == (2, 2, 2, 2, 2, 2, 2)
    assert m.chain_sites("x") == [2, 1, 0]  # head first
    assert m.chain_sites("y") == [4, 5, 6]
    with pytest.raises(ParameterError):
        m.chain_sites("z")


def test_model_validation():
    cc2 = chain_coefficients_analytic(SD, 2)
    cc3 = chain_coefficients_analytic(SD, 3)
    other = chain_coefficients_analytic(SpectralDensity(0.1, 10.0), 2)
    diffwc = chain_coefficients_analytic(SpectralDensity(0.25, 8.0), 2)
    with pytest.raises(ParameterError):
        build_model(cc2, cc3, 1.0, 3)
    with pytest.raises(ParameterError):
        build_model(cc2, diffwc, 1.0, 3)
    with pytest.raises(ParameterError):
        build_model(cc2, other, 1.0, 3)  # kappa mismatch, frustrated
    build_model(cc2, other, 1.0, 3, variant="parallel")  # allowed there
    with pytest.raises(ParameterError):
        build_model(cc2, cc2, 1.0, 1)
    with pytest.raises(ParameterError):
        build_model(cc2, cc2, -1.0, 3)
    with pytest.raises(ParameterError):
        chain_and_build_length_one()
    with pytest.raises(ParameterError):
        build_model(cc2, cc2, 1.0, 3, variant="serial")


def chain_and_build_length_one():
    cc1 = chain_coefficients_analytic(SD, 1)
    return build_model(cc1, cc1, 1.0, 3)


def test_dense_hamiltonian_is_hermitian_and_spin_gap_correct():
    m = tiny_model(L=2, d=3, alpha=0.0)
    h = dense_hamiltonian(m)
    np.testing.assert_allclose(h, h.conj().T, atol=1e-13)
    # alpha = 0 decouples the spin: ground energy -delta/2, gap to spin
    # flip equals delta
    ev = np.linalg.eigvalsh(h)
    assert ev[0] == pytest.approx(-0.5, abs=1e-12)
    assert min(e for e in ev if e > ev[0] + 1e-9) <= 1.0 + 1e-9


def test_dense_hamiltonian_matches_direct_term_sum():
    # rebuild H from scratch without bond_hamiltonian's on-site splitting
    m = tiny_model(L=2, d=3)
    L, wc = 2, 10.0
    cc = chain_coefficients_analytic(SD, L)
    b, bdag, num = boson_ops(3)
    dims = m.dims
    h = np.zeros((np.prod(dims), np.prod(dims)), dtype=complex)

    def one_site(op, s):
        left = int(np.prod(dims[:s], dtype=int))
        right = int(np.prod(dims[s + 1:], dtype=int))
        return np.kron(np.kron(np.eye(left), op), np.eye(right))

    # x chain on sites 0,1 reversed (site 1 = head), y chain on 3,4
    h += wc * cc.nu[0] * (one_site(num, 1) + one_site(num, 3))
    h += wc * cc.nu[1] * (one_site(num, 0) + one_site(num, 4))
    hop = np.kron(bdag, b) + np.kron(b, bdag)
    h += wc * cc.beta[0] * embed_two_site(hop, dims, 0)
    h += wc * cc.beta[0] * embed_two_site(hop, dims, 3)
    h += one_site(-0.5 * PAULI["z"], 2)
    pos = b + bdag
    h += cc.kappa * embed_two_site(np.kron(pos, 0.5 * PAULI["x"]), dims, 1)
    h += cc.kappa * embed_two_site(np.kron(0.5 * PAULI["y"], pos), dims, 2)

    np.testing.assert_allclose(dense_hamiltonian(m), h, atol=1e-12)


def test_mpo_matches_dense_hamiltonian():
    for variant in ("frustrated", "parallel"):
        for L, d in ((2, 3), (3, 2)):
            m = tiny_model(L=L, d=d, variant=variant)
            np.testing.assert_allclose(
                dense_mpo_matrix(to_mpo(m)), dense_hamiltonian(m), atol=1e-12
            )


def test_mpo_bond_dimension_bounded():
    m = tiny_model(L=4, d=2)
    dims = [w.shape[0] for w in to_mpo(m)] + [to_mpo(m)[-1].shape[1]]
    assert max(w.shape[0] for w in to_mpo(m)) <= 5
    assert max(w.shape[1] for w in to_mpo(m)) <= 5


def test_parallel_variant_uses_sigma_x_on_both_bonds():
    cc = chain_coefficients_analytic(SpectralDensity(0.4 / 2, 10.0), 2)
    m = build_model(cc, cc, 1.0, 3, variant="parallel")
    assert m.meta["kappa_x"] == pytest.approx(math.sqrt(0.2 * 10.0))
    (op_l, op_r), = m.bond_terms[m.spin_pos]
    np.testing.assert_allclose(op_l, 0.5 * PAULI["x"], atol=1e-15)
    m2 = build_model(cc, cc, 1.0, 3, variant="frustrated")
    (op_l2, _), = m2.bond_terms[m2.spin_pos]
    np.testing.assert_allclose(op_l2, 0.5 * PAULI["y"], atol=1e-15)


def test_bond_hamiltonians_sum_back_to_full_hamiltonian():
    m = tiny_model(L=3, d=2)
    total = sum(
        embed_two_site(m.bond_hamiltonian(b), m.dims, b)
        for b in range(m.n_sites - 1)
    )
    np.testing.assert_allclose(total, dense_hamiltonian(m), atol=1e-12)


def test_gates_are_exact_bond_exponentials():
    m = tiny_model(L=2, d=3)
    dt = 0.037
    layers = to_gate_layers(m, dt)
    for b in range(m.n_sites - 1):
        h = m.bond_hamiltonian(b)
        ref = expm(-1j * dt * h)
        got = (layers.even_full.get(b) if b % 2 == 0 else layers.odd_full[b])
        dl, dr = m.dims[b], m.dims[b + 1]
        np.testing.assert_allclose(got.reshape(dl * dr, dl * dr), ref, atol=1e-12)
        u = got.reshape(dl * dr, dl * dr)
        np.testing.assert_allclose(u @ u.conj().T, np.eye(dl * dr), atol=1e-12)
    half = layers.even_half[0].reshape(9, 9)
    np.testing.assert_allclose(half @ half, layers.even_full[0].reshape(9, 9),
                               atol=1e-12)


def test_zero_timestep_gives_identity_gates():
    m = tiny_model(L=2, d=2)
    layers = to_gate_layers(m, 0.0)
    for gate_set in (layers.even_half, layers.even_full, layers.odd_full):
        for b, g in gate_set.items():
            dl, dr = m.dims[b], m.dims[b + 1]
            np.testing.assert_allclose(
                g.reshape(dl * dr, dl * dr), np.eye(dl * dr), atol=1e-14
            )
    with pytest.raises(ParameterError):
        to_gate_layers(m, -0.01)


def test_trotter_step_has_third_order_local_error():
    # one second-order step vs the exact propagator: error ~ dt^3
    m = tiny_model(L=2, d=3)
    h = dense_hamiltonian(m)
    dims = m.dims

    def step_matrix(dt):
        layers = to_gate_layers(m, dt)
        total = np.eye(h.shape[0], dtype=complex)
        for gates in (layers.even_half, layers.odd_full, layers.even_half):
            layer = np.eye(h.shape[0], dtype=complex)
            for b, g in gates.items():
                dl, dr = dims[b], dims[b + 1]
                layer = embed_two_site(g.reshape(dl * dr, dl * dr), dims, b) @ layer
            total = layer @ total
        return total

    errs = []
    for dt in (0.08, 0.04, 0.02):
        exact = expm(-1j * dt * h)
        errs.append(np.linalg.norm(step_matrix(dt) - exact, 2))
    slopes = np.diff(np.log2(errs))
    assert np.all(-slopes >= 2.8)


def test_spectrum_symmetric_under_chain_exchange():
    # frustrated model: swapping the two chains (with the matching spin
    # rotation) is a symmetry; the spectrum must not care which chain
    # carries sigma_x
    cc = chain_coefficients_analytic(SD, 2)
    m = build_model(cc, cc, 1.0, 2)
    ev = np.linalg.eigvalsh(dense_hamiltonian(m))
    # mirror-built model: sigma_y on the left bond, sigma_x on the right
    mm = build_model(cc, cc, 1.0, 2)
    bond_terms = [list(t) for t in mm.bond_terms]
    (op_l, op_r) = bond_terms[mm.spin_pos - 1][-1]
    bond_terms[mm.spin_pos - 1][-1] = (op_l, 0.5 * PAULI["y"])
    (op_l2, op_r2) = bond_terms[mm.spin_pos][-1]
    bond_terms[mm.spin_pos][-1] = (0.5 * PAULI["x"], op_r2)
    mirrored = type(mm)(
        dims=mm.dims, spin_pos=mm.spin_pos, site_terms=mm.site_terms,
        bond_terms=tuple(tuple(t) for t in bond_terms), meta=mm.meta,
    )
    ev2 = np.linalg.eigvalsh(dense_hamiltonian(mirrored))
    np.testing.assert_allclose(ev, ev2, atol=1e-11)
