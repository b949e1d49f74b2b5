"""Engine checks against dense miniature assemblies."""

import os

import numpy as np
import pytest

from frustro.bath import SpectralDensity, chain_coefficients_stieltjes
from frustro.dense import dense_hamiltonian, dense_mpo_matrix, dense_state
from frustro.errors import (
    CheckpointError,
    ConvergenceError,
    NormalizationWarning,
    ParameterError,
    TruncationError,
)
from frustro.lattice import boson_ops, build_model, to_gate_layers, to_mpo
from frustro.mps import (
    MatrixProductState,
    apply_operator_train,
    correlation_matrix,
    dmrg,
    evolve,
    expectation_mpo,
    load_state,
    overlap,
    product_state,
    save_state,
    transition_vector,
)

DELTA = 1.0
OMEGA_C = 10.0


def small_model(alpha=0.4, length=2, d=3, variant="frustrated"):
    dens = SpectralDensity(alpha=alpha, omega_c=OMEGA_C)
    cc = chain_coefficients_stieltjes(dens, length)
    if variant == "parallel":
        dens = SpectralDensity(alpha=alpha / 2.0, omega_c=OMEGA_C)
        cc = chain_coefficients_stieltjes(dens, length)
    return build_model(cc, cc, delta=DELTA, d=d, variant=variant)


@pytest.fixture(scope="module")
def mini():
    model = small_model()
    h = dense_hamiltonian(model)
    evals, evecs = np.linalg.eigh(h)
    return model, h, evals, evecs


def random_entangled_state(model, t=0.15, dt=0.003):
    """Deterministic correlated state: short evolution of a seeded packet."""
    idx = [0] * model.n_sites
    idx[0] = 1
    psi = product_state(model.dims, idx)
    layers = to_gate_layers(model, dt)
    evolve(psi, layers, int(round(t / dt)), chi_max=64, eps=0.0,
           max_discard=1.0)
    return psi


def test_product_state_and_dense_roundtrip():
    psi = product_state((2, 3, 2), (1, 2, 0))
    vec = dense_state(psi.tensors)
    expect = np.zeros(12)
    # index (1,2,0) in row-major (2,3,2)
    expect[1 * 6 + 2 * 2 + 0] = 1.0
    assert np.allclose(vec, expect)
    assert psi.canonical_defect() == 0.0
    assert abs(psi.norm() - 1.0) < 1e-15


def test_move_center_is_exact_and_isometric(mini):
    model, _, _, _ = mini
    psi = random_entangled_state(model)
    ref = dense_state(psi.tensors)
    for target in (0, model.n_sites - 1, 2):
        psi.move_center(target)
        assert psi.center == target
        assert psi.canonical_defect() < 1e-12
        assert np.max(np.abs(dense_state(psi.tensors) - ref)) < 1e-12


def test_apply_two_site_matches_dense(mini):
    model, _, _, _ = mini
    psi = product_state(model.dims, (1, 0, 0, 1, 0))
    layers = to_gate_layers(model, 0.07)
    vec = dense_state(psi.tensors)
    from frustro.dense import embed_two_site

    for b in (0, 2, 3, 1):
        gate = layers.even_full.get(b, layers.odd_full.get(b))
        psi.apply_two_site(gate, b, chi_max=64, eps=0.0)
        dl, dr = model.dims[b], model.dims[b + 1]
        dense_gate = embed_two_site(
            gate.reshape(dl * dr, dl * dr), model.dims, b)
        vec = dense_gate @ vec
        assert np.max(np.abs(dense_state(psi.tensors) - vec)) < 1e-12


def test_compress_preserves_state_and_reports_weight(mini):
    model, _, _, _ = mini
    psi = random_entangled_state(model)
    ref = dense_state(psi.tensors)
    dropped = psi.compress(chi_max=64, eps=0.0)
    assert dropped == 0.0
    assert np.max(np.abs(dense_state(psi.tensors) - ref)) < 1e-12
    dropped = psi.compress(chi_max=64, eps=1e-14)
    assert dropped < 1e-10
    # amplitude error scales like the square root of the dropped weight
    assert np.max(np.abs(dense_state(psi.tensors) - ref)) < 1e-6
    # hard cap really truncates and reports it
    psi2 = random_entangled_state(model)
    dropped2 = psi2.compress(chi_max=2, eps=0.0)
    assert dropped2 > 0.0
    assert max(psi2.bond_dims) <= 2


def test_overlap_and_mpo_expectation_match_dense(mini):
    model, h, _, _ = mini
    psi = random_entangled_state(model)
    phi = product_state(model.dims, (1, 0, 0, 0, 0))
    vp = dense_state(psi.tensors)
    vf = dense_state(phi.tensors)
    assert abs(overlap(phi, psi) - np.vdot(vf, vp)) < 1e-12
    mpo = to_mpo(model)
    e_mps = expectation_mpo(psi, mpo)
    e_dense = np.vdot(vp, h @ vp).real / np.vdot(vp, vp).real
    assert abs(e_mps - e_dense) < 1e-10


def test_dmrg_alpha_zero_is_exact():
    model = small_model(alpha=0.0, length=3, d=2)
    res = dmrg(to_mpo(model), model.dims, chi_max=8, sweeps=8, tol=1e-12)
    assert abs(res.energy - (-DELTA / 2.0)) < 1e-12
    # ground state is spin-up times vacua
    ref = product_state(model.dims, [0] * model.n_sites)
    assert abs(abs(overlap(ref, res.state)) - 1.0) < 1e-10


def test_dmrg_matches_dense_ground_state(mini):
    model, _, evals, evecs = mini
    res = dmrg(to_mpo(model), model.dims, chi_max=16, sweeps=14, tol=1e-11)
    assert res.converged
    assert abs(res.energy - evals[0]) < 1e-9
    fid = abs(np.vdot(evecs[:, 0], dense_state(res.state.tensors))) ** 2
    assert fid >= 1.0 - 1e-9
    # energy trace is monotone to solver precision
    diffs = np.diff(res.trace)
    assert np.all(diffs <= 1e-10)


def test_dmrg_mpo_matrix_consistency(mini):
    model, h, _, _ = mini
    dense_from_mpo = dense_mpo_matrix(to_mpo(model))
    assert np.max(np.abs(dense_from_mpo - h)) < 1e-12


def test_dmrg_raises_on_exhausted_sweeps(mini):
    model, _, _, _ = mini
    with pytest.raises(ConvergenceError) as err:
        dmrg(to_mpo(model), model.dims, chi_max=16, sweeps=1, tol=1e-11)
    assert len(err.value.trace) == 2


def test_operator_train_on_vacuum_matches_dense(mini):
    model, _, _, _ = mini
    vac = product_state(model.dims, [0] * model.n_sites)
    d = model.dims[0]
    _, bdag, _ = boson_ops(d)
    sites = model.chain_sites("x")
    w = np.array([0.6, 0.8j])
    ops = {s: w[i] * bdag for i, s in enumerate(sites)}
    out, eta = apply_operator_train(vac, ops, chi_max=8)
    assert abs(eta - 1.0) < 1e-12
    ref = np.zeros(162, dtype=complex)
    from frustro.dense import embed_two_site

    vec = dense_state(vac.tensors)
    for i, s in enumerate(sites):
        op1 = np.kron(w[i] * bdag, np.eye(model.dims[s + 1])) if s + 1 < model.n_sites \
            else np.kron(np.eye(model.dims[s - 1]), w[i] * bdag)
        b_embed = embed_two_site(op1, model.dims, s if s + 1 < model.n_sites else s - 1)
        ref += b_embed @ vec
    got = dense_state(out.tensors)
    phase = np.vdot(got, ref)
    phase /= abs(phase)
    assert np.max(np.abs(got * phase - ref)) < 1e-12


def test_operator_train_norm_identity_on_ground_state(mini):
    model, _, _, _ = mini
    res = dmrg(to_mpo(model), model.dims, chi_max=16, sweeps=14, tol=1e-11)
    gs = res.state
    d = model.dims[0]
    b, bdag, _ = boson_ops(d)
    sites = model.chain_sites("x")
    w = np.array([1.0 / np.sqrt(2.0), 1.0j / np.sqrt(2.0)])
    ops = {s: w[i] * bdag for i, s in enumerate(sites)}
    corr = correlation_matrix(gs, b, sites)
    # truncated bosons: b b^dag = 1 + b^dag b - d P_top, site by site
    top = np.array([gs.site_expectation(np.diag(np.eye(d)[-1]), s).real
                    for s in sites])
    expected = 1.0 + np.einsum("n,m,mn->", w.conj(), w, corr) \
        - d * np.sum(np.abs(w) ** 2 * top)
    with pytest.warns(NormalizationWarning):
        _, eta = apply_operator_train(gs, ops, chi_max=32)
    assert abs(eta ** 2 - expected.real) < 1e-10
    assert abs(expected.imag) < 1e-10


def test_operator_train_warns_when_not_normalized(mini):
    model, _, _, _ = mini
    vac = product_state(model.dims, [0] * model.n_sites)
    _, bdag, _ = boson_ops(model.dims[0])
    with pytest.warns(NormalizationWarning):
        apply_operator_train(vac, {0: 2.0 * bdag}, chi_max=8)


def test_transition_vector_matches_dense(mini):
    model, _, _, _ = mini
    res = dmrg(to_mpo(model), model.dims, chi_max=16, sweeps=14, tol=1e-11)
    gs = res.state
    psi = random_entangled_state(model)
    d = model.dims[0]
    b, _, _ = boson_ops(d)
    sites = model.chain_sites("x") + model.chain_sites("y")
    v = transition_vector(gs, psi, b, sites)
    vg = dense_state(gs.tensors)
    vp = dense_state(psi.tensors)
    from frustro.dense import embed_two_site

    for i, s in enumerate(sites):
        if s + 1 < model.n_sites:
            op1 = np.kron(b, np.eye(model.dims[s + 1]))
            bb = embed_two_site(op1, model.dims, s)
        else:
            op1 = np.kron(np.eye(model.dims[s - 1]), b)
            bb = embed_two_site(op1, model.dims, s - 1)
        assert abs(v[i] - np.vdot(vg, bb @ vp)) < 1e-11


def test_correlation_matrix_matches_dense(mini):
    model, _, _, _ = mini
    psi = random_entangled_state(model)
    d = model.dims[0]
    b, _, _ = boson_ops(d)
    sites = model.chain_sites("x")  # lattice order reversed on purpose
    corr = correlation_matrix(psi, b, sites)
    vp = dense_state(psi.tensors)
    vp /= np.linalg.norm(vp)
    from frustro.dense import embed_two_site

    def embedded(op, s):
        if s + 1 < model.n_sites:
            return embed_two_site(np.kron(op, np.eye(model.dims[s + 1])),
                                  model.dims, s)
        return embed_two_site(np.kron(np.eye(model.dims[s - 1]), op),
                              model.dims, s - 1)

    for i, si in enumerate(sites):
        for j, sj in enumerate(sites):
            ref = np.vdot(embedded(b, si) @ vp, embedded(b, sj) @ vp)
            assert abs(corr[i, j] - ref) < 1e-11
    assert np.max(np.abs(corr - corr.conj().T)) < 1e-12


def test_evolve_matches_dense_propagator(mini):
    model, h, evals, evecs = mini
    idx = [0] * model.n_sites
    idx[0] = 1
    t_final = 0.2

    def dense_prop(t):
        v0 = dense_state(product_state(model.dims, idx).tensors)
        return evecs @ (np.exp(-1j * evals * t) * (evecs.conj().T @ v0))

    fids = []
    for dt in (0.004, 0.002):
        psi = product_state(model.dims, idx)
        layers = to_gate_layers(model, dt)
        info = evolve(psi, layers, int(round(t_final / dt)), chi_max=64,
                      eps=0.0, max_discard=1.0)
        assert info["discarded"] < 1e-12
        assert info["norm_drift"] < 1e-10
        fid = abs(np.vdot(dense_prop(t_final), dense_state(psi.tensors))) ** 2
        fids.append(fid)
    assert fids[-1] >= 1.0 - 1e-6
    # halving dt cuts the infidelity by roughly 4 (second order)
    ratio = (1.0 - fids[0]) / max(1.0 - fids[1], 1e-16)
    assert ratio > 3.0


def test_evolve_conserves_number_when_decoupled():
    model = small_model(alpha=0.0, length=3, d=3)
    idx = [0] * model.n_sites
    idx[1] = 1
    psi = product_state(model.dims, idx)
    layers = to_gate_layers(model, 0.01)
    mpo = to_mpo(model)
    e0 = expectation_mpo(psi, mpo)
    _, _, num = boson_ops(3)
    evolve(psi, layers, 60, chi_max=32, eps=1e-12, max_discard=1.0)
    sites = model.chain_sites("x") + model.chain_sites("y")
    total = sum(psi.site_expectation(num, s).real for s in sites)
    assert abs(total - 1.0) < 1e-9
    spin = psi.site_expectation(np.diag([0.0, 1.0]), model.spin_pos).real
    assert spin < 1e-12
    # energy is only conserved to the Trotter (dt^2) scale
    assert abs(expectation_mpo(psi, mpo) - e0) < 1e-3


def test_evolve_truncation_budget_enforced(mini):
    model, _, _, _ = mini
    idx = [0] * model.n_sites
    idx[0] = 1
    psi = product_state(model.dims, idx)
    layers = to_gate_layers(model, 0.05)
    with pytest.raises(TruncationError):
        evolve(psi, layers, 40, chi_max=1, eps=0.0, max_discard=1e-12)


def test_checkpoint_roundtrip(tmp_path, mini):
    model, _, _, _ = mini
    psi = random_entangled_state(model)
    path = os.path.join(tmp_path, "state.mpschk")
    save_state(path, psi, {"alpha": 0.4, "tag": "unit"})
    loaded, meta = load_state(path)
    assert meta == {"alpha": 0.4, "tag": "unit"}
    assert loaded.center == psi.center
    assert abs(loaded.discarded - psi.discarded) < 1e-300
    assert len(loaded.tensors) == len(psi.tensors)
    for a, b in zip(loaded.tensors, psi.tensors):
        assert a.shape == b.shape
        assert np.array_equal(a, b)


def test_checkpoint_rejects_corruption(tmp_path, mini):
    model, _, _, _ = mini
    psi = product_state(model.dims, [0] * model.n_sites)
    path = os.path.join(tmp_path, "state.mpschk")
    save_state(path, psi)
    raw = open(path, "rb").read()
    bad_magic = os.path.join(tmp_path, "bad1")
    with open(bad_magic, "wb") as fh:
        fh.write(b"NOTMAGIC" + raw[8:])
    with pytest.raises(CheckpointError):
        load_state(bad_magic)
    truncated = os.path.join(tmp_path, "bad2")
    with open(truncated, "wb") as fh:
        fh.write(raw[:-16])
    with pytest.raises(CheckpointError):
        load_state(truncated)
    trailing = os.path.join(tmp_path, "bad3")
    with open(trailing, "wb") as fh:
        fh.write(raw + b"\x00")
    with pytest.raises(CheckpointError):
        load_state(trailing)


def test_mps_constructor_validation():
    with pytest.raises(ParameterError):
        MatrixProductState([])
    good = np.zeros((1, 2, 1), dtype=complex)
    good[0, 0, 0] = 1.0
    with pytest.raises(ParameterError):
        MatrixProductState([np.zeros((2, 2, 1))])
    with pytest.raises(ParameterError):
        MatrixProductState([good, np.zeros((2, 2, 1))])
    with pytest.raises(ParameterError):
        product_state((2, 2), (0, 3))
