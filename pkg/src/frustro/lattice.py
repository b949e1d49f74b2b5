"""Folded two-chain lattice Hamiltonians.

Both photon chains are folded onto one open 1D lattice so every coupling is
nearest-neighbour: sites 0 .. L-1 hold the first chain reversed (its head at
L-1), site L holds the two-level impurity, sites L+1 .. 2L the second chain
(head at L+1).  The impurity couples to the two heads through kappa/2 times
(b + bdag) sigma_x and sigma_y (frustrated variant) or sigma_x twice
(parallel variant), and carries the bare splitting -(delta/2) sigma_z.

The same term list feeds three consumers: a dense assembly for miniature
oracles, a bond-dimension <= 5 MPO for DMRG and energy measurements, and
two-site Trotter gate layers for time evolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh

from .bath import ChainCoefficients
from .errors import ParameterError

__all__ = [
    "boson_ops",
    "PAULI",
    "LatticeModel",
    "GateLayers",
    "build_model",
    "to_mpo",
    "to_gate_layers",
]

PAULI = {
    "x": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    "z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
    "i": np.eye(2, dtype=complex),
}


def boson_ops(d: int):
    """Truncated boson operators (b, bdag, n) on a d-level site."""
    if d < 2:
        raise ParameterError(f"boson dimension must be >= 2, got {d}")
    b = np.diag(np.sqrt(np.arange(1.0, d)), k=1).astype(complex)
    return b, b.conj().T, np.diag(np.arange(d, dtype=float)).astype(complex)


@dataclass(frozen=True)
class LatticeModel:
    """Term list of the folded lattice.

    dims[s] is the local dimension of site s; site_terms[s] its on-site
    operator (or None); bond_terms[b] the crossing products (op_left,
    op_right) acting on sites (b, b+1).  meta carries provenance for
    result records.
    """

    dims: tuple[int, ...]
    spin_pos: int
    site_terms: tuple
    bond_terms: tuple
    meta: dict = field(default_factory=dict)

    @property
    def n_sites(self) -> int:
        return len(self.dims)

    @property
    def chain_length(self) -> int:
        return self.spin_pos

    def chain_sites(self, species: str) -> list[int]:
        """Lattice sites of one chain, head (impurity side) first."""
        L = self.spin_pos
        if species == "x":
            return list(range(L - 1, -1, -1))
        if species == "y":
            return list(range(L + 1, 2 * L + 1))
        raise ParameterError(f"species must be 'x' or 'y', got {species!r}")

    def bond_hamiltonian(self, b: int) -> np.ndarray:
        """Dense two-site Hamiltonian of bond b with on-site terms split in.

        Interior sites donate half their on-site operator to each adjacent
        bond; the first and last site put full weight on their only bond.
        Summing the embedded bond Hamiltonians rebuilds the full H exactly.
        """
        n = self.n_sites
        if not 0 <= b < n - 1:
            raise ParameterError(f"bond index {b} out of range")
        dl, dr = self.dims[b], self.dims[b + 1]
        il, ir = np.eye(dl, dtype=complex), np.eye(dr, dtype=complex)
        h = np.zeros((dl * dr, dl * dr), dtype=complex)
        for op_l, op_r in self.bond_terms[b]:
            h += np.kron(op_l, op_r)
        if self.site_terms[b] is not None:
            wl = 1.0 if b == 0 else 0.5
            h += wl * np.kron(self.site_terms[b], ir)
        if self.site_terms[b + 1] is not None:
            wr = 1.0 if b + 1 == n - 1 else 0.5
            h += wr * np.kron(il, self.site_terms[b + 1])
        return h


def build_model(coeffs_x: ChainCoefficients, coeffs_y: ChainCoefficients,
                delta: float, d: int, variant: str = "frustrated") -> LatticeModel:
    """Assemble the folded lattice from two chain-coefficient sets.

    variant 'frustrated' couples the chains through sigma_x and sigma_y
    (and requires kappa_x = kappa_y); 'parallel' couples both through
    sigma_x.  Chains must have matching length and cutoff.
    """
    if variant not in ("frustrated", "parallel"):
        raise ParameterError(f"unknown variant {variant!r}")
    if coeffs_x.length != coeffs_y.length:
        raise ParameterError("chain lengths differ between the two baths")
    if coeffs_x.omega_c != coeffs_y.omega_c:
        raise ParameterError("chains must share the cutoff omega_c")
    if coeffs_x.length < 2:
        raise ParameterError("need chains of length >= 2")
    if d < 2:
        raise ParameterError(f"boson dimension must be >= 2, got {d}")
    if delta <= 0:
        raise ParameterError(f"delta must be > 0, got {delta}")
    if variant == "frustrated" and not np.isclose(
        coeffs_x.kappa, coeffs_y.kappa, rtol=1e-12, atol=0.0
    ):
        raise ParameterError("frustrated variant requires kappa_x = kappa_y")

    L = coeffs_x.length
    wc = coeffs_x.omega_c
    b, bdag, num = boson_ops(d)
    dims = (d,) * L + (2,) + (d,) * L
    spin_pos = L

    site_terms: list = [None] * (2 * L + 1)
    bond_terms: list = [[] for _ in range(2 * L)]

    # x chain occupies sites 0..L-1 reversed: chain index n -> site L-1-n
    for n in range(L):
        site_terms[L - 1 - n] = wc * coeffs_x.nu[n] * num
        site_terms[L + 1 + n] = wc * coeffs_y.nu[n] * num
    site_terms[spin_pos] = -(delta / 2.0) * PAULI["z"]

    for n in range(L - 1):
        # hop between x-chain sites n and n+1 lives on lattice bond
        # (L-2-n, L-1-n); the operator is symmetric so orientation is moot
        t = wc * coeffs_x.beta[n]
        bond_terms[L - 2 - n].append((t * bdag, b))
        bond_terms[L - 2 - n].append((t * b, bdag))
        t = wc * coeffs_y.beta[n]
        bond_terms[L + 1 + n].append((t * bdag, b))
        bond_terms[L + 1 + n].append((t * b, bdag))

    pos = b + bdag
    sig_left = PAULI["x"]
    sig_right = PAULI["x"] if variant == "parallel" else PAULI["y"]
    bond_terms[spin_pos - 1].append((coeffs_x.kappa * pos, 0.5 * sig_left))
    bond_terms[spin_pos].append((0.5 * sig_right, coeffs_y.kappa * pos))

    meta = {
        "variant": variant,
        "delta": float(delta),
        "omega_c": float(wc),
        "kappa_x": float(coeffs_x.kappa),
        "kappa_y": float(coeffs_y.kappa),
        "chain_length": L,
        "boson_dim": int(d),
        "backend": coeffs_x.backend,
    }
    return LatticeModel(
        dims=dims,
        spin_pos=spin_pos,
        site_terms=tuple(site_terms),
        bond_terms=tuple(tuple(t) for t in bond_terms),
        meta=meta,
    )


def to_mpo(model: LatticeModel) -> list[np.ndarray]:
    """MPO tensors W[s] with legs (left, right, bra, ket).

    Standard first-order automaton: state 0 = nothing applied yet, one
    state per crossing product in flight, last state = finished.  Chain
    bonds carry two products and spin bonds one, so every virtual bond
    has dimension <= 5.
    """
    n = model.n_sites
    tensors = []
    for s in range(n):
        d = model.dims[s]
        left_pairs = model.bond_terms[s - 1] if s > 0 else ()
        right_pairs = model.bond_terms[s] if s < n - 1 else ()
        dl = 2 + len(left_pairs) if s > 0 else 1
        dr = 2 + len(right_pairs) if s < n - 1 else 1
        w = np.zeros((dl, dr, d, d), dtype=complex)
        eye = np.eye(d, dtype=complex)
        onsite = model.site_terms[s]
        onsite = np.zeros((d, d), dtype=complex) if onsite is None else onsite

        row_id = 0
        row_done = dl - 1
        col_id = 0
        col_done = dr - 1
        if s == 0:
            # single row, playing the role of "identity so far"
            w[0, col_done] = onsite
            if dr > 1:
                w[0, col_id] = eye
                for m, (op_l, _) in enumerate(right_pairs):
                    w[0, 1 + m] = op_l
        elif s == n - 1:
            w[row_id, 0] = onsite
            for m, (_, op_r) in enumerate(left_pairs):
                w[1 + m, 0] = op_r
            w[row_done, 0] = eye
        else:
            w[row_id, col_id] = eye
            w[row_id, col_done] = onsite
            for m, (op_l, _) in enumerate(right_pairs):
                w[row_id, 1 + m] = op_l
            for m, (_, op_r) in enumerate(left_pairs):
                w[1 + m, col_done] = op_r
            w[row_done, col_done] = eye
        tensors.append(w)
    return tensors


@dataclass(frozen=True)
class GateLayers:
    """Two-site gates of one second-order Trotter step.

    Gates are exact exponentials exp(-i h_b tau) of the embedded bond
    Hamiltonians, stored with legs (bra_l, bra_r, ket_l, ket_r).  A step is
    even(dt/2) odd(dt) even(dt/2); consecutive steps may merge the inner
    half layers into even(dt).
    """

    dt: float
    even_bonds: tuple[int, ...]
    odd_bonds: tuple[int, ...]
    even_half: dict
    even_full: dict
    odd_full: dict
    dims: tuple[int, ...]


def _bond_gate(h: np.ndarray, tau: float, dl: int, dr: int) -> np.ndarray:
    # Hermitian eigendecomposition beats expm for repeatability
    evals, vecs = eigh(h)
    u = (vecs * np.exp(-1j * tau * evals)) @ vecs.conj().T
    return u.reshape(dl, dr, dl, dr)


def to_gate_layers(model: LatticeModel, dt: float) -> GateLayers:
    """Even/odd two-site gate layers for a second-order Trotter step.

    dt = 0 yields identity gates; negative dt is rejected.
    """
    if dt < 0:
        raise ParameterError(f"dt must be >= 0, got {dt}")
    n = model.n_sites
    even = tuple(range(0, n - 1, 2))
    odd = tuple(range(1, n - 1, 2))
    even_half, even_full, odd_full = {}, {}, {}
    for bnd in range(n - 1):
        h = model.bond_hamiltonian(bnd)
        dl, dr = model.dims[bnd], model.dims[bnd + 1]
        if bnd % 2 == 0:
            even_half[bnd] = _bond_gate(h, 0.5 * dt, dl, dr)
            even_full[bnd] = _bond_gate(h, dt, dl, dr)
        else:
            odd_full[bnd] = _bond_gate(h, dt, dl, dr)
    return GateLayers(
        dt=dt, even_bonds=even, odd_bonds=odd,
        even_half=even_half, even_full=even_full, odd_full=odd_full,
        dims=model.dims,
    )
