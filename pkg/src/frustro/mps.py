"""Matrix-product-state engine.

Conventions: site tensors carry legs (left, phys, right); the state is kept
in mixed-canonical form with tensors strictly left of `center` being left
isometries and those right of it right isometries.  All truncation happens
in `_split_theta`, which also reports the discarded weight (relative sum of
squared singular values dropped), accumulated on the state.

Ground states come from two-site DMRG with a Lanczos eigensolver on the
bond effective Hamiltonian (dense diagonalization below 64 dimensions, and
always deterministic: the previous bond tensor seeds the solver).  Time
evolution is second-order Trotter with the two half layers of consecutive
steps merged.  A small binary checkpoint format round-trips states to disk.
"""

from __future__ import annotations

import json
import os
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .errors import (
    CheckpointError,
    ConvergenceError,
    NormalizationWarning,
    ParameterError,
    TruncationError,
)
from .lattice import GateLayers

__all__ = [
    "MatrixProductState",
    "GroundStateResult",
    "product_state",
    "dmrg",
    "evolve",
    "apply_operator_train",
    "overlap",
    "expectation_mpo",
    "transition_vector",
    "correlation_matrix",
    "save_state",
    "load_state",
]

_DENSE_EIG_CUTOFF = 64
_MAGIC = b"MPSCHK01"


def _split_theta(theta: np.ndarray, chi_max: int | None, eps: float):
    """SVD-split a two-site block (Dl*d1, d2*Dr) with truncation.

    Keeps the largest singular values until the discarded relative weight
    would exceed eps, capped at chi_max.  Returns (U, S, Vh, discarded).
    """
    try:
        u, s, vh = np.linalg.svd(theta, full_matrices=False)
    except np.linalg.LinAlgError:  # gesdd very rarely fails to converge
        from scipy.linalg import svd as scipy_svd

        u, s, vh = scipy_svd(theta, full_matrices=False, lapack_driver="gesvd")
    total = float(np.sum(s * s))
    if total == 0.0:
        raise ParameterError("cannot split a zero block")
    keep = int(np.sum(s > 0.0))
    if eps > 0.0:
        tail = np.cumsum((s * s)[::-1])[::-1] / total
        # tail[i] = relative weight of s[i:], keep smallest prefix with
        # tail just below eps
        above = np.nonzero(tail > eps)[0]
        keep = int(above[-1]) + 1 if above.size else 1
    if chi_max is not None:
        keep = min(keep, chi_max)
    keep = max(keep, 1)
    discarded = float(np.sum((s * s)[keep:]) / total)
    return u[:, :keep], s[:keep], vh[:keep], discarded


class MatrixProductState:
    """Open-boundary MPS in mixed-canonical form."""

    def __init__(self, tensors: list[np.ndarray], center: int = 0,
                 discarded: float = 0.0):
        self.tensors = [np.asarray(t, dtype=complex) for t in tensors]
        if not self.tensors:
            raise ParameterError("empty tensor list")
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[2] != 1:
            raise ParameterError("boundary virtual dimensions must be 1")
        for a, b in zip(self.tensors, self.tensors[1:]):
            if a.shape[2] != b.shape[0]:
                raise ParameterError("mismatched virtual dimensions")
        if not 0 <= center < len(self.tensors):
            raise ParameterError(f"center {center} out of range")
        self.center = center
        self.discarded = float(discarded)

    # ------------------------------------------------------------ basics

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(t.shape[1] for t in self.tensors)

    @property
    def bond_dims(self) -> tuple[int, ...]:
        return tuple(t.shape[2] for t in self.tensors[:-1])

    def copy(self) -> "MatrixProductState":
        return MatrixProductState(
            [t.copy() for t in self.tensors], self.center, self.discarded
        )

    def norm(self) -> float:
        return float(np.linalg.norm(self.tensors[self.center]))

    def normalize(self) -> float:
        """Scale the center tensor to unit norm; returns the old norm."""
        nrm = self.norm()
        if nrm == 0.0:
            raise ParameterError("cannot normalize the zero state")
        self.tensors[self.center] /= nrm
        return nrm

    def canonical_defect(self) -> float:
        """Largest isometry violation left and right of the center."""
        worst = 0.0
        for i in range(self.center):
            t = self.tensors[i]
            m = t.reshape(-1, t.shape[2])
            worst = max(worst, float(np.max(np.abs(
                m.conj().T @ m - np.eye(t.shape[2])))))
        for i in range(self.center + 1, self.n_sites):
            t = self.tensors[i]
            m = t.reshape(t.shape[0], -1)
            worst = max(worst, float(np.max(np.abs(
                m @ m.conj().T - np.eye(t.shape[0])))))
        return worst

    # ---------------------------------------------------- canonical moves

    def _shift_right(self):
        c = self.center
        t = self.tensors[c]
        dl, d, dr = t.shape
        q, r = np.linalg.qr(t.reshape(dl * d, dr))
        self.tensors[c] = q.reshape(dl, d, q.shape[1])
        nxt = self.tensors[c + 1]
        self.tensors[c + 1] = np.tensordot(r, nxt, axes=([1], [0]))
        self.center = c + 1

    def _shift_left(self):
        c = self.center
        t = self.tensors[c]
        dl, d, dr = t.shape
        q, r = np.linalg.qr(t.reshape(dl, d * dr).conj().T)
        self.tensors[c] = q.conj().T.reshape(q.shape[1], d, dr)
        prv = self.tensors[c - 1]
        self.tensors[c - 1] = np.tensordot(prv, r.conj().T, axes=([2], [0]))
        self.center = c - 1

    def move_center(self, to: int):
        if not 0 <= to < self.n_sites:
            raise ParameterError(f"target center {to} out of range")
        while self.center < to:
            self._shift_right()
        while self.center > to:
            self._shift_left()

    # ------------------------------------------------------- two-site ops

    def apply_two_site(self, gate: np.ndarray, b: int,
                       chi_max: int | None = None, eps: float = 0.0,
                       absorb: str = "right") -> float:
        """Apply a two-site gate on bond b (sites b, b+1) with truncation.

        gate has legs (bra_l, bra_r, ket_l, ket_r).  The center must sit on
        one of the two sites; after the split it sits on the `absorb` side.
        Returns the discarded weight of this split.
        """
        if self.center not in (b, b + 1):
            self.move_center(b if self.center < b else b + 1)
        t1, t2 = self.tensors[b], self.tensors[b + 1]
        dl, d1 = t1.shape[0], t1.shape[1]
        d2, dr = t2.shape[1], t2.shape[2]
        theta = np.tensordot(t1, t2, axes=([2], [0]))
        theta = np.tensordot(gate, theta, axes=([2, 3], [1, 2]))
        theta = theta.transpose(2, 0, 1, 3).reshape(dl * d1, d2 * dr)
        u, s, vh, disc = _split_theta(theta, chi_max, eps)
        self.discarded += disc
        if absorb == "right":
            self.tensors[b] = u.reshape(dl, d1, -1)
            self.tensors[b + 1] = (s[:, None] * vh).reshape(-1, d2, dr)
            self.center = b + 1
        else:
            self.tensors[b] = (u * s).reshape(dl, d1, -1)
            self.tensors[b + 1] = vh.reshape(-1, d2, dr)
            self.center = b
        return disc

    def compress(self, chi_max: int | None = None, eps: float = 1e-14) -> float:
        """Re-canonicalize and truncate every bond; returns weight dropped."""
        before = self.discarded
        self.move_center(self.n_sites - 1)
        for b in range(self.n_sites - 2, -1, -1):
            t1, t2 = self.tensors[b], self.tensors[b + 1]
            dl, d1 = t1.shape[0], t1.shape[1]
            d2, dr = t2.shape[1], t2.shape[2]
            theta = np.tensordot(t1, t2, axes=([2], [0]))
            u, s, vh, disc = _split_theta(
                theta.reshape(dl * d1, d2 * dr), chi_max, eps)
            self.discarded += disc
            self.tensors[b] = (u * s).reshape(dl, d1, -1)
            self.tensors[b + 1] = vh.reshape(-1, d2, dr)
            self.center = b
        return self.discarded - before

    # ------------------------------------------------------- measurements

    def site_expectation(self, op: np.ndarray, site: int) -> complex:
        """<op> on one site; moves the center there."""
        self.move_center(site)
        t = self.tensors[site]
        return complex(np.einsum("adb,dc,acb->", t.conj(), op, t))

    def expectation_sweep(self, ops: dict) -> dict:
        """One left-to-right pass evaluating {site: op} expectations."""
        out = {}
        for site in sorted(ops):
            out[site] = self.site_expectation(ops[site], site)
        return out


def product_state(dims, indices) -> MatrixProductState:
    """Bond-dimension-1 product state |indices[0], indices[1], ...>."""
    if len(dims) != len(indices):
        raise ParameterError("dims and indices must have equal length")
    tensors = []
    for d, i in zip(dims, indices):
        if not 0 <= i < d:
            raise ParameterError(f"basis index {i} out of range for dim {d}")
        t = np.zeros((1, d, 1), dtype=complex)
        t[0, i, 0] = 1.0
        tensors.append(t)
    return MatrixProductState(tensors, center=0)


# ---------------------------------------------------------------- overlaps


def overlap(bra: MatrixProductState, ket: MatrixProductState) -> complex:
    """<bra|ket> by transfer contraction."""
    if bra.dims != ket.dims:
        raise ParameterError("states live on different lattices")
    env = np.ones((1, 1), dtype=complex)
    for tb, tk in zip(bra.tensors, ket.tensors):
        tmp = np.tensordot(env, tk, axes=([1], [0]))
        env = np.tensordot(tb.conj(), tmp, axes=([0, 1], [0, 1]))
    return complex(env[0, 0])


def expectation_mpo(state: MatrixProductState, mpo) -> float:
    """<state|H|state> for a Hermitian MPO (imaginary part checked)."""
    env = np.ones((1, 1, 1), dtype=complex)
    for t, w in zip(state.tensors, mpo):
        env = _transfer_mpo(env, t, w, t)
    val = complex(env[0, 0, 0])
    nrm2 = abs(overlap(state, state))
    if abs(val.imag) > 1e-8 * max(abs(val.real), 1.0):
        raise ParameterError("MPO expectation has a large imaginary part")
    return val.real / nrm2


def _transfer_mpo(env, bra_t, w, ket_t):
    # env (bra, mpo, ket) -> one site further right
    tmp = np.tensordot(env, ket_t, axes=([2], [0]))          # (a, w, d', b')
    tmp = np.tensordot(tmp, w, axes=([1, 2], [0, 3]))        # (a, b', w', d)
    return np.tensordot(bra_t.conj(), tmp, axes=([0, 1], [0, 3])).transpose(0, 2, 1)


def transition_vector(gs: MatrixProductState, psi: MatrixProductState,
                      op: np.ndarray, sites) -> np.ndarray:
    """v[i] = <gs| op(sites[i]) |psi> for one single-site operator.

    Left/right mixed environments are precomputed once, so the cost is one
    pass regardless of how many sites are requested.
    """
    if gs.dims != psi.dims:
        raise ParameterError("states live on different lattices")
    n = gs.n_sites
    left = [np.ones((1, 1), dtype=complex)]
    for i in range(n - 1):
        tmp = np.tensordot(left[-1], psi.tensors[i], axes=([1], [0]))
        left.append(np.tensordot(gs.tensors[i].conj(), tmp, axes=([0, 1], [0, 1])))
    rights = [None] * (n + 1)
    rights[n] = np.ones((1, 1), dtype=complex)
    for i in range(n - 1, -1, -1):
        tmp = np.tensordot(psi.tensors[i], rights[i + 1], axes=([2], [1]))
        rights[i] = np.tensordot(gs.tensors[i].conj(), tmp, axes=([1, 2], [1, 2]))
    sites = list(sites)
    out = np.empty(len(sites), dtype=complex)
    for j, s in enumerate(sites):
        tmp = np.tensordot(left[s], psi.tensors[s], axes=([1], [0]))
        tmp = np.tensordot(tmp, op, axes=([1], [1]))          # (a, b', d_bra)
        tmp = np.tensordot(gs.tensors[s].conj(), tmp, axes=([0, 1], [0, 2]))
        out[j] = np.tensordot(tmp, rights[s + 1], axes=([0, 1], [0, 1]))
    return out


def correlation_matrix(psi: MatrixProductState, annihilator: np.ndarray,
                       sites) -> np.ndarray:
    """C[i, j] = <psi| b^dag(sites[i]) b(sites[j]) |psi> (Hermitian).

    sites may come in any order (e.g. chain order instead of lattice
    order); rows and columns follow the order given.  One walk per row, so
    the cost is O(len(sites) * n_sites * chi^3).
    """
    sites = list(sites)
    work = psi.copy()
    work.move_center(0)
    nrm2 = work.norm() ** 2
    n = work.n_sites
    creator = annihilator.conj().T
    order = np.argsort(sites)
    lattice_sorted = [sites[k] for k in order]
    targets = {s: i for i, s in enumerate(lattice_sorted)}
    c_sorted = np.zeros((len(sites), len(sites)), dtype=complex)

    # left environments of the plain overlap, shared by every row
    left = [np.ones((1, 1), dtype=complex)]
    for i in range(n - 1):
        tmp = np.tensordot(left[-1], work.tensors[i], axes=([1], [0]))
        left.append(np.tensordot(work.tensors[i].conj(), tmp,
                                 axes=([0, 1], [0, 1])))

    for a, sa in enumerate(lattice_sorted):
        t = work.tensors[sa]
        tmp = np.tensordot(left[sa], t, axes=([1], [0]))     # (abra, d, bket')
        # diagonal: both operators on the same site
        tmpd = np.tensordot(tmp, creator @ annihilator, axes=([1], [1]))
        c_sorted[a, a] = complex(np.tensordot(
            t.conj(), tmpd, axes=([0, 1, 2], [0, 2, 1])))
        # off-diagonal: plant the creator here and walk right
        tmpc = np.tensordot(tmp, creator, axes=([1], [1]))   # (abra, bket', dbra)
        env = np.tensordot(t.conj(), tmpc, axes=([0, 1], [0, 2]))
        for s in range(sa + 1, n):
            ts = work.tensors[s]
            tmp2 = np.tensordot(env, ts, axes=([1], [0]))    # (abra, d, bket')
            if s in targets and targets[s] > a:
                tmp3 = np.tensordot(tmp2, annihilator, axes=([1], [1]))
                closed = np.tensordot(ts.conj(), tmp3, axes=([0, 1], [0, 2]))
                # sites right of s are right isometries: close with a trace
                c_sorted[a, targets[s]] = complex(np.trace(closed))
            env = np.tensordot(ts.conj(), tmp2, axes=([0, 1], [0, 1]))
    c_sorted /= nrm2
    c_sorted = c_sorted + np.triu(c_sorted, 1).conj().T
    inv = np.empty_like(order)
    inv[order] = np.arange(len(sites))
    return c_sorted[np.ix_(inv, inv)]


# -------------------------------------------------------- operator trains


def apply_operator_train(state: MatrixProductState, site_ops: dict,
                         chi_max: int | None = None, eps: float = 1e-14,
                         normalize: bool = True):
    """Apply O = sum_s site_ops[s] acting on site s (one term per site).

    Implemented as a bond-dimension-2 operator train, so the result is
    exact up to the final compression.  Returns (new_state, eta) where eta
    is the norm of O|state> before normalization; a NormalizationWarning
    is emitted when eta^2 strays from 1 by more than 1e-2, which flags a
    badly normalized amplitude pattern for wavepacket creation.
    """
    if not site_ops:
        raise ParameterError("site_ops is empty")
    n = state.n_sites
    dims = state.dims
    tensors = []
    for s in range(n):
        d = dims[s]
        op = np.asarray(site_ops.get(s, np.zeros((d, d))), dtype=complex)
        if op.shape != (d, d):
            raise ParameterError(f"operator at site {s} has shape {op.shape}")
        ident = np.eye(d)
        # virtual states: 0 = term already placed, 1 = not yet placed
        w = np.zeros((2, 2, d, d), dtype=complex)
        w[0, 0] = ident
        w[1, 0] = op
        w[1, 1] = ident
        wl = w[1:2] if s == 0 else w
        wr = wl[:, 0:1] if s == n - 1 else wl
        t = state.tensors[s]
        big = np.tensordot(wr, t, axes=([3], [1]))   # (wl, wr, dbra, Dl, Dr)
        # group (wl, Dl) and (wr, Dr) the same way on both sides of a bond
        big = big.transpose(0, 3, 2, 1, 4)
        wld, dl, dd, wrd, dr = big.shape
        tensors.append(big.reshape(wld * dl, dd, wrd * dr))
    out = MatrixProductState(tensors, center=0, discarded=state.discarded)
    out.compress(chi_max=chi_max, eps=eps)
    eta = out.norm()
    if abs(eta * eta - 1.0) > 1e-2:
        warnings.warn(
            f"operator train output norm^2 = {eta * eta:.4f} deviates from 1",
            NormalizationWarning, stacklevel=2)
    if normalize:
        out.normalize()
    return out, eta


# ----------------------------------------------------------------- DMRG


@dataclass
class GroundStateResult:
    state: MatrixProductState
    energy: float
    trace: list = field(default_factory=list)
    sweeps: int = 0
    converged: bool = False
    discarded: float = 0.0


def _heff_matvec(lenv, w1, w2, renv, theta):
    t = np.tensordot(lenv, theta, axes=([2], [0]))
    t = np.tensordot(t, w1, axes=([1, 2], [0, 3]))
    t = np.tensordot(t, w2, axes=([3, 1], [0, 3]))
    return np.tensordot(t, renv, axes=([1, 3], [2, 1]))


def _solve_bond(lenv, w1, w2, renv, theta0):
    """Lowest eigenpair of the two-site effective Hamiltonian."""
    shape = theta0.shape
    dim = theta0.size
    if dim <= _DENSE_EIG_CUTOFF:
        h = np.einsum("awb,wvst,vukp,cud->askcbtpd",
                      lenv, w1, w2, renv).reshape(dim, dim)
        evals, evecs = np.linalg.eigh(h)
        return float(evals[0]), evecs[:, 0].reshape(shape)

    def mv(x):
        return _heff_matvec(lenv, w1, w2, renv,
                            x.reshape(shape)).reshape(-1)

    opr = LinearOperator((dim, dim), matvec=mv, dtype=complex)
    v0 = theta0.reshape(-1)
    nv = np.linalg.norm(v0)
    v0 = v0 / nv if nv > 0 else None
    try:
        evals, evecs = eigsh(opr, k=1, which="SA", v0=v0,
                             maxiter=max(400, 20 * dim))
    except ArpackNoConvergence as exc:
        raise ConvergenceError("bond eigensolver did not converge") from exc
    return float(evals[0]), evecs[:, 0].reshape(shape)


def dmrg(mpo, dims, chi_max: int, sweeps: int = 12, tol: float = 1e-9,
         eps: float = 1e-12, initial: MatrixProductState | None = None,
         min_sweeps: int = 2) -> GroundStateResult:
    """Two-site ground-state search.

    The energy trace holds one value per half sweep (the last bond
    eigenvalue of that half sweep).  Convergence means two consecutive
    full sweeps changed the energy by less than tol; running out of sweeps
    first raises ConvergenceError carrying the trace.
    """
    dims = tuple(dims)
    n = len(dims)
    if len(mpo) != n:
        raise ParameterError("MPO length does not match dims")
    if n < 2:
        raise ParameterError("need at least two sites")
    if initial is None:
        state = product_state(dims, [0] * n)
    else:
        state = initial.copy()
        if state.dims != dims:
            raise ParameterError("initial state has wrong local dimensions")
    state.move_center(0)

    # fixed boundary environments plus one growing stack per side
    lenvs = [np.ones((1, 1, 1), dtype=complex)] * n
    renvs = [np.ones((1, 1, 1), dtype=complex)] * n
    for i in range(n - 1, 1, -1):
        renvs[i - 1] = _transfer_mpo_right(renvs[i], state.tensors[i],
                                           mpo[i], state.tensors[i])

    trace: list[float] = []
    energy = np.inf
    converged = False
    for sweep in range(sweeps):
        e_prev_sweep = energy
        for direction in ("lr", "rl"):
            bonds = range(n - 1) if direction == "lr" else range(n - 2, -1, -1)
            for b in bonds:
                state.move_center(b if direction == "lr" else b + 1)
                t1, t2 = state.tensors[b], state.tensors[b + 1]
                theta = np.tensordot(t1, t2, axes=([2], [0]))
                energy, theta = _solve_bond(lenvs[b], mpo[b], mpo[b + 1],
                                            renvs[b + 1], theta)
                dl, d1, d2, dr = theta.shape
                u, s, vh, disc = _split_theta(
                    theta.reshape(dl * d1, d2 * dr), chi_max, eps)
                state.discarded += disc
                if direction == "lr":
                    state.tensors[b] = u.reshape(dl, d1, -1)
                    state.tensors[b + 1] = (s[:, None] * vh).reshape(-1, d2, dr)
                    state.center = b + 1
                    lenvs[b + 1] = _transfer_mpo(
                        lenvs[b], state.tensors[b], mpo[b], state.tensors[b])
                else:
                    state.tensors[b] = (u * s).reshape(dl, d1, -1)
                    state.tensors[b + 1] = vh.reshape(-1, d2, dr)
                    state.center = b
                    renvs[b] = _transfer_mpo_right(
                        renvs[b + 1], state.tensors[b + 1], mpo[b + 1],
                        state.tensors[b + 1])
            trace.append(energy)
        if sweep + 1 >= min_sweeps and abs(energy - e_prev_sweep) < tol:
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"DMRG did not converge in {sweeps} sweeps "
            f"(last change {abs(energy - e_prev_sweep):.3e})", trace=trace)
    state.normalize()
    return GroundStateResult(state=state, energy=float(energy), trace=trace,
                             sweeps=sweep + 1, converged=True,
                             discarded=state.discarded)


def _transfer_mpo_right(env, bra_t, w, ket_t):
    # env (bra, mpo, ket) at the right of a site -> left of it
    tmp = np.tensordot(ket_t, env, axes=([2], [2]))          # (b', d', a, w)
    tmp = np.tensordot(tmp, w, axes=([3, 1], [1, 3]))        # (b', a, w_l, d)
    return np.tensordot(bra_t.conj(), tmp, axes=([2, 1], [1, 3])).transpose(0, 2, 1)


# ------------------------------------------------------- time evolution


def evolve(state: MatrixProductState, layers: GateLayers, n_steps: int,
           chi_max: int, eps: float = 1e-10, max_discard: float = 0.05,
           monitor=None, monitor_every: int = 0) -> dict:
    """Second-order Trotter evolution, in place.

    Consecutive steps share their half layers, so the gate pattern is
    even(dt/2) odd(dt) [even(dt) odd(dt)]^(n-1) even(dt/2).  Even layers
    sweep left to right and odd layers right to left, letting the
    orthogonality center ride along with the gates.  The state is
    renormalized once per step; the norm drift and total discarded weight
    are returned.  Exceeding max_discard raises TruncationError.
    """
    if n_steps < 1:
        raise ParameterError("n_steps must be positive")
    if tuple(layers.dims) != state.dims:
        raise ParameterError("gate layers built for a different lattice")
    start_discard = state.discarded
    worst_drift = 0.0

    def run_layer(bonds, gates, absorb):
        for b in bonds:
            state.apply_two_site(gates[b], b, chi_max=chi_max, eps=eps,
                                 absorb=absorb)

    even_lr = sorted(layers.even_bonds)
    odd_rl = sorted(layers.odd_bonds, reverse=True)
    for step in range(n_steps):
        first = step == 0
        last = step == n_steps - 1
        even_open = layers.even_half if first else layers.even_full
        run_layer(even_lr, even_open, "right")
        run_layer(odd_rl, layers.odd_full, "left")
        if last:
            run_layer(even_lr, layers.even_half, "right")
        drift = abs(state.normalize() - 1.0)
        worst_drift = max(worst_drift, drift)
        if state.discarded - start_discard > max_discard:
            raise TruncationError(
                f"discarded weight {state.discarded - start_discard:.3e} "
                f"exceeded {max_discard:.3e} at step {step + 1}")
        if monitor is not None and monitor_every > 0 and (
                (step + 1) % monitor_every == 0 or last):
            monitor(state, step + 1, (step + 1) * layers.dt)
    return {
        "steps": n_steps,
        "discarded": state.discarded - start_discard,
        "norm_drift": worst_drift,
        "max_bond": max(state.bond_dims) if state.n_sites > 1 else 1,
    }


# ---------------------------------------------------------- checkpoints


def save_state(path: str, state: MatrixProductState, metadata: dict | None = None):
    """Write an MPS checkpoint (atomic: temp file + rename)."""
    meta = dict(metadata or {})
    meta["center"] = state.center
    meta["discarded"] = state.discarded
    meta["n_sites"] = state.n_sites
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        with open(tmp, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)
            for t in state.tensors:
                fh.write(struct.pack("<QQQ", *t.shape))
                fh.write(np.ascontiguousarray(t, dtype="<c16").tobytes())
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except OSError as exc:
        raise CheckpointError(f"failed to write checkpoint: {exc}") from exc
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def load_state(path: str):
    """Read an MPS checkpoint; returns (state, metadata)."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CheckpointError(f"failed to read checkpoint: {exc}") from exc
    if len(raw) < len(_MAGIC) + 8 or raw[: len(_MAGIC)] != _MAGIC:
        raise CheckpointError("not an MPS checkpoint (bad magic)")
    off = len(_MAGIC)
    (meta_len,) = struct.unpack_from("<Q", raw, off)
    off += 8
    if off + meta_len > len(raw):
        raise CheckpointError("truncated checkpoint metadata")
    try:
        meta = json.loads(raw[off:off + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError("corrupt checkpoint metadata") from exc
    off += meta_len
    n = meta.get("n_sites")
    if not isinstance(n, int) or n < 1:
        raise CheckpointError("checkpoint metadata lacks a valid n_sites")
    tensors = []
    for _ in range(n):
        if off + 24 > len(raw):
            raise CheckpointError("truncated tensor header")
        dl, d, dr = struct.unpack_from("<QQQ", raw, off)
        off += 24
        nbytes = dl * d * dr * 16
        if off + nbytes > len(raw):
            raise CheckpointError("truncated tensor payload")
        arr = np.frombuffer(raw, dtype="<c16", count=dl * d * dr, offset=off)
        tensors.append(arr.reshape(dl, d, dr).astype(complex))
        off += nbytes
    if off != len(raw):
        raise CheckpointError("trailing bytes after last tensor")
    state = MatrixProductState(tensors, center=int(meta["center"]),
                               discarded=float(meta["discarded"]))
    extra = {k: v for k, v in meta.items()
             if k not in ("center", "discarded", "n_sites")}
    return state, extra
