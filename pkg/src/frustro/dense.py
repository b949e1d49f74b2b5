"""Dense miniature oracles.

Exact state-vector assemblies of the lattice model, its MPO, and an MPS,
for cross-checking the tensor-network engine on systems small enough to
diagonalize.  Nothing here scales; callers guard the total dimension.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError
from .lattice import LatticeModel

__all__ = [
    "dense_hamiltonian",
    "dense_mpo_matrix",
    "dense_state",
    "embed_two_site",
]

MAX_DENSE_DIM = 4096


def _total_dim(dims):
    total = 1
    for d in dims:
        total *= d
    if total > MAX_DENSE_DIM:
        raise ParameterError(
            f"dense assembly limited to dimension {MAX_DENSE_DIM}, got {total}"
        )
    return total


def embed_two_site(op: np.ndarray, dims, b: int) -> np.ndarray:
    """Embed a two-site operator acting on sites (b, b+1) into the chain."""
    total = _total_dim(dims)
    left = int(np.prod(dims[:b], dtype=int))
    right = int(np.prod(dims[b + 2:], dtype=int))
    out = np.kron(np.kron(np.eye(left), op), np.eye(right))
    assert out.shape == (total, total)
    return out


def dense_hamiltonian(model: LatticeModel) -> np.ndarray:
    """Sum of the embedded bond Hamiltonians (on-site terms included)."""
    total = _total_dim(model.dims)
    h = np.zeros((total, total), dtype=complex)
    for b in range(model.n_sites - 1):
        dl, dr = model.dims[b], model.dims[b + 1]
        h += embed_two_site(model.bond_hamiltonian(b).reshape(dl * dr, dl * dr),
                            model.dims, b)
    return h


def dense_mpo_matrix(tensors) -> np.ndarray:
    """Contract MPO tensors (left, right, bra, ket) to one dense matrix."""
    dims = [w.shape[2] for w in tensors]
    _total_dim(dims)
    # running contraction: env[r, bra..., ket...] flattened as (r, D, D)
    env = tensors[0].reshape(tensors[0].shape[1], dims[0], dims[0])
    for w in tensors[1:]:
        d = w.shape[2]
        env = np.einsum("lBK,lrbk->rBbKk", env, w)
        big = env.shape[1] * d
        env = env.reshape(env.shape[0], big, big)
    if env.shape[0] != 1:
        raise ParameterError("MPO does not terminate in a single virtual state")
    return env[0]


def dense_state(tensors) -> np.ndarray:
    """Contract MPS tensors (left, phys, right) to one state vector."""
    dims = [a.shape[1] for a in tensors]
    _total_dim(dims)
    vec = tensors[0].reshape(-1, tensors[0].shape[2])
    for a in tensors[1:]:
        vec = np.tensordot(vec, a, axes=([1], [0]))
        vec = vec.reshape(-1, a.shape[2])
    if vec.shape[1] != 1:
        raise ParameterError("MPS does not terminate in a single virtual state")
    return vec[:, 0]
