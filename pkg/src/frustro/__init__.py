"""Photon transport through a frustrated two-bath spin impurity.

Subpackages split along the pipeline: bath discretization and chain
mapping (bath), folded lattice Hamiltonians (lattice), the MPS engine
(mps), wavepacket scattering runs (scattering), closed-form elastic and
inelastic predictions (analytics), and batch orchestration (runner, cli).
"""

__version__ = "0.1.0"

from . import analytics, bath, lattice, mps, runner, scattering
from .errors import FrustroError

__all__ = [
    "analytics",
    "bath",
    "lattice",
    "mps",
    "runner",
    "scattering",
    "FrustroError",
    "__version__",
]
