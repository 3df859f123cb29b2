"""Configuration-interaction references on the Hartree-product basis.

Subspaces keep every configuration that differs from the reference in at
most max_rank modes; the full space is the exact (FVCI) reference all
errors are measured against.
"""

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .engine import config_ranks
from .hamiltonian import ModeSpace, NModeHamiltonian, dense_matrix

_RESIDUAL_TOL = 1e-10


class NumericalError(RuntimeError):
    """A numerical post-condition failed (residual, convergence, ...)."""


@dataclass(frozen=True)
class VciResult:
    level: object  # excitation-rank cap, or "full"
    energy: float
    ground_vector: np.ndarray  # full configuration space; zero outside the subspace
    subspace_dim: int


def subspace_dimension(space: ModeSpace, max_rank: int) -> int:
    """Count configurations within max_rank excited modes of the reference."""
    total = 0
    for r in range(min(max_rank, space.mode_count) + 1):
        for modes in itertools.combinations(range(space.mode_count), r):
            prod = 1
            for m in modes:
                prod *= space.modal_counts[m] - 1
            total += prod
    return total


def _ground_pair(mat: np.ndarray):
    vals, vecs = scipy.linalg.eigh(mat)
    v = vecs[:, 0]
    lead = int(np.argmax(np.abs(v)))
    if v[lead] < 0:
        v = -v
    residual = float(np.linalg.norm(mat @ v - vals[0] * v))
    if residual > _RESIDUAL_TOL * max(1.0, float(np.max(np.abs(vals)))):
        raise NumericalError(f"eigenpair residual {residual} too large")
    return float(vals[0]), v


def solve_fvci(h: NModeHamiltonian) -> VciResult:
    """Exact ground state by dense diagonalization of the full space."""
    mat = dense_matrix(h)
    val, vec = _ground_pair(mat)
    return VciResult("full", val, vec, h.space.config_dim)


def solve_vci(h: NModeHamiltonian, max_rank: int) -> VciResult:
    """Ground state restricted to configurations of rank <= max_rank.

    The returned vector is embedded in the full space with zeros outside
    the subspace, so engine expectation values apply directly.
    """
    space = h.space
    if not (0 <= max_rank <= space.mode_count):
        raise ValueError(f"max_rank must be in 0..{space.mode_count}, got {max_rank}")
    if max_rank == space.mode_count:
        res = solve_fvci(h)
        return VciResult(max_rank, res.energy, res.ground_vector, res.subspace_dim)
    keep = np.flatnonzero(config_ranks(space) <= max_rank)
    mat = dense_matrix(h)[np.ix_(keep, keep)]
    val, sub = _ground_pair(mat)
    vec = np.zeros(space.config_dim)
    vec[keep] = sub
    return VciResult(max_rank, val, vec, len(keep))
