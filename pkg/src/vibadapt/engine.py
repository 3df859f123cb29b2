"""Exact statevector operations over the Hartree-product configuration basis.

Configurations are tuples of occupied modal indices, one per mode, ordered
lexicographically with mode 0 varying slowest; index 0 is the reference
(all modes in modal 0).  State vectors are flat float arrays of length
prod(modal_counts) in that ordering.

The exponential of an anti-Hermitian excitation generator acts as a direct
sum of 2x2 plane rotations between configuration pairs that differ exactly
by the generator's moves, because kappa^3 = -kappa on each pair and kappa
annihilates everything else.  That closed form is the fast path; a dense
scaling-and-squaring exponential serves as the oracle.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .hamiltonian import CONFIG_DIM_CAP, ModeSpace, NModeHamiltonian

# Dense-exponential oracle refuses to run past this dimension.
DENSE_ORACLE_CAP = 1000


@dataclass(frozen=True)
class ExcitationOperator:
    """Anti-Hermitian generator tau - tau^dagger for a set of modal moves.

    Each move (mode, frm, to) transfers occupation frm -> to on one mode;
    modes are strictly increasing and every move changes its modal.
    """

    moves: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        moves = tuple((int(m), int(p), int(q)) for m, p, q in self.moves)
        object.__setattr__(self, "moves", moves)
        if not moves:
            raise ValueError("an excitation needs at least one move")
        if any(b[0] <= a[0] for a, b in zip(moves, moves[1:])):
            raise ValueError(f"moves must have strictly increasing modes: {moves}")
        for m, p, q in moves:
            if m < 0 or p < 0 or q < 0:
                raise ValueError(f"negative index in move {(m, p, q)}")
            if p == q:
                raise ValueError(f"move {(m, p, q)} does not change its modal")

    @property
    def rank(self) -> int:
        return len(self.moves)

    @property
    def op_id(self) -> str:
        return ",".join(f"m{m}:{p}>{q}" for m, p, q in self.moves)


def parse_operator_id(text: str) -> ExcitationOperator:
    moves = []
    for part in text.split(","):
        try:
            head, arrow = part.split(":")
            p, q = arrow.split(">")
            if not head.startswith("m"):
                raise ValueError
            moves.append((int(head[1:]), int(p), int(q)))
        except ValueError as exc:
            raise ValueError(f"cannot parse operator id {text!r}") from exc
    return ExcitationOperator(tuple(moves))


def enumerate_configurations(space: ModeSpace) -> np.ndarray:
    """All configurations as an integer array of shape (dim, mode_count)."""
    dim = space.config_dim
    if dim > CONFIG_DIM_CAP:
        raise ValueError(f"configuration dimension {dim} exceeds cap {CONFIG_DIM_CAP}")
    grids = np.meshgrid(*[np.arange(n) for n in space.modal_counts], indexing="ij")
    return np.stack(grids, axis=-1).reshape(dim, space.mode_count)


def config_index(space: ModeSpace, config) -> int:
    return int(np.ravel_multi_index(tuple(int(c) for c in config), space.modal_counts))


def config_ranks(space: ModeSpace) -> np.ndarray:
    """Number of modes excited out of the reference, per configuration."""
    return (enumerate_configurations(space) != 0).sum(axis=1)


def reference_state(space: ModeSpace) -> np.ndarray:
    psi = np.zeros(space.config_dim)
    psi[0] = 1.0
    return psi


def basis_state(space: ModeSpace, config) -> np.ndarray:
    psi = np.zeros(space.config_dim)
    psi[config_index(space, config)] = 1.0
    return psi


def _mode_slices(space: ModeSpace, op: ExcitationOperator):
    """Index tuples selecting the from- and to-blocks of the state tensor.

    Singleton slices rather than bare integers, so the selections are always
    writable views even when every mode is active.
    """
    fr = [slice(None)] * space.mode_count
    to = [slice(None)] * space.mode_count
    for m, p, q in op.moves:
        if m >= space.mode_count:
            raise ValueError(f"move on mode {m} outside space with {space.mode_count} modes")
        if p >= space.modal_counts[m] or q >= space.modal_counts[m]:
            raise ValueError(
                f"move {(m, p, q)} outside modal range 0..{space.modal_counts[m] - 1}"
            )
        fr[m] = slice(p, p + 1)
        to[m] = slice(q, q + 1)
    return tuple(fr), tuple(to)


def apply_hamiltonian(h: NModeHamiltonian, psi: np.ndarray) -> np.ndarray:
    """H @ psi without assembling H, one tensor contraction per active mode."""
    dims = h.space.modal_counts
    if psi.shape != (h.space.config_dim,):
        raise ValueError(f"state length {psi.shape} does not match dimension {h.space.config_dim}")
    pt = psi.reshape(dims)
    out = np.zeros(dims)
    for term in h.terms:
        tmp = pt
        for m, factor in zip(term.active_modes, term.factors):
            tmp = np.moveaxis(np.tensordot(factor, tmp, axes=(1, m)), 0, m)
        out += term.coefficient * tmp
    return out.reshape(-1)


def energy(h: NModeHamiltonian, psi: np.ndarray) -> float:
    return float(psi @ apply_hamiltonian(h, psi))


def rotate_inplace(space: ModeSpace, op: ExcitationOperator, t: float, psi: np.ndarray) -> None:
    """Apply exp(t * kappa) to psi in place via the paired plane rotations."""
    if not psi.flags["C_CONTIGUOUS"]:
        # reshape would copy and the update would be lost
        raise ValueError("in-place rotation needs a contiguous state vector")
    fr, to = _mode_slices(space, op)
    pt = psi.reshape(space.modal_counts)
    a = pt[fr]
    b = pt[to]
    c, s = math.cos(t), math.sin(t)
    keep = np.array(a, copy=True)
    a[...] = c * keep - s * b
    b[...] = s * keep + c * b


def apply_excitation_rotation(
    space: ModeSpace, op: ExcitationOperator, t: float, psi: np.ndarray
) -> np.ndarray:
    """exp(t * kappa) @ psi as a new array."""
    if psi.shape != (space.config_dim,):
        raise ValueError(f"state length {psi.shape} does not match dimension {space.config_dim}")
    out = np.array(psi, dtype=float, copy=True)
    rotate_inplace(space, op, t, out)
    return out


def apply_kappa(space: ModeSpace, op: ExcitationOperator, psi: np.ndarray) -> np.ndarray:
    """kappa @ psi: to-block gets from-amplitudes, from-block gets -to-amplitudes."""
    fr, to = _mode_slices(space, op)
    pt = psi.reshape(space.modal_counts)
    out = np.zeros(space.modal_counts)
    out[to] = pt[fr]
    out[fr] -= pt[to]
    return out.reshape(-1)


def kappa_overlap(
    space: ModeSpace, op: ExcitationOperator, bra: np.ndarray, ket: np.ndarray
) -> float:
    """<bra| kappa |ket> using only the paired blocks."""
    fr, to = _mode_slices(space, op)
    bt = bra.reshape(space.modal_counts)
    kt = ket.reshape(space.modal_counts)
    return float(np.sum(bt[to] * kt[fr]) - np.sum(bt[fr] * kt[to]))


def pool_gradient(h: NModeHamiltonian, psi: np.ndarray, op: ExcitationOperator) -> float:
    """d/dt <psi| e^{-t kappa} H e^{t kappa} |psi> at t = 0, i.e. <psi|[H, kappa]|psi>."""
    hpsi = apply_hamiltonian(h, psi)
    return 2.0 * kappa_overlap(h.space, op, hpsi, psi)


def dense_transfer(space: ModeSpace, mode: int, frm: int, to: int) -> np.ndarray:
    """Configuration-space matrix of the single-mode transfer a^dag_to a_frm.

    frm == to is allowed and yields the occupation projector; that raw form
    backs the operator-identity checks, which need moves an
    ExcitationOperator would reject.
    """
    n = space.modal_counts[mode]
    if not (0 <= frm < n and 0 <= to < n):
        raise ValueError(f"transfer indices {(frm, to)} outside modal range 0..{n - 1}")
    dim = space.config_dim
    idx = np.arange(dim).reshape(space.modal_counts)
    sel_fr = [slice(None)] * space.mode_count
    sel_to = [slice(None)] * space.mode_count
    sel_fr[mode] = slice(frm, frm + 1)
    sel_to[mode] = slice(to, to + 1)
    rows = idx[tuple(sel_to)].ravel()
    cols = idx[tuple(sel_fr)].ravel()
    mat = np.zeros((dim, dim))
    mat[rows, cols] = 1.0
    return mat


def dense_tau(space: ModeSpace, moves) -> np.ndarray:
    """Product of single-mode transfers for an arbitrary move list."""
    out = None
    for mode, frm, to in moves:
        step = dense_transfer(space, mode, frm, to)
        out = step if out is None else step @ out
    if out is None:
        raise ValueError("empty move list")
    return out


def dense_kappa(space: ModeSpace, op: ExcitationOperator) -> np.ndarray:
    tau = dense_tau(space, op.moves)
    return tau - tau.T


def apply_cluster_exponential(space: ModeSpace, generators, psi: np.ndarray) -> np.ndarray:
    """exp(sum_i t_i kappa_i) @ psi by dense scaling-and-squaring (oracle path).

    This is the non-factorized exponential of the summed generator, distinct
    from the product of single-generator rotations.
    """
    dim = space.config_dim
    if dim > DENSE_ORACLE_CAP:
        raise ValueError(f"dimension {dim} exceeds dense oracle cap {DENSE_ORACLE_CAP}")
    total = np.zeros((dim, dim))
    for op, t in generators:
        total += float(t) * dense_kappa(space, op)
    return scipy.linalg.expm(total) @ psi
