"""Structural diagnostics: parameter Jacobians, circuit-cost accounting,
operator-identity checks, the group-commutator expansion, and exact
disentangling of a statevector into a product of excitation rotations.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .engine import (
    DENSE_ORACLE_CAP,
    ExcitationOperator,
    apply_kappa,
    config_ranks,
    dense_kappa,
    dense_tau,
    enumerate_configurations,
    rotate_inplace,
)
from .hamiltonian import ModeSpace
from .pools import Ansatz, flat_factors, reference_vector

DEFAULT_ABS_RANK_TOL = 1e-10


class DisentangleError(RuntimeError):
    """The elimination procedure cannot proceed or did not converge."""


# ----------------------------------------------------------------- CNOT model


@dataclass
class CnotModel:
    """Two-qubit-gate cost per excitation rank.

    The default charges 2(2r-1) * 2^(2r-1) per rank-r rotation; a table
    overrides it (e.g. for alternative synthesis schemes).
    """

    table: dict | None = None

    def cost(self, rank: int) -> int:
        if rank < 1:
            raise ValueError(f"rank must be >= 1, got {rank}")
        if self.table is not None:
            if rank not in self.table:
                raise ValueError(f"cost table has no entry for rank {rank}")
            return int(self.table[rank])
        return 2 * (2 * rank - 1) * 2 ** (2 * rank - 1)

    @classmethod
    def from_table(cls, mapping) -> "CnotModel":
        table = {int(k): int(v) for k, v in dict(mapping).items()}
        if not table:
            raise ValueError("empty cost table")
        ranks = sorted(table)
        if any(table[r] <= 0 for r in ranks):
            raise ValueError("costs must be positive")
        if any(table[a] > table[b] for a, b in zip(ranks, ranks[1:])):
            raise ValueError("costs must be nondecreasing in rank")
        return cls(table)


def cnot_count(a: Ansatz, model: CnotModel | None = None) -> int:
    """Total two-qubit-gate charge of the ansatz; composites charge both factors."""
    model = model or CnotModel()
    return sum(model.cost(op.rank) for elem, _ in a.sequence for op in elem.factors)


# ------------------------------------------------------------------- Jacobian


def compute_jacobian(a: Ansatz) -> np.ndarray:
    """State derivative per parameter: columns d psi / d t_i.

    Forward accumulation: walk the rotation product once; each factor first
    rotates all previously built columns (later rotations act on earlier
    derivatives), then contributes kappa applied to the current state into
    its parameter's column.
    """
    space = a.space
    flat = flat_factors(a)
    n = len(a.sequence)
    u = reference_vector(a)
    cols = [np.zeros(space.config_dim) for _ in range(n)]
    built = []
    for op, i in flat:
        t = a.sequence[i][1]
        for j in built:
            rotate_inplace(space, op, t, cols[j])
        rotate_inplace(space, op, t, u)
        cols[i] += apply_kappa(space, op, u)
        if i not in built:
            built.append(i)
    if n == 0:
        return np.zeros((space.config_dim, 0))
    return np.column_stack(cols)


def numerical_rank(mat: np.ndarray, tol="auto") -> int:
    """Singular values above the threshold; "auto" scales machine epsilon
    by the larger matrix dimension and the largest singular value."""
    if mat.size == 0:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    if tol == "auto":
        thr = max(mat.shape) * np.finfo(float).eps * (s[0] if len(s) else 0.0)
    else:
        thr = float(tol)
    return int(np.sum(s > thr))


@dataclass(frozen=True)
class JacobianReport:
    k: int
    rank: int
    expected_rank: int
    is_critical: bool
    singular_values: np.ndarray


def jacobian_report(a: Ansatz, k: int | None = None, tol="auto") -> JacobianReport:
    """Rank the parameter Jacobian and compare to the generic expectation
    min(n_parameters, dim - 1); a shortfall marks a critical point."""
    mat = compute_jacobian(a)
    s = np.linalg.svd(mat, compute_uv=False) if mat.size else np.zeros(0)
    if tol == "auto":
        thr = max(mat.shape) * np.finfo(float).eps * (s[0] if len(s) else 0.0)
    else:
        thr = float(tol)
    rank = int(np.sum(s > thr))
    expected = min(len(a.sequence), a.space.config_dim - 1)
    return JacobianReport(
        k=len(a.sequence) if k is None else int(k),
        rank=rank,
        expected_rank=expected,
        is_critical=rank < expected,
        singular_values=s,
    )


# ---------------------------------------------------------- operator identities


def _kappa_from_moves(space: ModeSpace, moves) -> np.ndarray:
    tau = dense_tau(space, moves)
    return tau - tau.T


def elementary_commutator_deviation(space: ModeSpace, first, second) -> float:
    """Max-abs deviation of [E^m_{a->b}, E^l_{c->d}] from its closed form:
    zero across modes, and E_{c->b} delta_ad - E_{a->d} delta_bc on a mode."""
    m, a, b = first
    l, c, d = second
    ea = dense_tau(space, [(m, a, b)])
    eb = dense_tau(space, [(l, c, d)])
    lhs = ea @ eb - eb @ ea
    if l != m:
        rhs = np.zeros_like(lhs)
    else:
        rhs = np.zeros_like(lhs)
        if a == d:
            rhs += dense_tau(space, [(m, c, b)])
        if b == c:
            rhs -= dense_tau(space, [(m, a, d)])
    return float(np.max(np.abs(lhs - rhs)))


def decomposition_deviation(space: ModeSpace, modes, indices, enforce: bool = True) -> dict:
    """Check both three-body decompositions on dense matrices.

    modes = (l, m, n) distinct; indices = (i, a, j, b, k, c, alpha) with the
    moves i->a on l, j->b on m, k->c on n, and alpha the pass-through modal
    on m.  Validity needs i != a, k != c, and {j, b, alpha} pairwise
    distinct; enforce=False skips that check so violations can be probed.

    Returns max-abs deviations for the generalized two-body route and the
    nested reference-rooted route.
    """
    l, m, n = modes
    if len({l, m, n}) != 3:
        raise ValueError(f"modes must be distinct: {modes}")
    i, a, j, b, k, c, alpha = indices
    if enforce:
        if i == a or k == c:
            raise ValueError("moves must change their modal")
        if len({j, b, alpha}) != 3:
            raise ValueError(
                f"pass-through modal must differ from both endpoints: j={j}, b={b}, alpha={alpha}"
            )
    kappa3 = _kappa_from_moves(space, [(l, i, a), (m, j, b), (n, k, c)])
    outer = _kappa_from_moves(space, [(l, i, a), (m, j, alpha)])
    right = _kappa_from_moves(space, [(m, alpha, b), (n, k, c)])
    generalized = kappa3 + (outer @ right - right @ outer)
    one_body = _kappa_from_moves(space, [(m, j, alpha)])
    two_body = _kappa_from_moves(space, [(m, j, b), (n, k, c)])
    inner = one_body @ two_body - two_body @ one_body
    nested = kappa3 + (outer @ inner - inner @ outer)
    return {
        "generalized": float(np.max(np.abs(generalized))),
        "nested": float(np.max(np.abs(nested))),
    }


def verify_decomposition_identities(trials: int = 100, rng=None) -> float:
    """Randomized check of the elementary and three-body identities.

    Returns the worst deviation over all trials; exact identities, so
    anything above round-off is a bug.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    worst = 0.0
    for _ in range(trials):
        sizes = tuple(int(rng.integers(3, 5)) for _ in range(3))
        space = ModeSpace(3, sizes, sizes)
        l, m, n = (int(x) for x in rng.permutation(3))
        i, a = (int(x) for x in rng.choice(sizes[l], size=2, replace=False))
        j, b, alpha = (int(x) for x in rng.choice(sizes[m], size=3, replace=False))
        k, c = (int(x) for x in rng.choice(sizes[n], size=2, replace=False))
        dev = decomposition_deviation(space, (l, m, n), (i, a, j, b, k, c, alpha))
        worst = max(worst, dev["generalized"], dev["nested"])
        mode1 = int(rng.integers(3))
        mode2 = mode1 if rng.random() < 0.5 else int(rng.integers(3))
        e1 = tuple(int(x) for x in rng.integers(0, sizes[mode1], size=2))
        e2 = tuple(int(x) for x in rng.integers(0, sizes[mode2], size=2))
        worst = max(
            worst,
            elementary_commutator_deviation(space, (mode1, *e1), (mode2, *e2)),
        )
    return worst


# ------------------------------------------------------- commutator expansion


def commutator_expansion_deviation(
    space: ModeSpace,
    op_a: ExcitationOperator,
    op_b: ExcitationOperator,
    scale: float = 0.5,
    n_group: int = 1,
) -> float:
    """Frobenius distance between the N-fold group-commutator product and
    exp([tA, tB]).

    The product (e^{A/sqrt(N)} e^{B/sqrt(N)} e^{-A/sqrt(N)} e^{-B/sqrt(N)})^N
    converges to the commutator exponential as N grows; for generators on
    disjoint modes both sides are exactly the identity.
    """
    if n_group < 1:
        raise ValueError(f"n_group must be >= 1, got {n_group}")
    if space.config_dim > DENSE_ORACLE_CAP:
        raise ValueError(f"dimension {space.config_dim} exceeds {DENSE_ORACLE_CAP}")
    mat_a = scale * dense_kappa(space, op_a)
    mat_b = scale * dense_kappa(space, op_b)
    target = scipy.linalg.expm(mat_a @ mat_b - mat_b @ mat_a)
    root = math.sqrt(n_group)
    ea = scipy.linalg.expm(mat_a / root)
    eb = scipy.linalg.expm(mat_b / root)
    # generators are antisymmetric, so each inverse is the transpose
    group = ea @ eb @ ea.T @ eb.T
    prod = np.linalg.matrix_power(group, n_group)
    return float(np.linalg.norm(prod - target, "fro"))


# ----------------------------------------------------------------- disentangle


@dataclass
class DisentangleResult:
    """Sequence is in application order: rotating the reference by each
    (operator, amplitude) in turn reconstructs the target up to global sign."""

    sequence: list
    stage_residuals: dict = field(default_factory=dict)
    overlap: float = 0.0
    final_state: np.ndarray | None = None


def disentangle(
    space: ModeSpace,
    target: np.ndarray,
    ordering: str = "lex",
    tol: float = 1e-12,
    ref_floor: float = 1e-12,
    max_sweeps: int = 2000,
) -> DisentangleResult:
    """Peel a normalized statevector down to the reference configuration by
    plane rotations rooted at the reference, rank stage by rank stage.

    Stage r repeats sweeps over all configurations of rank <= r (rank-major
    order) until every amplitude at those ranks is below tol: a rotation
    eliminating a rank-r amplitude can push weight back into lower ranks
    through its paired configurations, so each stage iterates to a joint
    fixed point before moving on.  Every elimination strictly grows the
    reference amplitude (|c_ref| <- sqrt(c_ref^2 + c^2)), which forces the
    sweeps to terminate.  Amplitudes are arctan(c / c_ref), so repeated
    visits to the same configuration are allowed and expected.
    """
    if ordering not in ("lex", "magnitude"):
        raise ValueError(f"unknown ordering {ordering!r}")
    state = np.array(target, dtype=float, copy=True).reshape(-1)
    if state.shape != (space.config_dim,):
        raise ValueError(f"target length {state.shape} does not match {space.config_dim}")
    norm = float(np.linalg.norm(state))
    if norm == 0.0:
        raise ValueError("target is the zero vector")
    state /= norm
    if abs(state[0]) < ref_floor:
        raise DisentangleError(
            f"reference amplitude {state[0]:.3e} below floor {ref_floor:.0e}"
        )
    ranks = config_ranks(space)
    configs = enumerate_configurations(space)
    by_rank = {r: np.flatnonzero(ranks == r) for r in range(1, space.mode_count + 1)}
    removal = []
    stage_residuals = {}
    for stage in range(1, space.mode_count + 1):
        active = np.concatenate([by_rank[r] for r in range(1, stage + 1)])
        for _ in range(max_sweeps):
            live = active[np.abs(state[active]) > tol]
            if live.size == 0:
                break
            if ordering == "magnitude":
                live = live[np.argsort(-np.abs(state[live]), kind="stable")]
            for ci in live:
                amp = float(state[ci])
                if abs(amp) <= tol:
                    continue
                if abs(state[0]) < ref_floor:
                    raise DisentangleError(
                        f"reference amplitude vanished while clearing configuration {tuple(configs[ci])}"
                    )
                t = math.atan(amp / float(state[0]))
                op = ExcitationOperator(
                    tuple((m, 0, int(configs[ci][m])) for m in range(space.mode_count) if configs[ci][m] != 0)
                )
                rotate_inplace(space, op, -t, state)
                removal.append((op, t))
        else:
            raise DisentangleError(f"stage {stage} did not converge in {max_sweeps} sweeps")
        stage_residuals[stage] = float(np.max(np.abs(state[active])))
    sequence = [(op, t) for op, t in reversed(removal)]
    return DisentangleResult(
        sequence=sequence,
        stage_residuals=stage_residuals,
        overlap=float(abs(state[0])),
        final_state=state,
    )
