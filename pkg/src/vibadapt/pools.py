"""Operator pools and the unitary product ansatz they feed.

Pool elements carry one excitation generator, or two on disjoint modes that
share a single parameter (the decoupled-triple surrogates).  The ansatz is
an ordered product of element exponentials applied to the reference
configuration; the adjoint-style two-sweep pass gives all parameter
derivatives at the cost of two extra state propagations.
"""

from dataclasses import dataclass, field

import numpy as np

from .engine import (
    ExcitationOperator,
    apply_hamiltonian,
    basis_state,
    kappa_overlap,
    parse_operator_id,
    rotate_inplace,
)
from .hamiltonian import ModeSpace, NModeHamiltonian

POOL_KINDS = ("sd", "sdt", "sd_decoupled", "sd_k")


@dataclass(frozen=True)
class PoolElement:
    """One shared parameter driving one or two excitation rotations.

    Two-factor elements act on disjoint modes; the factor order is the
    application order (two-body first by construction).
    """

    factors: tuple[ExcitationOperator, ...]

    def __post_init__(self):
        factors = tuple(self.factors)
        object.__setattr__(self, "factors", factors)
        if not (1 <= len(factors) <= 2):
            raise ValueError("a pool element has one or two factors")
        if len(factors) == 2:
            a = {m for m, _, _ in factors[0].moves}
            b = {m for m, _, _ in factors[1].moves}
            if a & b:
                raise ValueError(f"composite factors must act on disjoint modes: {a & b}")
            if len(a) + len(b) > 3:
                raise ValueError("composite elements cover at most three modes")

    @property
    def element_id(self) -> str:
        return "*".join(f.op_id for f in self.factors)

    @property
    def n_parameters(self) -> int:
        return 1


def parse_element_id(text: str) -> PoolElement:
    return PoolElement(tuple(parse_operator_id(p) for p in text.split("*")))


@dataclass(frozen=True)
class OperatorPool:
    kind: str
    elements: tuple[PoolElement, ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [e.element_id for e in self.elements]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate pool elements")

    @property
    def size(self) -> int:
        return len(self.elements)


def _single_ops(space: ModeSpace, generalized: bool):
    ops = []
    for m in range(space.mode_count):
        n = space.modal_counts[m]
        if generalized:
            pairs = [(p, q) for p in range(n) for q in range(p + 1, n)]
        else:
            pairs = [(0, a) for a in range(1, n)]
        for p, q in pairs:
            ops.append(ExcitationOperator(((m, p, q),)))
    return ops


def _double_ops(space: ModeSpace):
    ops = []
    m_count = space.mode_count
    for m1 in range(m_count):
        for m2 in range(m1 + 1, m_count):
            for a in range(1, space.modal_counts[m1]):
                for b in range(1, space.modal_counts[m2]):
                    ops.append(ExcitationOperator(((m1, 0, a), (m2, 0, b))))
    return ops


def _triple_ops(space: ModeSpace):
    ops = []
    m_count = space.mode_count
    for m1 in range(m_count):
        for m2 in range(m1 + 1, m_count):
            for m3 in range(m2 + 1, m_count):
                for a in range(1, space.modal_counts[m1]):
                    for b in range(1, space.modal_counts[m2]):
                        for c in range(1, space.modal_counts[m3]):
                            ops.append(
                                ExcitationOperator(((m1, 0, a), (m2, 0, b), (m3, 0, c)))
                            )
    return ops


def generate_pool(
    space: ModeSpace,
    kind: str,
    generalized: bool = False,
    k: int | None = None,
    ordering=None,
) -> OperatorPool:
    """Build a deterministic pool of the requested kind.

    sd: reference-rooted singles and doubles (generalized widens singles).
    sdt: sd plus all triples.
    sd_decoupled: sd plus shared-parameter products of a double and a
        single on the remaining disjoint mode.
    sd_k: sd plus the first k triples of an externally supplied importance
        ordering (e.g. harvested from an sdt run's selection order).
    """
    if kind not in POOL_KINDS:
        raise ValueError(f"unknown pool kind {kind!r}; known: {', '.join(POOL_KINDS)}")
    singles = [PoolElement((op,)) for op in _single_ops(space, generalized)]
    doubles = [PoolElement((op,)) for op in _double_ops(space)]
    elements = singles + doubles
    meta = {"kind": kind, "generalized": bool(generalized)}
    if kind == "sdt":
        elements += [PoolElement((op,)) for op in _triple_ops(space)]
    elif kind == "sd_decoupled":
        for d in _double_ops(space):
            pair = {m for m, _, _ in d.moves}
            for s in _single_ops(space, generalized):
                if {m for m, _, _ in s.moves} & pair:
                    continue
                elements.append(PoolElement((d, s)))
    elif kind == "sd_k":
        if ordering is None:
            raise ValueError("sd_k needs an importance ordering of triples")
        if k is None or k < 0:
            raise ValueError("sd_k needs k >= 0")
        if k > len(ordering):
            raise ValueError(f"k={k} exceeds ordering length {len(ordering)}")
        for elem in ordering[:k]:
            if len(elem.factors) != 1 or elem.factors[0].rank != 3:
                raise ValueError(f"ordering entries must be bare triples: {elem.element_id}")
        elements += list(ordering[:k])
        meta["k"] = int(k)
    return OperatorPool(kind, tuple(elements), meta)


def harvest_triples_ordering(selected_ops_column) -> list[PoolElement]:
    """Importance ordering: first-appearance order of bare triples in a run.

    Input is the per-iteration selected_ops strings of a finished trace
    (semicolon-joined element ids).
    """
    seen = set()
    order = []
    for cell in selected_ops_column:
        if not cell:
            continue
        for eid in cell.split(";"):
            elem = parse_element_id(eid)
            if len(elem.factors) == 1 and elem.factors[0].rank == 3 and eid not in seen:
                seen.add(eid)
                order.append(elem)
    return order


def complete_triples_ordering(space: ModeSpace, order) -> list[PoolElement]:
    """Extend an importance ordering with the never-selected triples.

    Triples a run never touched rank last; they follow in canonical pool
    order, so k can range up to the full triple count.
    """
    seen = {e.element_id for e in order}
    out = list(order)
    for op in _triple_ops(space):
        elem = PoolElement((op,))
        if elem.element_id not in seen:
            out.append(elem)
    return out


# --------------------------------------------------------------------- ansatz


@dataclass
class Ansatz:
    """Ordered product of element rotations applied to a reference config."""

    space: ModeSpace
    sequence: list  # list[tuple[PoolElement, float]]
    reference: tuple[int, ...] | None = None

    def copy(self) -> "Ansatz":
        return Ansatz(self.space, list(self.sequence), self.reference)


def ansatz_parameters(a: Ansatz) -> np.ndarray:
    return np.array([t for _, t in a.sequence], dtype=float)


def with_parameters(a: Ansatz, params) -> Ansatz:
    params = np.asarray(params, dtype=float)
    if params.shape != (len(a.sequence),):
        raise ValueError(f"expected {len(a.sequence)} parameters, got {params.shape}")
    return Ansatz(
        a.space, [(e, float(t)) for (e, _), t in zip(a.sequence, params)], a.reference
    )


def reference_vector(a: Ansatz) -> np.ndarray:
    config = a.reference if a.reference is not None else (0,) * a.space.mode_count
    return basis_state(a.space, config)


def flat_factors(a: Ansatz):
    """(operator, parameter index) in application order; composites share."""
    flat = []
    for i, (elem, _) in enumerate(a.sequence):
        for op in elem.factors:
            flat.append((op, i))
    return flat


def ansatz_state(a: Ansatz) -> np.ndarray:
    psi = reference_vector(a)
    for elem, t in a.sequence:
        for op in elem.factors:
            rotate_inplace(a.space, op, t, psi)
    return psi


def energy_and_gradient(h: NModeHamiltonian, a: Ansatz, params=None):
    """Energy and its full parameter gradient in two sweeps.

    Forward: psi = prod exp(t nu kappa nu) |ref>.  Backward: peel one
    rotation at a time off both psi and H psi; at each step the current
    pair gives d E / d t_nu = 2 <H psi | kappa_nu | psi> evaluated in the
    frame where later rotations have been undone.  Composite factors add
    their contributions into the shared parameter slot.
    """
    space = a.space
    flat = flat_factors(a)
    if params is None:
        params = ansatz_parameters(a)
    else:
        params = np.asarray(params, dtype=float)
        if params.shape != (len(a.sequence),):
            raise ValueError(f"expected {len(a.sequence)} parameters, got {params.shape}")
    u = reference_vector(a)
    for op, i in flat:
        rotate_inplace(space, op, params[i], u)
    w = apply_hamiltonian(h, u)
    e = float(u @ w)
    grad = np.zeros(len(a.sequence))
    for op, i in reversed(flat):
        grad[i] += 2.0 * kappa_overlap(space, op, w, u)
        rotate_inplace(space, op, -params[i], u)
        rotate_inplace(space, op, -params[i], w)
    return e, grad


def ansatz_gradient(h: NModeHamiltonian, a: Ansatz) -> np.ndarray:
    return energy_and_gradient(h, a)[1]


def element_gradients(h: NModeHamiltonian, psi: np.ndarray, elements, hpsi=None) -> np.ndarray:
    """Pool-screening gradients d E / d t at t = 0 for appending each element.

    Reuses H psi across the whole pool; a composite element's gradient is
    the sum of its factor gradients (the shared parameter drives both).
    """
    if hpsi is None:
        hpsi = apply_hamiltonian(h, psi)
    out = np.empty(len(elements))
    for j, elem in enumerate(elements):
        out[j] = sum(2.0 * kappa_overlap(h.space, op, hpsi, psi) for op in elem.factors)
    return out
