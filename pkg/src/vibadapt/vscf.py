"""Vibrational self-consistent field: mean-field modals for product terms.

Each sweep replaces every mode's modal set with the eigenvectors of that
mode's effective operator, built by contracting all other active modes of
each term with their current ground modals (Gauss-Seidel style: updates
within a sweep see earlier updates).
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .hamiltonian import ModeSpace, NModeHamiltonian, make_term


@dataclass(frozen=True)
class VscfResult:
    modal_coefficients: tuple[np.ndarray, ...]
    vscf_energy: float
    iterations: int
    converged: bool


def _fix_column_signs(vecs: np.ndarray) -> np.ndarray:
    """Make each column's largest-magnitude entry positive (deterministic)."""
    out = np.array(vecs, copy=True)
    for j in range(out.shape[1]):
        lead = int(np.argmax(np.abs(out[:, j])))
        if out[lead, j] < 0:
            out[:, j] = -out[:, j]
    return out


def _ground_expectations(h, grounds):
    """Per-term list of <0_m|F_m|0_m> for every active mode."""
    vals = []
    for term in h.terms:
        vals.append(
            [float(grounds[m] @ f @ grounds[m]) for m, f in zip(term.active_modes, term.factors)]
        )
    return vals


def hartree_product_energy(h: NModeHamiltonian, grounds) -> float:
    """Expectation value of the Hartree product of the given ground modals."""
    total = 0.0
    for term, vals in zip(h.terms, _ground_expectations(h, grounds)):
        total += term.coefficient * float(np.prod(vals))
    return total


def solve_vscf(
    h: NModeHamiltonian,
    max_iter: int = 200,
    tol: float = 1e-12,
    initial=None,
    mode_order=None,
) -> VscfResult:
    """Sweep modes until the Hartree-product energy change drops below tol.

    The converged modals are eigenvalue-ordered columns; sign convention
    makes the largest-magnitude entry of each column positive, so repeated
    runs and permuted sweep orders agree to floating-point noise.
    """
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    space = h.space
    dims = space.modal_counts
    order = list(range(space.mode_count)) if mode_order is None else [int(m) for m in mode_order]
    if sorted(order) != list(range(space.mode_count)):
        raise ValueError(f"mode_order must be a permutation of 0..{space.mode_count - 1}")
    if initial is None:
        coeffs = [np.eye(n) for n in dims]
    else:
        coeffs = [np.array(c, dtype=float, copy=True) for c in initial]
        for m, c in enumerate(coeffs):
            if c.shape != (dims[m], dims[m]):
                raise ValueError(f"initial modals for mode {m} have shape {c.shape}")
    grounds = [c[:, 0].copy() for c in coeffs]

    e_prev = hartree_product_energy(h, grounds)
    e_curr = e_prev
    converged = False
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        for m in order:
            eff = np.zeros((dims[m], dims[m]))
            for term in h.terms:
                if m not in term.active_modes:
                    continue
                weight = term.coefficient
                fm = None
                for mode, factor in zip(term.active_modes, term.factors):
                    if mode == m:
                        fm = factor
                    else:
                        weight *= float(grounds[mode] @ factor @ grounds[mode])
                eff += weight * fm
            _, vecs = scipy.linalg.eigh(eff)
            vecs = _fix_column_signs(vecs)
            coeffs[m] = vecs
            grounds[m] = vecs[:, 0].copy()
        e_curr = hartree_product_energy(h, grounds)
        if abs(e_curr - e_prev) < tol:
            converged = True
            break
        e_prev = e_curr

    frozen = []
    for c in coeffs:
        c = np.ascontiguousarray(c)
        c.setflags(write=False)
        frozen.append(c)
    return VscfResult(tuple(frozen), float(e_curr), sweeps, converged)


def to_modal_basis(h: NModeHamiltonian, result: VscfResult, modal_counts) -> NModeHamiltonian:
    """Rotate every factor into the VSCF modal basis and truncate.

    The returned Hamiltonian lives in the truncated modal space: its basis
    sizes are the retained modal counts, and factor matrices are the
    congruence-transformed blocks C^T F C restricted to the kept columns.
    """
    space = h.space
    if isinstance(modal_counts, int):
        counts = [modal_counts] * space.mode_count
    else:
        counts = [int(n) for n in modal_counts]
    if len(counts) != space.mode_count:
        raise ValueError("one modal count per mode required")
    for m, n in enumerate(counts):
        if n < 2:
            raise ValueError(f"modal count for mode {m} must be >= 2, got {n}")
        if n > space.modal_counts[m]:
            raise ValueError(
                f"modal count {n} for mode {m} exceeds basis size {space.modal_counts[m]}"
            )
    new_space = ModeSpace(space.mode_count, tuple(counts), tuple(counts))
    new_terms = []
    for term in h.terms:
        factors = []
        for m, f in zip(term.active_modes, term.factors):
            c = result.modal_coefficients[m][:, : counts[m]]
            x = c.T @ f @ c
            factors.append((x + x.T) / 2.0)
        new_terms.append(make_term(new_space, term.active_modes, term.coefficient, factors))
    meta = dict(h.metadata)
    meta["basis"] = "vscf_modal"
    meta["modal_counts"] = list(counts)
    return NModeHamiltonian(new_space, tuple(new_terms), meta)
