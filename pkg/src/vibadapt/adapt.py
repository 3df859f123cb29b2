"""Adaptive ansatz growth: screen the pool, select, append, re-optimize.

Each iteration evaluates every pool element's appending gradient at the
current state, stops if the largest magnitude is below threshold (unless
forced), selects per strategy, appends the new element(s) at parameter 0,
and re-optimizes all parameters with BFGS warm-started from the current
point.  Row k of the trace is a full snapshot after k growth steps.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .diagnostics import CnotModel, cnot_count, jacobian_report
from .engine import apply_hamiltonian, energy, kappa_overlap, reference_state
from .hamiltonian import NModeHamiltonian
from .pools import (
    Ansatz,
    OperatorPool,
    ansatz_parameters,
    ansatz_state,
    energy_and_gradient,
    with_parameters,
)
from .traceio import TraceRow
from .vci import solve_fvci

MAX_GRAD = "max"
MAX_GRAD_PLUS_RANDOM = "max+rand"
TOP_TWO = "top2"
STRATEGY_KINDS = (MAX_GRAD, MAX_GRAD_PLUS_RANDOM, TOP_TWO)

STATUS_CONVERGED = "converged"
STATUS_STALLED = "stalled"
STATUS_ITERATION_CAP = "iteration_cap"


@dataclass(frozen=True)
class SelectionStrategy:
    kind: str = MAX_GRAD
    rng_seed: int | None = None

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(
                f"unknown strategy {self.kind!r}; known: {', '.join(STRATEGY_KINDS)}"
            )


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "bfgs"
    gradient_tolerance: float = 1e-9
    max_evaluations: int = 2000

    def __post_init__(self):
        if self.method not in ("bfgs", "l-bfgs-b"):
            raise ValueError(f"unknown optimizer method {self.method!r}")


@dataclass(frozen=True)
class AdaptConfig:
    gradient_threshold: float = 1e-7
    max_iterations: int = 60
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    warm_start: bool = True
    stall_threshold: float = 1e-6
    force_iterations: bool = False

    def __post_init__(self):
        if self.gradient_threshold <= 0:
            raise ValueError("gradient_threshold must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")


def select_operators(strategy: SelectionStrategy, gradients, rng=None) -> list[int]:
    """Indices of the elements to append, per the strategy.

    Ties in the magnitude break to the lowest index, so selection is
    deterministic given the gradients (and the rng state for max+rand).
    """
    mags = np.abs(np.asarray(gradients, dtype=float))
    if mags.size == 0:
        raise ValueError("cannot select from an empty pool")
    best = int(np.argmax(mags))
    if strategy.kind == MAX_GRAD:
        return [best]
    if strategy.kind == TOP_TWO:
        if mags.size < 2:
            raise ValueError("top2 needs at least two pool elements")
        order = sorted(range(mags.size), key=lambda i: (-mags[i], i))
        return order[:2]
    # max+rand: the argmax plus one uniformly random distinct element
    if mags.size < 2:
        raise ValueError("max+rand needs at least two pool elements")
    if rng is None:
        rng = np.random.default_rng(strategy.rng_seed)
    other = int(rng.integers(mags.size - 1))
    if other >= best:
        other += 1
    return [best, other]


def optimize_parameters(h: NModeHamiltonian, a: Ansatz, cfg: OptimizerConfig):
    """Minimize the ansatz energy over all parameters; never worsens it.

    Returns (re-parameterized ansatz, energy).  If the line search cannot
    improve, the incoming parameters and energy are kept.
    """
    if not a.sequence:
        return a, energy(h, ansatz_state(a))
    x0 = ansatz_parameters(a)

    def fun(x):
        return energy_and_gradient(h, a, x)

    e0 = fun(x0)[0]
    if cfg.method == "bfgs":
        res = scipy.optimize.minimize(
            fun,
            x0,
            jac=True,
            method="BFGS",
            options={"gtol": cfg.gradient_tolerance, "maxiter": cfg.max_evaluations},
        )
    else:
        res = scipy.optimize.minimize(
            fun,
            x0,
            jac=True,
            method="L-BFGS-B",
            options={
                "gtol": cfg.gradient_tolerance,
                "maxfun": cfg.max_evaluations,
                "ftol": 1e-15,
            },
        )
    if np.isfinite(res.fun) and res.fun <= e0:
        return with_parameters(a, res.x), float(res.fun)
    return a, float(e0)


def screen_pool(h, psi, elements, workers: int = 1) -> np.ndarray:
    """Appending gradients for every pool element, sharing one H psi."""
    hpsi = apply_hamiltonian(h, psi)
    space = h.space

    def one(elem):
        return sum(2.0 * kappa_overlap(space, op, hpsi, psi) for op in elem.factors)

    if workers <= 1 or len(elements) < 64:
        return np.array([one(e) for e in elements])
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return np.array(list(pool.map(one, elements)))


@dataclass
class AdaptTrace:
    rows: list
    status: str
    pool_kind: str
    strategy_kind: str
    seed: int | None
    reference_energy: float
    fvci_energy: float
    final_max_gradient: float
    ansatz: Ansatz


def run_adapt(
    h: NModeHamiltonian,
    pool: OperatorPool,
    strategy: SelectionStrategy | None = None,
    cfg: AdaptConfig | None = None,
    fvci_energy: float | None = None,
    jacobian: bool = False,
    cnot_model: CnotModel | None = None,
    rank_tol="auto",
    workers: int = 1,
) -> AdaptTrace:
    """Grow the ansatz until the gradient stop, the cap, or forced exhaustion.

    Status: converged if the gradient stop fired with error at most the
    stall threshold, stalled if it fired with a larger error, iteration_cap
    if the cap hit while gradients were still live.  Row 0 records the bare
    reference; row k the state after k growth steps.
    """
    strategy = strategy or SelectionStrategy()
    cfg = cfg or AdaptConfig()
    if pool.size == 0:
        raise ValueError("cannot adapt with an empty pool")
    if fvci_energy is None:
        fvci_energy = solve_fvci(h).energy
    cnot_model = cnot_model or CnotModel()
    rng = np.random.default_rng(strategy.rng_seed)
    space = h.space
    a = Ansatz(space, [])
    psi = reference_state(space)
    e_ref = energy(h, psi)
    e_curr = e_ref

    def snapshot(k, selected):
        rank = None
        if jacobian:
            rank = jacobian_report(a, k=k, tol=rank_tol).rank
        return TraceRow(
            k=k,
            energy=e_curr,
            error_vs_fvci=e_curr - fvci_energy,
            max_gradient_norm=gmax,
            selected_ops=selected,
            n_parameters=len(a.sequence),
            jacobian_rank=rank,
            cnot_cumulative=cnot_count(a, cnot_model),
        )

    grads = screen_pool(h, psi, pool.elements, workers)
    gmax = float(np.max(np.abs(grads)))
    rows = [snapshot(0, "")]
    k = 0
    while True:
        if gmax < cfg.gradient_threshold and not cfg.force_iterations:
            status = _judge(rows[-1].error_vs_fvci, cfg)
            break
        if k >= cfg.max_iterations:
            if gmax < cfg.gradient_threshold:
                status = _judge(rows[-1].error_vs_fvci, cfg)
            else:
                status = STATUS_ITERATION_CAP
            break
        k += 1
        chosen = select_operators(strategy, grads, rng)
        for idx in chosen:
            a.sequence.append((pool.elements[idx], 0.0))
        a, e_curr = optimize_parameters(h, a, cfg.optimizer)
        psi = ansatz_state(a)
        grads = screen_pool(h, psi, pool.elements, workers)
        gmax = float(np.max(np.abs(grads)))
        rows.append(snapshot(k, ";".join(pool.elements[i].element_id for i in chosen)))
    return AdaptTrace(
        rows=rows,
        status=status,
        pool_kind=pool.kind,
        strategy_kind=strategy.kind,
        seed=strategy.rng_seed,
        reference_energy=e_ref,
        fvci_energy=fvci_energy,
        final_max_gradient=gmax,
        ansatz=a,
    )


def _judge(error: float, cfg: AdaptConfig) -> str:
    return STATUS_STALLED if error > cfg.stall_threshold else STATUS_CONVERGED
