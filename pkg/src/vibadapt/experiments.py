"""Scripted studies: pool comparison, triple-importance ladder, coupling scan.

Every experiment prepares the system the same way (build or load the
Hamiltonian, solve VSCF, truncate to the modal basis, compute the CI
references), runs the adaptive driver per its plan, writes one trace CSV
per run plus one summary JSON, and returns the summary dict.
"""

import json
import os
from dataclasses import dataclass, field

from .adapt import AdaptConfig, OptimizerConfig, SelectionStrategy, run_adapt
from .diagnostics import CnotModel
from .hamiltonian import (
    NModeHamiltonian,
    build_model_preset,
    load_hamiltonian,
    scale_pair_couplings,
)
from .pools import complete_triples_ordering, generate_pool, harvest_triples_ordering
from .traceio import config_hash, make_metadata, write_summary, write_trace
from .vci import solve_fvci, solve_vci
from .vscf import solve_vscf, to_modal_basis

EXPERIMENT_KINDS = ("pool_comparison", "sdk_ladder", "alpha_scan")

# separates unit-scale tangent directions from optimizer-residual noise
DEFAULT_TRACE_RANK_TOL = 1e-4

DEFAULT_ALPHAS = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass
class ExperimentSpec:
    name: str
    experiment: str
    output_dir: str
    hamiltonian: dict = field(default_factory=lambda: {"preset": "coupled3"})
    modal_counts: object = None  # int, per-mode list, or None for the preset default
    vscf: dict = field(default_factory=dict)
    adapt: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    runs: list = field(default_factory=list)
    alphas: list | None = None
    ks: list | None = None
    seed: int | None = None
    rank_tol: object = DEFAULT_TRACE_RANK_TOL

    def __post_init__(self):
        if self.experiment not in EXPERIMENT_KINDS:
            raise ValueError(
                f"unknown experiment {self.experiment!r}; known: {', '.join(EXPERIMENT_KINDS)}"
            )
        labels = [r.get("label") for r in self.runs]
        if len(set(labels)) != len(labels):
            raise ValueError(f"run labels must be unique: {labels}")

    @classmethod
    def from_json(cls, path) -> "ExperimentSpec":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown experiment spec fields: {sorted(extra)}")
        missing = {"name", "experiment", "output_dir"} - set(data)
        if missing:
            raise ValueError(f"experiment spec missing fields: {sorted(missing)}")
        return cls(**data)

    def config_dict(self) -> dict:
        return {
            "name": self.name,
            "experiment": self.experiment,
            "hamiltonian": self.hamiltonian,
            "modal_counts": self.modal_counts,
            "vscf": self.vscf,
            "adapt": self.adapt,
            "optimizer": self.optimizer,
            "runs": self.runs,
            "alphas": self.alphas,
            "ks": self.ks,
            "seed": self.seed,
            "rank_tol": repr(self.rank_tol),
        }


@dataclass
class PreparedSystem:
    h_primitive: NModeHamiltonian
    h_modal: NModeHamiltonian
    vscf_energy: float
    fvci_energy: float
    vcisd_energy: float
    vcisdt_energy: float

    def references(self) -> dict:
        return {
            "vscf_energy": self.vscf_energy,
            "fvci_energy": self.fvci_energy,
            "vcisd_energy": self.vcisd_energy,
            "vcisdt_energy": self.vcisdt_energy,
            "vcisd_error": self.vcisd_energy - self.fvci_energy,
            "vcisdt_error": self.vcisdt_energy - self.fvci_energy,
        }


def build_hamiltonian(source: dict) -> NModeHamiltonian:
    if "preset" in source:
        return build_model_preset(source["preset"], source.get("params"))
    if "path" in source:
        return load_hamiltonian(source["path"])
    raise ValueError("hamiltonian source needs 'preset' or 'path'")


def default_modal_counts(h: NModeHamiltonian, requested):
    if requested is not None:
        return requested
    if "default_modal_counts" in h.metadata:
        return list(h.metadata["default_modal_counts"])
    return list(h.space.modal_counts)


def prepare_system(h_primitive: NModeHamiltonian, modal_counts=None, vscf_opts=None) -> PreparedSystem:
    vscf_opts = vscf_opts or {}
    res = solve_vscf(
        h_primitive,
        max_iter=int(vscf_opts.get("max_iter", 200)),
        tol=float(vscf_opts.get("tol", 1e-12)),
    )
    hm = to_modal_basis(h_primitive, res, default_modal_counts(h_primitive, modal_counts))
    fvci = solve_fvci(hm)
    vcisd = solve_vci(hm, min(2, hm.space.mode_count))
    vcisdt = solve_vci(hm, min(3, hm.space.mode_count))
    return PreparedSystem(
        h_primitive=h_primitive,
        h_modal=hm,
        vscf_energy=res.vscf_energy,
        fvci_energy=fvci.energy,
        vcisd_energy=vcisd.energy,
        vcisdt_energy=vcisdt.energy,
    )


def _adapt_config(spec: ExperimentSpec, run: dict) -> AdaptConfig:
    merged = dict(spec.adapt)
    merged.update({k: run[k] for k in ("force_iterations", "max_iterations") if k in run})
    opt = OptimizerConfig(
        method=spec.optimizer.get("method", "bfgs"),
        gradient_tolerance=float(spec.optimizer.get("gradient_tolerance", 1e-9)),
        max_evaluations=int(spec.optimizer.get("max_evaluations", 2000)),
    )
    return AdaptConfig(
        gradient_threshold=float(merged.get("gradient_threshold", 1e-7)),
        max_iterations=int(merged.get("max_iterations", 60)),
        optimizer=opt,
        warm_start=bool(merged.get("warm_start", True)),
        stall_threshold=float(merged.get("stall_threshold", 1e-6)),
        force_iterations=bool(merged.get("force_iterations", False)),
    )


def _make_pool(space, pool_name: str, ordering=None, generalized=False):
    if pool_name.startswith("sdk:"):
        k = int(pool_name.split(":", 1)[1])
        if ordering is None:
            raise ValueError("sdk pools need a triples ordering")
        return generate_pool(space, "sd_k", k=k, ordering=ordering, generalized=generalized)
    kind = pool_name.replace("-", "_")
    return generate_pool(space, kind, generalized=generalized)


def stall_onset(rows, threshold: float):
    """First iteration whose screening gradient fell below the threshold."""
    for row in rows:
        if row.max_gradient_norm < threshold:
            return row.k
    return None


def rank_plateau_onset(rows):
    """First iteration from which the recorded Jacobian rank never grows."""
    ranks = [r.jacobian_rank for r in rows if r.jacobian_rank is not None]
    if not ranks:
        return None
    final = ranks[-1]
    onset = None
    for row in rows:
        if row.jacobian_rank is None:
            continue
        if row.jacobian_rank == final and onset is None:
            onset = row.k
        elif row.jacobian_rank != final:
            onset = None
    return onset


def _run_one(spec, system, label, pool, strategy_kind, cfg, jacobian, seed):
    strategy = SelectionStrategy(strategy_kind, rng_seed=seed)
    trace = run_adapt(
        system.h_modal,
        pool,
        strategy,
        cfg,
        fvci_energy=system.fvci_energy,
        jacobian=jacobian,
        rank_tol=spec.rank_tol,
    )
    os.makedirs(spec.output_dir, exist_ok=True)
    trace_name = f"{label}.trace.csv"
    run_config = {
        "experiment": spec.config_dict(),
        "label": label,
        "pool": pool.kind,
        "strategy": strategy_kind,
        "seed": seed,
    }
    write_trace(
        os.path.join(spec.output_dir, trace_name),
        trace.rows,
        {**make_metadata(seed, run_config), "pool": pool.kind, "strategy": strategy_kind, "label": label},
    )
    last = trace.rows[-1]
    return trace, {
        "label": label,
        "pool": pool.kind,
        "strategy": strategy_kind,
        "status": trace.status,
        "n_iterations": last.k,
        "final_energy": last.energy,
        "final_error": last.error_vs_fvci,
        "final_max_gradient": trace.final_max_gradient,
        "cnot_total": last.cnot_cumulative,
        "stall": (
            None
            if (onset := stall_onset(trace.rows, cfg.gradient_threshold)) is None
            else {"k": onset, "max_gradient": trace.rows[onset].max_gradient_norm}
        ),
        "rank_plateau_onset": rank_plateau_onset(trace.rows),
        "trace": trace_name,
    }


DEFAULT_POOL_RUNS = (
    {"label": "sd", "pool": "sd", "strategy": "max", "force_iterations": True, "jacobian": True},
    {"label": "sdt", "pool": "sdt", "strategy": "max"},
)


def run_pool_comparison(spec: ExperimentSpec) -> dict:
    """One adaptive run per pool/strategy on a shared prepared system."""
    system = prepare_system(build_hamiltonian(spec.hamiltonian), spec.modal_counts, spec.vscf)
    runs = spec.runs or [dict(r) for r in DEFAULT_POOL_RUNS]
    entries = []
    ordering = None
    for run in runs:
        pool_name = run.get("pool", "sd")
        if pool_name.startswith("sdk:") and ordering is None:
            raise ValueError("sdk pools in pool_comparison need a prior sdt run in the list")
        pool = _make_pool(
            system.h_modal.space, pool_name, ordering, bool(run.get("generalized", False))
        )
        cfg = _adapt_config(spec, run)
        seed = run.get("seed", spec.seed)
        trace, entry = _run_one(
            spec,
            system,
            run.get("label", pool_name),
            pool,
            run.get("strategy", "max"),
            cfg,
            bool(run.get("jacobian", False)),
            seed,
        )
        if pool.kind == "sdt" and ordering is None:
            ordering = complete_triples_ordering(
                system.h_modal.space,
                harvest_triples_ordering([r.selected_ops for r in trace.rows]),
            )
        entries.append(entry)
    return _write_experiment_summary(spec, system.references(), entries)


def run_sdk_ladder(spec: ExperimentSpec, ks=None) -> dict:
    """SDT once for the importance ordering, then SD(k) runs over the ladder."""
    system = prepare_system(build_hamiltonian(spec.hamiltonian), spec.modal_counts, spec.vscf)
    sdt_pool = generate_pool(system.h_modal.space, "sdt")
    cfg = _adapt_config(spec, {})
    sdt_trace, sdt_entry = _run_one(spec, system, "sdt", sdt_pool, "max", cfg, False, spec.seed)
    ordering = complete_triples_ordering(
        system.h_modal.space,
        harvest_triples_ordering([r.selected_ops for r in sdt_trace.rows]),
    )
    if ks is None:
        ks = spec.ks
    if not ks:
        raise ValueError("sdk_ladder needs a list of k values")
    entries = [sdt_entry]
    for k in ks:
        k = int(k)
        pool = generate_pool(system.h_modal.space, "sd_k", k=k, ordering=ordering)
        _, entry = _run_one(spec, system, f"sdk{k}", pool, "max", cfg, False, spec.seed)
        entry["k"] = k
        entries.append(entry)
    return _write_experiment_summary(spec, system.references(), entries)


def run_alpha_scan(spec: ExperimentSpec, alphas=None) -> dict:
    """Re-prepare and re-run at each coupling scale; references move with alpha."""
    if alphas is None:
        alphas = spec.alphas if spec.alphas is not None else list(DEFAULT_ALPHAS)
    if len(alphas) == 0:
        raise ValueError("alpha_scan needs at least one alpha")
    if len(set(float(a) for a in alphas)) != len(alphas):
        raise ValueError(f"duplicate alpha values: {alphas}")
    h0 = build_hamiltonian(spec.hamiltonian)
    cfg = _adapt_config(spec, {})
    entries = []
    for alpha in alphas:
        alpha = float(alpha)
        system = prepare_system(scale_pair_couplings(h0, alpha), spec.modal_counts, spec.vscf)
        pool = _make_pool(system.h_modal.space, spec.adapt.get("pool", "sd"))
        label = f"alpha{alpha:g}".replace(".", "p")
        _, entry = _run_one(spec, system, label, pool, "max", cfg, False, spec.seed)
        entry["alpha"] = alpha
        entry["references"] = system.references()
        entries.append(entry)
    first_refs = entries[0]["references"]
    return _write_experiment_summary(spec, first_refs, entries)


def _write_experiment_summary(spec: ExperimentSpec, references: dict, entries: list) -> dict:
    summary = {
        "metadata": make_metadata(spec.seed, spec.config_dict()),
        "name": spec.name,
        "experiment": spec.experiment,
        "references": references,
        "runs": entries,
    }
    os.makedirs(spec.output_dir, exist_ok=True)
    write_summary(
        os.path.join(spec.output_dir, "summary.json"), summary, "experiment_summary.schema.json"
    )
    return summary


def run_experiment(spec: ExperimentSpec) -> dict:
    if spec.experiment == "pool_comparison":
        return run_pool_comparison(spec)
    if spec.experiment == "sdk_ladder":
        return run_sdk_ladder(spec)
    return run_alpha_scan(spec)
