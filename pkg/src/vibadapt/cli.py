"""Command-line entry point.

Subcommands: ham, vscf, vci, adapt, verify, experiment.  Exit codes:
0 success, 1 validation/usage error, 2 numerical failure.  Every file
output carries a metadata block (tool, version, seed, config hash) and
all randomness flows from --seed, so repeated runs are byte-identical.
"""

import argparse
import json
import os
import sys

import jsonschema
import numpy as np

from . import __version__
from .adapt import (
    STRATEGY_KINDS,
    AdaptConfig,
    OptimizerConfig,
    SelectionStrategy,
    run_adapt,
)
from .diagnostics import (
    CnotModel,
    commutator_expansion_deviation,
    disentangle,
    verify_decomposition_identities,
)
from .engine import ExcitationOperator
from .experiments import ExperimentSpec, prepare_system, run_experiment
from .hamiltonian import (
    MODEL_PRESETS,
    ModeSpace,
    build_model_preset,
    load_hamiltonian,
    restrict_mc_level,
    save_hamiltonian,
    scale_pair_couplings,
)
from .pools import complete_triples_ordering, generate_pool, harvest_triples_ordering
from .traceio import make_metadata, read_trace, write_summary, write_trace
from .vci import solve_fvci, solve_vci, subspace_dimension
from .vscf import solve_vscf, to_modal_basis

IDENTITY_TOL = 1e-13
DISENTANGLE_TOL = 1e-10
EXPANSION_GROUP_SIZES = (1, 4, 16, 64)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as exit code 1, not 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# --------------------------------------------------------------- shared flags


def _add_source_flags(p):
    p.add_argument("--preset", choices=sorted(MODEL_PRESETS), help="built-in model name")
    p.add_argument(
        "--param",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a preset parameter (repeatable)",
    )
    p.add_argument("--ham", metavar="PATH", help="Hamiltonian JSON file")


def _add_modal_flags(p):
    p.add_argument(
        "--modals",
        metavar="N[,N...]",
        help="modal counts per mode (single int broadcasts); default from the model",
    )
    p.add_argument("--vscf-max-iter", type=int, default=200)
    p.add_argument("--vscf-tol", type=float, default=1e-12)


def _parse_params(pairs):
    out = {}
    for item in pairs:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--param expects KEY=VALUE, got {item!r}")
        out[key] = float(value)
    return out


def _source_config(args):
    if args.ham is not None and args.preset is not None:
        raise UsageError("--preset and --ham are mutually exclusive")
    if args.ham is not None:
        return {"path": args.ham}
    preset = args.preset or "coupled3"
    cfg = {"preset": preset}
    params = _parse_params(args.param)
    if params:
        cfg["params"] = params
    return cfg


def _load_source(args):
    cfg = _source_config(args)
    if "path" in cfg:
        if args.param:
            raise UsageError("--param applies only to --preset models")
        return load_hamiltonian(cfg["path"]), cfg
    return build_model_preset(cfg["preset"], cfg.get("params")), cfg


def _parse_modals(spec):
    if spec is None:
        return None
    parts = spec.split(",")
    counts = [int(p) for p in parts]
    return counts[0] if len(counts) == 1 else counts


def _prepared(args):
    h, source_cfg = _load_source(args)
    system = prepare_system(
        h,
        _parse_modals(args.modals),
        {"max_iter": args.vscf_max_iter, "tol": args.vscf_tol},
    )
    return system, source_cfg


def _emit(report: dict, path=None):
    text = json.dumps(report, indent=1, sort_keys=True)
    print(text)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def _resolve_threads(value):
    if value is not None:
        n = value
    else:
        n = int(os.environ.get("VIBADAPT_THREADS", "1"))
    if n < 1:
        raise UsageError(f"thread count must be >= 1, got {n}")
    return n


# ---------------------------------------------------------------- subcommands


def cmd_ham(args):
    h, _ = _load_source(args)
    if args.scale_pairs is not None:
        h = scale_pair_couplings(h, args.scale_pairs)
    if args.restrict_mc is not None:
        h = restrict_mc_level(h, args.restrict_mc)
    if args.out:
        save_hamiltonian(h, args.out)
    _emit(
        {
            "mode_count": h.space.mode_count,
            "primitive_sizes": list(h.space.primitive_sizes),
            "n_terms": len(h.terms),
            "mc_level": h.mc_level,
            "metadata": h.metadata,
            "out": args.out,
        }
    )
    return 0


def cmd_vscf(args):
    h, _ = _load_source(args)
    res = solve_vscf(h, max_iter=args.vscf_max_iter, tol=args.vscf_tol)
    if args.modals_out:
        payload = {
            "mode_count": h.space.mode_count,
            "modal_coefficients": [c.tolist() for c in res.modal_coefficients],
        }
        with open(args.modals_out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")
    _emit({"energy": res.vscf_energy, "iterations": res.iterations, "converged": res.converged})
    return 0 if res.converged else 2


def cmd_vci(args):
    h, _ = _load_source(args)
    res = solve_vscf(h, max_iter=args.vscf_max_iter, tol=args.vscf_tol)
    hm = to_modal_basis(h, res, _modal_counts_for(h, args.modals))
    if args.level == "full":
        vci = solve_fvci(hm)
    else:
        vci = solve_vci(hm, {"sd": 2, "sdt": 3}[args.level])
    _emit({"level": args.level, "energy": vci.energy, "subspace_dim": vci.subspace_dim})
    return 0


def _modal_counts_for(h, requested):
    counts = _parse_modals(requested)
    if counts is not None:
        return counts
    if "default_modal_counts" in h.metadata:
        return list(h.metadata["default_modal_counts"])
    return list(h.space.modal_counts)


def _parse_rank_tol(text):
    if text == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"--rank-tol expects a float or 'auto', got {text!r}") from None


def _parse_cnot_model(spec):
    if spec == "default":
        return CnotModel()
    if spec.startswith("table:"):
        path = spec.split(":", 1)[1]
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return CnotModel.from_table({int(k): int(v) for k, v in raw.items()})
    raise UsageError(f"--cnot-model expects 'default' or 'table:<file>', got {spec!r}")


def _build_pool(space, args):
    name = args.pool
    if name.startswith("sdk:"):
        try:
            k = int(name.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"--pool sdk:<k> needs an integer k, got {name!r}") from None
        if not args.ordering_from:
            raise UsageError("--pool sdk:<k> requires --ordering-from <trace.csv>")
        _, rows = read_trace(args.ordering_from)
        ordering = complete_triples_ordering(
            space, harvest_triples_ordering([r.selected_ops for r in rows])
        )
        return generate_pool(space, "sd_k", k=k, ordering=ordering, generalized=args.generalized)
    kind = name.replace("-", "_")
    return generate_pool(space, kind, generalized=args.generalized)


def cmd_adapt(args):
    system, source_cfg = _prepared(args)
    pool = _build_pool(system.h_modal.space, args)
    strategy = SelectionStrategy(args.strategy, rng_seed=args.seed)
    cfg = AdaptConfig(
        gradient_threshold=args.eps,
        max_iterations=args.max_iter,
        optimizer=OptimizerConfig(method=args.optimizer, gradient_tolerance=args.opt_gtol),
        stall_threshold=args.stall_threshold,
        force_iterations=args.force_iterations,
    )
    rank_tol = _parse_rank_tol(args.rank_tol)
    cnot_model = _parse_cnot_model(args.cnot_model)
    trace = run_adapt(
        system.h_modal,
        pool,
        strategy,
        cfg,
        fvci_energy=system.fvci_energy,
        jacobian=args.jacobian,
        cnot_model=cnot_model,
        rank_tol=rank_tol,
        workers=_resolve_threads(args.threads),
    )
    run_config = {
        "source": source_cfg,
        "modals": args.modals,
        "pool": args.pool,
        "generalized": args.generalized,
        "strategy": args.strategy,
        "seed": args.seed,
        "eps": args.eps,
        "max_iter": args.max_iter,
        "force_iterations": args.force_iterations,
        "jacobian": args.jacobian,
        "rank_tol": args.rank_tol,
        "cnot_model": args.cnot_model,
        "optimizer": {"method": args.optimizer, "gtol": args.opt_gtol},
        "stall_threshold": args.stall_threshold,
    }
    metadata = make_metadata(args.seed, run_config)
    write_trace(
        args.trace,
        trace.rows,
        {**metadata, "pool": pool.kind, "strategy": args.strategy},
    )
    last = trace.rows[-1]
    summary = {
        "metadata": metadata,
        "pool": pool.kind,
        "strategy": args.strategy,
        "status": trace.status,
        "n_iterations": last.k,
        "n_parameters": last.n_parameters,
        "reference_energy": trace.reference_energy,
        "fvci_energy": trace.fvci_energy,
        "final_energy": last.energy,
        "final_error": last.error_vs_fvci,
        "final_max_gradient": trace.final_max_gradient,
        "cnot_total": last.cnot_cumulative,
        "trace": args.trace,
    }
    if args.summary:
        write_summary(args.summary, summary, "run_summary.schema.json")
    print(json.dumps(summary, indent=1, sort_keys=True))
    return 0


def cmd_experiment(args):
    spec = ExperimentSpec.from_json(args.spec)
    if args.output_dir:
        spec.output_dir = args.output_dir
    summary = run_experiment(spec)
    print(
        json.dumps(
            {
                "name": summary["name"],
                "experiment": summary["experiment"],
                "output_dir": spec.output_dir,
                "runs": [r["label"] for r in summary["runs"]],
            },
            indent=1,
            sort_keys=True,
        )
    )
    return 0


# -------------------------------------------------------------- verify suites


def _suite_identities(trials, rng):
    worst = verify_decomposition_identities(trials=trials, rng=rng)
    return {"max_deviation": worst, "trials": trials, "passed": worst <= IDENTITY_TOL}


def _suite_expansion(rng):
    space = ModeSpace.uniform(3, 3)
    op_a = ExcitationOperator(((0, 0, 1),))
    op_b = ExcitationOperator(((0, 1, 2), (1, 0, 1)))
    op_disjoint = ExcitationOperator(((2, 0, 2),))
    commuting = max(
        commutator_expansion_deviation(space, op_a, op_disjoint, n_group=n)
        for n in EXPANSION_GROUP_SIZES
    )
    errors = {
        str(n): commutator_expansion_deviation(space, op_a, op_b, n_group=n)
        for n in EXPANSION_GROUP_SIZES
    }
    seq = [errors[str(n)] for n in EXPANSION_GROUP_SIZES]
    decreasing = all(b < a for a, b in zip(seq, seq[1:]))
    return {
        "commuting_max_deviation": commuting,
        "errors_by_n": errors,
        "strictly_decreasing": decreasing,
        "passed": decreasing and commuting <= IDENTITY_TOL,
    }


def _suite_disentangle():
    h = build_model_preset("coupled3")
    res = solve_vscf(h)
    hm = to_modal_basis(h, res, list(h.metadata["default_modal_counts"]))
    target = solve_fvci(hm).ground_vector
    dis = disentangle(hm.space, target)
    worst_residual = max(dis.stage_residuals.values(), default=0.0)
    return {
        "n_operators": len(dis.sequence),
        "overlap": dis.overlap,
        "max_stage_residual": worst_residual,
        "passed": dis.overlap >= 1 - DISENTANGLE_TOL and worst_residual <= DISENTANGLE_TOL,
    }


def cmd_verify(args):
    rng = np.random.default_rng(args.seed)
    suites = {}
    if args.suite in ("identities", "all"):
        suites["identities"] = _suite_identities(args.trials, rng)
    if args.suite in ("expansion", "all"):
        suites["expansion"] = _suite_expansion(rng)
    if args.suite in ("disentangle", "all"):
        suites["disentangle"] = _suite_disentangle()
    passed = all(s["passed"] for s in suites.values())
    report = {"suites": suites, "passed": passed, "seed": args.seed}
    _emit(report, args.report)
    return 0 if passed else 2


# --------------------------------------------------------------------- parser


def build_parser() -> _Parser:
    parser = _Parser(prog="vibadapt", description=__doc__)
    parser.add_argument("--version", action="version", version=f"vibadapt {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("ham", help="build or transform a Hamiltonian and report its shape")
    _add_source_flags(p)
    p.add_argument("--scale-pairs", type=float, metavar="ALPHA")
    p.add_argument("--restrict-mc", type=int, metavar="N")
    p.add_argument("--out", metavar="PATH", help="write the Hamiltonian JSON here")
    p.set_defaults(func=cmd_ham)

    p = sub.add_parser("vscf", help="solve the mean-field problem")
    _add_source_flags(p)
    p.add_argument("--vscf-max-iter", type=int, default=200)
    p.add_argument("--vscf-tol", type=float, default=1e-12)
    p.add_argument("--modals-out", metavar="PATH", help="write modal coefficients as JSON")
    p.set_defaults(func=cmd_vscf)

    p = sub.add_parser("vci", help="configuration-interaction reference energies")
    _add_source_flags(p)
    _add_modal_flags(p)
    p.add_argument("--level", choices=("sd", "sdt", "full"), default="full")
    p.set_defaults(func=cmd_vci)

    p = sub.add_parser("adapt", help="run the adaptive ansatz growth loop")
    _add_source_flags(p)
    _add_modal_flags(p)
    p.add_argument("--pool", default="sd", help="sd | sdt | sd-decoupled | sdk:<k>")
    p.add_argument("--generalized", action="store_true", help="widen singles beyond the reference")
    p.add_argument("--ordering-from", metavar="TRACE", help="trace CSV supplying the triples order")
    p.add_argument("--strategy", choices=STRATEGY_KINDS, default="max")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--eps", type=float, default=1e-7, help="gradient-norm stopping threshold")
    p.add_argument("--max-iter", type=int, default=60)
    p.add_argument("--force-iterations", action="store_true")
    p.add_argument("--jacobian", action="store_true", help="record the Jacobian rank per row")
    p.add_argument("--rank-tol", default="auto", help="rank threshold: float or 'auto'")
    p.add_argument("--cnot-model", default="default", help="default | table:<file>")
    p.add_argument("--optimizer", choices=("bfgs", "l-bfgs-b"), default="bfgs")
    p.add_argument("--opt-gtol", type=float, default=1e-9)
    p.add_argument("--stall-threshold", type=float, default=1e-6)
    p.add_argument("--trace", default="trace.csv", metavar="PATH")
    p.add_argument("--summary", metavar="PATH", help="write a schema-validated summary JSON")
    p.add_argument("--threads", type=int, default=None, help="screening workers (env VIBADAPT_THREADS)")
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("verify", help="numerical checks of the formal identities")
    p.add_argument("--suite", choices=("identities", "expansion", "disentangle", "all"), default="all")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", metavar="PATH", help="also write the JSON report here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("experiment", help="run a scripted study from a JSON spec")
    p.add_argument("spec", help="experiment spec JSON file")
    p.add_argument("--output-dir", help="override the spec's output directory")
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            parser.print_usage(sys.stderr)
            return 1
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, jsonschema.ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
