#!/usr/bin/env python3
"""Render convergence figures from adaptive-run trace CSVs.

Reads only the documented on-disk formats (trace CSV with a '#' metadata
block, and run/experiment summary JSON) — no dependency on the engine
package.  Invoked as:

    python3 render.py --spec fig.json

The spec file selects the figure kind, the input traces, optional
reference energies, and the output image path.  Values that cannot be
drawn on a log axis (error or gradient <= 0) are clamped to FLOOR and the
affected curve or line is flagged in the legend.
"""

import argparse
import csv
import io
import json
import pathlib
import sys

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

FLOOR = 1e-14

TRACE_HEADER = [
    "k",
    "energy",
    "error_vs_fvci",
    "max_gradient_norm",
    "selected_ops",
    "n_parameters",
    "jacobian_rank",
    "cnot_cumulative",
]

FIGSIZE_THREE = (15.0, 4.5)
FIGSIZE_SINGLE = (6.0, 4.5)
DPI = 120


class SpecError(ValueError):
    pass


# ------------------------------------------------------------------- parsing


def read_trace(path):
    """The trace CSV: '#'-prefixed metadata lines, an exact header, rows."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    if not lines:
        raise SpecError(f"{path}: no data lines")
    reader = csv.reader(io.StringIO("\n".join(lines)))
    header = next(reader)
    missing = [col for col in TRACE_HEADER if col not in header]
    if missing:
        raise SpecError(f"{path}: missing columns {missing}")
    rows = []
    for cells in reader:
        if not cells:
            continue
        if len(cells) != len(header):
            raise SpecError(f"{path}: row has {len(cells)} cells, header has {len(header)}")
        rows.append(dict(zip(header, cells)))
    if not rows:
        raise SpecError(f"{path}: no trace rows")
    return {
        "k": [int(r["k"]) for r in rows],
        "error": [float(r["error_vs_fvci"]) for r in rows],
        "gradient": [float(r["max_gradient_norm"]) for r in rows],
        "cnot": [int(r["cnot_cumulative"]) for r in rows],
    }


def load_references(spec, spec_dir):
    """Reference errors either inline or pulled from a summary JSON."""
    if "references" in spec:
        return dict(spec["references"])
    if "summary" in spec:
        with open(spec_dir / spec["summary"], encoding="utf-8") as fh:
            summary = json.load(fh)
        refs = summary.get("references", {})
        return {
            key: refs[key] for key in ("vcisd_error", "vcisdt_error") if key in refs
        }
    return {}


def clamp(values):
    """Log-safe copy of the series plus a flag that clamping occurred."""
    clamped = [v if v > 0 else FLOOR for v in values]
    return clamped, any(v <= 0 for v in values)


def flagged(label, was_clamped):
    return f"{label} (values at {FLOOR:g} floor)" if was_clamped else label


# ----------------------------------------------------------------- rendering


def _load_spec_traces(spec, spec_dir, key):
    entries = spec.get("traces", [])
    if not entries:
        raise SpecError("spec lists no traces")
    loaded = []
    for entry in entries:
        if key not in entry:
            raise SpecError(f"trace entry missing {key!r}: {entry}")
        loaded.append((entry[key], read_trace(spec_dir / entry["path"])))
    return loaded


def _draw_reference_lines(ax, references):
    drawn = []
    for name, key in (("VCISD", "vcisd_error"), ("VCISDT", "vcisdt_error")):
        if key not in references:
            continue
        value = references[key]
        level = value if value > 0 else FLOOR
        ax.axhline(level, linestyle="--", linewidth=1.0, color="gray")
        ax.annotate(
            flagged(name, value <= 0),
            xy=(0.02, level),
            xycoords=("axes fraction", "data"),
            fontsize=8,
            va="bottom",
        )
        drawn.append(name)
    return drawn


def render_three_panel(spec, spec_dir):
    """Error vs iteration, error vs entangling-gate count, gradient vs
    iteration — one curve per trace, dashed reference-error lines."""
    traces = _load_spec_traces(spec, spec_dir, "label")
    references = load_references(spec, spec_dir)
    fig, axes = plt.subplots(1, 3, figsize=FIGSIZE_THREE)
    panel_meta = []
    for ax, (x_key, y_key, xlabel, ylabel) in zip(
        axes,
        (
            ("k", "error", "iteration", "energy error"),
            ("cnot", "error", "cumulative CNOT count", "energy error"),
            ("k", "gradient", "iteration", "max pool gradient"),
        ),
    ):
        curves = 0
        for label, data in traces:
            ys, was_clamped = clamp(data[y_key])
            ax.semilogy(data[x_key], ys, marker="o", markersize=3, label=flagged(label, was_clamped))
            curves += 1
        lines = _draw_reference_lines(ax, references) if y_key == "error" else []
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend(fontsize=8)
        panel_meta.append(
            {"x": xlabel, "y": ylabel, "curves": curves, "reference_lines": lines}
        )
    if "title" in spec:
        fig.suptitle(spec["title"])
    fig.tight_layout()
    return fig, {"kind": "three_panel", "panels": panel_meta}


def render_alpha_scan(spec, spec_dir):
    """Error vs iteration with one curve per coupling-scale value."""
    traces = _load_spec_traces(spec, spec_dir, "alpha")
    alphas = [alpha for alpha, _ in traces]
    if len(set(alphas)) != len(alphas):
        raise SpecError(f"duplicate alpha labels: {alphas}")
    fig, ax = plt.subplots(figsize=FIGSIZE_SINGLE)
    for alpha, data in traces:
        ys, was_clamped = clamp(data["error"])
        ax.semilogy(
            data["k"], ys, marker="o", markersize=3,
            label=flagged(f"alpha={alpha:g}", was_clamped),
        )
    ax.set_xlabel("iteration")
    ax.set_ylabel("energy error")
    ax.legend(fontsize=8)
    if "title" in spec:
        ax.set_title(spec["title"])
    fig.tight_layout()
    meta = {
        "kind": "alpha_scan",
        "panels": [{"x": "iteration", "y": "energy error", "curves": len(traces)}],
        "alphas": alphas,
    }
    return fig, meta


RENDERERS = {"three_panel": render_three_panel, "alpha_scan": render_alpha_scan}


def render(spec_path):
    spec_path = pathlib.Path(spec_path)
    with open(spec_path, encoding="utf-8") as fh:
        spec = json.load(fh)
    kind = spec.get("kind")
    if kind not in RENDERERS:
        raise SpecError(f"unknown figure kind {kind!r}; known: {sorted(RENDERERS)}")
    if "output" not in spec:
        raise SpecError("spec needs an 'output' image path")
    spec_dir = spec_path.parent
    fig, meta = RENDERERS[kind](spec, spec_dir)
    out = spec_dir / spec["output"]
    fig.savefig(out, dpi=DPI, metadata={"axes": json.dumps(meta, sort_keys=True)})
    plt.close(fig)
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--spec", required=True, help="figure spec JSON")
    try:
        args = parser.parse_args(argv)
        out = render(args.spec)
    except SystemExit as exc:
        return 1 if exc.code else 0
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
