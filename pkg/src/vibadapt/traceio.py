"""Run artifacts: iteration trace CSV and summary JSON.

Traces are written with repr-faithful float formatting (17 significant
digits) so that parse -> serialize is byte-identical, and with no
timestamps anywhere, so identical runs produce identical bytes.  Leading
'#' lines carry provenance metadata as plain key: value strings.
"""

import csv
import hashlib
import io
import json
from dataclasses import dataclass
from importlib import resources

import jsonschema

from . import __version__

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


class TraceFormatError(ValueError):
    """A trace file does not match the documented layout."""


@dataclass(frozen=True)
class TraceRow:
    k: int
    energy: float
    error_vs_fvci: float
    max_gradient_norm: float
    selected_ops: str
    n_parameters: int
    jacobian_rank: int | None
    cnot_cumulative: int


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def make_metadata(seed, config: dict) -> dict:
    return {
        "tool": "vibadapt",
        "version": __version__,
        "seed": "" if seed is None else str(int(seed)),
        "config_hash": config_hash(config),
    }


def _row_cells(row: TraceRow) -> list[str]:
    return [
        str(int(row.k)),
        format_float(row.energy),
        format_float(row.error_vs_fvci),
        format_float(row.max_gradient_norm),
        row.selected_ops,
        str(int(row.n_parameters)),
        "" if row.jacobian_rank is None else str(int(row.jacobian_rank)),
        str(int(row.cnot_cumulative)),
    ]


def serialize_trace(rows, metadata: dict) -> str:
    buf = io.StringIO()
    for key in sorted(metadata):
        buf.write(f"# {key}: {metadata[key]}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for row in rows:
        writer.writerow(_row_cells(row))
    return buf.getvalue()


def write_trace(path, rows, metadata: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(serialize_trace(rows, metadata))


def parse_trace(text: str):
    lines = text.splitlines(keepends=True)
    metadata = {}
    body_start = 0
    for line in lines:
        if not line.startswith("#"):
            break
        body_start += 1
        stripped = line[1:].strip()
        if ":" not in stripped:
            raise TraceFormatError(f"metadata line without key: {line.rstrip()}")
        key, value = stripped.split(":", 1)
        metadata[key.strip()] = value.strip()
    reader = csv.reader(lines[body_start:])
    try:
        header = next(reader)
    except StopIteration:
        raise TraceFormatError("trace has no header row") from None
    if header != TRACE_HEADER:
        raise TraceFormatError(f"unexpected trace header: {header}")
    rows = []
    for cells in reader:
        if not cells:
            continue
        if len(cells) != len(TRACE_HEADER):
            raise TraceFormatError(f"row has {len(cells)} cells: {cells}")
        rows.append(
            TraceRow(
                k=int(cells[0]),
                energy=float(cells[1]),
                error_vs_fvci=float(cells[2]),
                max_gradient_norm=float(cells[3]),
                selected_ops=cells[4],
                n_parameters=int(cells[5]),
                jacobian_rank=None if cells[6] == "" else int(cells[6]),
                cnot_cumulative=int(cells[7]),
            )
        )
    return metadata, rows


def read_trace(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_trace(fh.read())


def _load_schema(name: str) -> dict:
    with resources.files("vibadapt.schemas").joinpath(name).open(encoding="utf-8") as fh:
        return json.load(fh)


def write_summary(path, summary: dict, schema_name: str) -> None:
    """Validate against the shipped schema, then write deterministic JSON."""
    jsonschema.validate(summary, _load_schema(schema_name))
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_summary(path, schema_name: str | None = None) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if schema_name is not None:
        jsonschema.validate(data, _load_schema(schema_name))
    return data
