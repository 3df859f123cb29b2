"""n-mode vibrational Hamiltonians as sums of few-mode product terms.

A Hamiltonian is a sum of terms, each acting on a small set of "active"
modes through one symmetric factor matrix per active mode.  The maximum
number of active modes over all terms is the mode-coupling level.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np

# Exact-diagonalization paths refuse to run past these sizes.
CONFIG_DIM_CAP = 1_000_000
DENSE_DIM_CAP = 4000

NAMED_OPERATORS = ("q", "q2", "q3", "q4", "kin")

_SYMMETRY_RTOL = 1e-12


class HamiltonianFormatError(ValueError):
    """A Hamiltonian file or term specification is malformed."""


def one_mode_operator(name: str, size: int) -> np.ndarray:
    """Matrix of a named one-mode operator in the unit-frequency HO basis.

    Powers of the displacement are evaluated in a basis extended by the
    power's quantum-number reach and truncated back, so every retained
    matrix element is exact rather than truncation-polluted.
    """
    if size < 1:
        raise HamiltonianFormatError(f"operator size must be >= 1, got {size}")
    if name == "kin":
        n = np.arange(size, dtype=float)
        mat = np.diag((2.0 * n + 1.0) / 4.0)
        if size > 2:
            off = -np.sqrt((n[:-2] + 1.0) * (n[:-2] + 2.0)) / 4.0
            mat += np.diag(off, 2) + np.diag(off, -2)
        return mat
    powers = {"q": 1, "q2": 2, "q3": 3, "q4": 4}
    if name not in powers:
        raise HamiltonianFormatError(
            f"unknown operator name {name!r}; known: {', '.join(NAMED_OPERATORS)}"
        )
    power = powers[name]
    ext = size + power
    ladder = np.arange(ext - 1, dtype=float)
    q = np.diag(np.sqrt((ladder + 1.0) / 2.0), 1)
    q = q + q.T
    mat = np.linalg.matrix_power(q, power)
    return np.ascontiguousarray(mat[:size, :size])


@dataclass(frozen=True)
class ModeSpace:
    """Mode count plus per-mode primitive and retained basis sizes."""

    mode_count: int
    primitive_sizes: tuple[int, ...]
    modal_counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "primitive_sizes", tuple(int(n) for n in self.primitive_sizes))
        object.__setattr__(self, "modal_counts", tuple(int(n) for n in self.modal_counts))
        if self.mode_count < 1:
            raise ValueError(f"mode_count must be >= 1, got {self.mode_count}")
        if len(self.primitive_sizes) != self.mode_count:
            raise ValueError("primitive_sizes length does not match mode_count")
        if len(self.modal_counts) != self.mode_count:
            raise ValueError("modal_counts length does not match mode_count")
        if any(n < 2 for n in self.primitive_sizes):
            raise ValueError("every primitive size must be >= 2")
        if any(n < 2 for n in self.modal_counts):
            raise ValueError("every modal count must be >= 2")
        if any(n > p for n, p in zip(self.modal_counts, self.primitive_sizes)):
            raise ValueError("modal counts cannot exceed primitive sizes")

    @classmethod
    def uniform(cls, mode_count: int, primitive_size: int, modal_count: int | None = None):
        modal = primitive_size if modal_count is None else modal_count
        return cls(mode_count, (primitive_size,) * mode_count, (modal,) * mode_count)

    @property
    def config_dim(self) -> int:
        return int(np.prod(self.modal_counts, dtype=np.int64))


@dataclass(frozen=True)
class HamiltonianTerm:
    """One product term: coefficient times a factor matrix per active mode."""

    active_modes: tuple[int, ...]
    coefficient: float
    factors: tuple[np.ndarray, ...]


def make_term(space: ModeSpace, modes, coefficient, factors) -> HamiltonianTerm:
    """Validate and freeze a term; named factors are expanded to matrices."""
    modes = tuple(int(m) for m in modes)
    if len(modes) == 0:
        raise HamiltonianFormatError("a term must act on at least one mode")
    if any(m < 0 or m >= space.mode_count for m in modes):
        raise HamiltonianFormatError(f"term modes {modes} outside 0..{space.mode_count - 1}")
    if any(b <= a for a, b in zip(modes, modes[1:])):
        raise HamiltonianFormatError(f"term modes {modes} must be strictly increasing")
    if len(factors) != len(modes):
        raise HamiltonianFormatError("one factor per active mode required")
    mats = []
    for m, f in zip(modes, factors):
        size = space.modal_counts[m]
        if isinstance(f, str):
            mat = one_mode_operator(f, size)
        else:
            mat = np.asarray(f, dtype=float)
        if mat.shape != (size, size):
            raise HamiltonianFormatError(
                f"factor for mode {m} has shape {mat.shape}, expected {(size, size)}"
            )
        scale = max(1.0, float(np.max(np.abs(mat))) if mat.size else 1.0)
        if float(np.max(np.abs(mat - mat.T))) > _SYMMETRY_RTOL * scale:
            raise HamiltonianFormatError(f"factor for mode {m} is not symmetric")
        mat = np.ascontiguousarray(mat)
        mat.setflags(write=False)
        mats.append(mat)
    return HamiltonianTerm(modes, float(coefficient), tuple(mats))


@dataclass(frozen=True)
class NModeHamiltonian:
    space: ModeSpace
    terms: tuple[HamiltonianTerm, ...]
    metadata: dict = field(default_factory=dict)

    @property
    def mc_level(self) -> int:
        return max((len(t.active_modes) for t in self.terms), default=0)


def terms_equal(a: HamiltonianTerm, b: HamiltonianTerm) -> bool:
    return (
        a.active_modes == b.active_modes
        and a.coefficient == b.coefficient
        and all(np.array_equal(x, y) for x, y in zip(a.factors, b.factors))
    )


def hamiltonians_equal(a: NModeHamiltonian, b: NModeHamiltonian) -> bool:
    return (
        a.space == b.space
        and len(a.terms) == len(b.terms)
        and all(terms_equal(x, y) for x, y in zip(a.terms, b.terms))
    )


def load_hamiltonian(path) -> NModeHamiltonian:
    """Read a Hamiltonian from its JSON file form.

    Factors may be named operators (unit-frequency HO convention) or
    explicit nested-list matrices.  The loaded Hamiltonian lives in its
    primitive basis: modal counts equal primitive sizes.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise HamiltonianFormatError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise HamiltonianFormatError(f"{path}: top level must be an object")
    for key in ("mode_count", "primitive_sizes", "terms"):
        if key not in data:
            raise HamiltonianFormatError(f"{path}: missing required field {key!r}")
    mode_count = int(data["mode_count"])
    sizes = tuple(int(n) for n in data["primitive_sizes"])
    space = ModeSpace(mode_count, sizes, sizes)
    terms = []
    for i, spec in enumerate(data["terms"]):
        try:
            terms.append(make_term(space, spec["modes"], spec["coeff"], spec["factors"]))
        except (KeyError, TypeError) as exc:
            raise HamiltonianFormatError(f"{path}: term {i} malformed: {exc}") from exc
    metadata = data.get("metadata", {})
    if not isinstance(metadata, dict):
        raise HamiltonianFormatError(f"{path}: metadata must be an object")
    return NModeHamiltonian(space, tuple(terms), dict(metadata))


def save_hamiltonian(h: NModeHamiltonian, path) -> None:
    """Write the JSON file form; factors are stored as explicit matrices."""
    data = {
        "mode_count": h.space.mode_count,
        "primitive_sizes": list(h.space.modal_counts),
        "terms": [
            {
                "modes": list(t.active_modes),
                "coeff": t.coefficient,
                "factors": [f.tolist() for f in t.factors],
            }
            for t in h.terms
        ],
        "metadata": h.metadata,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")


def dense_matrix(h: NModeHamiltonian) -> np.ndarray:
    """Assemble the full configuration-space matrix (oracle-scale only)."""
    dim = h.space.config_dim
    if dim > DENSE_DIM_CAP:
        raise ValueError(f"configuration dimension {dim} exceeds dense cap {DENSE_DIM_CAP}")
    out = np.zeros((dim, dim))
    eyes = [np.eye(n) for n in h.space.modal_counts]
    for term in h.terms:
        acc = np.array([[term.coefficient]])
        pos = 0
        for m in range(h.space.mode_count):
            if pos < len(term.active_modes) and term.active_modes[pos] == m:
                acc = np.kron(acc, term.factors[pos])
                pos += 1
            else:
                acc = np.kron(acc, eyes[m])
        out += acc
    return out


def restrict_mc_level(h: NModeHamiltonian, n: int) -> NModeHamiltonian:
    """Drop every term with more than n active modes."""
    if n < 0:
        raise ValueError(f"mode-coupling level must be >= 0, got {n}")
    kept = tuple(t for t in h.terms if len(t.active_modes) <= n)
    return NModeHamiltonian(h.space, kept, dict(h.metadata))


def scale_pair_couplings(h: NModeHamiltonian, alpha: float, pairs=None) -> NModeHamiltonian:
    """Scale the coefficients of terms on the given mode pairs by alpha.

    Default pairs decouple the last of three modes: (0, 2) and (1, 2).
    """
    if pairs is None:
        pairs = ((0, 2), (1, 2))
    norm = []
    for pair in pairs:
        pair = tuple(sorted(int(m) for m in pair))
        if len(pair) != 2 or pair[0] == pair[1]:
            raise ValueError(f"not a mode pair: {pair}")
        if any(m < 0 or m >= h.space.mode_count for m in pair):
            raise ValueError(f"pair {pair} references a mode outside 0..{h.space.mode_count - 1}")
        norm.append(pair)
    targets = set(norm)
    terms = tuple(
        replace(t, coefficient=t.coefficient * float(alpha)) if t.active_modes in targets else t
        for t in h.terms
    )
    meta = dict(h.metadata)
    meta["pair_scale"] = {"alpha": float(alpha), "pairs": [list(p) for p in norm]}
    return NModeHamiltonian(h.space, terms, meta)


def _check_params(name, params, defaults, ranges):
    resolved = dict(defaults)
    for key, value in (params or {}).items():
        if key not in defaults:
            raise ValueError(
                f"unknown parameter {key!r} for preset {name!r}; known: {', '.join(sorted(defaults))}"
            )
        resolved[key] = type(defaults[key])(value)
    for key, (lo, hi) in ranges.items():
        v = resolved[key]
        if not (lo <= v <= hi):
            raise ValueError(f"preset {name!r} parameter {key}={v} outside [{lo}, {hi}]")
    return resolved


def _one_mode_terms(space, omegas, c3, gamma):
    terms = []
    for m, w in enumerate(omegas):
        terms.append(make_term(space, [m], 1.0, ["kin"]))
        terms.append(make_term(space, [m], 0.5 * w * w, ["q2"]))
        if c3 != 0.0:
            terms.append(make_term(space, [m], c3, ["q3"]))
        terms.append(make_term(space, [m], gamma, ["q4"]))
    return terms


_COUPLED3_OMEGAS = (1.0, 1.25, 1.55)
_COUPLED6_OMEGAS = (1.0, 1.15, 1.3, 1.45, 1.6, 1.75)


def _coupled3(params):
    defaults = {
        "primitive": 10,
        "n": 2,
        "gamma": 0.03,
        "c3": -0.035,
        "lam01": 0.10,
        "lam02": 0.085,
        "lam12": 0.07,
        "eta01": 0.04,
        "eta02": 0.03,
        "eta12": 0.025,
        "zeta": 0.02,
    }
    ranges = {
        "primitive": (4, 20),
        "n": (1, 3),
        "gamma": (0.0, 0.2),
        "c3": (-0.15, 0.15),
        "lam01": (-0.5, 0.5),
        "lam02": (-0.5, 0.5),
        "lam12": (-0.5, 0.5),
        "eta01": (-0.3, 0.3),
        "eta02": (-0.3, 0.3),
        "eta12": (-0.3, 0.3),
        "zeta": (-0.2, 0.2),
    }
    p = _check_params("coupled3", params, defaults, ranges)
    space = ModeSpace.uniform(3, p["primitive"])
    terms = _one_mode_terms(space, _COUPLED3_OMEGAS, p["c3"], p["gamma"])
    for (i, j), key in (((0, 1), "01"), ((0, 2), "02"), ((1, 2), "12")):
        terms.append(make_term(space, [i, j], p[f"lam{key}"], ["q", "q"]))
        terms.append(make_term(space, [i, j], p[f"eta{key}"], ["q2", "q2"]))
    if p["n"] >= 3:
        terms.append(make_term(space, [0, 1, 2], p["zeta"], ["q", "q", "q"]))
    h = NModeHamiltonian(
        space,
        tuple(terms),
        {"preset": "coupled3", "params": p, "default_modal_counts": [4, 4, 4]},
    )
    return restrict_mc_level(h, p["n"]) if p["n"] < 2 else h


def _coupled6(params):
    defaults = {
        "primitive": 6,
        "n": 2,
        "gamma": 0.025,
        "c3": -0.03,
        "lam": 0.08,
        "eta": 0.03,
        "lam2": 0.05,
        "zeta": 0.015,
    }
    ranges = {
        "primitive": (4, 12),
        "n": (1, 3),
        "gamma": (0.0, 0.2),
        "c3": (-0.15, 0.15),
        "lam": (-0.5, 0.5),
        "eta": (-0.3, 0.3),
        "lam2": (-0.5, 0.5),
        "zeta": (-0.2, 0.2),
    }
    p = _check_params("coupled6", params, defaults, ranges)
    space = ModeSpace.uniform(6, p["primitive"])
    terms = _one_mode_terms(space, _COUPLED6_OMEGAS, p["c3"], p["gamma"])
    for m in range(5):
        terms.append(make_term(space, [m, m + 1], p["lam"], ["q", "q"]))
        terms.append(make_term(space, [m, m + 1], p["eta"], ["q2", "q2"]))
    for pair in ((0, 2), (3, 5)):
        terms.append(make_term(space, list(pair), p["lam2"], ["q", "q"]))
    if p["n"] >= 3:
        for triple in ((0, 1, 2), (3, 4, 5)):
            terms.append(make_term(space, list(triple), p["zeta"], ["q", "q", "q"]))
    h = NModeHamiltonian(
        space,
        tuple(terms),
        {"preset": "coupled6", "params": p, "default_modal_counts": [3] * 6},
    )
    return restrict_mc_level(h, p["n"]) if p["n"] < 2 else h


_PRESETS = {"coupled3": _coupled3, "coupled6": _coupled6}

MODEL_PRESETS = tuple(sorted(_PRESETS))


def build_model_preset(name: str, params=None) -> NModeHamiltonian:
    """Construct a named model system with optional parameter overrides."""
    if name not in _PRESETS:
        raise ValueError(f"unknown preset {name!r}; known: {', '.join(sorted(_PRESETS))}")
    return _PRESETS[name](params)
