"""Hamiltonian representation, named operators, file IO, presets."""

import json

import numpy as np
import pytest

from vibadapt.hamiltonian import (
    HamiltonianFormatError,
    ModeSpace,
    NModeHamiltonian,
    build_model_preset,
    dense_matrix,
    hamiltonians_equal,
    load_hamiltonian,
    make_term,
    one_mode_operator,
    restrict_mc_level,
    save_hamiltonian,
    scale_pair_couplings,
)

rng = np.random.default_rng(20240811)


def random_symmetric(n, scale=1.0):
    a = rng.normal(size=(n, n)) * scale
    return (a + a.T) / 2.0


def random_hamiltonian(space, n_terms=6, max_rank=None):
    max_rank = max_rank or space.mode_count
    terms = []
    for _ in range(n_terms):
        r = int(rng.integers(1, max_rank + 1))
        modes = sorted(rng.choice(space.mode_count, size=r, replace=False).tolist())
        coeff = float(rng.normal())
        factors = [random_symmetric(space.modal_counts[m]) for m in modes]
        terms.append(make_term(space, modes, coeff, factors))
    return NModeHamiltonian(space, tuple(terms))


# ---------------------------------------------------------------- operators


def test_q_matrix_elements():
    q = one_mode_operator("q", 5)
    n = np.arange(4)
    assert np.allclose(np.diag(q, 1), np.sqrt((n + 1) / 2.0))
    assert np.allclose(q, q.T)
    assert np.allclose(np.diag(q), 0.0)


def test_q2_exact_elements():
    # diagonal (2n+1)/2, second off-diagonal sqrt((n+1)(n+2))/2
    q2 = one_mode_operator("q2", 6)
    n = np.arange(6)
    assert np.allclose(np.diag(q2), (2 * n + 1) / 2.0)
    m = np.arange(4)
    assert np.allclose(np.diag(q2, 2), np.sqrt((m + 1) * (m + 2)) / 2.0)
    assert np.allclose(np.diag(q2, 1), 0.0)


def test_power_operators_match_extended_basis_truncation():
    # q^k computed in a larger basis then truncated must equal the named matrix
    for name, k in (("q2", 2), ("q3", 3), ("q4", 4)):
        big = one_mode_operator("q", 12 + k)
        ref = np.linalg.matrix_power(big, k)[:12, :12]
        assert np.allclose(one_mode_operator(name, 12), ref, atol=1e-12)


def test_truncation_not_polluted():
    # naive product of truncated q matrices differs from the exact extension
    naive = np.linalg.matrix_power(one_mode_operator("q", 6), 4)
    exact = one_mode_operator("q4", 6)
    assert not np.allclose(naive, exact)


def test_harmonic_energy_spectrum():
    # kin + (w^2/2) q2 at w = 1 gives n + 1/2 exactly in the HO basis
    size = 14
    h1 = one_mode_operator("kin", size) + 0.5 * one_mode_operator("q2", size)
    vals = np.sort(np.linalg.eigvalsh(h1))
    assert np.allclose(vals[:size], np.arange(size) + 0.5, atol=1e-12)


def test_unknown_operator_name():
    with pytest.raises(HamiltonianFormatError, match="unknown operator"):
        one_mode_operator("p4", 5)


# ---------------------------------------------------------------- structure


def test_mode_space_validation():
    with pytest.raises(ValueError):
        ModeSpace(2, (4,), (4,))
    with pytest.raises(ValueError):
        ModeSpace(2, (4, 1), (4, 1))
    with pytest.raises(ValueError):
        ModeSpace(2, (4, 4), (4, 5))
    s = ModeSpace(3, (4, 4, 4), (4, 4, 4))
    assert s.config_dim == 64


def test_make_term_validation():
    space = ModeSpace.uniform(3, 4)
    with pytest.raises(HamiltonianFormatError, match="strictly increasing"):
        make_term(space, [1, 0], 1.0, ["q", "q"])
    with pytest.raises(HamiltonianFormatError, match="not symmetric"):
        make_term(space, [0], 1.0, [rng.normal(size=(4, 4))])
    with pytest.raises(HamiltonianFormatError, match="shape"):
        make_term(space, [0], 1.0, [np.eye(3)])
    with pytest.raises(HamiltonianFormatError):
        make_term(space, [0, 1], 1.0, ["q"])


def test_mc_level_reflects_terms():
    space = ModeSpace.uniform(3, 4)
    h = random_hamiltonian(space, max_rank=2)
    assert h.mc_level <= 2
    h3 = NModeHamiltonian(
        space, h.terms + (make_term(space, [0, 1, 2], 0.1, ["q", "q", "q"]),)
    )
    assert h3.mc_level == 3
    assert NModeHamiltonian(space, ()).mc_level == 0


def test_dense_matrix_symmetric():
    for sizes in ((3, 3), (2, 3, 4), (4, 4, 4)):
        space = ModeSpace(len(sizes), sizes, sizes)
        h = random_hamiltonian(space)
        mat = dense_matrix(h)
        assert np.allclose(mat, mat.T, atol=1e-12)


def test_dense_matrix_uncoupled_spectrum():
    # sum of one-mode harmonic terms: eigenvalues are sums of per-mode levels
    space = ModeSpace.uniform(2, 6)
    terms = (
        make_term(space, [0], 1.0, ["kin"]),
        make_term(space, [0], 0.5, ["q2"]),
        make_term(space, [1], 1.0, ["kin"]),
        make_term(space, [1], 0.5, ["q2"]),
    )
    h = NModeHamiltonian(space, terms)
    vals = np.sort(np.linalg.eigvalsh(dense_matrix(h)))
    lev = np.arange(6) + 0.5
    expect = np.sort((lev[:, None] + lev[None, :]).ravel())
    # truncated HO levels are exact here, so low eigenvalues match exactly
    assert np.allclose(vals[:10], expect[:10], atol=1e-10)


def test_dense_cap_enforced():
    space = ModeSpace.uniform(6, 6)  # 46656
    h = NModeHamiltonian(space, (make_term(space, [0], 1.0, ["q"]),))
    with pytest.raises(ValueError, match="dense cap"):
        dense_matrix(h)


# ---------------------------------------------------------------- file IO


def test_round_trip_preserves_terms(tmp_path):
    space = ModeSpace(3, (3, 4, 5), (3, 4, 5))
    h = random_hamiltonian(space)
    path = tmp_path / "ham.json"
    save_hamiltonian(h, path)
    back = load_hamiltonian(path)
    assert hamiltonians_equal(h, back)


def test_load_named_factors(tmp_path):
    path = tmp_path / "named.json"
    data = {
        "mode_count": 2,
        "primitive_sizes": [5, 5],
        "terms": [
            {"modes": [0], "coeff": 1.0, "factors": ["kin"]},
            {"modes": [0, 1], "coeff": 0.25, "factors": ["q", "q"]},
        ],
        "metadata": {"label": "demo"},
    }
    path.write_text(json.dumps(data))
    h = load_hamiltonian(path)
    assert np.allclose(h.terms[0].factors[0], one_mode_operator("kin", 5))
    assert np.allclose(h.terms[1].factors[1], one_mode_operator("q", 5))
    assert h.metadata["label"] == "demo"


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(HamiltonianFormatError, match="cannot parse"):
        load_hamiltonian(path)
    path.write_text(json.dumps({"mode_count": 2}))
    with pytest.raises(HamiltonianFormatError, match="missing required"):
        load_hamiltonian(path)
    path.write_text(
        json.dumps(
            {
                "mode_count": 1,
                "primitive_sizes": [4],
                "terms": [{"modes": [0], "coeff": 1.0, "factors": ["nope"]}],
            }
        )
    )
    with pytest.raises(HamiltonianFormatError, match="unknown operator"):
        load_hamiltonian(path)


# ---------------------------------------------------------------- transforms


def test_restrict_mc_level():
    h = build_model_preset("coupled3", {"n": 3})
    assert h.mc_level == 3
    h2 = restrict_mc_level(h, 2)
    assert h2.mc_level == 2
    assert all(len(t.active_modes) <= 2 for t in h2.terms)
    # restriction at or above the current level is the identity
    assert hamiltonians_equal(restrict_mc_level(h, 3), h)
    assert restrict_mc_level(h, 0).terms == ()
    with pytest.raises(ValueError):
        restrict_mc_level(h, -1)


def test_restrict_matches_omitting_triples():
    h2 = build_model_preset("coupled3", {"n": 2})
    h3 = build_model_preset("coupled3", {"n": 3})
    r = restrict_mc_level(h3, 2)
    assert len(r.terms) == len(h2.terms)
    assert all(
        a.active_modes == b.active_modes and a.coefficient == b.coefficient
        for a, b in zip(r.terms, h2.terms)
    )


def test_scale_pair_couplings_zero_and_one():
    h = build_model_preset("coupled3")
    s1 = scale_pair_couplings(h, 1.0)
    assert all(a.coefficient == b.coefficient for a, b in zip(s1.terms, h.terms))
    s0 = scale_pair_couplings(h, 0.0)
    for t in s0.terms:
        if t.active_modes in {(0, 2), (1, 2)}:
            assert t.coefficient == 0.0
    untouched = [t for t in s0.terms if t.active_modes not in {(0, 2), (1, 2)}]
    assert all(t.coefficient != 0.0 for t in untouched)


def test_scale_pair_couplings_bad_pair():
    h = build_model_preset("coupled3")
    with pytest.raises(ValueError, match="outside"):
        scale_pair_couplings(h, 0.5, pairs=[(0, 3)])
    with pytest.raises(ValueError, match="not a mode pair"):
        scale_pair_couplings(h, 0.5, pairs=[(1, 1)])


# ---------------------------------------------------------------- presets


def test_preset_coupled3_shape():
    h = build_model_preset("coupled3")
    assert h.space.mode_count == 3
    assert h.space.primitive_sizes == (10, 10, 10)
    assert h.mc_level == 2
    assert h.metadata["preset"] == "coupled3"


def test_preset_coupled6_shape():
    h = build_model_preset("coupled6")
    assert h.space.mode_count == 6
    assert h.mc_level == 2
    h3 = build_model_preset("coupled6", {"n": 3})
    assert h3.mc_level == 3


def test_preset_param_validation():
    with pytest.raises(ValueError, match="unknown preset"):
        build_model_preset("coupled9")
    with pytest.raises(ValueError, match="unknown parameter"):
        build_model_preset("coupled3", {"lambda99": 1.0})
    with pytest.raises(ValueError, match="outside"):
        build_model_preset("coupled3", {"gamma": 5.0})


def test_preset_deterministic():
    a = build_model_preset("coupled3")
    b = build_model_preset("coupled3")
    assert hamiltonians_equal(a, b)
