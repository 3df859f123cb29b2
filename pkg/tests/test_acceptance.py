"""End-to-end checks of the package's headline guarantees.

Each test covers one acceptance criterion and prints a single PASS/FAIL
line to the real stdout (visible even under pytest capture), so a full
run yields one line per criterion.
"""

import time

import numpy as np
import pytest
import scipy.linalg

from vibadapt.adapt import AdaptConfig, SelectionStrategy, run_adapt
from vibadapt.cli import main as cli_main
from vibadapt.diagnostics import (
    commutator_expansion_deviation,
    compute_jacobian,
    disentangle,
    verify_decomposition_identities,
)
from vibadapt.engine import (
    ExcitationOperator,
    apply_excitation_rotation,
    apply_hamiltonian,
    dense_kappa,
    energy,
    pool_gradient,
    reference_state,
)
from vibadapt.experiments import prepare_system, stall_onset
from vibadapt.hamiltonian import (
    ModeSpace,
    NModeHamiltonian,
    build_model_preset,
    dense_matrix,
    make_term,
    scale_pair_couplings,
)
from vibadapt.pools import (
    Ansatz,
    ansatz_gradient,
    ansatz_parameters,
    ansatz_state,
    complete_triples_ordering,
    generate_pool,
    harvest_triples_ordering,
    with_parameters,
)
from vibadapt.vci import solve_fvci

SEED = 20240819
GRID = (0.0, 0.25, 0.5, 0.75, 1.0)

TIMINGS = {}


# ------------------------------------------------------------ shared fixtures


@pytest.fixture(scope="module")
def coupled3():
    t0 = time.perf_counter()
    system = prepare_system(build_model_preset("coupled3"), None)
    TIMINGS["prepare3"] = time.perf_counter() - t0
    return system


@pytest.fixture(scope="module")
def sd_stall(coupled3):
    t0 = time.perf_counter()
    pool = generate_pool(coupled3.h_modal.space, "sd")
    trace = run_adapt(
        coupled3.h_modal,
        pool,
        cfg=AdaptConfig(max_iterations=60),
        fvci_energy=coupled3.fvci_energy,
    )
    TIMINGS["sd"] = time.perf_counter() - t0
    return trace


@pytest.fixture(scope="module")
def sd_forced(coupled3, sd_stall):
    t0 = time.perf_counter()
    pool = generate_pool(coupled3.h_modal.space, "sd")
    cap = sd_stall.rows[-1].k + 8
    trace = run_adapt(
        coupled3.h_modal,
        pool,
        cfg=AdaptConfig(max_iterations=cap, force_iterations=True),
        fvci_energy=coupled3.fvci_energy,
        jacobian=True,
        rank_tol=1e-4,
    )
    TIMINGS["sd_forced"] = time.perf_counter() - t0
    return trace


@pytest.fixture(scope="module")
def sdt_trace(coupled3):
    t0 = time.perf_counter()
    pool = generate_pool(coupled3.h_modal.space, "sdt")
    trace = run_adapt(
        coupled3.h_modal,
        pool,
        cfg=AdaptConfig(max_iterations=60),
        fvci_energy=coupled3.fvci_energy,
    )
    TIMINGS["sdt"] = time.perf_counter() - t0
    return trace


def random_space(rng, lo=3, hi=8, max_dim=512, modes=(2, 3)):
    while True:
        m = int(rng.choice(modes))
        sizes = tuple(int(rng.integers(lo, hi + 1)) for _ in range(m))
        if np.prod(sizes) <= max_dim:
            return ModeSpace(m, sizes, sizes)


def random_operator(space, rng, max_rank=None):
    m = space.mode_count
    rank = int(rng.integers(1, (max_rank or m) + 1))
    modes = sorted(int(x) for x in rng.choice(m, size=rank, replace=False))
    moves = []
    for mode in modes:
        frm, to = (int(x) for x in rng.choice(space.modal_counts[mode], size=2, replace=False))
        moves.append((mode, frm, to))
    return ExcitationOperator(tuple(moves))


def random_state(space, rng):
    psi = rng.normal(size=space.config_dim)
    return psi / np.linalg.norm(psi)


def random_hamiltonian(space, rng, n_terms=6):
    terms = []
    for _ in range(n_terms):
        r = int(rng.integers(1, space.mode_count + 1))
        modes = sorted(int(x) for x in rng.choice(space.mode_count, size=r, replace=False))
        factors = []
        for mode in modes:
            a = rng.normal(size=(space.modal_counts[mode],) * 2)
            factors.append((a + a.T) / 2)
        terms.append(make_term(space, modes, float(rng.normal()), factors))
    return NModeHamiltonian(space, tuple(terms))


# ---------------------------------------------------------------- criteria


def test_identity_suite(acceptance_report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    worst = verify_decomposition_identities(trials=120, rng=rng)
    pairs_checked = 0
    monotone = True
    worst_first = 0.0
    while pairs_checked < 20:
        space = random_space(rng, lo=3, hi=5, max_dim=150, modes=(2, 3))
        op_a = ExcitationOperator(((0, 0, int(rng.integers(1, space.modal_counts[0]))),))
        b_from, b_to = (
            int(x) for x in rng.choice(space.modal_counts[0], size=2, replace=False)
        )
        c_to = int(rng.integers(1, space.modal_counts[1]))
        op_b = ExcitationOperator(((0, b_from, b_to), (1, 0, c_to)))
        errs = [
            commutator_expansion_deviation(space, op_a, op_b, n_group=n)
            for n in (1, 4, 16, 64)
        ]
        if errs[0] < 1e-6:
            continue  # effectively commuting draw; need an overlapping pair
        pairs_checked += 1
        worst_first = max(worst_first, errs[0])
        monotone = monotone and all(b < a for a, b in zip(errs, errs[1:]))
    elapsed = time.perf_counter() - t0
    acceptance_report(
        "identity-suite",
        worst <= 1e-13 and monotone and elapsed < 60,
        f"120 index tuples max dev {worst:.2e}; 20 pairs strictly decreasing "
        f"over N=1..64; {elapsed:.1f}s",
    )


def test_engine_oracle_equivalence(acceptance_report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED + 1)
    worst_rot = 0.0
    for case in range(200):
        if case < 185:
            space = random_space(rng)
        else:
            sizes = (int(rng.integers(25, 32)), int(rng.integers(25, 32)))
            space = ModeSpace(2, sizes, sizes)
        op = random_operator(space, rng)
        t = float(rng.uniform(-1.0, 1.0))
        psi = random_state(space, rng)
        fast = apply_excitation_rotation(space, op, t, psi)
        slow = scipy.linalg.expm(t * dense_kappa(space, op)) @ psi
        worst_rot = max(worst_rot, float(np.max(np.abs(fast - slow))))
    worst_ham = 0.0
    for _ in range(30):
        space = random_space(rng, max_dim=256)
        h = random_hamiltonian(space, rng)
        psi = random_state(space, rng)
        fast = apply_hamiltonian(h, psi)
        slow = dense_matrix(h) @ psi
        worst_ham = max(worst_ham, float(np.max(np.abs(fast - slow))))
    elapsed = time.perf_counter() - t0
    acceptance_report(
        "engine-oracle",
        worst_rot <= 1e-12 and worst_ham <= 1e-12 and elapsed < 60,
        f"200 rotation cases max dev {worst_rot:.2e}; 30 operator-application "
        f"cases max dev {worst_ham:.2e}; {elapsed:.1f}s",
    )


def test_gradient_consistency(acceptance_report):
    rng = np.random.default_rng(SEED + 2)
    step = 1e-6
    ok = True
    worst_rel = 0.0

    def rel_gap(analytic, fd):
        scale = np.maximum(np.abs(analytic), 1e-2)
        return float(np.max(np.abs(analytic - fd) / scale))

    for _ in range(50):
        space = random_space(rng, lo=3, hi=5, max_dim=128)
        h = random_hamiltonian(space, rng)
        psi = random_state(space, rng)
        op = random_operator(space, rng)
        analytic = pool_gradient(h, psi, op)
        e_plus = energy(h, apply_excitation_rotation(space, op, step, psi))
        e_minus = energy(h, apply_excitation_rotation(space, op, -step, psi))
        fd = (e_plus - e_minus) / (2 * step)
        ok = ok and abs(analytic - fd) <= 1e-6 * max(1.0, abs(analytic)) + 1e-8
        worst_rel = max(worst_rel, abs(analytic - fd) / max(1.0, abs(analytic)))
    for kind in ("sd", "sdt", "sd_decoupled"):
        for _ in range(17):
            space = random_space(rng, lo=3, hi=4, max_dim=80, modes=(3,))
            h = random_hamiltonian(space, rng)
            pool = generate_pool(space, kind)
            idx = rng.choice(pool.size, size=4, replace=False)
            a = Ansatz(
                space,
                [(pool.elements[int(i)], float(rng.uniform(-0.4, 0.4))) for i in idx],
            )
            analytic = ansatz_gradient(h, a)
            params = ansatz_parameters(a)
            fd = np.empty_like(analytic)
            for j in range(len(params)):
                up, dn = params.copy(), params.copy()
                up[j] += step
                dn[j] -= step
                fd[j] = (
                    energy(h, ansatz_state(with_parameters(a, up)))
                    - energy(h, ansatz_state(with_parameters(a, dn)))
                ) / (2 * step)
            gap = np.abs(analytic - fd) - (1e-6 * np.maximum(1.0, np.abs(analytic)) + 1e-8)
            ok = ok and bool(np.all(gap <= 0))
    worst_jac = 0.0
    for _ in range(10):
        space = random_space(rng, lo=3, hi=4, max_dim=80, modes=(3,))
        pool = generate_pool(space, "sdt")
        idx = rng.choice(pool.size, size=5, replace=False)
        a = Ansatz(
            space,
            [(pool.elements[int(i)], float(rng.uniform(-0.4, 0.4))) for i in idx],
        )
        jac = compute_jacobian(a)
        params = ansatz_parameters(a)
        for j in range(len(params)):
            up, dn = params.copy(), params.copy()
            up[j] += step
            dn[j] -= step
            col = (
                ansatz_state(with_parameters(a, up)) - ansatz_state(with_parameters(a, dn))
            ).reshape(-1) / (2 * step)
            worst_jac = max(worst_jac, float(np.max(np.abs(jac[:, j] - col))))
    ok = ok and worst_jac <= 1e-7
    acceptance_report(
        "gradient-consistency",
        ok,
        f"50 screening + 51 full-ansatz cases within rel 1e-6; "
        f"10 derivative matrices vs finite differences max dev {worst_jac:.2e}",
    )


def test_variational_chain(coupled3, acceptance_report):
    t0 = time.perf_counter()
    systems = {"coupled3": coupled3}
    systems["coupled6"] = prepare_system(build_model_preset("coupled6"), None)
    ok = True
    details = []
    for name, system in systems.items():
        refs = system.references()
        chain = (
            refs["vscf_energy"] + 1e-12 >= refs["vcisd_energy"] + 1e-12
            and refs["vcisd_energy"] + 1e-12 >= refs["vcisdt_energy"]
            and refs["vcisdt_energy"] + 1e-12 >= refs["fvci_energy"]
        )
        corr = refs["vscf_energy"] - refs["fvci_energy"]
        fvci = solve_fvci(system.h_modal)
        resid = float(
            np.linalg.norm(
                apply_hamiltonian(system.h_modal, fvci.ground_vector)
                - fvci.energy * fvci.ground_vector
            )
        )
        ok = ok and chain and corr >= 1e-6 and resid <= 1e-10
        details.append(f"{name}: correlation {corr:.2e}, eigen-residual {resid:.1e}")
    elapsed = time.perf_counter() - t0
    acceptance_report("variational-chain", ok, "; ".join(details) + f"; {elapsed:.1f}s")


def test_state_reconstruction(coupled3, acceptance_report):
    t0 = time.perf_counter()
    target = solve_fvci(coupled3.h_modal).ground_vector
    res = disentangle(coupled3.h_modal.space, target)
    worst_residual = max(res.stage_residuals.values())
    elapsed = time.perf_counter() - t0
    acceptance_report(
        "state-reconstruction",
        res.overlap >= 1 - 1e-10 and worst_residual <= 1e-10 and elapsed < 60,
        f"{len(res.sequence)} rotations, overlap 1-{1 - res.overlap:.1e}, "
        f"max swept-rank residual {worst_residual:.1e}; {elapsed:.2f}s",
    )


def test_pool_stall_pattern(coupled3, sd_stall, sd_forced, sdt_trace, acceptance_report):
    refs = coupled3.references()
    vcisd_err = refs["vcisd_error"]
    stalled = (
        sd_stall.status == "stalled"
        and sd_stall.final_max_gradient < 1e-7
        and sd_stall.rows[-1].error_vs_fvci > 1e-6
    )
    stall_err = sd_stall.rows[-1].error_vs_fvci
    near_vcisd = abs(stall_err - vcisd_err) <= 0.1 * vcisd_err
    sdt_err = sdt_trace.rows[-1].error_vs_fvci
    separation = sdt_err <= stall_err / 100
    onset = stall_onset(sd_forced.rows, 1e-7)
    pre_ok = onset is not None and all(
        r.jacobian_rank == r.k for r in sd_forced.rows if r.k <= onset
    )
    plateau_rank = sd_forced.rows[onset].jacobian_rank if onset is not None else None
    post_ok = onset is not None and all(
        r.jacobian_rank == plateau_rank for r in sd_forced.rows if r.k >= onset
    )
    total = TIMINGS["prepare3"] + TIMINGS["sd"] + TIMINGS["sd_forced"] + TIMINGS["sdt"]
    acceptance_report(
        "pool-stall-pattern",
        stalled and near_vcisd and separation and pre_ok and post_ok and total < 600,
        f"stall at k={sd_stall.rows[-1].k} error {stall_err:.3e} "
        f"(within {abs(stall_err - vcisd_err) / vcisd_err:.1%} of two-mode CI error "
        f"{vcisd_err:.3e}); triples-pool error {sdt_err:.3e} <= stall/100; "
        f"rank=k through k={onset}, then constant {plateau_rank} under forcing; "
        f"{total:.0f}s total",
    )


def test_coupling_scan_pattern(acceptance_report):
    t0 = time.perf_counter()
    base = build_model_preset("coupled3")
    errors = []
    for alpha in GRID:
        system = prepare_system(scale_pair_couplings(base, alpha), None)
        pool = generate_pool(system.h_modal.space, "sd")
        trace = run_adapt(
            system.h_modal,
            pool,
            cfg=AdaptConfig(max_iterations=60),
            fvci_energy=system.fvci_energy,
        )
        errors.append(trace.rows[-1].error_vs_fvci)
    zero_ok = errors[0] <= 1e-8
    monotone = all(b >= a for a, b in zip(errors, errors[1:]))
    elapsed = time.perf_counter() - t0
    acceptance_report(
        "coupling-scan",
        zero_ok and monotone,
        "terminal errors " + ", ".join(f"{e:.1e}" for e in errors)
        + f" nondecreasing over alpha grid {GRID}; {elapsed:.0f}s",
    )


def test_triples_ladder(coupled3, sdt_trace, acceptance_report):
    t0 = time.perf_counter()
    space = coupled3.h_modal.space
    ordering = complete_triples_ordering(
        space, harvest_triples_ordering([r.selected_ops for r in sdt_trace.rows])
    )
    full = len(ordering)
    errors = {}
    for k in (0, 3, 6, 12, 20, 24, full):
        pool = generate_pool(space, "sd_k", k=k, ordering=ordering)
        trace = run_adapt(
            coupled3.h_modal,
            pool,
            cfg=AdaptConfig(max_iterations=60),
            fvci_energy=coupled3.fvci_energy,
        )
        errors[k] = trace.rows[-1].error_vs_fvci
    ks = sorted(errors)
    monotone = all(errors[b] <= errors[a] + 1e-12 for a, b in zip(ks, ks[1:]))
    gap = abs(errors[full] - sdt_trace.rows[-1].error_vs_fvci)
    matches_sdt = gap <= 1e-8  # ten times the optimizer gradient tolerance
    elapsed = time.perf_counter() - t0
    acceptance_report(
        "triples-ladder",
        monotone and matches_sdt and full == 27,
        "errors " + ", ".join(f"k={k}:{errors[k]:.1e}" for k in ks)
        + f" nonincreasing; k={full} vs full-triples run gap {gap:.1e}; {elapsed:.0f}s",
    )


def test_trace_determinism(tmp_path, acceptance_report):
    t0 = time.perf_counter()
    args = [
        "adapt",
        "--preset",
        "coupled3",
        "--pool",
        "sd",
        "--seed",
        "7",
        "--strategy",
        "max+rand",
        "--max-iter",
        "10",
    ]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    rc_a = cli_main(args + ["--trace", str(a)])
    rc_b = cli_main(args + ["--trace", str(b)])
    identical = a.read_bytes() == b.read_bytes()
    elapsed = time.perf_counter() - t0
    acceptance_report(
        "trace-determinism",
        rc_a == 0 and rc_b == 0 and identical,
        f"two seeded command-line runs byte-identical ({a.stat().st_size} bytes); "
        f"{elapsed:.1f}s",
    )
