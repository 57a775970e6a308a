"""Exit criteria, each at its stated tolerance. One PASS/FAIL line per criterion
is printed in the terminal summary."""
import math
import time

import numpy as np
import pytest

from jsrbound.harness import ValidityConfig, netctl_system, run_netctl, run_validity
from jsrbound.lmisolve import QuadConstraint, Status, constraint_slacks, feasibility
from jsrbound.scenario import (
    BoundsConfig,
    SphereCap,
    analyze,
    cap_measure_of,
    delta_shrink,
    epsilon_of_beta,
)
from jsrbound.specfun import inv_reg_inc_beta, reg_inc_beta, scenario_confidence
from jsrbound.sysmodel import (
    SampleSet,
    SwitchedSystem,
    Trace,
    generate_sample,
    make_rng,
    strip_hidden,
    trial_rng,
)
from jsrbound.whitebox import true_rho_for_validation

pytestmark = pytest.mark.acceptance

ALPHA = 1e-3
VALIDITY_SEED = 2024


@pytest.fixture(scope="module")
def validity():
    t0 = time.perf_counter()
    res = run_validity(ValidityConfig(seed=VALIDITY_SEED, trials=200, beta=0.95, n_choices=(2, 3), m_choices=(2, 3), N_range=(50, 400), l=1))
    res["elapsed"] = time.perf_counter() - t0
    return res


@pytest.mark.slow
def test_01_beta_validity(validity, record):
    ok = validity["trials"] == 200 and validity["correctness"] >= 0.95 and validity["elapsed"] < 900
    lo, hi = validity["wilson95"]
    record(
        "1",
        "beta-validity over 200 systems",
        ok,
        f"correctness {validity['correctness']:.4f} (Wilson95 [{lo:.4f}, {hi:.4f}]), {validity['skipped']} loose brackets skipped, {validity['elapsed']:.0f}s",
    )
    assert ok


@pytest.mark.slow
def test_02_lower_bound_validity(validity, record):
    bad = [r for r in validity["records"] if not r["lower"] <= r["rho_hi"] + 2 * ALPHA]
    ok = not bad and validity["trials"] == 200
    worst = max(r["lower"] - r["rho_hi"] for r in validity["records"])
    record("2", "lower <= rho_hi + 2 alpha in every case", ok, f"{len(bad)} violations, max(lower - rho_hi) = {worst:.4f}")
    assert ok


SANDWICH_MODES = [np.array([[0.6, 0.5], [-0.3, 0.5]]), np.array([[0.4, -0.6], [0.5, 0.3]])]


@pytest.mark.slow
def test_03_sandwich_and_limits(record):
    sys = SwitchedSystem.uniform(SANDWICH_MODES)
    _, rho_hi = true_rho_for_validation(sys)
    grid = (100, 400, 1600, 6400)
    reps = {N: [] for N in grid}
    for trial in range(5):
        full = strip_hidden(generate_sample(sys, grid[-1], 1, trial_rng(7, trial)))
        for N in grid:
            reps[N].append(analyze(full.head(N), BoundsConfig(beta=0.95, m_claimed=2)))
    sandwich = all(
        r.lower <= r.gamma_star * (1 + r.eta) + 1e-12 and (r.unbounded or r.gamma_star * (1 + r.eta) <= r.upper_best + 1e-12)
        for rs in reps.values()
        for r in rs
    )
    mean_delta = [float(np.mean([r.delta for r in reps[N]])) for N in grid]
    mono = all(b >= a for a, b in zip(mean_delta, mean_delta[1:]))
    per_trial_mono = all(all(reps[b][t].delta >= reps[a][t].delta for a, b in zip(grid, grid[1:])) for t in range(5))
    med = float(np.median([r.upper_best for r in reps[6400]]))
    ok = sandwich and mono and per_trial_mono and mean_delta[-1] >= 0.9 and med <= 1.5 * rho_hi
    record(
        "3",
        "sandwich, delta trend, upper limit",
        ok,
        f"sandwich={sandwich}, mean delta {['%.4f' % d for d in mean_delta]}, median upper(6400)={med:.4f} vs rho_hi={rho_hi:.4f}",
    )
    assert ok


def _binomial_root(beta, N, d):
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if scenario_confidence(mid, N, d) < beta:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_04_epsilon_oracle(record):
    rng = make_rng(404)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(0, 37))
        N = d + 1 + int(rng.integers(0, 10_000))
        beta = float(rng.uniform(0.0, 0.9999))
        worst = max(worst, abs(epsilon_of_beta(beta, N, d) - _binomial_root(beta, N, d)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 60
    record("4", "epsilon vs binomial-root bisection", ok, f"max abs diff {worst:.2e} over 100 triples, {elapsed:.1f}s")
    assert ok


def test_05_delta_and_caps(record):
    xs = np.linspace(0.0, 0.5, 100, endpoint=False)
    e2 = max(abs(delta_shrink(x, 2) - math.cos(math.pi * x)) for x in xs)
    e3 = max(abs(delta_shrink(x, 3) - (1 - 2 * x)) for x in xs)
    rng = make_rng(505)
    worst_z = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 5))
        c = rng.standard_normal(n) * rng.uniform(0.5, 3.0)
        cap = SphereCap(c, float(rng.uniform(-0.9, 0.9)) * np.linalg.norm(c))
        X = rng.standard_normal((100_000, n))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        p = float(cap.contains(X).mean())
        want = cap_measure_of(cap)
        se = math.sqrt(want * (1 - want) / len(X))
        worst_z = max(worst_z, abs(p - want) / se)
    ok = e2 <= 1e-9 and e3 <= 1e-9 and worst_z <= 3.0
    record("5", "delta closed forms and cap Monte Carlo", ok, f"n=2 err {e2:.1e}, n=3 err {e3:.1e}, worst cap |z| {worst_z:.2f}")
    assert ok


def test_06_special_functions(record):
    rng = make_rng(606)
    sym, trip = 0.0, 0.0
    cases = []
    for n in range(2, 9):
        cases += [(0.5 * (n - 1), 0.5)] * 20
    for _ in range(150):
        d = int(rng.integers(0, 37))
        N = d + 1 + int(rng.integers(0, 10_000 - d))
        cases.append((float(N - d), float(d + 1)))
    # generic pairs; below 0.5 a tiny b puts the inverse of y near 1 closer to 1 than a double can resolve
    for _ in range(100):
        cases.append(tuple(np.exp(rng.uniform(math.log(0.5), math.log(1e4), 2))))
    for a, b in cases:
        x = float(rng.uniform())
        if 1.0 - (1.0 - x) == x:
            sym = max(sym, abs(reg_inc_beta(x, a, b) + reg_inc_beta(1 - x, b, a) - 1.0))
        y = float(rng.uniform(1e-8, 1 - 1e-8))
        trip = max(trip, abs(reg_inc_beta(inv_reg_inc_beta(y, a, b), a, b) - y))
    ok = sym <= 1e-10 and trip <= 1e-10
    record("6", "beta symmetry and inverse round trip", ok, f"max symmetry err {sym:.1e}, max round-trip err {trip:.1e} over {len(cases)} parameter pairs")
    assert ok


def test_07_solver_soundness(record):
    rng = make_rng(707)
    feasible = infeasible = undecided = 0
    worst = math.inf
    for _ in range(500):
        n = int(rng.integers(1, 6))  # d <= 15
        A = rng.standard_normal((n, n))
        rad = max(abs(np.linalg.eigvals(A)))
        A *= rng.uniform(0.3, 1.5) / rad
        k = int(rng.integers(1, 60))
        X = rng.standard_normal((k, n))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        c = float(rng.uniform(0.2, 2.5))
        quad = [QuadConstraint(A @ x, x, c) for x in X]
        out = feasibility(quad)
        if out.feasible:
            feasible += 1
            worst = min(worst, float(np.min(constraint_slacks(out.witness, quad))))
        elif out.status is Status.INFEASIBLE:
            infeasible += 1
        else:
            undecided += 1
    family_ok = True
    for _ in range(50):
        n = int(rng.integers(1, 6))
        u = np.zeros(n)
        u[0] = 1.0
        extra = [QuadConstraint(rng.standard_normal(n), rng.standard_normal(n), 1.0) for _ in range(int(rng.integers(0, 5)))]
        out = feasibility(extra + [QuadConstraint(u, u, float(rng.uniform(0.0, 0.25)))])
        family_ok &= out.status is Status.INFEASIBLE
    ok = worst >= -1e-6 and family_ok
    record(
        "7",
        "solver witnesses re-verified, P11 <= 0.25 family infeasible",
        ok,
        f"{feasible} feasible (min slack {worst:.1e}), {infeasible} infeasible, {undecided} undecided; family all infeasible={family_ok}",
    )
    assert ok


def _singleton(A, N, seed, x0=None):
    sys = SwitchedSystem.uniform([np.asarray(A, float)])
    s = generate_sample(sys, N, 1, make_rng(seed))
    if x0 is not None:
        x0 = np.asarray(x0, float)
        s = SampleSet((Trace(x0, (sys.modes[0] @ x0)[None]),) + s.traces, claimed_m=1)
    return s


def test_08_closed_form_pipeline(record):
    cfg = BoundsConfig(m_claimed=1)
    g_diag = analyze(_singleton(np.diag([0.9, 0.3]), 50, 1, x0=[1.0, 0.0]), cfg).gamma_star
    g_neg = analyze(_singleton(-np.eye(2), 50, 2), cfg).gamma_star
    lower_2 = analyze(_singleton(2 * np.eye(2), 50, 3), cfg).lower
    ok = abs(g_diag - 0.9) <= 1e-3 and abs(g_neg - 1.0) <= 1e-3 and lower_2 > 1
    record("8", "closed-form pipeline cases", ok, f"diag(0.9,0.3) gamma*={g_diag:.5f}, -I gamma*={g_neg:.5f}, 2I lower={lower_2:.4f}")
    assert ok


@pytest.mark.slow
@pytest.mark.xfail(
    strict=True,
    reason="the stated mode set contains a product with spectral radius 1.0398 > 1, so no valid upper bound can drop below 1",
)
def test_09_networked_demo(record):
    res = run_netctl(3, (100, 250, 500, 1000, 2000, 5000), beta=0.95, seed=0)
    first = res.first_stable_N()
    rho_lo, rho_hi = true_rho_for_validation(netctl_system(3))
    uppers = ", ".join(f"N={r.N}: {r.upper_best:.4f}" for r in res.reports)
    ok = first is not None and first <= 5000
    record("9", "networked demo upper bound < 1 by N=5000", ok, f"{uppers}; white-box JSR in [{rho_lo:.4f}, {rho_hi:.4f}]")
    assert ok
