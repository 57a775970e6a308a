"""Experiment harnesses: N-sweeps, the beta-validity study and the networked demo.

Every trial draws from its own stream ``SeedSequence([seed, trial])`` so results
do not depend on worker count or scheduling; rows are sorted before output.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from .scenario import CSV_FIELDS, BoundsConfig, analyze, constraint_dim
from .sysmodel import (
    SwitchedSystem,
    ValidationError,
    generate_sample,
    normalize_probs,
    random_system,
    strip_hidden,
    trial_rng,
)
from .whitebox import DEFAULT_DEPTH, is_ground_truth, true_rho_for_validation


def _csv_float(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isinf(v) else repr(v)
    return v


def _map(fn, items, workers):
    if workers is None or workers <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# -- N sweep ---------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    trials: int = 5
    N_grid: tuple = tuple(20 + 200 * k for k in range(5))
    l_list: tuple = (1,)
    n_range: tuple = (2, 2)
    m_range: tuple = (2, 2)
    beta: float = 0.95
    depth: int = DEFAULT_DEPTH
    with_oracle: bool = False
    rho_range: tuple = (0.5, 1.5)
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValidationError("trials must be >= 1")
        if not self.N_grid:
            raise ValidationError("N grid is empty")
        if not self.l_list:
            raise ValidationError("l list is empty")
        if any(int(l) < 1 for l in self.l_list):  # noqa: E741
            raise ValidationError("every l must be >= 1")
        if not 0.0 <= self.beta < 1.0:
            raise ValidationError(f"beta must lie in [0, 1), got {self.beta}")
        for name in ("n_range", "m_range"):
            lo, hi = getattr(self, name)
            if lo < 1 or hi < lo:
                raise ValidationError(f"bad {name}: {(lo, hi)}")
        need = constraint_dim(self.n_range[1]) + 1
        if min(self.N_grid) < need:
            raise ValidationError(f"every N must be >= {need} for n up to {self.n_range[1]}")

    @classmethod
    def from_dict(cls, obj) -> "ExperimentConfig":
        obj = dict(obj)
        for k in ("N_grid", "l_list", "n_range", "m_range", "rho_range"):
            if k in obj:
                obj[k] = tuple(obj[k])
        known = set(cls.__dataclass_fields__)
        extra = set(obj) - known
        if extra:
            raise ValidationError(f"unknown config keys: {sorted(extra)}")
        return cls(**obj)


SWEEP_FIELDS = ["trial", "n", "m"] + CSV_FIELDS + ["rho_lo", "rho_hi"]


def _sweep_trial(args):
    cfg, trial = args
    rng = trial_rng(cfg.seed, trial)
    n = int(rng.integers(cfg.n_range[0], cfg.n_range[1] + 1))
    m = int(rng.integers(cfg.m_range[0], cfg.m_range[1] + 1))
    sys = random_system(n, m, rng, rho_range=cfg.rho_range)
    rho = (None, None)
    if cfg.with_oracle:
        rho = true_rho_for_validation(sys, depth=cfg.depth)
    rows = []
    grid = sorted(int(N) for N in cfg.N_grid)
    for l in cfg.l_list:  # noqa: E741
        # nested samples: each N reuses the first N traces of the largest one
        full = strip_hidden(generate_sample(sys, grid[-1], int(l), rng))
        for N in grid:
            rep = analyze(full.head(N), BoundsConfig(beta=cfg.beta, m_claimed=m))
            row = {"trial": trial, "n": n, "m": m, **rep.csv_row()}
            row["rho_lo"], row["rho_hi"] = (_csv_float(r) for r in rho)
            row["_report"] = rep
            rows.append(row)
    return rows


def run_sweep(cfg: ExperimentConfig):
    """One row per ``(trial, N, l)``; ``_report`` holds the full report."""
    chunks = _map(_sweep_trial, [(cfg, t) for t in range(cfg.trials)], cfg.workers)
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (r["trial"], r["l"], r["N"]))
    return rows


SUMMARY_FIELDS = ["N", "l", "trials", "mean_gamma_star", "mean_lower", "mean_upper_best", "median_upper_best", "mean_delta", "frac_unbounded"]


def summarize(rows):
    """Average over trials for each ``(N, l)``; an unbounded trial makes the mean infinite."""
    groups = {}
    for r in rows:
        groups.setdefault((r["N"], r["l"]), []).append(r["_report"])
    out = []
    for (N, l), reps in sorted(groups.items()):  # noqa: E741
        ub = np.array([r.upper_best for r in reps])
        out.append(
            {
                "N": N,
                "l": l,
                "trials": len(reps),
                "mean_gamma_star": float(np.mean([r.gamma_star for r in reps])),
                "mean_lower": float(np.mean([r.lower for r in reps])),
                "mean_upper_best": float(np.mean(ub)),
                "median_upper_best": float(np.median(ub)),
                "mean_delta": float(np.mean([r.delta for r in reps])),
                "frac_unbounded": float(np.mean(np.isinf(ub))),
            }
        )
    return out


def rows_to_csv(rows, fields) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _csv_float(r.get(k)) for k in fields})
    return buf.getvalue()


GNUPLOT_TEMPLATE = """set datafile separator ","
set key autotitle columnhead
set logscale x
set xlabel "N"
set ylabel "JSR bound"
plot "{path}" using 1:5 with linespoints title "mean lower", \\
     "{path}" using 1:7 with linespoints title "median upper"
"""


def gnuplot_script(summary_path) -> str:
    return GNUPLOT_TEMPLATE.format(path=summary_path)


# -- beta validity -----------------------------------------------------------


@dataclass(frozen=True)
class ValidityConfig:
    seed: int = 0
    trials: int = 200
    beta: float = 0.95
    n_choices: tuple = (2, 3)
    m_choices: tuple = (2, 3)
    N_range: tuple = (50, 400)
    l: int = 1  # noqa: E741
    depth: int = DEFAULT_DEPTH
    gap: float = 0.02
    max_attempts: int | None = None
    workers: int = 1
    rho_range: tuple = (0.5, 1.5)

    def __post_init__(self):
        if self.trials < 1:
            raise ValidationError("trials must be >= 1")
        if not 0.0 <= self.beta < 1.0:
            raise ValidationError(f"beta must lie in [0, 1), got {self.beta}")
        if self.N_range[0] < constraint_dim(max(self.n_choices)) + 1 or self.N_range[1] < self.N_range[0]:
            raise ValidationError(f"bad N range {self.N_range}")


def _validity_trial(args):
    cfg, idx = args
    rng = trial_rng(cfg.seed, idx)
    n = int(rng.choice(cfg.n_choices))
    m = int(rng.choice(cfg.m_choices))
    N = int(rng.integers(cfg.N_range[0], cfg.N_range[1] + 1))
    sys = random_system(n, m, rng, rho_range=cfg.rho_range)
    rho_lo, rho_hi = true_rho_for_validation(sys, depth=cfg.depth)
    rec = {"index": idx, "n": n, "m": m, "N": N, "rho_lo": rho_lo, "rho_hi": rho_hi}
    if not is_ground_truth(rho_lo, rho_hi, cfg.gap):
        rec["accepted"] = False
        return rec
    sample = strip_hidden(generate_sample(sys, N, cfg.l, rng))
    rep = analyze(sample, BoundsConfig(beta=cfg.beta, m_claimed=m))
    rec.update(
        accepted=True,
        gamma_star=rep.gamma_star,
        lower=rep.lower,
        upper_best=rep.upper_best,
        valid=bool(rep.upper_best >= rho_lo),
        lower_valid=bool(rep.lower <= rho_hi + 2 * rep.alpha),
        status=rep.status,
    )
    return rec


def wilson_interval(k: int, n: int, level: float = 0.95):
    if n == 0:
        return (0.0, 1.0)
    z = NormalDist().inv_cdf(0.5 + level / 2)
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return (max(0.0, mid - half), min(1.0, mid + half))


def run_validity(cfg: ValidityConfig) -> dict:
    """Draw systems until ``trials`` have a tight white-box bracket; score each one."""
    limit = cfg.max_attempts if cfg.max_attempts is not None else 10 * cfg.trials
    accepted, skipped = [], 0
    nxt = 0
    while len(accepted) < cfg.trials and nxt < limit:
        batch = range(nxt, min(limit, nxt + cfg.trials - len(accepted)))
        nxt = batch.stop
        for rec in _map(_validity_trial, [(cfg, i) for i in batch], cfg.workers):
            if rec["accepted"]:
                accepted.append(rec)
            else:
                skipped += 1
    accepted.sort(key=lambda r: r["index"])
    k = sum(r["valid"] for r in accepted)
    n = len(accepted)
    lo, hi = wilson_interval(k, n)
    return {
        "trials": n,
        "skipped": skipped,
        "beta": cfg.beta,
        "seed": cfg.seed,
        "valid": k,
        "correctness": k / n if n else math.nan,
        "wilson95": [lo, hi],
        "lower_valid": sum(r["lower_valid"] for r in accepted),
        "lower_validity": (sum(r["lower_valid"] for r in accepted) / n) if n else math.nan,
        "records": accepted,
    }


# -- networked control demo -------------------------------------------------

NET_POLES_OPEN = (0.45, 1.1)
NET_POLES_CLOSED = (0.8, -0.7)


def companion(poles) -> np.ndarray:
    """Controllable canonical form with characteristic roots ``poles`` (2x2)."""
    c = np.poly(poles)  # z^2 + c1 z + c2
    return np.array([[0.0, 1.0], [-c[2], -c[1]]])


def place_gain(A: np.ndarray, poles) -> np.ndarray:
    """State feedback ``K`` (row) placing the eigenvalues of ``A + B K`` at ``poles``, ``B = e2``."""
    target = np.poly(poles)
    return np.array([[-target[2] - A[1, 0], -target[1] - A[1, 1]]])


def netctl_matrices():
    A = companion(NET_POLES_OPEN)
    B = np.array([[0.0], [1.0]])
    K = place_gain(A, NET_POLES_CLOSED)
    return A, B, K, A + B @ K


def netctl_system(users: int) -> SwitchedSystem:
    """Four 8-step modes of the channel schedule with normalized slot probabilities."""
    if int(users) != users or users < 2:
        raise ValidationError(f"number of users must be an integer >= 2, got {users}")
    A, _, _, Ac = netctl_matrices()
    mp = np.linalg.matrix_power
    tail = mp(A, 4)
    modes = np.array(
        [
            mp(A, 2) @ mp(Ac, 2) @ tail,
            Ac @ A @ mp(Ac, 2) @ tail,
            A @ mp(Ac, 3) @ tail,
            mp(Ac, 4) @ tail,
        ]
    )
    u = float(users)
    w = [1 / (u - 1) ** 2, 1 / (u * (u - 1)), 1 / ((u - 1) * u), 1 / u**2]
    return SwitchedSystem(modes, normalize_probs(w))


@dataclass
class NetctlResult:
    users: int
    reports: list = field(default_factory=list)

    def first_stable_N(self):
        for r in self.reports:
            if r.upper_best < 1.0:
                return r.N
        return None


def run_netctl(users: int, N_grid, beta=0.95, seed=0, l=1) -> NetctlResult:  # noqa: E741
    """Bounds for growing nested samples of the networked system."""
    sys = netctl_system(users)
    grid = sorted(int(N) for N in N_grid)
    if not grid:
        raise ValidationError("N grid is empty")
    rng = trial_rng(seed, 0)
    full = strip_hidden(generate_sample(sys, grid[-1], l, rng))
    cfg = BoundsConfig(beta=beta, m_claimed=sys.m, min_mode_prob=sys.min_mode_prob)
    return NetctlResult(users, [analyze(full.head(N), cfg) for N in grid])
