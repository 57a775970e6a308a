"""Data-driven JSR bounds from observed traces.

Pipeline for a sample of N traces ``(x0, ..., xl)``:

1. ``gamma_star``: smallest ``gamma`` (bisection, step ``alpha``) for which
   some ``P >= I`` satisfies ``xl' P xl <= gamma^(2l) x0' P x0`` on every trace.
2. ``solve_opt``: the ``P`` of minimal ``lambda_max`` at that level.
3. Violation level ``eps`` at confidence ``beta`` from the binomial tail,
   spread over the sphere (``eps * m^l``), distorted by ``kappa(P)``.
4. Shrinkage ``delta`` from the spherical-cap measure; the upper bound is
   ``gamma* (1 + eta) / delta^(1/l)`` and the lower bound ``gamma* / n^(1/(2l))``.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import lmisolve
from .lmisolve import NotPositiveDefinite, QuadConstraint, Status
from .specfun import DomainError, inv_reg_inc_beta, reg_inc_beta
from .sysmodel import SampleSet, ValidationError

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 1e-3
BRACKET_FLOOR = 1e-12


class SampleTooSmall(ValidationError):
    def __init__(self, N, required, n):
        super().__init__(f"sample has N={N} traces; dimension n={n} needs N >= {required}")
        self.N = N
        self.required = required


@dataclass(frozen=True)
class BoundsConfig:
    beta: float = 0.95
    l: int | None = None  # noqa: E741  (None: take it from the sample)
    eta: float = 0.0
    alpha: float = DEFAULT_ALPHA
    bracket_hint: float | None = None
    m_claimed: int | None = None
    min_mode_prob: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if not self.eta >= 0:
            raise ValueError("eta must be >= 0")
        if self.m_claimed is not None and self.m_claimed < 1:
            raise ValueError("mode count must be >= 1")
        if self.min_mode_prob is not None and not 0 < self.min_mode_prob <= 1:
            raise ValueError("min_mode_prob must lie in (0, 1]")


@dataclass
class BoundsReport:
    gamma_star: float
    P: np.ndarray
    kappa: float
    epsilon: float
    eps_sphere: float
    delta: float
    delta_alt: float
    lower: float
    upper: float
    upper_alt: float
    upper_best: float
    N: int
    n: int
    l: int  # noqa: E741
    m: int | None
    d: int
    beta: float
    eta: float
    alpha: float
    solver_undecided: bool = False
    opt_retried: bool = False
    flags: list = field(default_factory=list)

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.upper_best)

    @property
    def status(self) -> str:
        return "+".join(self.flags) if self.flags else "ok"

    @property
    def verdict(self) -> str:
        if self.upper_best < 1.0:
            return "stable"
        if self.lower > 1.0:
            return "unstable"
        return "inconclusive"

    def to_dict(self) -> dict:
        out = asdict(self)
        out["P"] = np.asarray(self.P).tolist()
        out["status"] = self.status
        out["verdict"] = self.verdict
        for k, v in out.items():
            if isinstance(v, float) and math.isinf(v):
                out[k] = "inf"
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, obj) -> "BoundsReport":
        obj = dict(obj)
        obj.pop("status", None)
        obj.pop("verdict", None)
        for k, v in obj.items():
            if v == "inf":
                obj[k] = math.inf
        obj["P"] = np.array(obj["P"], dtype=float)
        return cls(**obj)

    def csv_row(self) -> dict:
        row = {k: getattr(self, k) for k in CSV_FIELDS if k != "status"}
        row["status"] = self.status
        return {k: _csv_value(v) for k, v in row.items()}


CSV_FIELDS = ["N", "l", "gamma_star", "epsilon", "kappa", "delta", "lower", "upper", "upper_alt", "upper_best", "status"]


def _csv_value(v):
    if isinstance(v, float):
        return "" if math.isinf(v) else repr(v)
    return v


def reports_to_csv(reports, extra=None) -> str:
    buf = io.StringIO()
    extra = extra or [{} for _ in reports]
    keys = list(extra[0].keys()) if extra else []
    w = csv.DictWriter(buf, fieldnames=keys + CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for rep, ex in zip(reports, extra):
        w.writerow({**{k: _csv_value(v) for k, v in ex.items()}, **rep.csv_row()})
    return buf.getvalue()


# -- elementary pieces ----------------------------------------------------


def constraint_dim(n: int) -> int:
    return n * (n + 1) // 2


def trace_constraints(sample: SampleSet, level: float):
    """One ``QuadConstraint`` per trace at contraction level ``level^(2l)``."""
    c = level ** (2 * sample.l)
    return [QuadConstraint(tr.last, tr.x0, c) for tr in sample.traces]


def default_bracket(sample: SampleSet) -> float:
    x0 = sample.initial_states()
    xl = sample.final_states()
    ratios = np.linalg.norm(xl, axis=1) / np.linalg.norm(x0, axis=1)
    return max(float(ratios.max()) ** (1.0 / sample.l), BRACKET_FLOOR)


def gamma_star(sample: SampleSet, cfg: BoundsConfig = BoundsConfig()):
    """Bisection for the smallest feasible contraction level.

    Returns ``(gamma, P, undecided)`` where ``gamma`` is the feasible upper end
    of the final bracket and ``P`` a certificate at that level.
    """
    if sample.N < 1:
        raise ValidationError("empty sample")
    hi = default_bracket(sample)
    if cfg.bracket_hint is not None:
        hi = max(hi, float(cfg.bracket_hint))
    witness = np.eye(sample.n)
    lo = 0.0
    undecided = False
    while hi - lo > cfg.alpha:
        mid = 0.5 * (lo + hi)
        out = lmisolve.feasibility(trace_constraints(sample, mid), n=sample.n, candidates=(witness,))
        if out.feasible:
            hi = mid
            witness = out.witness
        else:
            if out.status is Status.UNDECIDED:
                undecided = True
                log.info("undecided feasibility at gamma=%.6g counted as infeasible", mid)
            lo = mid
    return hi, witness, undecided


def solve_opt(sample: SampleSet, gstar: float, cfg: BoundsConfig = BoundsConfig(), candidates=()):
    """Minimal-``lambda_max`` certificate at level ``(1 + eta) gamma*``.

    Returns ``(P, retried)``. With ``eta == 0`` an infeasible solve at the
    bisection endpoint is retried once at level ``(1 + alpha)`` higher.
    """
    if sample.N < 1:
        raise ValidationError("empty sample")
    level = (1.0 + cfg.eta) * gstar
    out = lmisolve.min_lambda_max(trace_constraints(sample, level), n=sample.n, candidates=candidates)
    retried = False
    if not out.feasible and cfg.eta == 0.0:
        retried = True
        log.info("Opt infeasible at gamma*=%.6g; retrying at (1+alpha) level", gstar)
        out = lmisolve.min_lambda_max(
            trace_constraints(sample, level * (1.0 + cfg.alpha)), n=sample.n, candidates=candidates
        )
    if not out.feasible:
        raise RuntimeError(f"Opt problem {out.status.value} at level {level!r}")
    return out.witness, retried


def epsilon_of_beta(beta: float, N: int, d: int) -> float:
    """Violation level ``eps`` solving ``scenario_confidence(eps, N, d) = beta``.

    The binomial tail equals ``I(eps; d+1, N-d)``, so ``eps`` is the
    corresponding inverse regularized beta value.
    """
    if not 0.0 <= beta < 1.0:
        raise DomainError(f"beta must lie in [0, 1), got {beta}")
    if d < 0 or N < d + 1:
        raise DomainError(f"need N >= d + 1, got N={N}, d={d}")
    if beta == 0.0:
        return 0.0
    return inv_reg_inc_beta(beta, d + 1, N - d)


def violation_on_sphere(eps: float, m: int | None = None, l: int = 1, min_mode_prob: float | None = None) -> float:  # noqa: E741
    """Measure bound ``eps * m^l`` (or ``eps / p_min^l``) of violating initial states, capped at 1."""
    if not 0.0 <= eps <= 1.0:
        raise DomainError(f"eps must lie in [0, 1], got {eps}")
    if min_mode_prob is not None:
        if not min_mode_prob > 0:
            raise DomainError("min_mode_prob must be > 0")
        val = eps / min_mode_prob**l
    else:
        if m is None or m < 1:
            raise DomainError("need a mode count m >= 1 or a min_mode_prob")
        val = eps * float(m) ** l
    return min(1.0, val)


def _eigs_pd(P):
    w = np.linalg.eigvalsh(0.5 * (np.asarray(P, float) + np.asarray(P, float).T))
    if not w[0] > 0:
        raise NotPositiveDefinite("matrix is not positive definite")
    return w


def kappa(P) -> float:
    """Distortion ``sqrt(det P / lambda_min(P)^n)``."""
    w = _eigs_pd(P)
    return float(math.exp(0.5 * float(np.sum(np.log(w / w[0])))))


def kappa_alt_violation(eps_sphere: float, P) -> float:
    """Alternative violating-measure bound ``1 - (1 - eps m^l) sqrt(det P / lambda_max^n)``."""
    w = _eigs_pd(P)
    if not 0.0 <= eps_sphere <= 1.0:
        raise DomainError("eps_sphere must lie in [0, 1]")
    ratio = math.exp(0.5 * float(np.sum(np.log(w / w[-1]))))
    return min(1.0, max(0.0, 1.0 - (1.0 - eps_sphere) * ratio))


def delta_shrink(half_measure: float, n: int) -> float:
    """Inscribed radius left after removing two antipodal caps of total measure ``2 * half_measure``.

    ``sqrt(1 - I^-1(2 x; (n-1)/2, 1/2))``; zero once ``2 x >= 1``.
    """
    if n < 2:
        raise DomainError("delta is defined for n >= 2")
    if not half_measure >= 0:
        raise DomainError("measure must be >= 0")
    y = 2.0 * half_measure
    if y >= 1.0:
        return 0.0
    x = inv_reg_inc_beta(y, 0.5 * (n - 1), 0.5)
    return math.sqrt(max(0.0, 1.0 - x))


def _delta(half_measure, n):
    if n == 1:
        # S^0 = {+1, -1}; a symmetric violating set is empty or everything
        return 1.0 if 2.0 * half_measure < 1.0 else 0.0
    return delta_shrink(half_measure, n)


def _upper(gstar, eta, delta, l):  # noqa: E741
    if delta <= 0.0:
        return math.inf
    return gstar * (1.0 + eta) / delta ** (1.0 / l)


# -- cap geometry ----------------------------------------------------------


@dataclass(frozen=True)
class SphereCap:
    """``{x on the unit sphere : c' x > k}``."""

    c: np.ndarray
    k: float

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if not np.any(c != 0):
            raise DomainError("cap normal must be non-zero")
        object.__setattr__(self, "c", c)

    def contains(self, X) -> np.ndarray:
        return np.asarray(X) @ self.c > self.k


def cap_shrink(cap: SphereCap) -> float:
    return min(1.0, abs(cap.k) / float(np.linalg.norm(cap.c)))


def cap_measure(n: int, delta_cap: float) -> float:
    """Normalized area of a cap whose plane sits at distance ``delta_cap`` from 0."""
    if n < 2:
        raise DomainError("cap measure needs n >= 2")
    if not 0.0 <= delta_cap <= 1.0:
        raise DomainError("cap distance must lie in [0, 1]")
    return 0.5 * reg_inc_beta(1.0 - delta_cap * delta_cap, 0.5 * (n - 1), 0.5)


def cap_measure_of(cap: SphereCap) -> float:
    """Measure of ``cap`` including caps beyond the hemisphere (``k < 0``)."""
    n = cap.c.shape[0]
    r = cap.k / float(np.linalg.norm(cap.c))
    if r >= 1.0:
        return 0.0
    if r <= -1.0:
        return 1.0
    small = cap_measure(n, abs(r))
    return small if r >= 0 else 1.0 - small


# -- full analysis ---------------------------------------------------------


def analyze(sample: SampleSet, cfg: BoundsConfig = BoundsConfig()) -> BoundsReport:
    """Lower and probabilistic upper JSR bounds from a black-box sample."""
    n, N, l = sample.n, sample.N, sample.l  # noqa: E741
    if cfg.l is not None and cfg.l != l:
        raise ValidationError(f"configured trace length {cfg.l} does not match the sample (l={l})")
    d = constraint_dim(n)
    if N < d + 1:
        raise SampleTooSmall(N, d + 1, n)
    m = cfg.m_claimed if cfg.m_claimed is not None else sample.claimed_m
    p_min = cfg.min_mode_prob if cfg.min_mode_prob is not None else sample.claimed_min_prob
    if m is None and p_min is None:
        raise ValidationError("a mode-count bound m (or a minimum mode probability) is required")

    gstar, witness, undecided = gamma_star(sample, cfg)
    P, retried = solve_opt(sample, gstar, cfg, candidates=(witness,))
    eps = epsilon_of_beta(cfg.beta, N, d)
    eps_sphere = violation_on_sphere(eps, m, l, p_min)
    kap = kappa(P)
    delta = _delta(0.5 * eps_sphere * kap, n)
    alt = kappa_alt_violation(eps_sphere, P)
    delta_alt = _delta(0.5 * alt, n)
    upper = _upper(gstar, cfg.eta, delta, l)
    upper_alt = _upper(gstar, cfg.eta, delta_alt, l)
    flags = []
    if undecided:
        flags.append("solver_undecided")
    if retried:
        flags.append("opt_retried")
    best = min(upper, upper_alt)
    if math.isinf(best):
        flags.append("unbounded")
    return BoundsReport(
        gamma_star=gstar,
        P=P,
        kappa=kap,
        epsilon=eps,
        eps_sphere=eps_sphere,
        delta=delta,
        delta_alt=delta_alt,
        lower=gstar / n ** (1.0 / (2 * l)),
        upper=upper,
        upper_alt=upper_alt,
        upper_best=best,
        N=N,
        n=n,
        l=l,
        m=m,
        d=d,
        beta=cfg.beta,
        eta=cfg.eta,
        alpha=cfg.alpha,
        solver_undecided=undecided,
        opt_retried=retried,
        flags=flags,
    )
