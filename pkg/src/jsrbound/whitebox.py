"""White-box JSR brackets for known mode sets (the validation oracle)."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import lmisolve
from .lmisolve import LmiConstraint, spectral_radius
from .sysmodel import SwitchedSystem

DEFAULT_DEPTH = 8
PRODUCT_BUDGET = 1_000_000
DEFAULT_ALPHA = 1e-3
GROUND_TRUTH_GAP = 0.02


class BudgetExceeded(ValueError):
    pass


@dataclass
class JsrBracket:
    lower: float
    upper: float
    depth: int
    methods: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _check_budget(m, depth):
    total = sum(m**k for k in range(1, depth + 1))
    if m**depth > PRODUCT_BUDGET:
        raise BudgetExceeded(f"{m}^{depth} products exceed the budget of {PRODUCT_BUDGET}")
    return total


def products(modes: np.ndarray, length: int) -> np.ndarray:
    """All ``m^length`` products ``A_{i_length} ... A_{i_1}`` as an array."""
    modes = np.asarray(modes, dtype=float)
    _check_budget(modes.shape[0], length)
    prods = modes
    for _ in range(length - 1):
        prods = (modes[:, None] @ prods[None]).reshape(-1, *modes.shape[1:])
    return prods


def spectral_norms(stack: np.ndarray) -> np.ndarray:
    """Largest singular value of each matrix, from ``eigvalsh(M' M)``."""
    gram = np.swapaxes(stack, -1, -2) @ stack
    w = np.linalg.eigvalsh(0.5 * (gram + np.swapaxes(gram, -1, -2)))
    return np.sqrt(np.maximum(w[..., -1], 0.0))


def jsr_bruteforce(sys: SwitchedSystem, depth: int = DEFAULT_DEPTH) -> JsrBracket:
    """Bracket from all products up to ``depth``.

    Lower: max of ``rho(Pi)^(1/k)``; upper: min over ``k`` of max ``||Pi||^(1/k)``.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    modes = sys.modes
    _check_budget(sys.m, depth)
    # drop exact duplicates: they generate no new products
    uniq = np.unique(modes.reshape(sys.m, -1), axis=0).reshape(-1, sys.n, sys.n)
    lower = 0.0
    upper = math.inf
    prods = uniq
    for k in range(1, depth + 1):
        if k > 1:
            prods = (uniq[:, None] @ prods[None]).reshape(-1, sys.n, sys.n)
        rho = spectral_radius(prods)
        lower = max(lower, float(np.max(rho)) ** (1.0 / k))
        upper = min(upper, float(np.max(spectral_norms(prods))) ** (1.0 / k))
    return JsrBracket(lower, max(upper, lower), depth, ["products-spectral-radius", "products-norm"])


def jsr_cqf_upper(sys: SwitchedSystem, l: int = 1, alpha: float = DEFAULT_ALPHA) -> float:  # noqa: E741
    """Smallest ``gamma`` (to ``alpha``) with a CQF ``Pi' P Pi <= gamma^(2l) P`` on all ``l``-products."""
    prods = products(sys.modes, l)
    prods = np.unique(prods.reshape(prods.shape[0], -1), axis=0).reshape(-1, sys.n, sys.n)
    hi = float(np.max(spectral_norms(prods))) ** (1.0 / l)
    if hi == 0.0:
        return 0.0
    lo = 0.0
    witness = np.eye(sys.n)
    while hi - lo > alpha:
        mid = 0.5 * (lo + hi)
        c = mid ** (2 * l)
        out = lmisolve.feasibility(lmi=[LmiConstraint(A, c) for A in prods], n=sys.n, candidates=(witness,))
        if out.feasible:
            hi = mid
            witness = out.witness
        else:
            lo = mid
    return hi


def true_rho_for_validation(sys: SwitchedSystem, depth: int = DEFAULT_DEPTH, l: int = 1, alpha=DEFAULT_ALPHA):  # noqa: E741
    """``(rho_lo, rho_hi)``: product lower bound and the tighter of the two upper bounds."""
    bf = jsr_bruteforce(sys, depth)
    cqf = jsr_cqf_upper(sys, l, alpha)
    return bf.lower, min(bf.upper, cqf)


def whitebox_bracket(sys: SwitchedSystem, depth: int = DEFAULT_DEPTH, l: int = 1, alpha=DEFAULT_ALPHA) -> JsrBracket:  # noqa: E741
    bf = jsr_bruteforce(sys, depth)
    cqf = jsr_cqf_upper(sys, l, alpha)
    methods = list(bf.methods) + [f"cqf-l{l}"]
    return JsrBracket(bf.lower, min(bf.upper, cqf), depth, methods)


def is_ground_truth(rho_lo: float, rho_hi: float, gap: float = GROUND_TRUTH_GAP) -> bool:
    return rho_hi - rho_lo <= gap * rho_hi
