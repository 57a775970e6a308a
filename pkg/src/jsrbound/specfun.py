"""Incomplete beta functions and the binomial tail of the scenario bound.

The regularized function is evaluated by the Lentz continued fraction,
switching to the reflected argument when ``x >= (a+1)/(a+b+2)`` so the
fraction always converges quickly. The inverse is a Newton iteration kept
inside a shrinking bisection bracket.
"""
import math

from ._accel import njit

_CF_EPS = 1e-16
_CF_TINY = 1e-300
_CF_MAXITER = 100_000

INV_TOL = 1e-12
INV_MAXITER = 200


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


@njit
def _lbeta(a, b):
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


@njit
def _stirling_err(z):
    # lgamma(z) - ((z - 0.5) log z - z + 0.5 log(2 pi)), valid for z >= 10
    iz = 1.0 / z
    iz2 = iz * iz
    return iz * (1.0 / 12.0 - iz2 * (1.0 / 360.0 - iz2 * (1.0 / 1260.0 - iz2 * (1.0 / 1680.0 - iz2 / 1188.0))))


@njit
def _log_front(x, a, b):
    # log(x^a (1-x)^b / B(a, b)); Stirling forms avoid lgamma cancellation
    if a < 10.0 and b < 10.0:
        return a * math.log(x) + b * math.log1p(-x) - _lbeta(a, b)
    if a < 10.0 or b < 10.0:
        # one large parameter: lgamma(big) - lgamma(small + big) by Stirling differences
        small = a if a < 10.0 else b
        big = b if a < 10.0 else a
        s = small + big
        diff = -(big - 0.5) * math.log1p(small / big) - small * math.log(s) + small + _stirling_err(big) - _stirling_err(s)
        return a * math.log(x) + b * math.log1p(-x) - math.lgamma(small) - diff
    ab = a + b
    y = 1.0 - x
    t = (x * b - y * a) / a
    u = (y * a - x * b) / b
    # 1 + t = x (a+b) / a and 1 + u = y (a+b) / b; log1p only where t, u are small
    lt = math.log1p(t) if abs(t) < 0.5 else math.log(x) + math.log(ab / a)
    lu = math.log1p(u) if abs(u) < 0.5 else math.log1p(-x) + math.log(ab / b)
    return (
        a * lt
        + b * lu
        + 0.5 * math.log(a * b / (2.0 * math.pi * ab))
        - _stirling_err(a)
        - _stirling_err(b)
        + _stirling_err(ab)
    )


@njit
def _betacf(a, b, x):
    # modified Lentz; converges for x < (a+1)/(a+b+2)
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAXITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            break
    return h


@njit
def _ibeta(x, a, b):
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    lfront = _log_front(x, a, b)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(lfront) * _betacf(a, b, x) / a
    return 1.0 - math.exp(lfront) * _betacf(b, a, 1.0 - x) / b


@njit
def _ibeta_initial_guess(y, a, b):
    if a >= 1.0 and b >= 1.0:
        pp = y if y < 0.5 else 1.0 - y
        t = math.sqrt(-2.0 * math.log(pp))
        x = (2.30753 + t * 0.27061) / (1.0 + t * (0.99229 + t * 0.04481)) - t
        if y < 0.5:
            x = -x
        al = (x * x - 3.0) / 6.0
        h = 2.0 / (1.0 / (2.0 * a - 1.0) + 1.0 / (2.0 * b - 1.0))
        w = x * math.sqrt(al + h) / h - (1.0 / (2.0 * b - 1.0) - 1.0 / (2.0 * a - 1.0)) * (
            al + 5.0 / 6.0 - 2.0 / (3.0 * h)
        )
        e = 2.0 * w
        if e > 700.0:
            return 0.0
        return a / (a + b * math.exp(e))
    lna = math.log(a / (a + b))
    lnb = math.log(b / (a + b))
    t = math.exp(a * lna) / a
    u = math.exp(b * lnb) / b
    w = t + u
    if y < t / w:
        return math.pow(a * w * y, 1.0 / a)
    return 1.0 - math.pow(b * w * (1.0 - y), 1.0 / b)


@njit
def _ibeta_inv(y, a, b):
    if y <= 0.0:
        return 0.0
    if y >= 1.0:
        return 1.0
    lo = 0.0
    hi = 1.0
    x = _ibeta_initial_guess(y, a, b)
    if not (x > 0.0 and x < 1.0):
        x = 0.5
    best = x
    best_f = 2.0
    for _ in range(INV_MAXITER):
        f = _ibeta(x, a, b) - y
        if abs(f) < best_f:
            best = x
            best_f = abs(f)
        if f == 0.0:
            break
        converged = abs(f) <= INV_TOL * min(1.0, 1e3 * y)
        if f > 0.0:
            hi = x
        else:
            lo = x
        if hi - lo <= 2.3e-16 * max(hi, 1e-300):
            break
        logpdf = _log_front(x, a, b) - math.log(x) - math.log1p(-x)
        xn = -1.0
        if logpdf > -700.0:
            xn = x - f / math.exp(logpdf)
        if converged:
            # residual is small; polish x too, since a flat I hides an error in x
            if not (xn > lo and xn < hi) or abs(xn - x) <= 4e-16 * x:
                break
            x = xn
            continue
        if not (xn > lo and xn < hi):
            if lo > 0.0 and hi / lo > 1e3:
                # geometric midpoint resolves quantiles deep in the left tail
                xn = math.sqrt(lo * hi)
            elif lo == 0.0 and hi < 1e-3:
                xn = hi * 1e-3
            else:
                xn = 0.5 * (lo + hi)
        x = xn
    return best


@njit
def _binomial_cdf(d, N, eps):
    # P(Bin(N, eps) <= d) from log-gamma terms
    if eps <= 0.0:
        return 1.0
    if eps >= 1.0:
        return 1.0 if d >= N else 0.0
    le = math.log(eps)
    l1e = math.log1p(-eps)
    lgn = math.lgamma(N + 1.0)
    s = 0.0
    for j in range(d + 1):
        s += math.exp(lgn - math.lgamma(j + 1.0) - math.lgamma(N - j + 1.0) + j * le + (N - j) * l1e)
    return s


def _check_params(a, b):
    if not (a > 0 and b > 0) or math.isinf(a) or math.isinf(b):
        raise DomainError(f"beta parameters must be positive and finite, got a={a}, b={b}")


def _check_unit(x, name="x"):
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {x}")


def reg_inc_beta(x, a, b):
    """Regularized incomplete beta ``I(x; a, b)``."""
    _check_params(a, b)
    _check_unit(x)
    return _ibeta(float(x), float(a), float(b))


def inc_beta(x, a, b):
    """Incomplete beta ``B(x; a, b) = int_0^x t^(a-1) (1-t)^(b-1) dt``."""
    _check_params(a, b)
    _check_unit(x)
    if x == 0.0:
        return 0.0
    return _ibeta(float(x), float(a), float(b)) * math.exp(_lbeta(float(a), float(b)))


def inv_reg_inc_beta(y, a, b):
    """Return ``x`` with ``I(x; a, b) = y``; endpoints map to 0 and 1 exactly."""
    _check_params(a, b)
    _check_unit(y, "y")
    return _ibeta_inv(float(y), float(a), float(b))


def scenario_confidence(eps, N, d):
    """Confidence ``1 - sum_{j<=d} C(N,j) eps^j (1-eps)^(N-j)``.

    This is the probability that a Binomial(N, eps) count exceeds ``d``.
    """
    _check_unit(eps, "eps")
    N = int(N)
    d = int(d)
    if d < 0 or N < d + 1:
        raise DomainError(f"need N >= d + 1, got N={N}, d={d}")
    beta = 1.0 - _binomial_cdf(d, N, float(eps))
    return min(1.0, max(0.0, beta))
