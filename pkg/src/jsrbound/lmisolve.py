"""Small dense semidefinite feasibility by the central-cut ellipsoid method.

The decision variable is a symmetric ``n x n`` matrix ``P`` with ``P >= I``
(and ``P <= t I`` for a box ``t``). It is searched in its scaled
half-vectorization ``svec(P)`` of length ``d = n(n+1)/2``: off-diagonal
entries carry a factor ``sqrt(2)`` so ``svec(A) @ svec(B) = trace(A B)``.

Two constraint families are supported:

* :class:`QuadConstraint` ``u' P u <= c v' P v`` -- one linear cut each;
* :class:`LmiConstraint` ``A' P A <= c P`` -- cut along the eigenvector of
  the largest eigenvalue of ``A' P A - c P``.

Infeasibility is certified either by a single cut whose half-space misses
the current ellipsoid or by the ellipsoid volume dropping below that of a
ball of radius ``VOLUME_RADIUS``; in both cases no ``P`` satisfies all
constraints with a margin.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

from ._accel import njit

log = logging.getLogger(__name__)

TOL_FEAS = 1e-7
TOL_PSD = 1e-8
TOL_OBJ = 1e-4
VOLUME_RADIUS = 1e-9
T_MAX = 1e6
ITER_FACTOR = 200

_FEASIBLE = 0
_INFEASIBLE = 1
_UNDECIDED = 2


class NotPositiveDefinite(ValueError):
    pass


class Status(enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    UNDECIDED = "undecided"


_STATUS = {_FEASIBLE: Status.FEASIBLE, _INFEASIBLE: Status.INFEASIBLE, _UNDECIDED: Status.UNDECIDED}


@dataclass(frozen=True)
class QuadConstraint:
    """``u' P u <= c * v' P v``, i.e. ``<u u' - c v v', P> <= 0``."""

    u: np.ndarray
    v: np.ndarray
    c: float

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float).reshape(-1)
        v = np.asarray(self.v, dtype=float).reshape(-1)
        if u.shape != v.shape:
            raise ValueError(f"quad constraint vectors differ in length: {u.shape} vs {v.shape}")
        if not self.c >= 0:
            raise ValueError("contraction level must be >= 0")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "c", float(self.c))

    def matrix(self) -> np.ndarray:
        return np.outer(self.u, self.u) - self.c * np.outer(self.v, self.v)


@dataclass(frozen=True)
class LmiConstraint:
    """``A' P A <= c P`` in the semidefinite order."""

    A: np.ndarray
    c: float

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"LMI matrix must be square, got {A.shape}")
        if not self.c >= 0:
            raise ValueError("contraction level must be >= 0")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "c", float(self.c))


@dataclass
class SolveOutcome:
    status: Status
    witness: np.ndarray | None = None
    objective: float | None = None
    iterations: int = 0
    solves: int = 1

    @property
    def feasible(self) -> bool:
        return self.status is Status.FEASIBLE


# -- symmetric linear algebra ----------------------------------------------


def svec_dim(n: int) -> int:
    return n * (n + 1) // 2


@njit
def _svec(S):
    n = S.shape[0]
    out = np.empty(n * (n + 1) // 2)
    r2 = math.sqrt(2.0)
    k = 0
    for i in range(n):
        out[k] = S[i, i]
        k += 1
        for j in range(i + 1, n):
            out[k] = r2 * S[i, j]
            k += 1
    return out


@njit
def _smat(x, n):
    S = np.empty((n, n))
    h = 1.0 / math.sqrt(2.0)
    k = 0
    for i in range(n):
        S[i, i] = x[k]
        k += 1
        for j in range(i + 1, n):
            S[i, j] = h * x[k]
            S[j, i] = S[i, j]
            k += 1
    return S


def svec(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    return _svec(np.ascontiguousarray(0.5 * (S + S.T)))


def smat(x, n: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if n is None:
        n = int(round((math.sqrt(8 * x.shape[0] + 1) - 1) / 2))
    if svec_dim(n) != x.shape[0]:
        raise ValueError(f"vector of length {x.shape[0]} is not a svec of an {n}x{n} matrix")
    return _smat(np.ascontiguousarray(x), n)


def svec_outer_rows(U: np.ndarray) -> np.ndarray:
    """Rows ``svec(u u')`` for each row ``u`` of ``U``."""
    n = U.shape[1]
    iu, ju = np.triu_indices(n)
    w = np.where(iu == ju, 1.0, math.sqrt(2.0))
    # row-major upper triangle matches the _svec ordering
    return U[:, iu] * U[:, ju] * w


def sym_eigen(S):
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got {S.shape}")
    return np.linalg.eigh(0.5 * (S + S.T))


def cholesky(P, require_pd=True):
    """Upper-triangular ``L`` with ``P = L' L``."""
    P = np.asarray(P, dtype=float)
    P = 0.5 * (P + P.T)
    try:
        lower = np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        if require_pd:
            raise NotPositiveDefinite("matrix is not positive definite") from None
        w, V = sym_eigen(P)
        lower = np.linalg.cholesky(V @ np.diag(np.maximum(w, 1e-300)) @ V.T)
    return lower.T.copy()


def spectral_radius(A) -> float:
    A = np.asarray(A, dtype=float)
    if A.ndim == 2:
        if A.shape[0] == 0:
            return 0.0
        return float(np.max(np.abs(np.linalg.eigvals(A))))
    return np.max(np.abs(np.linalg.eigvals(A)), axis=-1)


def spectral_radius_gelfand(A, squarings: int = 12) -> float:
    """Gelfand-formula estimate ``||A^(2^k)||^(1/2^k)`` with rescaling."""
    A = np.asarray(A, dtype=float)
    s = np.linalg.norm(A, 2)
    if s == 0.0:
        return 0.0
    B = A / s
    logscale = 0.0
    for k in range(squarings):
        B = B @ B
        nb = np.linalg.norm(B, 2)
        if nb == 0.0:
            return 0.0
        # running log of ||A^(2^(k+1))|| relative to s^(2^(k+1))
        logscale = 2.0 * logscale + math.log(nb)
        B = B / nb
    return float(s * math.exp(logscale / 2.0**squarings))


# -- ellipsoid kernel --------------------------------------------------------


@njit
def _ellipsoid(Su, Sv, qc, lmi_A, lmi_c, n, t_box, c0, r0, tol_feas, tol_psd, log_vol_stop, max_iter):
    d = n * (n + 1) // 2
    c = c0.copy()
    Q = np.eye(d) * (r0 * r0)
    log_vol = d * math.log(r0)
    K = Su.shape[0]
    L = lmi_A.shape[0]
    g = np.empty(d)
    if d > 1:
        step_log = 0.5 * (d * math.log(d * d / (d * d - 1.0)) + math.log((d - 1.0) / (d + 1.0)))
    else:
        step_log = -math.log(2.0)
    for it in range(max_iter):
        P = _smat(c, n)
        w, V = np.linalg.eigh(P)
        viol = 0.0
        cut = False
        if w[0] < 1.0 - tol_psd:
            v = V[:, 0].copy()
            g[:] = -_svec(np.outer(v, v))
            viol = 1.0 - w[0]
            cut = True
        elif w[n - 1] > t_box * (1.0 + tol_psd):
            v = V[:, n - 1].copy()
            g[:] = _svec(np.outer(v, v))
            viol = w[n - 1] - t_box
            cut = True
        else:
            if K > 0:
                pu = Su @ c
                pv = qc * (Sv @ c)
                worst = -1.0
                iw = -1
                for i in range(K):
                    r = (pu[i] - pv[i]) / (pu[i] + pv[i] + 1e-300)
                    if r > worst:
                        worst = r
                        iw = i
                if worst > tol_feas:
                    g[:] = Su[iw] - qc[iw] * Sv[iw]
                    viol = pu[iw] - pv[iw]
                    cut = True
            if not cut and L > 0:
                worst = -1.0
                lw = 0.0
                vw = np.zeros(n)
                iw = -1
                for i in range(L):
                    A = lmi_A[i]
                    M = A.T @ P @ A - lmi_c[i] * P
                    M = 0.5 * (M + M.T)
                    wm, Vm = np.linalg.eigh(M)
                    vt = Vm[:, n - 1].copy()
                    Avt = A @ vt
                    mag = np.dot(Avt, P @ Avt) + lmi_c[i] * np.dot(vt, P @ vt)
                    r = wm[n - 1] / (mag + 1e-300)
                    if r > worst:
                        worst = r
                        lw = wm[n - 1]
                        vw = Vm[:, n - 1].copy()
                        iw = i
                if worst > tol_feas:
                    Av = lmi_A[iw] @ vw
                    g[:] = _svec(np.outer(Av, Av) - lmi_c[iw] * np.outer(vw, vw))
                    viol = lw
                    cut = True
        if not cut:
            return _FEASIBLE, c, it
        Qg = Q @ g
        gQg = np.dot(g, Qg)
        if not gQg > 0.0:
            return _UNDECIDED, c, it
        sq = math.sqrt(gQg)
        if viol > sq:
            # the whole ellipsoid violates this cut
            return _INFEASIBLE, c, it
        b = Qg / sq
        if d == 1:
            c = c - 0.5 * b
            Q = 0.25 * Q
        else:
            c = c - b / (d + 1.0)
            Q = (d * d / (d * d - 1.0)) * (Q - (2.0 / (d + 1.0)) * np.outer(b, b))
            Q = 0.5 * (Q + Q.T)
        log_vol += step_log
        if log_vol < log_vol_stop:
            return _INFEASIBLE, c, it + 1
    return _UNDECIDED, c, max_iter


# -- public solver surface --------------------------------------------------


def _dimension(quad, lmi, n):
    dims = {q.u.shape[0] for q in quad} | {a.A.shape[0] for a in lmi}
    if n is not None:
        dims.add(int(n))
    if len(dims) > 1:
        raise ValueError(f"inconsistent constraint dimensions: {sorted(dims)}")
    if not dims:
        raise ValueError("dimension unknown: pass n when there are no constraints")
    return dims.pop()


def constraint_slacks(P, quad=(), lmi=(), upper_box=None) -> np.ndarray:
    """Scale-free slacks of every constraint at ``P`` (negative means violated).

    Box: ``lambda_min(P) - 1`` and ``1 - lambda_max(P)/t``. Quad:
    ``(c v'Pv - u'Pu) / (c v'Pv + u'Pu)``. LMI: ``-lambda_max(M) / (w'A'PAw + c w'Pw)``
    with ``M = A'PA - cP`` and ``w`` its top eigenvector. Evaluated directly
    with numpy, independent of the solver kernel.
    """
    P = np.asarray(P, dtype=float)
    P = 0.5 * (P + P.T)
    w = np.linalg.eigvalsh(P)
    out = [w[0] - 1.0]
    if upper_box is not None:
        out.append(1.0 - w[-1] / upper_box)
    for q in quad:
        pu = q.u @ P @ q.u
        pv = q.c * (q.v @ P @ q.v)
        out.append((pv - pu) / (pu + pv + 1e-300))
    for a in lmi:
        M = a.A.T @ P @ a.A - a.c * P
        lam, vecs = np.linalg.eigh(0.5 * (M + M.T))
        top = vecs[:, -1]
        At = a.A @ top
        out.append(-lam[-1] / (At @ P @ At + a.c * (top @ P @ top) + 1e-300))
    return np.array(out)


def satisfies(P, quad=(), lmi=(), upper_box=None, tol=TOL_FEAS) -> bool:
    s = constraint_slacks(P, quad, lmi, upper_box)
    return bool(s[0] >= -TOL_PSD and np.all(s[1:] >= -tol))


def feasibility(quad=(), lmi=(), upper_box=None, *, n=None, candidates=(), max_iter=None) -> SolveOutcome:
    """Find ``P`` with ``I <= P <= t I`` satisfying every constraint.

    ``t`` is ``upper_box`` or the internal box ``T_MAX``. ``candidates`` are
    matrices tried (after ``I``) before the ellipsoid search runs.
    """
    quad = list(quad)
    lmi = list(lmi)
    n = _dimension(quad, lmi, n)
    t = T_MAX if upper_box is None else float(upper_box)
    if t < 1.0 - TOL_PSD:
        return SolveOutcome(Status.INFEASIBLE, iterations=0)
    for cand in (np.eye(n), *candidates):
        if cand is not None and satisfies(cand, quad, lmi, t):
            P = 0.5 * (cand + cand.T)
            return SolveOutcome(Status.FEASIBLE, P, float(np.linalg.eigvalsh(P)[-1]), 0)

    d = svec_dim(n)
    if quad:
        Su = svec_outer_rows(np.stack([q.u for q in quad]))
        Sv = svec_outer_rows(np.stack([q.v for q in quad]))
        qc = np.array([q.c for q in quad])
    else:
        Su = Sv = np.zeros((0, d))
        qc = np.zeros(0)
    if lmi:
        As = np.stack([a.A for a in lmi])
        cs = np.array([a.c for a in lmi])
    else:
        As = np.zeros((0, n, n))
        cs = np.zeros(0)
    half = 0.5 * max(t - 1.0, 0.0)
    c0 = svec((1.0 + half) * np.eye(n))
    r0 = math.sqrt(n) * half * (1.0 + 1e-9) + VOLUME_RADIUS
    if max_iter is None:
        max_iter = ITER_FACTOR * d * d
    code, c, iters = _ellipsoid(
        np.ascontiguousarray(Su),
        np.ascontiguousarray(Sv),
        qc,
        np.ascontiguousarray(As),
        cs,
        n,
        t,
        c0,
        r0,
        TOL_FEAS,
        TOL_PSD,
        d * math.log(VOLUME_RADIUS),
        int(max_iter),
    )
    status = _STATUS[int(code)]
    if status is Status.FEASIBLE:
        P = smat(c, n)
        return SolveOutcome(status, P, float(np.linalg.eigvalsh(P)[-1]), int(iters))
    if status is Status.UNDECIDED:
        log.info("ellipsoid search undecided after %d iterations (d=%d)", iters, d)
    return SolveOutcome(status, iterations=int(iters))


def min_lambda_max(quad=(), lmi=(), *, n=None, tol_obj=TOL_OBJ, candidates=()) -> SolveOutcome:
    """Minimize ``lambda_max(P)`` over ``P >= I`` and the constraints.

    Bisection on the box ``P <= t I``; the returned witness is the best
    feasible point found, within ``tol_obj`` of the optimum.
    """
    quad = list(quad)
    lmi = list(lmi)
    n = _dimension(quad, lmi, n)
    first = feasibility(quad, lmi, n=n, candidates=candidates)
    solves = 1
    iters = first.iterations
    if not first.feasible:
        first.solves = solves
        return first
    best = first.witness
    hi = first.objective
    lo = 1.0
    undecided = False
    while hi - lo > tol_obj:
        mid = 0.5 * (lo + hi)
        out = feasibility(quad, lmi, upper_box=mid, n=n)
        solves += 1
        iters += out.iterations
        if out.feasible:
            best = out.witness
            hi = min(mid, out.objective)
        else:
            undecided |= out.status is Status.UNDECIDED
            lo = mid
    if undecided:
        log.info("undecided box solves treated as infeasible during lambda_max bisection")
    return SolveOutcome(Status.FEASIBLE, best, float(np.linalg.eigvalsh(best)[-1]), iters, solves)
