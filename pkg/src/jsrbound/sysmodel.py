"""Switched linear systems, hidden-mode simulation, and trace/system files.

Randomness always comes from a ``numpy.random.Generator`` (PCG64). Harnesses
derive one independent stream per trial with :func:`trial_rng`.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

PROB_TOL = 1e-12
NORM_TOL = 1e-12


class ValidationError(ValueError):
    """Malformed system, trace, or sample."""


class ParseError(ValidationError):
    """Malformed file content; the message names the line and field."""


def make_rng(seed=None) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent PCG64 stream for ``(seed, trial)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(trial)])))


@dataclass(frozen=True)
class SwitchedSystem:
    modes: np.ndarray  # (m, n, n)
    mode_probs: np.ndarray  # (m,)

    def __post_init__(self):
        modes = np.asarray(self.modes, dtype=float)
        if modes.ndim == 2:
            modes = modes[None]
        if modes.ndim != 3 or modes.shape[0] < 1 or modes.shape[1] != modes.shape[2]:
            raise ValidationError(f"modes must be a non-empty stack of square matrices, got shape {modes.shape}")
        if not np.all(np.isfinite(modes)):
            raise ValidationError("mode matrices must be finite")
        probs = np.asarray(self.mode_probs, dtype=float).reshape(-1)
        if probs.shape[0] != modes.shape[0]:
            raise ValidationError(f"{modes.shape[0]} modes but {probs.shape[0]} probabilities")
        if np.any(probs <= 0) or abs(probs.sum() - 1.0) > PROB_TOL:
            raise ValidationError("mode probabilities must be positive and sum to 1")
        modes.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "mode_probs", probs)

    @classmethod
    def uniform(cls, modes) -> "SwitchedSystem":
        modes = np.asarray(modes, dtype=float)
        if modes.ndim == 2:
            modes = modes[None]
        m = modes.shape[0]
        return cls(modes, np.full(m, 1.0 / m))

    @property
    def n(self) -> int:
        return self.modes.shape[1]

    @property
    def m(self) -> int:
        return self.modes.shape[0]

    @property
    def min_mode_prob(self) -> float:
        return float(self.mode_probs.min())

    def scaled(self, factor: float) -> "SwitchedSystem":
        return SwitchedSystem(self.modes * factor, self.mode_probs)

    def __eq__(self, other):
        if not isinstance(other, SwitchedSystem):
            return NotImplemented
        return np.array_equal(self.modes, other.modes) and np.array_equal(self.mode_probs, other.mode_probs)

    __hash__ = None


@dataclass(frozen=True)
class Trace:
    x0: np.ndarray
    states: np.ndarray  # (l, n): x_1 ... x_l
    hidden_modes: np.ndarray | None = None

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        states = np.asarray(self.states, dtype=float)
        if states.ndim == 1:
            states = states[None]
        if states.ndim != 2 or states.shape[0] < 1 or states.shape[1] != x0.shape[0]:
            raise ValidationError(f"states must be (l >= 1, {x0.shape[0]}), got {states.shape}")
        if abs(np.linalg.norm(x0) - 1.0) > NORM_TOL:
            raise ValidationError(f"x0 must be a unit vector, |x0| = {np.linalg.norm(x0)!r}")
        modes = self.hidden_modes
        if modes is not None:
            modes = np.asarray(modes, dtype=np.int64).reshape(-1)
            if modes.shape[0] != states.shape[0]:
                raise ValidationError("hidden modes must have one entry per state")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "hidden_modes", modes)

    @property
    def l(self) -> int:  # noqa: E743
        return self.states.shape[0]

    @property
    def n(self) -> int:
        return self.x0.shape[0]

    @property
    def last(self) -> np.ndarray:
        return self.states[-1]


@dataclass(frozen=True)
class SampleSet:
    traces: tuple
    claimed_m: int | None = None
    claimed_min_prob: float | None = None
    _arrays: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        traces = tuple(self.traces)
        if len(traces) < 1:
            raise ValidationError("a sample needs at least one trace")
        n, l = traces[0].n, traces[0].l
        for i, tr in enumerate(traces):
            if tr.n != n:
                raise ValidationError(f"trace {i} has dimension {tr.n}, expected {n}")
            if tr.l != l:
                raise ValidationError(f"trace {i} has length {tr.l}, expected {l}")
        if self.claimed_m is not None and int(self.claimed_m) < 1:
            raise ValidationError("claimed mode count must be >= 1")
        if self.claimed_min_prob is not None and not (0 < self.claimed_min_prob <= 1):
            raise ValidationError("claimed minimum mode probability must lie in (0, 1]")
        object.__setattr__(self, "traces", traces)

    @property
    def N(self) -> int:
        return len(self.traces)

    @property
    def n(self) -> int:
        return self.traces[0].n

    @property
    def l(self) -> int:  # noqa: E743
        return self.traces[0].l

    @property
    def has_hidden(self) -> bool:
        return any(tr.hidden_modes is not None for tr in self.traces)

    def initial_states(self) -> np.ndarray:
        return np.stack([tr.x0 for tr in self.traces])

    def final_states(self) -> np.ndarray:
        return np.stack([tr.last for tr in self.traces])

    def head(self, k: int) -> "SampleSet":
        return replace(self, traces=self.traces[:k])


def sample_unit_sphere(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform point on the unit sphere in R^n (normalized Gaussian)."""
    if n < 1:
        raise ValidationError("dimension must be >= 1")
    while True:
        g = rng.standard_normal(n)
        r = np.linalg.norm(g)
        if r > 1e-300:
            return g / r


def generate_trace(sys: SwitchedSystem, l: int, rng: np.random.Generator, x0=None) -> Trace:  # noqa: E741
    if l < 1:
        raise ValidationError("trace length must be >= 1")
    if x0 is None:
        x0 = sample_unit_sphere(sys.n, rng)
    modes = rng.choice(sys.m, size=l, p=sys.mode_probs)
    states = np.empty((l, sys.n))
    x = np.asarray(x0, dtype=float)
    for k, j in enumerate(modes):
        x = sys.modes[j] @ x
        states[k] = x
    return Trace(x0, states, modes)


def generate_sample(sys: SwitchedSystem, N: int, l: int, rng: np.random.Generator) -> SampleSet:  # noqa: E741
    if N < 1:
        raise ValidationError("N must be >= 1")
    traces = tuple(generate_trace(sys, l, rng) for _ in range(N))
    return SampleSet(traces, claimed_m=sys.m)


def strip_hidden(sample: SampleSet) -> SampleSet:
    traces = tuple(Trace(tr.x0, tr.states) for tr in sample.traces)
    return replace(sample, traces=traces)


def replay(sys: SwitchedSystem, trace: Trace) -> np.ndarray:
    """Recompute the states of a simulated trace from its hidden modes."""
    if trace.hidden_modes is None:
        raise ValidationError("trace carries no hidden modes")
    out = np.empty_like(trace.states)
    x = trace.x0
    for k, j in enumerate(trace.hidden_modes):
        x = sys.modes[j] @ x
        out[k] = x
    return out


def random_system(n, m, rng, rho_range=(0.5, 1.5), depth=6, l=1) -> SwitchedSystem:
    """Gaussian modes rescaled so the white-box upper bound lands in ``rho_range``."""
    from .whitebox import true_rho_for_validation

    modes = rng.standard_normal((m, n, n))
    target = rng.uniform(*rho_range)
    sys = SwitchedSystem.uniform(modes)
    _, hi = true_rho_for_validation(sys, depth=depth, l=l)
    if hi <= 0:
        return sys
    return sys.scaled(target / hi)


# -- files -----------------------------------------------------------------


def _as_matrix(rows, n, where):
    try:
        a = np.array(rows, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: not a numeric matrix ({exc})") from None
    if a.shape != (n, n):
        raise ValidationError(f"{where}: expected {n}x{n} matrix, got shape {a.shape}")
    return a


def system_to_dict(sys: SwitchedSystem) -> dict:
    return {
        "n": sys.n,
        "m": sys.m,
        "modes": sys.modes.tolist(),
        "probs": sys.mode_probs.tolist(),
    }


def system_from_dict(obj, where="system") -> SwitchedSystem:
    for key in ("n", "m", "modes"):
        if key not in obj:
            raise ParseError(f"{where}: missing field '{key}'")
    n, m = obj["n"], obj["m"]
    if not isinstance(n, int) or not isinstance(m, int) or n < 1 or m < 1:
        raise ParseError(f"{where}: fields 'n' and 'm' must be positive integers")
    modes = obj["modes"]
    if not isinstance(modes, list) or len(modes) != m:
        raise ValidationError(f"{where}: expected {m} mode matrices")
    mats = np.stack([_as_matrix(a, n, f"{where}: modes[{i}]") for i, a in enumerate(modes)])
    probs = obj.get("probs")
    if probs is None:
        probs = [1.0 / m] * m
    if not isinstance(probs, list) or len(probs) != m:
        raise ValidationError(f"{where}: expected {m} probabilities")
    return SwitchedSystem(mats, np.array(probs, dtype=float))


def save_system(sys: SwitchedSystem, path) -> None:
    Path(path).write_text(json.dumps(system_to_dict(sys)) + "\n")


def load_system(path) -> SwitchedSystem:
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise ParseError(f"{path}: top level must be an object")
    return system_from_dict(obj, where=str(path))


def trace_to_dict(tr: Trace) -> dict:
    out = {"x0": tr.x0.tolist(), "states": tr.states.tolist()}
    if tr.hidden_modes is not None:
        out["modes"] = tr.hidden_modes.tolist()
    return out


def trace_from_dict(obj, where="trace", read_modes=True) -> Trace:
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: expected an object")
    for key in ("x0", "states"):
        if key not in obj:
            raise ParseError(f"{where}: missing field '{key}'")
    try:
        x0 = np.array(obj["x0"], dtype=float)
        states = np.array(obj["states"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: non-numeric state data ({exc})") from None
    if x0.ndim != 1:
        raise ValidationError(f"{where}: 'x0' must be a flat vector")
    if states.ndim != 2 or states.shape[1] != x0.shape[0]:
        raise ValidationError(f"{where}: 'states' must be a list of length-{x0.shape[0]} vectors")
    modes = None
    if read_modes and "modes" in obj:
        modes = obj["modes"]
        if not isinstance(modes, list) or not all(isinstance(j, int) for j in modes):
            raise ParseError(f"{where}: 'modes' must be a list of integers")
        if len(modes) != states.shape[0]:
            raise ValidationError(f"{where}: 'modes' has {len(modes)} entries for {states.shape[0]} states")
    try:
        return Trace(x0, states, modes)
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}") from None


def save_traces(sample: SampleSet, path) -> None:
    with open(path, "w") as fh:
        for tr in sample.traces:
            fh.write(json.dumps(trace_to_dict(tr)) + "\n")


def load_traces(path, claimed_m=None, claimed_min_prob=None, read_modes=True) -> SampleSet:
    """Read a JSON-lines trace file.

    With ``read_modes=False`` any hidden mode fields are ignored without being
    parsed, which is what the black-box analysis path uses.
    """
    traces = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}: line {lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{where}: {exc.msg} (column {exc.colno})") from None
            traces.append(trace_from_dict(obj, where, read_modes=read_modes))
    if not traces:
        raise ValidationError(f"{path}: no traces")
    try:
        return SampleSet(tuple(traces), claimed_m=claimed_m, claimed_min_prob=claimed_min_prob)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def export_traces_csv(sample: SampleSet, path) -> None:
    """One row per state: ``trace, step, x0..x{n-1}`` (step 0 is the initial point)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trace", "step"] + [f"x{i}" for i in range(sample.n)])
        for t, tr in enumerate(sample.traces):
            w.writerow([t, 0] + [repr(float(v)) for v in tr.x0])
            for k, x in enumerate(tr.states, 1):
                w.writerow([t, k] + [repr(float(v)) for v in x])


def normalize_probs(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if np.any(w <= 0) or not math.isfinite(w.sum()):
        raise ValidationError("weights must be positive and finite")
    return w / w.sum()
