"""Nonuniform time meshes ``0 = t_0 < t_1 < ... < t_N = T``."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class TimeMesh:
    levels: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=np.float64)
        if levels.ndim != 1 or levels.size < 2:
            raise ParameterError("a mesh needs at least two levels")
        if levels[0] != 0.0:
            raise ParameterError("mesh must start at t_0 = 0")
        if not np.all(np.isfinite(levels)) or np.any(np.diff(levels) <= 0.0):
            raise ParameterError("mesh levels must be finite and strictly increasing")
        levels.setflags(write=False)
        object.__setattr__(self, "levels", levels)

    @classmethod
    def from_steps(cls, steps, meta=None) -> "TimeMesh":
        steps = np.asarray(steps, dtype=np.float64)
        if steps.ndim != 1 or steps.size == 0 or np.any(steps <= 0.0):
            raise ParameterError("steps must be a non-empty vector of positive numbers")
        return cls(np.concatenate([[0.0], np.cumsum(steps)]), meta or {})

    @property
    def N(self) -> int:
        return self.levels.size - 1

    @property
    def T(self) -> float:
        return float(self.levels[-1])

    @property
    def steps(self) -> np.ndarray:
        """tau_1..tau_N as a length-N array (``steps[k-1] == tau_k``)."""
        return np.diff(self.levels)

    @property
    def ratios(self) -> np.ndarray:
        """r_2..r_N as a length N-1 array."""
        tau = self.steps
        return tau[1:] / tau[:-1]

    @property
    def max_step(self) -> float:
        return float(self.steps.max())

    def tau(self, k: int) -> float:
        return float(self.levels[k] - self.levels[k - 1])

    def prefix(self, n: int) -> "TimeMesh":
        return TimeMesh(self.levels[: n + 1], dict(self.meta))

    def extend(self, tau: float) -> "TimeMesh":
        if not tau > 0.0:
            raise ParameterError(f"step must be positive, got {tau}")
        return TimeMesh(np.append(self.levels, self.levels[-1] + tau), dict(self.meta))

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key, val in self.meta.items():
            buf.write(f"# {key}={val}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "t_k", "tau_k", "r_k"])
        w.writerow([0, repr(0.0), "", ""])
        tau = self.steps
        for k in range(1, self.N + 1):
            r = "" if k == 1 else repr(float(tau[k - 1] / tau[k - 2]))
            w.writerow([k, repr(float(self.levels[k])), repr(float(tau[k - 1])), r])
        return buf.getvalue()


def _check_TN(T, N):
    if not (T > 0 and math.isfinite(T)):
        raise ParameterError(f"T must be positive and finite, got {T}")
    if int(N) != N or N < 1:
        raise ParameterError(f"N must be a positive integer, got {N}")
    return float(T), int(N)


def make_uniform(T: float, N: int) -> TimeMesh:
    T, N = _check_TN(T, N)
    levels = T * (np.arange(N + 1) / N)
    levels[-1] = T
    return TimeMesh(levels, {"kind": "uniform", "T": T, "N": N})


def make_graded(T: float, N: int, gamma: float) -> TimeMesh:
    T, N = _check_TN(T, N)
    if not gamma >= 1.0:
        raise ParameterError(f"grading exponent must be >= 1, got {gamma}")
    levels = T * (np.arange(N + 1) / N) ** gamma
    levels[-1] = T
    return TimeMesh(levels, {"kind": "graded", "T": T, "N": N, "gamma": gamma})


def make_fixed_ratio(T: float, N: int, r: float) -> TimeMesh:
    T, N = _check_TN(T, N)
    if not r > 0.0:
        raise ParameterError(f"step ratio must be positive, got {r}")
    # geometric sum computed in log space so large r**N does not overflow
    powers = np.exp(np.arange(N) * math.log(r) - (N - 1) * max(math.log(r), 0.0))
    steps = T * powers / powers.sum()
    mesh = TimeMesh.from_steps(steps)
    levels = np.array(mesh.levels)
    levels[-1] = T
    return TimeMesh(levels, {"kind": "fixed-ratio", "T": T, "N": N, "ratio": r})


def _uniform_open(rng: np.random.Generator, size: int) -> np.ndarray:
    # Generator.random draws from [0, 1); reject exact zeros to stay in (0, 1)
    s = rng.random(size)
    while np.any(s == 0.0):
        zero = s == 0.0
        s[zero] = rng.random(int(zero.sum()))
    return s


def make_random(T: float, N: int, seed: int) -> TimeMesh:
    T, N = _check_TN(T, N)
    rng = np.random.default_rng(seed)
    s = _uniform_open(rng, N)
    levels = np.concatenate([[0.0], T * np.cumsum(s) / s.sum()])
    levels[-1] = T
    return TimeMesh(levels, {"kind": "random", "T": T, "N": N, "seed": seed, "rng": "PCG64"})


def composite_split(T: float, N: int, gamma: float) -> tuple[float, int]:
    """Return ``(T0, N0)`` for the graded-head / random-tail mesh."""
    T0 = min(1.0 / gamma, T)
    N0 = math.ceil(N / (T + 1.0 - 1.0 / gamma))
    return T0, N0


def make_composite(T: float, N: int, gamma: float, seed: int) -> TimeMesh:
    T, N = _check_TN(T, N)
    if not gamma >= 1.0:
        raise ParameterError(f"grading exponent must be >= 1, got {gamma}")
    if T < 1.0 / gamma:
        raise ParameterError("composite mesh requires T >= 1/gamma")
    T0, N0 = composite_split(T, N, gamma)
    if N0 > N:
        raise ParameterError(f"graded head needs N0={N0} > N={N} steps")
    N1 = N - N0
    if N1 == 0 and T0 < T:
        raise ParameterError("no steps left for the random tail on (T0, T]")
    head = T0 * (np.arange(N0 + 1) / N0) ** gamma
    head[-1] = T0
    if N1 > 0 and T0 < T:
        rng = np.random.default_rng(seed)
        s = _uniform_open(rng, N1)
        tail = T0 + (T - T0) * np.cumsum(s) / s.sum()
        levels = np.concatenate([head, tail])
    else:
        levels = head
    levels[-1] = T
    return TimeMesh(levels, {"kind": "composite", "T": T, "N": N, "gamma": gamma,
                             "seed": seed, "T0": T0, "N0": N0, "rng": "PCG64"})
