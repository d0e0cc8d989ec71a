"""Adaptive step-size control driven by the size of the discrete time derivative."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class Warmup:
    """Graded start ``t_k = T0 (k/N0)**gamma`` used before the controller takes over."""

    gamma: float = 3.0
    N0: int = 30
    T0: float = 0.01

    def __post_init__(self):
        if not (self.gamma >= 1.0 and self.N0 >= 1 and self.T0 > 0.0):
            raise ParameterError("warm-up needs gamma >= 1, N0 >= 1 and T0 > 0")

    def steps(self) -> np.ndarray:
        levels = self.T0 * (np.arange(self.N0 + 1) / self.N0) ** self.gamma
        levels[-1] = self.T0
        return np.diff(levels)


@dataclass(frozen=True)
class AdaptivePolicy:
    tau_min: float = 1e-3
    tau_max: float = 0.1
    eta: float = 1e3
    warmup: Warmup | None = None

    def __post_init__(self):
        if not (0.0 < self.tau_min <= self.tau_max):
            raise ParameterError(f"need 0 < tau_min <= tau_max, got {self.tau_min}, {self.tau_max}")
        if not self.eta > 0.0:
            raise ParameterError(f"eta must be positive, got {self.eta}")


def next_step(policy: AdaptivePolicy, dphi_dt_l2: float, restriction_bound: float | None = None) -> float:
    """``max(tau_min, tau_max / sqrt(1 + eta * |d_tau phi|^2))``, clamped to a stability bound."""
    if not dphi_dt_l2 >= 0.0:
        raise ParameterError(f"norm of the time derivative must be >= 0, got {dphi_dt_l2}")
    if math.isinf(policy.eta) or math.isinf(dphi_dt_l2):
        tau = policy.tau_min if dphi_dt_l2 > 0.0 else policy.tau_max
    else:
        tau = max(policy.tau_min, policy.tau_max / math.sqrt(1.0 + policy.eta * dphi_dt_l2**2))
    if restriction_bound is not None:
        tau = min(tau, restriction_bound)
    return tau
