"""Variable-step L1-type time stepping for the time-fractional Cahn-Hilliard equation.

    d_t^alpha phi = kappa * Lap(mu),   mu = phi^3 - phi - eps^2 Lap(phi)

on the periodic square, with three schemes:

* ``L1``  - backward-Euler type, L1 kernels at ``t_n``;
* ``L1h`` - Crank-Nicolson type, half-grid L1 kernels at ``t_{n-1/2}``;
* ``L1a`` - Crank-Nicolson type, averaged L1 kernels at ``t_{n-1/2}``.

The half-point schemes use the second-order midpoint nonlinearity
``phi_n^3/3 + phi_n phi_{n-1}^2/2 + phi_{n-1}^3/6 - (phi_n + phi_{n-1})/2``.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import spectral
from .adaptive import AdaptivePolicy, next_step
from .errors import ParameterError, SolverError, SplittingError, StepRestrictionError
from .kernels import Family, KernelTable, check_alpha
from .spectral import Field2D, Grid2D
from .timemesh import TimeMesh

logger = logging.getLogger(__name__)

FP_TOL = 1e-12
FP_MAX_ITER = 500
# Shift used inside the fixed-point split; it changes the iteration, not the scheme.
DEFAULT_STABILIZATION = 2.0


class Scheme(str, enum.Enum):
    L1 = "L1"
    L1H = "L1h"
    L1A = "L1a"

    @classmethod
    def parse(cls, value) -> "Scheme":
        if isinstance(value, cls):
            return value
        for s in cls:
            if s.value.lower() == str(value).lower():
                return s
        raise ParameterError(f"unknown scheme {value!r}")

    @property
    def family(self) -> Family:
        return {Scheme.L1: Family.L1, Scheme.L1H: Family.L1H, Scheme.L1A: Family.L1A}[self]

    @property
    def half_point(self) -> bool:
        return self is not Scheme.L1


@dataclass(frozen=True)
class ModelParams:
    kappa: float
    epsilon: float
    alpha: float

    def __post_init__(self):
        if not (self.kappa > 0.0 and self.epsilon > 0.0):
            raise ParameterError("kappa and epsilon must be positive")
        check_alpha(self.alpha)


# --- pointwise pieces -------------------------------------------------------------


def f(phi):
    return phi**3 - phi


def F(phi):
    return 0.25 * (phi**2 - 1.0) ** 2


def nonlinear_midpoint(phi_n, phi_prev):
    phi_n = phi_n.values if isinstance(phi_n, Field2D) else np.asarray(phi_n, dtype=np.float64)
    q = phi_prev.values if isinstance(phi_prev, Field2D) else np.asarray(phi_prev, dtype=np.float64)
    return phi_n**3 / 3.0 + 0.5 * phi_n * q**2 + q**3 / 6.0 - 0.5 * (phi_n + q)


def energy_original(phi, params: ModelParams, grid: Grid2D | None = None) -> float:
    g = phi.grid if isinstance(phi, Field2D) else grid
    v = phi.values if isinstance(phi, Field2D) else phi
    return 0.5 * params.epsilon**2 * spectral.grad_norm_sq(v, g) + g.h**2 * float(np.sum(F(v)))


def chemical_potential(phi: np.ndarray, params: ModelParams, grid: Grid2D) -> np.ndarray:
    return f(phi) - params.epsilon**2 * spectral.laplacian(phi, grid)


def h1_norm(phi, grid: Grid2D | None = None) -> float:
    g = phi.grid if isinstance(phi, Field2D) else grid
    return math.sqrt(spectral.l2_norm_sq(phi, g) + spectral.grad_norm_sq(phi, g))


def h1_bound(E0: float, params: ModelParams, area: float) -> float:
    """A priori H^1 bound ``c0`` implied by ``E[phi^n] <= E[phi^0]``."""
    e2 = params.epsilon**2
    return math.sqrt((4.0 * E0 + (2.0 * e2 + e2**2) * area) / (2.0 * e2))


@dataclass(frozen=True)
class RestrictionCheck:
    ok: bool
    bound: float


def restriction_bound(scheme, params: ModelParams) -> float:
    scheme = Scheme.parse(scheme)
    base = 4.0 * params.epsilon**2 / (params.kappa * math.gamma(2.0 - params.alpha))
    try:
        b = math.exp(math.log(base) / params.alpha)
    except OverflowError:
        b = math.inf
    return 2.0 * b if scheme.half_point else b


def check_restriction(scheme, params: ModelParams, tau_n: float) -> RestrictionCheck:
    bound = restriction_bound(scheme, params)
    return RestrictionCheck(bool(tau_n <= bound), bound)


# --- nonlinear solve --------------------------------------------------------------


def fixed_point_solve(symbol: np.ndarray, rhs: Callable[[np.ndarray], np.ndarray], phi_guess: np.ndarray,
                      tol: float = FP_TOL, max_iter: int = FP_MAX_ITER):
    """Iterate ``phi <- irfft(rhs_hat(phi) / symbol)`` until successive iterates agree.

    ``rhs`` maps the current iterate to the Fourier coefficients (rfft2 layout) of the
    right-hand side.  Returns ``(phi, iterations, last_difference)``.
    """
    smin = float(symbol.min())
    if not smin > 0.0:
        raise SplittingError(f"linear part of the splitting is not positive definite (min symbol {smin:.3e})")
    phi = np.array(phi_guess, dtype=np.float64)
    diff = math.inf
    for it in range(1, max_iter + 1):
        new = np.fft.irfft2(rhs(phi) / symbol, s=phi.shape)
        diff = float(np.abs(new - phi).max())
        phi = new
        if not math.isfinite(diff):
            break
        if diff <= tol:
            return phi, it, diff
    raise SolverError(f"fixed-point iteration did not converge in {max_iter} iterations "
                      f"(last difference {diff:.3e})", iterations=max_iter, residual=diff)


# --- state and trace --------------------------------------------------------------


@dataclass
class EnergyRecord:
    n: int
    t: float
    tau: float
    volume: float
    E: float
    E_var: float
    fp_iters: int
    residual: float = 0.0
    restriction_ok: bool = True

    CSV_FIELDS = ("n", "t", "tau", "volume", "E", "E_var", "fp_iters")


class SolverState:
    """Everything a scheme needs to take its next step: phi^n and the full history."""

    def __init__(self, scheme, params: ModelParams, initial: Field2D,
                 stabilization: float = DEFAULT_STABILIZATION):
        self.scheme = Scheme.parse(scheme)
        self.params = params
        self.grid = initial.grid
        self.phi = np.array(initial.values)
        self.phi0 = np.array(initial.values)
        self.stabilization = float(stabilization)
        self.n = 0
        self._levels = [0.0]
        # kernel tables are created on the first step, then extended with the mesh
        self.table: KernelTable | None = None
        self.aux: KernelTable | None = None
        M = self.grid.M
        self._incr = np.zeros((16, M, M))
        self._forcing_prev: np.ndarray | None = None
        self.grad_mu_sq: list[float] = []
        self.weighted_increment_hminus1: list[float] = []
        self.E0 = energy_original(self.phi, params, self.grid)
        self.volume0 = spectral.volume(self.phi, self.grid)
        self.records: list[EnergyRecord] = [
            EnergyRecord(0, 0.0, 0.0, self.volume0, self.E0,
                         math.nan if self.scheme is Scheme.L1A else self.E0, 0)]

    @property
    def t(self) -> float:
        return self._levels[-1]

    @property
    def increments(self) -> np.ndarray:
        return self._incr[: self.n]

    @property
    def time_mesh(self) -> TimeMesh | None:
        return TimeMesh(np.array(self._levels)) if self.n else None

    @property
    def field(self) -> Field2D:
        return Field2D(self.grid, self.phi)

    def _push_increment(self, d: np.ndarray):
        if self.n >= self._incr.shape[0]:
            grown = np.zeros((2 * self._incr.shape[0],) + self._incr.shape[1:])
            grown[: self.n] = self._incr[: self.n]
            self._incr = grown
        self._incr[self.n] = d


def _history(weights: np.ndarray, incr: np.ndarray) -> np.ndarray:
    """``sum_{k<n} a_{n-k}^{(n)} grad_tau phi^k`` from lag-indexed weights of row n."""
    n = weights.size
    if n == 1:
        return np.zeros(incr.shape[1:])
    return np.tensordot(weights[1:][::-1], incr[: n - 1], axes=(0, 0))


def step(state: SolverState, tau_n: float, forcing: Callable | None = None,
         allow_violation: bool = False, tol: float = FP_TOL, max_iter: int = FP_MAX_ITER) -> SolverState:
    """Advance ``state`` by one step of size ``tau_n`` (in place) and return it."""
    if not tau_n > 0.0:
        raise ParameterError(f"time step must be positive, got {tau_n}")
    scheme, p, g = state.scheme, state.params, state.grid
    check = check_restriction(scheme, p, tau_n)
    if scheme is Scheme.L1 and not check.ok and not allow_violation:
        raise StepRestrictionError(
            f"tau_n = {tau_n:.4g} exceeds the L1 solvability bound {check.bound:.4g}",
            tau=tau_n, bound=check.bound)

    n = state.n + 1
    t_prev = state.t
    levels = np.array(state._levels + [t_prev + tau_n])
    mesh = TimeMesh(levels)
    if state.table is None:
        state.table = KernelTable(scheme.family, p.alpha, mesh)
        if scheme is Scheme.L1H:
            state.aux = KernelTable(Family.AUX_L1H, p.alpha, mesh)
    else:
        state.table.extend_mesh(mesh)
        if state.aux is not None:
            state.aux.extend_mesh(mesh)

    w = state.table.weights(n)
    a0 = float(w[0])
    H = _history(w, state._incr)
    q = state.phi
    kappa, eps2, S = p.kappa, p.epsilon**2, state.stabilization
    k2 = g.k2

    gval = np.zeros_like(q)
    if forcing is not None:
        def sample(t):
            gv = forcing(t, g)
            return gv.values if isinstance(gv, Field2D) else np.asarray(gv, dtype=np.float64)

        if scheme is Scheme.L1:
            gval = sample(levels[n])
        elif scheme is Scheme.L1H:
            gval = sample(levels[n - 1] + 0.5 * tau_n)
        else:
            # L1a averages the L1 equations at t_n and t_{n-1}; the level-0 equation
            # does not exist (its derivative term is taken as zero), so neither does g^0
            g_n = sample(levels[n])
            prev = state._forcing_prev
            gval = 0.5 * g_n if prev is None else 0.5 * (g_n + prev)
            state._forcing_prev = g_n

    if scheme is Scheme.L1:
        c = 1.0
        const_hat = np.fft.rfft2(a0 * q - H + gval)

        def rhs(phi):
            return const_hat - kappa * k2 * np.fft.rfft2(phi**3 - S * phi)
    else:
        c = 0.5
        const_hat = (np.fft.rfft2(a0 * q - H + gval)
                     - kappa * k2 * np.fft.rfft2(q**3 / 6.0 - 0.5 * q)
                     - 0.5 * kappa * eps2 * k2**2 * np.fft.rfft2(q))
        q2 = q**2

        def rhs(phi):
            return const_hat - kappa * k2 * np.fft.rfft2(phi**3 / 3.0 + 0.5 * phi * q2 - 0.5 * S * phi)

    symbol = a0 + c * kappa * (S - 1.0) * k2 + c * kappa * eps2 * k2**2
    phi, iters, _ = fixed_point_solve(symbol, rhs, q, tol=tol, max_iter=max_iter)

    # residual of the full scheme, scaled by a_0 so it is comparable across step sizes
    incr = phi - q
    if scheme is Scheme.L1:
        mu = chemical_potential(phi, p, g)
    else:
        mu = nonlinear_midpoint(phi, q) - eps2 * spectral.laplacian(0.5 * (phi + q), g)
    res = a0 * incr + H - kappa * spectral.laplacian(mu, g) - gval
    residual = float(np.abs(res).max()) / max(a0, 1.0)

    state._push_increment(incr)
    state._levels.append(float(levels[n]))
    state.n = n
    state.phi = phi

    mu_n = chemical_potential(phi, p, g) if scheme is Scheme.L1 else mu
    state.grad_mu_sq.append(spectral.grad_norm_sq(mu_n, g))
    if scheme is Scheme.L1H:
        weighted = H + 2.0 * a0 * incr
    else:
        weighted = H + a0 * incr
    state.weighted_increment_hminus1.append(
        spectral.hminus1_norm_sq(weighted - weighted.mean(), g))

    E = energy_original(phi, p, g)
    rec = EnergyRecord(n, float(levels[n]), tau_n, spectral.volume(phi, g), E,
                       energy_variational(state, E), iters, residual, check.ok)
    state.records.append(rec)
    return state


def energy_variational_l1(state: SolverState, E: float | None = None) -> float:
    E = energy_original(state.phi, state.params, state.grid) if E is None else E
    if state.n == 0:
        return E
    p = state.table.dcc_row(state.n)
    return E + 0.5 * state.params.kappa * float(p @ np.asarray(state.grad_mu_sq))


def energy_variational_l1h(state: SolverState, E: float | None = None) -> float:
    E = energy_original(state.phi, state.params, state.grid) if E is None else E
    if state.n == 0:
        return E
    phat = state.aux.dcc_row(state.n)
    return E + float(phat @ np.asarray(state.weighted_increment_hminus1)) / (2.0 * state.params.kappa)


def energy_variational(state: SolverState, E: float | None = None) -> float:
    if state.scheme is Scheme.L1:
        return energy_variational_l1(state, E)
    if state.scheme is Scheme.L1H:
        return energy_variational_l1h(state, E)
    return math.nan


# --- driver -----------------------------------------------------------------------


@dataclass
class SolverTrace:
    scheme: Scheme
    params: ModelParams
    records: list[EnergyRecord]
    mesh: TimeMesh | None
    final: Field2D
    snapshots: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    controller_steps: list[float] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=np.float64)

    @property
    def levels(self) -> int:
        return len(self.records) - 1

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k, v in self.meta.items():
            buf.write(f"# {k}={v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(EnergyRecord.CSV_FIELDS)
        for r in self.records:
            w.writerow([r.n, repr(r.t), repr(r.tau), repr(r.volume), repr(r.E),
                        "" if math.isnan(r.E_var) else repr(r.E_var), r.fp_iters])
        return buf.getvalue()


def run(scheme, schedule, params: ModelParams, initial: Field2D, forcing: Callable | None = None,
        observers=(), T: float | None = None, snapshot_times=(), allow_violation: bool = False,
        stabilization: float = DEFAULT_STABILIZATION, tol: float = FP_TOL,
        max_iter: int = FP_MAX_ITER) -> SolverTrace:
    """Integrate over a fixed ``TimeMesh`` (or plain list of steps) or, given an ``AdaptivePolicy``, up to ``T``."""
    state = SolverState(scheme, params, initial, stabilization=stabilization)
    snaps = sorted(float(s) for s in snapshot_times)
    taken: dict = {}
    controller: list[float] = []

    def advance(tau):
        step(state, tau, forcing, allow_violation=allow_violation, tol=tol, max_iter=max_iter)
        rec = state.records[-1]
        for obs in observers:
            obs(state, rec)
        while snaps and state.t >= snaps[0] - 1e-12:
            taken[snaps.pop(0)] = (state.t, state.field)

    if isinstance(schedule, TimeMesh):
        for tau in schedule.steps:
            advance(float(tau))
    elif isinstance(schedule, AdaptivePolicy):
        if T is None or not T > 0.0:
            raise ParameterError("adaptive runs need a positive final time T")
        bound = restriction_bound(state.scheme, params) if state.scheme is Scheme.L1 else None
        if schedule.warmup is not None:
            for tau in schedule.warmup.steps():
                if state.t + tau > T:
                    break
                advance(float(tau))
        tau = schedule.tau_min if bound is None else min(schedule.tau_min, bound)
        while state.t < T * (1.0 - 1e-14):
            controller.append(tau)
            remaining = T - state.t
            # stretch a step rather than leave a sliver shorter than a tiny fraction of tau
            tau_eff = remaining if tau >= remaining * (1.0 - 1e-9) else tau
            advance(tau_eff)
            dphi_dt = spectral.l2_norm(state._incr[state.n - 1], state.grid) / tau_eff
            tau = next_step(schedule, dphi_dt, bound)
    elif isinstance(schedule, (list, tuple, np.ndarray)):
        for tau in schedule:
            advance(float(tau))
    else:
        raise ParameterError("schedule must be a TimeMesh, an AdaptivePolicy or a list of steps")

    return SolverTrace(state.scheme, params, state.records, state.time_mesh, state.field,
                       taken, {}, controller)
