"""L1-type convolution kernels of the Caputo derivative on nonuniform meshes.

A kernel row ``n`` holds the weights ``a_j^{(n)}`` indexed by the lag
``j = n - k`` so that the discrete derivative at level ``n`` reads
``sum_k a_{n-k}^{(n)} (v^k - v^{k-1})``.  The companion DOC kernels are the
rows of the inverse of the lower-triangular matrix ``A[n, k] = a_{n-k}^{(n)}``
and the DCC kernels are their column sums.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, SingularKernelError, UsageError
from .timemesh import TimeMesh

ALPHA_MIN = 1e-3
ALPHA_MAX = 1.0 - 1e-10


class Family(str, enum.Enum):
    L1 = "L1"
    L1H = "L1h"
    L1A = "L1a"
    AUX_L1H = "AuxL1h"
    AUX_L1A = "AuxL1a"

    @classmethod
    def parse(cls, value) -> "Family":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("_", "").replace("-", "")
        for fam in cls:
            if fam.value.lower() == key:
                return fam
        raise ParameterError(f"unknown kernel family {value!r}")

    @property
    def base(self) -> "Family":
        return {Family.AUX_L1H: Family.L1H, Family.AUX_L1A: Family.L1A}.get(self, self)

    @property
    def is_auxiliary(self) -> bool:
        return self in (Family.AUX_L1H, Family.AUX_L1A)


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (ALPHA_MIN <= alpha <= ALPHA_MAX):
        raise ParameterError(f"fractional order must lie in [{ALPHA_MIN}, {ALPHA_MAX}], got {alpha}")
    return alpha


def omega(beta: float, t):
    """The kernel ``t**(beta-1) / Gamma(beta)``, evaluated through log-Gamma."""
    t = np.asarray(t, dtype=np.float64)
    return np.exp((beta - 1.0) * np.log(t) - math.lgamma(beta))


def _power_gap(lower, gap, p):
    """``(lower + gap)**p - lower**p`` for ``lower >= 0``, ``gap > 0``, ``0 < p < 1``.

    Written via expm1/log1p so lags far from the diagonal keep full relative accuracy.
    """
    lower = np.asarray(lower, dtype=np.float64)
    gap = np.asarray(gap, dtype=np.float64)
    out = np.empty(np.broadcast(lower, gap).shape)
    zero = lower <= 0.0
    out[zero] = np.broadcast_to(gap, out.shape)[zero] ** p
    pos = ~zero
    lo = np.broadcast_to(lower, out.shape)[pos]
    out[pos] = lo**p * np.expm1(p * np.log1p(np.broadcast_to(gap, out.shape)[pos] / lo))
    return out


@dataclass(frozen=True)
class KernelRow:
    n: int
    family: Family
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (self.n,):
            raise ValueError(f"row {self.n} must hold {self.n} weights, got shape {w.shape}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


def _check_index(mesh: TimeMesh, n: int):
    if not 1 <= n <= mesh.N:
        raise ParameterError(f"row index {n} outside 1..{mesh.N}")


def l1_weights(levels: np.ndarray, alpha: float, n: int) -> np.ndarray:
    p = 1.0 - alpha
    k = np.arange(1, n + 1)
    tau = levels[k] - levels[k - 1]
    lower = levels[n] - levels[k]
    w = _power_gap(lower, tau, p) / tau * math.exp(-math.lgamma(2.0 - alpha))
    return w[::-1].copy()


def l1h_weights(levels: np.ndarray, alpha: float, n: int) -> np.ndarray:
    p = 1.0 - alpha
    tau_n = levels[n] - levels[n - 1]
    half = levels[n - 1] + 0.5 * tau_n
    w = np.empty(n)
    # lag 0: the integral only runs up to the half-grid point
    w[0] = (0.5 * tau_n) ** p / tau_n
    if n > 1:
        k = np.arange(1, n)
        tau = levels[k] - levels[k - 1]
        w[1:] = (_power_gap(half - levels[k], tau, p) / tau)[::-1]
    return w * math.exp(-math.lgamma(2.0 - alpha))


def l1_row(mesh: TimeMesh, alpha: float, n: int) -> KernelRow:
    alpha = check_alpha(alpha)
    _check_index(mesh, n)
    return KernelRow(n, Family.L1, l1_weights(mesh.levels, alpha, n))


def l1h_row(mesh: TimeMesh, alpha: float, n: int) -> KernelRow:
    alpha = check_alpha(alpha)
    _check_index(mesh, n)
    return KernelRow(n, Family.L1H, l1h_weights(mesh.levels, alpha, n))


def l1a_row(mesh: TimeMesh, alpha: float, n: int) -> KernelRow:
    alpha = check_alpha(alpha)
    _check_index(mesh, n)
    w = 0.5 * l1_weights(mesh.levels, alpha, n)
    if n > 1:
        w[1:] += 0.5 * l1_weights(mesh.levels, alpha, n - 1)
    return KernelRow(n, Family.L1A, w)


def auxiliary_row(row: KernelRow) -> KernelRow:
    if row.family not in (Family.L1H, Family.L1A):
        raise UsageError(f"auxiliary kernels are defined for L1h and L1a rows only, not {row.family.value}")
    w = np.array(row.weights)
    w[0] *= 2.0
    fam = Family.AUX_L1H if row.family is Family.L1H else Family.AUX_L1A
    return KernelRow(row.n, fam, w)


_ROW_BUILDERS = {Family.L1: l1_row, Family.L1H: l1h_row, Family.L1A: l1a_row}


def kernel_row(family, mesh: TimeMesh, alpha: float, n: int) -> KernelRow:
    family = Family.parse(family)
    row = _ROW_BUILDERS[family.base](mesh, alpha, n)
    return auxiliary_row(row) if family.is_auxiliary else row


class KernelTable:
    """Triangular family ``{a_{n-k}^{(n)}}`` of one kernel family on a mesh.

    Rows, DOC rows and DCC rows are computed on first use and cached.  The mesh
    may be replaced by an extension of itself (adaptive stepping); cached rows
    stay valid because row ``n`` only depends on ``t_0..t_n``.
    """

    def __init__(self, family, alpha: float, mesh: TimeMesh):
        self.family = Family.parse(family)
        self.alpha = check_alpha(alpha)
        self.mesh = mesh
        cap = max(mesh.N, 16)
        # column-major so that the DOC recursion reads contiguous columns
        self._A = np.zeros((cap + 1, cap + 1), order="F")
        self._filled = 0
        self._doc: list[np.ndarray] = []
        self._dcc: list[np.ndarray] = []

    @property
    def N(self) -> int:
        return self.mesh.N

    def extend_mesh(self, mesh: TimeMesh) -> None:
        m = self.mesh.N
        if mesh.N < m or not np.array_equal(mesh.levels[: m + 1], self.mesh.levels):
            raise ParameterError("new mesh must extend the current one")
        self.mesh = mesh

    def _grow(self, n: int):
        cap = self._A.shape[0] - 1
        if n <= cap:
            return
        new = max(n, 2 * cap)
        A = np.zeros((new + 1, new + 1), order="F")
        A[: cap + 1, : cap + 1] = self._A
        self._A = A

    def _fill(self, n: int):
        _check_index(self.mesh, n)
        if n <= self._filled:
            return
        self._grow(n)
        for m in range(self._filled + 1, n + 1):
            w = kernel_row(self.family, self.mesh, self.alpha, m).weights
            # A[m, k] = a_{m-k}^{(m)}, 1-based
            self._A[m, 1 : m + 1] = w[::-1]
        self._filled = n

    def row(self, n: int) -> KernelRow:
        self._fill(n)
        return KernelRow(n, self.family, self._A[n, n:0:-1].copy())

    def weights(self, n: int) -> np.ndarray:
        """Lag-indexed weights of row n (read-only view semantics; do not mutate)."""
        self._fill(n)
        return self._A[n, n:0:-1]

    def lag0(self, n: int) -> float:
        self._fill(n)
        return float(self._A[n, n])

    def matrix(self, n: int) -> np.ndarray:
        """Dense lower-triangular ``n x n`` matrix ``A[k-1, j-1] = a_{k-j}^{(k)}``."""
        self._fill(n)
        return np.array(self._A[1 : n + 1, 1 : n + 1])

    def doc_row(self, n: int) -> np.ndarray:
        """Row n of the DOC kernels, indexed by ``k-1``: ``out[k-1] = theta_{n-k}^{(n)}``."""
        while len(self._doc) < n:
            self._doc.append(self._doc_row(len(self._doc) + 1))
        return self._doc[n - 1]

    def _doc_row(self, n: int) -> np.ndarray:
        self._fill(n)
        A = self._A
        diag = np.array([A[k, k] for k in range(1, n + 1)])
        bad = np.flatnonzero(~(diag > 0.0))
        if bad.size:
            k = int(bad[0]) + 1
            raise SingularKernelError(f"lag-0 weight a_0^({k}) = {diag[k - 1]} is not positive")
        theta = np.zeros(n + 1)
        theta[n] = 1.0 / A[n, n]
        for k in range(n - 1, 0, -1):
            theta[k] = -np.dot(theta[k + 1 : n + 1], A[k + 1 : n + 1, k]) / A[k, k]
        return theta[1:]

    def dcc_row(self, n: int) -> np.ndarray:
        """Row n of the DCC kernels: ``out[k-1] = p_{n-k}^{(n)} = sum_{j=k}^n theta_{j-k}^{(j)}``."""
        while len(self._dcc) < n:
            m = len(self._dcc) + 1
            p = np.array(self.doc_row(m))
            if m > 1:
                p[:-1] += self._dcc[-1]
            self._dcc.append(p)
        return self._dcc[n - 1]


def make_table(family, alpha: float, mesh: TimeMesh) -> KernelTable:
    return KernelTable(family, alpha, mesh)


@dataclass
class CompanionKernels:
    """Lower-triangular DOC and DCC tables; ``doc[m-1, k-1] = theta_{m-k}^{(m)}``."""

    family: Family
    n: int
    doc: np.ndarray
    dcc: np.ndarray | None = None

    def theta(self, m: int, k: int) -> float:
        return float(self.doc[m - 1, k - 1])

    def p(self, m: int, k: int) -> float:
        if self.dcc is None:
            raise UsageError("DCC kernels have not been computed")
        return float(self.dcc[m - 1, k - 1])


def doc_kernels(table: KernelTable, n: int) -> CompanionKernels:
    doc = np.zeros((n, n))
    for m in range(1, n + 1):
        doc[m - 1, :m] = table.doc_row(m)
    return CompanionKernels(table.family, n, doc)


def dcc_kernels(doc: CompanionKernels, n: int | None = None) -> CompanionKernels:
    n = doc.n if n is None else n
    if n > doc.n:
        raise UsageError(f"DOC rows only available up to {doc.n}")
    theta = doc.doc[:n, :n]
    # p_{m-k}^{(m)} = sum_{j=k}^{m} theta_{j-k}^{(j)}: cumulative column sums
    dcc = np.tril(np.cumsum(theta, axis=0))
    return CompanionKernels(doc.family, n, theta.copy(), dcc)


def companion_kernels(table: KernelTable, n: int) -> CompanionKernels:
    return dcc_kernels(doc_kernels(table, n), n)


# --- positivity / monotonicity / convexity criteria -------------------------------


@dataclass
class ConditionResult:
    condition: str
    passed: bool = True
    first_violation: tuple[int, int] | None = None
    tie: bool = False
    violations: int = 0

    def record(self, n: int, j: int, tie: bool):
        if self.passed:
            self.first_violation = (n, j)
            self.tie = tie
        self.passed = False
        self.violations += 1


@dataclass
class CriteriaReport:
    family: Family
    variant: str
    n: int
    conditions: list[ConditionResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def condition(self, name: str) -> ConditionResult:
        for c in self.conditions:
            if c.condition == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        first = None
        for c in self.conditions:
            if not c.passed:
                n, j = c.first_violation
                first = {"n": n, "j": j, "condition": c.condition, "tie": c.tie}
                break
        return {
            "family": self.family.value,
            "variant": self.variant,
            "n": self.n,
            "passes": [c.condition for c in self.conditions if c.passed],
            "fails": [c.condition for c in self.conditions if not c.passed],
            "first_violation": first,
            "conditions": [
                {"condition": c.condition, "passed": c.passed, "violations": c.violations,
                 "first_violation": None if c.first_violation is None
                 else {"n": c.first_violation[0], "j": c.first_violation[1]},
                 "tie": c.tie}
                for c in self.conditions
            ],
        }


def _scan(result: ConditionResult, n: int, lhs: np.ndarray, rhs: np.ndarray, j0: int):
    """Record violations of the strict inequality ``lhs > rhs`` (j counted from j0)."""
    bad = ~(lhs > rhs)
    if bad.any():
        for i in np.flatnonzero(bad):
            result.record(n, j0 + int(i), bool(lhs[i] == rhs[i]))


def check_criteria(table: KernelTable, n: int, variant: str = "nonuniform") -> CriteriaReport:
    """Evaluate the sufficient positive-definiteness criteria on rows 1..n.

    ``uniform``: positivity, monotone decrease and convexity of the row-n weights.
    ``nonuniform``: ``a_{j-1}^{(m)} >= a_j^{(m)} > 0``, ``a_{j-1}^{(m-1)} > a_j^{(m)}`` and
    ``a_{j-1}^{(m-1)} a_{j+1}^{(m)} >= a_j^{(m-1)} a_j^{(m)}`` for every row m <= n.
    All comparisons are strict; equality is reported as a failure with ``tie=True``.
    """
    report = CriteriaReport(table.family, variant, n)
    if variant == "uniform":
        a = table.weights(n)
        pos = ConditionResult("positive")
        dec = ConditionResult("decreasing")
        cvx = ConditionResult("convex")
        _scan(pos, n, a, np.zeros_like(a), 0)
        _scan(dec, n, a[:-1], a[1:], 1)
        if n >= 3:
            _scan(cvx, n, a[:-2] - a[1:-1], a[1:-1] - a[2:], 1)
        report.conditions = [pos, dec, cvx]
        return report
    if variant != "nonuniform":
        raise ParameterError(f"unknown criteria variant {variant!r}")
    pos = ConditionResult("positive")
    dec = ConditionResult("decreasing")
    cross = ConditionResult("cross-decreasing")
    cvx = ConditionResult("log-convex")
    for m in range(1, n + 1):
        a = table.weights(m)
        _scan(pos, m, a, np.zeros_like(a), 0)
        if m < 2:
            continue
        _scan(dec, m, a[:-1], a[1:], 1)
        prev = table.weights(m - 1)
        _scan(cross, m, prev, a[1:], 1)
        if m >= 3:
            _scan(cvx, m, prev[:-1] * a[2:], prev[1:] * a[1:-1], 1)
    report.conditions = [pos, dec, cross, cvx]
    return report
