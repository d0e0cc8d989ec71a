"""Quadratic forms of kernel families, their minimum eigenvalues and analytic lower bounds.

The form ``2 sum_k w_k sum_{j<=k} a_{k-j}^{(k)} w_j`` equals ``w^T (A + A^T) w`` with the
lower-triangular kernel matrix ``A``; every eigenvalue and bound below is stated on that
scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalError, ParameterError, UsageError
from .kernels import Family, KernelTable, check_alpha


@dataclass(frozen=True)
class QuadFormMatrix:
    n: int
    entries: np.ndarray
    family: Family | None = None

    def form(self, w) -> float:
        w = np.asarray(w, dtype=np.float64)
        return float(w @ self.entries @ w)


def assemble(table: KernelTable, n: int) -> QuadFormMatrix:
    A = table.matrix(n)
    B = A + A.T
    return QuadFormMatrix(n, B, table.family)


def min_eigenvalue(B, tol: float = 1e-8) -> float:
    """Smallest eigenvalue of a symmetric matrix (negative values are returned as-is).

    A dense LAPACK solver is used; ``tol`` is accepted for interface compatibility and
    is always met by the direct solver at the sizes used here (n <= a few thousand).
    """
    M = B.entries if isinstance(B, QuadFormMatrix) else np.asarray(B, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ParameterError("matrix must be square")
    scale = max(1.0, float(np.abs(M).max(initial=0.0)))
    if not np.allclose(M, M.T, rtol=0.0, atol=1e-14 * scale):
        raise ParameterError("matrix is not symmetric")
    try:
        w = scipy.linalg.eigh(M, eigvals_only=True, subset_by_index=[0, 0], driver="evr")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NumericalError(f"symmetric eigensolver failed: {exc}", iterations=None) from exc
    return float(w[0])


def lambda_min(table: KernelTable, n: int) -> float:
    return min_eigenvalue(assemble(table, n))


def sigma_l1(table: KernelTable, n: int) -> float:
    if table.family is not Family.L1:
        raise UsageError("sigma_L1 is a bound for the L1 family")
    return min(table.lag0(k) for k in range(1, n + 1))


def sigma_l1_uniform(alpha: float, tau: float) -> float:
    return 1.0 / (math.gamma(2.0 - alpha) * tau**alpha)


def sigma_star(alpha: float, tau: float, n: int) -> float:
    """Older uniform-mesh bound ``(2/(n+1))**alpha / (tau**alpha Gamma(1-alpha))``."""
    alpha = check_alpha(alpha)
    return (2.0 / (n + 1)) ** alpha / (tau**alpha * math.gamma(1.0 - alpha))


def _borwein_coefficients(n: int) -> np.ndarray:
    # d_k = n * sum_{i<=k} (n+i-1)! 4^i / ((n-i)! (2i)!), built from term ratios
    terms = np.empty(n + 1)
    terms[0] = 1.0 / n
    for i in range(1, n + 1):
        terms[i] = terms[i - 1] * 4.0 * (n + i - 1) * (n - i + 1) / ((2 * i) * (2 * i - 1))
    return n * np.cumsum(terms)


def dirichlet_eta(s: float, terms: int = 60, tol: float = 1e-10) -> float:
    """Alternating zeta ``eta(s) = sum_{j>=1} (-1)**(j-1) j**(-s)`` for real s.

    Uses Borwein's accelerated alternating-series algorithm, which also gives the
    analytic continuation for ``s <= 0`` where the series itself diverges.
    """
    def estimate(m):
        d = _borwein_coefficients(m)
        k = np.arange(m)
        signs = np.where(k % 2 == 0, 1.0, -1.0)
        return float(-np.sum(signs * (d[:-1] - d[-1]) * (k + 1.0) ** (-s)) / d[-1])

    coarse, fine = estimate(terms // 2), estimate(terms)
    if not abs(fine - coarse) <= tol * max(1.0, abs(fine)):
        raise NumericalError(f"eta({s}) did not converge: {coarse} vs {fine}", iterations=terms)
    return fine


def polylog_minus_one(s: float) -> float:
    """``Li_s(-1) = -eta(s)``."""
    return -dirichlet_eta(s)


def sigma_star_polylog(alpha: float, tau: float) -> float:
    """Polylogarithm bound for the uniform-mesh L1 form, on the ``A + A^T`` scale.

    Equals ``4 * (-Li_{alpha-1}(-1)) / (Gamma(2-alpha) tau**alpha)``; with this
    normalisation ``sigma_L1 <= sigma_star_polylog <= lambda_min`` on uniform meshes.
    """
    alpha = check_alpha(alpha)
    return 4.0 * -polylog_minus_one(alpha - 1.0) / (math.gamma(2.0 - alpha) * tau**alpha)


@dataclass
class BoundReport:
    family: Family
    n: int
    trials: int
    sigma: float | None
    violations: int = 0
    strong_violations: int = 0
    worst_margin: float = math.inf
    worst_strong_margin: float = math.inf

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.strong_violations == 0

    def to_dict(self) -> dict:
        return {k: (v.value if isinstance(v, Family) else v) for k, v in self.__dict__.items()} | {
            "passed": self.passed}


def verify_lower_bound(table: KernelTable, n: int, trials: int = 200, seed: int = 0,
                       tol: float = 1e-10, vectors=None) -> BoundReport:
    """Check the L1 (or L1h) positive-definiteness inequalities on random vectors.

    L1: ``w^T B w >= sigma_L1 |w|^2`` and the sharper
    ``w^T B w >= sum_k a_0^(k) w_k^2 + sum_k p_{n-k}^(n) (A w)_k^2``.
    L1h: ``w^T B w >= sum_k phat_{n-k}^(n) (Ahat w)_k^2`` with the auxiliary kernels.
    Violations are counted, never raised.
    """
    if table.family not in (Family.L1, Family.L1H):
        raise UsageError("lower-bound verification is defined for the L1 and L1h families")
    A = table.matrix(n)
    B = A + A.T
    scale = max(1.0, float(np.abs(B).max()))
    if table.family is Family.L1:
        sigma = sigma_l1(table, n)
        Ahat, p = A, table.dcc_row(n)
        diag = np.diag(A)
    else:
        sigma = None
        aux = KernelTable(Family.AUX_L1H, table.alpha, table.mesh)
        Ahat, p = aux.matrix(n), aux.dcc_row(n)
        diag = np.zeros(n)
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((trials, n)) if vectors is None else np.atleast_2d(vectors)
    report = BoundReport(table.family, n, W.shape[0], sigma)
    for w in W:
        ww = float(w @ w)
        q = float(w @ B @ w)
        slack = tol * ww * scale
        if sigma is not None:
            margin = q - sigma * ww
            report.worst_margin = min(report.worst_margin, margin / max(ww, 1e-300))
            if margin < -slack:
                report.violations += 1
        v = Ahat @ w
        strong = q - float(diag @ (w * w)) - float(p @ (v * v))
        report.worst_strong_margin = min(report.worst_strong_margin, strong / max(ww, 1e-300))
        if strong < -slack:
            report.strong_violations += 1
    return report
