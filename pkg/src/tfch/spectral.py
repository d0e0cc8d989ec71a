"""Fourier pseudo-spectral operators on the periodic square ``(0, L)^2``."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParameterError

MEAN_TOL = 1e-10


@dataclass(frozen=True)
class Grid2D:
    M: int
    L: float = 2.0 * math.pi
    k2: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 4 or self.M % 2:
            raise ParameterError(f"M must be an even integer >= 4, got {self.M}")
        if not self.L > 0.0:
            raise ParameterError(f"domain length must be positive, got {self.L}")
        # symmetric integer wavenumbers in [-M/2, M/2) scaled by 2*pi/L
        k = np.fft.fftfreq(self.M, d=1.0 / self.M) * (2.0 * math.pi / self.L)
        kr = np.fft.rfftfreq(self.M, d=1.0 / self.M) * (2.0 * math.pi / self.L)
        k2 = k[:, None] ** 2 + kr[None, :] ** 2
        k2.setflags(write=False)
        object.__setattr__(self, "k2", k2)

    @property
    def h(self) -> float:
        return self.L / self.M

    @property
    def area(self) -> float:
        return self.L**2

    def coords(self):
        x = np.arange(self.M) * self.h
        return np.meshgrid(x, x, indexing="ij")

    def zeros(self) -> "Field2D":
        return Field2D(self, np.zeros((self.M, self.M)))


@dataclass(frozen=True)
class Field2D:
    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.grid.M, self.grid.M):
            raise ParameterError(f"field shape {v.shape} does not match grid M={self.grid.M}")
        if not np.all(np.isfinite(v)):
            raise ParameterError("field has non-finite entries")
        object.__setattr__(self, "values", v)

    def with_values(self, values) -> "Field2D":
        return Field2D(self.grid, values)

    def mean(self) -> float:
        return float(self.values.mean())

    def to_csv(self, comment: str = "") -> str:
        buf = io.StringIO()
        buf.write(f"# M={self.grid.M},L={self.grid.L!r}")
        if comment:
            buf.write(f",{comment}")
        buf.write("\n")
        csv.writer(buf, lineterminator="\n").writerows(
            [[repr(float(x)) for x in row] for row in self.values])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Field2D":
        lines = text.splitlines()
        head = dict(item.split("=", 1) for item in lines[0].lstrip("# ").split(","))
        grid = Grid2D(int(head["M"]), float(head["L"]))
        vals = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:] if ln.strip()])
        return cls(grid, vals)


def _values(u):
    return u.values if isinstance(u, Field2D) else np.asarray(u, dtype=np.float64)


def _wrap(like, values):
    return like.with_values(values) if isinstance(like, Field2D) else values


def apply_symbol(u, symbol: np.ndarray, grid: Grid2D | None = None):
    """Multiply the (real) FFT of u by ``symbol`` on the rfft half-plane."""
    v = _values(u)
    out = np.fft.irfft2(np.fft.rfft2(v) * symbol, s=v.shape)
    return _wrap(u, out)


def laplacian(u, grid: Grid2D | None = None):
    g = u.grid if isinstance(u, Field2D) else grid
    return apply_symbol(u, -g.k2)


def bilaplacian(u, grid: Grid2D | None = None):
    g = u.grid if isinstance(u, Field2D) else grid
    return apply_symbol(u, g.k2**2)


def _check_zero_mean(v: np.ndarray, tol: float):
    m = float(v.mean())
    scale = max(1.0, float(np.abs(v).max(initial=0.0)))
    if abs(m) > tol * scale:
        raise DomainError(f"(-Laplacian)^-1 needs a zero-mean field, mean = {m:.3e}")


def inv_neg_laplacian(u, grid: Grid2D | None = None, tol: float = MEAN_TOL):
    g = u.grid if isinstance(u, Field2D) else grid
    v = _values(u)
    _check_zero_mean(v, tol)
    inv = np.zeros_like(g.k2)
    nz = g.k2 > 0.0
    inv[nz] = 1.0 / g.k2[nz]
    return apply_symbol(u, inv)


def inner(u, v, grid: Grid2D | None = None) -> float:
    g = u.grid if isinstance(u, Field2D) else grid
    return g.h**2 * float(np.sum(_values(u) * _values(v)))


def l2_norm_sq(u, grid: Grid2D | None = None) -> float:
    return inner(u, u, grid)


def l2_norm(u, grid: Grid2D | None = None) -> float:
    return math.sqrt(l2_norm_sq(u, grid))


def _rfft_weights(M: int) -> np.ndarray:
    # columns 1..M/2-1 of the half spectrum stand for two conjugate modes
    w = np.full(M // 2 + 1, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    return w


def grad_norm_sq(u, grid: Grid2D | None = None) -> float:
    """``|grad u|^2`` computed spectrally, scaled consistently with ``h^2 sum``."""
    g = u.grid if isinstance(u, Field2D) else grid
    uh = np.fft.rfft2(_values(u))
    w = _rfft_weights(g.M)
    # Parseval: h^2 sum |u|^2 = (h^2 / M^2) sum_k |u_hat_k|^2 = (L/M^2)^2 sum_k |u_hat_k|^2
    return (g.L / g.M**2) ** 2 * float(np.sum(w[None, :] * g.k2 * np.abs(uh) ** 2))


def spectral_norm_sq(u, grid: Grid2D | None = None) -> float:
    g = u.grid if isinstance(u, Field2D) else grid
    uh = np.fft.rfft2(_values(u))
    w = _rfft_weights(g.M)
    return (g.L / g.M**2) ** 2 * float(np.sum(w[None, :] * np.abs(uh) ** 2))


def hminus1_norm_sq(u, grid: Grid2D | None = None, tol: float = MEAN_TOL) -> float:
    g = u.grid if isinstance(u, Field2D) else grid
    return inner(inv_neg_laplacian(u, g, tol), u, g)


def l4_pow4(u, grid: Grid2D | None = None) -> float:
    g = u.grid if isinstance(u, Field2D) else grid
    return g.h**2 * float(np.sum(_values(u) ** 4))


def volume(u, grid: Grid2D | None = None) -> float:
    g = u.grid if isinstance(u, Field2D) else grid
    return g.h**2 * float(np.sum(_values(u)))


def norms_and_inner(u: Field2D, v: Field2D | None = None) -> dict:
    v = u if v is None else v
    out = {
        "l2_inner": inner(u, v),
        "l2": l2_norm(u),
        "h1_semi": math.sqrt(grad_norm_sq(u)),
        "l4_pow4": l4_pow4(u),
        "volume": volume(u),
    }
    try:
        out["hminus1"] = math.sqrt(max(hminus1_norm_sq(u), 0.0))
    except DomainError:
        out["hminus1"] = None
    return out
