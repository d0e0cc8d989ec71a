"""Experiment drivers: kernel dumps, eigenvalue tables, convergence studies and simulations.

Every driver takes a flat config mapping (as produced by ``load_config`` and CLI flags)
and returns a result carrying its rows, a metadata header and a dict of invariant
checks.  ``result.ok`` is what the CLI turns into its exit code.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import quadform, spectral
from .adaptive import AdaptivePolicy, Warmup
from .errors import ParameterError
from .kernels import Family, KernelTable, check_criteria, companion_kernels, omega
from .solver import ModelParams, Scheme, h1_bound, h1_norm, run
from .spectral import Field2D, Grid2D
from .timemesh import (TimeMesh, make_composite, make_fixed_ratio, make_graded, make_random,
                       make_uniform)

ENERGY_SLACK = 1e-10
VOLUME_TOL = 1e-9
IDENTITY_TOL = 1e-11


# --- configuration ----------------------------------------------------------------


def _coerce(text: str):
    text = text.strip()
    if "," in text:
        return [_coerce(t) for t in text.split(",") if t.strip()]
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", ""):
        return None
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment, commas make lists."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"config line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = _coerce(value)
    return out


def load_config(path) -> dict:
    with open(path) as fh:
        return parse_config(fh.read())


def merge_config(base: dict | None, flags: dict) -> dict:
    """Flags win over file values; flags left at ``None`` do not override."""
    out = dict(base or {})
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


@dataclass
class ExperimentConfig:
    kind: str
    options: dict = field(default_factory=dict)
    output: str | None = None
    seed: int = 0

    KINDS = ("kernels", "eigen", "converge", "simulate")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ParameterError(f"unknown experiment kind {self.kind!r}")

    def get(self, key, default=None):
        v = self.options.get(key)
        return default if v is None else v


def _as_list(v):
    if v is None:
        return []
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _header(meta: dict) -> str:
    return "".join(f"# {k}={_fmt_meta(v)}\n" for k, v in meta.items())


def _fmt_meta(v):
    if isinstance(v, (list, tuple)):
        return ",".join(str(x) for x in v)
    return str(v)


@dataclass
class TableResult:
    columns: list[str]
    rows: list[dict]
    meta: dict
    checks: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(_header(self.meta))
        w = csv.DictWriter(buf, fieldnames=self.columns, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: ("" if v is None else (repr(v) if isinstance(v, float) else v))
                        for k, v in r.items()})
        return buf.getvalue()


# --- meshes -----------------------------------------------------------------------


MESH_KINDS = ("uniform", "graded", "ratio", "random", "composite")


def build_mesh(kind: str, T: float, N: int, gamma: float | None = None,
               ratio: float | None = None, seed: int | None = None) -> TimeMesh:
    kind = {"fixed-ratio": "ratio", "fixed_ratio": "ratio"}.get(kind, kind)
    if kind == "uniform":
        return make_uniform(T, N)
    if kind == "graded":
        return make_graded(T, N, 1.0 if gamma is None else gamma)
    if kind == "ratio":
        if ratio is None:
            raise ParameterError("fixed-ratio mesh needs a ratio")
        return make_fixed_ratio(T, N, ratio)
    if kind == "random":
        return make_random(T, N, 0 if seed is None else seed)
    if kind == "composite":
        if gamma is None:
            raise ParameterError("composite mesh needs gamma")
        return make_composite(T, N, gamma, 0 if seed is None else seed)
    raise ParameterError(f"unknown mesh kind {kind!r}; expected one of {MESH_KINDS}")


def _mesh_param(kind, gamma, ratio, seed):
    return {"graded": gamma, "composite": gamma, "ratio": ratio, "random": seed}.get(kind)


# --- manufactured solution ----------------------------------------------------------


def exact_manufactured(t: float, grid: Grid2D, sigma: float) -> Field2D:
    X, Y = grid.coords()
    return Field2D(grid, float(omega(1.0 + sigma, t)) * np.sin(X) * np.sin(Y))


def forcing_manufactured(t: float, grid: Grid2D, params: ModelParams, sigma: float) -> Field2D:
    """Source term that makes ``omega_{1+sigma}(t) sin x sin y`` an exact solution."""
    if not 0.0 < sigma < 1.0:
        raise ParameterError(f"regularity sigma must lie in (0, 1), got {sigma}")
    if not t > 0.0:
        raise ParameterError("the manufactured forcing is only sampled at t > 0")
    X, Y = grid.coords()
    s = np.sin(X) * np.sin(Y)
    P = float(omega(1.0 + sigma, t)) * s
    mu = P**3 - P - params.epsilon**2 * spectral.laplacian(P, grid)
    # Caputo derivative of omega_{1+sigma} is omega_{1+sigma-alpha}
    g = float(omega(1.0 + sigma - params.alpha, t)) * s - params.kappa * spectral.laplacian(mu, grid)
    return Field2D(grid, g)


class ManufacturedForcing:
    """Picklable ``forcing(t, grid)`` callable for the solver."""

    def __init__(self, params: ModelParams, sigma: float):
        self.params = params
        self.sigma = sigma

    def __call__(self, t, grid):
        return forcing_manufactured(t, grid, self.params, self.sigma)


# --- kernels ----------------------------------------------------------------------


@dataclass
class KernelsResult:
    family: Family
    alpha: float
    mesh: TimeMesh
    n: int
    rows: list[np.ndarray]
    criteria: dict
    identities: dict
    meta: dict
    checks: dict

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(_header(self.meta))
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "j", "a_j"])
        for m, row in enumerate(self.rows, 1):
            for j, a in enumerate(row):
                w.writerow([m, j, repr(float(a))])
        return buf.getvalue()

    def report_json(self) -> str:
        return json.dumps({"meta": self.meta, "criteria": self.criteria,
                           "identities": self.identities, "checks": self.checks}, indent=2)


def identity_residuals(table: KernelTable, n: int) -> dict:
    """Max deviations of ``Theta A = I`` and ``P A = lower-triangular ones``."""
    A = table.matrix(n)
    comp = companion_kernels(table, n)
    ortho = comp.doc @ A - np.eye(n)
    compl = comp.dcc @ A - np.tril(np.ones((n, n)))
    return {"orthogonal": float(np.abs(ortho).max()), "complementary": float(np.abs(compl).max()),
            "doc": comp.doc, "dcc": comp.dcc}


def cmd_kernels(cfg: dict) -> KernelsResult:
    family = Family.parse(cfg.get("family", "L1"))
    alpha = float(cfg.get("alpha", 0.5))
    kind = cfg.get("mesh", "uniform")
    N = int(cfg.get("N", 10))
    T = float(cfg.get("T", 1.0))
    gamma, ratio, seed = cfg.get("gamma"), cfg.get("ratio"), cfg.get("seed")
    mesh = build_mesh(kind, T, N, gamma, ratio, seed)
    n = int(cfg.get("n") or N)
    variant = cfg.get("variant", "nonuniform")
    table = KernelTable(family, alpha, mesh)
    rows = [np.array(table.weights(m)) for m in range(1, n + 1)]
    report = check_criteria(table, n, variant)
    meta = {"experiment": "kernels", "family": family.value, "alpha": alpha, "mesh": kind, "T": T,
            "N": N, "n": n, "gamma": gamma, "ratio": ratio, "seed": seed, "variant": variant}
    checks = {}
    identities = {}
    if all(table.lag0(m) > 0.0 for m in range(1, n + 1)):
        res = identity_residuals(table, n)
        scale = max(1.0, float(np.abs(res["doc"]).max()) * float(np.abs(table.matrix(n)).max()))
        identities = {"orthogonal": res["orthogonal"], "complementary": res["complementary"]}
        checks["orthogonal_identity"] = res["orthogonal"] <= IDENTITY_TOL * scale
        checks["complementary_identity"] = res["complementary"] <= IDENTITY_TOL * scale * n
    # the criteria are theorems only for L1 and the auxiliary L1h rows
    if family in (Family.L1, Family.AUX_L1H) and variant == "nonuniform":
        checks["criteria"] = report.passed
    return KernelsResult(family, alpha, mesh, n, rows, report.to_dict(), identities, meta, checks)


# --- eigenvalue tables ------------------------------------------------------------


def _eigen_row(task):
    family, kind, T, N, alpha, gamma, ratio, seed = task
    mesh = build_mesh(kind, T, N, gamma, ratio, seed)
    table = KernelTable(family, alpha, mesh)
    lam = quadform.lambda_min(table, N)
    sig = quadform.sigma_l1(table, N) if family is Family.L1 else None
    row = {"N": N, "alpha": alpha, "param": _mesh_param(kind, gamma, ratio, seed),
           "sigma_l1": sig, "lambda_min": lam,
           "sigma_l1_2dp": None if sig is None else round(sig, 2),
           "lambda_min_2dp": round(lam, 2), "lambda_min_3sf": float(f"{lam:.3g}")}
    if kind == "uniform" and family is Family.L1:
        row["sigma_l1_closed"] = quadform.sigma_l1_uniform(alpha, T / N)
    return row


def _map(fn, tasks, workers: int):
    if workers and workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def cmd_eigen(cfg: dict) -> TableResult:
    family = Family.parse(cfg.get("family", "L1"))
    kind = cfg.get("mesh", "graded")
    T = float(cfg.get("T", 1.0))
    Ns = [int(n) for n in _as_list(cfg.get("N", 100))]
    alphas = [float(a) for a in _as_list(cfg.get("alpha", 0.5))]
    gammas = _as_list(cfg.get("gamma")) or [None]
    ratios = _as_list(cfg.get("ratio")) or [None]
    seed = cfg.get("seed")
    tasks = [(family, kind, T, N, a, g, r, seed)
             for g in gammas for r in ratios for a in alphas for N in Ns]
    rows = _map(_eigen_row, tasks, int(cfg.get("workers", 1)))
    checks = {}
    if family is Family.L1:
        checks["sigma_l1_le_lambda_min"] = all(
            r["sigma_l1"] <= r["lambda_min"] * (1.0 + 1e-12) for r in rows)
        if kind == "uniform":
            checks["sigma_l1_closed_form"] = all(
                abs(r["sigma_l1"] - r["sigma_l1_closed"]) <= 1e-10 * r["sigma_l1_closed"] for r in rows)
    if family is Family.L1H:
        checks["lambda_min_positive"] = all(r["lambda_min"] > 0.0 for r in rows)
    meta = {"experiment": "eigen", "family": family.value, "mesh": kind, "T": T, "N": Ns,
            "alpha": alphas, "gamma": gammas, "ratio": ratios, "seed": seed}
    cols = ["N", "alpha", "param", "sigma_l1", "lambda_min", "sigma_l1_2dp", "lambda_min_2dp",
            "lambda_min_3sf"]
    return TableResult(cols, rows, meta, checks)


# --- convergence ------------------------------------------------------------------


def _converge_run(task):
    scheme, kind, T, N, gamma, seed, M, kappa, eps, alpha, sigma = task
    params = ModelParams(kappa, eps, alpha)
    grid = Grid2D(M)
    mesh = build_mesh(kind, T, N, gamma, None, seed)
    X, Y = grid.coords()
    s = np.sin(X) * np.sin(Y)
    err = [0.0]

    def obs(state, rec):
        exact = float(omega(1.0 + sigma, rec.t)) * s
        err[0] = max(err[0], spectral.l2_norm(state.phi - exact, grid))

    trace = run(scheme, mesh, params, grid.zeros(), forcing=ManufacturedForcing(params, sigma),
                observers=[obs])
    drift = float(np.abs(trace.column("volume")).max())
    ratios = mesh.ratios
    return {"N": N, "r_max": float(ratios.max()) if ratios.size else 1.0, "tau": mesh.max_step,
            "error": err[0], "seed": seed, "volume_drift": drift,
            "fp_max": int(trace.column("fp_iters").max())}


def convergence_orders(errors, taus) -> list:
    out = [None]
    for i in range(1, len(errors)):
        out.append(math.log(errors[i - 1] / errors[i]) / math.log(taus[i - 1] / taus[i]))
    return out


def cmd_converge(cfg: dict) -> TableResult:
    scheme = Scheme.parse(cfg.get("scheme", "L1"))
    kind = cfg.get("mesh", "composite")
    T = float(cfg.get("T", 1.0))
    Ns = [int(n) for n in _as_list(cfg.get("N", [40, 80, 160, 320]))]
    gamma = cfg.get("gamma", 4)
    alpha = float(cfg.get("alpha", 0.4))
    sigma = float(cfg.get("sigma", 0.4))
    M = int(cfg.get("M", 64))
    kappa, eps = float(cfg.get("kappa", 1.0)), float(cfg.get("epsilon", 0.5))
    offset = int(cfg.get("seed", 0) or 0)
    # one seed per N so each row is reproducible on its own
    tasks = [(scheme, kind, T, N, gamma, N + offset, M, kappa, eps, alpha, sigma) for N in Ns]
    rows = _map(_converge_run, tasks, int(cfg.get("workers", 1)))
    orders = convergence_orders([r["error"] for r in rows], [r["tau"] for r in rows])
    for r, o in zip(rows, orders):
        r["order"] = o
        r["error_3sf"] = float(f"{r['error']:.3g}")
        r["order_2dp"] = None if o is None else round(o, 2)
    meta = {"experiment": "converge", "scheme": scheme.value, "mesh": kind, "T": T, "N": Ns,
            "gamma": gamma, "alpha": alpha, "sigma": sigma, "M": M, "kappa": kappa,
            "epsilon": eps, "seed": f"N+{offset}"}
    checks = {"volume_conserved": all(r["volume_drift"] <= VOLUME_TOL for r in rows)}
    cols = ["N", "r_max", "tau", "error", "order", "error_3sf", "order_2dp", "seed"]
    return TableResult(cols, rows, meta, checks)


# --- simulation -------------------------------------------------------------------


@dataclass
class SimulationResult:
    trace: object
    meta: dict
    checks: dict
    h1: np.ndarray

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def to_csv(self) -> str:
        self.trace.meta = self.meta
        return self.trace.to_csv()

    def write(self, outdir) -> list[str]:
        os.makedirs(outdir, exist_ok=True)
        paths = []
        p = os.path.join(outdir, "trace.csv")
        with open(p, "w") as fh:
            fh.write(self.to_csv())
        paths.append(p)
        for t_req, (t, fld) in sorted(self.trace.snapshots.items()):
            p = os.path.join(outdir, f"phi_t{t_req:g}.csv")
            with open(p, "w") as fh:
                fh.write(fld.to_csv(f"t={t!r}"))
            paths.append(p)
        p = os.path.join(outdir, "meta.json")
        with open(p, "w") as fh:
            json.dump({"meta": self.meta, "checks": self.checks}, fh, indent=2, default=str)
        paths.append(p)
        return paths


def random_initial(grid: Grid2D, amplitude: float, seed: int) -> Field2D:
    rng = np.random.default_rng(seed)
    v = rng.uniform(-amplitude, amplitude, (grid.M, grid.M))
    # zero mean keeps the H^-1 diagnostics well defined
    return Field2D(grid, v - v.mean())


def energy_checks(trace, scheme: Scheme, h1: np.ndarray, c0: float) -> dict:
    vol = trace.column("volume")
    checks = {"volume_conserved": float(np.abs(vol - vol[0]).max()) <= VOLUME_TOL}
    restricted = all(r.restriction_ok for r in trace.records[1:])
    if scheme is Scheme.L1H or (scheme is Scheme.L1 and restricted):
        Ev = trace.column("E_var")
        checks["energy_law"] = bool(np.all(np.diff(Ev) <= ENERGY_SLACK))
        checks["h1_bound"] = bool(np.all(h1 <= c0 * (1.0 + 1e-12)))
    return checks


def _simulation_setup(cfg: dict):
    scheme = Scheme.parse(cfg.get("scheme", "L1h"))
    M = int(cfg.get("M", 64))
    L = float(cfg.get("L", 2.0 * math.pi))
    params = ModelParams(float(cfg.get("kappa", 0.01)), float(cfg.get("epsilon", 0.05)),
                         float(cfg.get("alpha", 0.5)))
    T = float(cfg.get("T", 10.0))
    seed = int(cfg.get("seed", 0) or 0)
    grid = Grid2D(M, L)
    init = random_initial(grid, float(cfg.get("amplitude", 1e-3)), seed)
    if cfg.get("adaptive"):
        warm = None
        if cfg.get("warmup_gamma") is not None or cfg.get("warmup", False):
            warm = Warmup(float(cfg.get("warmup_gamma", 3.0)), int(cfg.get("warmup_N0", 30)),
                          float(cfg.get("warmup_T0", 0.01)))
        schedule = AdaptivePolicy(float(cfg.get("tau_min", 1e-3)), float(cfg.get("tau_max", 0.1)),
                                  float(cfg.get("eta", 1e3)), warm)
    else:
        schedule = build_mesh(cfg.get("mesh", "uniform"), T, int(cfg.get("N", 200)),
                              cfg.get("gamma"), cfg.get("ratio"), cfg.get("mesh_seed", seed))
    return scheme, grid, params, T, seed, init, schedule


def cmd_simulate(cfg: dict) -> SimulationResult:
    scheme, grid, params, T, seed, init, schedule = _simulation_setup(cfg)
    snaps = [float(s) for s in _as_list(cfg.get("snapshots"))]
    h1 = [h1_norm(init)]

    def obs(state, rec):
        h1.append(h1_norm(state.phi, state.grid))

    t0 = time.perf_counter()
    trace = run(scheme, schedule, params, init, observers=[obs], T=T, snapshot_times=snaps,
                allow_violation=bool(cfg.get("allow_violation", False)))
    wall = time.perf_counter() - t0
    c0 = h1_bound(trace.records[0].E, params, grid.area)
    h1 = np.array(h1)
    checks = energy_checks(trace, scheme, h1, c0)
    E = trace.column("E")
    meta = {"experiment": "simulate", "scheme": scheme.value, "M": grid.M, "L": grid.L,
            "kappa": params.kappa, "epsilon": params.epsilon, "alpha": params.alpha, "T": T,
            "seed": seed, "amplitude": cfg.get("amplitude", 1e-3),
            "schedule": (f"adaptive(tau_min={schedule.tau_min},tau_max={schedule.tau_max},"
                         f"eta={schedule.eta},warmup={schedule.warmup})"
                         if isinstance(schedule, AdaptivePolicy) else
                         ";".join(f"{k}={v}" for k, v in schedule.meta.items())),
            "levels": trace.levels, "wall_seconds": round(wall, 3),
            "energy_increases": int(np.sum(np.diff(E) > ENERGY_SLACK)),
            "h1_bound": c0}
    return SimulationResult(trace, meta, checks, h1)
