"""Command-line client.  Requests run in-process by default, or against a server with --url."""

from __future__ import annotations

import json
import os
import sys

import click
from pydantic import ValidationError

from .errors import TFCHError
from .experiments import _coerce, load_config, merge_config
from .service import schemas
from .service.app import handle_converge, handle_eigen, handle_kernels, handle_simulate

FAMILIES = ["L1", "L1h", "L1a", "AuxL1h", "AuxL1a"]
SCHEMES = ["L1", "L1h", "L1a"]

ROUTES = {
    "kernels": (schemas.KernelsRequest, schemas.KernelsResponse, handle_kernels),
    "eigen": (schemas.EigenRequest, schemas.TableResponse, handle_eigen),
    "converge": (schemas.ConvergeRequest, schemas.TableResponse, handle_converge),
    "simulate": (schemas.SimulateRequest, schemas.SimulateResponse, handle_simulate),
}

LIST_KEYS = {"eigen": ("alpha", "N", "gamma", "ratio"), "converge": ("N",), "simulate": ("snapshots",)}


def _listify(kind, cfg):
    for key in LIST_KEYS.get(kind, ()):
        v = cfg.get(key)
        if v is None:
            continue
        if isinstance(v, str):
            v = _coerce(v)
        cfg[key] = v if isinstance(v, list) else [v]
    return cfg


def dispatch(kind: str, cfg: dict, url: str | None = None, timeout: float = 3600.0):
    req_model, resp_model, handler = ROUTES[kind]
    req = req_model(**_listify(kind, cfg))
    if url is None:
        return handler(req)
    import httpx

    r = httpx.post(url.rstrip("/") + "/" + kind, json=req.model_dump(), timeout=timeout)
    if r.status_code != 200:
        raise click.ClickException(f"server returned {r.status_code}: {r.text}")
    return resp_model(**r.json())


def _emit(text: str, path: str | None):
    if path is None or path == "-":
        click.echo(text, nl=False)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _finish(resp):
    bad = [k for k, v in resp.checks.items() if not v]
    if bad:
        click.echo(f"invariant checks failed: {', '.join(bad)}", err=True)
        sys.exit(1)


def _run(ctx, kind, config, flags):
    cfg = merge_config(load_config(config) if config else {}, flags)
    try:
        return dispatch(kind, cfg, ctx.obj.get("url"))
    except ValidationError as exc:
        raise click.UsageError(str(exc)) from exc
    except TFCHError as exc:
        raise click.ClickException(f"{type(exc).__name__}: {exc}") from exc


def mesh_options(fn):
    for opt in reversed([
        click.option("--mesh", type=click.Choice(["uniform", "graded", "ratio", "fixed-ratio", "random", "composite"])),
        click.option("--T", "T", type=float),
        click.option("--seed", type=int),
    ]):
        fn = opt(fn)
    return fn


@click.group()
@click.option("--url", default=None, help="Send requests to a running server instead of computing locally.")
@click.pass_context
def main(ctx, url):
    """Kernels, eigenvalue tables, convergence studies and simulations for time-fractional Cahn-Hilliard."""
    ctx.ensure_object(dict)
    ctx.obj["url"] = url


@main.command()
@click.option("--config", type=click.Path(exists=True, dir_okay=False))
@click.option("--family", type=click.Choice(FAMILIES, case_sensitive=False))
@click.option("--alpha", type=float)
@click.option("--N", "N", type=int)
@click.option("--n", "n", type=int, help="Last row to dump (default N).")
@click.option("--gamma", type=float)
@click.option("--ratio", type=float)
@click.option("--variant", type=click.Choice(["uniform", "nonuniform"]))
@mesh_options
@click.option("--output", "-o", default=None, help="CSV path (default stdout).")
@click.option("--report", default=None, help="Criteria JSON path (default stderr).")
@click.pass_context
def kernels(ctx, config, output, report, **flags):
    """Dump kernel rows as CSV n,j,a_j and the criteria report as JSON."""
    resp = _run(ctx, "kernels", config, flags)
    _emit(resp.csv, output)
    doc = json.dumps({"criteria": resp.criteria, "identities": resp.identities,
                      "checks": resp.checks}, indent=2) + "\n"
    if report is None:
        click.echo(doc, err=True, nl=False)
    else:
        _emit(doc, report)
    _finish(resp)


@main.command()
@click.option("--config", type=click.Path(exists=True, dir_okay=False))
@click.option("--family", type=click.Choice(FAMILIES, case_sensitive=False))
@click.option("--alpha", help="Fractional order(s), comma separated.")
@click.option("--gamma", help="Grading exponent(s), comma separated.")
@click.option("--ratio", help="Step ratio(s), comma separated.")
@click.option("--N", "N", help="Matrix size(s), comma separated.")
@click.option("--workers", type=int)
@mesh_options
@click.option("--output", "-o", default=None)
@click.pass_context
def eigen(ctx, config, output, **flags):
    """Minimum eigenvalues of A + A^T (and sigma_L1 for L1) as CSV."""
    resp = _run(ctx, "eigen", config, flags)
    _emit(resp.csv, output)
    _finish(resp)


@main.command()
@click.option("--config", type=click.Path(exists=True, dir_okay=False))
@click.option("--scheme", type=click.Choice(SCHEMES, case_sensitive=False))
@click.option("--mesh", type=click.Choice(["uniform", "graded", "composite"]))
@click.option("--N", "N", help="Step counts, comma separated.")
@click.option("--gamma", type=float)
@click.option("--alpha", type=float)
@click.option("--sigma", type=float)
@click.option("--M", "M", type=int)
@click.option("--kappa", type=float)
@click.option("--epsilon", type=float)
@click.option("--T", "T", type=float)
@click.option("--seed", type=int, help="Offset added to N to seed each random tail.")
@click.option("--workers", type=int)
@click.option("--output", "-o", default=None)
@click.pass_context
def converge(ctx, config, output, **flags):
    """Manufactured-solution errors e(N) and observed orders."""
    resp = _run(ctx, "converge", config, flags)
    _emit(resp.csv, output)
    _finish(resp)


@main.command()
@click.option("--config", type=click.Path(exists=True, dir_okay=False))
@click.option("--scheme", type=click.Choice(SCHEMES, case_sensitive=False))
@click.option("--M", "M", type=int)
@click.option("--L", "L", type=float)
@click.option("--kappa", type=float)
@click.option("--epsilon", type=float)
@click.option("--alpha", type=float)
@click.option("--amplitude", type=float)
@click.option("--N", "N", type=int)
@click.option("--gamma", type=float)
@click.option("--ratio", type=float)
@click.option("--mesh-seed", type=int)
@click.option("--adaptive/--no-adaptive", default=None)
@click.option("--eta", type=float)
@click.option("--tau-min", type=float)
@click.option("--tau-max", type=float)
@click.option("--warmup-gamma", type=float)
@click.option("--warmup-N0", "warmup_N0", type=int)
@click.option("--warmup-T0", "warmup_T0", type=float)
@click.option("--snapshots", help="Snapshot times, comma separated.")
@click.option("--allow-violation/--no-allow-violation", default=None)
@mesh_options
@click.option("--output", "-o", default=None, help="Output directory (default: trace CSV to stdout).")
@click.pass_context
def simulate(ctx, config, output, **flags):
    """Run a coarsening simulation from seeded random data."""
    resp = _run(ctx, "simulate", config, flags)
    if output is None:
        _emit(resp.csv, None)
    else:
        os.makedirs(output, exist_ok=True)
        _emit(resp.csv, os.path.join(output, "trace.csv"))
        for t, text in resp.snapshots.items():
            _emit(text, os.path.join(output, f"phi_t{t}.csv"))
        _emit(json.dumps({"meta": resp.meta, "checks": resp.checks}, indent=2) + "\n",
              os.path.join(output, "meta.json"))
    _finish(resp)


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
def serve(host, port):
    """Start the HTTP service."""
    import uvicorn

    uvicorn.run("tfch.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
