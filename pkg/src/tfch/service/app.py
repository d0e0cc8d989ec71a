"""HTTP front end over the experiment drivers."""

from __future__ import annotations

import math

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, experiments
from ..errors import StepRestrictionError, TFCHError, UsageError
from .schemas import (ConvergeRequest, EigenRequest, KernelsRequest, KernelsResponse,
                      SimulateRequest, SimulateResponse, TableResponse)


def _clean(v):
    # JSON has no NaN/inf; send them as null
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


def _table(res: experiments.TableResult) -> TableResponse:
    return TableResponse(ok=res.ok, checks=res.checks, meta=_clean(res.meta),
                         rows=_clean(res.rows), csv=res.to_csv())


def handle_kernels(req: KernelsRequest) -> KernelsResponse:
    res = experiments.cmd_kernels(req.to_config())
    return KernelsResponse(ok=res.ok, checks=res.checks, meta=_clean(res.meta),
                           criteria=res.criteria, identities=res.identities, csv=res.to_csv())


def handle_eigen(req: EigenRequest) -> TableResponse:
    return _table(experiments.cmd_eigen(req.to_config()))


def handle_converge(req: ConvergeRequest) -> TableResponse:
    return _table(experiments.cmd_converge(req.to_config()))


def handle_simulate(req: SimulateRequest) -> SimulateResponse:
    res = experiments.cmd_simulate(req.to_config())
    snaps = {f"{t_req:g}": fld.to_csv(f"t={t!r}")
             for t_req, (t, fld) in sorted(res.trace.snapshots.items())}
    return SimulateResponse(ok=res.ok, checks=res.checks, meta=_clean(res.meta),
                            csv=res.to_csv(), snapshots=snaps)


app = FastAPI(title="tfch", version=__version__)


@app.exception_handler(TFCHError)
async def _tfch_error(request: Request, exc: TFCHError):
    # bad input (including a step the L1 scheme cannot take) is the client's to fix
    status = 422 if isinstance(exc, (ValueError, UsageError, StepRestrictionError)) else 500
    return JSONResponse(status_code=status,
                        content={"error": type(exc).__name__, "detail": str(exc)})


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


# plain `def` routes run in FastAPI's threadpool, so long runs do not block the loop
@app.post("/kernels", response_model=KernelsResponse)
def kernels(req: KernelsRequest):
    return handle_kernels(req)


@app.post("/eigen", response_model=TableResponse)
def eigen(req: EigenRequest):
    return handle_eigen(req)


@app.post("/converge", response_model=TableResponse)
def converge(req: ConvergeRequest):
    return handle_converge(req)


@app.post("/simulate", response_model=SimulateResponse)
def simulate(req: SimulateRequest):
    return handle_simulate(req)
