"""Request and response models shared by the HTTP service and the CLI."""

from __future__ import annotations

import math
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field

FamilyName = Literal["L1", "L1h", "L1a", "AuxL1h", "AuxL1a"]
SchemeName = Literal["L1", "L1h", "L1a"]
MeshKind = Literal["uniform", "graded", "ratio", "fixed-ratio", "random", "composite"]
Number = Union[int, float]


class _Request(BaseModel):
    model_config = ConfigDict(extra="forbid")

    def to_config(self) -> dict:
        return self.model_dump(exclude_none=True)


class MeshFields(_Request):
    mesh: MeshKind = "uniform"
    T: float = Field(1.0, gt=0)
    gamma: Optional[float] = Field(None, ge=1)
    ratio: Optional[float] = Field(None, gt=0)
    seed: Optional[int] = None


class KernelsRequest(MeshFields):
    family: FamilyName = "L1"
    alpha: float = Field(0.5, gt=0, lt=1)
    N: int = Field(10, ge=1)
    n: Optional[int] = Field(None, ge=1)
    variant: Literal["uniform", "nonuniform"] = "nonuniform"


class EigenRequest(MeshFields):
    mesh: MeshKind = "graded"
    family: FamilyName = "L1"
    alpha: list[float] = Field(default_factory=lambda: [0.5])
    N: list[int] = Field(default_factory=lambda: [100])
    gamma: Optional[list[float]] = None
    ratio: Optional[list[float]] = None
    workers: int = Field(1, ge=1)


class ConvergeRequest(_Request):
    scheme: SchemeName = "L1"
    mesh: MeshKind = "composite"
    T: float = Field(1.0, gt=0)
    N: list[int] = Field(default_factory=lambda: [40, 80, 160, 320])
    gamma: float = Field(4.0, ge=1)
    alpha: float = Field(0.4, gt=0, lt=1)
    sigma: float = Field(0.4, gt=0, lt=1)
    M: int = Field(64, ge=4)
    kappa: float = Field(1.0, gt=0)
    epsilon: float = Field(0.5, gt=0)
    seed: int = 0
    workers: int = Field(1, ge=1)


class SimulateRequest(_Request):
    scheme: SchemeName = "L1h"
    M: int = Field(64, ge=4)
    L: float = Field(2.0 * math.pi, gt=0)
    kappa: float = Field(0.01, gt=0)
    epsilon: float = Field(0.05, gt=0)
    alpha: float = Field(0.5, gt=0, lt=1)
    T: float = Field(10.0, gt=0)
    amplitude: float = Field(1e-3, gt=0)
    seed: int = 0
    mesh: MeshKind = "uniform"
    N: int = Field(200, ge=1)
    gamma: Optional[float] = Field(None, ge=1)
    ratio: Optional[float] = Field(None, gt=0)
    mesh_seed: Optional[int] = None
    adaptive: bool = False
    eta: float = Field(1e3, gt=0)
    tau_min: float = Field(1e-3, gt=0)
    tau_max: float = Field(0.1, gt=0)
    warmup_gamma: Optional[float] = Field(None, ge=1)
    warmup_N0: int = Field(30, ge=1)
    warmup_T0: float = Field(0.01, gt=0)
    snapshots: list[float] = Field(default_factory=list)
    allow_violation: bool = False


class TableResponse(BaseModel):
    ok: bool
    checks: dict[str, bool]
    meta: dict
    rows: list[dict]
    csv: str


class KernelsResponse(BaseModel):
    ok: bool
    checks: dict[str, bool]
    meta: dict
    criteria: dict
    identities: dict[str, float]
    csv: str


class SimulateResponse(BaseModel):
    ok: bool
    checks: dict[str, bool]
    meta: dict
    csv: str
    snapshots: dict[str, str] = Field(default_factory=dict)


class ErrorResponse(BaseModel):
    error: str
    detail: str
