"""HTTP front end for the run-time manager.

The manager is the long-running, multi-client piece of the toolkit: one
shared system state per service instance, against which clients admit and
remove applications (uploading operating-point containers produced by the
design-time exploration), flip PE availability, and inspect occupancy.
Admission, commit and removal are serialized on a single lock, matching the
single-manager ownership model of the state.

Run it with `nocmap serve` or any ASGI server pointing at
`nocmap.service:app`.
"""

from __future__ import annotations

import base64
import binascii
import json
import threading
from typing import Literal

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__, cgraph, rtm
from .model import (
    Architecture,
    InvariantError,
    ParseError,
    load_architecture,
    load_taskgraph,
)


class SchedulingDoc(BaseModel):
    snt: float = 50.0
    sios: float = 10.0
    k_extra: int = 4


class SystemInitRequest(BaseModel):
    architecture: dict
    scheduling: SchedulingDoc = SchedulingDoc()


class SystemInfo(BaseModel):
    width: int
    height: int
    sl_max: int
    types: list[str]
    pes: int
    apps: list[str]


class PeState(BaseModel):
    x: int
    y: int
    type: str
    available: bool
    load: float
    task_count: int
    apps: list[str]
    levels: list[int]


class StateResponse(BaseModel):
    pes: list[PeState]
    used_links: int
    apps: list[str]


class AdmitRequest(BaseModel):
    container_b64: str = Field(description="binary operating-point container, base64")
    mode: Literal["ti", "spi"] = "ti"
    timeout_ms: float | None = None


class PlacementOut(BaseModel):
    cluster: int
    pe: tuple[int, int]
    priorities: list[int]


class RouteOut(BaseModel):
    cluster: int
    links: list[list[list]]


class AdmitResponse(BaseModel):
    admitted: bool
    app_id: str
    op_index: int | None = None
    reason: Literal["exhausted", "timeout"] | None = None
    wall_us: int
    placements: list[PlacementOut] = []
    routes: list[RouteOut] = []


class AvailabilityRequest(BaseModel):
    available: bool


class ValidateRequest(BaseModel):
    kind: Literal["architecture", "taskgraph"]
    document: str


class ValidateResponse(BaseModel):
    valid: bool
    errors: list[str]


class _Manager:
    """Shared run-time state plus the lock that serializes mutations."""

    def __init__(self) -> None:
        self.lock = threading.Lock()
        self.arch: Architecture | None = None
        self.state: rtm.SystemState | None = None

    def require_state(self) -> rtm.SystemState:
        if self.state is None:
            raise HTTPException(status_code=404, detail="no system configured")
        return self.state


def _system_info(arch: Architecture, state: rtm.SystemState) -> SystemInfo:
    return SystemInfo(
        width=arch.width,
        height=arch.height,
        sl_max=arch.sl_max,
        types=list(arch.resource_types),
        pes=len(arch.coords),
        apps=sorted(state.apps),
    )


def create_app() -> FastAPI:
    app = FastAPI(title="nocmap run-time manager", version=__version__)
    manager = _Manager()
    app.state.manager = manager

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/system", response_model=SystemInfo)
    def configure_system(req: SystemInitRequest):
        try:
            arch = load_architecture(json.dumps(req.architecture))
        except (ParseError, InvariantError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        with manager.lock:
            manager.arch = arch
            manager.state = rtm.SystemState(arch)
            return _system_info(arch, manager.state)

    @app.get("/system", response_model=SystemInfo)
    def system_info():
        with manager.lock:
            state = manager.require_state()
            return _system_info(manager.arch, state)

    @app.get("/state", response_model=StateResponse)
    def state_snapshot():
        with manager.lock:
            state = manager.require_state()
            pes = []
            for coord in state.arch.coords:
                clusters = state.clusters_on(coord)
                pes.append(
                    PeState(
                        x=coord[0],
                        y=coord[1],
                        type=state.arch.pes[coord].rtype,
                        available=state.available(coord),
                        load=round(state.pe_load(coord), 6),
                        task_count=state.pe_task_count(coord),
                        apps=sorted({bc.app_id for bc in clusters}),
                        levels=sorted(state.occupied_levels(coord)),
                    )
                )
            return StateResponse(
                pes=pes,
                used_links=sum(1 for n in state.link_slots.values() if n),
                apps=sorted(state.apps),
            )

    @app.post("/apps/{app_id}/admit", response_model=AdmitResponse)
    def admit_app(app_id: str, req: AdmitRequest):
        try:
            blob = base64.b64decode(req.container_b64, validate=True)
        except (binascii.Error, ValueError):
            raise HTTPException(status_code=400, detail="container_b64 is not valid base64")
        with manager.lock:
            state = manager.require_state()
            if app_id in state.apps:
                raise HTTPException(status_code=409, detail=f"app {app_id!r} already admitted")
            try:
                _, ops = cgraph.read_container(blob, manager.arch.resource_types)
            except cgraph.CodecError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            if not ops:
                raise HTTPException(status_code=400, detail="container holds no operating points")
            timeout_s = req.timeout_ms / 1e3 if req.timeout_ms is not None else None
            report = rtm.admit(
                ops, state, rtm.IsolationMode(req.mode), timeout_s, app_id=app_id
            )
            wall = sum(a.wall_us for a in report.attempts)
            if not report.success:
                reason = "timeout" if report.any_timeout else "exhausted"
                return AdmitResponse(
                    admitted=False, app_id=app_id, reason=reason, wall_us=wall
                )
            rtm.commit(report.assignment, report.op.cg, app_id, state)
            asg = report.assignment
            return AdmitResponse(
                admitted=True,
                app_id=app_id,
                op_index=report.op_index,
                wall_us=wall,
                placements=[
                    PlacementOut(
                        cluster=tc_id,
                        pe=coord,
                        priorities=list(asg.priorities[tc_id]),
                    )
                    for tc_id, coord in sorted(asg.placements.items())
                ],
                routes=[
                    RouteOut(
                        cluster=mc_id,
                        links=[[list(src), list(dst)] for src, dst in route],
                    )
                    for mc_id, route in sorted(asg.routes.items())
                ],
            )

    @app.delete("/apps/{app_id}")
    def remove_app(app_id: str):
        with manager.lock:
            state = manager.require_state()
            try:
                rtm.remove(app_id, state)
            except rtm.StateError as exc:
                raise HTTPException(status_code=404, detail=str(exc))
            return {"removed": app_id}

    @app.post("/pes/{x}/{y}/availability")
    def set_availability(x: int, y: int, req: AvailabilityRequest):
        with manager.lock:
            state = manager.require_state()
            if not state.arch.contains((x, y)):
                raise HTTPException(status_code=404, detail=f"no PE at ({x}, {y})")
            state.set_available((x, y), req.available)
            return {"x": x, "y": y, "available": req.available}

    @app.post("/validate", response_model=ValidateResponse)
    def validate(req: ValidateRequest):
        loader = load_architecture if req.kind == "architecture" else load_taskgraph
        try:
            loader(req.document)
        except (ParseError, InvariantError) as exc:
            return ValidateResponse(valid=False, errors=[str(exc)])
        return ValidateResponse(valid=True, errors=[])

    return app


app = create_app()
