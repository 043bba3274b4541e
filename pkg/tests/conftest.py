"""Shared builders for architectures, task graphs and mappings."""

from __future__ import annotations

from nocmap import analysis
from nocmap.model import (
    PE,
    Architecture,
    EnergyModel,
    Message,
    SchedulingParams,
    Task,
    TaskGraph,
    xy_route,
)


def build_arch(
    width=2,
    height=2,
    type_at=None,
    sl_max=10,
    link_capacity=2e9,
    power_at=None,
    e_sbit=0.98,
    e_lbit=0.0936,
    router_cycle=1.0,
    flit_bits=32,
    unavailable=(),
) -> Architecture:
    type_at = type_at or (lambda c: "risc")
    power_at = power_at or (lambda c: 1.0)
    pes = {}
    for y in range(height):
        for x in range(width):
            c = (x, y)
            pes[c] = PE(
                coord=c,
                rtype=type_at(c),
                power=power_at(c),
                available=c not in set(unavailable),
            )
    return Architecture(
        width=width,
        height=height,
        pes=pes,
        link_capacity=link_capacity,
        sl_max=sl_max,
        energy=EnergyModel(e_sbit=e_sbit, e_lbit=e_lbit),
        router_cycle=router_cycle,
        flit_bits=flit_bits,
    )


def build_graph(
    wcets: dict[str, dict[str, float]],
    msgs: list[tuple[str, str, str, float]] = (),
    period: float = 1000.0,
    deadline: float | None = None,
) -> TaskGraph:
    tasks = {tid: Task(id=tid, wcet=dict(w)) for tid, w in wcets.items()}
    messages = {}
    edges = []
    for mid, src, dst, size in msgs:
        messages[mid] = Message(id=mid, size=size)
        edges.append((src, mid))
        edges.append((mid, dst))
    return TaskGraph(
        tasks=tasks,
        messages=messages,
        edges=tuple(edges),
        period=period,
        deadline=period if deadline is None else deadline,
    )


def bind_all(g: TaskGraph, bind: dict, sl=None, prio=None) -> analysis.Mapping:
    """Mapping with xy-routes derived from the binding; slot counts default
    to the full budget unless given, priorities to per-PE rank by task id."""
    route = {
        mid: xy_route(bind[g.source_of(mid)], bind[g.dest_of(mid)])
        for mid in g.message_ids
    }
    if sl is None:
        sl = {mid: 10 for mid in g.message_ids}
    elif isinstance(sl, int):
        sl = {mid: sl for mid in g.message_ids}
    if prio is None:
        by_pe: dict = {}
        for tid in g.task_ids:
            by_pe.setdefault(bind[tid], []).append(tid)
        prio = {}
        for members in by_pe.values():
            for rank, tid in enumerate(sorted(members)):
                prio[tid] = rank
    return analysis.Mapping(bind=dict(bind), route=route, prio=dict(prio), sl=dict(sl))


PARAMS = SchedulingParams(snt=50.0, sios=10.0, k_extra=4)
PARAMS_K0 = SchedulingParams(snt=50.0, sios=10.0, k_extra=0)
