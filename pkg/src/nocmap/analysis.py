"""Composable performance and energy analysis for a concrete mapping.

All functions are pure over immutable inputs and depend only on the analyzed
application's own mapping plus the declared budgets (slot budget, task-count
headroom); co-mapped applications never enter the arithmetic. That is what
makes per-application admission sound at run time.

Units: durations in µs, sizes in bits, energy in nJ, link capacity in bits/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import (
    Architecture,
    Coord,
    Link,
    Message,
    SchedulingParams,
    TaskGraph,
    route_hops,
)


class AnalysisError(ValueError):
    """Raised for incomplete mappings or missing WCET entries."""


@dataclass(frozen=True)
class Mapping:
    """A design-time mapping: binding, routing, priorities, slot counts.

    bind maps task ids to tile coordinates; route maps message ids to link
    sequences (empty for co-mapped endpoints); prio is unique per PE with
    smaller values ranking higher; sl gives TDM slots per message.
    """

    bind: dict[str, Coord]
    route: dict[str, tuple[Link, ...]]
    prio: dict[str, int]
    sl: dict[str, int]


@dataclass(frozen=True)
class FeasibilityReport:
    """Outcome of the feasibility check; lists every violated condition."""

    feasible: bool
    violations: tuple[str, ...]


@dataclass(frozen=True)
class LinkFeasibility:
    ok: bool
    route_slots: dict[tuple[Coord, Coord], int]
    offenders: tuple[tuple[Coord, Coord], ...]


def slot_demand(wcet: float, params: SchedulingParams) -> int:
    """Scheduling slots a task needs per period."""
    return math.ceil(wcet / params.snt)


def task_load(wcet: float, params: SchedulingParams, period: float) -> float:
    """Fraction of a PE one task occupies: ceil(wcet/snt)·(snt+sios)/period."""
    return slot_demand(wcet, params) * (params.snt + params.sios) / period


def _bound_wcet(g: TaskGraph, m: Mapping, arch: Architecture, task_id: str) -> float:
    coord = m.bind.get(task_id)
    if coord is None:
        raise AnalysisError(f"task {task_id}: not bound to any PE")
    rtype = arch.pes[coord].rtype
    wcet = g.tasks[task_id].wcet.get(rtype)
    if wcet is None:
        raise AnalysisError(
            f"task {task_id}: bound to {coord} of type {rtype!r} without a WCET entry"
        )
    return wcet


def pe_utilization(
    g: TaskGraph, m: Mapping, params: SchedulingParams, coord: Coord, arch: Architecture
) -> float:
    """Load induced on one PE by the tasks of this mapping bound to it."""
    total = 0.0
    for tid in g.task_ids:
        if m.bind.get(tid) == coord:
            total += task_load(_bound_wcet(g, m, arch, tid), params, g.period)
    return total


def slots_interval(
    msg: Message, g: TaskGraph, arch: Architecture
) -> tuple[int, int]:
    """Admissible slot counts for a message: enough for its bandwidth, at
    most the full link budget.

    Raises AnalysisError when the bandwidth demand exceeds a whole link.
    """
    ratio = msg.bandwidth(g.period) / arch.capacity_bits_per_us()
    lo = math.ceil(ratio * arch.sl_max)
    if lo > arch.sl_max:
        raise AnalysisError(
            f"message {msg.id}: bandwidth demand {ratio:.3f} of a link exceeds capacity"
        )
    return max(lo, 1), arch.sl_max


def link_slots_feasible(
    g: TaskGraph, m: Mapping, arch: Architecture
) -> LinkFeasibility:
    """Check the per-route slot budget.

    Under xy-routing, messages share a route exactly when they share source
    and target PEs, so slot sums are grouped by that endpoint pair. Local
    messages occupy no slots.
    """
    sums: dict[tuple[Coord, Coord], int] = {}
    for mid in g.message_ids:
        src = m.bind.get(g.source_of(mid))
        dst = m.bind.get(g.dest_of(mid))
        if src is None or dst is None:
            raise AnalysisError(f"message {mid}: endpoint task not bound")
        if src == dst:
            continue
        sums[(src, dst)] = sums.get((src, dst), 0) + m.sl[mid]
    offenders = tuple(sorted(k for k, v in sums.items() if v > arch.sl_max))
    return LinkFeasibility(ok=not offenders, route_slots=sums, offenders=offenders)


def _task_term(
    g: TaskGraph, m: Mapping, params: SchedulingParams, arch: Architecture, tid: str
) -> float:
    # Every slot of the task may wait for the slots of up to K_max - 1 other
    # tasks plus its own; K_max counts the co-bound tasks of this mapping
    # plus the admission headroom.
    coord = m.bind.get(tid)
    if coord is None:
        raise AnalysisError(f"task {tid}: not bound to any PE")
    co_bound = sum(1 for other in g.task_ids if m.bind.get(other) == coord)
    k_max = co_bound + params.k_extra
    return slot_demand(_bound_wcet(g, m, arch, tid), params) * k_max * (
        params.snt + params.sios
    )


def _message_term(
    g: TaskGraph, m: Mapping, arch: Architecture, params: SchedulingParams, mid: str
) -> float:
    if mid not in m.route:
        raise AnalysisError(f"message {mid}: not routed")
    route = m.route[mid]
    if not route:
        return 0.0
    hops = route_hops(route)
    flits = math.ceil(g.messages[mid].size / arch.flit_bits)
    # TDM interleaving: with sl of sl_max slots reserved, a flit waits on
    # average sl_max/sl slot lengths for its turn.
    return hops * arch.router_cycle + flits * (arch.sl_max / m.sl[mid]) * params.snt


def worst_case_latency(
    g: TaskGraph, m: Mapping, params: SchedulingParams, arch: Architecture
) -> float:
    """Conservative end-to-end latency bound over the longest graph path.

    Monotone: never increases when a message gets more slots, never
    decreases when the task-count headroom (k_extra) grows. The network and
    task terms are isolated here so a tighter model can replace them without
    touching callers.
    """
    terms: dict[tuple[str, str], float] = {}
    for kind, ident in g.topo_vertices:
        if kind == "t":
            terms[(kind, ident)] = _task_term(g, m, params, arch, ident)
        else:
            terms[(kind, ident)] = _message_term(g, m, arch, params, ident)
    best: dict[tuple[str, str], float] = {}
    for v in g.topo_vertices:
        preds = g.vertex_preds(v)
        best[v] = terms[v] + (max(best[p] for p in preds) if preds else 0.0)
    return max(best.values(), default=0.0)


def pe_energy(g: TaskGraph, m: Mapping, arch: Architecture) -> float:
    """Worst-case compute energy in nJ: power(type) · wcet summed over tasks."""
    total = 0.0
    for tid in g.task_ids:
        coord = m.bind.get(tid)
        if coord is None:
            raise AnalysisError(f"task {tid}: not bound to any PE")
        # W · µs = µJ; scale to nJ.
        total += arch.pes[coord].power * _bound_wcet(g, m, arch, tid) * 1e3
    return total


def noc_energy(g: TaskGraph, m: Mapping, arch: Architecture) -> float:
    """Worst-case NoC energy in nJ; local messages contribute nothing."""
    total = 0.0
    for mid in g.message_ids:
        route = m.route.get(mid)
        if route is None:
            raise AnalysisError(f"message {mid}: not routed")
        hops = route_hops(route)
        if hops == 0:
            continue
        per_bit = hops * arch.energy.e_sbit + (hops - 1) * arch.energy.e_lbit
        total += per_bit * g.messages[mid].size
    return total


def energy(g: TaskGraph, m: Mapping, arch: Architecture) -> float:
    """Total worst-case energy in nJ (compute plus NoC)."""
    return pe_energy(g, m, arch) + noc_energy(g, m, arch)


def is_feasible(
    g: TaskGraph, m: Mapping, params: SchedulingParams, arch: Architecture
) -> FeasibilityReport:
    """Deadline, PE utilization and link slot checks; reports all violations."""
    violations: list[str] = []
    bound = worst_case_latency(g, m, params, arch)
    if bound > g.deadline:
        violations.append(f"deadline: latency bound {bound:.3f} exceeds {g.deadline:.3f}")
    for coord in sorted({m.bind[t] for t in g.task_ids if t in m.bind}):
        u = pe_utilization(g, m, params, coord, arch)
        if u > 1.0:
            violations.append(f"pe{coord}: utilization {u:.4f} > 1")
    links = link_slots_feasible(g, m, arch)
    for src, dst in links.offenders:
        violations.append(
            f"route {src}->{dst}: {links.route_slots[(src, dst)]} slots exceed {arch.sl_max}"
        )
    return FeasibilityReport(feasible=not violations, violations=tuple(violations))
