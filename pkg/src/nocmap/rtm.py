"""Run-time manager: occupancy state, admission constraints, backtracking.

Admission maps a constraint graph onto the current system by binding every
task cluster to a PE and routing every message cluster, subject to:

  C.1  routes connect the bound endpoint PEs within the cluster's hop budget
  C.2  per link, accumulated slot counts stay within the slot budget
  C.3  the target PE has the cluster's resource type and is available
  C.4  the loads bound to a PE sum to at most 100%
  C.5  the task count on a PE stays within every bound cluster's k_max cap

Temporal isolation enforces all five; spatial isolation gives each task
cluster an empty PE of the right type (C.4/C.5 then hold by construction)
while the NoC checks C.1/C.2 still apply. Any spatially valid assignment is
therefore also temporally valid on the same state.

SystemState is owned by one manager thread; admit/commit/remove are
serialized by the caller. The solver never mutates the passed state: it
searches on a scratch copy, and commit applies an assignment atomically.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass

from .cgraph import ConstraintGraph, MessageCluster, OperatingPoint, TaskCluster
from .model import Architecture, Coord, Link, hop_count, pe_node, route_hops, xy_route

logger = logging.getLogger(__name__)

_LOAD_EPS = 1e-9


class StateError(RuntimeError):
    """Raised for commit/remove misuse or corrupted state."""


class IsolationMode(enum.Enum):
    TEMPORAL = "ti"
    SPATIAL = "spi"


@dataclass(frozen=True)
class BoundCluster:
    app_id: str
    cluster_id: int
    rtype: str
    load: float
    n_tasks: int
    k_max: int
    levels: tuple[int, ...]


@dataclass(frozen=True)
class CommittedApp:
    placements: dict[int, Coord]
    routes: dict[int, tuple[tuple[Link, ...], int]]  # mc id -> (route, sl)
    priorities: dict[int, tuple[int, ...]]


@dataclass(frozen=True)
class Assignment:
    """A complete constraint-graph mapping: per task cluster a target PE and
    shifted priority levels, per message cluster a route."""

    placements: dict[int, Coord]
    routes: dict[int, tuple[Link, ...]]
    priorities: dict[int, tuple[int, ...]]


class SystemState:
    """Current occupancy of the platform: bound clusters per PE, used TDM
    slots per link, and the PE availability mask."""

    def __init__(self, arch: Architecture):
        self.arch = arch
        self.pe_clusters: dict[Coord, list[BoundCluster]] = {}
        self.link_slots: dict[Link, int] = {}
        self.apps: dict[str, CommittedApp] = {}
        self.unavailable: set[Coord] = {
            pe.coord for pe in arch.pes.values() if not pe.available
        }

    # -- queries ------------------------------------------------------------

    def available(self, coord: Coord) -> bool:
        return coord not in self.unavailable

    def set_available(self, coord: Coord, available: bool) -> None:
        if available:
            self.unavailable.discard(coord)
        else:
            self.unavailable.add(coord)

    def clusters_on(self, coord: Coord) -> tuple[BoundCluster, ...]:
        return tuple(self.pe_clusters.get(coord, ()))

    def pe_load(self, coord: Coord) -> float:
        return sum(bc.load for bc in self.pe_clusters.get(coord, ()))

    def pe_task_count(self, coord: Coord) -> int:
        return sum(bc.n_tasks for bc in self.pe_clusters.get(coord, ()))

    def pe_kmax_cap(self, coord: Coord) -> int | None:
        """Tightest k_max among clusters bound to the PE; None when empty."""
        clusters = self.pe_clusters.get(coord)
        if not clusters:
            return None
        return min(bc.k_max for bc in clusters)

    def occupied_levels(self, coord: Coord) -> set[int]:
        levels: set[int] = set()
        for bc in self.pe_clusters.get(coord, ()):
            levels.update(bc.levels)
        return levels

    def used_slots(self, link: Link) -> int:
        return self.link_slots.get(link, 0)

    def occupied_pes(self) -> set[Coord]:
        return {c for c, clusters in self.pe_clusters.items() if clusters}

    # -- lifecycle ----------------------------------------------------------

    def copy(self) -> "SystemState":
        dup = SystemState.__new__(SystemState)
        dup.arch = self.arch
        dup.pe_clusters = {c: list(v) for c, v in self.pe_clusters.items() if v}
        dup.link_slots = {l: n for l, n in self.link_slots.items() if n}
        dup.apps = dict(self.apps)
        dup.unavailable = set(self.unavailable)
        return dup

    def snapshot(self):
        """Canonical content view used for equality."""
        return (
            tuple(sorted(self.unavailable)),
            tuple(
                (c, tuple(sorted(v, key=lambda b: (b.app_id, b.cluster_id))))
                for c, v in sorted(self.pe_clusters.items())
                if v
            ),
            tuple(sorted((l, n) for l, n in self.link_slots.items() if n)),
            tuple(sorted(self.apps)),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SystemState):
            return NotImplemented
        return self.snapshot() == other.snapshot() and self.apps == other.apps

    def check_invariants(self) -> list[str]:
        problems: list[str] = []
        for coord, clusters in self.pe_clusters.items():
            if not clusters:
                continue
            load = sum(bc.load for bc in clusters)
            if load > 1.0 + _LOAD_EPS:
                problems.append(f"pe{coord}: load {load:.6f} exceeds 1")
            count = sum(bc.n_tasks for bc in clusters)
            cap = min(bc.k_max for bc in clusters)
            if count > cap:
                problems.append(f"pe{coord}: {count} tasks exceed cap {cap}")
            levels = [lv for bc in clusters for lv in bc.levels]
            if len(levels) != len(set(levels)):
                problems.append(f"pe{coord}: duplicate priority levels")
        for link, used in self.link_slots.items():
            if used < 0 or used > self.arch.sl_max:
                problems.append(f"link {link}: {used} slots outside [0, {self.arch.sl_max}]")
        return problems

    # -- internal mutation (used by the solver's scratch copies and commit) --

    def _bind(self, bc: BoundCluster, coord: Coord) -> None:
        self.pe_clusters.setdefault(coord, []).append(bc)

    def _unbind(self, coord: Coord) -> None:
        clusters = self.pe_clusters[coord]
        clusters.pop()
        if not clusters:
            del self.pe_clusters[coord]

    def _add_slots(self, route: tuple[Link, ...], sl: int) -> None:
        for link in route:
            self.link_slots[link] = self.link_slots.get(link, 0) + sl

    def _sub_slots(self, route: tuple[Link, ...], sl: int) -> None:
        for link in route:
            remaining = self.link_slots.get(link, 0) - sl
            if remaining:
                self.link_slots[link] = remaining
            else:
                self.link_slots.pop(link, None)


# ---------------------------------------------------------------------------
# Constraints


def _route_connects(route: tuple[Link, ...], src: Coord, dst: Coord) -> bool:
    if src == dst:
        return route == ()
    if not route:
        return False
    if route[0][0] != pe_node(src) or route[-1][1] != pe_node(dst):
        return False
    for (_, a_dst), (b_src, _) in zip(route, route[1:]):
        if a_dst != b_src:
            return False
    return True


def check_c1(route: tuple[Link, ...], mc: MessageCluster, asg: Assignment) -> bool:
    """Route connects the bound endpoint PEs within the hop budget."""
    src = asg.placements.get(mc.src)
    dst = asg.placements.get(mc.dst)
    if src is None or dst is None:
        return False
    return _route_connects(route, src, dst) and route_hops(route) <= mc.hop


def check_c2(route: tuple[Link, ...], mc: MessageCluster, state: SystemState) -> bool:
    """Adding the cluster's slots leaves every link within the slot budget."""
    return all(
        mc.sl + state.used_slots(link) <= state.arch.sl_max for link in route
    )


def check_c3(coord: Coord, tc: TaskCluster, state: SystemState) -> bool:
    """Target PE has the required resource type and is available."""
    return state.arch.pes[coord].rtype == tc.rtype and state.available(coord)


def check_c4(coord: Coord, tc: TaskCluster, state: SystemState) -> bool:
    """Loads on the target PE, including the new cluster, stay within 100%."""
    return tc.load + state.pe_load(coord) <= 1.0 + _LOAD_EPS


def check_c5(coord: Coord, tc: TaskCluster, state: SystemState) -> bool:
    """Task count stays within the tightest k_max cap on the target PE."""
    cap = state.pe_kmax_cap(coord)
    cap = tc.k_max if cap is None else min(tc.k_max, cap)
    return tc.n_tasks + state.pe_task_count(coord) <= cap


def shift_priorities(
    coord: Coord, tc: TaskCluster, state: SystemState
) -> tuple[int, ...]:
    """Priority levels for the cluster's tasks on the target PE.

    Each task keeps its analyzed level when free, otherwise moves to the
    next free level above; the cluster's relative order is preserved and the
    result is disjoint from the levels already occupied on the PE. On an
    empty PE the levels come back unchanged.
    """
    occupied = state.occupied_levels(coord)
    order = sorted(range(len(tc.prios)), key=lambda i: tc.prios[i])
    shifted: dict[int, int] = {}
    floor = -1
    for i in order:
        level = max(tc.prios[i], floor + 1)
        while level in occupied:
            level += 1
        shifted[i] = level
        floor = level
    return tuple(shifted[i] for i in range(len(tc.prios)))


# ---------------------------------------------------------------------------
# Backtracking solver


@dataclass(frozen=True)
class BacktrackResult:
    assignment: Assignment | None
    timed_out: bool
    nodes: int
    wall_us: int

    @property
    def exhausted(self) -> bool:
        return self.assignment is None and not self.timed_out


def backtrack(
    cg: ConstraintGraph,
    state: SystemState,
    mode: IsolationMode,
    timeout_s: float | None = None,
) -> BacktrackResult:
    """Depth-first search for a constraint-graph mapping.

    Task clusters are mapped most-constrained first (descending load, then
    descending size, then id); candidate PEs are tried in ascending current
    load, ties broken row-major. A message cluster is routed as soon as both
    of its endpoints are bound, via xy-routing.

    Returns an assignment satisfying the mode's constraints, or none; the
    result tells a timeout apart from an exhausted search. The passed state
    is never mutated.
    """
    t0 = time.monotonic()
    deadline = None if timeout_s is None else t0 + timeout_s
    scratch = state.copy()
    order = sorted(cg.task_clusters, key=lambda tc: (-tc.load, -tc.n_tasks, tc.id))
    adjacent: dict[int, list[MessageCluster]] = {tc.id: [] for tc in cg.task_clusters}
    for mc in cg.message_clusters:
        adjacent[mc.src].append(mc)
        adjacent[mc.dst].append(mc)

    placements: dict[int, Coord] = {}
    routes: dict[int, tuple[Link, ...]] = {}
    priorities: dict[int, tuple[int, ...]] = {}
    nodes = 0
    timed_out = False

    def expired() -> bool:
        nonlocal timed_out
        if deadline is not None and time.monotonic() >= deadline:
            timed_out = True
        return timed_out

    def candidates(tc: TaskCluster) -> list[Coord]:
        found = []
        for coord in scratch.arch.coords:
            if not check_c3(coord, tc, scratch):
                continue
            if mode is IsolationMode.SPATIAL and scratch.clusters_on(coord):
                continue
            viable = True
            for mc in adjacent[tc.id]:
                partner = mc.dst if mc.src == tc.id else mc.src
                if partner in placements:
                    if hop_count(coord, placements[partner]) > mc.hop:
                        viable = False
                        break
            if viable:
                found.append(coord)
        found.sort(key=lambda c: (scratch.pe_load(c), c[1], c[0]))
        return found

    def search(depth: int) -> bool:
        nonlocal nodes
        nodes += 1
        if depth == len(order):
            return True
        if expired():
            return False
        tc = order[depth]
        for coord in candidates(tc):
            if expired():
                return False
            new_routes: list[tuple[MessageCluster, tuple[Link, ...]]] = []
            ok = True
            for mc in adjacent[tc.id]:
                partner = mc.dst if mc.src == tc.id else mc.src
                if partner not in placements:
                    continue
                src_pe = coord if mc.src == tc.id else placements[mc.src]
                dst_pe = coord if mc.dst == tc.id else placements[mc.dst]
                route = xy_route(src_pe, dst_pe)
                if route_hops(route) > mc.hop:
                    ok = False
                    break
                new_routes.append((mc, route))
            if ok and mode is IsolationMode.TEMPORAL:
                ok = check_c4(coord, tc, scratch) and check_c5(coord, tc, scratch)
            if ok:
                # C.2 over the routes added in this step, sequentially, so
                # two new routes sharing a link account for each other.
                placed_routes: list[tuple[MessageCluster, tuple[Link, ...]]] = []
                for mc, route in new_routes:
                    if not check_c2(route, mc, scratch):
                        ok = False
                        break
                    scratch._add_slots(route, mc.sl)
                    placed_routes.append((mc, route))
                if not ok:
                    for mc, route in placed_routes:
                        scratch._sub_slots(route, mc.sl)
                    continue
                levels = shift_priorities(coord, tc, scratch)
                scratch._bind(
                    BoundCluster(
                        app_id="__search__",
                        cluster_id=tc.id,
                        rtype=tc.rtype,
                        load=tc.load,
                        n_tasks=tc.n_tasks,
                        k_max=tc.k_max,
                        levels=levels,
                    ),
                    coord,
                )
                placements[tc.id] = coord
                priorities[tc.id] = levels
                for mc, route in placed_routes:
                    routes[mc.id] = route
                if search(depth + 1):
                    return True
                for mc, route in placed_routes:
                    scratch._sub_slots(route, mc.sl)
                    del routes[mc.id]
                scratch._unbind(coord)
                del placements[tc.id]
                del priorities[tc.id]
                if timed_out:
                    return False
        return False

    found = search(0)
    wall_us = int((time.monotonic() - t0) * 1e6)
    assignment = (
        Assignment(placements=placements, routes=routes, priorities=priorities)
        if found
        else None
    )
    return BacktrackResult(
        assignment=assignment, timed_out=timed_out and not found, nodes=nodes, wall_us=wall_us
    )


def verify_assignment(
    cg: ConstraintGraph,
    asg: Assignment,
    state: SystemState,
    mode: IsolationMode,
) -> list[str]:
    """Independent full re-check of an assignment against a pre-commit state.

    Walks the complete assignment and re-derives every constraint from
    scratch; shares no bookkeeping with the solver. Returns the violations
    (empty list means valid).
    """
    problems: list[str] = []
    for tc in cg.task_clusters:
        if tc.id not in asg.placements:
            problems.append(f"cluster {tc.id}: unplaced")
        if tc.id not in asg.priorities:
            problems.append(f"cluster {tc.id}: no priorities")
    for mc in cg.message_clusters:
        if mc.id not in asg.routes:
            problems.append(f"message cluster {mc.id}: unrouted")
    if problems:
        return problems

    tc_by_id = {tc.id: tc for tc in cg.task_clusters}
    for tc in cg.task_clusters:
        coord = asg.placements[tc.id]
        if state.arch.pes[coord].rtype != tc.rtype:
            problems.append(f"cluster {tc.id}: type mismatch on {coord}")
        if not state.available(coord):
            problems.append(f"cluster {tc.id}: PE {coord} unavailable")

    for mc in cg.message_clusters:
        route = asg.routes[mc.id]
        src = asg.placements[mc.src]
        dst = asg.placements[mc.dst]
        if not _route_connects(route, src, dst):
            problems.append(f"message cluster {mc.id}: route does not connect {src}->{dst}")
        if route_hops(route) > mc.hop:
            problems.append(
                f"message cluster {mc.id}: {route_hops(route)} hops exceed budget {mc.hop}"
            )

    link_sums: dict[Link, int] = {}
    for mc in cg.message_clusters:
        for link in asg.routes[mc.id]:
            link_sums[link] = link_sums.get(link, 0) + mc.sl
    for link, added in link_sums.items():
        if added + state.used_slots(link) > state.arch.sl_max:
            problems.append(
                f"link {link}: {added + state.used_slots(link)} slots exceed {state.arch.sl_max}"
            )

    by_pe: dict[Coord, list[TaskCluster]] = {}
    for tc in cg.task_clusters:
        by_pe.setdefault(asg.placements[tc.id], []).append(tc)

    if mode is IsolationMode.SPATIAL:
        for coord, new_clusters in by_pe.items():
            if state.clusters_on(coord):
                problems.append(f"pe{coord}: not empty under spatial isolation")
            if len(new_clusters) > 1:
                problems.append(f"pe{coord}: multiple clusters under spatial isolation")
    else:
        for coord, new_clusters in by_pe.items():
            load = state.pe_load(coord) + sum(tc.load for tc in new_clusters)
            if load > 1.0 + _LOAD_EPS:
                problems.append(f"pe{coord}: load {load:.6f} exceeds 1")
            caps = [bc.k_max for bc in state.clusters_on(coord)] + [
                tc.k_max for tc in new_clusters
            ]
            count = state.pe_task_count(coord) + sum(tc.n_tasks for tc in new_clusters)
            if count > min(caps):
                problems.append(f"pe{coord}: {count} tasks exceed cap {min(caps)}")

    for coord, new_clusters in by_pe.items():
        levels = list(state.occupied_levels(coord))
        for tc in new_clusters:
            assigned = asg.priorities[tc.id]
            if len(assigned) != tc.n_tasks:
                problems.append(f"cluster {tc.id}: wrong priority count")
                continue
            original = sorted(range(tc.n_tasks), key=lambda i: tc.prios[i])
            reassigned = [assigned[i] for i in original]
            if reassigned != sorted(reassigned) or len(set(reassigned)) != len(reassigned):
                problems.append(f"cluster {tc.id}: priority order not preserved")
            levels.extend(assigned)
        if len(levels) != len(set(levels)):
            problems.append(f"pe{coord}: priority levels collide")

    return problems


# ---------------------------------------------------------------------------
# Commit / remove / admit


def commit(
    asg: Assignment, cg: ConstraintGraph, app_id: str, state: SystemState
) -> SystemState:
    """Apply an assignment to the state atomically.

    Raises StateError when the app id is already committed or when applying
    the assignment would break a state invariant (a solver bug).
    """
    if app_id in state.apps:
        raise StateError(f"app {app_id!r} already committed")
    trial = state.copy()
    mc_by_id = {mc.id: mc for mc in cg.message_clusters}
    routes: dict[int, tuple[tuple[Link, ...], int]] = {}
    for tc in cg.task_clusters:
        coord = asg.placements[tc.id]
        trial._bind(
            BoundCluster(
                app_id=app_id,
                cluster_id=tc.id,
                rtype=tc.rtype,
                load=tc.load,
                n_tasks=tc.n_tasks,
                k_max=tc.k_max,
                levels=asg.priorities[tc.id],
            ),
            coord,
        )
    for mc_id, route in asg.routes.items():
        sl = mc_by_id[mc_id].sl
        trial._add_slots(route, sl)
        routes[mc_id] = (route, sl)
    problems = trial.check_invariants()
    if problems:
        raise StateError(f"commit of {app_id!r} breaks invariants: {problems}")
    trial.apps[app_id] = CommittedApp(
        placements=dict(asg.placements),
        routes=routes,
        priorities=dict(asg.priorities),
    )
    state.pe_clusters = trial.pe_clusters
    state.link_slots = trial.link_slots
    state.apps = trial.apps
    return state


def remove(app_id: str, state: SystemState) -> SystemState:
    """Release all clusters, routes and priority levels of an application."""
    record = state.apps.get(app_id)
    if record is None:
        raise StateError(f"app {app_id!r} is not committed")
    for coord in set(record.placements.values()):
        remaining = [bc for bc in state.pe_clusters.get(coord, []) if bc.app_id != app_id]
        if remaining:
            state.pe_clusters[coord] = remaining
        else:
            state.pe_clusters.pop(coord, None)
    for route, sl in record.routes.values():
        state._sub_slots(route, sl)
    del state.apps[app_id]
    return state


def availability_feasible(cg: ConstraintGraph, state: SystemState) -> bool:
    """The resource-availability-only admission test: every task cluster can
    see an available PE of its type. Neglects loads, task counts, hops and
    slots, so it never rejects anything the full constraint set accepts."""
    for tc in cg.task_clusters:
        if not any(
            check_c3(coord, tc, state) for coord in state.arch.coords
        ):
            return False
    return True


@dataclass(frozen=True)
class AttemptRecord:
    op_index: int
    outcome: str  # "admitted" | "exhausted" | "timeout"
    wall_us: int
    nodes: int


@dataclass(frozen=True)
class AdmitReport:
    success: bool
    op_index: int | None
    op: OperatingPoint | None
    assignment: Assignment | None
    attempts: tuple[AttemptRecord, ...]

    @property
    def any_timeout(self) -> bool:
        return any(a.outcome == "timeout" for a in self.attempts)


def admit(
    ops: list[OperatingPoint],
    state: SystemState,
    mode: IsolationMode,
    timeout_s: float | None = None,
    app_id: str = "app",
) -> AdmitReport:
    """First-fit admission over operating points sorted by ascending energy.

    Returns the first operating point whose constraint graph the solver can
    map, together with its assignment; the state is left untouched (commit
    separately). One structured log record is emitted per attempt.
    """
    for op in ops:
        if not op.objectives:
            raise ValueError("operating point carries no objectives (energy required)")
    order = sorted(range(len(ops)), key=lambda i: (ops[i].objectives[0], i))
    attempts: list[AttemptRecord] = []
    for idx in order:
        result = backtrack(ops[idx].cg, state, mode, timeout_s)
        if result.assignment is not None:
            outcome = "admitted"
        elif result.timed_out:
            outcome = "timeout"
        else:
            outcome = "exhausted"
        attempts.append(
            AttemptRecord(
                op_index=idx, outcome=outcome, wall_us=result.wall_us, nodes=result.nodes
            )
        )
        logger.info(
            "admit app=%s op=%d outcome=%s wall_us=%d", app_id, idx, outcome, result.wall_us
        )
        if result.assignment is not None:
            return AdmitReport(
                success=True,
                op_index=idx,
                op=ops[idx],
                assignment=result.assignment,
                attempts=tuple(attempts),
            )
    return AdmitReport(
        success=False, op_index=None, op=None, assignment=None, attempts=tuple(attempts)
    )
