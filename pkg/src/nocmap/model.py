"""Domain model: periodic task graphs and mesh NoC architectures.

Task graphs are acyclic bipartite digraphs over tasks and messages with a
common period and deadline (in microseconds). Architectures are 2D meshes of
typed processing elements (PEs), one router per PE, with a uniform link
capacity and a per-link TDM slot budget.

All model objects are immutable after construction and safe to share across
threads. Documents use JSON; see docs/formats.md for the schemas.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable

Coord = tuple[int, int]
# A node is a PE or a router at a mesh coordinate; a link is a directed pair
# of nodes. Opposite directions are distinct links (full duplex), so slot
# budgets apply per direction.
Node = tuple[str, int, int]  # ("pe"|"rtr", x, y)
Link = tuple[Node, Node]


class ParseError(ValueError):
    """Raised when a document is not well-formed (includes a location)."""


class InvariantError(ValueError):
    """Raised when a validly parsed document violates a model invariant."""


def pe_node(c: Coord) -> Node:
    return ("pe", c[0], c[1])


def router_node(c: Coord) -> Node:
    return ("rtr", c[0], c[1])


def hop_count(a: Coord, b: Coord) -> int:
    """Number of routers traversed between two tiles under xy-routing.

    Local communication (same tile) takes no route and counts 0 hops;
    otherwise every route enters one router per tile on the Manhattan path,
    giving |dx| + |dy| + 1.
    """
    if a == b:
        return 0
    return abs(a[0] - b[0]) + abs(a[1] - b[1]) + 1


def xy_route(a: Coord, b: Coord) -> tuple[Link, ...]:
    """Deterministic x-then-y route from tile a to tile b.

    The route includes the PE-to-router injection link at a and the
    router-to-PE ejection link at b. Same-tile routes are empty (local
    memory exchange).
    """
    if a == b:
        return ()
    links: list[Link] = [(pe_node(a), router_node(a))]
    x, y = a
    while x != b[0]:
        nx = x + (1 if b[0] > x else -1)
        links.append((router_node((x, y)), router_node((nx, y))))
        x = nx
    while y != b[1]:
        ny = y + (1 if b[1] > y else -1)
        links.append((router_node((x, y)), router_node((x, ny))))
        y = ny
    links.append((router_node(b), pe_node(b)))
    return tuple(links)


def route_hops(route: Iterable[Link]) -> int:
    """Number of distinct routers on a route (0 for an empty route)."""
    routers = set()
    for src, dst in route:
        if src[0] == "rtr":
            routers.add(src)
        if dst[0] == "rtr":
            routers.add(dst)
    return len(routers)


@dataclass(frozen=True)
class Task:
    """A sequential code segment with per-resource-type WCETs (µs).

    A missing entry means the task cannot run on that resource type.
    """

    id: str
    wcet: dict[str, float]


@dataclass(frozen=True)
class Message:
    """Data exchanged between a pair of tasks; size is the payload in bits."""

    id: str
    size: float

    def bandwidth(self, period: float) -> float:
        """Minimum bandwidth requirement in bits/µs."""
        return self.size / period


@dataclass
class TaskGraph:
    """Acyclic bipartite graph of tasks and messages, periodic with deadline.

    Edges connect tasks to messages and messages to tasks; every message has
    exactly one producer task and one consumer task. The deadline never
    exceeds the period. Immutable after construction.
    """

    tasks: dict[str, Task]
    messages: dict[str, Message]
    edges: tuple[tuple[str, str], ...]
    period: float
    deadline: float

    _msg_src: dict[str, str] = field(init=False, repr=False)
    _msg_dst: dict[str, str] = field(init=False, repr=False)
    _topo: tuple[tuple[str, str], ...] = field(init=False, repr=False)
    _preds: dict[tuple[str, str], tuple[tuple[str, str], ...]] = field(init=False, repr=False)
    _task_desc: dict[str, frozenset[str]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.period <= 0:
            raise InvariantError("period: must be > 0")
        if self.deadline <= 0:
            raise InvariantError("deadline: must be > 0")
        if self.deadline > self.period:
            raise InvariantError(
                f"deadline: {self.deadline} exceeds period {self.period}"
            )
        for t in self.tasks.values():
            if not t.wcet:
                raise InvariantError(f"task {t.id}: wcet table is empty")
            for rtype, w in t.wcet.items():
                if not (w > 0):
                    raise InvariantError(
                        f"task {t.id}: wcet for type {rtype!r} must be > 0"
                    )
        for m in self.messages.values():
            if not (m.size > 0):
                raise InvariantError(f"message {m.id}: size must be > 0")
        overlap = self.tasks.keys() & self.messages.keys()
        if overlap:
            raise InvariantError(f"ids shared by tasks and messages: {sorted(overlap)}")

        producers: dict[str, list[str]] = {m: [] for m in self.messages}
        consumers: dict[str, list[str]] = {m: [] for m in self.messages}
        for src, dst in self.edges:
            if src in self.tasks and dst in self.messages:
                producers[dst].append(src)
            elif src in self.messages and dst in self.tasks:
                consumers[src].append(dst)
            elif src in self.tasks and dst in self.tasks:
                raise InvariantError(f"edge {src}->{dst}: connects two tasks")
            elif src in self.messages and dst in self.messages:
                raise InvariantError(f"edge {src}->{dst}: connects two messages")
            else:
                raise InvariantError(f"edge {src}->{dst}: unknown endpoint")
        for mid in self.messages:
            if len(producers[mid]) != 1:
                raise InvariantError(
                    f"message {mid}: has {len(producers[mid])} producers, expected 1"
                )
            if len(consumers[mid]) != 1:
                raise InvariantError(
                    f"message {mid}: has {len(consumers[mid])} consumers, expected 1"
                )
        self._msg_src = {m: producers[m][0] for m in self.messages}
        self._msg_dst = {m: consumers[m][0] for m in self.messages}
        self._topo = self._toposort()
        preds: dict[tuple[str, str], list[tuple[str, str]]] = {
            v: [] for v in self._topo
        }
        for src, dst in self.edges:
            preds[self._vertex(dst)].append(self._vertex(src))
        self._preds = {v: tuple(ps) for v, ps in preds.items()}
        self._task_desc = self._descendants()

    def _vertex(self, ident: str) -> tuple[str, str]:
        return ("t" if ident in self.tasks else "m", ident)

    def _toposort(self) -> tuple[tuple[str, str], ...]:
        vertices = [("t", t) for t in sorted(self.tasks)] + [
            ("m", m) for m in sorted(self.messages)
        ]
        indeg = {v: 0 for v in vertices}
        succ: dict[tuple[str, str], list[tuple[str, str]]] = {v: [] for v in vertices}
        for src, dst in self.edges:
            sv, dv = self._vertex(src), self._vertex(dst)
            succ[sv].append(dv)
            indeg[dv] += 1
        ready = sorted(v for v in vertices if indeg[v] == 0)
        order: list[tuple[str, str]] = []
        while ready:
            v = ready.pop(0)
            order.append(v)
            for w in sorted(succ[v]):
                indeg[w] -= 1
                if indeg[w] == 0:
                    ready.append(w)
            ready.sort()
        if len(order) != len(vertices):
            cyclic = sorted(v for v in vertices if indeg[v] > 0)
            raise InvariantError(f"graph contains a cycle through {cyclic[0][1]}")
        return tuple(order)

    def _descendants(self) -> dict[str, frozenset[str]]:
        desc: dict[str, set[str]] = {t: set() for t in self.tasks}
        for kind, ident in reversed(self._topo):
            if kind != "t":
                continue
            out: set[str] = set()
            for mid in self.messages:
                if self._msg_src[mid] == ident:
                    succ_task = self._msg_dst[mid]
                    out.add(succ_task)
                    out |= desc[succ_task]
            desc[ident] = out
        return {t: frozenset(s) for t, s in desc.items()}

    # Convenience accessors used throughout analysis and exploration.

    @property
    def task_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.tasks))

    @property
    def message_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.messages))

    @property
    def topo_vertices(self) -> tuple[tuple[str, str], ...]:
        return self._topo

    def vertex_preds(self, vertex: tuple[str, str]) -> tuple[tuple[str, str], ...]:
        return self._preds[vertex]

    def source_of(self, msg_id: str) -> str:
        return self._msg_src[msg_id]

    def dest_of(self, msg_id: str) -> str:
        return self._msg_dst[msg_id]

    def is_task_predecessor(self, a: str, b: str) -> bool:
        """True when task a precedes task b via some task/message path."""
        return b in self._task_desc[a]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TaskGraph):
            return NotImplemented
        return (
            self.tasks == other.tasks
            and self.messages == other.messages
            and sorted(self.edges) == sorted(other.edges)
            and self.period == other.period
            and self.deadline == other.deadline
        )


@dataclass(frozen=True)
class PE:
    """One compute tile: coordinate, resource type, max power draw (W)."""

    coord: Coord
    rtype: str
    power: float
    available: bool = True


@dataclass(frozen=True)
class EnergyModel:
    """Per-bit NoC energy coefficients in nJ (router and link)."""

    e_sbit: float
    e_lbit: float


@dataclass(frozen=True)
class SchedulingParams:
    """Composable PE scheduler parameters.

    snt is the slot length, sios the OS overhead per slot (both µs), and
    k_extra the number of additional tasks a PE may later accept beyond the
    cluster analyzed at design time.
    """

    snt: float
    sios: float
    k_extra: int

    def __post_init__(self) -> None:
        if not (self.snt > 0):
            raise InvariantError("snt: must be > 0")
        if self.sios < 0:
            raise InvariantError("sios: must be >= 0")
        if self.k_extra < 0:
            raise InvariantError("k_extra: must be >= 0")


@dataclass
class Architecture:
    """2D-mesh NoC of typed PEs with uniform link capacity and slot budget.

    link_capacity is in bits/s; sl_max is the TDM slot budget per link and
    per direction. router_cycle (µs) and flit_bits parameterize the network
    term of the latency bound.
    """

    width: int
    height: int
    pes: dict[Coord, PE]
    link_capacity: float
    sl_max: int
    energy: EnergyModel
    router_cycle: float = 1.0
    flit_bits: int = 32

    def __post_init__(self) -> None:
        if self.width < 1:
            raise InvariantError(f"width: must be >= 1, got {self.width}")
        if self.height < 1:
            raise InvariantError(f"height: must be >= 1, got {self.height}")
        if self.sl_max < 1:
            raise InvariantError(f"sl_max: must be >= 1, got {self.sl_max}")
        if not (self.link_capacity > 0):
            raise InvariantError("link_capacity: must be > 0")
        if self.energy.e_sbit < 0 or self.energy.e_lbit < 0:
            raise InvariantError("energy: coefficients must be >= 0")
        expected = {(x, y) for x in range(self.width) for y in range(self.height)}
        if set(self.pes) != expected:
            missing = sorted(expected - set(self.pes))
            extra = sorted(set(self.pes) - expected)
            raise InvariantError(f"pes: missing {missing}, out of bounds {extra}")
        for c, pe in self.pes.items():
            if pe.coord != c:
                raise InvariantError(f"pes: entry at {c} carries coord {pe.coord}")
            if not (pe.power > 0):
                raise InvariantError(f"pe {c}: power must be > 0")

    @property
    def resource_types(self) -> tuple[str, ...]:
        return tuple(sorted({pe.rtype for pe in self.pes.values()}))

    @property
    def coords(self) -> tuple[Coord, ...]:
        """All tile coordinates in row-major order."""
        return tuple((x, y) for y in range(self.height) for x in range(self.width))

    def contains(self, c: Coord) -> bool:
        return 0 <= c[0] < self.width and 0 <= c[1] < self.height

    def capacity_bits_per_us(self) -> float:
        return self.link_capacity / 1e6


# ---------------------------------------------------------------------------
# Document loading / dumping


def _loads(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc


def _require(doc: dict, key: str, context: str) -> Any:
    if key not in doc:
        raise ParseError(f"{context}: missing field {key!r}")
    return doc[key]


def load_architecture(text: str) -> Architecture:
    """Parse and validate an architecture document (JSON).

    Raises ParseError with a location for malformed input and InvariantError
    naming the offending field for semantic violations.
    """
    doc = _loads(text)
    if not isinstance(doc, dict):
        raise ParseError("architecture: top-level value must be an object")
    energy_doc = _require(doc, "energy", "architecture")
    energy = EnergyModel(
        e_sbit=float(_require(energy_doc, "e_sbit", "energy")),
        e_lbit=float(_require(energy_doc, "e_lbit", "energy")),
    )
    pes: dict[Coord, PE] = {}
    for i, entry in enumerate(_require(doc, "pes", "architecture")):
        coord = (
            int(_require(entry, "x", f"pes[{i}]")),
            int(_require(entry, "y", f"pes[{i}]")),
        )
        if coord in pes:
            raise InvariantError(f"pes: duplicate entry for {coord}")
        pes[coord] = PE(
            coord=coord,
            rtype=str(_require(entry, "type", f"pes[{i}]")),
            power=float(_require(entry, "power", f"pes[{i}]")),
            available=bool(entry.get("available", True)),
        )
    return Architecture(
        width=int(_require(doc, "width", "architecture")),
        height=int(_require(doc, "height", "architecture")),
        pes=pes,
        link_capacity=float(_require(doc, "link_capacity", "architecture")),
        sl_max=int(_require(doc, "sl_max", "architecture")),
        energy=energy,
        router_cycle=float(doc.get("router_cycle", 1.0)),
        flit_bits=int(doc.get("flit_bits", 32)),
    )


def dump_architecture(arch: Architecture) -> str:
    doc = {
        "width": arch.width,
        "height": arch.height,
        "link_capacity": arch.link_capacity,
        "sl_max": arch.sl_max,
        "energy": {"e_sbit": arch.energy.e_sbit, "e_lbit": arch.energy.e_lbit},
        "router_cycle": arch.router_cycle,
        "flit_bits": arch.flit_bits,
        "pes": [
            {
                "x": pe.coord[0],
                "y": pe.coord[1],
                "type": pe.rtype,
                "power": pe.power,
                "available": pe.available,
            }
            for pe in (arch.pes[c] for c in arch.coords)
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def load_taskgraph(text: str) -> TaskGraph:
    """Parse and validate a task-graph document (JSON)."""
    doc = _loads(text)
    if not isinstance(doc, dict):
        raise ParseError("taskgraph: top-level value must be an object")
    tasks: dict[str, Task] = {}
    for i, entry in enumerate(_require(doc, "tasks", "taskgraph")):
        tid = str(_require(entry, "id", f"tasks[{i}]"))
        if tid in tasks:
            raise InvariantError(f"tasks: duplicate id {tid!r}")
        wcet_doc = _require(entry, "wcet", f"tasks[{i}]")
        tasks[tid] = Task(id=tid, wcet={str(k): float(v) for k, v in wcet_doc.items()})
    messages: dict[str, Message] = {}
    for i, entry in enumerate(doc.get("messages", [])):
        mid = str(_require(entry, "id", f"messages[{i}]"))
        if mid in messages:
            raise InvariantError(f"messages: duplicate id {mid!r}")
        messages[mid] = Message(id=mid, size=float(_require(entry, "size", f"messages[{i}]")))
    edges = tuple(
        (str(e[0]), str(e[1])) for e in doc.get("edges", [])
    )
    return TaskGraph(
        tasks=tasks,
        messages=messages,
        edges=edges,
        period=float(_require(doc, "period", "taskgraph")),
        deadline=float(_require(doc, "deadline", "taskgraph")),
    )


def dump_taskgraph(g: TaskGraph) -> str:
    doc = {
        "period": g.period,
        "deadline": g.deadline,
        "tasks": [
            {"id": t.id, "wcet": dict(sorted(t.wcet.items()))}
            for t in (g.tasks[i] for i in g.task_ids)
        ],
        "messages": [
            {"id": m.id, "size": m.size} for m in (g.messages[i] for i in g.message_ids)
        ],
        "edges": [list(e) for e in sorted(g.edges)],
    }
    return json.dumps(doc, indent=2, sort_keys=True)
