"""Constraint graphs and the binary operating-point codec.

A constraint graph compacts one analyzed mapping into the information the
run-time manager needs: task clusters (tasks co-bound to one PE, with type,
load, task-count cap and priorities) and message clusters (messages sharing
one route, with accumulated slot count and a hop budget). It stands for the
whole class of symmetric mappings with the same analyzed bounds.

Binary layout (little-endian throughout, see docs/formats.md):

  task-cluster record   id:u8  n_tasks:u8  load:Q1.15(u16)  k_max:u8
                        type:u8  then n_tasks priority bytes
  message-cluster record id:u8  hop:u8  sl:u16  src:u8  dst:u8
  edge record           src:u8  dst:u8  kind:u8 (0 task->msg, 1 msg->task)
                        reserved:u8
  objective             IEEE-754 single

An operating point serializes to its records followed by its objectives and
nothing else, so the emitted byte count equals the size formula
|T_C|*size_tc + |C|*6 + |E_C|*4 + n_obj*4 exactly (size_tc = 6 + n_tasks).
Record counts therefore travel in the container's point frame, not in the
payload.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

from . import analysis, dse
from .model import Architecture, Coord, SchedulingParams, TaskGraph, hop_count

MAGIC = b"OPC1"

# Nominal per-record budgets of the size formula.
SIZE_TC_NOMINAL = 10
SIZE_MC = 6
SIZE_EDGE = 4
SIZE_OBJ = 4

_Q15_ONE = 1 << 15


class SerializeError(ValueError):
    """A value does not fit its fixed-width field."""


class CodecError(ValueError):
    """Malformed binary operating-point data."""


class TruncatedError(CodecError):
    pass


class UnknownIdError(CodecError):
    pass


def quantize_load(load: float) -> int:
    """Q1.15 quantization, rounded up so the stored load stays conservative."""
    if load < 0:
        raise SerializeError(f"load {load} is negative")
    q = math.ceil(load * _Q15_ONE - 1e-7)
    if q > 0xFFFF:
        raise SerializeError(f"load {load} exceeds the Q1.15 range")
    return max(q, 0)


def dequantize_load(q: int) -> float:
    return q / _Q15_ONE


@dataclass(frozen=True)
class TaskCluster:
    id: int
    tasks: tuple[str, ...]
    rtype: str
    load: float
    k_max: int
    prios: tuple[int, ...]

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)


@dataclass(frozen=True)
class MessageCluster:
    id: int
    sl: int
    hop: int
    src: int  # sending task-cluster id
    dst: int  # receiving task-cluster id


@dataclass(frozen=True)
class CgEdge:
    kind: int  # 0: task cluster -> message cluster, 1: message cluster -> task cluster
    src: int
    dst: int


@dataclass(frozen=True)
class ConstraintGraph:
    task_clusters: tuple[TaskCluster, ...]
    message_clusters: tuple[MessageCluster, ...]
    edges: tuple[CgEdge, ...]

    def validate(self, sl_max: int | None = None) -> list[str]:
        """Invariant violations, empty when sound."""
        problems: list[str] = []
        tc_ids = {tc.id for tc in self.task_clusters}
        if len(tc_ids) != len(self.task_clusters):
            problems.append("duplicate task-cluster ids")
        mc_ids = {mc.id for mc in self.message_clusters}
        if len(mc_ids) != len(self.message_clusters):
            problems.append("duplicate message-cluster ids")
        for tc in self.task_clusters:
            if len(tc.prios) != len(tc.tasks):
                problems.append(f"task cluster {tc.id}: priority/task count mismatch")
            if len(set(tc.prios)) != len(tc.prios):
                problems.append(f"task cluster {tc.id}: priorities not unique")
            if tc.k_max < len(tc.tasks):
                problems.append(f"task cluster {tc.id}: k_max below member count")
            if tc.load < 0 or tc.load > 1.0:
                problems.append(f"task cluster {tc.id}: load {tc.load} outside [0, 1]")
        for mc in self.message_clusters:
            if mc.sl < 1:
                problems.append(f"message cluster {mc.id}: sl must be >= 1")
            if sl_max is not None and mc.sl > sl_max:
                problems.append(f"message cluster {mc.id}: sl {mc.sl} exceeds {sl_max}")
            if mc.hop < 2:
                problems.append(f"message cluster {mc.id}: hop budget below 2")
            if mc.src not in tc_ids or mc.dst not in tc_ids:
                problems.append(f"message cluster {mc.id}: unknown endpoint cluster")
        inbound = {mc.id: 0 for mc in self.message_clusters}
        outbound = {mc.id: 0 for mc in self.message_clusters}
        for e in self.edges:
            if e.kind == 0:
                if e.src not in tc_ids or e.dst not in mc_ids:
                    problems.append(f"edge {e.src}->{e.dst}: unknown id")
                else:
                    inbound[e.dst] += 1
            elif e.kind == 1:
                if e.src not in mc_ids or e.dst not in tc_ids:
                    problems.append(f"edge {e.src}->{e.dst}: unknown id")
                else:
                    outbound[e.src] += 1
            else:
                problems.append(f"edge {e.src}->{e.dst}: bad kind {e.kind}")
        for mc in self.message_clusters:
            if inbound.get(mc.id) != 1 or outbound.get(mc.id) != 1:
                problems.append(
                    f"message cluster {mc.id}: needs exactly one sender and one receiver edge"
                )
        return problems


@dataclass(frozen=True)
class OperatingPoint:
    """A constraint graph plus its flattened objective vector.

    Objective order: energy, routed message count, average hop, minimum hop,
    then allocated PEs per resource type (sorted type names)."""

    cg: ConstraintGraph
    objectives: tuple[float, ...]


def cluster_load(
    members,
    params: SchedulingParams,
    g: TaskGraph,
    m: analysis.Mapping,
    arch: Architecture,
) -> float:
    """Load a set of co-bound tasks induces on their PE."""
    total = 0.0
    for tid in members:
        coord = m.bind[tid]
        wcet = g.tasks[tid].wcet[arch.pes[coord].rtype]
        total += analysis.task_load(wcet, params, g.period)
    return total


def extract(
    g: TaskGraph,
    m: analysis.Mapping,
    params: SchedulingParams,
    arch: Architecture,
) -> ConstraintGraph:
    """Compact a mapping: one task cluster per occupied PE, one message
    cluster per PE pair exchanging non-local messages.

    Cluster ids and ordering depend only on task ids and relative placement,
    so translating the whole mapping across the mesh yields an identical
    graph.
    """
    by_pe: dict[Coord, list[str]] = {}
    for tid in g.task_ids:
        by_pe.setdefault(m.bind[tid], []).append(tid)

    # Order clusters by their smallest member task id: stable under
    # symmetric relocation of the binding.
    pe_order = sorted(by_pe, key=lambda c: min(by_pe[c]))
    tc_of_pe: dict[Coord, int] = {c: i for i, c in enumerate(pe_order)}
    task_clusters = []
    for c in pe_order:
        members = sorted(by_pe[c], key=lambda t: m.prio[t])
        task_clusters.append(
            TaskCluster(
                id=tc_of_pe[c],
                tasks=tuple(members),
                rtype=arch.pes[c].rtype,
                load=cluster_load(members, params, g, m, arch),
                k_max=len(members) + params.k_extra,
                prios=tuple(m.prio[t] for t in members),
            )
        )

    grouped: dict[tuple[Coord, Coord], int] = {}
    for mid in g.message_ids:
        src = m.bind[g.source_of(mid)]
        dst = m.bind[g.dest_of(mid)]
        if src == dst:
            continue
        grouped[(src, dst)] = grouped.get((src, dst), 0) + m.sl[mid]
    message_clusters = []
    edges = []
    pairs = sorted(grouped, key=lambda p: (tc_of_pe[p[0]], tc_of_pe[p[1]]))
    for i, (src, dst) in enumerate(pairs):
        mc = MessageCluster(
            id=i,
            sl=grouped[(src, dst)],
            hop=hop_count(src, dst),
            src=tc_of_pe[src],
            dst=tc_of_pe[dst],
        )
        message_clusters.append(mc)
        edges.append(CgEdge(kind=0, src=mc.src, dst=mc.id))
        edges.append(CgEdge(kind=1, src=mc.id, dst=mc.dst))

    return ConstraintGraph(
        task_clusters=tuple(task_clusters),
        message_clusters=tuple(message_clusters),
        edges=tuple(edges),
    )


def operating_point(
    cg: ConstraintGraph, objectives: dse.ObjectiveVector
) -> OperatingPoint:
    return OperatingPoint(cg=cg, objectives=objectives.flatten())


# ---------------------------------------------------------------------------
# Codec


def _u8(value: int, what: str) -> int:
    if not 0 <= value <= 0xFF:
        raise SerializeError(f"{what} {value} does not fit in one byte")
    return value


def _u16(value: int, what: str) -> int:
    if not 0 <= value <= 0xFFFF:
        raise SerializeError(f"{what} {value} does not fit in two bytes")
    return value


def serialize_op(op: OperatingPoint, types: tuple[str, ...]) -> bytes:
    """Serialize one operating point to its exact record bytes.

    types is the architecture's sorted resource-type list; the task-cluster
    record stores an index into it.
    """
    out = bytearray()
    for tc in op.cg.task_clusters:
        try:
            type_idx = types.index(tc.rtype)
        except ValueError:
            raise SerializeError(f"task cluster {tc.id}: unknown type {tc.rtype!r}")
        out += struct.pack(
            "<BBHBB",
            _u8(tc.id, "task-cluster id"),
            _u8(tc.n_tasks, "task count"),
            quantize_load(tc.load),
            _u8(tc.k_max, "k_max"),
            _u8(type_idx, "type index"),
        )
        for p in tc.prios:
            out.append(_u8(p, "priority"))
    for mc in op.cg.message_clusters:
        out += struct.pack(
            "<BBHBB",
            _u8(mc.id, "message-cluster id"),
            _u8(mc.hop, "hop budget"),
            _u16(mc.sl, "slot count"),
            _u8(mc.src, "source cluster"),
            _u8(mc.dst, "target cluster"),
        )
    for e in op.cg.edges:
        out += struct.pack(
            "<BBBB",
            _u8(e.src, "edge source"),
            _u8(e.dst, "edge target"),
            _u8(e.kind, "edge kind"),
            0,
        )
    for value in op.objectives:
        out += struct.pack("<f", value)
    return bytes(out)


def deserialize_op(
    data: bytes,
    n_obj: int,
    counts: tuple[int, int, int],
    types: tuple[str, ...],
) -> OperatingPoint:
    """Inverse of serialize_op; counts is (task clusters, message clusters,
    edges) from the container's point frame.

    Task names are not part of the wire format; members are reconstructed as
    positional placeholders.
    """
    n_tc, n_mc, n_edges = counts
    offset = 0

    def take(n: int, what: str) -> bytes:
        nonlocal offset
        if offset + n > len(data):
            raise TruncatedError(
                f"truncated at byte {len(data)}: {what} needs {offset + n}"
            )
        piece = data[offset : offset + n]
        offset += n
        return piece

    task_clusters = []
    for _ in range(n_tc):
        tc_id, n_tasks, load_q, k_max, type_idx = struct.unpack(
            "<BBHBB", take(6, "task-cluster record")
        )
        prios = tuple(take(n_tasks, "priorities"))
        if type_idx >= len(types):
            raise UnknownIdError(f"task cluster {tc_id}: type index {type_idx} unknown")
        task_clusters.append(
            TaskCluster(
                id=tc_id,
                tasks=tuple(f"{tc_id}.{i}" for i in range(n_tasks)),
                rtype=types[type_idx],
                load=dequantize_load(load_q),
                k_max=k_max,
                prios=prios,
            )
        )
    tc_ids = {tc.id for tc in task_clusters}
    message_clusters = []
    for _ in range(n_mc):
        mc_id, hop, sl, src, dst = struct.unpack(
            "<BBHBB", take(6, "message-cluster record")
        )
        if src not in tc_ids or dst not in tc_ids:
            raise UnknownIdError(
                f"message cluster {mc_id}: endpoint {src if src not in tc_ids else dst} unknown"
            )
        message_clusters.append(
            MessageCluster(id=mc_id, sl=sl, hop=hop, src=src, dst=dst)
        )
    mc_ids = {mc.id for mc in message_clusters}
    edges = []
    for _ in range(n_edges):
        src, dst, kind, _reserved = struct.unpack("<BBBB", take(4, "edge record"))
        if kind == 0:
            known = src in tc_ids and dst in mc_ids
        else:
            known = src in mc_ids and dst in tc_ids
        if not known:
            raise UnknownIdError(f"edge {src}->{dst}: references an unknown cluster id")
        edges.append(CgEdge(kind=kind, src=src, dst=dst))
    objectives = tuple(
        struct.unpack("<f", take(4, "objective"))[0] for _ in range(n_obj)
    )
    if offset != len(data):
        raise CodecError(f"{len(data) - offset} trailing bytes after point")
    return OperatingPoint(
        cg=ConstraintGraph(
            task_clusters=tuple(task_clusters),
            message_clusters=tuple(message_clusters),
            edges=tuple(edges),
        ),
        objectives=objectives,
    )


def serialized_size(cg: ConstraintGraph, n_obj: int) -> int:
    """Exact byte count serialize_op will emit."""
    tc_bytes = sum(6 + tc.n_tasks for tc in cg.task_clusters)
    return (
        tc_bytes
        + SIZE_MC * len(cg.message_clusters)
        + SIZE_EDGE * len(cg.edges)
        + SIZE_OBJ * n_obj
    )


def formula_size(
    n_tc: int, n_mc: int, n_edges: int, n_obj: int, size_tc: int = SIZE_TC_NOMINAL
) -> int:
    """Size estimate from the per-record budget formula (task-cluster records
    costed at their nominal average size)."""
    return n_tc * size_tc + n_mc * SIZE_MC + n_edges * SIZE_EDGE + n_obj * SIZE_OBJ


def write_container(
    ops: list[OperatingPoint], n_obj: int, types: tuple[str, ...]
) -> bytes:
    """Pack operating points into the container format: a 4-byte magic,
    objective count, point count, then one framed point per entry."""
    if len(ops) > 0xFFFF:
        raise SerializeError(f"too many points for one container: {len(ops)}")
    out = bytearray(MAGIC)
    out += struct.pack("<BH", _u8(n_obj, "objective count"), len(ops))
    for op in ops:
        if len(op.objectives) != n_obj:
            raise SerializeError(
                f"point has {len(op.objectives)} objectives, container declares {n_obj}"
            )
        payload = serialize_op(op, types)
        out += struct.pack(
            "<IHHH",
            len(payload),
            _u16(len(op.cg.task_clusters), "task-cluster count"),
            _u16(len(op.cg.message_clusters), "message-cluster count"),
            _u16(len(op.cg.edges), "edge count"),
        )
        out += payload
    return bytes(out)


def read_container(
    data: bytes, types: tuple[str, ...]
) -> tuple[int, list[OperatingPoint]]:
    if data[:4] != MAGIC:
        raise CodecError("bad container magic")
    if len(data) < 7:
        raise TruncatedError("container header incomplete")
    n_obj, count = struct.unpack("<BH", data[4:7])
    offset = 7
    ops = []
    for i in range(count):
        if offset + 10 > len(data):
            raise TruncatedError(f"point {i}: frame header incomplete")
        length, n_tc, n_mc, n_edges = struct.unpack("<IHHH", data[offset : offset + 10])
        offset += 10
        if offset + length > len(data):
            raise TruncatedError(f"point {i}: payload incomplete")
        ops.append(
            deserialize_op(
                data[offset : offset + length], n_obj, (n_tc, n_mc, n_edges), types
            )
        )
        offset += length
    if offset != len(data):
        raise CodecError(f"{len(data) - offset} trailing bytes after container")
    return n_obj, ops


def archive_to_ops(
    archive: dse.ParetoArchive,
    g: TaskGraph,
    params: SchedulingParams,
    arch: Architecture,
) -> list[OperatingPoint]:
    """Turn a DSE archive into serializable operating points."""
    return [
        operating_point(extract(g, entry.mapping, params, arch), entry.objectives)
        for entry in archive.entries
    ]
