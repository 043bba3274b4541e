"""Multi-objective evolutionary exploration of application mappings.

A genome fixes, per task, a PE choice (restricted to types the task has a
WCET for) and a priority gene, and, per message, a slot count within its
admissible interval. Routing is never explored: xy-routing makes it implicit
in the endpoint bindings.

Objectives (five groups): minimize energy, minimize routed message count,
maximize average and minimum hop distance (longer analyzed routes leave the
run-time solver more freedom), and minimize allocated PEs per resource type.

The search is a plain elitist EA with binary tournaments, uniform crossover
and per-gene mutation. Constraint handling is feasibility-first: feasible
candidates beat infeasible ones, fewer violations beat more. Only feasible,
deadline-respecting mappings ever enter the archive. Runs are deterministic
for a fixed seed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from . import analysis
from .model import Architecture, Coord, SchedulingParams, TaskGraph, hop_count, xy_route


@dataclass(frozen=True)
class ObjectiveVector:
    """One point in objective space; alloc_per_type follows the
    architecture's sorted resource-type order."""

    energy: float
    msg_count: int
    avg_hop: float
    min_hop: float
    alloc_per_type: tuple[int, ...]

    def flatten(self) -> tuple[float, ...]:
        return (
            float(self.energy),
            float(self.msg_count),
            float(self.avg_hop),
            float(self.min_hop),
        ) + tuple(float(a) for a in self.alloc_per_type)

    def minimize_key(self) -> tuple[float, ...]:
        """All-minimization view (hop objectives negated)."""
        return (
            float(self.energy),
            float(self.msg_count),
            -float(self.avg_hop),
            -float(self.min_hop),
        ) + tuple(float(a) for a in self.alloc_per_type)


def dominates(a: ObjectiveVector, b: ObjectiveVector) -> bool:
    """Pareto dominance with the hop objectives treated as maximization."""
    ka, kb = a.minimize_key(), b.minimize_key()
    if len(ka) != len(kb):
        raise ValueError(f"objective dimension mismatch: {len(ka)} vs {len(kb)}")
    return all(x <= y for x, y in zip(ka, kb)) and any(x < y for x, y in zip(ka, kb))


@dataclass(frozen=True)
class Genome:
    pe: tuple[int, ...]
    prio: tuple[int, ...]
    sl: tuple[int, ...]


@dataclass(frozen=True)
class EaConfig:
    population: int = 200
    iterations: int = 100
    crossover_rate: float = 0.9
    mutation_rate: float | None = None  # default 1/genome-length

    def __post_init__(self) -> None:
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


_PRIO_GENE_MAX = 255


class GenomeSpace:
    """Gene domains for one application on one architecture."""

    def __init__(self, g: TaskGraph, arch: Architecture, params: SchedulingParams):
        self.g = g
        self.arch = arch
        self.params = params
        self.task_ids = g.task_ids
        self.msg_ids = g.message_ids
        self.candidates: list[tuple[Coord, ...]] = []
        for tid in self.task_ids:
            types = g.tasks[tid].wcet.keys()
            cands = tuple(
                c for c in arch.coords if arch.pes[c].rtype in types and arch.pes[c].available
            )
            self.candidates.append(cands)
        self.sl_bounds: list[tuple[int, int]] = [
            analysis.slots_interval(g.messages[mid], g, arch) for mid in self.msg_ids
        ]
        self.genome_length = 2 * len(self.task_ids) + len(self.msg_ids)

    @property
    def viable(self) -> bool:
        return all(self.candidates) and all(lo <= hi for lo, hi in self.sl_bounds)

    def random_genome(self, rng: random.Random) -> Genome:
        return Genome(
            pe=tuple(rng.randrange(len(c)) for c in self.candidates),
            prio=tuple(rng.randint(0, _PRIO_GENE_MAX) for _ in self.task_ids),
            sl=tuple(rng.randint(lo, hi) for lo, hi in self.sl_bounds),
        )

    def decode(self, genome: Genome) -> analysis.Mapping:
        bind = {
            tid: self.candidates[i][genome.pe[i]]
            for i, tid in enumerate(self.task_ids)
        }
        route = {
            mid: xy_route(bind[self.g.source_of(mid)], bind[self.g.dest_of(mid)])
            for mid in self.msg_ids
        }
        sl = {mid: genome.sl[i] for i, mid in enumerate(self.msg_ids)}
        prio = _rank_priorities(self.task_ids, genome.prio, bind)
        return analysis.Mapping(bind=bind, route=route, prio=prio, sl=sl)

    def mutate(self, genome: Genome, rng: random.Random, rate: float) -> Genome:
        pe = list(genome.pe)
        prio = list(genome.prio)
        sl = list(genome.sl)
        for i, cands in enumerate(self.candidates):
            if rng.random() < rate:
                pe[i] = rng.randrange(len(cands))
        for i in range(len(prio)):
            if rng.random() < rate:
                prio[i] = rng.randint(0, _PRIO_GENE_MAX)
        for i, (lo, hi) in enumerate(self.sl_bounds):
            if rng.random() < rate:
                sl[i] = rng.randint(lo, hi)
        return Genome(pe=tuple(pe), prio=tuple(prio), sl=tuple(sl))

    def crossover(self, a: Genome, b: Genome, rng: random.Random) -> Genome:
        pick = lambda x, y: x if rng.random() < 0.5 else y  # noqa: E731
        return Genome(
            pe=tuple(pick(x, y) for x, y in zip(a.pe, b.pe)),
            prio=tuple(pick(x, y) for x, y in zip(a.prio, b.prio)),
            sl=tuple(pick(x, y) for x, y in zip(a.sl, b.sl)),
        )


def _rank_priorities(
    task_ids: tuple[str, ...], genes: tuple[int, ...], bind: dict[str, Coord]
) -> dict[str, int]:
    """Turn priority genes into per-PE unique ranks (0 = highest), ties
    broken by task id for determinism."""
    by_pe: dict[Coord, list[tuple[int, str]]] = {}
    for i, tid in enumerate(task_ids):
        by_pe.setdefault(bind[tid], []).append((genes[i], tid))
    prio: dict[str, int] = {}
    for members in by_pe.values():
        for rank, (_, tid) in enumerate(sorted(members)):
            prio[tid] = rank
    return prio


def decode(
    genome: Genome, g: TaskGraph, arch: Architecture, params: SchedulingParams
) -> analysis.Mapping:
    """Decode a genome into a full mapping (binding, xy-routes, unique
    per-PE priorities, slot counts)."""
    return GenomeSpace(g, arch, params).decode(genome)


def repair_priorities(g: TaskGraph, m: analysis.Mapping) -> analysis.Mapping:
    """Swap priorities until no task outranks one of its predecessors on the
    same PE. Independent tasks keep their levels; the repair is idempotent."""
    prio = dict(m.prio)
    by_pe: dict[Coord, list[str]] = {}
    for tid, coord in m.bind.items():
        by_pe.setdefault(coord, []).append(tid)
    for members in by_pe.values():
        changed = True
        while changed:
            changed = False
            seq = sorted(members, key=lambda t: prio[t])
            for i in range(len(seq)):
                for j in range(i + 1, len(seq)):
                    # seq[j] ranks below seq[i]; swap if it must run first
                    if g.is_task_predecessor(seq[j], seq[i]):
                        prio[seq[i]], prio[seq[j]] = prio[seq[j]], prio[seq[i]]
                        changed = True
                        break
                if changed:
                    break
    return analysis.Mapping(bind=m.bind, route=m.route, prio=prio, sl=m.sl)


def evaluate(
    g: TaskGraph, m: analysis.Mapping, params: SchedulingParams, arch: Architecture
) -> tuple[analysis.FeasibilityReport, ObjectiveVector]:
    """Feasibility report plus the objective vector of a decoded mapping."""
    report = analysis.is_feasible(g, m, params, arch)
    hops = [
        hop_count(m.bind[g.source_of(mid)], m.bind[g.dest_of(mid)])
        for mid in g.message_ids
    ]
    routed = [h for h in hops if h > 0]
    used_by_type: dict[str, set[Coord]] = {}
    for tid in g.task_ids:
        coord = m.bind[tid]
        used_by_type.setdefault(arch.pes[coord].rtype, set()).add(coord)
    alloc = tuple(len(used_by_type.get(r, ())) for r in arch.resource_types)
    vec = ObjectiveVector(
        energy=analysis.energy(g, m, arch),
        msg_count=len(routed),
        avg_hop=sum(routed) / len(routed) if routed else 0.0,
        min_hop=float(min(routed)) if routed else 0.0,
        alloc_per_type=alloc,
    )
    return report, vec


@dataclass(frozen=True)
class ArchiveEntry:
    mapping: analysis.Mapping
    objectives: ObjectiveVector
    genome: Genome


class ParetoArchive:
    """Mutually non-dominated feasible mappings; duplicates (by objective
    vector) are kept out."""

    def __init__(self) -> None:
        self._entries: list[ArchiveEntry] = []

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    @property
    def entries(self) -> tuple[ArchiveEntry, ...]:
        return tuple(self._entries)

    def add(self, entry: ArchiveEntry) -> bool:
        for existing in self._entries:
            if dominates(existing.objectives, entry.objectives):
                return False
            if existing.objectives.flatten() == entry.objectives.flatten():
                return False
        self._entries = [
            e for e in self._entries if not dominates(entry.objectives, e.objectives)
        ]
        self._entries.append(entry)
        return True

    def check_non_dominated(self) -> bool:
        for a in self._entries:
            for b in self._entries:
                if a is not b and dominates(a.objectives, b.objectives):
                    return False
        return True


def explore(
    g: TaskGraph,
    arch: Architecture,
    params: SchedulingParams,
    ea: EaConfig,
    seed: int,
) -> ParetoArchive:
    """Run the EA and return the archive of non-dominated feasible mappings.

    Returns an empty archive when no feasible mapping exists (including the
    degenerate cases of an unbindable task or an over-capacity message).
    """
    archive = ParetoArchive()
    try:
        space = GenomeSpace(g, arch, params)
    except analysis.AnalysisError:
        return archive
    if not space.viable:
        return archive

    rng = random.Random(seed)
    rate = ea.mutation_rate if ea.mutation_rate is not None else 1.0 / space.genome_length

    def assess(genome: Genome):
        mapping = repair_priorities(g, space.decode(genome))
        report, vec = evaluate(g, mapping, params, arch)
        if report.feasible:
            archive.add(ArchiveEntry(mapping=mapping, objectives=vec, genome=genome))
        return mapping, report, vec

    population = [space.random_genome(rng) for _ in range(ea.population)]
    scored = [(genome, *assess(genome)) for genome in population]

    def fitness_key(item) -> tuple:
        _, _, report, _ = item
        return (0 if report.feasible else 1, len(report.violations))

    def tournament() -> Genome:
        a = scored[rng.randrange(len(scored))]
        b = scored[rng.randrange(len(scored))]
        ka, kb = fitness_key(a), fitness_key(b)
        if ka != kb:
            return (a if ka < kb else b)[0]
        if a[2].feasible and b[2].feasible:
            if dominates(a[3], b[3]):
                return a[0]
            if dominates(b[3], a[3]):
                return b[0]
        return (a if rng.random() < 0.5 else b)[0]

    for _ in range(ea.iterations):
        offspring: list[Genome] = []
        while len(offspring) < ea.population:
            p1, p2 = tournament(), tournament()
            child = space.crossover(p1, p2, rng) if rng.random() < ea.crossover_rate else p1
            offspring.append(space.mutate(child, rng, rate))
        offspring_scored = [(genome, *assess(genome)) for genome in offspring]
        combined = scored + offspring_scored
        # Environmental selection: feasibility class, violation count, then
        # how many archive members dominate the candidate.
        archive_keys = [e.objectives for e in archive]
        dom_counts = [
            sum(1 for best in archive_keys if dominates(best, item[3]))
            if item[2].feasible
            else 0
            for item in combined
        ]
        ranked = sorted(
            range(len(combined)),
            key=lambda i: (*fitness_key(combined[i]), dom_counts[i], i),
        )
        scored = [combined[i] for i in ranked[: ea.population]]

    assert archive.check_non_dominated()
    return archive
