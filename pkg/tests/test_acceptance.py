"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines alongside the pytest verdicts.
"""

import random
import struct
import time

import pytest

from conftest import build_arch
from nocmap import bench, cgraph, dse, rtm
from nocmap.model import SchedulingParams, load_architecture
from solver_oracle import (
    brute_force_assignment,
    make_cg,
    make_cluster,
    random_small_instance,
)

TI = rtm.IsolationMode.TEMPORAL
SPI = rtm.IsolationMode.SPATIAL

PARAMS = SchedulingParams(snt=50.0, sios=10.0, k_extra=4)


def report(n, text):
    print(f"\nACCEPTANCE {n} PASS: {text}")


def test_criterion_1_serialization_exactness():
    # 10 task clusters at 10 B each (6 fixed + 4 priority bytes), 8 message
    # clusters at 6 B, 12 edges at 4 B, 7 objectives at 4 B.
    tcs = tuple(
        cgraph.TaskCluster(
            id=i,
            tasks=(f"a{i}", f"b{i}", f"c{i}", f"d{i}"),
            rtype="risc",
            load=0.75,
            k_max=8,
            prios=(0, 1, 2, 3),
        )
        for i in range(10)
    )
    mcs = tuple(
        cgraph.MessageCluster(id=i, sl=2 + i, hop=2 + i % 4, src=i, dst=(i + 1) % 10)
        for i in range(8)
    )
    edges = tuple(cgraph.CgEdge(kind=i % 2, src=i % 8, dst=(i + 3) % 8) for i in range(12))
    op = cgraph.OperatingPoint(
        cg=cgraph.ConstraintGraph(tcs, mcs, edges),
        objectives=(3.0, 8.0, 2.5, 2.0, 4.0, 3.0, 3.0),
    )
    blob = cgraph.write_container([op], 7, ("risc",))

    magic, (n_obj, count) = blob[:4], struct.unpack("<BH", blob[4:7])
    assert magic == b"OPC1" and n_obj == 7 and count == 1
    payload_len, n_tc, n_mc, n_edges = struct.unpack("<IHHH", blob[7:17])
    assert (n_tc, n_mc, n_edges) == (10, 8, 12)
    payload = blob[17:]
    assert len(payload) == payload_len

    size_cg = payload_len - 7 * 4
    assert size_cg == 196
    assert payload_len == 224
    assert cgraph.formula_size(10, 8, 12, 7) == 224
    assert cgraph.serialized_size(op.cg, 7) == 224
    back = cgraph.read_container(blob, ("risc",))[1][0]
    assert cgraph.serialize_op(back, ("risc",)) == payload
    report(1, "worked example packs to size_CG=196 B, size_OP=224 B, bit-counted")


def test_criterion_2_solver_matches_brute_force():
    rng = random.Random(2024)
    t0 = time.monotonic()
    instances = 0
    successes = 0
    while instances < 200:
        cg, state = random_small_instance(rng)
        instances += 1
        result = rtm.backtrack(cg, state, TI, timeout_s=None)
        oracle = brute_force_assignment(cg, state, TI)
        assert (result.assignment is not None) == (
            oracle is not None
        ), f"instance {instances}: solver and enumerator disagree"
        if result.assignment is not None:
            successes += 1
            assert rtm.verify_assignment(cg, result.assignment, state, TI) == []
    elapsed = time.monotonic() - t0
    assert elapsed < 120.0
    report(
        2,
        f"backtrack == brute force on {instances} instances "
        f"({successes} satisfiable), 0 discrepancies, {elapsed:.1f} s",
    )


def witness_instance():
    """Two single-task clusters of one type, one tile of that type with
    k_max headroom: temporal isolation admits, spatial cannot."""
    arch = build_arch(
        width=2, height=1, type_at=lambda c: "risc" if c == (0, 0) else "other"
    )
    state = rtm.SystemState(arch)
    cg = make_cg(
        [
            make_cluster(0, rtype="risc", load=0.3, k_max=2),
            make_cluster(1, rtype="risc", load=0.3, k_max=2),
        ]
    )
    return cg, state


def test_criterion_3_temporal_dominates_spatial():
    attempts = 0
    ti_total = 0
    spi_total = 0
    for seed in range(25):
        rng = random.Random(seed)
        ti_count = 0
        spi_count = 0
        for _ in range(50):
            cg, state = random_small_instance(rng)
            attempts += 1
            ti_ok = rtm.backtrack(cg, state, TI).assignment is not None
            spi_ok = rtm.backtrack(cg, state, SPI).assignment is not None
            assert not (spi_ok and not ti_ok), "spatially mappable but not temporally"
            ti_count += ti_ok
            spi_count += spi_ok
        assert ti_count >= spi_count
        ti_total += ti_count
        spi_total += spi_count

    cg, state = witness_instance()
    assert rtm.backtrack(cg, state, TI).assignment is not None
    assert rtm.backtrack(cg, state, SPI).assignment is None
    assert attempts >= 1000
    report(
        3,
        f"temporal >= spatial per seed over {attempts} paired attempts "
        f"(ti {ti_total}, spi {spi_total}), strict on the witness instance",
    )


def test_criterion_4_optimism_gap():
    # a communication-tight 5x5 platform: slot budget 4, three PE types
    types = ["ppc", "k6_2", "k6_3"]
    powers = {"ppc": 2.5, "k6_2": 1.4, "k6_3": 1.1}
    arch = build_arch(
        width=5,
        height=5,
        sl_max=4,
        type_at=lambda c: types[(c[0] + c[1]) % 3],
        power_at=lambda c: powers[types[(c[0] + c[1]) % 3]],
    )
    params = SchedulingParams(snt=50.0, sios=10.0, k_extra=1)
    spec = bench.BenchmarkSpec(
        n_apps=4,
        types=arch.resource_types,
        tasks_min=8,
        tasks_max=14,
        wcet_frac=(0.04, 0.10),
        connect_prob=0.4,
        seed=11,
    )
    apps = bench.gen_benchmark(spec)
    ea = dse.EaConfig(population=30, iterations=12)
    ops_per_app = [
        o for o in bench.build_operating_points(apps, arch, params, ea, 11) if o
    ]
    assert ops_per_app, "synthetic suite produced no operating points"
    result = bench.exp_utilization(ops_per_app, arch, trials=200, seed=5, timeout_s=0.01)
    summary = bench.util_summary(result)
    assert summary
    for cls, (n, avail, full) in summary.items():
        assert avail >= full, f"class {cls}: availability below full-constraint"
    gap_classes = [cls for cls, (n, avail, full) in summary.items() if avail > full]
    assert gap_classes, "no utilization class shows an optimism gap"
    report(
        4,
        "availability-only >= full-constraint at every class; "
        f"strict gap at classes {gap_classes}",
    )


def _f32_ulp(x: float) -> float:
    packed = struct.unpack("<I", struct.pack("<f", x))[0]
    return struct.unpack("<f", struct.pack("<I", packed + 1))[0] - struct.unpack(
        "<f", struct.pack("<I", packed)
    )[0]


def test_criterion_5_energy_point_check():
    from conftest import bind_all, build_graph

    g = build_graph(
        {"t1": {"risc": 100.0}, "t2": {"risc": 80.0}},
        msgs=[("m1", "t1", "t2", 16.0)],
    )
    arch = build_arch(e_sbit=0.98, e_lbit=0.0936)
    m = bind_all(g, {"t1": (0, 0), "t2": (1, 0)})
    from nocmap import analysis

    value = analysis.noc_energy(g, m, arch)
    tolerance = _f32_ulp(32.8576)
    assert abs(value - 32.8576) <= tolerance
    report(5, f"hop-2 16-bit message costs {value} nJ (within 1 float32 ulp of 32.8576)")


def test_criterion_6_dse_archive_soundness():
    from nocmap import analysis

    t0 = time.monotonic()
    with open("samples/arch_6x6.json") as fh:
        arch = load_architecture(fh.read())
    spec = bench.BenchmarkSpec(n_apps=5, types=arch.resource_types, seed=3)
    apps = bench.gen_benchmark(spec)
    ea = dse.EaConfig(population=200, iterations=50)
    archive_sizes = []
    for i, g in enumerate(apps):
        archive = dse.explore(g, arch, PARAMS, ea, seed=100 + i)
        archive_sizes.append(len(archive))
        entries = archive.entries
        for entry in entries:
            rep = analysis.is_feasible(g, entry.mapping, PARAMS, arch)
            assert rep.feasible, rep.violations
            assert analysis.worst_case_latency(g, entry.mapping, PARAMS, arch) <= g.deadline
        for a in entries:
            for b in entries:
                if a is not b:
                    assert not dse.dominates(a.objectives, b.objectives)

    # tiny instances: exhaustive decoding never dominates the archive
    from test_dse import brute_force_vectors, tiny_problem

    g_tiny, arch_tiny = tiny_problem()
    params0 = SchedulingParams(snt=50.0, sios=10.0, k_extra=0)
    tiny_archive = dse.explore(
        g_tiny, arch_tiny, params0, dse.EaConfig(population=30, iterations=15), seed=3
    )
    for v in brute_force_vectors(g_tiny, arch_tiny, params0):
        for entry in tiny_archive:
            assert not dse.dominates(v, entry.objectives)

    elapsed = time.monotonic() - t0
    assert elapsed < 300.0
    report(
        6,
        f"5 archives sound (sizes {archive_sizes}), no dominated pairs, "
        f"brute force confirms tiny instances, {elapsed:.1f} s",
    )


def test_criterion_7_timeout_contract():
    from test_rtm import hard_unsat_instance

    # wall-clock bound under a 10 ms timeout, hard and easy instances alike
    worst = 0
    cg_hard, state_hard = hard_unsat_instance()
    for _ in range(5):
        result = rtm.backtrack(cg_hard, state_hard, TI, timeout_s=0.010)
        assert result.timed_out
        worst = max(worst, result.wall_us)
        assert result.wall_us <= 15_000

    rng = random.Random(77)
    small = [random_small_instance(rng) for _ in range(60)]
    false_neg = 0
    solvable = 0
    for cg, state in small:
        unlimited = rtm.backtrack(cg, state, TI, timeout_s=None)
        limited = rtm.backtrack(cg, state, TI, timeout_s=0.010)
        assert limited.wall_us <= 15_000
        worst = max(worst, limited.wall_us)
        if unlimited.assignment is not None:
            solvable += 1
            if limited.assignment is None:
                false_neg += 1
    rate = false_neg / solvable if solvable else 0.0
    report(
        7,
        f"10 ms timeout: worst wall {worst} µs <= 15 ms; false-negative rate "
        f"{rate:.1%} ({false_neg}/{solvable}) vs the no-timeout oracle",
    )


def test_criterion_8_state_algebra():
    arch = build_arch(width=3, height=3, type_at=lambda c: ["risc", "dsp"][(c[0] + c[1]) % 2])
    present = arch.resource_types

    def random_cg(rng):
        n = rng.randint(1, 3)
        clusters = [
            make_cluster(
                i,
                rtype=rng.choice(present),
                load=round(rng.uniform(0.1, 0.6), 3),
                n_tasks=rng.randint(1, 2),
                k_max=rng.randint(2, 7),
            )
            for i in range(n)
        ]
        links = []
        if n >= 2 and rng.random() < 0.6:
            links.append((0, 0, 1, rng.randint(1, arch.sl_max), rng.randint(2, 5)))
        return make_cg(clusters, links)

    operations = 0
    commits = 0
    for seq in range(20):
        rng = random.Random(4000 + seq)
        state = rtm.SystemState(arch)
        live = []
        while operations < (seq + 1) * 500:
            operations += 1
            if live and rng.random() < 0.45:
                app = live.pop(rng.randrange(len(live)))
                rtm.remove(app, state)
            else:
                cg = random_cg(rng)
                result = rtm.backtrack(cg, state, TI)
                if result.assignment is None:
                    continue
                app = f"s{seq}a{operations}"
                before = state.copy()
                rtm.commit(result.assignment, cg, app, state)
                commits += 1
                undone = state.copy()
                rtm.remove(app, undone)
                assert undone == before, "commit then remove did not restore the state"
                live.append(app)
            assert state.check_invariants() == []
    assert operations >= 10_000
    report(
        8,
        f"{operations} commit/remove operations ({commits} commits) preserve "
        "invariants; commit-then-remove restores the prior state exactly",
    )
