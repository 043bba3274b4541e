"""Command-line interface: design-time exploration, packing, admission and
the experiment harness, all thin wrappers over the library.

Exit codes: 0 success, 2 parse/validation failure, 3 admission exhausted
(no feasible operating point), 4 admission failed with a timeout involved.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import bench, cgraph, dse, rtm
from .model import (
    Architecture,
    InvariantError,
    ParseError,
    load_architecture,
    load_taskgraph,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INFEASIBLE = 3
EXIT_TIMEOUT = 4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_PARSE):
        super().__init__(message)
        self.code = code


def _read(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror}")


def _load_arch(path: str) -> Architecture:
    try:
        return load_architecture(_read(path))
    except (ParseError, InvariantError) as exc:
        raise CliError(f"{path}: {exc}")


def _load_app(path: str):
    try:
        return load_taskgraph(_read(path))
    except (ParseError, InvariantError) as exc:
        raise CliError(f"{path}: {exc}")


def _load_config(path: str | None) -> bench.Config:
    if path is None:
        return bench.load_config("{}")
    try:
        return bench.load_config(_read(path))
    except (ParseError, ValueError) as exc:
        raise CliError(f"{path}: {exc}")


def _load_ops(path: str, arch: Architecture) -> list[cgraph.OperatingPoint]:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror}")
    try:
        _, ops = cgraph.read_container(data, arch.resource_types)
    except cgraph.CodecError as exc:
        raise CliError(f"{path}: {exc}")
    return ops


def _ops_to_doc(ops: list[cgraph.OperatingPoint], n_obj: int, types) -> dict:
    points = []
    for op in ops:
        points.append(
            {
                "task_clusters": [
                    {
                        "id": tc.id,
                        "n_tasks": tc.n_tasks,
                        "load": tc.load,
                        "k_max": tc.k_max,
                        "type": tc.rtype,
                        "prios": list(tc.prios),
                    }
                    for tc in op.cg.task_clusters
                ],
                "message_clusters": [
                    {"id": mc.id, "sl": mc.sl, "hop": mc.hop, "src": mc.src, "dst": mc.dst}
                    for mc in op.cg.message_clusters
                ],
                "edges": [
                    {"kind": e.kind, "src": e.src, "dst": e.dst} for e in op.cg.edges
                ],
                "objectives": list(op.objectives),
            }
        )
    return {"n_obj": n_obj, "types": list(types), "points": points}


def _ops_from_doc(doc: dict) -> tuple[list[cgraph.OperatingPoint], int, tuple[str, ...]]:
    try:
        types = tuple(doc["types"])
        n_obj = int(doc["n_obj"])
        ops = []
        for p in doc["points"]:
            tcs = tuple(
                cgraph.TaskCluster(
                    id=int(tc["id"]),
                    tasks=tuple(f"{tc['id']}.{i}" for i in range(int(tc["n_tasks"]))),
                    rtype=str(tc["type"]),
                    load=float(tc["load"]),
                    k_max=int(tc["k_max"]),
                    prios=tuple(int(x) for x in tc["prios"]),
                )
                for tc in p["task_clusters"]
            )
            mcs = tuple(
                cgraph.MessageCluster(
                    id=int(mc["id"]),
                    sl=int(mc["sl"]),
                    hop=int(mc["hop"]),
                    src=int(mc["src"]),
                    dst=int(mc["dst"]),
                )
                for mc in p["message_clusters"]
            )
            edges = tuple(
                cgraph.CgEdge(kind=int(e["kind"]), src=int(e["src"]), dst=int(e["dst"]))
                for e in p["edges"]
            )
            ops.append(
                cgraph.OperatingPoint(
                    cg=cgraph.ConstraintGraph(tcs, mcs, edges),
                    objectives=tuple(float(x) for x in p["objectives"]),
                )
            )
        return ops, n_obj, types
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"operating-point document: {exc}")


def _cmd_validate(args) -> int:
    for path in args.arch or []:
        _load_arch(path)
        print(f"OK {path}")
    for path in args.app or []:
        _load_app(path)
        print(f"OK {path}")
    return EXIT_OK


def _cmd_dse(args) -> int:
    arch = _load_arch(args.arch)
    g = _load_app(args.app)
    config = _load_config(args.config)
    archive = dse.explore(g, arch, config.scheduling, config.ea, args.seed)
    ops = cgraph.archive_to_ops(archive, g, config.scheduling, arch)
    n_obj = 4 + len(arch.resource_types)
    blob = cgraph.write_container(ops, n_obj, arch.resource_types)
    with open(args.out, "wb") as fh:
        fh.write(blob)
    if args.dump_json:
        with open(args.dump_json, "w") as fh:
            json.dump(_ops_to_doc(ops, n_obj, arch.resource_types), fh, indent=2)
            fh.write("\n")
    print(f"{args.out}: {len(ops)} operating points ({len(blob)} bytes)")
    if not ops:
        print("error: no feasible mapping found for this application", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def _cmd_pack(args) -> int:
    try:
        doc = json.loads(_read(args.input))
    except json.JSONDecodeError as exc:
        raise CliError(f"{args.input}: line {exc.lineno}: {exc.msg}")
    ops, n_obj, types = _ops_from_doc(doc)
    try:
        blob = cgraph.write_container(ops, n_obj, types)
    except cgraph.SerializeError as exc:
        raise CliError(f"{args.input}: {exc}")
    with open(args.out, "wb") as fh:
        fh.write(blob)
    print(f"{args.out}: {len(ops)} operating points ({len(blob)} bytes)")
    return EXIT_OK


def _cmd_admit(args) -> int:
    arch = _load_arch(args.arch)
    state = rtm.SystemState(arch)
    mode = rtm.IsolationMode(args.mode)
    timeout_s = args.timeout_ms / 1e3 if args.timeout_ms is not None else None
    saw_exhausted = False
    saw_timeout = False
    for path in args.ops:
        ops = _load_ops(path, arch)
        app_id = args.app_id or path
        report = rtm.admit(ops, state, mode, timeout_s, app_id=app_id)
        decision = {
            "app": app_id,
            "admitted": report.success,
            "op_index": report.op_index,
            "wall_us": sum(a.wall_us for a in report.attempts),
            "attempts": len(report.attempts),
        }
        if report.success:
            rtm.commit(report.assignment, report.op.cg, app_id, state)
            decision["placements"] = {
                str(tc): list(coord)
                for tc, coord in sorted(report.assignment.placements.items())
            }
        else:
            decision["reason"] = "timeout" if report.any_timeout else "exhausted"
            if report.any_timeout:
                saw_timeout = True
            else:
                saw_exhausted = True
        print(json.dumps(decision, sort_keys=True))
    if saw_exhausted:
        return EXIT_INFEASIBLE
    if saw_timeout:
        return EXIT_TIMEOUT
    return EXIT_OK


def _gather_ops(args, arch: Architecture, config: bench.Config, seed: int):
    """Operating points for the experiments: loaded from containers when
    given, otherwise generated (benchmark + exploration) from the config."""
    if args.ops:
        return [_load_ops(path, arch) for path in args.ops]
    spec = config.benchmark or bench.BenchmarkSpec(n_apps=3, types=())
    if not spec.types:
        spec = bench.BenchmarkSpec(
            n_apps=spec.n_apps,
            types=arch.resource_types,
            tasks_min=spec.tasks_min,
            tasks_max=spec.tasks_max,
            seed=seed,
        )
    apps = bench.gen_benchmark(spec)
    ops_per_app = bench.build_operating_points(
        apps, arch, config.scheduling, config.ea, seed
    )
    return [ops for ops in ops_per_app if ops]


def _knob(args, config, name, fallback):
    value = getattr(args, name)
    if value is not None:
        return value
    return config.experiments.get(name, fallback)


def _cmd_exp_util(args) -> int:
    arch = _load_arch(args.arch)
    config = _load_config(args.config)
    ops_per_app = _gather_ops(args, arch, config, args.seed)
    if not ops_per_app:
        raise CliError("no operating points to admit", EXIT_INFEASIBLE)
    timeout_ms = _knob(args, config, "timeout_ms", None)
    timeout_s = timeout_ms / 1e3 if timeout_ms is not None else None
    result = bench.exp_utilization(
        ops_per_app,
        arch,
        int(_knob(args, config, "trials", 500)),
        args.seed,
        timeout_s=timeout_s,
    )
    result.write_csv(args.out)
    for cls, (n, avail, full) in bench.util_summary(result).items():
        print(f"class {cls:3d}: {n:5d} trials  avail {avail / n:6.1%}  full {full / n:6.1%}")
    return EXIT_OK


def _cmd_exp_iso(args) -> int:
    arch = _load_arch(args.arch)
    config = _load_config(args.config)
    ops_per_app = _gather_ops(args, arch, config, args.seed)
    if not ops_per_app:
        raise CliError("no operating points to admit", EXIT_INFEASIBLE)
    levels_csv = str(_knob(args, config, "levels", "100,90,80,70,60,50,40"))
    levels = [float(x) / 100.0 for x in levels_csv.split(",")]
    timeout_ms = _knob(args, config, "timeout_ms", None)
    timeout_s = timeout_ms / 1e3 if timeout_ms is not None else None
    result = bench.exp_isolation(
        [ops_per_app],
        arch,
        levels,
        int(_knob(args, config, "sequences", 20)),
        args.seed,
        timeout_s=timeout_s,
    )
    aggregated = bench.aggregate_isolation(result)
    aggregated.write_csv(args.out)
    if args.raw_out:
        result.write_csv(args.raw_out)
    for r in aggregated.records:
        print(
            f"availability {r['availability_pct']:6.1f}%  {r['mode']:3s}"
            f"  success {r['success_rate']:.3f}"
        )
    return EXIT_OK


def _cmd_exp_timing(args) -> int:
    arch = _load_arch(args.arch)
    config = _load_config(args.config)
    ops_per_app = _gather_ops(args, arch, config, args.seed)
    cgs = [op.cg for ops in ops_per_app for op in ops][: int(_knob(args, config, "max_cgs", 100))]
    if not cgs:
        raise CliError("no constraint graphs to solve", EXIT_INFEASIBLE)
    timeouts_csv = str(_knob(args, config, "timeouts_ms", "1,10,100"))
    timeouts = [float(x) for x in timeouts_csv.split(",")] if timeouts_csv else []
    result = bench.exp_timing(cgs, arch, timeouts, seed=args.seed)
    result.write_csv(args.out)
    for r in result.records:
        if r.get("kind") == "timeout_summary":
            print(
                f"timeout {r['timeout_ms']} ms: {r['false_negatives']} false negatives"
                f" / {r['oracle_successes']} solvable"
            )
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nocmap",
        description="Hybrid design-time/run-time application mapping for mesh NoCs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate architecture/task-graph documents")
    p.add_argument("--arch", action="append", metavar="FILE")
    p.add_argument("--app", action="append", metavar="FILE")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("dse", help="explore one application, emit operating points")
    p.add_argument("--arch", required=True)
    p.add_argument("--app", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-json", metavar="FILE")
    p.set_defaults(func=_cmd_dse)

    p = sub.add_parser("pack", help="serialize a JSON operating-point document")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_pack)

    p = sub.add_parser("admit", help="admit operating-point containers in sequence")
    p.add_argument("--arch", required=True)
    p.add_argument("--ops", nargs="+", required=True, metavar="CONTAINER")
    p.add_argument("--mode", choices=["ti", "spi"], default="ti")
    p.add_argument("--timeout-ms", type=float)
    p.add_argument("--app-id")
    p.set_defaults(func=_cmd_admit)

    p = sub.add_parser("exp-util", help="success vs pre-occupancy experiment")
    p.add_argument("--arch", required=True)
    p.add_argument("--config")
    p.add_argument("--ops", nargs="*", metavar="CONTAINER")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timeout-ms", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_exp_util)

    p = sub.add_parser("exp-iso", help="temporal vs spatial isolation sweep")
    p.add_argument("--arch", required=True)
    p.add_argument("--config")
    p.add_argument("--ops", nargs="*", metavar="CONTAINER")
    p.add_argument("--levels")
    p.add_argument("--sequences", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timeout-ms", type=float)
    p.add_argument("--out", required=True)
    p.add_argument("--raw-out")
    p.set_defaults(func=_cmd_exp_iso)

    p = sub.add_parser("exp-timing", help="solver runtime and timeout experiment")
    p.add_argument("--arch", required=True)
    p.add_argument("--config")
    p.add_argument("--ops", nargs="*", metavar="CONTAINER")
    p.add_argument("--timeouts-ms")
    p.add_argument("--max-cgs", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_exp_timing)

    p = sub.add_parser("serve", help="run the HTTP run-time manager")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ParseError, InvariantError, cgraph.CodecError, cgraph.SerializeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
