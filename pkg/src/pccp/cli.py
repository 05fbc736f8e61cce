"""Command line: ``pccp solve | verify | lsdemo | corpus | bench``."""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .engine import ENGINES, Program, run_fair, run_parallel, run_sequential
from .lattice import INTERVAL
from .lsmachine import run_demo
from .process import MonotoneFn, Tell
from .rcpsp import InstanceError, RcpspModel, build_model, check_solution, load_instance, stand_in_corpus, write_corpus
from .solver import BranchStrategy, Limits, SolveResult, SolveStatus, solve_dfs, solve_parallel

EXIT_OK, EXIT_ERROR, EXIT_UNKNOWN = 0, 1, 2
REPORT_KEYS = ("status", "objective", "nodes", "time_ms", "nodes_per_sec")
VERIFY_SEEDS = range(10)
VERIFY_WORKERS = (1, 2, 4, 8)


@dataclass
class RunConfig:
    instance: Path
    engine: str = "seq"
    workers: int = 1
    threads: int = 2
    timeout: Optional[float] = None
    seed: int = 0
    eps_factor: int = 8
    json: bool = False

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {', '.join(ENGINES)}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.timeout is not None and self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.eps_factor < 1:
            raise ValueError("eps-factor must be >= 1")


def strategy_for(rm: RcpspModel) -> BranchStrategy:
    return BranchStrategy([rm.store.schema.index(s) for s in rm.starts])


def solve_model(rm: RcpspModel, *, engine: str = "seq", workers: int = 1, threads: int = 2,
                timeout: Optional[float] = None, nodes: Optional[int] = None, seed: int = 0,
                eps_factor: int = 8) -> SolveResult:
    """Solve an RCPSP model; more than one worker switches to parallel search."""
    limits = Limits(timeout=timeout, nodes=nodes)
    kw = {}
    if engine == "fair":
        kw["seed"] = seed
    elif engine == "par":
        kw["workers"] = threads
    if workers > 1:
        return solve_parallel(rm.store, rm.program, rm.objective, workers, limits,
                              strategy=strategy_for(rm), eps_factor=eps_factor, engine=engine, engine_options=kw)
    return solve_dfs(rm.store, rm.program, rm.objective, limits, strategy=strategy_for(rm), engine=engine,
                     engine_options=kw)


def report(result: SolveResult) -> dict:
    return {
        "status": result.status.value,
        "objective": result.objective,
        "nodes": result.nodes,
        "time_ms": int(result.elapsed * 1000),
        "nodes_per_sec": result.nodes_per_sec,
    }


def format_report(rep: dict, as_json: bool) -> str:
    if as_json:
        return json.dumps(rep)
    return "\n".join(f"{k}: {'none' if rep[k] is None else rep[k]}" for k in REPORT_KEYS)


def exit_code(status: SolveStatus) -> int:
    return EXIT_UNKNOWN if status is SolveStatus.UNKNOWN else EXIT_OK


def cmd_solve(cfg: RunConfig, out=sys.stdout) -> int:
    rm = build_model(load_instance(cfg.instance))
    res = solve_model(rm, engine=cfg.engine, workers=cfg.workers, threads=cfg.threads,
                      timeout=cfg.timeout, seed=cfg.seed, eps_factor=cfg.eps_factor)
    if res.solution is not None and not check_solution(rm.instance, rm.start_values(res.solution)):
        print("error: solver returned a schedule that fails the independent check", file=sys.stderr)
        return EXIT_ERROR
    print(format_report(report(res), cfg.json), file=out)
    return exit_code(res.status)


def _inject_nonmonotone(rm: RcpspModel) -> RcpspModel:
    """Test hook: add two commands that each raise a flag only while the other is low.

    Whichever runs first wins, so the result depends on the schedule.
    """
    m = rm.model
    m.decls += [("_probe_a", INTERVAL), ("_probe_b", INTERVAL)]
    m.procs[:0] = [
        Tell("_probe_a", MonotoneFn(("_probe_b",), lambda b: 1 if b[0] <= 0 else 0, bound="lb", label="not b")),
        Tell("_probe_b", MonotoneFn(("_probe_a",), lambda a: 1 if a[0] <= 0 else 0, bound="lb", label="not a")),
    ]
    commands, store = m.build()
    return RcpspModel(rm.instance, m, Program(commands, store.schema), store, rm.starts, rm.overlaps, rm.objective)


def root_stores(rm: RcpspModel) -> dict:
    """Root propagation under every engine configuration, keyed by label."""
    out = {}
    s = rm.store.copy()
    run_sequential(rm.program, s)
    out["seq"] = s
    for seed in VERIFY_SEEDS:
        s = rm.store.copy()
        run_fair(rm.program, s, seed)
        out[f"fair(seed={seed})"] = s
    for w in VERIFY_WORKERS:
        s = rm.store.copy()
        run_parallel(rm.program, s, w)
        out[f"par(workers={w})"] = s
    return out


def first_difference(a, b) -> Optional[str]:
    if a.key() == b.key():
        return None
    schema = a.schema
    for i, v in enumerate(schema.vars):
        if a[i] != b[i]:
            return f"variable {v.name} (cell {schema.offsets[i]}): {a[i]} vs {b[i]}"
    return "failure status differs"


def cmd_verify(path, out=sys.stdout, *, inject: bool = False) -> int:
    rm = build_model(load_instance(path))
    if inject:
        rm = _inject_nonmonotone(rm)
    stores = root_stores(rm)
    ref = stores["seq"]
    for label, s in stores.items():
        diff = first_difference(ref, s)
        if diff is not None:
            print(f"FAIL: seq and {label} differ at {diff}", file=out)
            return EXIT_ERROR
    print(f"PASS: {len(stores)} engine runs agree on {rm.store.schema.n_cells} cells", file=out)
    return EXIT_OK


def cmd_lsdemo(out=sys.stdout, rounds: int = 3) -> int:
    ok, reports = run_demo(max_rounds=rounds)
    for r in reports:
        print(r.format(), file=out)
    print("lsdemo: all outcomes as expected" if ok else "lsdemo: UNEXPECTED OUTCOME", file=out)
    return EXIT_OK if ok else EXIT_ERROR


def cmd_corpus(directory, out=sys.stdout) -> int:
    paths = write_corpus(directory, stand_in_corpus())
    print(f"wrote {len(paths)} instances to {directory}", file=out)
    return EXIT_OK


def cmd_bench(directory, *, timeout: float, workers: int, as_json: bool, out=sys.stdout) -> int:
    if directory is None:
        instances = stand_in_corpus()
    else:
        instances = [load_instance(p) for p in sorted(Path(directory).glob("*.rcp"))]
    rows = []
    for inst in instances:
        rm = build_model(inst)
        res = solve_model(rm, workers=workers, timeout=timeout)
        valid = res.solution is None or check_solution(inst, rm.start_values(res.solution))
        row = {"name": inst.name, **report(res), "valid": valid}
        rows.append(row)
        if not as_json:
            print(f"{inst.name}: {row['status']} objective={row['objective']} nodes={row['nodes']} "
                  f"time_ms={row['time_ms']} valid={valid}", file=out)
    summary = {
        "instances": len(rows),
        "feasible": sum(r["objective"] is not None for r in rows),
        "optimal": sum(r["status"] == "OPTIMAL" for r in rows),
        "all_valid": all(r["valid"] for r in rows),
        "nodes_per_sec": int(sum(r["nodes"] for r in rows) / max(1e-9, sum(r["time_ms"] for r in rows) / 1000)),
    }
    if as_json:
        print(json.dumps({"instances": rows, "summary": summary}), file=out)
    else:
        print(" ".join(f"{k}={v}" for k, v in summary.items()), file=out)
    return EXIT_OK if summary["all_valid"] else EXIT_ERROR


def _default_workers() -> int:
    raw = os.environ.get("PCCP_WORKERS")
    if raw is None:
        return 1
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"error: PCCP_WORKERS must be an integer, got {raw!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pccp", description="Lattice-based parallel constraint solver for RCPSP.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="minimise the makespan of one instance")
    s.add_argument("file", type=Path)
    s.add_argument("--engine", choices=ENGINES, default="seq", help="fixed-point engine used at each node")
    s.add_argument("--workers", type=int, default=None, help="search workers (default: $PCCP_WORKERS or 1)")
    s.add_argument("--threads", type=int, default=2, help="propagation threads for --engine par")
    s.add_argument("--timeout", type=float, default=None, help="seconds")
    s.add_argument("--seed", type=int, default=0, help="seed of the fair engine")
    s.add_argument("--eps-factor", type=int, default=8, help="subproblems per worker")
    s.add_argument("--json", action="store_true")

    v = sub.add_parser("verify", help="check that all engines reach the same root store")
    v.add_argument("file", type=Path)
    v.add_argument("--inject-nonmonotone", action="store_true", help=argparse.SUPPRESS)

    d = sub.add_parser("lsdemo", help="exhaustively check the load/store compilation on micro programs")
    d.add_argument("--rounds", type=int, default=3)

    c = sub.add_parser("corpus", help="write the stand-in instance corpus as .rcp files")
    c.add_argument("directory", type=Path)

    b = sub.add_parser("bench", help="solve every .rcp file of a directory")
    b.add_argument("directory", type=Path, nargs="?", default=None,
                   help="instance directory (default: the built-in stand-in corpus)")
    b.add_argument("--timeout", type=float, default=300.0)
    b.add_argument("--workers", type=int, default=None)
    b.add_argument("--json", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "solve":
            workers = args.workers if args.workers is not None else _default_workers()
            cfg = RunConfig(args.file, args.engine, workers, args.threads, args.timeout, args.seed,
                            args.eps_factor, args.json)
            return cmd_solve(cfg, sys.stdout)
        if args.command == "verify":
            return cmd_verify(args.file, sys.stdout, inject=args.inject_nonmonotone)
        if args.command == "lsdemo":
            return cmd_lsdemo(sys.stdout, rounds=args.rounds)
        if args.command == "corpus":
            return cmd_corpus(args.directory, sys.stdout)
        if args.command == "bench":
            workers = args.workers if args.workers is not None else _default_workers()
            if workers < 1 or args.timeout <= 0:
                raise ValueError("workers must be >= 1 and timeout > 0")
            return cmd_bench(args.directory, timeout=args.timeout, workers=workers, as_json=args.json, out=sys.stdout)
    except (OSError, InstanceError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
