"""Fixed-point engines over a set of guarded commands.

All three engines execute the same lowered program: each guarded command
becomes an *op* ``(guards, cell, evaluator, fail_check)`` working on the
raw cells of a store.  They differ only in scheduling:

* ``run_sequential`` sweeps the ops in program order;
* ``run_fair`` picks one op at a time from seeded shuffled rounds;
* ``run_parallel`` strides the ops over worker threads, with one barrier
  per iteration and the three-slot ``has_changed`` ring for termination.
"""
from __future__ import annotations

import enum
import random
import threading
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .lattice import BDEC, BINC, INTERVAL, NEG_INF, POS_INF, ZDEC, ZINC, Schema, Store, _decode
from .process import GuardedCommand, ModelError, Predicate


class Status(enum.Enum):
    FIXPOINT = "fixpoint"
    FAILED = "failed"


class EngineLimitError(RuntimeError):
    pass


@dataclass
class EngineResult:
    store: Store
    status: Status
    iterations: int
    applications: int

    @property
    def failed(self) -> bool:
        return self.status is Status.FAILED


def _reader(schema: Schema, refs: Sequence) -> Callable:
    parts = []
    for r in refs:
        i = schema.index(r)
        parts.append((schema.vars[i].lattice, schema.offsets[i]))

    def read(c):
        return [_decode(lat, c[off:off + lat.width]) for lat, off in parts]

    return read


def _read_slots(schema: Schema, refs: Sequence) -> tuple:
    return tuple(schema.slot(r) for r in refs)


def _lower_guard(schema: Schema, g) -> Callable:
    if isinstance(g, Predicate):
        if g.kernel is not None:
            return g.kernel(_read_slots(schema, g.read_set))
        read = _reader(schema, g.read_set)
        test = g.test
        return lambda c: bool(test(*read(c)))
    lat = schema.lattice(g)
    if lat is not BINC:
        raise ModelError(f"ask guard {g!r} must be a BInc variable, not {lat.value}")
    off = schema.slot(g)
    return lambda c: c[off] != 0


def _fail_check(schema: Schema, cell: int) -> Optional[Callable]:
    for i, off in enumerate(schema.offsets):
        lat = schema.vars[i].lattice
        if off <= cell < off + lat.width:
            if lat is INTERVAL:
                return lambda c, lo=off, hi=off + 1: c[lo] > c[hi]
            if lat is ZINC:
                return lambda c: c[cell] == POS_INF
            if lat is ZDEC:
                return lambda c: c[cell] == NEG_INF
            return None
    raise ModelError(f"cell {cell} outside the schema")


class Program:
    """Guarded commands lowered against one schema; reusable across stores."""

    def __init__(self, commands: Sequence[GuardedCommand], schema: Schema):
        self.commands = list(commands)
        self.schema = schema
        self.ops: list[tuple] = []
        fail_checks: dict[int, Optional[Callable]] = {}
        for gc in self.commands:
            guards = tuple(_lower_guard(schema, g) for g in gc.guards)
            for cell, ev in self._lower_tell(gc):
                if cell not in fail_checks:
                    fail_checks[cell] = _fail_check(schema, cell)
                self.ops.append((guards, cell, ev, fail_checks[cell]))

    def _lower_tell(self, gc: GuardedCommand):
        schema = self.schema
        fn = gc.fn
        lat = schema.lattice(gc.target)
        off = schema.slot(gc.target)
        if fn.kernel is not None:
            fast = fn.kernel(_read_slots(schema, fn.read_set))
        else:
            read = _reader(schema, fn.read_set)
            f = fn.eval
            fast = lambda c: f(*read(c))
        if lat is INTERVAL:
            if fn.bound == "lb":
                return [(off, fast)]
            if fn.bound == "ub":
                return [(off + 1, fast)]
            return [(off, lambda c: fast(c)[0]), (off + 1, lambda c: fast(c)[1])]
        if fn.bound is not None:
            raise ModelError(f"bound-only function told into {lat.value} variable {gc.target!r}")
        if lat in (BINC, BDEC):
            return [(off, lambda c: int(fast(c)))]
        return [(off, fast)]

    def __len__(self) -> int:
        return len(self.ops)


def as_program(gc, store: Store) -> Program:
    if isinstance(gc, Program):
        if gc.schema is not store.schema and gc.schema != store.schema:
            raise ModelError("program and store schemas differ")
        return gc
    return Program(gc, store.schema)


def _apply(op, cells, join) -> int:
    """0 = guards false, 1 = applied without change, 2 = changed, 3 = changed into failure."""
    guards, cell, ev, check = op
    for g in guards:
        if not g(cells):
            return 0
    if join(cell, ev(cells)):
        if check is not None and check(cells):
            return 3
        return 2
    return 1


def run_sequential(gc, s: Store, *, max_iterations: Optional[int] = None,
                   observer: Optional[Callable[[Store], None]] = None) -> EngineResult:
    """Sweep every command in program order until a sweep changes nothing."""
    prog = as_program(gc, s)
    ops = prog.ops
    cells = s.cells
    join = s.join_cell
    iterations = applications = 0
    failed = s.is_failed()
    while not failed:
        if max_iterations is not None and iterations >= max_iterations:
            raise EngineLimitError(f"no fixed point after {iterations} sweeps")
        iterations += 1
        changed = False
        for guards, cell, ev, check in ops:
            for g in guards:
                if not g(cells):
                    break
            else:
                applications += 1
                if join(cell, ev(cells)):
                    changed = True
                    if check is not None and check(cells):
                        failed = True
                        break
        if observer is not None:
            observer(s)
        if not changed:
            break
    status = Status.FAILED if failed or s.is_failed() else Status.FIXPOINT
    return EngineResult(s, status, iterations, applications)


def run_fair(gc, s: Store, seed: int = 0, *, max_iterations: Optional[int] = None,
             observer: Optional[Callable[[Store], None]] = None) -> EngineResult:
    """Execute one command per step, drawn from seeded shuffled rounds.

    Every command appears once per round, so the schedule is fair; the run
    stops after a whole round without any change.
    """
    prog = as_program(gc, s)
    ops = prog.ops
    rng = random.Random(seed)
    order = list(range(len(ops)))
    cells = s.cells
    join = s.join_cell
    rounds = applications = 0
    failed = s.is_failed()
    while not failed:
        if max_iterations is not None and rounds >= max_iterations:
            raise EngineLimitError(f"no fixed point after {rounds} rounds")
        rounds += 1
        rng.shuffle(order)
        changed = False
        for k in order:
            r = _apply(ops[k], cells, join)
            if r:
                applications += 1
                if r >= 2:
                    changed = True
                    if observer is not None:
                        observer(s)
                    if r == 3:
                        failed = True
                        break
        if not changed:
            break
    status = Status.FAILED if failed or s.is_failed() else Status.FIXPOINT
    return EngineResult(s, status, rounds, applications)


def run_parallel(gc, s: Store, workers: int = 1, *, max_iterations: Optional[int] = None) -> EngineResult:
    """Barrier-synchronised propagation loop shared by ``workers`` threads.

    Worker ``tid`` applies ops ``tid, tid + workers, ...`` in every
    iteration.  ``has_changed`` holds the past, present and future change
    flags: iteration ``i`` continues while slot ``(i-1) % 3`` is set, sets slot
    ``i % 3`` on change and clears slot ``(i+1) % 3`` before the barrier.  A
    second ring with the same discipline carries failure, so every worker
    takes the same exit decision.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    prog = as_program(gc, s)
    ops = prog.ops
    n = len(ops)
    cells = s.cells
    join = s.join_cell
    has_changed = [True, False, False]
    has_failed = [s.is_failed(), False, False]
    barrier = threading.Barrier(workers)
    iterations = [0] * workers
    applications = [0] * workers
    errors: list[BaseException] = []

    def work(tid: int) -> None:
        i = 1
        apps = 0
        try:
            while has_changed[(i - 1) % 3] and not has_failed[(i - 1) % 3]:
                if max_iterations is not None and i > max_iterations:
                    raise EngineLimitError(f"no fixed point after {i - 1} iterations")
                for t in range(tid, n, workers):
                    guards, cell, ev, check = ops[t]
                    for g in guards:
                        if not g(cells):
                            break
                    else:
                        apps += 1
                        if join(cell, ev(cells)):
                            has_changed[i % 3] = True
                            if check is not None and check(cells):
                                has_failed[i % 3] = True
                                break
                has_changed[(i + 1) % 3] = False
                has_failed[(i + 1) % 3] = False
                barrier.wait()
                i += 1
        except threading.BrokenBarrierError:
            pass
        except BaseException as e:  # noqa: BLE001 - re-raised by the caller
            errors.append(e)
            barrier.abort()
        iterations[tid] = i - 1
        applications[tid] = apps

    if workers == 1:
        work(0)
    else:
        threads = [threading.Thread(target=work, args=(t,), daemon=True) for t in range(workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    if errors:
        raise errors[0]
    status = Status.FAILED if s.is_failed() else Status.FIXPOINT
    return EngineResult(s, status, max(iterations), sum(applications))


def apply_once(gc, s: Store) -> Store:
    """One synchronous round: every command reads ``s`` and joins into a copy.

    This is the denotation of the parallel composition applied once; it is
    extensive and monotone whenever every command is.
    """
    prog = as_program(gc, s)
    frozen = list(s.cells)
    out = s.copy()
    for guards, cell, ev, _ in prog.ops:
        if all(g(frozen) for g in guards):
            out.join_cell(cell, ev(frozen))
    return out


ENGINES = ("seq", "fair", "par")


def run(engine: str, gc, s: Store, *, seed: int = 0, workers: int = 1, **kw) -> EngineResult:
    if engine == "seq":
        return run_sequential(gc, s, **kw)
    if engine == "fair":
        return run_fair(gc, s, seed, **kw)
    if engine == "par":
        return run_parallel(gc, s, workers, **kw)
    raise ValueError(f"unknown engine {engine!r}")
