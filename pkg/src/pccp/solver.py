"""Propagate-and-search with branch and bound.

Nodes are never saved: a worker owns a subproblem-root store and a current
store, and rebuilds each node by copying the root, replaying the node's
decisions and propagating again.  The best makespan found so far lives in
a ZDec cell that every worker joins into; each node starts by joining
``obj <- (bot, best - 1)``.
"""
from __future__ import annotations

import enum
import itertools
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .engine import Program, run
from .lattice import INTERVAL, POS_INF, ZDEC, Schema, Store


class SolveStatus(enum.Enum):
    OPTIMAL = "OPTIMAL"
    SAT = "SAT"
    UNSAT = "UNSAT"
    UNKNOWN = "UNKNOWN"


@dataclass(frozen=True)
class Decision:
    """``var <= mid`` when ``upper`` is true, otherwise ``var >= mid + 1``."""

    var: int
    mid: int
    upper: bool

    def apply(self, s: Store) -> None:
        off = s.schema.offsets[self.var]
        if self.upper:
            s.join_cell(off + 1, self.mid)
        else:
            s.join_cell(off, self.mid + 1)

    def __repr__(self) -> str:
        return f"x{self.var}{'<=' if self.upper else '>='}{self.mid if self.upper else self.mid + 1}"


@dataclass(frozen=True)
class SearchNode:
    decisions: tuple = ()

    def child(self, d: Decision) -> "SearchNode":
        return SearchNode(self.decisions + (d,))


@dataclass
class BranchStrategy:
    """Smallest-width first over ``variables`` (all intervals when ``None``)."""

    variables: Optional[Sequence[int]] = None

    def candidates(self, schema: Schema) -> list[int]:
        ivs = [i for i, v in enumerate(schema.vars) if v.lattice is INTERVAL]
        if self.variables is None:
            return ivs
        first = list(self.variables)
        chosen = set(first)
        return first + [i for i in ivs if i not in chosen]


def branch(s: Store, strategy: Optional[BranchStrategy] = None) -> Optional[tuple[Decision, Decision]]:
    """Split the narrowest unfixed interval at its midpoint, or ``None`` at a leaf.

    Preferred variables of the strategy are considered first; the others
    only once every preferred variable is fixed.  Ties go to the lowest
    index.
    """
    strategy = strategy or BranchStrategy()
    schema = s.schema
    cells = s.cells
    preferred = set(strategy.variables) if strategy.variables is not None else None
    best = None
    for group in ((True, False) if preferred is not None else (None,)):
        for i in strategy.candidates(schema):
            if group is not None and (i in preferred) != group:
                continue
            off = schema.offsets[i]
            lo, hi = cells[off], cells[off + 1]
            if lo >= hi:
                continue
            w = hi - lo
            if best is None or w < best[0] or (w == best[0] and i < best[1]):
                best = (w, i, lo, hi)
        if best is not None:
            break
    if best is None:
        return None
    _, i, lo, hi = best
    mid = (lo + hi) // 2
    return Decision(i, mid, True), Decision(i, mid, False)


class Objective:
    """Minimise interval variable ``obj_var``; ``best`` is a shared ZDec cell."""

    def __init__(self, obj_var, schema: Schema):
        self.obj_var = schema.index(obj_var)
        self.best = Store(Schema([("best", ZDEC)]))

    @property
    def value(self) -> int:
        return self.best.cells[0]

    def offer(self, v: int) -> bool:
        """Join ``v`` into the best bound; true when it improved."""
        return self.best.join_cell(0, v)

    def tighten(self, s: Store) -> None:
        b = self.best.cells[0]
        if b != POS_INF:
            s.join_cell(s.schema.offsets[self.obj_var] + 1, b - 1)


@dataclass
class Limits:
    timeout: Optional[float] = None
    nodes: Optional[int] = None


@dataclass
class SolveResult:
    status: SolveStatus
    objective: Optional[int]
    solution: Optional[Store]
    nodes: int
    elapsed: float
    incumbents: list = field(default_factory=list)

    @property
    def nodes_per_sec(self) -> int:
        return int(self.nodes / self.elapsed) if self.elapsed > 0 else 0


class _Search:
    """Shared context of one solve: program, bound, limits and counters."""

    def __init__(self, program: Program, objective: Optional[Objective], strategy, limits: Limits,
                 engine: str, engine_options: dict):
        self.program = program
        self.objective = objective
        self.strategy = strategy
        self.limits = limits
        self.engine = engine
        self.engine_options = engine_options
        self.start = time.perf_counter()
        self.stop = threading.Event()
        self.limit_hit = False
        self._node_ids = itertools.count(1)
        self.nodes = 0

    def count_node(self) -> bool:
        """Register one node; false once a limit is reached."""
        n = next(self._node_ids)
        self.nodes = max(self.nodes, n)
        lim = self.limits
        if (lim.nodes is not None and n > lim.nodes) or (
            lim.timeout is not None and time.perf_counter() - self.start > lim.timeout
        ):
            self.limit_hit = True
            self.stop.set()
            return False
        return True

    def propagate(self, s: Store) -> bool:
        return not run(self.engine, self.program, s, **self.engine_options).failed

    def setup(self, cur: Store, root: Store, decisions) -> bool:
        """Rebuild a node: copy root, replay decisions, tighten, propagate."""
        cur.assign(root)
        for d in decisions:
            d.apply(cur)
        if self.objective is not None:
            self.objective.tighten(cur)
        return self.propagate(cur)


class _Worker:
    def __init__(self, search: _Search, root: Store):
        self.search = search
        self.root = root.copy()
        self.cur = root.copy()
        self.incumbents: list[tuple[int, Store]] = []
        self.solution: Optional[Store] = None

    def record(self, s: Store) -> None:
        obj = self.search.objective
        if obj is None:
            self.solution = s.copy()
            self.search.stop.set()
            return
        v = s[obj.obj_var][0]
        if obj.offer(v):
            self.solution = s.copy()
            self.incumbents.append(v)

    def dfs(self, start: SearchNode) -> None:
        """Depth-first, left-first search below ``start``."""
        search = self.search
        stack = [start.decisions]
        while stack and not search.stop.is_set():
            decisions = stack.pop()
            if not search.count_node():
                return
            if not search.setup(self.cur, self.root, decisions):
                continue
            split = branch(self.cur, search.strategy)
            if split is None:
                self.record(self.cur)
                continue
            left, right = split
            stack.append(decisions + (right,))
            stack.append(decisions + (left,))


def _as_program(props, root: Store) -> Program:
    return props if isinstance(props, Program) else Program(props, root.schema)


def _finish(search: _Search, workers: Sequence[_Worker]) -> SolveResult:
    elapsed = time.perf_counter() - search.start
    obj = search.objective
    sols = [w for w in workers if w.solution is not None]
    solution = None
    objective = None
    if sols:
        if obj is None:
            solution = sols[0].solution
        else:
            best = min(sols, key=lambda w: w.solution[obj.obj_var][0])
            solution = best.solution
            objective = solution[obj.obj_var][0]
    if search.limit_hit:
        status = SolveStatus.SAT if solution is not None else SolveStatus.UNKNOWN
    elif solution is not None:
        status = SolveStatus.OPTIMAL
    else:
        status = SolveStatus.UNSAT
    incumbents = [v for w in workers for v in w.incumbents]
    return SolveResult(status, objective, solution, search.nodes, elapsed, incumbents)


def solve_dfs(root: Store, props, objective=None, limits: Optional[Limits] = None, *,
              strategy: Optional[BranchStrategy] = None, engine: str = "seq",
              engine_options: Optional[dict] = None) -> SolveResult:
    """Branch and bound by depth-first search.

    ``objective`` is a variable reference or an ``Objective``; without one
    the search stops at the first solution.  ``engine`` and
    ``engine_options`` select the fixed-point engine run at every node.  Reaching a limit gives ``SAT``
    when an incumbent exists and ``UNKNOWN`` otherwise.
    """
    program = _as_program(props, root)
    if objective is not None and not isinstance(objective, Objective):
        objective = Objective(objective, root.schema)
    search = _Search(program, objective, strategy, limits or Limits(), engine, engine_options or {})
    worker = _Worker(search, root)
    worker.dfs(SearchNode())
    return _finish(search, [worker])


def node_state(root: Store, props, decisions: Sequence[Decision], engine: str = "seq") -> Store:
    """State of a node rebuilt by recomputation from ``root``."""
    program = _as_program(props, root)
    s = root.copy()
    for d in decisions:
        d.apply(s)
    run(engine, program, s)
    return s


def eps_decompose(root: Store, props, target: int, *, strategy: Optional[BranchStrategy] = None,
                  on_solution: Optional[Callable[[Store], None]] = None,
                  search: Optional[_Search] = None) -> list[SearchNode]:
    """Breadth-first split of the tree until ``target`` open nodes exist.

    Every child is propagated when created: failed children are dropped and
    solved ones are handed to ``on_solution``.  The result may be shorter
    than ``target`` when the tree runs out of open nodes.
    """
    program = _as_program(props, root)
    search = search or _Search(program, None, strategy, Limits(), "seq", {})
    cur = root.copy()
    frontier = deque([SearchNode()])
    while frontier and len(frontier) < target:
        node = frontier.popleft()
        if not search.setup(cur, root, node.decisions):
            continue
        split = branch(cur, strategy)
        if split is None:
            if on_solution is not None:
                on_solution(cur)
            continue
        for d in split:
            child = node.child(d)
            if search.stop.is_set() or not search.count_node():
                return list(frontier) + [child]
            if not search.setup(cur, root, child.decisions):
                continue
            if branch(cur, strategy) is None:
                if on_solution is not None:
                    on_solution(cur)
                continue
            frontier.append(child)
    return list(frontier)


def solve_parallel(root: Store, props, objective=None, workers: int = 1, limits: Optional[Limits] = None, *,
                   strategy: Optional[BranchStrategy] = None, eps_factor: int = 8,
                   engine: str = "seq", engine_options: Optional[dict] = None) -> SolveResult:
    """Embarrassingly parallel search over ``eps_factor * workers`` subproblems.

    Workers pull subproblems from a shared cursor and share only the best
    bound cell and the stop flag.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    program = _as_program(props, root)
    if objective is not None and not isinstance(objective, Objective):
        objective = Objective(objective, root.schema)
    search = _Search(program, objective, strategy, limits or Limits(), engine, engine_options or {})
    master = _Worker(search, root)
    if not search.count_node() or not search.setup(master.cur, master.root, ()):
        return _finish(search, [master])
    subproblems = eps_decompose(root, program, eps_factor * workers, strategy=strategy,
                                on_solution=master.record, search=search)
    cursor = itertools.count()
    pool = [_Worker(search, root) for _ in range(workers)]
    errors: list[BaseException] = []

    def work(w: _Worker) -> None:
        try:
            while not search.stop.is_set():
                k = next(cursor)
                if k >= len(subproblems):
                    return
                w.dfs(subproblems[k])
        except BaseException as e:  # noqa: BLE001 - re-raised below
            errors.append(e)
            search.stop.set()

    if workers == 1:
        work(pool[0])
    else:
        threads = [threading.Thread(target=work, args=(w,), daemon=True) for w in pool]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    if errors:
        raise errors[0]
    return _finish(search, [master, *pool])
