"""RCPSP instances (Patterson format) and their decomposed PCCP model.

The model uses one start interval ``s_i`` per job and one 0/1 interval
``b_ij`` per ordered pair, true exactly when job ``i`` is running at the
start of job ``j``.  Resource limits are then checked at every start time
through ``sum_i r_ki * b_ij <= c_k``.
"""
from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .lattice import Store
from .engine import Program
from .propagation import And, BoolIs, Leq, LinearLeq, Lt, Model


class InstanceError(ValueError):
    pass


@dataclass
class RcpspInstance:
    """Jobs ``0..n-1`` (dummy source first and sink last in Patterson files)."""

    durations: list[int]
    usages: list[list[int]]            # usages[i][k]
    capacities: list[int]
    precedences: list[tuple[int, int]]  # (i, j): i finishes before j starts
    horizon: Optional[int] = None
    name: str = ""

    def __post_init__(self):
        if self.horizon is None:
            self.horizon = sum(self.durations)
        self.validate()

    @property
    def n_jobs(self) -> int:
        return len(self.durations)

    @property
    def n_resources(self) -> int:
        return len(self.capacities)

    @property
    def sink(self) -> int:
        return self.n_jobs - 1

    def successors(self) -> list[list[int]]:
        succ: list[list[int]] = [[] for _ in range(self.n_jobs)]
        for i, j in self.precedences:
            succ[i].append(j)
        return succ

    def validate(self) -> None:
        n, r = self.n_jobs, self.n_resources
        if len(self.usages) != n:
            raise InstanceError("one usage row per job is required")
        for i, row in enumerate(self.usages):
            if len(row) != r:
                raise InstanceError(f"job {i + 1} has {len(row)} usages for {r} resources")
            if any(u < 0 for u in row):
                raise InstanceError(f"job {i + 1} has a negative usage")
        if any(d < 0 for d in self.durations):
            raise InstanceError("durations must be nonnegative")
        if any(c < 0 for c in self.capacities):
            raise InstanceError("capacities must be nonnegative")
        for i, j in self.precedences:
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise InstanceError(f"bad precedence {i + 1} -> {j + 1}")
        if _has_cycle(n, self.successors()):
            raise InstanceError("precedence graph has a cycle")
        if n:
            # the sink's start is the makespan only if every job precedes it
            reach = _reaches(n, self.successors(), self.sink)
            for i in range(n - 1):
                if not reach[i] and self.durations[i] > 0:
                    raise InstanceError(f"job {i + 1} is not a predecessor of the sink job {n}")

    # -- serialisation ----------------------------------------------------
    def to_patterson(self) -> str:
        succ = self.successors()
        lines = [f"{self.n_jobs} {self.n_resources}", " ".join(map(str, self.capacities))]
        for i in range(self.n_jobs):
            row = [self.durations[i], *self.usages[i], len(succ[i]), *(j + 1 for j in succ[i])]
            lines.append(" ".join(map(str, row)))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({
            "name": self.name,
            "durations": self.durations,
            "usages": self.usages,
            "capacities": self.capacities,
            "precedences": [list(p) for p in self.precedences],
            "horizon": self.horizon,
        })

    @classmethod
    def from_json(cls, text: str) -> "RcpspInstance":
        try:
            d = json.loads(text)
            return cls(
                durations=[int(x) for x in d["durations"]],
                usages=[[int(u) for u in row] for row in d["usages"]],
                capacities=[int(c) for c in d["capacities"]],
                precedences=[(int(i), int(j)) for i, j in d["precedences"]],
                horizon=d.get("horizon"),
                name=d.get("name", ""),
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
            if isinstance(e, InstanceError):
                raise
            raise InstanceError(f"bad JSON instance: {e}") from None


def _has_cycle(n: int, succ: list[list[int]]) -> bool:
    indeg = [0] * n
    for row in succ:
        for j in row:
            indeg[j] += 1
    todo = [i for i in range(n) if indeg[i] == 0]
    seen = 0
    while todo:
        i = todo.pop()
        seen += 1
        for j in succ[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                todo.append(j)
    return seen != n


def _reaches(n: int, succ: list[list[int]], target: int) -> list[bool]:
    pred: list[list[int]] = [[] for _ in range(n)]
    for i, row in enumerate(succ):
        for j in row:
            pred[j].append(i)
    ok = [False] * n
    ok[target] = True
    todo = [target]
    while todo:
        j = todo.pop()
        for i in pred[j]:
            if not ok[i]:
                ok[i] = True
                todo.append(i)
    return ok


# -- Patterson parsing ---------------------------------------------------------

class PattersonError(InstanceError):
    def __init__(self, message: str, line: int, offset: int):
        super().__init__(f"line {line}, offset {offset}: {message}")
        self.line = line
        self.offset = offset


def _tokens(text: str):
    for ln, row in enumerate(text.splitlines(), start=1):
        for m in re.finditer(r"\S+", row):
            yield m.group(), ln, m.start()


def parse_patterson(text: str, name: str = "") -> RcpspInstance:
    """Parse a Patterson ``.rcp`` file.

    Layout: ``J R``; ``R`` capacities; then for each job its duration, ``R``
    usages, successor count and 1-based successor ids.
    """
    toks = _tokens(text)
    last = (1, 0)

    def nxt(what: str) -> int:
        nonlocal last
        try:
            tok, ln, off = next(toks)
        except StopIteration:
            raise PattersonError(f"unexpected end of file, expected {what}", *last) from None
        last = (ln, off)
        try:
            v = int(tok)
        except ValueError:
            raise PattersonError(f"expected integer {what}, got {tok!r}", ln, off) from None
        if v < 0:
            raise PattersonError(f"negative {what}: {v}", ln, off)
        return v

    n = nxt("job count")
    r = nxt("resource count")
    caps = [nxt("capacity") for _ in range(r)]
    durations, usages, precedences = [], [], []
    for i in range(n):
        durations.append(nxt(f"duration of job {i + 1}"))
        usages.append([nxt(f"usage of job {i + 1}") for _ in range(r)])
        for _ in range(nxt(f"successor count of job {i + 1}")):
            j = nxt(f"successor of job {i + 1}")
            if not 1 <= j <= n:
                raise PattersonError(f"successor id {j} out of range 1..{n}", *last)
            precedences.append((i, j - 1))
    for tok, ln, off in toks:
        raise PattersonError(f"trailing data {tok!r}", ln, off)
    try:
        return RcpspInstance(durations, usages, caps, precedences, name=name)
    except PattersonError:
        raise
    except InstanceError as e:
        raise PattersonError(str(e), *last) from None


def load_instance(path) -> RcpspInstance:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        inst = RcpspInstance.from_json(text)
    else:
        inst = parse_patterson(text)
    inst.name = inst.name or path.stem
    return inst


# -- model ---------------------------------------------------------------------

@dataclass
class RcpspModel:
    instance: RcpspInstance
    model: Model
    program: Program
    store: Store
    starts: list[str]
    overlaps: list[list[str]]
    objective: str
    counts: dict = field(default_factory=dict)

    def start_values(self, store: Store) -> list[int]:
        out = []
        for s in self.starts:
            lo, hi = store[s]
            if lo != hi:
                raise ValueError(f"{s} is not fixed: ({lo}, {hi})")
            out.append(lo)
        return out


def build_model(inst: RcpspInstance) -> RcpspModel:
    """Decomposed model: precedences, overlap reifications, resource sums."""
    m = Model()
    n, h = inst.n_jobs, inst.horizon
    starts = [m.var(f"s{i + 1}", init=(0, h)) for i in range(n)]
    overlaps = [[m.var(f"b{i + 1}_{j + 1}", init=(0, 1)) for j in range(n)] for i in range(n)]
    counts = {"precedences": 0, "reifications": 0, "sums": 0}
    for i, j in inst.precedences:
        m.post(Leq(starts[i], starts[j], inst.durations[i]))
        counts["precedences"] += 1
    for i in range(n):
        d = inst.durations[i]
        for j in range(n):
            b = overlaps[i][j]
            if i == j:
                # a running job covers its own start; an empty one never does
                m.post(BoolIs(b, d > 0))
            else:
                m.post_reified(b, And(Leq(starts[i], starts[j]), Lt(starts[j], starts[i], -d)))
            counts["reifications"] += 1
    for k, cap in enumerate(inst.capacities):
        for j in range(n):
            terms = [(inst.usages[i][k], overlaps[i][j]) for i in range(n) if inst.usages[i][k] > 0]
            m.post(LinearLeq(terms, cap))
            counts["sums"] += 1
    commands, store = m.build()
    program = Program(commands, store.schema)
    return RcpspModel(inst, m, program, store, starts, overlaps, starts[inst.sink] if n else "", counts)


def check_solution(inst: RcpspInstance, starts: Sequence[int]) -> bool:
    """Time-indexed check of precedences and resource loads on plain integers."""
    if len(starts) != inst.n_jobs:
        raise ValueError(f"expected {inst.n_jobs} start times, got {len(starts)}")
    if any(s < 0 for s in starts):
        return False
    for i, j in inst.precedences:
        if starts[i] + inst.durations[i] > starts[j]:
            return False
    end = max((s + d for s, d in zip(starts, inst.durations)), default=0)
    for t in range(end):
        for k, cap in enumerate(inst.capacities):
            load = sum(inst.usages[i][k] for i in range(inst.n_jobs)
                       if starts[i] <= t < starts[i] + inst.durations[i])
            if load > cap:
                return False
    return True


def makespan(inst: RcpspInstance, starts: Sequence[int]) -> int:
    return max((s + d for s, d in zip(starts, inst.durations)), default=0)


# -- synthetic instances ----------------------------------------------------------

def from_jobs(durations, usages, capacities, precedences=(), name: str = "") -> RcpspInstance:
    """Wrap real jobs with a dummy source and sink (ids shift by one)."""
    n = len(durations)
    r = len(capacities)
    prec = [(i + 1, j + 1) for i, j in precedences]
    has_pred = {j for _, j in precedences}
    has_succ = {i for i, _ in precedences}
    prec += [(0, j + 1) for j in range(n) if j not in has_pred]
    prec += [(i + 1, n + 1) for i in range(n) if i not in has_succ]
    if n == 0:
        prec.append((0, 1))
    return RcpspInstance(
        [0, *durations, 0],
        [[0] * r, *[list(u) for u in usages], [0] * r],
        list(capacities),
        prec,
        name=name,
    )


def random_instance(rng: random.Random, n_jobs: int, n_resources: int, *, max_duration: int = 6,
                    max_capacity: int = 6, edge_prob: float = 0.25, name: str = "") -> RcpspInstance:
    durations = [rng.randint(1, max_duration) for _ in range(n_jobs)]
    caps = [rng.randint(2, max_capacity) for _ in range(n_resources)]
    usages = [[rng.randint(0, c) for c in caps] for _ in range(n_jobs)]
    prec = [(i, j) for i in range(n_jobs) for j in range(i + 1, n_jobs) if rng.random() < edge_prob]
    return from_jobs(durations, usages, caps, prec, name=name)


def micro_instance(rng: random.Random, max_tasks: int = 5, max_horizon: int = 12) -> RcpspInstance:
    """At most ``max_tasks`` real jobs whose durations sum to at most ``max_horizon``."""
    n = rng.randint(0, max_tasks)
    budget = max_horizon
    durations = []
    for k in range(n):
        d = rng.randint(0, max(0, min(5, budget - (n - k - 1))))
        durations.append(d)
        budget -= d
    r = rng.randint(0, 2)
    caps = [rng.randint(0, 4) for _ in range(r)]
    usages = [[rng.randint(0, 3) for _ in range(r)] for _ in range(n)]
    prec = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.2]
    return from_jobs(durations, usages, caps, prec)


CORPUS_SIZE = 110


def stand_in_corpus(seed: int = 2024, size: int = CORPUS_SIZE) -> list[RcpspInstance]:
    """Deterministic Patterson-format instances used when no real corpus is available."""
    rng = random.Random(seed)
    out = []
    for k in range(size):
        n = 4 + k % 7          # 4..10 real jobs
        r = 1 + k % 3
        inst = random_instance(rng, n, r, edge_prob=0.3, name=f"pat{k + 1:03d}")
        out.append(inst)
    return out


def write_corpus(directory, instances: Sequence[RcpspInstance]) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for inst in instances:
        p = directory / f"{inst.name}.rcp"
        p.write_text(inst.to_patterson())
        paths.append(p)
    return paths


def load_corpus(directory=None) -> list[RcpspInstance]:
    """Read every ``.rcp`` file of ``directory``, or build the stand-in corpus."""
    if directory is None:
        return stand_in_corpus()
    return [load_instance(p) for p in sorted(Path(directory).glob("*.rcp"))]
