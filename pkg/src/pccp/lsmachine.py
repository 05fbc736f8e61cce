"""Desk-scale checker for the load/store execution of guarded commands.

Each guarded command is compiled into the looping instruction sequence
below (line numbers are the ones used in the ordering constraints)::

    1  while true
    2    L b_k rb_k                      (one load per guard variable)
    3    if rb_1 and ... and rb_n
    4      L y_j ry_j                    (one load per read variable)
    5      rf := f(ry_1, ..., ry_m)
    6      L x rx
    7      ox := rx join rf
    8      bx := ox > rx
    9      if bx
    10       S ox x

Inside one iteration only the edges 1-2-3-9-10, 1-6-7 and 1-4-5-7-8-9 are
kept; any order compatible with them may execute.  The explorer enumerates
every interleaving of the shared loads and stores of all threads; purely
local steps (3, 5, 7, 8, 9) commute with other threads and run as soon as
they are enabled.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from .engine import run_sequential
from .lattice import BINC, INTERVAL, NEG_INF, POS_INF, ZINC, Lattice, Schema, Store
from .process import Ask, GuardedCommand, Local, MonotoneFn, Par, Predicate, Tell, const, lower

LINE_DEPS = {2: {1}, 3: {2}, 4: {1}, 5: {4}, 6: {1}, 7: {5, 6}, 8: {7}, 9: {3, 8}, 10: {9}}

MUTANTS = (None, "no_gt", "overwrite")


class BoundExceeded(RuntimeError):
    pass


class TheoremViolation(AssertionError):
    pass


@dataclass(frozen=True)
class Instr:
    id: int
    line: int
    op: str  # load | guard | eval | join | gt | branch | store
    var: Optional[int] = None
    reg: Optional[str] = None

    @property
    def shared(self) -> bool:
        return self.op in ("load", "store")

    def text(self, schema: Schema) -> str:
        name = schema.vars[self.var].name if self.var is not None else ""
        if self.op == "load":
            return f"L {name} {self.reg}"
        if self.op == "store":
            return f"S ox {name}"
        return {
            "guard": "if guards",
            "eval": "rf := f(...)",
            "join": "ox := rx join rf",
            "gt": "bx := ox > rx",
            "branch": "if bx",
        }[self.op]


@dataclass
class LSProgram:
    command: GuardedCommand
    schema: Schema
    instrs: tuple
    deps: tuple
    target: int
    mutant: Optional[str] = None

    def listing(self) -> list[str]:
        return [f"{i.line:>2}  {i.text(self.schema)}" for i in self.instrs]


def compile_ls(gc: GuardedCommand, schema: Schema, *, strict: bool = False,
               mutant: Optional[str] = None) -> LSProgram:
    """Instruction sequence of one guarded command.

    ``strict`` keeps the full program order instead of the relaxed one.
    ``mutant`` selects a deliberately broken variant: ``"no_gt"`` drops the
    strict-increase test, ``"overwrite"`` stores ``f`` without joining it
    with the loaded value of the target.
    """
    if mutant not in MUTANTS:
        raise ValueError(f"unknown mutant {mutant!r}")
    target = schema.index(gc.target)
    guard_vars: dict[int, None] = {}
    for g in gc.guards:
        refs = g.read_set if isinstance(g, Predicate) else (g,)
        for r in refs:
            guard_vars[schema.index(r)] = None
    read_vars = [schema.index(r) for r in gc.fn.read_set]

    specs = [(2, "load", v, f"rb{v}") for v in guard_vars]
    specs.append((3, "guard", None, None))
    specs += [(4, "load", v, f"ry{j}") for j, v in enumerate(read_vars)]
    specs.append((5, "eval", None, "rf"))
    specs.append((6, "load", target, "rx"))
    specs += [(7, "join", None, "ox"), (8, "gt", None, "bx"), (9, "branch", None, None), (10, "store", target, None)]
    instrs = tuple(Instr(k, line, op, var, reg) for k, (line, op, var, reg) in enumerate(specs))

    deps = []
    for ins in instrs:
        if strict:
            deps.append(frozenset(range(ins.id)))
        else:
            need = LINE_DEPS[ins.line]
            deps.append(frozenset(o.id for o in instrs if o.line in need))
    return LSProgram(gc, schema, instrs, tuple(deps), target, mutant)


# -- semantics ----------------------------------------------------------------

def _canon(lat: Lattice, v):
    return lat.canonical(v)


def _full_value(lat: Lattice, fn: MonotoneFn, v):
    if fn.bound == "lb":
        return (v, POS_INF)
    if fn.bound == "ub":
        return (NEG_INF, v)
    return v


def _guards_hold(prog: LSProgram, regs: dict) -> bool:
    schema = prog.schema
    for g in prog.command.guards:
        if isinstance(g, Predicate):
            vals = [regs[f"rb{schema.index(r)}"] for r in g.read_set]
            if not g.test(*vals):
                return False
        elif not regs[f"rb{schema.index(g)}"]:
            return False
    return True


def _local_step(prog: LSProgram, ins: Instr, regs: dict) -> Optional[bool]:
    """Run one local instruction; returns False when the iteration ends."""
    lat = prog.schema.vars[prog.target].lattice
    if ins.op == "guard":
        return _guards_hold(prog, regs)
    if ins.op == "eval":
        n = len(prog.command.fn.read_set)
        regs["rf"] = _full_value(lat, prog.command.fn, prog.command.fn.eval(*[regs[f"ry{j}"] for j in range(n)]))
    elif ins.op == "join":
        regs["ox"] = regs["rf"] if prog.mutant == "overwrite" else lat.join(regs["rx"], regs["rf"])
    elif ins.op == "gt":
        ox, rx = _canon(lat, regs["ox"]), _canon(lat, regs["rx"])
        if prog.mutant == "no_gt":
            regs["bx"] = True
        elif prog.mutant == "overwrite":
            regs["bx"] = ox != rx
        else:
            regs["bx"] = lat.leq(rx, ox) and ox != rx
    elif ins.op == "branch":
        return bool(regs["bx"])
    return True


def _fresh_iteration_stores(prog: LSProgram, memory: tuple) -> bool:
    """Would one complete iteration on ``memory`` change it?"""
    regs: dict = {}
    for ins in prog.instrs:
        if ins.op == "load":
            regs[ins.reg] = memory[ins.var]
        elif ins.op == "store":
            lat = prog.schema.vars[ins.var].lattice
            return _canon(lat, regs["ox"]) != _canon(lat, memory[ins.var])
        elif _local_step(prog, ins, regs) is False:
            return False
    return False


@dataclass(frozen=True)
class _Thread:
    round: int
    done: Optional[frozenset]  # None while between iterations
    regs: tuple


def _advance_locals(prog: LSProgram, th: _Thread) -> _Thread:
    regs = dict(th.regs)
    done = set(th.done)
    progress = True
    while progress:
        progress = False
        for ins in prog.instrs:
            if ins.id in done or ins.shared or not prog.deps[ins.id] <= done:
                continue
            if _local_step(prog, ins, regs) is False:
                return _Thread(th.round, None, ())
            done.add(ins.id)
            progress = True
    return _Thread(th.round, frozenset(done), tuple(sorted(regs.items())))


def _enabled(prog: LSProgram, th: _Thread) -> list[Instr]:
    return [i for i in prog.instrs if i.shared and i.id not in th.done and prog.deps[i.id] <= th.done]


@dataclass
class Exploration:
    schema: Schema
    terminal: dict = field(default_factory=dict)      # memory -> state
    intermediate: dict = field(default_factory=dict)  # memory -> state
    truncated: int = 0
    truncated_example: object = None
    states: int = 0
    parents: dict = field(default_factory=dict)

    def trace(self, state) -> list[str]:
        out = []
        while state in self.parents and self.parents[state] is not None:
            state, move = self.parents[state]
            out.append(move)
        return out[::-1]

    def fmt(self, memory: tuple) -> str:
        return ", ".join(f"{v.name}={_fmt_value(m)}" for v, m in zip(self.schema.vars, memory))


def _fmt_value(v) -> str:
    def one(x):
        return "-inf" if x == NEG_INF else "inf" if x == POS_INF else str(x)

    if isinstance(v, tuple):
        return f"({one(v[0])},{one(v[1])})"
    if isinstance(v, bool):
        return str(v)
    return one(v)


def memory_of(store: Store) -> tuple:
    return tuple(store[i] for i in range(len(store.schema)))


def explore(programs: Sequence[LSProgram], s0: Store, max_rounds: int = 3,
            max_states: int = 500_000) -> Exploration:
    """Enumerate every interleaving of ``programs`` from ``s0``.

    A state is terminal once every thread sits between two iterations and
    one more iteration of any thread would leave memory unchanged.  Paths on
    which some thread runs out of its ``max_rounds`` iterations first are
    counted as truncated.
    """
    if not programs:
        raise ValueError("nothing to explore")
    schema = programs[0].schema
    lats = [v.lattice for v in schema.vars]
    mem0 = memory_of(s0)
    start = (mem0, tuple(_Thread(0, None, ()) for _ in programs))
    ex = Exploration(schema)
    ex.parents[start] = None
    stack = [start]
    seen = {start}
    while stack:
        state = stack.pop()
        ex.states += 1
        if ex.states > max_states:
            raise BoundExceeded(f"explored more than {max_states} states")
        memory, threads = state
        key = tuple(_canon(l, m) for l, m in zip(lats, memory))
        ex.intermediate.setdefault(key, state)
        if all(t.done is None for t in threads) and not any(
            _fresh_iteration_stores(p, memory) for p in programs
        ):
            ex.terminal.setdefault(key, state)
            continue
        successors = []
        for k, (prog, th) in enumerate(zip(programs, threads)):
            if th.done is None:
                if th.round < max_rounds:
                    nt = _advance_locals(prog, _Thread(th.round + 1, frozenset(), ()))
                    successors.append((memory, k, nt, f"T{k}: iteration {th.round + 1}"))
                continue
            for ins in _enabled(prog, th):
                regs = dict(th.regs)
                mem = memory
                if ins.op == "load":
                    regs[ins.reg] = memory[ins.var]
                    nt = _Thread(th.round, th.done | {ins.id}, tuple(sorted(regs.items())))
                    nt = _advance_locals(prog, nt)
                else:
                    mem = memory[:ins.var] + (regs["ox"],) + memory[ins.var + 1:]
                    nt = _Thread(th.round, None, ())
                desc = f"T{k}:{ins.line} {ins.text(schema)} -> {_fmt_value(mem[ins.var] if ins.op == 'store' else regs[ins.reg])}"
                successors.append((mem, k, nt, desc))
        if not successors:
            ex.truncated += 1
            if ex.truncated_example is None:
                ex.truncated_example = state
            continue
        for mem, k, nt, desc in successors:
            nxt = (mem, threads[:k] + (nt,) + threads[k + 1:])
            if nxt not in seen:
                seen.add(nxt)
                ex.parents[nxt] = (state, desc)
                stack.append(nxt)
    return ex


@dataclass
class TheoremReport:
    name: str
    fixpoint: tuple
    exploration: Exploration
    soundness: bool
    completeness: bool
    unique: bool
    messages: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.soundness and self.completeness and self.unique

    def format(self) -> str:
        ex = self.exploration
        lines = [
            f"[{self.name}] {'PASS' if self.passed else 'FAIL'}",
            f"  fixpoint: {ex.fmt(self.fixpoint)}",
            f"  states: {ex.states}  terminal stores: {len(ex.terminal)}  truncated paths: {ex.truncated}",
            f"  soundness: {'ok' if self.soundness else 'VIOLATED'}  completeness: {'ok' if self.completeness else 'VIOLATED'}"
            f"  uniqueness: {'ok' if self.unique else 'VIOLATED'}",
        ]
        lines += ["  " + m for m in self.messages]
        return "\n".join(lines)


def check_theorems(programs: Sequence[LSProgram], s0: Store, *, name: str = "program",
                   max_rounds: int = 3, max_states: int = 500_000,
                   raise_on_failure: bool = False) -> TheoremReport:
    """Compare every explored store with the sequential fixed point.

    Soundness: each reachable memory is below the fixed point.
    Completeness: quiescent memories exist and all equal the fixed point.
    """
    schema = programs[0].schema
    lats = [v.lattice for v in schema.vars]
    seq = run_sequential([p.command for p in programs], s0.copy())
    fix = tuple(_canon(l, m) for l, m in zip(lats, memory_of(seq.store)))
    ex = explore(programs, s0, max_rounds=max_rounds, max_states=max_states)
    msgs = []

    def below(mem):
        return all(l.leq(m, f) for l, m, f in zip(lats, mem, fix))

    sound = True
    for mem, state in ex.intermediate.items():
        if not below(mem):
            sound = False
            msgs.append(f"store {ex.fmt(mem)} exceeds the fixed point; trace: " + " ; ".join(ex.trace(state)))
            break
    complete = bool(ex.terminal) and all(mem == fix for mem in ex.terminal)
    if not ex.terminal:
        msg = "no interleaving reaches a quiescent store"
        if ex.truncated_example is not None:
            msg += "; truncated trace: " + " ; ".join(ex.trace(ex.truncated_example))
        msgs.append(msg)
    for mem, state in ex.terminal.items():
        if mem != fix:
            msgs.append(f"quiescent store {ex.fmt(mem)} differs from the fixed point; trace: " + " ; ".join(ex.trace(state)))
            break
    unique = len(ex.terminal) == 1
    report = TheoremReport(name, fix, ex, sound, complete, unique, msgs)
    if raise_on_failure and not report.passed:
        raise TheoremViolation(report.format())
    return report


# -- built-in micro programs ----------------------------------------------------

@dataclass
class MicroProgram:
    name: str
    description: str
    commands: list
    store: Store

    def compile(self, *, strict: bool = False, mutant: Optional[str] = None) -> list[LSProgram]:
        return [compile_ls(gc, self.store.schema, strict=strict, mutant=mutant) for gc in self.commands]

    def check(self, *, strict: bool = False, mutant: Optional[str] = None, **kw) -> TheoremReport:
        label = self.name + (f" [{mutant}]" if mutant else "") + (" [strict]" if strict else "")
        return check_theorems(self.compile(strict=strict, mutant=mutant), self.store, name=label, **kw)


def _micro(name, description, decls, procs, init) -> MicroProgram:
    p = Par(procs)
    for n, lat in reversed(decls):
        p = Local(n, lat, p)
    commands, schema = lower(p)
    return MicroProgram(name, description, commands, Store.from_values(schema, init))


def _max1(v):
    return max(v, 1)


def builtin_programs() -> dict[str, MicroProgram]:
    progs = [
        _micro("single", "{} => x <- x join 5 from x=0",
               [("x", ZINC)], [Tell("x", const(5))], {"x": 0}),
        _micro("mutual", "x <- x join max(y,1) || y <- y join max(x,1) from x=y=0",
               [("x", ZINC), ("y", ZINC)],
               [Tell("x", MonotoneFn(("y",), _max1, label="max(y,1)")),
                Tell("y", MonotoneFn(("x",), _max1, label="max(x,1)"))],
               {"x": 0, "y": 0}),
        _micro("stable", "commands already at their fixed point (one guard never true)",
               [("x", ZINC), ("b", BINC)],
               [Tell("x", const(3)), Ask("b", Tell("x", const(7)))],
               {"x": 5}),
        _micro("guarded", "x <- 1 || b <- (x >= 1) || {b} => y <- x",
               [("x", ZINC), ("y", ZINC), ("b", BINC)],
               [Tell("x", const(1)),
                Tell("b", MonotoneFn(("x",), lambda x: x >= 1, label="x>=1")),
                Ask("b", Tell("y", MonotoneFn(("x",), lambda x: x, label="x")))],
               {"x": 0, "y": 0}),
        _micro("shared", "two writers on one cell: x <- x join 1 || x <- x join 2",
               [("x", ZINC)], [Tell("x", const(1)), Tell("x", const(2))], {"x": 0}),
        _micro("interval", "two bounds of one interval: x <- (2, top) || x <- (bot, 7)",
               [("x", INTERVAL)], [Tell("x", const(2, bound="lb")), Tell("x", const(7, bound="ub"))],
               {"x": (0, 10)}),
    ]
    return {p.name: p for p in progs}


def run_demo(max_rounds: int = 3) -> tuple[bool, list[TheoremReport]]:
    """Check every built-in program, strict and relaxed, plus the mutants.

    Returns whether every outcome matched its expectation: faithful
    compilations and the ``no_gt`` mutant pass, the ``overwrite`` mutant
    fails on the two-writer programs.
    """
    reports = []
    ok = True
    for prog in builtin_programs().values():
        for strict in (False, True):
            r = prog.check(strict=strict, max_rounds=max_rounds)
            reports.append(r)
            ok &= r.passed
        r = prog.check(mutant="no_gt", max_rounds=max_rounds)
        reports.append(r)
        ok &= r.passed
    for name in ("shared", "interval"):
        r = builtin_programs()[name].check(mutant="overwrite", max_rounds=max_rounds)
        reports.append(r)
        ok &= not r.passed
    return ok, reports
