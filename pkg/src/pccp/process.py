"""PCCP processes, guarded normal form and compile-time expansions.

Processes are immutable trees built from ``Tell``, ``Ask``, ``Local``,
``Par`` and ``Seq`` (plus the ``ForAll`` generator, which only exists
before expansion).  Variables are referred to by name or by index; after
``erase_locals`` every reference is an index into the store schema.
"""
from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

from .lattice import BINC, Lattice, Schema, VarRef, sat_add, sat_mul


class ModelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MonotoneFn:
    """Monotone function of the values of ``read_set``.

    ``eval`` receives one lattice value per entry of ``read_set``.  When
    ``bound`` is ``"lb"`` or ``"ub"`` the function only produces that bound of
    an interval target (the other bound is bottom).  ``kernel``, if given,
    maps the cell offsets of ``read_set`` to a fast evaluator over raw cells.
    """

    read_set: tuple
    eval: Callable
    bound: Optional[str] = None
    kernel: Optional[Callable] = None
    label: str = ""

    def __call__(self, *values):
        return self.eval(*values)

    def __repr__(self) -> str:
        return self.label or f"fn{list(self.read_set)}"


@dataclass(frozen=True, eq=False)
class Predicate:
    """Inline ask condition: a monotone map from ``read_set`` values to BInc."""

    read_set: tuple
    test: Callable
    kernel: Optional[Callable] = None
    label: str = ""

    def __repr__(self) -> str:
        return self.label or f"pred{list(self.read_set)}"


Guard = Union[VarRef, Predicate]


class Process:
    __slots__ = ()


@dataclass(frozen=True, eq=False)
class Tell(Process):
    target: VarRef
    fn: MonotoneFn

    def __repr__(self) -> str:
        return f"Tell({self.target!r}, {self.fn!r})"


@dataclass(frozen=True, eq=False)
class Ask(Process):
    guard: Guard
    body: Process


@dataclass(frozen=True, eq=False)
class Local(Process):
    name: str
    lattice: Lattice
    body: Process


@dataclass(frozen=True, eq=False)
class Par(Process):
    procs: tuple = ()

    def __init__(self, procs: Iterable[Process] = ()):
        object.__setattr__(self, "procs", tuple(procs))


@dataclass(frozen=True, eq=False)
class Seq(Process):
    procs: tuple = ()

    def __init__(self, procs: Iterable[Process] = ()):
        object.__setattr__(self, "procs", tuple(procs))


@dataclass(frozen=True, eq=False)
class ForAll(Process):
    """Compile-time generator: ``body(i)`` for every ``i`` in ``lo..hi`` inclusive."""

    lo: int
    hi: int
    body: Callable[[int], Process]


@dataclass(frozen=True)
class GuardedCommand:
    """``{guards} => target <- fn(read_set)``; nested asks around one tell."""

    guards: tuple
    target: VarRef
    fn: MonotoneFn = field(hash=False)

    def __hash__(self):
        return hash((self.guards, self.target, id(self.fn)))

    def __eq__(self, other):
        return (
            isinstance(other, GuardedCommand)
            and self.guards == other.guards
            and self.target == other.target
            and self.fn is other.fn
        )

    def as_process(self) -> Process:
        p: Process = Tell(self.target, self.fn)
        for g in reversed(self.guards):
            p = Ask(g, p)
        return p

    def __repr__(self) -> str:
        gs = ", ".join(repr(g) for g in self.guards)
        return f"{{{gs}}} => {self.target!r} <- {self.fn!r}"


# -- function helpers --------------------------------------------------------

def const(value, bound: Optional[str] = None) -> MonotoneFn:
    return MonotoneFn((), lambda: value, bound=bound, kernel=lambda slots: (lambda c: value), label=f"const{value!r}")


def linear_sum(terms: Sequence[tuple[int, VarRef]], label: str = "") -> MonotoneFn:
    """``sum(coef * floor(x))`` over interval variables, as a ZInc value."""
    coefs = tuple(k for k, _ in terms)
    if any(k < 0 for k in coefs):
        raise ModelError("linear_sum needs nonnegative coefficients")

    def ev(*itvs):
        total = 0
        for k, itv in zip(coefs, itvs):
            total = sat_add(total, sat_mul(k, itv[0]))
        return total

    def kernel(slots):
        pairs = tuple(zip(coefs, slots))

        def run(c):
            total = 0
            for k, s in pairs:
                total = sat_add(total, sat_mul(k, c[s]))
            return total

        return run

    return MonotoneFn(tuple(r for _, r in terms), ev, kernel=kernel, label=label or "sum")


# -- transformations ---------------------------------------------------------

def expand_generators(p: Process) -> Process:
    """Unfold every ``ForAll`` into a parallel composition."""
    if isinstance(p, ForAll):
        return Par(expand_generators(p.body(i)) for i in range(p.lo, p.hi + 1))
    if isinstance(p, Par):
        return Par(expand_generators(q) for q in p.procs)
    if isinstance(p, Seq):
        return Seq(expand_generators(q) for q in p.procs)
    if isinstance(p, Ask):
        return Ask(p.guard, expand_generators(p.body))
    if isinstance(p, Local):
        return Local(p.name, p.lattice, expand_generators(p.body))
    return p


def _rename_fn(fn, rename):
    return dataclasses.replace(fn, read_set=tuple(rename(r) for r in fn.read_set))


def _rename_guard(g, rename):
    if isinstance(g, Predicate):
        return _rename_fn(g, rename)
    return rename(g)


def erase_locals(p: Process, schema: Optional[Schema] = None) -> tuple[Process, Schema]:
    """Move every ``Local`` into the schema and rewrite references as indices.

    Cells are numbered depth-first, left to right, after any variables
    already present in ``schema``.
    """
    schema = Schema(list(schema)) if schema is not None else Schema()

    def declare(q):
        if isinstance(q, Local):
            if q.name in schema:
                raise ModelError(f"variable {q.name!r} declared twice")
            schema.add(q.name, q.lattice)
            declare(q.body)
        elif isinstance(q, (Par, Seq)):
            for r in q.procs:
                declare(r)
        elif isinstance(q, Ask):
            declare(q.body)
        elif isinstance(q, ForAll):
            raise ModelError("expand generators before erasing locals")

    declare(p)

    def rename(ref):
        if isinstance(ref, str) or isinstance(ref, int):
            try:
                return schema.index(ref)
            except Exception as e:
                raise ModelError(str(e)) from None
        raise ModelError(f"bad variable reference {ref!r}")

    def rewrite(q):
        if isinstance(q, Local):
            return rewrite(q.body)
        if isinstance(q, Par):
            return Par(rewrite(r) for r in q.procs)
        if isinstance(q, Seq):
            return Seq(rewrite(r) for r in q.procs)
        if isinstance(q, Ask):
            return Ask(_rename_guard(q.guard, rename), rewrite(q.body))
        if isinstance(q, Tell):
            return Tell(rename(q.target), _rename_fn(q.fn, rename))
        raise ModelError(f"unexpected process node {q!r}")

    return rewrite(p), schema


def seq_to_par(p: Process) -> Process:
    if isinstance(p, (Par, Seq)):
        return Par(seq_to_par(q) for q in p.procs)
    if isinstance(p, Ask):
        return Ask(p.guard, seq_to_par(p.body))
    if isinstance(p, Local):
        return Local(p.name, p.lattice, seq_to_par(p.body))
    return p


def par_to_seq(p: Process) -> Process:
    if isinstance(p, (Par, Seq)):
        return Seq(par_to_seq(q) for q in p.procs)
    if isinstance(p, Ask):
        return Ask(p.guard, par_to_seq(p.body))
    if isinstance(p, Local):
        return Local(p.name, p.lattice, par_to_seq(p.body))
    return p


def gnf(acc_guards, p: Process) -> list[GuardedCommand]:
    """Lift every tell to top level, accumulating the guards of enclosing asks.

    ``Seq`` is flattened like ``Par``: both have the same fixed point, and the
    resulting list keeps program order so a sequential sweep follows it.
    """
    out: dict[GuardedCommand, None] = {}
    _gnf(tuple(acc_guards), p, out)
    return list(out)


def _gnf(acc: tuple, p: Process, out: dict) -> None:
    if isinstance(p, Tell):
        out[GuardedCommand(acc, p.target, p.fn)] = None
    elif isinstance(p, Ask):
        g = p.guard
        _gnf(acc if g in acc else acc + (g,), p.body, out)
    elif isinstance(p, (Par, Seq)):
        for q in p.procs:
            _gnf(acc, q, out)
    elif isinstance(p, Local):
        raise ModelError("gnf expects a process without local declarations")
    elif isinstance(p, ForAll):
        raise ModelError("gnf expects expanded generators")
    else:
        raise ModelError(f"unknown process node {p!r}")


_fresh = itertools.count()


def materialize_guards(p: Process) -> Process:
    """Desugar ``if e then P`` into ``exists b:BInc, b <- e || if b then P``."""
    if isinstance(p, Ask) and isinstance(p.guard, Predicate):
        name = f"_guard{next(_fresh)}"
        pred = p.guard
        fn = MonotoneFn(pred.read_set, lambda *vals, t=pred.test: bool(t(*vals)), label=f"{pred!r}")
        return Local(name, BINC, Par([Tell(name, fn), Ask(name, materialize_guards(p.body))]))
    if isinstance(p, Ask):
        return Ask(p.guard, materialize_guards(p.body))
    if isinstance(p, Par):
        return Par(materialize_guards(q) for q in p.procs)
    if isinstance(p, Seq):
        return Seq(materialize_guards(q) for q in p.procs)
    if isinstance(p, Local):
        return Local(p.name, p.lattice, materialize_guards(p.body))
    return p


def lower(p: Process, schema: Optional[Schema] = None) -> tuple[list[GuardedCommand], Schema]:
    """Full pipeline: expand generators, erase locals, then guarded normal form."""
    body, schema = erase_locals(expand_generators(p), schema)
    return gnf((), body), schema
