"""Constraints, their compilation into PCCP processes, and entailment.

In constraints a ``str`` operand names an interval variable and an ``int``
operand is a constant.  ``compile`` returns the process of a propagator;
processes may declare auxiliary locals (the partial sum of a linear
constraint), which ``erase_locals`` later turns into cells.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Union

from .lattice import INTERVAL, NEG_INF, POS_INF, ZINC, Lattice, Schema, Store, sat_add, sat_mul, sat_sub, saturate
from .process import (
    Ask,
    GuardedCommand,
    Local,
    ModelError,
    MonotoneFn,
    Par,
    Predicate,
    Process,
    Tell,
    const,
    linear_sum,
    lower,
)

Operand = Union[str, int]


class CompileError(ModelError):
    pass


class Constraint:
    __slots__ = ()

    def __and__(self, other):
        return And(self, other)

    def __invert__(self):
        return Not(self)


@dataclass(frozen=True)
class Leq(Constraint):
    """``x + offset <= y``."""

    x: Operand
    y: Operand
    offset: int = 0


def Lt(x: Operand, y: Operand, offset: int = 0) -> Leq:
    """``x + offset < y``, i.e. ``x + offset + 1 <= y``."""
    return Leq(x, y, offset + 1)


@dataclass(frozen=True)
class LinearLeq(Constraint):
    """``sum(coef * var) <= c`` with nonnegative coefficients."""

    terms: tuple
    c: int

    def __init__(self, terms, c: int):
        object.__setattr__(self, "terms", tuple((int(k), v) for k, v in terms))
        object.__setattr__(self, "c", c)


@dataclass(frozen=True)
class And(Constraint):
    left: Constraint
    right: Constraint


@dataclass(frozen=True)
class Or(Constraint):
    left: Constraint
    right: Constraint


@dataclass(frozen=True)
class Iff(Constraint):
    left: Constraint
    right: Constraint


@dataclass(frozen=True)
class Not(Constraint):
    inner: Constraint


@dataclass(frozen=True)
class BoolIs(Constraint):
    """A 0/1 interval variable holds ``value``."""

    b: str
    value: bool = True


def variables(phi: Constraint) -> tuple:
    out: dict = {}

    def walk(f):
        if isinstance(f, Leq):
            for o in (f.x, f.y):
                if isinstance(o, str):
                    out[o] = None
        elif isinstance(f, LinearLeq):
            for _, v in f.terms:
                out[v] = None
        elif isinstance(f, (And, Or, Iff)):
            walk(f.left)
            walk(f.right)
        elif isinstance(f, Not):
            walk(f.inner)
        elif isinstance(f, BoolIs):
            out[f.b] = None
        else:
            raise CompileError(f"unsupported constraint node {f!r}")

    walk(phi)
    return tuple(out)


def negate(phi: Constraint) -> Constraint:
    """Push a negation one level inward."""
    if isinstance(phi, Leq):
        return Leq(phi.y, phi.x, 1 - phi.offset)
    if isinstance(phi, And):
        return Or(negate(phi.left), negate(phi.right))
    if isinstance(phi, Or):
        return And(negate(phi.left), negate(phi.right))
    if isinstance(phi, Not):
        return phi.inner
    if isinstance(phi, BoolIs):
        return BoolIs(phi.b, not phi.value)
    raise CompileError(f"cannot negate {phi!r}")


# -- entailment ---------------------------------------------------------------
# Both functions take ``lo``/``hi`` accessors so the same definition serves
# stores, value tuples and raw cells.

def _bound(o, get):
    return o if isinstance(o, int) else get(o)


def _entailed(phi, lo, hi) -> bool:
    if isinstance(phi, Leq):
        return sat_add(_bound(phi.x, hi), phi.offset) <= _bound(phi.y, lo)
    if isinstance(phi, LinearLeq):
        total = 0
        for k, v in phi.terms:
            total = sat_add(total, sat_mul(k, hi(v)))
        return total <= phi.c
    if isinstance(phi, And):
        return _entailed(phi.left, lo, hi) and _entailed(phi.right, lo, hi)
    if isinstance(phi, Or):
        return _entailed(phi.left, lo, hi) or _entailed(phi.right, lo, hi)
    if isinstance(phi, Not):
        return _entailed_not(phi.inner, lo, hi)
    if isinstance(phi, BoolIs):
        return lo(phi.b) >= 1 if phi.value else hi(phi.b) <= 0
    raise CompileError(f"no entailment test for {phi!r}")


def _entailed_not(phi, lo, hi) -> bool:
    if isinstance(phi, Leq):
        return sat_add(_bound(phi.x, lo), phi.offset) > _bound(phi.y, hi)
    if isinstance(phi, LinearLeq):
        total = 0
        for k, v in phi.terms:
            total = sat_add(total, sat_mul(k, lo(v)))
        return total > phi.c
    if isinstance(phi, And):
        return _entailed_not(phi.left, lo, hi) or _entailed_not(phi.right, lo, hi)
    if isinstance(phi, Or):
        return _entailed_not(phi.left, lo, hi) and _entailed_not(phi.right, lo, hi)
    if isinstance(phi, Not):
        return _entailed(phi.inner, lo, hi)
    if isinstance(phi, BoolIs):
        return hi(phi.b) <= 0 if phi.value else lo(phi.b) >= 1
    raise CompileError(f"no entailment test for the negation of {phi!r}")


def entailed(phi: Constraint, s: Store) -> bool:
    """True iff ``phi`` holds for every assignment inside the bounds of ``s``."""
    return _entailed(phi, lambda v: s[v][0], lambda v: s[v][1])


def entailed_not(phi: Constraint, s: Store) -> bool:
    """True iff no assignment inside the bounds of ``s`` satisfies ``phi``."""
    return _entailed_not(phi, lambda v: s[v][0], lambda v: s[v][1])


def _plus(v: int, k: int) -> int:
    if v == NEG_INF or v == POS_INF:
        return v
    v += k
    return v if NEG_INF < v < POS_INF else saturate(v)


def _cell_test(phi, negative: bool, where: dict):
    """Closure over raw cells deciding ``entailed`` (or ``entailed_not``) of ``phi``.

    ``where`` maps each variable to the cell of its lower bound.
    """
    if isinstance(phi, Not):
        return _cell_test(phi.inner, not negative, where)
    if isinstance(phi, (And, Or)):
        left = _cell_test(phi.left, negative, where)
        right = _cell_test(phi.right, negative, where)
        if isinstance(phi, And) != negative:
            return lambda c: left(c) and right(c)
        return lambda c: left(c) or right(c)
    if isinstance(phi, Leq):
        x, y, k = phi.x, phi.y, phi.offset
        # entailed: ceil(x) + k <= floor(y); entailed_not: floor(x) + k > ceil(y)
        xs = None if isinstance(x, int) else where[x] + (0 if negative else 1)
        ys = None if isinstance(y, int) else where[y] + (1 if negative else 0)
        if xs is not None and ys is not None:
            if negative:
                return lambda c: _plus(c[xs], k) > c[ys]
            return lambda c: _plus(c[xs], k) <= c[ys]
        if xs is None and ys is None:
            v = (x + k <= y) != negative
            return lambda c: v
        if xs is None:
            if negative:
                return lambda c: x + k > c[ys]
            return lambda c: x + k <= c[ys]
        if negative:
            return lambda c: _plus(c[xs], k) > y
        return lambda c: _plus(c[xs], k) <= y
    if isinstance(phi, BoolIs):
        lo = where[phi.b]
        if phi.value != negative:
            return lambda c: c[lo] >= 1
        return lambda c: c[lo + 1] <= 0
    if isinstance(phi, LinearLeq):
        pairs = tuple((k, where[v] + (0 if negative else 1)) for k, v in phi.terms)
        bound = phi.c

        def total(c):
            t = 0
            for k, s in pairs:
                t = sat_add(t, sat_mul(k, c[s]))
            return t

        if negative:
            return lambda c: total(c) > bound
        return lambda c: total(c) <= bound
    raise CompileError(f"no entailment test for {phi!r}")


def entailment_guard(phi: Constraint, negative: bool = False) -> Predicate:
    """``entailed(phi)`` (or of its negation) as an inline ask condition."""
    vs = variables(phi)
    test = _entailed_not if negative else _entailed

    def on_values(*itvs):
        m = dict(zip(vs, itvs))
        return test(phi, lambda v: m[v][0], lambda v: m[v][1])

    def kernel(slots):
        return _cell_test(phi, negative, dict(zip(vs, slots)))

    label = ("entailed_not" if negative else "entailed") + f"({phi!r})"
    return Predicate(vs, on_values, kernel=kernel, label=label)


# -- compilation --------------------------------------------------------------

@dataclass
class Propagator:
    constraint: Constraint
    process: Process
    reads: frozenset
    writes: frozenset

    def commands(self, schema: Optional[Schema] = None) -> tuple[list[GuardedCommand], Schema]:
        return lower(self.process, schema)


_aux = itertools.count()


def _lb_fn(src: Operand, k: int, label: str) -> MonotoneFn:
    """lower bound ``floor(src) + k``."""
    if isinstance(src, int):
        return const(src + k, bound="lb")
    return MonotoneFn(
        (src,),
        lambda itv: sat_add(itv[0], k),
        bound="lb",
        kernel=lambda slots: (lambda c, s=slots[0]: _plus(c[s], k)),
        label=label,
    )


def _ub_fn(src: Operand, k: int, label: str) -> MonotoneFn:
    """upper bound ``ceil(src) + k``."""
    if isinstance(src, int):
        return const(src + k, bound="ub")
    return MonotoneFn(
        (src,),
        lambda itv: sat_add(itv[1], k),
        bound="ub",
        kernel=lambda slots: (lambda c, s=slots[0] + 1: _plus(c[s], k)),
        label=label,
    )


def _ub_from_lb(c: int, src: str, label: str) -> MonotoneFn:
    """upper bound ``c - floor(src)``."""
    return MonotoneFn(
        (src,),
        lambda itv: sat_sub(c, itv[0]),
        bound="ub",
        kernel=lambda slots: (lambda cells, s=slots[0]: sat_sub(c, cells[s])),
        label=label,
    )


def _residual_ub(terms, i: int, c: int, label: str) -> MonotoneFn:
    """``floor((c - sum_{l != i} a_l * floor(x_l)) / a_i)``."""
    ai = terms[i][0]
    others = [t for l, t in enumerate(terms) if l != i]
    coefs = tuple(k for k, _ in others)

    def finish(total):
        if total == NEG_INF:
            return POS_INF
        if total == POS_INF:
            return NEG_INF
        return (c - total) // ai

    def ev(*itvs):
        total = 0
        for k, itv in zip(coefs, itvs):
            total = sat_add(total, sat_mul(k, itv[0]))
        return finish(total)

    def kernel(slots):
        pairs = tuple(zip(coefs, slots))

        def run(cells):
            total = 0
            for k, s in pairs:
                v = cells[s]
                if v == NEG_INF:
                    return POS_INF
                total += k * v
            return saturate((c - total) // ai)

        return run

    return MonotoneFn(tuple(v for _, v in others), ev, bound="ub", kernel=kernel, label=label)


def compile(phi: Constraint, aux: Optional[str] = None) -> Propagator:
    """Translate a constraint into the process of its propagator."""
    proc = _compile(phi, aux)
    writes: dict = {}

    def collect(p):
        if isinstance(p, Tell):
            writes[p.target] = None
        elif isinstance(p, (Par,)):
            for q in p.procs:
                collect(q)
        elif isinstance(p, (Ask, Local)):
            collect(p.body)

    collect(proc)
    return Propagator(phi, proc, frozenset(variables(phi)), frozenset(writes))


def _compile(phi: Constraint, aux: Optional[str]) -> Process:
    if isinstance(phi, Leq):
        x, y, k = phi.x, phi.y, phi.offset
        if isinstance(x, int) and isinstance(y, int):
            if x + k <= y:
                return Par()
            raise CompileError(f"constant constraint {phi!r} is false")
        procs = []
        if isinstance(x, str):
            procs.append(Tell(x, _ub_fn(y, -k, f"ceil({y})-{k}")))
        if isinstance(y, str):
            procs.append(Tell(y, _lb_fn(x, k, f"floor({x})+{k}")))
        return Par(procs)
    if isinstance(phi, LinearLeq):
        terms = phi.terms
        if any(k < 0 for k, _ in terms):
            raise CompileError(f"negative coefficient in {phi!r}")
        if any(not isinstance(v, str) for _, v in terms):
            raise CompileError(f"linear terms must be variables in {phi!r}")
        if len(terms) == 2 and terms[0][0] == terms[1][0] == 1:
            (_, x), (_, y) = terms
            return Par([
                Tell(x, _ub_from_lb(phi.c, y, f"{phi.c}-floor({y})")),
                Tell(y, _ub_from_lb(phi.c, x, f"{phi.c}-floor({x})")),
            ])
        name = aux or f"_lsum{next(_aux)}"
        procs: list[Process] = [Tell(name, linear_sum(terms, label=f"sum{list(terms)}"))]
        for i, (k, v) in enumerate(terms):
            if k > 0:
                procs.append(Tell(v, _residual_ub(terms, i, phi.c, f"residual[{v}]")))
        return Local(name, ZINC, Par(procs))
    if isinstance(phi, And):
        return Par([_compile(phi.left, _sub(aux, "l")), _compile(phi.right, _sub(aux, "r"))])
    if isinstance(phi, Or):
        return Par([
            Ask(entailment_guard(phi.left, negative=True), _compile(phi.right, _sub(aux, "r"))),
            Ask(entailment_guard(phi.right, negative=True), _compile(phi.left, _sub(aux, "l"))),
        ])
    if isinstance(phi, Not):
        return _compile(negate(phi.inner), aux)
    if isinstance(phi, BoolIs):
        return Tell(phi.b, const((1, 1) if phi.value else (0, 0)))
    if isinstance(phi, Iff):
        f, g = phi.left, phi.right
        return Par([
            Ask(entailment_guard(f), _compile(g, _sub(aux, "a"))),
            Ask(entailment_guard(g), _compile(f, _sub(aux, "b"))),
            Ask(entailment_guard(f, negative=True), _compile(negate(g), _sub(aux, "c"))),
            Ask(entailment_guard(g, negative=True), _compile(negate(f), _sub(aux, "d"))),
        ])
    raise CompileError(f"unsupported constraint shape: {phi!r}")


def _sub(aux, tag):
    return None if aux is None else f"{aux}.{tag}"


def compile_reified(b: str, phi: Constraint) -> Propagator:
    """Propagator for ``b <=> phi`` where ``b`` is a 0/1 interval variable."""
    try:
        neg = negate(phi)
        variables(neg)
    except CompileError as e:
        raise CompileError(f"cannot reify {phi!r}: {e}") from None
    is_true, is_false = BoolIs(b, True), BoolIs(b, False)
    proc = Par([
        Ask(entailment_guard(phi), Tell(b, const((1, 1)))),
        Ask(entailment_guard(phi, negative=True), Tell(b, const((0, 0)))),
        Ask(entailment_guard(is_true), _compile(phi, None)),
        Ask(entailment_guard(is_false), _compile(neg, None)),
    ])
    return Propagator(Iff(is_true, phi), proc, frozenset(variables(phi)) | {b}, frozenset((b,) + variables(phi)))


class Model:
    """Variables plus posted propagators, lowered together into one program."""

    def __init__(self):
        self.decls: list[tuple[str, Lattice]] = []
        self.procs: list[Process] = []
        self.propagators: list[Propagator] = []
        self._aux = itertools.count()

    def var(self, name: str, lattice: Lattice = INTERVAL, init=None) -> str:
        self.decls.append((name, lattice))
        if init is not None:
            self.procs.append(Tell(name, const(init)))
        return name

    def post(self, phi: Constraint) -> Propagator:
        p = compile(phi, aux=f"_aux{next(self._aux)}")
        self.propagators.append(p)
        self.procs.append(p.process)
        return p

    def post_reified(self, b: str, phi: Constraint) -> Propagator:
        p = compile_reified(b, phi)
        self.propagators.append(p)
        self.procs.append(p.process)
        return p

    def add(self, proc: Process) -> None:
        self.procs.append(proc)

    def process(self) -> Process:
        p: Process = Par(self.procs)
        for name, lat in reversed(self.decls):
            p = Local(name, lat, p)
        return p

    def build(self) -> tuple[list[GuardedCommand], Store]:
        commands, schema = lower(self.process())
        return commands, Store(schema)
