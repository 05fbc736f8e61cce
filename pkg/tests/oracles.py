"""Independent reference implementations used by the tests.

The oracles never touch lattice cells: constraints are evaluated on plain
integers and search is naive enumeration.  The last helper is a checker for
extensiveness and monotonicity of one propagation round.
"""
from __future__ import annotations

import random
from dataclasses import dataclass

from pccp.engine import apply_once
from pccp.lattice import INTERVAL, Store
from pccp.propagation import And, BoolIs, Iff, Leq, LinearLeq, Model, Not, Or


def _val(o, a):
    return o if isinstance(o, int) else a[o]


def holds(phi, a: dict) -> bool:
    """Truth of a constraint under a total assignment of integers."""
    if isinstance(phi, Leq):
        return _val(phi.x, a) + phi.offset <= _val(phi.y, a)
    if isinstance(phi, LinearLeq):
        return sum(k * a[v] for k, v in phi.terms) <= phi.c
    if isinstance(phi, And):
        return holds(phi.left, a) and holds(phi.right, a)
    if isinstance(phi, Or):
        return holds(phi.left, a) or holds(phi.right, a)
    if isinstance(phi, Iff):
        return holds(phi.left, a) == holds(phi.right, a)
    if isinstance(phi, Not):
        return not holds(phi.inner, a)
    if isinstance(phi, BoolIs):
        return a[phi.b] == (1 if phi.value else 0)
    raise TypeError(phi)


def _names(phi) -> set:
    if isinstance(phi, Leq):
        return {o for o in (phi.x, phi.y) if isinstance(o, str)}
    if isinstance(phi, LinearLeq):
        return {v for _, v in phi.terms}
    if isinstance(phi, (And, Or, Iff)):
        return _names(phi.left) | _names(phi.right)
    if isinstance(phi, Not):
        return _names(phi.inner)
    if isinstance(phi, BoolIs):
        return {phi.b}
    raise TypeError(phi)


@dataclass
class MicroCSP:
    domains: dict          # name -> (lo, hi)
    constraints: list      # plain constraints
    reified: list          # (b, phi) pairs meaning b <-> phi

    def model(self) -> Model:
        m = Model()
        for name, dom in self.domains.items():
            m.var(name, init=dom)
        for phi in self.constraints:
            m.post(phi)
        for b, phi in self.reified:
            m.post_reified(b, phi)
        return m

    def all_constraints(self) -> list:
        return self.constraints + [Iff(BoolIs(b), phi) for b, phi in self.reified]

    def solutions(self):
        """Every satisfying total assignment, by backtracking enumeration."""
        names = list(self.domains)
        cons = [(phi, _names(phi)) for phi in self.all_constraints()]
        ready = [[] for _ in names]
        for phi, vs in cons:
            last = max(names.index(v) for v in vs) if vs else 0
            ready[last].append(phi)
        a: dict = {}

        def rec(k):
            if k == len(names):
                yield dict(a)
                return
            lo, hi = self.domains[names[k]]
            for v in range(lo, hi + 1):
                a[names[k]] = v
                if all(holds(phi, a) for phi in ready[k]):
                    yield from rec(k + 1)
            a.pop(names[k], None)

        yield from rec(0)


def _leq(rng, names):
    x, y = rng.sample(names, 2) if len(names) > 1 else (names[0], rng.randint(0, 8))
    if rng.random() < 0.2:
        y = rng.randint(0, 8)
    return Leq(x, y, rng.randint(-3, 3))


def random_csp(rng: random.Random, max_vars: int = 5, max_constraints: int = 6) -> MicroCSP:
    n = rng.randint(1, max_vars)
    names = [f"x{i}" for i in range(n)]
    domains = {}
    for v in names:
        lo = rng.randint(0, 8)
        domains[v] = (lo, rng.randint(lo, 8))
    bools = []
    constraints, reified = [], []
    for _ in range(rng.randint(1, max_constraints)):
        kind = rng.random()
        if kind < 0.35:
            constraints.append(_leq(rng, names))
        elif kind < 0.55:
            k = rng.randint(1, min(3, n))
            terms = [(rng.randint(0, 3), v) for v in rng.sample(names, k)]
            constraints.append(LinearLeq(terms, rng.randint(0, 16)))
        elif kind < 0.65:
            constraints.append(Or(_leq(rng, names), _leq(rng, names)))
        elif kind < 0.72:
            constraints.append(And(_leq(rng, names), _leq(rng, names)))
        elif kind < 0.78:
            constraints.append(Not(_leq(rng, names)))
        elif len(names) + len(bools) < max_vars + 2:
            b = f"b{len(bools)}"
            bools.append(b)
            domains[b] = (0, 1)
            phi = _leq(rng, names) if rng.random() < 0.6 else And(_leq(rng, names), _leq(rng, names))
            reified.append((b, phi))
    return MicroCSP(domains, constraints, reified)


def rcpsp_optimum(inst):
    """Minimum makespan by enumerating start times, or None when infeasible.

    Jobs are placed in topological order.  A zero-duration job never uses a
    resource, so placing it as early as its predecessors allow dominates
    every later placement; positive-duration jobs try every start in
    ``[0, h - d]``.  Branches whose partial makespan already reaches the
    best one are cut.
    """
    n = inst.n_jobs
    d = inst.durations
    h = inst.horizon
    preds = [[] for _ in range(n)]
    indeg = [0] * n
    succ = [[] for _ in range(n)]
    for i, j in inst.precedences:
        preds[j].append(i)
        succ[i].append(j)
        indeg[j] += 1
    order = []
    todo = [i for i in range(n) if indeg[i] == 0]
    while todo:
        i = todo.pop(0)
        order.append(i)
        for j in succ[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                todo.append(j)
    starts = [None] * n
    best = [None]

    def fits(i):
        for k, cap in enumerate(inst.capacities):
            for t in range(starts[i], starts[i] + d[i]):
                load = sum(inst.usages[j][k] for j in range(n)
                           if starts[j] is not None and starts[j] <= t < starts[j] + d[j])
                if load > cap:
                    return False
        return True

    def rec(k, span):
        if best[0] is not None and span >= best[0]:
            return
        if k == n:
            best[0] = span
            return
        i = order[k]
        earliest = max((starts[p] + d[p] for p in preds[i]), default=0)
        options = [earliest] if d[i] == 0 else range(earliest, h - d[i] + 1)
        for t in options:
            starts[i] = t
            if fits(i):
                rec(k + 1, max(span, t + d[i]))
            starts[i] = None

    rec(0, 0)
    return best[0]


def _random_box(rng, names):
    out = {}
    for n in names:
        lo = rng.randint(0, 8)
        out[n] = (lo, rng.randint(lo - 1, 8))
    return out


def _narrow(rng, box):
    out = {}
    for n, (lo, hi) in box.items():
        out[n] = (lo + rng.randint(0, 2), hi - rng.randint(0, 2))
    return out


def check_extensive_monotone(rng, trials):
    failures = 0
    for _ in range(trials):
        csp = random_csp(rng)
        cmds, base = csp.model().build()
        schema = base.schema
        names = [v.name for v in schema.vars if v.lattice is INTERVAL]
        s = Store.from_values(schema, _random_box(rng, names))
        t = s.copy()
        for n, v in _narrow(rng, {n: s[n] for n in names}).items():
            t.join_in_place(n, v)
        ps, pt = apply_once(cmds, s), apply_once(cmds, t)
        if not (s.leq(ps) and t.leq(pt) and ps.leq(pt)):
            failures += 1
    return failures
