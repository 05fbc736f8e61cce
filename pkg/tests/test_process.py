import random

import pytest

from pccp.engine import run_sequential
from pccp.lattice import BINC, INTERVAL, NEG_INF, POS_INF, ZINC, Schema, Store
from pccp.process import (
    Ask, ForAll, GuardedCommand, Local, ModelError, MonotoneFn, Par, Predicate, Seq, Tell,
    const, erase_locals, expand_generators, gnf, linear_sum, lower, materialize_guards,
    par_to_seq, seq_to_par,
)


def f_const(v):
    return const(v)


def test_gnf_single_tell():
    fn = f_const(1)
    assert gnf((), Tell("x", fn)) == [GuardedCommand((), "x", fn)]


def test_gnf_ask_distributes_over_par():
    p, q = Tell("x", f_const(1)), Tell("y", f_const(2))
    assert gnf((), Ask("b", Par([p, q]))) == gnf(("b",), p) + gnf(("b",), q)


def test_gnf_accumulates_guards():
    fn = f_const(3)
    assert gnf(("a",), Ask("b", Tell("x", fn))) == [GuardedCommand(("a", "b"), "x", fn)]


def test_gnf_rejects_locals_and_generators():
    with pytest.raises(ModelError):
        gnf((), Local("x", ZINC, Tell("x", f_const(1))))
    with pytest.raises(ModelError):
        gnf((), ForAll(1, 2, lambda i: Tell("x", f_const(i))))


def test_erase_locals_single_interval():
    fn = const((0, 5))
    body, schema = erase_locals(Local("x", INTERVAL, Tell("x", fn)))
    assert isinstance(body, Tell) and body.target == 0
    assert schema.names() == ["x"] and schema.vars[0].lattice is INTERVAL
    assert Store(schema)["x"] == (NEG_INF, POS_INF)


def test_erase_locals_without_locals_is_identity():
    body, schema = erase_locals(Par([]))
    assert isinstance(body, Par) and body.procs == ()
    assert len(schema) == 0


def test_erase_locals_numbers_left_to_right():
    p = Local("x", INTERVAL, Local("y", ZINC, Par([Tell("x", const((0, 1))), Tell("y", const(2))])))
    _, schema = erase_locals(p)
    assert [(v.name, v.lattice) for v in schema.vars] == [("x", INTERVAL), ("y", ZINC)]
    assert schema.offsets == [0, 2]


def test_erase_locals_depth_first_across_branches():
    p = Par([Local("a", ZINC, Local("b", ZINC, Par([]))), Local("c", ZINC, Par([]))])
    _, schema = erase_locals(p)
    assert schema.names() == ["a", "b", "c"]


def test_erase_locals_duplicate_name():
    with pytest.raises(ModelError):
        erase_locals(Local("x", ZINC, Local("x", ZINC, Par([]))))


def test_erase_locals_unknown_variable():
    with pytest.raises(ModelError):
        erase_locals(Tell("nope", const(1)))


def test_expand_generator_two_tells():
    p = expand_generators(ForAll(1, 2, lambda i: Tell(f"s_{i}", const((0, 9)))))
    assert isinstance(p, Par)
    assert [q.target for q in p.procs] == ["s_1", "s_2"]


def test_expand_generator_empty_range():
    p = expand_generators(ForAll(1, 0, lambda i: Tell(f"s_{i}", const(0))))
    assert isinstance(p, Par) and p.procs == ()


def test_generator_inside_sum_read_set():
    fn = linear_sum([(1, f"x{i}") for i in range(1, 4)])
    assert fn.read_set == ("x1", "x2", "x3")
    assert fn.eval((1, 5), (2, 5), (3, 5)) == 6


def test_materialized_guard_has_same_fixpoint():
    pred = Predicate(("x",), lambda x: x >= 2, label="x>=2")
    p = Local("x", ZINC, Local("y", ZINC, Par([
        Tell("x", const(3)),
        Ask(pred, Tell("y", const(7))),
    ])))
    c1, s1 = lower(p)
    c2, s2 = lower(materialize_guards(p))
    a, b = Store(s1), Store(s2)
    run_sequential(c1, a)
    run_sequential(c2, b)
    assert a["y"] == b["y"] == 7
    assert any(v.lattice is BINC for v in s2.vars)


# -- random processes and a direct interpreter ------------------------------------

VARS = ["x", "y", "z"]
FLAGS = ["b0", "b1"]


def _random_fn(rng):
    kind = rng.randrange(4)
    if kind == 0:
        return const(rng.randint(0, 6))
    src = rng.choice(VARS)
    if kind == 1:
        k = rng.randint(0, 2)
        return MonotoneFn((src,), lambda v, k=k: min(v + k, 8) if v > NEG_INF else v, label=f"{src}+{k}")
    if kind == 2:
        a, b = rng.sample(VARS, 2)
        return MonotoneFn((a, b), max, label=f"max({a},{b})")
    k = rng.randint(0, 5)
    return MonotoneFn((src,), lambda v, k=k: v >= k, label=f"{src}>={k}")


def _random_proc(rng, depth=0):
    r = rng.random()
    if depth >= 3 or r < 0.4:
        fn = _random_fn(rng)
        target = rng.choice(FLAGS) if fn.label.endswith(tuple(f">={k}" for k in range(6))) else rng.choice(VARS)
        return Tell(target, fn)
    if r < 0.6:
        if rng.random() < 0.5:
            g = rng.choice(FLAGS)
        else:
            v, k = rng.choice(VARS), rng.randint(0, 5)
            g = Predicate((v,), lambda x, k=k: x >= k, label=f"{v}>={k}")
        return Ask(g, _random_proc(rng, depth + 1))
    kids = [_random_proc(rng, depth + 1) for _ in range(rng.randint(0, 3))]
    return Par(kids) if r < 0.8 else Seq(kids)


def _wrap(p):
    for name, lat in reversed([("x", ZINC), ("y", ZINC), ("z", ZINC), ("b0", BINC), ("b1", BINC)]):
        p = Local(name, lat, p)
    return p


def _interpret(p, s: Store) -> None:
    """Direct evaluation of a process tree (no normal form)."""
    if isinstance(p, Tell):
        vals = [s[r] for r in p.fn.read_set]
        s.join_in_place(p.target, p.fn.eval(*vals))
    elif isinstance(p, Ask):
        g = p.guard
        ok = g.test(*[s[r] for r in g.read_set]) if isinstance(g, Predicate) else s[g]
        if ok:
            _interpret(p.body, s)
    elif isinstance(p, (Par, Seq)):
        for q in p.procs:
            _interpret(q, s)


def _tree_fixpoint(p) -> Store:
    body, schema = erase_locals(_wrap(p))
    s = Store.from_values(schema, {"x": 0, "y": 0, "z": 0})
    while True:
        before = list(s.cells)
        _interpret(body, s)
        if s.cells == before:
            return s


def _gnf_fixpoint(p) -> Store:
    commands, schema = lower(_wrap(p))
    s = Store.from_values(schema, {"x": 0, "y": 0, "z": 0})
    run_sequential(commands, s)
    return s


def test_gnf_preserves_fixpoint_on_random_processes():
    rng = random.Random(11)
    for _ in range(200):
        p = Par([_random_proc(rng) for _ in range(rng.randint(1, 4))])
        assert _tree_fixpoint(p) == _gnf_fixpoint(p)


def test_seq_par_swap_preserves_fixpoint():
    rng = random.Random(12)
    for _ in range(200):
        p = Par([_random_proc(rng) for _ in range(rng.randint(1, 4))])
        ref = _tree_fixpoint(p)
        assert _tree_fixpoint(seq_to_par(p)) == ref
        assert _tree_fixpoint(par_to_seq(p)) == ref


def test_guard_stays_true_once_set():
    schema = Schema([("b", BINC)])
    s = Store(schema)
    s.join_in_place("b", True)
    s.join_in_place("b", False)
    assert s["b"] is True


def test_guarded_command_round_trip_to_process():
    fn = const(1)
    gc = GuardedCommand(("a", "b"), "x", fn)
    assert gnf((), gc.as_process()) == [gc]
