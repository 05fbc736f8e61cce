import itertools
import random
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pccp.lattice import (
    BDEC, BINC, EMPTY, INTERVAL, NEG_INF, POS_INF, ZDEC, ZINC,
    Lattice, Schema, SchemaError, Store, ceil, floor, is_failed, join, join_in_place, leq,
    sat_add, sat_mul, sat_sub,
)

ints = st.one_of(st.integers(-50, 50), st.sampled_from([NEG_INF, POS_INF]))
bools = st.booleans()
intervals = st.tuples(ints, ints)

VALUES = {ZINC: ints, ZDEC: ints, BINC: bools, BDEC: bools, INTERVAL: intervals}


def canon(lat, v):
    return lat.canonical(v)


def test_zinc_join_example():
    s = Store.from_values(Schema([("x", ZINC)]), {"x": 3})
    assert join_in_place(s, "x", 5) is True
    assert s["x"] == 5


def test_zinc_join_same_value_unchanged():
    s = Store.from_values(Schema([("x", ZINC)]), {"x": 5})
    assert join_in_place(s, "x", 5) is False
    assert s["x"] == 5


def test_interval_join_example():
    s = Store.from_values(Schema([("x", INTERVAL)]), {"x": (0, 10)})
    assert join_in_place(s, "x", (2, 7)) is True
    assert s["x"] == (2, 7)


def test_leq_examples():
    assert leq(3, 5, ZINC)
    assert leq((0, 10), (2, 7), INTERVAL)
    assert not leq((2, 7), (0, 10), INTERVAL)


def test_zdec_and_booleans_order():
    assert leq(5, 3, ZDEC)
    assert join(5, 3, ZDEC) == 3
    assert leq(False, True, BINC) and not leq(True, False, BINC)
    assert leq(True, False, BDEC) and join(True, False, BDEC) is False


def test_is_failed_examples():
    schema = Schema([("x", INTERVAL), ("y", INTERVAL)])
    assert is_failed(Store.from_values(schema, {"x": (4, 2), "y": (0, 10)}))
    assert not is_failed(Store.from_values(schema, {"x": (0, 10), "y": (0, 10)}))


def test_is_failed_ignores_true_booleans():
    # BInc "true" is a decided guard, not a contradiction (see the decisions ledger)
    schema = Schema([("b", BINC), ("x", INTERVAL)])
    s = Store.from_values(schema, {"b": True, "x": (0, 3)})
    assert not is_failed(s)


def test_is_failed_on_scalar_top():
    s = Store.from_values(Schema([("x", ZINC)]), {"x": POS_INF})
    assert is_failed(s)
    s = Store.from_values(Schema([("x", ZDEC)]), {"x": NEG_INF})
    assert is_failed(s)


def test_bottom_initialisation():
    schema = Schema([("a", ZINC), ("b", ZDEC), ("c", BINC), ("d", BDEC), ("e", INTERVAL)])
    s = Store(schema)
    assert s.values() == {"a": NEG_INF, "b": POS_INF, "c": False, "d": True, "e": (NEG_INF, POS_INF)}


def test_schema_errors():
    schema = Schema([("x", ZINC)])
    with pytest.raises(SchemaError):
        schema.add("x", ZINC)
    s = Store(schema)
    with pytest.raises(SchemaError):
        s.join_in_place("x", (1, 2))
    with pytest.raises(SchemaError):
        s.join_in_place("y", 1)
    with pytest.raises(SchemaError):
        leq(True, 3, ZINC)


def test_floor_ceil():
    assert floor((2, 7)) == 2
    assert ceil((2, 7)) == 7


def test_saturating_arithmetic():
    assert sat_add(NEG_INF, 5) == NEG_INF
    assert sat_add(POS_INF, -5) == POS_INF
    assert sat_sub(3, NEG_INF) == POS_INF
    assert sat_add(POS_INF - 1, 10) == POS_INF
    assert sat_mul(0, POS_INF) == 0
    assert sat_mul(3, NEG_INF) == NEG_INF


def test_empty_intervals_compare_equal():
    schema = Schema([("x", INTERVAL)])
    a = Store.from_values(schema, {"x": (4, 2)})
    b = Store.from_values(schema, {"x": (9, 0)})
    assert a == b
    assert INTERVAL.canonical((4, 2)) == EMPTY


@pytest.mark.parametrize("lat", list(Lattice))
def test_order_join_coherence_exhaustive(lat):
    rng = random.Random(7)
    sample = {
        ZINC: [NEG_INF, POS_INF] + [rng.randint(-5, 5) for _ in range(18)],
        ZDEC: [NEG_INF, POS_INF] + [rng.randint(-5, 5) for _ in range(18)],
        BINC: [False, True],
        BDEC: [False, True],
        INTERVAL: [(NEG_INF, POS_INF), EMPTY] + [(rng.randint(-3, 3), rng.randint(-3, 3)) for _ in range(18)],
    }[lat]
    for a, b in itertools.product(sample, repeat=2):
        assert lat.leq(a, b) == (canon(lat, lat.join(a, b)) == canon(lat, b))


@pytest.mark.parametrize("lat", list(Lattice))
def test_bottom_identity_top_absorbing(lat):
    for v in ([NEG_INF, 0, 3, POS_INF] if lat in (ZINC, ZDEC) else
              [False, True] if lat in (BINC, BDEC) else [(0, 3), (2, 1), (NEG_INF, 4)]):
        assert canon(lat, lat.join(lat.bottom(), v)) == canon(lat, v)
        assert canon(lat, lat.join(lat.top(), v)) == canon(lat, lat.top())
        assert lat.leq(lat.bottom(), v) and lat.leq(v, lat.top())


def _join_laws(lat, data):
    a, b, c = (data.draw(VALUES[lat]) for _ in range(3))
    j = lat.join
    assert canon(lat, j(a, b)) == canon(lat, j(b, a))
    assert canon(lat, j(j(a, b), c)) == canon(lat, j(a, j(b, c)))
    assert canon(lat, j(a, a)) == canon(lat, a)


@pytest.mark.parametrize("lat", list(Lattice))
@settings(max_examples=300, deadline=None)
@given(data=st.data())
def test_join_laws_property(lat, data):
    _join_laws(lat, data)


@given(args=st.lists(intervals, min_size=1, max_size=20))
@settings(max_examples=200, deadline=None)
def test_monotone_write_discipline(args):
    s = Store(Schema([("x", INTERVAL)]))
    history = [s["x"]]
    for v in args:
        s.join_in_place("x", v)
        history.append(s["x"])
    final = s["x"]
    for v in args:
        assert INTERVAL.leq(v, final)
    for before, after in zip(history, history[1:]):
        assert INTERVAL.leq(before, after)


def test_join_in_place_reports_change_like_strict_increase():
    s = Store(Schema([("x", INTERVAL)]))
    assert s.join_in_place("x", (0, 10))
    assert not s.join_in_place("x", (-5, 20))
    assert s.join_in_place("x", (1, 20))


def test_store_leq_and_copy():
    schema = Schema([("x", INTERVAL), ("y", ZINC)])
    a = Store.from_values(schema, {"x": (0, 10), "y": 1})
    b = a.copy()
    b.join_in_place("x", (3, 4))
    assert a.leq(b) and not b.leq(a)
    c = Store(schema)
    c.assign(b)
    assert c == b and c.cells is not b.cells


def test_concurrent_joins_small():
    s = Store(Schema([("x", INTERVAL)]))
    args = [(random.Random(i).randint(0, 1000), random.Random(-i).randint(0, 1000)) for i in range(2000)]

    def work(chunk):
        for v in chunk:
            s.join_in_place("x", v)

    threads = [threading.Thread(target=work, args=(args[k::4],)) for k in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert s["x"] == (max(a for a, _ in args), min(b for _, b in args))
