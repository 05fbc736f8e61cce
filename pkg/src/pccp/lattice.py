"""Primitive lattices, the interval lattice and the shared store.

Every variable of a store is backed by one or two *cells*.  A cell is a
machine word that evolves in one of two directions: upward (join = max)
or downward (join = min).  Scalar lattices map to a single cell and an
interval is a pair ``(lb, ub)`` of an increasing and a decreasing cell, so
its two bounds can be read and written independently.
"""
from __future__ import annotations

import enum
import threading
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

NEG_INF = -(2**63)
POS_INF = 2**63 - 1

INC = True
DEC = False


class SchemaError(TypeError):
    """A value does not belong to the lattice of the cell it targets."""


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def saturate(v: int) -> int:
    if v <= NEG_INF:
        return NEG_INF
    if v >= POS_INF:
        return POS_INF
    return v


def sat_add(a: int, b: int) -> int:
    """Addition where the sentinels absorb: -inf + k = -inf, inf + k = inf."""
    if a == NEG_INF or b == NEG_INF:
        return NEG_INF
    if a == POS_INF or b == POS_INF:
        return POS_INF
    return saturate(a + b)


def sat_neg(a: int) -> int:
    if a == NEG_INF:
        return POS_INF
    if a == POS_INF:
        return NEG_INF
    return -a


def sat_sub(a: int, b: int) -> int:
    return sat_add(a, sat_neg(b))


def sat_mul(k: int, a: int) -> int:
    """Product of a nonnegative constant and a possibly infinite integer."""
    if k == 0:
        return 0
    if a == NEG_INF or a == POS_INF:
        return a
    return saturate(k * a)


class Lattice(enum.Enum):
    ZINC = "ZInc"
    ZDEC = "ZDec"
    BINC = "BInc"
    BDEC = "BDec"
    INTERVAL = "IZ"

    @property
    def width(self) -> int:
        return 2 if self is Lattice.INTERVAL else 1

    def bottom(self):
        return _BOTTOM[self]

    def top(self):
        return _TOP[self]

    def check(self, v) -> None:
        if self is Lattice.INTERVAL:
            if not (isinstance(v, tuple) and len(v) == 2 and _is_int(v[0]) and _is_int(v[1])):
                raise SchemaError(f"{v!r} is not an interval")
        elif self in (Lattice.BINC, Lattice.BDEC):
            if not isinstance(v, bool):
                raise SchemaError(f"{v!r} is not a {self.value} value")
        elif not _is_int(v):
            raise SchemaError(f"{v!r} is not a {self.value} value")

    def join(self, a, b):
        self.check(a)
        self.check(b)
        if self is Lattice.ZINC:
            return max(a, b)
        if self is Lattice.ZDEC:
            return min(a, b)
        if self is Lattice.BINC:
            return a or b
        if self is Lattice.BDEC:
            return a and b
        return (max(a[0], b[0]), min(a[1], b[1]))

    def leq(self, a, b) -> bool:
        self.check(a)
        self.check(b)
        if self is Lattice.ZINC:
            return a <= b
        if self is Lattice.ZDEC:
            return a >= b
        if self is Lattice.BINC:
            return (not a) or b
        if self is Lattice.BDEC:
            return a or not b
        if is_empty(a):
            return is_empty(b)
        if is_empty(b):
            return True
        return a[0] <= b[0] and a[1] >= b[1]

    def is_top(self, v) -> bool:
        if self is Lattice.INTERVAL:
            return is_empty(v)
        return v == _TOP[self]

    def canonical(self, v):
        """Collapse every representation of top to a single one."""
        if self is Lattice.INTERVAL and is_empty(v):
            return EMPTY
        return v


EMPTY = (POS_INF, NEG_INF)

_BOTTOM = {
    Lattice.ZINC: NEG_INF,
    Lattice.ZDEC: POS_INF,
    Lattice.BINC: False,
    Lattice.BDEC: True,
    Lattice.INTERVAL: (NEG_INF, POS_INF),
}
_TOP = {
    Lattice.ZINC: POS_INF,
    Lattice.ZDEC: NEG_INF,
    Lattice.BINC: True,
    Lattice.BDEC: False,
    Lattice.INTERVAL: EMPTY,
}

ZINC = Lattice.ZINC
ZDEC = Lattice.ZDEC
BINC = Lattice.BINC
BDEC = Lattice.BDEC
INTERVAL = Lattice.INTERVAL


def is_empty(itv) -> bool:
    return itv[0] > itv[1]


def join(a, b, lattice: Lattice):
    return lattice.join(a, b)


def leq(a, b, lattice: Lattice) -> bool:
    """Partial order test ``a <= b`` in ``lattice``; equivalent to ``join(a, b) == b``."""
    return lattice.leq(a, b)


def floor(itv) -> int:
    return itv[0]


def ceil(itv) -> int:
    return itv[1]


@dataclass(frozen=True)
class Var:
    name: str
    lattice: Lattice


# cell encodings; booleans are stored as 0/1 words
def _encode(lattice: Lattice, v):
    if lattice is Lattice.INTERVAL:
        return v
    if lattice in (Lattice.BINC, Lattice.BDEC):
        return (int(v),)
    return (v,)


def _decode(lattice: Lattice, cells: Sequence[int]):
    if lattice is Lattice.INTERVAL:
        return (cells[0], cells[1])
    if lattice in (Lattice.BINC, Lattice.BDEC):
        return bool(cells[0])
    return cells[0]


_DIRECTIONS = {
    Lattice.ZINC: (INC,),
    Lattice.ZDEC: (DEC,),
    Lattice.BINC: (INC,),
    Lattice.BDEC: (DEC,),
    Lattice.INTERVAL: (INC, DEC),
}

VarRef = Union[int, str]


class Schema:
    """Ordered, fixed list of variables together with their cell layout."""

    def __init__(self, variables: Iterable[Var | tuple[str, Lattice]] = ()):
        self.vars: list[Var] = []
        self.offsets: list[int] = []
        self.directions: list[bool] = []
        self.bottom_cells: list[int] = []
        self._index: dict[str, int] = {}
        self.interval_slots: list[int] = []
        self.zinc_slots: list[int] = []
        self.zdec_slots: list[int] = []
        for v in variables:
            self.add(*(v if isinstance(v, tuple) else (v.name, v.lattice)))

    def add(self, name: str, lattice: Lattice) -> int:
        if name in self._index:
            raise SchemaError(f"duplicate variable {name!r}")
        idx = len(self.vars)
        self.vars.append(Var(name, lattice))
        off = len(self.directions)
        self.offsets.append(off)
        self.directions.extend(_DIRECTIONS[lattice])
        self.bottom_cells.extend(_encode(lattice, lattice.bottom()))
        if lattice is Lattice.INTERVAL:
            self.interval_slots.append(off)
        elif lattice is Lattice.ZINC:
            self.zinc_slots.append(off)
        elif lattice is Lattice.ZDEC:
            self.zdec_slots.append(off)
        self._index[name] = idx
        return idx

    def __len__(self) -> int:
        return len(self.vars)

    def __iter__(self):
        return iter(self.vars)

    def __contains__(self, ref) -> bool:
        if isinstance(ref, str):
            return ref in self._index
        return 0 <= ref < len(self.vars)

    def index(self, ref: VarRef) -> int:
        if isinstance(ref, str):
            try:
                return self._index[ref]
            except KeyError:
                raise SchemaError(f"unknown variable {ref!r}") from None
        if not 0 <= ref < len(self.vars):
            raise SchemaError(f"variable index {ref} out of range")
        return ref

    def lattice(self, ref: VarRef) -> Lattice:
        return self.vars[self.index(ref)].lattice

    def slot(self, ref: VarRef) -> int:
        """First cell of a variable (the lower bound for intervals)."""
        return self.offsets[self.index(ref)]

    @property
    def n_cells(self) -> int:
        return len(self.directions)

    def names(self) -> list[str]:
        return [v.name for v in self.vars]

    def __eq__(self, other) -> bool:
        return isinstance(other, Schema) and self.vars == other.vars

    def __repr__(self) -> str:
        inner = ", ".join(f"#{i}:{v.name}:{v.lattice.value}" for i, v in enumerate(self.vars))
        return f"Schema([{inner}])"


class Store:
    """Cartesian product of lattice cells shared by every worker.

    Cells only move up in their lattice.  ``join_cell`` is the one write
    primitive: a compare-exchange retry loop so that a concurrent stronger
    value is never replaced by a weaker one.  Reads are plain loads.
    """

    def __init__(self, schema: Schema, cells: list[int] | None = None):
        self.schema = schema
        self.directions = schema.directions
        if cells is None:
            cells = list(schema.bottom_cells)
        elif len(cells) != schema.n_cells:
            raise SchemaError("cell count does not match the schema")
        self.cells = cells
        # CPython has no user-level CAS instruction; this lock only makes the
        # compare-and-swap step indivisible.
        self._cas_lock = threading.Lock()

    @classmethod
    def from_values(cls, schema: Schema, values: dict) -> "Store":
        s = cls(schema)
        for ref, v in values.items():
            s.join_in_place(ref, v)
        return s

    # -- reads ---------------------------------------------------------
    def __getitem__(self, ref: VarRef):
        i = self.schema.index(ref)
        lat = self.schema.vars[i].lattice
        off = self.schema.offsets[i]
        return _decode(lat, self.cells[off:off + lat.width])

    get = __getitem__

    def values(self) -> dict[str, object]:
        return {v.name: self[i] for i, v in enumerate(self.schema.vars)}

    def __len__(self) -> int:
        return len(self.schema)

    # -- writes --------------------------------------------------------
    def compare_exchange(self, i: int, expected: int, new: int) -> bool:
        with self._cas_lock:
            if self.cells[i] == expected:
                self.cells[i] = new
                return True
            return False

    def join_cell(self, i: int, v: int) -> bool:
        cells = self.cells
        cur = cells[i]
        if self.directions[i]:
            while v > cur:
                if self.compare_exchange(i, cur, v):
                    return True
                cur = cells[i]
        else:
            while v < cur:
                if self.compare_exchange(i, cur, v):
                    return True
                cur = cells[i]
        return False

    def join_in_place(self, ref: VarRef, v) -> bool:
        """Join ``v`` into a variable; True iff the stored value strictly increased."""
        i = self.schema.index(ref)
        lat = self.schema.vars[i].lattice
        lat.check(v)
        off = self.schema.offsets[i]
        changed = False
        for k, c in enumerate(_encode(lat, v)):
            changed |= self.join_cell(off + k, c)
        return changed

    # -- whole-store views ---------------------------------------------
    def copy(self) -> "Store":
        return Store(self.schema, list(self.cells))

    def assign(self, other: "Store") -> None:
        """Overwrite every cell with ``other``'s (backtracking restore)."""
        self.cells[:] = other.cells

    def is_failed(self) -> bool:
        cells = self.cells
        schema = self.schema
        for off in schema.interval_slots:
            if cells[off] > cells[off + 1]:
                return True
        for off in schema.zinc_slots:
            if cells[off] == POS_INF:
                return True
        for off in schema.zdec_slots:
            if cells[off] == NEG_INF:
                return True
        return False

    def key(self):
        """Hashable canonical form; every failed store maps to ``"TOP"``."""
        if self.is_failed():
            return "TOP"
        return tuple(self.cells)

    def leq(self, other: "Store") -> bool:
        if self.is_failed():
            return other.is_failed()
        if other.is_failed():
            return True
        for d, a, b in zip(self.directions, self.cells, other.cells):
            if (a > b) if d else (a < b):
                return False
        return True

    def __eq__(self, other) -> bool:
        return isinstance(other, Store) and self.schema == other.schema and self.key() == other.key()

    def __repr__(self) -> str:
        def fmt(x):
            return "-inf" if x == NEG_INF else "inf" if x == POS_INF else str(x)

        parts = []
        for v in self.schema.vars:
            val = self[v.name]
            if v.lattice is Lattice.INTERVAL:
                parts.append(f"{v.name}=({fmt(val[0])},{fmt(val[1])})")
            elif isinstance(val, bool):
                parts.append(f"{v.name}={val}")
            else:
                parts.append(f"{v.name}={fmt(val)}")
        return "Store(" + ", ".join(parts) + ")"


def join_in_place(store: Store, ref: VarRef, v) -> bool:
    return store.join_in_place(ref, v)


def is_failed(store: Store) -> bool:
    """True iff some interval is empty or some integer cell sits on its top sentinel.

    Boolean cells are not failure witnesses: ``true`` is the top of BInc but
    it is also the ordinary "entailed" answer of a guard.
    """
    return store.is_failed()
