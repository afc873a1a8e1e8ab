"""Runtime values and the modeled object heap."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Union

INT_MIN = -(1 << 31)
INT_MAX = (1 << 31) - 1
_MASK = (1 << 32) - 1


def wrap32(v: int) -> int:
    """Reduce an integer into the signed 32-bit range (two's complement)."""
    v &= _MASK
    return v - (1 << 32) if v > INT_MAX else v


def tdiv(a: int, b: int) -> int:
    """Integer division truncating toward zero (C semantics, unwrapped)."""
    q = abs(a) // abs(b)
    return q if (a < 0) == (b < 0) else -q


def tmod(a: int, b: int) -> int:
    return a - b * tdiv(a, b)


@dataclass(frozen=True, order=True)
class Handle:
    """Reference to a heap object."""

    oid: int

    def __repr__(self) -> str:
        return f"#{self.oid}"


# Int32 -> int, Bool -> bool, Null -> None
Value = Union[int, bool, Handle, None]


@dataclass
class HeapObject:
    record: str
    fields: dict[str, Value]


@dataclass
class Heap:
    objects: dict[int, HeapObject] = field(default_factory=dict)
    next_id: int = 0

    def alloc(self, record: str, fields: dict[str, Value]) -> Handle:
        oid = self.next_id
        self.next_id += 1
        self.objects[oid] = HeapObject(record, dict(fields))
        return Handle(oid)

    def get(self, h: Handle) -> HeapObject:
        return self.objects[h.oid]

    def read(self, h: Handle, name: str) -> Value:
        return self.objects[h.oid].fields[name]

    def write(self, h: Handle, name: str, value: Value) -> None:
        self.objects[h.oid].fields[name] = value

    def copy(self) -> Heap:
        return copy.deepcopy(self)

    def check_integrity(self) -> list[str]:
        """Return descriptions of dangling handles (empty when the heap is consistent)."""
        bad = []
        for oid, obj in self.objects.items():
            for name, v in obj.fields.items():
                if isinstance(v, Handle) and v.oid not in self.objects:
                    bad.append(f"#{oid}.{name} -> {v!r}")
        return bad

    def reachable(self, roots) -> list[int]:
        """Object ids reachable from the given handles, in first-visit (DFS) order."""
        seen: list[int] = []
        seen_set: set[int] = set()
        stack = [h for h in reversed(list(roots)) if isinstance(h, Handle)]
        while stack:
            h = stack.pop()
            if h.oid in seen_set:
                continue
            seen_set.add(h.oid)
            seen.append(h.oid)
            obj = self.objects[h.oid]
            for v in reversed(list(obj.fields.values())):
                if isinstance(v, Handle) and v.oid not in seen_set:
                    stack.append(v)
        return seen


def default_value(ty: str) -> Value:
    if ty == "int":
        return 0
    if ty == "bool":
        return False
    return None


def render_value(v: Value, heap: Heap | None = None, _seen: set[int] | None = None) -> str:
    """Human-readable rendering in the style of the result tables, e.g. ``Point{x=1, y=42}``."""
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if heap is None or v.oid not in heap.objects:
        return repr(v)
    seen = set() if _seen is None else _seen
    if v.oid in seen:
        return repr(v)
    seen.add(v.oid)
    obj = heap.objects[v.oid]
    parts = ", ".join(f"{k}={render_value(x, heap, seen)}" for k, x in obj.fields.items())
    return f"{obj.record}{v!r}{{{parts}}}" if _has_refs(obj) else f"{obj.record}{{{parts}}}"


def _has_refs(obj: HeapObject) -> bool:
    return any(isinstance(x, Handle) for x in obj.fields.values())
