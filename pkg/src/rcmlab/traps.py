"""Trap edges: strong bonds fenced in by uniformly weak surroundings.

A trap at scale n is an edge of weight at least 1/2 whose 4d - 2 other
incident edges (at both endpoints) all carry weights inside [1/n, 2/n].
A walker entering one endpoint mostly shuttles across the strong bond and
leaves only through a weak fence edge, which is the mechanism that slows
the heat-kernel decay.  This module classifies such edges, scans regions
for them, and plants hand-built traps on top of existing fields.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

from .field import FieldError, FieldLike, canonical_edge
from .lattice import Vertex, neighbors, unit_vector

EdgeKey = tuple[Vertex, int]


def edge_endpoints(tail: Vertex, axis: int) -> tuple[Vertex, Vertex]:
    head = tuple(c + 1 if i == axis else c for i, c in enumerate(tail))
    return tuple(tail), head


def surrounding_edges(tail: Sequence[int], axis: int) -> list[EdgeKey]:
    """Canonical keys of the 4d - 2 edges incident to either endpoint,
    excluding the edge itself."""
    tail = tuple(tail)
    y, z = edge_endpoints(tail, axis)
    keys: list[EdgeKey] = []
    seen = {(tail, axis)}
    for endpoint in (y, z):
        for nbr in neighbors(endpoint):
            key = canonical_edge(endpoint, nbr)
            if key not in seen:
                seen.add(key)
                keys.append(key)
    return keys


@dataclass(frozen=True)
class TrapRecord:
    """One trap edge: canonical key, scale, witnessed weights, and (when the
    record was produced by a vertex census) the flagged adjacent vertex."""

    tail: Vertex
    axis: int
    n: int
    strong_value: float
    fence: tuple[tuple[EdgeKey, float], ...]
    adjacent_vertex: Vertex | None = None

    @property
    def endpoints(self) -> tuple[Vertex, Vertex]:
        return edge_endpoints(self.tail, self.axis)

    def entry_endpoint(self) -> Vertex:
        """The trap endpoint the adjacent vertex touches."""
        if self.adjacent_vertex is None:
            raise ValueError("record has no adjacent vertex")
        x = self.adjacent_vertex
        for p in self.endpoints:
            if sum(abs(a - b) for a, b in zip(p, x)) == 1:
                return p
        raise ValueError(f"{x} is not adjacent to either endpoint")


@dataclass(frozen=True)
class TrapCensus:
    """Vertex-level census: one record per flagged vertex, plus the full
    indicator map over the scanned region."""

    n: int
    records: tuple[TrapRecord, ...]
    indicator: dict[Vertex, bool]

    @property
    def flagged(self) -> list[Vertex]:
        return [x for x, hit in self.indicator.items() if hit]


def _check_scale(n: int) -> None:
    if n < 4:
        raise ValueError(f"trap scale must satisfy n >= 4, got {n}")


def is_trap_edge(
    field: FieldLike,
    tail: Sequence[int],
    axis: int,
    n: int,
    strict: bool = True,
) -> bool:
    """Whether the edge (tail, tail + e_axis) is a trap at scale n.

    With strict=True, a fence edge missing from a finite box raises
    FieldError (the event is undefined there); with strict=False such
    candidates simply fail the test.
    """
    _check_scale(n)
    tail = tuple(tail)
    if not field.edge_exists(tail, axis):
        if strict:
            raise FieldError(f"edge ({tail}, axis {axis}) does not exist")
        return False
    if field.edge_value(tail, axis) < 0.5:
        return False
    lo, hi = 1.0 / n, 2.0 / n
    for (t, a) in surrounding_edges(tail, axis):
        if not field.edge_exists(t, a):
            if strict:
                raise FieldError(f"fence edge ({t}, axis {a}) does not exist")
            return False
        w = field.edge_value(t, a)
        if not lo <= w <= hi:
            return False
    return True


def trap_record(
    field: FieldLike,
    tail: Sequence[int],
    axis: int,
    n: int,
    adjacent_vertex: Vertex | None = None,
) -> TrapRecord:
    tail = tuple(tail)
    if not is_trap_edge(field, tail, axis, n, strict=True):
        raise FieldError(f"edge ({tail}, axis {axis}) is not a trap at scale {n}")
    fence = tuple(
        ((t, a), field.edge_value(t, a)) for (t, a) in surrounding_edges(tail, axis)
    )
    return TrapRecord(
        tail=tail,
        axis=axis,
        n=n,
        strong_value=field.edge_value(tail, axis),
        fence=fence,
        adjacent_vertex=adjacent_vertex,
    )


def trap_edge_scan(
    field: FieldLike,
    tails: Iterable[Sequence[int]],
    n: int,
    axes: Sequence[int] | None = None,
) -> list[TrapRecord]:
    """All trap edges at scale n whose canonical tail lies in ``tails``.

    Candidates whose fence sticks out of a finite box are skipped: the
    defining event needs all 4d - 2 fence edges to exist.
    """
    _check_scale(n)
    if axes is None:
        axes = range(field.d)
    out: list[TrapRecord] = []
    for tail in tails:
        for axis in axes:
            if is_trap_edge(field, tail, axis, n, strict=False):
                out.append(trap_record(field, tail, axis, n))
    return out


def trap_census(field: FieldLike, region: Iterable[Sequence[int]], n: int) -> TrapCensus:
    """Flag every vertex of ``region`` that sits next to a trap at scale n.

    Each flagged vertex contributes one record for its designated trap edge
    (ties broken by canonical edge order).  Region vertices outside a dense
    box are an error: their neighbourhood is not stored.
    """
    _check_scale(n)
    box = field.box
    indicator: dict[Vertex, bool] = {}
    records: list[TrapRecord] = []
    for raw in region:
        x = tuple(int(c) for c in raw)
        if box is not None and not box.contains(x):
            raise FieldError(f"census vertex {x} outside the stored box")
        rec = designated_trap(field, x, n)
        indicator[x] = rec is not None
        if rec is not None:
            records.append(rec)
    return TrapCensus(n=n, records=tuple(records), indicator=indicator)


def candidate_edges_near(x: Sequence[int]) -> Iterator[EdgeKey]:
    """Canonical keys of edges with exactly one endpoint adjacent to x.

    These are the edges (y, z) with y a neighbour of x and z a neighbour
    of y other than x; on Z^d the second endpoint is never adjacent to x
    (it sits at l1-distance 0 or 2), so adjacency to exactly one endpoint
    is automatic once x itself is excluded.
    """
    x = tuple(x)
    seen: set[EdgeKey] = set()
    for y in neighbors(x):
        for z in neighbors(y):
            if z == x:
                continue
            key = canonical_edge(y, z)
            if key not in seen:
                seen.add(key)
                yield key


def designated_trap(field: FieldLike, x: Sequence[int], n: int) -> TrapRecord | None:
    """The lexicographically smallest trap edge adjacent to x, if any.

    A vertex is "next to a trap" when some edge with exactly one endpoint
    adjacent to x is a trap at scale n.  Ties are broken by the canonical
    edge-key order so that every vertex designates at most one trap.
    """
    _check_scale(n)
    best: EdgeKey | None = None
    for key in sorted(candidate_edges_near(x)):
        t, a = key
        if is_trap_edge(field, t, a, n, strict=False):
            best = key
            break
    if best is None:
        return None
    return trap_record(field, best[0], best[1], n, adjacent_vertex=tuple(x))


def trap_indicator(field: FieldLike, x: Sequence[int], n: int) -> bool:
    """Whether x sits next to (but not on) some trap edge at scale n."""
    return designated_trap(field, x, n) is not None


def directed_trap_indicator(field: FieldLike, x: Sequence[int], n: int) -> bool:
    """Pinned-orientation variant: the specific edge two steps behind x
    along the first axis, so that distinct x give distinct trap edges."""
    _check_scale(n)
    x = tuple(x)
    e1 = unit_vector(field.d, 0)
    tail = tuple(c - 2 * e for c, e in zip(x, e1))
    if not field.edge_exists(tail, 0):
        return False
    return is_trap_edge(field, tail, 0, n, strict=False)


def trap_patches(
    y: Sequence[int],
    z: Sequence[int],
    n: int,
    strong: float = 1.0,
    weak: float | Mapping[EdgeKey, float] | None = None,
) -> dict[EdgeKey, float]:
    """Patch dict that plants a trap on the edge {y, z} at scale n.

    ``weak`` may be a single fence value, a per-edge mapping, or None for
    the window floor 1/n.  Values are validated against the trap window.
    """
    _check_scale(n)
    if strong < 0.5:
        raise ValueError(f"strong value {strong} below the 1/2 threshold")
    tail, axis = canonical_edge(y, z)
    patches: dict[EdgeKey, float] = {(tail, axis): float(strong)}
    lo, hi = 1.0 / n, 2.0 / n
    for key in surrounding_edges(tail, axis):
        if weak is None:
            w = lo
        elif isinstance(weak, Mapping):
            w = float(weak.get(key, lo))
        else:
            w = float(weak)
        if not lo <= w <= hi:
            raise ValueError(f"fence value {w} outside [{lo}, {hi}] for scale {n}")
        patches[key] = w
    return patches
