"""Threshold-graph geometry: components, distances, and holes.

Fixing a threshold alpha, the strong graph keeps the edges of weight at
least alpha.  On a finite box the role of the infinite cluster is played by
the largest strong component (the "giant").  Vertices off the giant form
holes — lattice-connected pockets the walk must traverse slowly — and the
chemical metric counts hops along strong edges only.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .field import FieldLike
from .lattice import Box, Vertex, neighbors


class ClusterError(ValueError):
    """Raised for invalid thresholds, sources, or unusable regions."""


def box_neighbors(box: Box, x: Sequence[int]) -> list[Vertex]:
    """Lattice neighbours of x inside the box (wrapped when periodic)."""
    out = []
    for y in neighbors(x):
        if box.contains(y):
            out.append(y)
        elif box.boundary == "periodic":
            out.append(box.wrap(y))
    return out


def strong_edge_indices(
    field: FieldLike, box: Box, alpha: float
) -> tuple[np.ndarray, np.ndarray]:
    """Flat-index endpoints (tails, heads) of all strong edges in the box."""
    grid = box.coordinate_grid()
    d = box.d
    rows = []
    cols = []
    for a in range(d):
        w = field.edge_values_batch(grid, a)
        inside = np.ones(len(grid), dtype=bool)
        if box.boundary != "periodic":
            inside = grid[:, a] < box.L
        strong = (w >= alpha) & inside
        if not strong.any():
            continue
        tails = grid[strong]
        heads = tails.copy()
        heads[:, a] += 1
        if box.boundary == "periodic":
            over = heads[:, a] > box.L
            heads[over, a] = -box.L
        rows.append(box.index_array(tails))
        cols.append(box.index_array(heads))
    if rows:
        return np.concatenate(rows), np.concatenate(cols)
    return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)


def _canonical_relabel(labels: np.ndarray) -> np.ndarray:
    """Component ids renumbered by first appearance in flat vertex order."""
    _, first_idx = np.unique(labels, return_index=True)
    order = np.argsort(first_idx)
    remap = np.empty(len(order), dtype=np.int64)
    remap[labels[np.sort(first_idx)]] = np.arange(len(order))
    return remap[labels]


@dataclass
class ClusterDecomposition:
    """Strong-component labeling of a boxed environment at threshold alpha."""

    field: FieldLike
    box: Box
    alpha: float
    labels: np.ndarray
    giant_id: int
    component_sizes: np.ndarray
    strong_csr: sparse.csr_matrix

    @property
    def n_components(self) -> int:
        return len(self.component_sizes)

    @property
    def giant_size(self) -> int:
        return int(self.component_sizes[self.giant_id])

    def label_of(self, x: Sequence[int]) -> int:
        return int(self.labels[self.box.index(x)])

    def on_giant(self, x: Sequence[int]) -> bool:
        return self.label_of(x) == self.giant_id

    @cached_property
    def giant_mask(self) -> np.ndarray:
        return self.labels == self.giant_id

    def giant_vertices(self) -> list[Vertex]:
        return [self.box.vertex(int(i)) for i in np.nonzero(self.giant_mask)[0]]

    def strong_neighbors(self, x: Sequence[int]) -> list[Vertex]:
        nbrs, w = self.field.incident(x)
        return [y for y, wy in zip(nbrs, w) if wy >= self.alpha]

    # -- holes: lattice-connected pockets of off-giant vertices --------------

    @cached_property
    def _hole_data(self) -> tuple[dict[Vertex, int], list[tuple[Vertex, ...]]]:
        hole_id: dict[Vertex, int] = {}
        holes: list[tuple[Vertex, ...]] = []
        off = [
            self.box.vertex(int(i))
            for i in np.nonzero(~self.giant_mask)[0]
        ]
        off_set = set(off)
        for start in off:
            if start in hole_id:
                continue
            comp = []
            stack = [start]
            hole_id[start] = len(holes)
            while stack:
                u = stack.pop()
                comp.append(u)
                for v in box_neighbors(self.box, u):
                    if v in off_set and v not in hole_id:
                        hole_id[v] = len(holes)
                        stack.append(v)
            holes.append(tuple(sorted(comp)))
        return hole_id, holes

    def hole_of(self, x: Sequence[int]) -> tuple[Vertex, ...]:
        """F_x: the lattice component of x off the giant; () on the giant."""
        hole_id, holes = self._hole_data
        hid = hole_id.get(tuple(x))
        return () if hid is None else holes[hid]

    def holes(self) -> list[tuple[Vertex, ...]]:
        return list(self._hole_data[1])

    def g_set(self, x: Sequence[int]) -> set[Vertex]:
        """G_x: the union of the holes of x and of its lattice neighbours."""
        out: set[Vertex] = set(self.hole_of(x))
        for y in box_neighbors(self.box, tuple(x)):
            out.update(self.hole_of(y))
        return out


def decompose(field: FieldLike, alpha: float, box: Box | None = None) -> ClusterDecomposition:
    """Label strong components of the box at threshold alpha.

    The giant id is the largest component, ties broken towards the smaller
    canonical id (components are numbered by first appearance in flat
    vertex order, so the labeling is iteration-order independent).
    """
    if not 0.0 < alpha <= 1.0:
        raise ClusterError(f"threshold alpha must lie in (0, 1], got {alpha}")
    box = box if box is not None else field.box
    if box is None:
        raise ClusterError("decomposition needs a finite box")
    n = box.nvertices
    rows, cols = strong_edge_indices(field, box, alpha)
    adj = sparse.coo_matrix(
        (np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n)
    ).tocsr()
    _, raw = csgraph.connected_components(adj, directed=False)
    labels = _canonical_relabel(raw)
    sizes = np.bincount(labels)
    giant_id = int(np.argmax(sizes))
    sym = adj + adj.T
    return ClusterDecomposition(
        field=field,
        box=box,
        alpha=float(alpha),
        labels=labels,
        giant_id=giant_id,
        component_sizes=sizes,
        strong_csr=sym.tocsr(),
    )


def _distances_from(dec: ClusterDecomposition, source: Sequence[int]) -> np.ndarray:
    src = dec.box.index(source)
    if dec.labels[src] != dec.giant_id:
        raise ClusterError(f"source {tuple(source)} is off the giant component")
    return csgraph.dijkstra(dec.strong_csr, indices=src, unweighted=True)


def chemical_distance(dec: ClusterDecomposition, source: Sequence[int]) -> dict[Vertex, int]:
    """Hop counts from source along strong edges (the chemical metric)."""
    dist = _distances_from(dec, source)
    reach = np.isfinite(dist)
    return {
        dec.box.vertex(int(i)): int(dist[i]) for i in np.nonzero(reach)[0]
    }


def coarse_distance(dec: ClusterDecomposition, source: Sequence[int]) -> dict[Vertex, int]:
    """Hop counts on the giant with shortcut edges between any two giant
    vertices whose G-sets share a hole.

    Implemented by routing through virtual per-hole nodes at half weight,
    so a shared hole costs one hop without materialising cliques.
    """
    src = dec.box.index(source)
    if dec.labels[src] != dec.giant_id:
        raise ClusterError(f"source {tuple(source)} is off the giant component")
    holes = dec.holes()
    n = dec.box.nvertices
    base = dec.strong_csr.astype(np.float64)
    if holes:
        rows = []
        cols = []
        for h, hole in enumerate(holes):
            boundary = set()
            for v in hole:
                for y in box_neighbors(dec.box, v):
                    yi = dec.box.index(y)
                    if dec.labels[yi] == dec.giant_id:
                        boundary.add(yi)
            for yi in boundary:
                rows.append(yi)
                cols.append(n + h)
        bridge = sparse.coo_matrix(
            (np.full(len(rows), 0.5), (rows, cols)),
            shape=(n + len(holes), n + len(holes)),
        )
        full = sparse.bmat(
            [[base, None], [None, sparse.csr_matrix((len(holes), len(holes)))]]
        )
        graph = (full + bridge + bridge.T).tocsr()
    else:
        graph = base
    dist = csgraph.dijkstra(graph, indices=src)
    out: dict[Vertex, int] = {}
    for i in range(n):
        if np.isfinite(dist[i]):
            hops = int(round(dist[i]))
            out[dec.box.vertex(i)] = hops
    return out


@dataclass(frozen=True)
class HoleInfo:
    """One hole: vertices, adjacent giant boundary, chemical diameter."""

    id: int
    vertices: tuple[Vertex, ...]
    boundary: tuple[Vertex, ...]
    diameter: int


@dataclass
class HoleReport:
    """Per-hole geometry over a decomposition, with vertex accessors."""

    holes: tuple[HoleInfo, ...]
    dec: ClusterDecomposition | None = dc_field(repr=False, default=None)
    _hole_index: dict[Vertex, int] = dc_field(repr=False, default_factory=dict)

    @property
    def n_holes(self) -> int:
        return len(self.holes)

    @property
    def max_diameter(self) -> int:
        return max((h.diameter for h in self.holes), default=0)

    @property
    def mean_size(self) -> float:
        if not self.holes:
            return 0.0
        return float(np.mean([len(h.vertices) for h in self.holes]))

    def hole_of(self, x: Sequence[int]) -> HoleInfo | None:
        hid = self._hole_index.get(tuple(x))
        return None if hid is None else self.holes[hid]

    def f_set(self, x: Sequence[int]) -> tuple[Vertex, ...]:
        info = self.hole_of(x)
        return () if info is None else info.vertices

    def diameter(self, x: Sequence[int]) -> int:
        info = self.hole_of(x)
        return 0 if info is None else info.diameter

    def g_set(self, x: Sequence[int]) -> set[Vertex]:
        if self.dec is None:
            raise ClusterError("report detached from its decomposition")
        return self.dec.g_set(x)


def hole_report(dec: ClusterDecomposition) -> HoleReport:
    """Exact hole geometry: boundaries and chemical diameters.

    A hole's diameter is the largest chemical distance (on the giant
    component) between two giant vertices adjacent to the hole.
    """
    infos = []
    index: dict[Vertex, int] = {}
    for hid, hole in enumerate(dec.holes()):
        boundary = set()
        for v in hole:
            for y in box_neighbors(dec.box, v):
                if dec.on_giant(y):
                    boundary.add(y)
        boundary = tuple(sorted(boundary))
        diam = 0
        if len(boundary) >= 2:
            idxs = [dec.box.index(b) for b in boundary]
            dist = csgraph.dijkstra(
                dec.strong_csr, indices=idxs, unweighted=True
            )
            sub = dist[:, idxs]
            finite = np.isfinite(sub)
            if finite.any():
                diam = int(sub[finite].max())
        infos.append(
            HoleInfo(id=hid, vertices=hole, boundary=boundary, diameter=diam)
        )
        for v in hole:
            index[v] = hid
    rep = HoleReport(holes=tuple(infos), dec=dec)
    rep._hole_index = index
    return rep


def g_set_report(dec: ClusterDecomposition, xs: Iterable[Sequence[int]]) -> dict[Vertex, set[Vertex]]:
    return {tuple(x): dec.g_set(x) for x in xs}
