"""Slab clusters and trap-density statistics over boxed environments.

Slabs are width-M bands along the first axis; the marked sublattice keeps
every third coordinate and first coordinates that are multiples of 3M, so
each marked point belongs to exactly one slab.  Density statistics measure
how uniformly trap-adjacent vertices spread: sliding-window averages of the
indicator and a long-range pair sum with an inverse-polynomial kernel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .cluster import _canonical_relabel, strong_edge_indices
from .field import FieldLike
from .lattice import Box, Vertex, annulus_bounds, annulus_members
from .traps import trap_census


class SlabError(ValueError):
    """Raised for invalid slab widths, windows, or undersized boxes."""


def _is_dyadic(m: int) -> bool:
    return m >= 1 and (m & (m - 1)) == 0


def slab_points(d: int, M: int, k: int, box: Box) -> list[Vertex]:
    """Marked sublattice points of the inner annulus k: all coordinates
    multiples of 3 and the first coordinate a multiple of 3M."""
    if not _is_dyadic(M):
        raise SlabError(f"slab width must be dyadic, got {M}")
    if box.d != d:
        raise SlabError("box dimension mismatch")
    _, hi = annulus_bounds(k)
    if box.L < hi:
        raise SlabError(
            f"box half-width {box.L} does not cover annulus {k} (needs {hi})"
        )
    step = 3 * M
    return [
        x
        for x in annulus_members(d, k, inner=True)
        if all(c % 3 == 0 for c in x) and x[0] % step == 0
    ]


def slab_cluster_count(
    field: FieldLike,
    alpha: float,
    M: int,
    k: int,
    box: Box | None = None,
) -> int:
    """Number of marked inner-annulus points on their slab's largest strong
    component."""
    if not 0.0 < alpha <= 1.0:
        raise SlabError(f"threshold alpha must lie in (0, 1], got {alpha}")
    box = box if box is not None else field.box
    if box is None:
        raise SlabError("slab counting needs a finite box")
    points = slab_points(box.d, M, k, box)
    if not points:
        return 0
    rows, cols = strong_edge_indices(field, box, alpha)
    grid = box.coordinate_grid()
    first = grid[:, 0]
    step = 3 * M
    count = 0
    for ell in sorted({x[0] // step for x in points}):
        lo = step * ell
        mask = (first >= lo) & (first <= lo + M - 1)
        sub_ids = np.nonzero(mask)[0]
        local = -np.ones(box.nvertices, dtype=np.int64)
        local[sub_ids] = np.arange(len(sub_ids))
        keep = mask[rows] & mask[cols]
        adj = sparse.coo_matrix(
            (
                np.ones(int(keep.sum()), dtype=np.int8),
                (local[rows[keep]], local[cols[keep]]),
            ),
            shape=(len(sub_ids), len(sub_ids)),
        ).tocsr()
        _, raw = csgraph.connected_components(adj, directed=False)
        labels = _canonical_relabel(raw)
        sizes = np.bincount(labels)
        giant = int(np.argmax(sizes))
        for x in points:
            if x[0] // step == ell and labels[local[box.index(x)]] == giant:
                count += 1
    return count


@dataclass(frozen=True)
class WindowRow:
    """Sliding-window density summary for one window radius."""

    radius: int
    positions: int
    min_density: float
    max_density: float
    mean_density: float


@dataclass(frozen=True)
class DensityReport:
    """Trap-adjacency uniformity statistics over a box."""

    n: int
    flagged_count: int
    indicator: dict[Vertex, bool]
    windows: tuple[WindowRow, ...]
    pair_cutoff: float
    pair_sum: float


def _window_sums(arr: np.ndarray, w: int) -> np.ndarray:
    """Sums of arr over all w-wide sub-boxes, via cumulative sums per axis."""
    out = arr.astype(np.float64)
    for axis in range(arr.ndim):
        c = np.cumsum(out, axis=axis)
        first = np.take(c, [w - 1], axis=axis)
        rest = np.take(c, np.arange(w, c.shape[axis]), axis=axis) - np.take(
            c, np.arange(0, c.shape[axis] - w), axis=axis
        )
        out = np.concatenate([first, rest], axis=axis)
    return out


def density_statistics(
    field: FieldLike,
    n: int,
    window_sizes: Sequence[int],
    pair_cutoff: float,
    region: Iterable[Sequence[int]] | None = None,
) -> DensityReport:
    """Sliding-window densities and the long-range pair sum of the
    trap-adjacency indicator at scale n.

    ``region`` restricts which vertices are scanned (default: whole box);
    unscanned vertices count as unflagged in the window averages.
    """
    box = field.box
    if box is None:
        raise SlabError("density statistics need a finite box")
    if region is None:
        region = list(box.vertices())
    census = trap_census(field, region, n)
    flags = np.zeros(box.nvertices, dtype=np.float64)
    for x, hit in census.indicator.items():
        if hit:
            flags[box.index(x)] = 1.0
    side = box.side
    arr = flags.reshape((side,) * box.d)
    rows = []
    for radius in window_sizes:
        radius = int(radius)
        w = 2 * radius + 1
        if radius < 1 or w > side:
            raise SlabError(
                f"window radius {radius} does not fit in a box of side {side}"
            )
        sums = _window_sums(arr, w)
        dens = sums / float(w ** box.d)
        rows.append(
            WindowRow(
                radius=radius,
                positions=int(dens.size),
                min_density=float(dens.min()),
                max_density=float(dens.max()),
                mean_density=float(dens.mean()),
            )
        )
    flagged = sorted(x for x, hit in census.indicator.items() if hit)
    pair_sum = 0.0
    if flagged:
        coords = np.array(flagged, dtype=np.float64)
        diff = coords[:, None, :] - coords[None, :, :]
        dist = np.sqrt((diff ** 2).sum(axis=-1))
        mask = (dist >= pair_cutoff) & ~np.eye(len(flagged), dtype=bool)
        kernel = 1.0 / (1.0 + dist ** (box.d - 2))
        pair_sum = float(kernel[mask].sum())
    return DensityReport(
        n=n,
        flagged_count=len(flagged),
        indicator=census.indicator,
        windows=tuple(rows),
        pair_cutoff=float(pair_cutoff),
        pair_sum=pair_sum,
    )
