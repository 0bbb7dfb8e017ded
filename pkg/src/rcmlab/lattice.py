"""Lattice geometry: boxes on Z^d and the dyadic annulus decomposition.

Vertices are tuples of ints.  A box of half-width ``L`` is the vertex set
``{-L, ..., L}^d``; flat indices enumerate it in row-major order of the
shifted coordinates.  The annulus with index k >= 1 collects the vertices x
with 2^(k-1) <= |x|_inf <= 2^k - 1, annulus 0 is the origin alone, and the
associated diffusive time scale is t_k = 4^k.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

Vertex = tuple[int, ...]

BOUNDARY_MODES = ("free", "absorbing", "periodic")


class GeometryError(ValueError):
    """Raised for inconsistent lattice/box requests."""


@dataclass(frozen=True)
class Box:
    """Finite window {-L..L}^d with a boundary convention.

    ``free`` keeps only edges with both endpoints inside, ``absorbing`` is
    the same edge set but marks the outermost shell as a killing set for
    chain constructions, and ``periodic`` wraps every coordinate modulo
    2L + 1.
    """

    d: int
    L: int
    boundary: str = "free"

    def __post_init__(self) -> None:
        if self.d < 1:
            raise GeometryError(f"dimension must be >= 1, got {self.d}")
        if self.L < 1:
            raise GeometryError(f"box half-width must be >= 1, got {self.L}")
        if self.boundary not in BOUNDARY_MODES:
            raise GeometryError(f"unknown boundary mode {self.boundary!r}")

    @property
    def side(self) -> int:
        return 2 * self.L + 1

    @property
    def nvertices(self) -> int:
        return self.side ** self.d

    def contains(self, x: Sequence[int]) -> bool:
        return len(x) == self.d and all(-self.L <= c <= self.L for c in x)

    def on_surface(self, x: Sequence[int]) -> bool:
        return self.contains(x) and max(abs(c) for c in x) == self.L

    def index(self, x: Sequence[int]) -> int:
        if not self.contains(x):
            raise GeometryError(f"vertex {tuple(x)} outside box L={self.L}")
        idx = 0
        for c in x:
            idx = idx * self.side + (c + self.L)
        return idx

    def vertex(self, idx: int) -> Vertex:
        if not 0 <= idx < self.nvertices:
            raise GeometryError(f"flat index {idx} out of range")
        coords = []
        for _ in range(self.d):
            coords.append(idx % self.side - self.L)
            idx //= self.side
        return tuple(reversed(coords))

    def vertices(self) -> Iterator[Vertex]:
        rng = range(-self.L, self.L + 1)
        return itertools.product(rng, repeat=self.d)

    def coordinate_grid(self) -> np.ndarray:
        """All vertices as an (nvertices, d) int64 array in flat-index order."""
        axes = [np.arange(-self.L, self.L + 1, dtype=np.int64)] * self.d
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def wrap(self, x: Sequence[int]) -> Vertex:
        s = self.side
        return tuple((c + self.L) % s - self.L for c in x)

    def index_array(self, coords: np.ndarray) -> np.ndarray:
        """Flat indices for an (N, d) coordinate array (no bounds check)."""
        idx = np.zeros(len(coords), dtype=np.int64)
        for a in range(self.d):
            idx = idx * self.side + (coords[:, a] + self.L)
        return idx


@dataclass(frozen=True)
class LatticeSpec:
    """Ambient lattice: either all of Z^d (lazy mode) or a finite box."""

    d: int
    mode: str = "lazy"
    box: Box | None = field(default=None)

    def __post_init__(self) -> None:
        if self.d < 1:
            raise GeometryError(f"dimension must be >= 1, got {self.d}")
        if self.mode not in ("lazy", "box"):
            raise GeometryError(f"unknown lattice mode {self.mode!r}")
        if self.mode == "box":
            if self.box is None:
                raise GeometryError("box mode requires a Box")
            if self.box.d != self.d:
                raise GeometryError("box dimension mismatch")
        elif self.box is not None:
            raise GeometryError("lazy mode takes no box")


def unit_vector(d: int, axis: int) -> Vertex:
    return tuple(1 if a == axis else 0 for a in range(d))


def neighbors(x: Sequence[int]) -> list[Vertex]:
    """The 2d nearest neighbours of x on Z^d, +axes first."""
    d = len(x)
    out = []
    for a in range(d):
        out.append(tuple(c + 1 if i == a else c for i, c in enumerate(x)))
    for a in range(d):
        out.append(tuple(c - 1 if i == a else c for i, c in enumerate(x)))
    return out


def sup_norm(x: Sequence[int]) -> int:
    return max(abs(c) for c in x)


def diffusive_time(k: int) -> int:
    """Time scale paired with annulus k: t_k = 4^k."""
    if k < 0:
        raise GeometryError("annulus index must be >= 0")
    return 4 ** k


def annulus_bounds(k: int, inner: bool = False) -> tuple[int, int]:
    """Inclusive |x|_inf range (lo, hi) of annulus k; lo > hi means empty.

    The full annulus k >= 1 is 2^(k-1) <= |x|_inf <= 2^k - 1; the safety
    margin variant shrinks three layers off each side, keeping every vertex
    at sup-distance >= 3 from the annulus complement.
    """
    if k < 0:
        raise GeometryError("annulus index must be >= 0")
    if k == 0:
        return (0, -1) if inner else (0, 0)
    lo, hi = 2 ** (k - 1), 2 ** k - 1
    if inner:
        lo, hi = lo + 3, hi - 3
    return lo, hi


def shell_size(d: int, m: int) -> int:
    """Number of x in Z^d with |x|_inf = m."""
    if m < 0:
        raise GeometryError("shell radius must be >= 0")
    if m == 0:
        return 1
    return (2 * m + 1) ** d - (2 * m - 1) ** d


def annulus_size(d: int, k: int, inner: bool = False) -> int:
    """Exact cardinality of annulus k on the infinite lattice."""
    lo, hi = annulus_bounds(k, inner=inner)
    if lo > hi:
        return 0
    if lo == 0:
        return (2 * hi + 1) ** d
    return (2 * hi + 1) ** d - (2 * lo - 1) ** d


def annulus_index_of(x: Sequence[int]) -> int:
    """The unique k with x in annulus k (0 for the origin)."""
    m = sup_norm(x) if any(x) else 0
    if m == 0:
        return 0
    return m.bit_length()


def annulus_members(d: int, k: int, inner: bool = False) -> Iterator[Vertex]:
    """Iterate the vertices of annulus k (use sparingly in high d)."""
    lo, hi = annulus_bounds(k, inner=inner)
    if lo > hi:
        return
    rng = range(-hi, hi + 1)
    for x in itertools.product(rng, repeat=d):
        if lo <= max(abs(c) for c in x) <= hi:
            yield x


def annulus_mask(box: Box, k: int, inner: bool = False) -> np.ndarray:
    """Boolean mask over flat box indices for membership in annulus k."""
    lo, hi = annulus_bounds(k, inner=inner)
    coords = box.coordinate_grid()
    m = np.abs(coords).max(axis=1)
    return (m >= lo) & (m <= hi)


def in_time_window(n: int, k: int) -> bool:
    """Whether t_k sits in the probe window exp((loglog n)^2) <= t_k <= n/log n."""
    if n < 3:
        return False
    t = diffusive_time(k)
    lo = math.exp(math.log(math.log(n)) ** 2)
    hi = n / math.log(n)
    return lo <= t <= hi


def window_indices(n: int) -> list[int]:
    """All annulus indices k whose time scale falls in the probe window."""
    out = []
    k = 1
    while diffusive_time(k) <= max(n, 4):
        if in_time_window(n, k):
            out.append(k)
        k += 1
    return out
