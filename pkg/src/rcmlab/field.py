"""Conductance environments: deterministic i.i.d. edge weights on Z^d.

Every edge owns a canonical key (its lexicographically smaller endpoint plus
the axis index), and its weight is a pure function of (seed, key): a 64-bit
avalanche hash of the key words drives the atom choice through the law's
cumulative table.  Lazy fields evaluate edges on demand over all of Z^d;
dense fields pre-tabulate the same function over a finite box, so the two
storages agree bit-for-bit on shared edges.  Scalar and vectorized paths use
the identical integer arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .lattice import Box, GeometryError, LatticeSpec, Vertex, neighbors
from .law import ConductanceLaw

MASK64 = (1 << 64) - 1
GOLD = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
EDGE_TAG = 0xE5D1_6E3F_0A77_2B01
STEP_TAG = 0x5AFE_57E9_11C0_93F7
CLOCK_TAG = 0xC10C_4DAA_8F2E_6655


class FieldError(ValueError):
    """Raised for out-of-range edge queries or bad field construction."""


def _mix_scalar(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def hash_words(seed: int, words: Sequence[int], tag: int) -> int:
    """Fold integer words (two's complement) into one 64-bit hash."""
    h = _mix_scalar((seed & MASK64) ^ tag)
    for w in words:
        h = _mix_scalar(h ^ ((int(w) & MASK64) * GOLD & MASK64))
    return h


def uniform_from_hash(h: int) -> float:
    """53-bit uniform in [0, 1) from a 64-bit hash."""
    return (h >> 11) * 2.0 ** -53


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


def hash_words_array(seed: int, columns: Iterable[np.ndarray], tag: int, n: int) -> np.ndarray:
    """Vectorized hash_words over N keys given as per-word columns."""
    h0 = _mix_scalar((seed & MASK64) ^ tag)
    h = np.full(n, h0, dtype=np.uint64)
    gold = np.uint64(GOLD)
    for col in columns:
        w = np.asarray(col).astype(np.int64).astype(np.uint64)
        h = _mix_array(h ^ (w * gold))
    return h


def uniforms_from_hashes(h: np.ndarray) -> np.ndarray:
    return (h >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def canonical_edge(u: Sequence[int], v: Sequence[int]) -> tuple[Vertex, int]:
    """Canonical (tail, axis) key of the edge {u, v}; tail is the lex-smaller end."""
    if len(u) != len(v):
        raise FieldError("endpoint dimension mismatch")
    axis = -1
    for a, (cu, cv) in enumerate(zip(u, v)):
        if cu != cv:
            if axis >= 0 or abs(cu - cv) != 1:
                raise FieldError(f"{tuple(u)} and {tuple(v)} are not nearest neighbours")
            axis = a
    if axis < 0:
        raise FieldError("endpoints coincide")
    tail = tuple(u) if u[axis] < v[axis] else tuple(v)
    return tail, axis


def validate_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise FieldError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


class ConductanceField:
    """Edge-weight environment over a lazy Z^d lattice or a finite box."""

    def __init__(
        self,
        lattice: LatticeSpec,
        law: ConductanceLaw,
        seed: int,
        storage: str = "lazy",
    ) -> None:
        if storage not in ("lazy", "dense"):
            raise FieldError(f"unknown storage mode {storage!r}")
        if storage == "dense" and lattice.mode != "box":
            raise FieldError("dense storage requires a box lattice")
        self.lattice = lattice
        self.law = law
        self.seed = validate_seed(seed)
        self.storage = storage
        self._cdf = law.cdf()
        self._values = law.values_array()
        self._tables: list[np.ndarray] | None = None
        if storage == "dense":
            self._tables = self._build_tables()

    # -- basic geometry ----------------------------------------------------

    @property
    def d(self) -> int:
        return self.lattice.d

    @property
    def box(self) -> Box | None:
        return self.lattice.box

    def _check_tail(self, tail: Sequence[int], axis: int) -> None:
        if not 0 <= axis < self.d:
            raise FieldError(f"axis {axis} out of range for d={self.d}")
        box = self.box
        if box is None:
            return
        if not box.contains(tail):
            raise FieldError(f"edge tail {tuple(tail)} outside box")
        if box.boundary != "periodic" and tail[axis] >= box.L:
            raise FieldError(f"edge ({tuple(tail)}, axis {axis}) leaves the box")

    def edge_exists(self, tail: Sequence[int], axis: int) -> bool:
        box = self.box
        if box is None:
            return True
        if not box.contains(tail):
            return False
        return box.boundary == "periodic" or tail[axis] < box.L

    # -- scalar evaluation ---------------------------------------------------

    def edge_uniform(self, tail: Sequence[int], axis: int) -> float:
        words = list(tail) + [axis]
        return uniform_from_hash(hash_words(self.seed, words, EDGE_TAG))

    def edge_value(self, tail: Sequence[int], axis: int) -> float:
        self._check_tail(tail, axis)
        if self._tables is not None:
            return float(self._tables[axis][self.box.index(tail)])
        return self.law.sample_from_uniform(self.edge_uniform(tail, axis))

    def edge_value_between(self, u: Sequence[int], v: Sequence[int]) -> float:
        tail, axis = canonical_edge(u, v)
        return self.edge_value(tail, axis)

    def incident(self, x: Sequence[int]) -> tuple[list[Vertex], np.ndarray]:
        """Neighbours of x (+axes then -axes) and the matching edge weights.

        Missing box edges carry weight 0 so that cumulative sampling and
        vertex weights fall out of the same array.
        """
        box = self.box
        if box is not None and not box.contains(x):
            raise FieldError(f"vertex {tuple(x)} outside box")
        nbrs = neighbors(x)
        d = self.d
        w = np.zeros(2 * d, dtype=np.float64)
        for a in range(d):
            if self.edge_exists(x, a):
                w[a] = self.edge_value(x, a)
        for a in range(d):
            tail = tuple(c - 1 if i == a else c for i, c in enumerate(x))
            if box is not None and box.boundary == "periodic" and not box.contains(tail):
                tail = box.wrap(tail)
            if self.edge_exists(tail, a):
                w[d + a] = self.edge_value(tail, a)
        if box is not None and box.boundary == "periodic":
            nbrs = [box.wrap(y) for y in nbrs]
        return nbrs, w

    def vertex_weight(self, x: Sequence[int]) -> float:
        """Total conductance pi(x) at x; errors off-box in dense mode."""
        _, w = self.incident(x)
        total = float(w.sum())
        if total <= 0.0:
            raise FieldError(f"vertex {tuple(x)} has no incident edges")
        return total

    # -- vectorized evaluation ----------------------------------------------

    def edge_uniforms_batch(self, tails: np.ndarray, axis: int) -> np.ndarray:
        n = len(tails)
        cols = [tails[:, a] for a in range(self.d)]
        cols.append(np.full(n, axis, dtype=np.int64))
        return uniforms_from_hashes(hash_words_array(self.seed, cols, EDGE_TAG, n))

    def edge_values_batch(self, tails: np.ndarray, axis: int) -> np.ndarray:
        """Weights of the edges (tails, tails + e_axis); 0 where absent."""
        box = self.box
        if self._tables is not None:
            assert box is not None
            inside = np.all(np.abs(tails) <= box.L, axis=1)
            if box.boundary != "periodic":
                inside &= tails[:, axis] < box.L
            out = np.zeros(len(tails), dtype=np.float64)
            if inside.any():
                idx = box.index_array(tails[inside])
                out[inside] = self._tables[axis][idx]
            return out
        u = self.edge_uniforms_batch(tails, axis)
        idx = np.minimum(
            np.searchsorted(self._cdf, u, side="right"), self.law.natoms - 1
        )
        return self._values[idx]

    def _build_tables(self) -> list[np.ndarray]:
        box = self.box
        coords = box.coordinate_grid()
        tables = []
        for a in range(self.d):
            u = self.edge_uniforms_batch(coords, a)
            idx = np.minimum(
                np.searchsorted(self._cdf, u, side="right"), self.law.natoms - 1
            )
            vals = self._values[idx]
            if box.boundary != "periodic":
                vals = vals.copy()
                vals[coords[:, a] >= box.L] = 0.0
            tables.append(vals)
        return tables

    def edge_table(self, axis: int) -> np.ndarray:
        if self._tables is None:
            raise FieldError("edge tables exist only for dense storage")
        return self._tables[axis]

    def with_patches(self, patches: Mapping[tuple[Vertex, int], float]) -> "PatchedField":
        return PatchedField(self, patches)


class PatchedField:
    """A field with finitely many edges overridden by explicit values.

    Used to plant traps, corridors, and hand-built configurations on top of
    a sampled or homogeneous background.
    """

    def __init__(self, base: ConductanceField, patches: Mapping[tuple[Vertex, int], float]) -> None:
        self.base = base
        norm: dict[tuple[Vertex, int], float] = {}
        for (tail, axis), value in patches.items():
            if not (0.0 < value <= 1.0):
                raise FieldError(f"patched weight {value} outside (0, 1]")
            base._check_tail(tail, axis)
            norm[(tuple(tail), int(axis))] = float(value)
        self.patches = norm

    @property
    def d(self) -> int:
        return self.base.d

    @property
    def box(self):
        return self.base.box

    @property
    def lattice(self) -> LatticeSpec:
        return self.base.lattice

    @property
    def law(self) -> ConductanceLaw:
        return self.base.law

    @property
    def seed(self) -> int:
        return self.base.seed

    def edge_exists(self, tail: Sequence[int], axis: int) -> bool:
        return self.base.edge_exists(tail, axis)

    def edge_value(self, tail: Sequence[int], axis: int) -> float:
        key = (tuple(tail), int(axis))
        if key in self.patches:
            self.base._check_tail(tail, axis)
            return self.patches[key]
        return self.base.edge_value(tail, axis)

    def edge_value_between(self, u: Sequence[int], v: Sequence[int]) -> float:
        tail, axis = canonical_edge(u, v)
        return self.edge_value(tail, axis)

    def incident(self, x: Sequence[int]) -> tuple[list[Vertex], np.ndarray]:
        nbrs, w = self.base.incident(x)
        d = self.d
        box = self.box
        for a in range(d):
            if self.base.edge_exists(x, a):
                key = (tuple(x), a)
                if key in self.patches:
                    w[a] = self.patches[key]
        for a in range(d):
            tail = tuple(c - 1 if i == a else c for i, c in enumerate(x))
            if box is not None and box.boundary == "periodic" and not box.contains(tail):
                tail = box.wrap(tail)
            if self.base.edge_exists(tail, a):
                key = (tuple(tail), a)
                if key in self.patches:
                    w[d + a] = self.patches[key]
        return nbrs, w

    def vertex_weight(self, x: Sequence[int]) -> float:
        _, w = self.incident(x)
        total = float(w.sum())
        if total <= 0.0:
            raise FieldError(f"vertex {tuple(x)} has no incident edges")
        return total

    def edge_values_batch(self, tails: np.ndarray, axis: int) -> np.ndarray:
        out = self.base.edge_values_batch(tails, axis)
        for (tail, a), value in self.patches.items():
            if a != axis:
                continue
            hit = np.all(tails == np.asarray(tail, dtype=np.int64), axis=1)
            if hit.any():
                out[hit] = value
        return out

    def with_patches(self, patches: Mapping[tuple[Vertex, int], float]) -> "PatchedField":
        merged = dict(self.patches)
        merged.update({(tuple(t), int(a)): v for (t, a), v in patches.items()})
        return PatchedField(self.base, merged)


FieldLike = ConductanceField | PatchedField


def homogeneous_field(lattice: LatticeSpec, seed: int = 0, storage: str | None = None) -> ConductanceField:
    """The all-ones environment on the requested lattice."""
    from .law import uniform_law

    if storage is None:
        storage = "dense" if lattice.mode == "box" else "lazy"
    return ConductanceField(lattice, uniform_law(), seed, storage=storage)


def box_field(law: ConductanceLaw, d: int, L: int, seed: int, boundary: str = "free") -> ConductanceField:
    """Convenience constructor for a dense box field."""
    box = Box(d=d, L=L, boundary=boundary)
    return ConductanceField(LatticeSpec(d=d, mode="box", box=box), law, seed, storage="dense")


def lazy_field(law: ConductanceLaw, d: int, seed: int) -> ConductanceField:
    return ConductanceField(LatticeSpec(d=d, mode="lazy"), law, seed, storage="lazy")
