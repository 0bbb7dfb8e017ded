"""Random walk among the conductances: trajectory simulation, return-time
estimation, coarse-graining over the strong cluster, exact hiding times, and
confinement-event probabilities with their product lower bound.

The walk at x crosses each incident edge with probability proportional to
its weight; it never stays put.  All simulation randomness is counter-based
(see stream.py), so results are independent of batching and thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cluster import ClusterDecomposition
from .field import FieldLike, validate_seed
from .lattice import Vertex, annulus_bounds, diffusive_time, sup_norm
from .stream import WalkerStream, poisson_count, walker_uniforms_batch
from .traps import TrapRecord, is_trap_edge, trap_indicator

#: walkers per work unit; fixed so thread fan-out cannot change reductions
CHUNK = 1 << 15

#: hard cap on a single excursion off the cluster before we fail loudly
MAX_DWELL = 10**7


class WalkError(ValueError):
    """Raised for invalid walk requests (bad start, undefined quantities)."""


class _RowSampler:
    """Caches per-vertex cumulative transition weights for scalar stepping."""

    __slots__ = ("field", "cache")

    def __init__(self, field: FieldLike) -> None:
        self.field = field
        self.cache: dict[Vertex, tuple[list[Vertex], np.ndarray, float]] = {}

    def row(self, x: Vertex) -> tuple[list[Vertex], np.ndarray, float]:
        entry = self.cache.get(x)
        if entry is None:
            nbrs, w = self.field.incident(x)
            kept = [(nb, float(wi)) for nb, wi in zip(nbrs, w) if wi > 0.0]
            if not kept:
                raise WalkError(f"vertex {x} has no positive-weight edges")
            cum = np.cumsum([wi for _, wi in kept])
            entry = ([nb for nb, _ in kept], cum, float(cum[-1]))
            self.cache[x] = entry
        return entry

    def choose(self, x: Vertex, u: float) -> Vertex:
        nbrs, cum, total = self.row(x)
        i = int(np.searchsorted(cum, u * total, side="right"))
        if i >= len(nbrs):
            i = len(nbrs) - 1
        return nbrs[i]


def step(field: FieldLike, x, stream: WalkerStream, sampler: _RowSampler | None = None) -> Vertex:
    """One move of the walk from x, driven by the walker's stream."""
    if sampler is None:
        sampler = _RowSampler(field)
    return sampler.choose(tuple(x), stream.uniform())


def walk_path(field: FieldLike, x, stream: WalkerStream, steps: int) -> list[Vertex]:
    """The trajectory [X_0, ..., X_steps] started at x."""
    sampler = _RowSampler(field)
    path = [tuple(x)]
    for _ in range(steps):
        path.append(sampler.choose(path[-1], stream.uniform()))
    return path


# ---------------------------------------------------------------------------
# return-probability estimation (vectorized, chunked, thread-invariant)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReturnEstimate:
    """Binomial estimate of the even-time return probability P^{2n}(0,0)."""

    n: int
    walkers: int
    hits: int
    p_hat: float
    stderr: float
    seed: int


def _wrap_inplace(pos: np.ndarray, box) -> None:
    L = box.L
    np.mod(pos + L, box.side, out=pos)
    pos -= L


def _positions_chunk(
    field: FieldLike, start: Vertex, steps: int, seed: int, w0: int, w1: int
) -> np.ndarray:
    """Positions at time `steps` of walkers w0..w1-1, one row per walker."""
    ids = np.arange(w0, w1, dtype=np.int64)
    nw = ids.size
    d = field.d
    box = field.box
    periodic = box is not None and box.boundary == "periodic"
    pos = np.tile(np.asarray(start, dtype=np.int64), (nw, 1))
    rows = np.arange(nw)
    for s in range(steps):
        u = walker_uniforms_batch(seed, ids, s)
        cols = []
        for a in range(d):
            cols.append(field.edge_values_batch(pos, a))
        for a in range(d):
            tails = pos.copy()
            tails[:, a] -= 1
            if periodic:
                _wrap_inplace(tails, box)
            cols.append(field.edge_values_batch(tails, a))
        cum = np.cumsum(np.stack(cols, axis=1), axis=1)
        tot = cum[:, -1]
        if not np.all(tot > 0.0):
            raise WalkError("walker reached a vertex with no incident edges")
        choice = (cum > (u * tot)[:, None]).argmax(axis=1)
        ax = choice % d
        sign = np.where(choice < d, 1, -1).astype(np.int64)
        pos[rows, ax] += sign
        if periodic:
            _wrap_inplace(pos, box)
    return pos


def _return_chunk(field: FieldLike, start: Vertex, steps: int, seed: int, w0: int, w1: int) -> int:
    pos = _positions_chunk(field, start, steps, seed, w0, w1)
    target = np.asarray(start, dtype=np.int64)
    return int(np.count_nonzero(np.all(pos == target, axis=1)))


def terminal_positions(
    field: FieldLike,
    steps: int,
    walkers: int,
    seed: int,
    start=None,
) -> np.ndarray:
    """Positions X_steps of independent walkers, shape (walkers, d).

    Walker w's trajectory is the same pure function of (seed, w, step) used
    by simulate_return, so slices of the output are chunk-invariant.  The
    full position array is materialized: budget walkers * d * 8 bytes.
    """
    if steps < 0:
        raise WalkError(f"step count must be >= 0, got {steps}")
    if walkers < 1:
        raise WalkError(f"walker count must be >= 1, got {walkers}")
    seed = validate_seed(seed)
    start = tuple(start) if start is not None else (0,) * field.d
    box = field.box
    if box is not None and not box.contains(start):
        raise WalkError(f"start {start} outside the box")
    parts = [
        _positions_chunk(field, start, steps, seed, a, min(a + CHUNK, walkers))
        for a in range(0, walkers, CHUNK)
    ]
    return np.concatenate(parts, axis=0)


def simulate_return(
    field: FieldLike,
    n: int,
    walkers: int,
    seed: int,
    threads: int = 1,
    start=None,
) -> ReturnEstimate:
    """Unbiased Monte Carlo estimate of P^{2n}(start, start).

    Each walker's moves are a pure function of (seed, walker id, step), so
    the result depends only on (seed, walkers) — not on threads or chunking.
    """
    if n < 1:
        raise WalkError(f"horizon n must be >= 1, got {n}")
    if walkers < 1:
        raise WalkError(f"walker count must be >= 1, got {walkers}")
    seed = validate_seed(seed)
    d = field.d
    start = tuple(start) if start is not None else (0,) * d
    box = field.box
    if box is not None and not box.contains(start):
        raise WalkError(f"start {start} outside the box")
    steps = 2 * n
    chunks = [(a, min(a + CHUNK, walkers)) for a in range(0, walkers, CHUNK)]
    if threads <= 1 or len(chunks) == 1:
        hits = sum(_return_chunk(field, start, steps, seed, a, b) for a, b in chunks)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = pool.map(
                lambda bounds: _return_chunk(field, start, steps, seed, *bounds),
                chunks,
            )
            hits = sum(parts)
    p_hat = hits / walkers
    stderr = math.sqrt(p_hat * (1.0 - p_hat) / walkers)
    return ReturnEstimate(n=n, walkers=walkers, hits=hits, p_hat=p_hat, stderr=stderr, seed=seed)


# ---------------------------------------------------------------------------
# coarse-graining over the strong cluster
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoarsePath:
    """Cluster visits of a trajectory: points[j] is the j-th visited cluster
    vertex and durations[j] the real-time gap since the previous one
    (durations[0] is 0 by convention)."""

    points: tuple[Vertex, ...]
    durations: tuple[int, ...]

    @property
    def total_steps(self) -> int:
        return int(sum(self.durations))


def coarse_grain(dec: ClusterDecomposition, path) -> CoarsePath:
    """Coarse-grained view of a realized full trajectory.

    A trailing excursion that has not yet returned to the cluster is
    dropped, matching the streamed variant's behaviour.
    """
    path = [tuple(p) for p in path]
    if not path:
        raise WalkError("empty trajectory")
    if not dec.on_giant(path[0]):
        raise WalkError(f"trajectory starts off the cluster at {path[0]}")
    points = [path[0]]
    durations = [0]
    last = 0
    for i in range(1, len(path)):
        if dec.on_giant(path[i]):
            points.append(path[i])
            durations.append(i - last)
            last = i
    return CoarsePath(points=tuple(points), durations=tuple(durations))


def _induced_step(
    field: FieldLike,
    dec: ClusterDecomposition,
    x: Vertex,
    stream: WalkerStream,
    sampler: _RowSampler,
) -> tuple[Vertex, int]:
    """One step of the induced chain: walk until the cluster is next hit."""
    y = x
    for dwell in range(1, MAX_DWELL + 1):
        y = sampler.choose(y, stream.uniform())
        if dec.on_giant(y):
            return y, dwell
    raise WalkError(f"excursion from {x} exceeded {MAX_DWELL} steps")


def simulate_coarse(
    field: FieldLike,
    dec: ClusterDecomposition,
    start,
    n_coarse: int,
    stream: WalkerStream,
    sampler: _RowSampler | None = None,
) -> CoarsePath:
    """Stream the coarse-grained walk directly: n_coarse cluster visits."""
    start = tuple(start)
    if not dec.on_giant(start):
        raise WalkError(f"start {start} is off the cluster")
    if n_coarse < 0:
        raise WalkError(f"coarse step count must be >= 0, got {n_coarse}")
    if sampler is None:
        sampler = _RowSampler(field)
    points = [start]
    durations = [0]
    x = start
    for _ in range(n_coarse):
        x, dwell = _induced_step(field, dec, x, stream, sampler)
        points.append(x)
        durations.append(dwell)
    return CoarsePath(points=tuple(points), durations=tuple(durations))


# ---------------------------------------------------------------------------
# hiding times (exact linear solves) and the lazy-clock safety factor
# ---------------------------------------------------------------------------


def _hole_dwell(field: FieldLike, hole: tuple[Vertex, ...]) -> dict[Vertex, float]:
    """Expected absorption time onto the cluster from each vertex of a hole,
    via the exact linear system (I - P|_hole) h = 1."""
    box = field.box
    if box is not None and any(box.on_surface(v) for v in hole):
        raise WalkError(
            f"hole containing {hole[0]} touches the box surface; "
            "its hiding time is not defined by the finite window"
        )
    index = {v: i for i, v in enumerate(hole)}
    m = len(hole)
    mat = np.eye(m)
    for v in hole:
        nbrs, w = field.incident(v)
        total = float(w.sum())
        for nb, wi in zip(nbrs, w):
            if wi > 0.0 and nb in index:
                mat[index[v], index[nb]] -= float(wi) / total
    h = np.linalg.solve(mat, np.ones(m))
    return {v: float(h[index[v]]) for v in hole}


class _DwellCache:
    """Per-hole absorption-time solves, computed once per hole on demand."""

    def __init__(self, field: FieldLike, dec: ClusterDecomposition) -> None:
        self.field = field
        self.dec = dec
        self._by_hole: dict[Vertex, dict[Vertex, float]] = {}

    def dwell(self, v: Vertex) -> float:
        hole = self.dec.hole_of(v)
        key = hole[0]
        table = self._by_hole.get(key)
        if table is None:
            table = _hole_dwell(self.field, hole)
            self._by_hole[key] = table
        return table[v]


def _hiding_from_cluster(field: FieldLike, x: Vertex, cache: _DwellCache) -> float:
    nbrs, w = field.incident(x)
    total = float(w.sum())
    out = 1.0
    for nb, wi in zip(nbrs, w):
        if wi > 0.0 and not cache.dec.on_giant(nb):
            out += (float(wi) / total) * cache.dwell(nb)
    return out


def expected_hiding_time(field: FieldLike, dec: ClusterDecomposition, x) -> float:
    """Exact expected time, from x, until the walk next sits on the cluster.

    For x on the cluster this is 1 plus the weighted mean dwell of the
    adjacent holes; for x inside a hole it is the absorption time of that
    hole.  Holes touching the box surface make the quantity ill-defined and
    raise WalkError.
    """
    x = tuple(x)
    cache = _DwellCache(field, dec)
    if dec.on_giant(x):
        return _hiding_from_cluster(field, x, cache)
    return cache.dwell(x)


def estimate_beta(field: FieldLike, dec: ClusterDecomposition, safety: float = 1.25) -> float:
    """Weight-averaged hiding time over the cluster, inflated by `safety`.

    The average is taken with vertex weights pi(x), so the homogeneous
    environment gives exactly `safety`.
    """
    if safety <= 0:
        raise WalkError(f"safety factor must be positive, got {safety}")
    cache = _DwellCache(field, dec)
    num = 0.0
    den = 0.0
    for x in dec.giant_vertices():
        w = field.vertex_weight(x)
        num += w * _hiding_from_cluster(field, x, cache)
        den += w
    if den <= 0.0:
        raise WalkError("cluster carries no vertex weight")
    return safety * (num / den)


# ---------------------------------------------------------------------------
# trap-visit counting along the coarse walk
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RnkStats:
    """Per-walker counts of flagged inner-annulus visits in the dyadic time
    window [t_k, 2 t_k], plus the on-schedule event statistics."""

    n: int
    k: int
    t_k: int
    walkers: int
    beta: float
    mean: float
    variance: float
    stderr: float
    truncated_mean: float
    ek_frequency: float
    values: tuple[int, ...]
    ek_flags: tuple[bool, ...]


def sample_rnk(
    field: FieldLike,
    dec: ClusterDecomposition,
    n: int,
    k: int,
    beta: float,
    walkers: int,
    seed: int,
    start=None,
) -> RnkStats:
    """Sample the window count R = #{t_k <= l <= 2 t_k : coarse walk sits on
    a flagged vertex of the inner annulus}, together with the event that the
    first 2 t_k coarse steps took at most 2*beta*t_k real steps."""
    if k < 1:
        raise WalkError(f"annulus index must be >= 1, got {k}")
    if walkers < 1:
        raise WalkError(f"walker count must be >= 1, got {walkers}")
    if beta <= 0:
        raise WalkError(f"beta must be positive, got {beta}")
    seed = validate_seed(seed)
    t_k = diffusive_time(k)
    lo, hi = annulus_bounds(k, inner=True)
    start = tuple(start) if start is not None else (0,) * field.d
    if not dec.on_giant(start):
        raise WalkError(f"start {start} is off the cluster")
    sampler = _RowSampler(field)
    flag_cache: dict[Vertex, bool] = {}

    def flagged(v: Vertex) -> bool:
        hit = flag_cache.get(v)
        if hit is None:
            hit = trap_indicator(field, v, n)
            flag_cache[v] = hit
        return hit

    budget = 2 * beta * t_k
    values: list[int] = []
    ek_flags: list[bool] = []
    for wid in range(walkers):
        stream = WalkerStream(seed=seed, walker_id=wid)
        x = start
        total_steps = 0
        count = 0
        for ell in range(1, 2 * t_k + 1):
            x, dwell = _induced_step(field, dec, x, stream, sampler)
            total_steps += dwell
            if ell >= t_k and lo <= sup_norm(x) <= hi and flagged(x):
                count += 1
        values.append(count)
        ek_flags.append(total_steps <= budget)
    arr = np.asarray(values, dtype=np.float64)
    mask = np.asarray(ek_flags, dtype=np.float64)
    mean = float(arr.mean())
    variance = float(arr.var(ddof=1)) if walkers > 1 else 0.0
    stderr = math.sqrt(variance / walkers)
    return RnkStats(
        n=n,
        k=k,
        t_k=t_k,
        walkers=walkers,
        beta=beta,
        mean=mean,
        variance=variance,
        stderr=stderr,
        truncated_mean=float((arr * mask).mean()),
        ek_frequency=float(mask.mean()),
        values=tuple(values),
        ek_flags=tuple(ek_flags),
    )


# ---------------------------------------------------------------------------
# confinement events: exact probability and the product lower bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrapEventResult:
    """Exact probability of entering a trap at a given time and staying on
    it through the horizon, with the closed-form lower bound."""

    exact: float
    lower_bound: float
    holds: bool
    entry_vertex: Vertex
    ell: int
    n: int


def _entry_endpoint_for(x: Vertex, endpoints: tuple[Vertex, Vertex]) -> Vertex:
    y0, y1 = endpoints
    adj = [p for p in endpoints if sum(abs(a - b) for a, b in zip(p, x)) == 1]
    if tuple(x) in endpoints:
        raise WalkError(f"{x} lies on the trap edge itself")
    if len(adj) != 1:
        raise WalkError(f"{x} is not adjacent to exactly one trap endpoint")
    return adj[0]


def trap_event_probability(
    field: FieldLike,
    x,
    trap: TrapRecord,
    n: int,
    ell: int,
    arrival_prob: float = 1.0,
) -> TrapEventResult:
    """P(enter the trap from x at time ell+1 and stay on it through time n),
    conditionally on arriving at x at time ell with probability
    `arrival_prob`, together with the bound
    arrival * (2 d n)^{-1} * (1 + 4(2d-1)/n)^{ell-n}.
    """
    x = tuple(x)
    if not 0 <= ell < n / 2:
        raise WalkError(f"entry time ell={ell} outside [0, n/2) for n={n}")
    if not 0.0 <= arrival_prob <= 1.0:
        raise WalkError(f"arrival probability {arrival_prob} outside [0, 1]")
    if not is_trap_edge(field, trap.tail, trap.axis, n, strict=False):
        raise WalkError(
            f"edge ({trap.tail}, axis {trap.axis}) is not a trap at scale {n}"
        )
    y = _entry_endpoint_for(x, trap.endpoints)
    z = trap.endpoints[0] if y == trap.endpoints[1] else trap.endpoints[1]
    w_entry = field.edge_value_between(x, y)
    strong = field.edge_value(trap.tail, trap.axis)
    pi_x = field.vertex_weight(x)
    pi = {y: field.vertex_weight(y), z: field.vertex_weight(z)}
    prob = arrival_prob * (w_entry / pi_x)
    here = y
    for _ in range(n - ell - 1):
        prob *= strong / pi[here]
        here = z if here == y else y
    d = field.d
    bound = arrival_prob * (1.0 / (2 * d * n)) * (1.0 + 4.0 * (2 * d - 1) / n) ** (ell - n)
    return TrapEventResult(
        exact=prob,
        lower_bound=bound,
        holds=prob >= bound,
        entry_vertex=y,
        ell=ell,
        n=n,
    )


def trap_visit_events(path, trap: TrapRecord, n: int) -> list[tuple[Vertex, int]]:
    """All (x, ell) pairs realized by the trajectory: sitting at x at time
    ell, entering the trap at ell+1, and staying on it through time n.

    Distinct pairs are mutually exclusive for one trajectory, so the result
    has at most one element; callers assert this on simulated traces.
    """
    path = [tuple(p) for p in path]
    if len(path) < n + 1:
        raise WalkError(f"trajectory shorter than horizon n={n}")
    y0, y1 = trap.endpoints
    on_trap = {y0, y1}
    events: list[tuple[Vertex, int]] = []
    for ell in range(0, n):
        x = path[ell]
        if x in on_trap:
            continue
        adj = [p for p in (y0, y1) if sum(abs(a - b) for a, b in zip(p, x)) == 1]
        if len(adj) != 1:
            continue
        entry = adj[0]
        if path[ell + 1] != entry:
            continue
        if all(path[m] in on_trap for m in range(ell + 1, n + 1)):
            events.append((x, ell))
    assert len(events) <= 1, "confinement events must be mutually exclusive"
    return events


# ---------------------------------------------------------------------------
# continuous-time view of the coarse walk
# ---------------------------------------------------------------------------


def simulate_ct(
    field: FieldLike,
    dec: ClusterDecomposition,
    x,
    t: float,
    stream: WalkerStream,
    return_jumps: bool = False,
):
    """Position at continuous time t of the coarse walk run at unit rate:
    the number of jumps is Poisson(t), drawn from the stream first, followed
    by that many induced-chain steps."""
    x = tuple(x)
    if not dec.on_giant(x):
        raise WalkError(f"start {x} is off the cluster")
    if t < 0:
        raise WalkError(f"time must be nonnegative, got {t}")
    jumps = poisson_count(stream, float(t))
    sampler = _RowSampler(field)
    for _ in range(jumps):
        x, _ = _induced_step(field, dec, x, stream, sampler)
    if return_jumps:
        return x, jumps
    return x
