"""Finite-state transition kernels and heat-kernel evaluation.

Four chain flavours share one container: the walk on all box vertices
("full"), the walk observed on the giant strong component with holes
integrated out exactly ("induced"), the delayed strong-edge walk that is
reversible for the full vertex weights ("lazy"), and the unit-conductance
strong-edge walk ("unit").  Heat kernels come from sparse matrix powers;
continuous time uses uniformization with a certified Poisson tail.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.special import gammainc, gammaln

from .cluster import ClusterDecomposition
from .field import FieldLike
from .lattice import Box, Vertex, annulus_size, unit_vector

__all__ = [
    "ChainError",
    "FiniteChain",
    "KernelVector",
    "AnnulusBound",
    "DecayProfile",
    "build_chain",
    "heat_kernel",
    "ct_heat_kernel",
    "annulus_lower_bound",
    "diagonal_decay_profile",
]

CHAIN_KINDS = ("full", "induced", "lazy", "unit")

#: Default certified bound on the discarded Poisson tail in uniformization.
CT_TAIL = 1e-14

#: Hard cap on uniformization terms before giving up.
CT_MAX_TERMS = 2_000_000


class ChainError(ValueError):
    """Raised for invalid chain constructions or violated invariants."""


@dataclass
class FiniteChain:
    """A reversible finite-state Markov chain with explicit weights.

    ``kernel`` is row-stochastic; ``weights`` is the reversing measure
    (total incident conductance for full/induced/lazy, strong degree for
    unit).  States are vertex tuples in flat box order.
    """

    kind: str
    d: int
    states: tuple[Vertex, ...]
    kernel: sparse.csr_matrix
    weights: np.ndarray
    alpha: float | None = None
    cluster: ClusterDecomposition | None = None
    field: FieldLike | None = None
    _index: dict[Vertex, int] | None = dataclass_field(default=None, repr=False)
    _kernel_t: sparse.csr_matrix | None = dataclass_field(default=None, repr=False)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def index(self) -> dict[Vertex, int]:
        if self._index is None:
            self._index = {v: i for i, v in enumerate(self.states)}
        return self._index

    def state_index(self, x: Sequence[int]) -> int:
        try:
            return self.index[tuple(x)]
        except KeyError:
            raise ChainError(f"vertex {tuple(x)} is not a state of this chain")

    @property
    def kernel_t(self) -> sparse.csr_matrix:
        """Transpose kernel, cached for distribution pushforwards."""
        if self._kernel_t is None:
            self._kernel_t = self.kernel.T.tocsr()
        return self._kernel_t

    def matrix(self) -> np.ndarray:
        return self.kernel.toarray()

    def conductance_matrix(self) -> np.ndarray:
        """Symmetric edge conductances w(x)K(x,y) of the chain (dense)."""
        return self.weights[:, None] * self.matrix()

    def row_sum_error(self) -> float:
        return float(np.abs(np.asarray(self.kernel.sum(axis=1)).ravel() - 1.0).max())

    def detailed_balance_error(self) -> float:
        c = self.conductance_matrix()
        return float(np.abs(c - c.T).max())

    def check_invariants(self, tol: float = 1e-12) -> None:
        if self.kernel.nnz and self.kernel.data.min() < -tol:
            raise ChainError("kernel has negative entries")
        err = self.row_sum_error()
        if err > tol:
            raise ChainError(f"rows deviate from stochasticity by {err:.3e}")
        if self.n_states <= 4000:
            balance = self.detailed_balance_error()
            scale = max(1.0, float(self.weights.max()))
            if balance > tol * scale:
                raise ChainError(f"detailed balance violated by {balance:.3e}")

    def restrict(self, alive: np.ndarray) -> tuple[sparse.csr_matrix, np.ndarray]:
        """Sub-kernel and weights on a surviving index set (killing)."""
        sub = self.kernel[alive][:, alive].tocsr()
        return sub, self.weights[alive]


@dataclass
class KernelVector:
    """One heat-kernel row: state occupation from a fixed start.

    ``distribution`` holds probabilities; ``values`` the weight-normalized
    kernel (distribution divided by the reversing measure), which is the
    symmetric object for continuous time.
    """

    chain: FiniteChain
    base: Vertex
    time: float
    kind: str  # "discrete" | "continuous"
    distribution: np.ndarray
    values: np.ndarray

    def mass(self) -> float:
        return float(self.distribution.sum())

    def at(self, x: Sequence[int]) -> float:
        return float(self.values[self.chain.state_index(x)])

    def probability(self, x: Sequence[int]) -> float:
        return float(self.distribution[self.chain.state_index(x)])


# ---------------------------------------------------------------------------
# chain construction


def _full_chain(field: FieldLike, box: Box) -> FiniteChain:
    if box.boundary not in ("free", "periodic"):
        raise ChainError("full chains support free or periodic boundaries only")
    grid = box.coordinate_grid()
    n = len(grid)
    d = box.d
    periodic = box.boundary == "periodic"
    all_idx = np.arange(n, dtype=np.int64)

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    pi = np.zeros(n, dtype=np.float64)
    for a in range(d):
        w_plus = field.edge_values_batch(grid, a)
        mask = np.ones(n, dtype=bool) if periodic else grid[:, a] < box.L
        w_plus = np.where(mask, w_plus, 0.0)
        heads = grid.copy()
        heads[:, a] += 1
        if periodic:
            over = heads[:, a] > box.L
            heads[over, a] = -box.L
        keep = w_plus > 0.0
        rows.append(all_idx[keep])
        cols.append(box.index_array(heads[keep]))
        vals.append(w_plus[keep])
        pi += w_plus

        tails = grid.copy()
        tails[:, a] -= 1
        if periodic:
            under = tails[:, a] < -box.L
            tails[under, a] = box.L
            w_minus = field.edge_values_batch(tails, a)
        else:
            inside = grid[:, a] > -box.L
            w_minus = np.zeros(n, dtype=np.float64)
            if inside.any():
                w_minus[inside] = field.edge_values_batch(tails[inside], a)
        keep = w_minus > 0.0
        rows.append(all_idx[keep])
        cols.append(box.index_array(tails[keep]))
        vals.append(w_minus[keep])
        pi += w_minus

    if (pi <= 0.0).any():
        raise ChainError("isolated vertex: zero total conductance")
    data = np.concatenate(vals)
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    kernel = sparse.coo_matrix((data / pi[r], (r, c)), shape=(n, n)).tocsr()
    # duplicate (row, col) pairs cannot occur: each directed edge appears once
    states = tuple(box.vertex(int(i)) for i in range(n))
    return FiniteChain(
        kind="full", d=d, states=states, kernel=kernel, weights=pi, field=field
    )


def _hole_absorption(
    field: FieldLike,
    dec: ClusterDecomposition,
    hole: tuple[Vertex, ...],
) -> tuple[list[Vertex], np.ndarray]:
    """Exit distribution onto the giant for each start inside a hole.

    Returns the giant boundary vertices and the |hole| x |boundary| matrix of
    absorption probabilities from a dense linear solve.
    """
    box = dec.box
    for v in hole:
        if box.on_surface(v):
            raise ChainError(
                f"hole vertex {v} touches the box surface; the exit law "
                "would be distorted by the boundary"
            )
    local = {v: i for i, v in enumerate(hole)}
    m = len(hole)
    inner = np.zeros((m, m), dtype=np.float64)
    boundary: dict[Vertex, int] = {}
    bcols: list[tuple[int, int, float]] = []
    for v in hole:
        nbrs, w = field.incident(v)
        total = w.sum()
        if total <= 0.0:
            raise ChainError(f"hole vertex {v} has zero conductance")
        for y, wy in zip(nbrs, w):
            if wy <= 0.0:
                continue
            p = wy / total
            if y in local:
                inner[local[v], local[y]] += p
            else:
                if not dec.on_giant(y):
                    raise ChainError(
                        f"hole neighbour {y} lies on another weak component"
                    )
                j = boundary.setdefault(y, len(boundary))
                bcols.append((local[v], j, p))
    b = np.zeros((m, len(boundary)), dtype=np.float64)
    for i, j, p in bcols:
        b[i, j] += p
    try:
        absorb = np.linalg.solve(np.eye(m) - inner, b)
    except np.linalg.LinAlgError as exc:
        raise ChainError(f"singular hole solve for hole at {hole[0]}") from exc
    row_err = np.abs(absorb.sum(axis=1) - 1.0).max()
    if row_err > 1e-9:
        raise ChainError(f"hole exit law fails to conserve mass by {row_err:.3e}")
    exits = list(boundary.keys())
    return exits, absorb


def _cluster_chain(
    field: FieldLike, dec: ClusterDecomposition, kind: str, alpha: float
) -> FiniteChain:
    states = tuple(dec.giant_vertices())
    if not states:
        raise ChainError("empty giant component")
    index = {v: i for i, v in enumerate(states)}
    n = len(states)
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    weights = np.zeros(n, dtype=np.float64)

    if kind == "unit":
        for i, x in enumerate(states):
            nbrs = dec.strong_neighbors(x)
            deg = len(nbrs)
            if deg == 0:
                raise ChainError(f"giant vertex {x} has no strong edges")
            weights[i] = float(deg)
            for y in nbrs:
                rows.append(i)
                cols.append(index[y])
                vals.append(1.0 / deg)
    elif kind == "lazy":
        for i, x in enumerate(states):
            pi = field.vertex_weight(x)
            weights[i] = pi
            nbrs = dec.strong_neighbors(x)
            if not nbrs:
                raise ChainError(f"giant vertex {x} has no strong edges")
            stay = 1.0 - alpha * len(nbrs) / pi
            if stay < -1e-12:
                raise ChainError(
                    f"delay probability negative at {x}: alpha too large"
                )
            rows.append(i)
            cols.append(i)
            vals.append(max(stay, 0.0))
            for y in nbrs:
                rows.append(i)
                cols.append(index[y])
                vals.append(alpha / pi)
    elif kind == "induced":
        hole_cache: dict[Vertex, tuple[list[Vertex], np.ndarray]] = {}
        for i, x in enumerate(states):
            nbrs, w = field.incident(x)
            pi = float(w.sum())
            weights[i] = pi
            acc: dict[int, float] = {}
            for y, wy in zip(nbrs, w):
                if wy <= 0.0:
                    continue
                p = wy / pi
                if dec.on_giant(y):
                    acc[index[y]] = acc.get(index[y], 0.0) + p
                else:
                    hole = dec.hole_of(y)
                    key = hole[0]
                    if key not in hole_cache:
                        hole_cache[key] = _hole_absorption(field, dec, hole)
                    exits, absorb = hole_cache[key]
                    local = hole.index(y)
                    for z, pz in zip(exits, absorb[local]):
                        if pz > 0.0:
                            j = index[z]
                            acc[j] = acc.get(j, 0.0) + p * pz
            for j, p in acc.items():
                rows.append(i)
                cols.append(j)
                vals.append(p)
    else:  # pragma: no cover - guarded by build_chain
        raise ChainError(f"unknown chain kind {kind!r}")

    kernel = sparse.coo_matrix(
        (np.array(vals), (np.array(rows), np.array(cols))), shape=(n, n)
    ).tocsr()
    return FiniteChain(
        kind=kind,
        d=dec.box.d,
        states=states,
        kernel=kernel,
        weights=weights,
        alpha=alpha,
        cluster=dec,
        field=field,
    )


def build_chain(
    field: FieldLike,
    support: Box | ClusterDecomposition,
    kind: str,
    alpha: float | None = None,
) -> FiniteChain:
    """Assemble one of the four chain flavours and check its invariants."""
    if kind not in CHAIN_KINDS:
        raise ChainError(f"kind must be one of {CHAIN_KINDS}, got {kind!r}")
    if kind == "full":
        if not isinstance(support, Box):
            raise ChainError("full chains are built over a Box")
        chain = _full_chain(field, support)
    else:
        if not isinstance(support, ClusterDecomposition):
            raise ChainError(f"{kind} chains are built over a decomposition")
        a = support.alpha if alpha is None else float(alpha)
        if abs(a - support.alpha) > 1e-15:
            raise ChainError(
                f"alpha {a} disagrees with the decomposition's {support.alpha}"
            )
        chain = _cluster_chain(field, support, kind, a)
    chain.check_invariants()
    return chain


# ---------------------------------------------------------------------------
# heat kernels


def heat_kernel(chain: FiniteChain, z: Sequence[int], n: int) -> KernelVector:
    """Distribution after n steps from z, by repeated sparse pushforward."""
    if n < 0:
        raise ChainError(f"step count must be nonnegative, got {n}")
    i = chain.state_index(z)
    mu = np.zeros(chain.n_states, dtype=np.float64)
    mu[i] = 1.0
    kt = chain.kernel_t
    for _ in range(n):
        mu = kt @ mu
    return KernelVector(
        chain=chain,
        base=tuple(z),
        time=float(n),
        kind="discrete",
        distribution=mu,
        values=mu / chain.weights,
    )


def poisson_term_count(t: float, tail: float) -> int:
    """Smallest N with P(Poisson(t) > N) below the requested tail."""
    if t <= 0.0:
        return 0
    n = int(t + 12.0 * np.sqrt(t + 1.0) + 30.0)
    while gammainc(n + 1, t) >= tail:
        n = int(n * 1.3) + 20
        if n > CT_MAX_TERMS:
            raise ChainError(
                f"uniformization needs more than {CT_MAX_TERMS} terms at t={t}"
            )
    return n


def ct_heat_kernel(
    chain: FiniteChain,
    z: Sequence[int],
    t: float,
    tail: float = CT_TAIL,
) -> KernelVector:
    """Continuous-time kernel at rate-one jumps, via uniformization.

    ``values`` is the weight-normalized kernel; ``distribution`` are the
    occupation probabilities, missing at most ``tail`` of the mass.
    """
    if t < 0.0:
        raise ChainError(f"time must be nonnegative, got {t}")
    i = chain.state_index(z)
    mu = np.zeros(chain.n_states, dtype=np.float64)
    mu[i] = 1.0
    if t == 0.0:
        return KernelVector(
            chain=chain,
            base=tuple(z),
            time=0.0,
            kind="continuous",
            distribution=mu,
            values=mu / chain.weights,
        )
    nterms = poisson_term_count(t, tail)
    ns = np.arange(nterms + 1, dtype=np.float64)
    log_pmf = -t + ns * np.log(t) - gammaln(ns + 1.0)
    pmf = np.exp(log_pmf)
    kt = chain.kernel_t
    out = pmf[0] * mu
    for k in range(1, nterms + 1):
        mu = kt @ mu
        if pmf[k] > 0.0:
            out += pmf[k] * mu
    return KernelVector(
        chain=chain,
        base=tuple(z),
        time=float(t),
        kind="continuous",
        distribution=out,
        values=out / chain.weights,
    )


def ct_kernel_matrix(
    chain: FiniteChain, t: float, tail: float = CT_TAIL
) -> np.ndarray:
    """Dense matrix of weight-normalized continuous-time kernels q_t(x, y)."""
    n = chain.n_states
    if n > 2500:
        raise ChainError("dense kernel matrix restricted to small chains")
    if t < 0.0:
        raise ChainError(f"time must be nonnegative, got {t}")
    if t == 0.0:
        acc = np.eye(n)
    else:
        nterms = poisson_term_count(t, tail)
        ns = np.arange(nterms + 1, dtype=np.float64)
        pmf = np.exp(-t + ns * np.log(t) - gammaln(ns + 1.0))
        dense = chain.matrix()
        power = np.eye(n)
        acc = pmf[0] * power
        for k in range(1, nterms + 1):
            power = power @ dense
            acc += pmf[k] * power
    return acc / chain.weights[None, :]


# ---------------------------------------------------------------------------
# annulus decomposition bound


@dataclass(frozen=True)
class AnnulusBound:
    """Both sides of the return-probability annulus decomposition bound."""

    n: int
    lhs: float
    rhs: float
    masses: tuple[float, ...]
    sizes: tuple[int, ...]

    @property
    def gap(self) -> float:
        return self.lhs - self.rhs

    @property
    def holds(self) -> bool:
        return self.lhs >= self.rhs - 1e-10


def annulus_lower_bound(field: FieldLike, box: Box, n: int) -> AnnulusBound:
    """Check P^{2n}(0,0) >= (pi(0)/2d) sum_k P(X_n in B_k)^2 / |B_k|.

    The box must have L >= 2n so no truncated boundary row is reachable
    within 2n steps; masses use the full-lattice annulus sizes.
    """
    if n < 1:
        raise ChainError(f"n must be positive, got {n}")
    if box.boundary != "free":
        raise ChainError("the annulus bound is computed on a free-boundary box")
    if box.L < 2 * n:
        raise ChainError(
            f"box too small: L={box.L} cannot contain 2n={2 * n} steps exactly"
        )
    chain = build_chain(field, box, "full")
    origin = (0,) * box.d
    i0 = chain.state_index(origin)
    mu = np.zeros(chain.n_states, dtype=np.float64)
    mu[i0] = 1.0
    kt = chain.kernel_t
    for _ in range(n):
        mu = kt @ mu
    mid = mu.copy()
    for _ in range(n):
        mu = kt @ mu
    lhs = float(mu[i0])

    grid = box.coordinate_grid()
    r = np.abs(grid).max(axis=1)
    kidx = np.where(r == 0, 0, np.floor(np.log2(np.maximum(r, 1))).astype(np.int64) + 1)
    kmax = int(kidx.max())
    masses = np.bincount(kidx, weights=mid, minlength=kmax + 1)
    sizes = np.array([annulus_size(box.d, k) for k in range(kmax + 1)], dtype=np.float64)
    pi0 = float(chain.weights[i0])
    rhs = pi0 / (2.0 * box.d) * float((masses**2 / sizes).sum())

    report = AnnulusBound(
        n=n,
        lhs=lhs,
        rhs=rhs,
        masses=tuple(float(m) for m in masses),
        sizes=tuple(int(s) for s in sizes),
    )
    if not report.holds:
        raise ChainError(
            f"annulus lower bound violated at n={n}: lhs={lhs!r} rhs={rhs!r}"
        )
    return report


# ---------------------------------------------------------------------------
# diagonal decay profile


@dataclass(frozen=True)
class DecayProfile:
    """Scaled sup of the heat kernel: ell^{d/2} * max_x P^ell(z, x)."""

    base: Vertex
    d: int
    values: tuple[float, ...]

    @property
    def steps(self) -> int:
        return len(self.values)

    def value(self, ell: int) -> float:
        if not 1 <= ell <= self.steps:
            raise ChainError(f"profile probed outside range: {ell}")
        return self.values[ell - 1]


def diagonal_decay_profile(
    chain: FiniteChain, z: Sequence[int], steps: int
) -> DecayProfile:
    """Emit ell -> ell^{d/2} sup_x P^ell(z,x) for ell = 1..steps."""
    if steps < 1:
        raise ChainError(f"steps must be positive, got {steps}")
    i = chain.state_index(z)
    mu = np.zeros(chain.n_states, dtype=np.float64)
    mu[i] = 1.0
    kt = chain.kernel_t
    out = []
    for ell in range(1, steps + 1):
        mu = kt @ mu
        out.append(float(ell ** (chain.d / 2.0) * mu.max()))
    return DecayProfile(base=tuple(z), d=chain.d, values=tuple(out))
