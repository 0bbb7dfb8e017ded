"""Killed Green's functions and the comparison machinery between chains.

The fundamental object is the matrix of expected visit counts
``(I - K)^{-1}`` of a chain killed on a nonempty vertex set.  That matrix
is not symmetric when the reversing measure is non-constant; dividing each
column by the weight of its target yields the symmetric positive
semidefinite density form used for the Cauchy-Schwarz diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg

from .chains import FiniteChain, build_chain
from .cluster import ClusterDecomposition
from .field import FieldLike
from .lattice import Vertex, annulus_bounds, sup_norm
from .traps import trap_indicator

__all__ = [
    "GreensError",
    "GreensOperator",
    "greens",
    "quad_form",
    "GreensIdentityReport",
    "greens_identity_check",
    "GreensComparisonReport",
    "greens_comparison_check",
    "FkQuadFormReport",
    "fk_quadform",
]

#: Below this state count the visit-count system is solved densely; above
#: it, column by column with conjugate gradients on the weighted
#: symmetrization, which is symmetric positive definite for a killed
#: reversible chain.
DENSE_SOLVE_LIMIT = 2000


class GreensError(ValueError):
    """Raised for singular systems or invalid Green-operator queries."""


@dataclass
class GreensOperator:
    """Expected visit counts of a killed chain, with its density form.

    ``visit_matrix[i, j]`` is the expected number of visits to alive state
    j starting from alive state i before killing.  ``density`` divides by
    the weight of the target state, which restores symmetry.
    """

    chain: FiniteChain
    alive: np.ndarray
    killed: np.ndarray
    visit_matrix: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        self._alive_index = {
            self.chain.states[int(i)]: k for k, i in enumerate(self.alive)
        }

    @property
    def n_alive(self) -> int:
        return len(self.alive)

    @property
    def alive_states(self) -> tuple[Vertex, ...]:
        return tuple(self.chain.states[int(i)] for i in self.alive)

    def alive_index(self, x: Sequence[int]) -> int:
        try:
            return self._alive_index[tuple(x)]
        except KeyError:
            raise GreensError(f"vertex {tuple(x)} is killed or not a state")

    def visits(self, x: Sequence[int], y: Sequence[int]) -> float:
        return float(self.visit_matrix[self.alive_index(x), self.alive_index(y)])

    @property
    def density_matrix(self) -> np.ndarray:
        return self.visit_matrix / self.weights[None, :]

    def density(self, x: Sequence[int], y: Sequence[int]) -> float:
        i, j = self.alive_index(x), self.alive_index(y)
        return float(self.visit_matrix[i, j] / self.weights[j])

    def symmetry_error(self) -> float:
        dm = self.density_matrix
        return float(np.abs(dm - dm.T).max())

    def min_eigenvalue(self) -> float:
        dm = self.density_matrix
        return float(np.linalg.eigvalsh(0.5 * (dm + dm.T)).min())

    def cauchy_schwarz_excess(self) -> float:
        """Max of density(x,y) - sqrt(density(x,x) density(y,y)); <= 0 up
        to roundoff when the density form is positive semidefinite."""
        dm = self.density_matrix
        diag = np.diag(dm)
        return float((dm - np.sqrt(np.outer(diag, diag))).max())

    def check_invariants(self, tol: float = 1e-10) -> None:
        scale = max(1.0, float(np.abs(self.visit_matrix).max()))
        if self.symmetry_error() > tol * scale:
            raise GreensError("density form is not symmetric")
        if self.min_eigenvalue() < -tol * scale:
            raise GreensError("density form is not positive semidefinite")

    def vector(self, f: np.ndarray) -> np.ndarray:
        """Apply the visit-count operator to a function on alive states."""
        return self.visit_matrix @ f


def _coerce_alive_function(
    g: GreensOperator, f: Mapping[Vertex, float] | Sequence[float] | np.ndarray
) -> np.ndarray:
    if isinstance(f, Mapping):
        out = np.zeros(g.n_alive, dtype=np.float64)
        for v, val in f.items():
            out[g.alive_index(v)] = float(val)
        return out
    arr = np.asarray(f, dtype=np.float64)
    if arr.shape == (g.n_alive,):
        return arr
    if arr.shape == (g.chain.n_states,):
        if np.abs(arr[g.killed]).max(initial=0.0) > 0.0:
            raise GreensError("function must vanish on the killed set")
        return arr[g.alive]
    raise GreensError(
        f"function has shape {arr.shape}; expected {g.n_alive} alive states"
    )


def greens(
    chain: FiniteChain, killed_set: Iterable[Sequence[int]]
) -> GreensOperator:
    """Visit-count operator of the chain killed on a nonempty vertex set."""
    killed_idx = sorted({chain.state_index(v) for v in killed_set})
    if not killed_idx:
        raise GreensError(
            "killed set is empty: the visit-count system is singular"
        )
    killed = np.array(killed_idx, dtype=np.int64)
    mask = np.ones(chain.n_states, dtype=bool)
    mask[killed] = False
    alive = np.nonzero(mask)[0]
    if len(alive) == 0:
        raise GreensError("all states killed: nothing to solve")
    sub, w = chain.restrict(alive)
    n = len(alive)
    if n <= DENSE_SOLVE_LIMIT:
        system = np.eye(n) - sub.toarray()
        try:
            visit = np.linalg.solve(system, np.eye(n))
        except np.linalg.LinAlgError as exc:
            raise GreensError("singular visit-count system") from exc
    else:
        # diag(w)(I - K) is symmetric positive definite by reversibility
        # plus killing, so each column solves by conjugate gradients
        m = sparse.diags(w) @ (sparse.eye(n, format="csr") - sub)
        m = ((m + m.T) * 0.5).tocsr()
        visit = np.empty((n, n), dtype=np.float64)
        for j in range(n):
            rhs = np.zeros(n)
            rhs[j] = w[j]
            sol, info = cg(m, rhs, rtol=1e-12, atol=0.0)
            if info != 0:
                raise GreensError(
                    f"conjugate-gradient solve failed on column {j}"
                )
            visit[:, j] = sol
    op = GreensOperator(
        chain=chain, alive=alive, killed=killed, visit_matrix=visit, weights=w
    )
    op.check_invariants()
    return op


def quad_form(
    g: GreensOperator,
    f: Mapping[Vertex, float] | Sequence[float] | np.ndarray,
    form: str = "visits",
) -> float:
    """Counting-measure quadratic form <f, G f>.

    ``form="visits"`` pairs f with raw visit counts (the object the
    second-moment pipeline needs); ``form="density"`` uses the symmetric
    positive semidefinite density matrix, nonnegative for every sign
    pattern of f.
    """
    vec = _coerce_alive_function(g, f)
    if form == "visits":
        return float(vec @ g.visit_matrix @ vec)
    if form == "density":
        return float(vec @ g.density_matrix @ vec)
    raise GreensError(f"unknown form {form!r}")


# ---------------------------------------------------------------------------
# identity between the delayed and unit strong-edge chains


@dataclass(frozen=True)
class GreensIdentityReport:
    """Errors in the delay identity between two killed Green's functions."""

    max_rel_error: float
    generator_error: float
    n_alive: int

    @property
    def ok(self) -> bool:
        return self.max_rel_error <= 1e-8


def greens_identity_check(
    field: FieldLike,
    dec: ClusterDecomposition,
    alpha: float,
    killed_set: Iterable[Sequence[int]],
) -> GreensIdentityReport:
    """Check that delaying the unit walk rescales visits by pi / (alpha deg).

    The delayed chain spends a geometric number of steps per unit-chain
    visit, so its killed visit counts must equal the unit chain's times
    pi(y) / (alpha d(y)); equivalently the killed generators differ by the
    diagonal factor alpha d(x) / pi(x).
    """
    killed = [tuple(v) for v in killed_set]
    lazy = build_chain(field, dec, "lazy", alpha)
    unit = build_chain(field, dec, "unit", alpha)
    g_lazy = greens(lazy, killed)
    g_unit = greens(unit, killed)
    pi = g_lazy.weights
    deg = g_unit.weights
    predicted = g_unit.visit_matrix * (pi[None, :] / (alpha * deg[None, :]))
    scale = np.maximum(np.abs(predicted), 1.0)
    max_rel = float((np.abs(g_lazy.visit_matrix - predicted) / scale).max())

    alive = g_lazy.alive
    sub_lazy, _ = lazy.restrict(alive)
    sub_unit, _ = unit.restrict(alive)
    n = len(alive)
    lhs = np.eye(n) - sub_lazy.toarray()
    rhs = (alpha * deg / pi)[:, None] * (np.eye(n) - sub_unit.toarray())
    gen_err = float(np.abs(lhs - rhs).max())
    return GreensIdentityReport(
        max_rel_error=max_rel, generator_error=gen_err, n_alive=n
    )


# ---------------------------------------------------------------------------
# comparison between the hole-integrated and unit-strong-edge forms


@dataclass(frozen=True)
class GreensComparisonReport:
    """Quadratic-form comparison between two killed Green's functions."""

    lhs: float
    rhs: float
    operator_gap: float
    operator_min_eigenvalue: float
    n_alive: int

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + 1e-10

    @property
    def operator_order_holds(self) -> bool:
        return self.operator_min_eigenvalue >= -1e-10


def greens_comparison_check(
    field: FieldLike,
    dec: ClusterDecomposition,
    alpha: float,
    killed_set: Iterable[Sequence[int]],
    f: Mapping[Vertex, float] | Sequence[float] | np.ndarray,
) -> GreensComparisonReport:
    """Check <f, G_induced f> <= (2d/alpha)^2 <f, G_unit f> for f >= 0.

    Also verifies the weighted operator order between the hole-integrated
    and delayed chains, both through the supplied f (any sign would do)
    and through the smallest eigenvalue of the difference of the two
    weighted Dirichlet matrices.
    """
    killed = [tuple(v) for v in killed_set]
    induced = build_chain(field, dec, "induced", alpha)
    unit = build_chain(field, dec, "unit", alpha)
    lazy = build_chain(field, dec, "lazy", alpha)
    g_ind = greens(induced, killed)
    g_unit = greens(unit, killed)
    vec = _coerce_alive_function(g_ind, f)
    if vec.min(initial=0.0) < 0.0:
        raise GreensError("comparison check requires a nonnegative function")
    lhs = float(vec @ g_ind.visit_matrix @ vec)
    d = induced.d
    rhs = (2.0 * d / alpha) ** 2 * float(vec @ g_unit.visit_matrix @ vec)

    # weighted operator order on the full (unkilled) state space, applied
    # to f extended by zero onto the killed set
    pi = induced.weights
    a_mat = pi[:, None] * (np.eye(induced.n_states) - induced.matrix())
    b_mat = pi[:, None] * (np.eye(lazy.n_states) - lazy.matrix())
    diff = a_mat - b_mat
    diff = 0.5 * (diff + diff.T)
    full_vec = np.zeros(induced.n_states)
    full_vec[g_ind.alive] = vec
    gap = float(full_vec @ diff @ full_vec)
    min_eig = float(np.linalg.eigvalsh(diff).min())
    return GreensComparisonReport(
        lhs=lhs,
        rhs=rhs,
        operator_gap=gap,
        operator_min_eigenvalue=min_eig,
        n_alive=g_ind.n_alive,
    )


# ---------------------------------------------------------------------------
# quadratic form of the trap indicator on an inner annulus


@dataclass(frozen=True)
class FkQuadFormReport:
    """<f, G f> for the trap indicator on an inner annulus, with the
    split into nearby and distant vertex pairs."""

    value: float
    near: float
    far: float
    cutoff: float
    support: tuple[Vertex, ...]

    @property
    def support_size(self) -> int:
        return len(self.support)


def fk_quadform(
    field: FieldLike,
    dec: ClusterDecomposition,
    n: int,
    k: int,
    killed_set: Iterable[Sequence[int]],
    cutoff: float | None = None,
) -> FkQuadFormReport:
    """Quadratic form of f = 1_{trap-adjacent} 1_{inner annulus, on giant}.

    The pair sum is split at Euclidean separation ``cutoff`` (default
    log n), mirroring how the near part is controlled by the diagonal and
    the far part by pairwise trap correlations.
    """
    if n < 4:
        raise GreensError(f"trap scale n must be at least 4, got {n}")
    if cutoff is None:
        cutoff = max(1.0, float(np.log(n)))
    lo, hi = annulus_bounds(k, inner=True)
    chain = build_chain(field, dec, "induced", dec.alpha)
    g = greens(chain, killed_set)
    support = [
        v
        for v in g.alive_states
        if lo <= sup_norm(v) <= hi and trap_indicator(field, v, n)
    ]
    if not support:
        return FkQuadFormReport(
            value=0.0, near=0.0, far=0.0, cutoff=float(cutoff), support=()
        )
    idx = np.array([g.alive_index(v) for v in support], dtype=np.int64)
    block = g.visit_matrix[np.ix_(idx, idx)]
    pts = np.array(support, dtype=np.float64)
    sep = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    near_mask = sep < cutoff
    near = float(block[near_mask].sum())
    far = float(block[~near_mask].sum())
    return FkQuadFormReport(
        value=near + far,
        near=near,
        far=far,
        cutoff=float(cutoff),
        support=tuple(support),
    )
