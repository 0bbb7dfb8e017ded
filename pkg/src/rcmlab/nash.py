"""Entropy-style lower-bound machinery for the hole-integrated chain.

Everything here lives on a chemical ball of a finite cluster chain: a
quadratic bump profile on the ball, its weighted volume and probability
measure, the averaged log-kernel and its exact time derivative, the
derivative inequality splitting it into a Dirichlet part, a profile part
and a boundary part, a weighted Poincare ratio, a variance lower bound,
Poisson window weights, and kernel chaining diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field
from typing import Mapping, Sequence

import numpy as np
from scipy.sparse import csgraph
from scipy.special import gammainc, gammaincc

from .chains import FiniteChain, ct_heat_kernel, ct_kernel_matrix
from .lattice import Vertex

__all__ = [
    "NashError",
    "NashBundle",
    "nash_bundle",
    "NashDerivativeReport",
    "nash_derivative_check",
    "MonotonicityReport",
    "monotonicity_probe",
    "poincare_ratio",
    "PoincareReport",
    "poincare_suite",
    "VarianceReport",
    "nash_variance_check",
    "WindowWeights",
    "poisson_window_weights",
    "ChainingProbe",
    "ChainingReport",
    "chaining_check",
    "HeatConstants",
    "heat_constants",
    "DerivedConstants",
    "derived_constants",
]


class NashError(ValueError):
    """Raised for invalid probes of the entropy machinery."""


def _state_distances(chain: FiniteChain, sources: np.ndarray) -> np.ndarray:
    """Chemical (strong-edge hop) distances from source states, minimized
    over sources, indexed by chain state."""
    dec = chain.cluster
    if dec is None:
        raise NashError("chain carries no cluster decomposition")
    flat_sources = np.array(
        [dec.box.index(chain.states[int(i)]) for i in sources], dtype=np.int64
    )
    dist = csgraph.dijkstra(
        dec.strong_csr, indices=flat_sources, unweighted=True, min_only=True
    )
    state_flat = np.array(
        [dec.box.index(v) for v in chain.states], dtype=np.int64
    )
    return dist[state_flat]


@dataclass
class NashBundle:
    """A chemical ball with its bump profile, measure, and kernel caches.

    The ball is centred at the kernel base point z:  K_R = {x :
    dist(z, x) <= R} in strong-edge hops.  phi vanishes off the ball,
    equals ((R ^ dist(x, ball complement)) / R)^2 on it, and is
    identically 1 when the whole cluster lies inside the ball.
    """

    chain: FiniteChain
    z: Vertex
    radius: int
    dist_from_z: np.ndarray
    ball: np.ndarray
    phi: np.ndarray
    volume: float
    nu: np.ndarray
    c6: float | None = None
    _kernels: dict[float, np.ndarray] = dataclass_field(default_factory=dict, repr=False)
    _what: np.ndarray | None = dataclass_field(default=None, repr=False)
    _pair_dist: np.ndarray | None = dataclass_field(default=None, repr=False)

    @property
    def n_states(self) -> int:
        return self.chain.n_states

    @property
    def ball_size(self) -> int:
        return int(self.ball.sum())

    @property
    def window_start(self) -> float | None:
        """Start of the probing window, R^2 / (24 c6)^2."""
        if self.c6 is None:
            return None
        return self.radius**2 / (24.0 * self.c6) ** 2

    @property
    def volume_constant(self) -> float:
        """Empirical ball-volume growth constant V_R / R^d."""
        return self.volume / self.radius**self.chain.d

    @property
    def conductances(self) -> np.ndarray:
        """Dense symmetric chain conductances w(x) K(x, y)."""
        if self._what is None:
            mat = self.chain.weights[:, None] * self.chain.matrix()
            self._what = 0.5 * (mat + mat.T)
        return self._what

    @property
    def pair_distances(self) -> np.ndarray:
        """All-pairs chemical distances between chain states."""
        if self._pair_dist is None:
            dec = self.chain.cluster
            state_flat = np.array(
                [dec.box.index(v) for v in self.chain.states], dtype=np.int64
            )
            full = csgraph.dijkstra(
                dec.strong_csr, indices=state_flat, unweighted=True
            )
            self._pair_dist = full[:, state_flat]
        return self._pair_dist

    def q(self, t: float) -> np.ndarray:
        """Weight-normalized kernel row q_t(z, .), cached per time."""
        key = float(t)
        if key not in self._kernels:
            self._kernels[key] = ct_heat_kernel(self.chain, self.z, key).values
        return self._kernels[key]

    def _positive_q(self, t: float) -> np.ndarray:
        q = self.q(t)
        if (q <= 0.0).any():
            raise NashError(
                f"kernel underflow at t={t}: increase t or shrink the cluster"
            )
        return q

    def log_kernel(self, t: float) -> np.ndarray:
        """w_{z,t} = log(V_R q_t(z, .)); requires strictly positive q."""
        if t <= 0.0:
            raise NashError("log-kernel undefined at t = 0")
        return np.log(self.volume * self._positive_q(t))

    def entropy(self, t: float) -> float:
        """H_z(t): the nu-average of the log-kernel."""
        w = self.log_kernel(t)
        return float((self.nu * np.where(self.ball, w, 0.0)).sum())

    def log_kernel_variance(self, t: float) -> float:
        w = self.log_kernel(t)
        w = np.where(self.ball, w, 0.0)
        mean = float((self.nu * w).sum())
        return float((self.nu * (w - mean) ** 2).sum())

    def ball_probability(self, t: float, radius: float) -> float:
        """P^z(dist(z, state at time t) <= radius) from the exact kernel."""
        q = self.q(t)
        mask = self.dist_from_z <= radius
        return float((q * self.chain.weights)[mask].sum())


def nash_bundle(
    chain: FiniteChain,
    z: Sequence[int],
    radius: int,
    c6: float | None = None,
) -> NashBundle:
    """Build the chemical ball bundle for a hole-integrated chain."""
    if chain.kind != "induced":
        raise NashError(
            f"the entropy machinery probes the hole-integrated chain, got {chain.kind!r}"
        )
    if radius < 1:
        raise NashError(f"radius must be a positive integer, got {radius}")
    zi = chain.state_index(z)
    dist_z = _state_distances(chain, np.array([zi], dtype=np.int64))
    if not np.isfinite(dist_z).all():
        raise NashError("cluster is not chemically connected from z")
    ball = dist_z <= radius
    comp = np.nonzero(~ball)[0]
    n = chain.n_states
    if len(comp) == 0:
        phi = np.ones(n, dtype=np.float64)
    else:
        dist_comp = _state_distances(chain, comp)
        phi = (np.minimum(dist_comp, radius) / radius) ** 2
        phi[~ball] = 0.0
    volume = float((phi * chain.weights).sum())
    nu = phi * chain.weights / volume
    return NashBundle(
        chain=chain,
        z=tuple(z),
        radius=int(radius),
        dist_from_z=dist_z,
        ball=ball,
        phi=phi,
        volume=volume,
        nu=nu,
        c6=c6,
    )


# ---------------------------------------------------------------------------
# derivative inequality


@dataclass(frozen=True)
class NashDerivativeReport:
    """Exact entropy derivative versus its three-part lower bound.

    ``lhs`` is V_R dH/dt computed through the generator; ``rhs1`` the
    quarter Dirichlet sum of the log-kernel, ``rhs2`` the quarter profile
    penalty, ``rhs3`` the quarter boundary leak.  The inequality is
    lhs >= rhs1 - rhs2 - rhs3.
    """

    t: float
    lhs: float
    rhs1: float
    rhs2: float
    rhs3: float
    entropy: float
    dirichlet_moment: float

    @property
    def slack(self) -> float:
        return self.lhs - (self.rhs1 - self.rhs2 - self.rhs3)

    @property
    def holds(self) -> bool:
        return self.slack >= -1e-8

    @property
    def profile_constant(self) -> float:
        """Scale-free size of the profile penalty (t-independent)."""
        return 4.0 * self.rhs2

    @property
    def boundary_constant(self) -> float:
        """Scale-free size of the boundary leak at this t."""
        return 4.0 * self.rhs3


def nash_derivative_check(bundle: NashBundle, t: float) -> NashDerivativeReport:
    """Evaluate the entropy derivative inequality at time t.

    Raises if t <= 0 (the log-kernel has -inf entries at t = 0) or if the
    inequality fails beyond 1e-8.
    """
    if t <= 0.0:
        raise NashError("derivative check requires t > 0")
    q = bundle._positive_q(t)
    w = np.log(bundle.volume * q)
    what = bundle.conductances
    phi = bundle.phi
    ball = bundle.ball

    ratio = q[None, :] / q[:, None]  # ratio[y, x] = q(x) / q(y)
    lhs = float((what * phi[:, None] * (ratio - 1.0)).sum())

    both = np.outer(ball, ball)
    m = np.minimum(phi[:, None], phi[None, :])
    dw = w[:, None] - w[None, :]
    rhs1 = 0.25 * float((what * m * dw**2)[both].sum())
    dphi2 = (phi[:, None] - phi[None, :]) ** 2
    safe_m = np.where(m > 0.0, m, 1.0)
    rhs2 = 0.25 * float(np.where(both & (m > 0.0), what * dphi2 / safe_m, 0.0).sum())
    cross = np.outer(ball, ~ball)
    rhs3 = 0.25 * float((what * phi[:, None] * (1.0 - ratio))[cross].sum())

    wball = np.where(ball, w, 0.0)
    entropy = float((bundle.nu * wball).sum())
    pd = bundle.pair_distances
    dirichlet_moment = float((what[ball] * pd[ball] ** 4).sum())

    report = NashDerivativeReport(
        t=float(t),
        lhs=lhs,
        rhs1=rhs1,
        rhs2=rhs2,
        rhs3=rhs3,
        entropy=entropy,
        dirichlet_moment=dirichlet_moment,
    )
    if not report.holds:
        raise NashError(
            f"derivative inequality violated at t={t}: slack={report.slack!r}"
        )
    return report


@dataclass(frozen=True)
class MonotonicityReport:
    """Grid certificate that the compensated entropy is non-decreasing."""

    ts: tuple[float, ...]
    entropies: tuple[float, ...]
    compensated: tuple[float, ...]
    c8_hat: float
    c9_hat: float
    min_derivative_margin: float

    @property
    def zeta_hat(self) -> float:
        return 0.25 * (self.c8_hat + self.c9_hat)

    @property
    def holds(self) -> bool:
        grid_ok = all(
            b >= a - 1e-10
            for a, b in zip(self.compensated, self.compensated[1:])
        )
        return grid_ok and self.min_derivative_margin >= -1e-8


def monotonicity_probe(
    bundle: NashBundle, ts: Sequence[float]
) -> MonotonicityReport:
    """Measure the profile/boundary constants on a time grid and certify
    that H + (1/4)(c8 + c9) t / R^2 has nonnegative derivative there."""
    ts = sorted(float(t) for t in ts)
    if not ts or ts[0] <= 0.0:
        raise NashError("monotonicity probe needs positive times")
    reports = [nash_derivative_check(bundle, t) for t in ts]
    r2_over_v = bundle.radius**2 / bundle.volume
    c8 = reports[0].profile_constant * r2_over_v
    c9 = max(r.boundary_constant for r in reports) * r2_over_v
    zeta = 0.25 * (c8 + c9)
    margin = min(
        r.lhs + zeta * bundle.volume / bundle.radius**2 - r.rhs1
        for r in reports
    )
    compensated = tuple(
        r.entropy + zeta * t / bundle.radius**2 for r, t in zip(reports, ts)
    )
    return MonotonicityReport(
        ts=tuple(ts),
        entropies=tuple(r.entropy for r in reports),
        compensated=compensated,
        c8_hat=c8,
        c9_hat=c9,
        min_derivative_margin=margin,
    )


# ---------------------------------------------------------------------------
# weighted Poincare ratio


def _bundle_function(
    bundle: NashBundle, f: Mapping[Vertex, float] | Sequence[float] | np.ndarray
) -> np.ndarray:
    if isinstance(f, Mapping):
        out = np.zeros(bundle.n_states, dtype=np.float64)
        for v, val in f.items():
            out[bundle.chain.state_index(v)] = float(val)
        return out
    arr = np.asarray(f, dtype=np.float64)
    if arr.shape != (bundle.n_states,):
        raise NashError(
            f"function has shape {arr.shape}; expected ({bundle.n_states},)"
        )
    return arr


def poincare_ratio(
    bundle: NashBundle, f: Mapping[Vertex, float] | Sequence[float] | np.ndarray
) -> float:
    """Ratio of the profile-weighted Dirichlet form to the scaled variance.

    Both sides only see f on the ball; constant f (zero variance) is
    rejected.
    """
    vec = _bundle_function(bundle, f)
    mean = float((bundle.nu * vec).sum())
    var = float((bundle.nu * (vec - mean) ** 2).sum())
    if var <= 0.0:
        raise NashError("variance vanishes: f is constant on the ball")
    what = bundle.conductances
    m = np.minimum(bundle.phi[:, None], bundle.phi[None, :])
    df = vec[:, None] - vec[None, :]
    dirichlet = float((what * m * df**2).sum())
    return (dirichlet / bundle.volume) / (var / bundle.radius**2)


@dataclass(frozen=True)
class PoincareReport:
    """Minimum weighted Poincare ratio over a random function suite."""

    ratios: tuple[float, ...]
    seed: int

    @property
    def c10_hat(self) -> float:
        return min(self.ratios)

    @property
    def all_positive(self) -> bool:
        return all(r > 0.0 for r in self.ratios)


def poincare_suite(
    bundle: NashBundle, n_funcs: int = 100, seed: int = 0
) -> PoincareReport:
    """Empirical spectral-gap style constant from random ball functions."""
    if n_funcs < 1:
        raise NashError("suite needs at least one function")
    rng = np.random.default_rng(seed)
    ball_idx = np.nonzero(bundle.ball)[0]
    ratios = []
    for _ in range(n_funcs):
        vec = np.zeros(bundle.n_states, dtype=np.float64)
        vals = rng.standard_normal(len(ball_idx))
        while len(ball_idx) > 1 and np.ptp(vals) == 0.0:  # pragma: no cover
            vals = rng.standard_normal(len(ball_idx))
        vec[ball_idx] = vals
        ratios.append(poincare_ratio(bundle, vec))
    return PoincareReport(ratios=tuple(ratios), seed=seed)


# ---------------------------------------------------------------------------
# variance lower bound


@dataclass(frozen=True)
class VarianceReport:
    """Log-kernel variance versus its localization lower bound."""

    t: float
    variance: float
    bound: float
    c_tilde: float
    entropy: float
    ball_probability: float

    @property
    def slack(self) -> float:
        return self.variance - self.bound

    @property
    def holds(self) -> bool:
        return self.slack >= -1e-8

    @property
    def trivially_true(self) -> bool:
        return self.bound <= 0.0


def nash_variance_check(
    bundle: NashBundle, t: float, c_tilde: float | None = None
) -> VarianceReport:
    """Check the localization variance bound at time t >= window start.

    ``c_tilde`` defaults to V_R times the sup of the kernel at the window
    start; by the semigroup sup bound that value dominates the kernel sup
    at every later time, which is what the bound's derivation consumes.
    """
    start = bundle.window_start
    if c_tilde is None:
        if start is None:
            raise NashError(
                "no spread constant configured: supply c6 or c_tilde"
            )
        c_tilde = bundle.volume * float(bundle.q(start).max())
    if start is not None and t < start - 1e-12:
        raise NashError(f"t={t} precedes the window start {start}")
    if c_tilde <= 0.0:
        raise NashError("c_tilde must be positive")
    entropy = bundle.entropy(t)
    variance = bundle.log_kernel_variance(t)
    pball = bundle.ball_probability(t, 2.0 * bundle.radius / 3.0)
    bracket = pball - 9.0 * math.exp(2.0 + entropy)
    bound = (math.log(c_tilde) - entropy) ** 2 / (9.0 * c_tilde) * bracket
    return VarianceReport(
        t=float(t),
        variance=variance,
        bound=bound,
        c_tilde=float(c_tilde),
        entropy=entropy,
        ball_probability=pball,
    )


# ---------------------------------------------------------------------------
# Poisson window weights


@dataclass(frozen=True)
class WindowWeights:
    """Integrals of the Poisson pmf over the [4t/3, 5t/3] clock window.

    weights[n] integrates e^{-s} s^n / n! over the window; summing over
    all n >= 0 gives exactly t/3, so the reported outside-window tail is
    that analytic total minus the in-window sum.
    """

    k: int
    t_k: float
    weights: np.ndarray
    n_max: int

    @property
    def analytic_total(self) -> float:
        return self.t_k / 3.0

    @property
    def computed_total(self) -> float:
        return float(self.weights.sum())

    @property
    def in_window(self) -> float:
        ns = np.arange(self.n_max + 1)
        mask = (ns >= self.t_k) & (ns <= 2.0 * self.t_k)
        return float(self.weights[mask].sum())

    @property
    def tail_outside(self) -> float:
        return self.analytic_total - self.in_window

    @property
    def tail_rate(self) -> float:
        """Measured c in tail <= exp(-c t_k)."""
        tail = self.tail_outside
        if tail <= 0.0:
            return math.inf
        return -math.log(tail) / self.t_k


def poisson_window_weights(n_max: int, k: int) -> WindowWeights:
    """Stable clock-window weights via regularized incomplete gammas.

    Each weight is a difference of regularized gamma integrals; the
    complementary form is used on whichever side is closer to one, so no
    factorials or powers are ever formed (log-domain stability).
    """
    if k < 0:
        raise NashError(f"window index must give t_k >= 1, got k={k}")
    if n_max < 0:
        raise NashError(f"n_max must be nonnegative, got {n_max}")
    t_k = 4.0**k
    ns = np.arange(n_max + 1, dtype=np.float64)
    x_lo = 4.0 * t_k / 3.0
    x_hi = 5.0 * t_k / 3.0
    lower_lo = gammainc(ns + 1.0, x_lo)
    a = np.where(
        lower_lo > 0.5,
        gammaincc(ns + 1.0, x_lo) - gammaincc(ns + 1.0, x_hi),
        gammainc(ns + 1.0, x_hi) - lower_lo,
    )
    a = np.maximum(a, 0.0)
    return WindowWeights(k=int(k), t_k=t_k, weights=a, n_max=int(n_max))


# ---------------------------------------------------------------------------
# kernel chaining diagnostics


@dataclass(frozen=True)
class ChainingProbe:
    """One product-chaining probe: compare q_{mt}(x, y) against the
    restricted-sum product bound with m - 1 intermediate layers."""

    x: Vertex
    y: Vertex
    t: float
    m: int
    subsets: tuple[tuple[Vertex, ...], ...] | None = None


@dataclass(frozen=True)
class ChainingResult:
    probe: ChainingProbe
    direct: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.bound <= self.direct + 1e-10


@dataclass(frozen=True)
class ChainingReport:
    results: tuple[ChainingResult, ...]
    semigroup_max_error: float

    @property
    def all_hold(self) -> bool:
        return all(r.holds for r in self.results)

    @property
    def identity_ok(self) -> bool:
        return self.semigroup_max_error <= 1e-10


def chaining_check(
    chain: FiniteChain,
    probes: Sequence[ChainingProbe],
    semigroup_probes: Sequence[tuple[Sequence[int], Sequence[int], float, float]] = (),
) -> ChainingReport:
    """Verify the semigroup identity and the product chaining bound.

    The chaining bound replaces each intermediate stationary weight by
    the strong-edge threshold (weights dominate it on the cluster), and
    optionally restricts each intermediate sum to a subset; with m = 1 it
    degenerates to the identity bound q_t >= q_t.
    """
    if chain.alpha is None:
        raise NashError("chaining bound needs the chain's strong threshold")
    alpha = chain.alpha
    cache: dict[float, np.ndarray] = {}

    def qmat(t: float) -> np.ndarray:
        key = float(t)
        if key not in cache:
            cache[key] = ct_kernel_matrix(chain, key)
        return cache[key]

    results = []
    for probe in probes:
        if probe.m < 1:
            raise NashError(f"chaining needs m >= 1, got {probe.m}")
        qt = qmat(probe.t)
        ix = chain.state_index(probe.x)
        iy = chain.state_index(probe.y)
        subsets = probe.subsets
        if subsets is not None and len(subsets) != probe.m - 1:
            raise NashError(
                f"probe with m={probe.m} needs {probe.m - 1} subsets"
            )
        v = qt[ix].copy()
        for layer in range(probe.m - 1):
            mask = np.ones(chain.n_states, dtype=np.float64)
            if subsets is not None:
                mask = np.zeros(chain.n_states, dtype=np.float64)
                for vertex in subsets[layer]:
                    mask[chain.state_index(vertex)] = 1.0
            v = qt @ (v * mask)
        bound = alpha ** (probe.m - 1) * float(v[iy])
        direct = float(qmat(probe.m * probe.t)[ix, iy])
        results.append(ChainingResult(probe=probe, direct=direct, bound=bound))

    max_err = 0.0
    for x, y, t, s in semigroup_probes:
        ix = chain.state_index(x)
        iy = chain.state_index(y)
        lhs = qmat(t + s)[ix, iy]
        rhs = float((qmat(t)[ix] * qmat(s)[:, iy] * chain.weights).sum())
        max_err = max(max_err, abs(lhs - rhs))

    return ChainingReport(results=tuple(results), semigroup_max_error=max_err)


# ---------------------------------------------------------------------------
# measured constants


@dataclass(frozen=True)
class HeatConstants:
    """Empirical kernel-sup and spread constants over a probe grid."""

    c5_hat: float
    c6_hat: float
    ts: tuple[float, ...]


def heat_constants(
    chain: FiniteChain, z: Sequence[int], ts: Sequence[float]
) -> HeatConstants:
    """Measure sup-kernel decay (c5) and root-t spread (c6) from z."""
    if not ts or min(ts) <= 0.0:
        raise NashError("constant measurement needs positive times")
    zi = chain.state_index(z)
    dist_z = _state_distances(chain, np.array([zi], dtype=np.int64))
    c5 = 0.0
    c6 = 0.0
    for t in ts:
        kv = ct_heat_kernel(chain, z, float(t))
        c5 = max(c5, t ** (chain.d / 2.0) * float(kv.values.max()))
        mean_dist = float((kv.distribution * dist_z).sum())
        c6 = max(c6, mean_dist / math.sqrt(t))
    return HeatConstants(c5_hat=c5, c6_hat=c6, ts=tuple(float(t) for t in ts))


@dataclass(frozen=True)
class DerivedConstants:
    """The composite constants of the lower-bound pipeline, assembled
    from measured ingredients and reported for inspection only."""

    c_tilde: float
    c_prime: float
    gamma: float
    zeta: float
    window_start: float


def derived_constants(
    c5: float,
    c6: float,
    c7: float,
    c8: float,
    c9: float,
    c10: float,
    radius: int,
    d: int,
) -> DerivedConstants:
    if min(c5, c6, c7, c10) <= 0.0:
        raise NashError("measured constants must be positive")
    c_tilde = c5 * c7 * (24.0 * c6) ** d
    c_prime = 0.5 * c10 / (144.0 * c_tilde)
    gamma = max(
        2.0 * abs(math.log(c_tilde)),
        2.0 + math.log(36.0),
        (24.0 * c6) ** 2 / c_prime,
        math.sqrt((c8 + c9) / (4.0 * c_prime)),
    )
    zeta = 0.25 * (c8 + c9)
    window_start = radius**2 / (24.0 * c6) ** 2
    return DerivedConstants(
        c_tilde=c_tilde,
        c_prime=c_prime,
        gamma=gamma,
        zeta=zeta,
        window_start=window_start,
    )
