"""Cross-module check: Monte Carlo window counts from the coarse walk
against exact moments computed from powers of the hole-integrated kernel."""

import math

import numpy as np
import pytest

from rcmlab.chains import build_chain
from rcmlab.cluster import decompose
from rcmlab.field import ConductanceField
from rcmlab.lattice import Box, LatticeSpec, annulus_bounds, sup_norm
from rcmlab.law import uniform_law
from rcmlab.traps import trap_indicator
from rcmlab.walk import estimate_beta, sample_rnk

ALPHA = 0.5


@pytest.fixture(scope="module")
def ring_instance():
    """A ring with one planted trap bond (12,13): its fences (11,12) and
    (13,14) sit in the scale-16 window, the bond pinches off the giant,
    and vertex 11 is the unique flagged vertex of the k=4 inner annulus."""
    box = Box(d=1, L=20, boundary="periodic")
    spec = LatticeSpec(d=1, mode="box", box=box)
    base = ConductanceField(spec, uniform_law(), 0, storage="dense")
    field = base.with_patches({((11,), 0): 0.07, ((13,), 0): 0.07})
    dec = decompose(field, alpha=ALPHA, box=box)
    return field, dec


def test_planted_geometry(ring_instance):
    field, dec = ring_instance
    assert not dec.on_giant((12,)) and not dec.on_giant((13,))
    assert dec.on_giant((11,)) and dec.on_giant((14,))
    lo, hi = annulus_bounds(4, inner=True)
    flagged = [
        (v,)
        for v in range(-20, 21)
        if lo <= sup_norm((v,)) <= hi
        and dec.on_giant((v,))
        and trap_indicator(field, (v,), 16)
    ]
    assert flagged == [(11,)]


def test_window_count_moments_match_kernel_powers(ring_instance):
    field, dec = ring_instance
    chain = build_chain(field, dec, "induced", ALPHA)
    k, n = 4, 16
    t_k = 4**k
    target = chain.state_index((11,))
    start = chain.state_index((0,))

    # exact first and second moments of the window count by kernel powers
    mu = np.zeros(chain.n_states)
    mu[start] = 1.0
    kt = chain.kernel_t
    arrivals = np.zeros(2 * t_k + 1)
    for ell in range(1, 2 * t_k + 1):
        mu = kt @ mu
        arrivals[ell] = mu[target]
    window = np.arange(t_k, 2 * t_k + 1)
    exact_mean = float(arrivals[window].sum())

    nu = np.zeros(chain.n_states)
    nu[target] = 1.0
    returns = np.zeros(t_k + 1)
    returns[0] = 1.0
    for j in range(1, t_k + 1):
        nu = kt @ nu
        returns[j] = nu[target]
    exact_second = exact_mean
    for ell in window:
        js = np.arange(1, 2 * t_k - ell + 1)
        exact_second += 2.0 * arrivals[ell] * returns[js].sum()

    beta = estimate_beta(field, dec)
    stats = sample_rnk(field, dec, n=n, k=k, beta=beta, walkers=500, seed=77)
    assert stats.t_k == t_k

    assert abs(stats.mean - exact_mean) <= 4.0 * max(stats.stderr, 1e-12)

    squares = np.asarray(stats.values, dtype=np.float64) ** 2
    sq_stderr = squares.std(ddof=1) / math.sqrt(len(squares))
    assert abs(squares.mean() - exact_second) <= 4.0 * max(sq_stderr, 1e-12)

    # the step budget event should be typical, not rare, at the fitted rate
    assert stats.ek_frequency >= 0.5
