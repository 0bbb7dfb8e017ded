"""Tests for finite-chain construction, heat kernels, the annulus return
bound, and killed Green's functions, against independent oracles."""

import importlib
import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import sparse
from scipy.integrate import quad
from scipy.linalg import expm

from rcmlab.chains import (
    ChainError,
    FiniteChain,
    annulus_lower_bound,
    build_chain,
    ct_heat_kernel,
    ct_kernel_matrix,
    diagonal_decay_profile,
    heat_kernel,
    poisson_term_count,
)
from rcmlab.cluster import decompose
from rcmlab.field import ConductanceField
from rcmlab.greens import (
    GreensError,
    fk_quadform,
    greens,
    greens_comparison_check,
    greens_identity_check,
    quad_form,
)
from rcmlab.lattice import Box, LatticeSpec, sup_norm, annulus_bounds
from rcmlab.law import law_from_dict, uniform_law

from _oracles import (
    absorption_split_exact,
    brute_vertex_flag,
    transition_row_exact,
)

ALPHA = 0.5
MIXED = law_from_dict({"atoms": [[1.0, 0.75], [0.0625, 0.25]]})


def box_field(d, L, law=None, seed=0, boundary="free"):
    box = Box(d=d, L=L, boundary=boundary)
    spec = LatticeSpec(d=d, mode="box", box=box)
    return ConductanceField(spec, law or uniform_law(), seed, storage="dense"), box


def usable_instances(d, L, law, seeds, need_hole=False):
    """(field, decomposition) pairs whose holes avoid the box surface."""
    out = []
    for seed in seeds:
        field, box = box_field(d, L, law, seed)
        dec = decompose(field, alpha=ALPHA, box=box)
        try:
            build_chain(field, dec, "induced", ALPHA)
        except ChainError:
            continue
        if need_hole and dec.giant_size == box.nvertices:
            continue
        out.append((field, dec))
    return out


def dense_row(chain, x):
    i = chain.state_index(x)
    return {chain.states[j]: p for j, p in enumerate(chain.matrix()[i]) if p > 0}


# ---------------------------------------------------------------------------
# chain construction


class TestBuildChain:
    def test_uniform_field_kinds_coincide(self):
        field, box = box_field(2, 3)
        dec = decompose(field, alpha=ALPHA, box=box)
        full = build_chain(field, box, "full")
        ind = build_chain(field, dec, "induced", ALPHA)
        unit = build_chain(field, dec, "unit", ALPHA)
        assert full.states == ind.states == unit.states
        assert np.abs(full.matrix() - ind.matrix()).max() == 0.0
        assert np.abs(full.matrix() - unit.matrix()).max() == 0.0
        assert np.abs(full.weights - ind.weights).max() == 0.0

    def test_full_rows_match_exact_normalization(self):
        field, box = box_field(2, 3, MIXED, seed=9)
        full = build_chain(field, box, "full")
        for x in [(0, 0), (3, -3), (-1, 2), (3, 0)]:
            oracle = transition_row_exact(field, x)
            row = dense_row(full, x)
            assert set(row) == set(oracle)
            for y, p in oracle.items():
                assert row[y] == pytest.approx(float(p), abs=1e-15)

    def test_full_chain_periodic_wraps(self):
        field, box = box_field(1, 2, boundary="periodic")
        full = build_chain(field, box, "full")
        row = dense_row(full, (2,))
        assert row == {(1,): 0.5, (-2,): 0.5}
        assert full.row_sum_error() == 0.0
        assert np.all(full.weights == 2.0)

    def test_lazy_diagonal_and_offdiagonal_formula(self):
        insts = usable_instances(2, 4, MIXED, range(40))[:3]
        assert insts
        for field, dec in insts:
            lazy = build_chain(field, dec, "lazy", ALPHA)
            mat = lazy.matrix()
            for i, x in enumerate(lazy.states):
                strong = dec.strong_neighbors(x)
                pi = field.vertex_weight(x)
                assert mat[i, i] == pytest.approx(
                    1.0 - ALPHA * len(strong) / pi, abs=1e-12
                )
                for y in strong:
                    j = lazy.state_index(y)
                    assert mat[i, j] == pytest.approx(ALPHA / pi, abs=1e-15)

    def test_induced_rows_match_absorption_oracle(self):
        insts = usable_instances(2, 5, MIXED, range(120), need_hole=True)[:3]
        assert len(insts) == 3
        for field, dec in insts:
            ind = build_chain(field, dec, "induced", ALPHA)
            hole = dec.holes()[0]
            # probe giant vertices adjacent to the hole, where integration
            # actually redistributes mass, plus the origin
            probes = set()
            for u in hole:
                for v in transition_row_exact(field, u):
                    if dec.on_giant(v):
                        probes.add(v)
            probes = sorted(probes)[:3] + [(0, 0)]
            for x in probes:
                if not dec.on_giant(x):
                    continue
                oracle = {}
                for y, p in transition_row_exact(field, x).items():
                    if dec.on_giant(y):
                        oracle[y] = oracle.get(y, 0.0) + float(p)
                    else:
                        h = dec.hole_of(y)
                        boundary = set()
                        for u in h:
                            boundary.update(
                                v
                                for v in transition_row_exact(field, u)
                                if v not in h
                            )
                        probs, _ = absorption_split_exact(field, y, h, boundary)
                        for t_, q in probs.items():
                            oracle[t_] = oracle.get(t_, 0.0) + float(p * q)
                row = dense_row(ind, x)
                assert set(row) == {k for k, v in oracle.items() if v > 0}
                for y, p in row.items():
                    assert p == pytest.approx(oracle[y], abs=1e-12)

    def test_all_kinds_stochastic_and_reversible(self):
        insts = usable_instances(2, 4, MIXED, range(40))[:2]
        field, dec = insts[0]
        box = dec.box
        for kind, support in [
            ("full", box),
            ("induced", dec),
            ("lazy", dec),
            ("unit", dec),
        ]:
            chain = build_chain(field, support, kind, None if kind == "full" else ALPHA)
            assert chain.row_sum_error() <= 1e-12
            assert chain.detailed_balance_error() <= 1e-12 * chain.weights.max()

    def test_surface_touching_hole_rejected(self):
        field, box = box_field(2, 3)
        corner = (3, 3)
        patches = {
            ((2, 3), 0): 0.0625,  # edge (2,3)-(3,3)
            ((3, 2), 1): 0.0625,  # edge (3,2)-(3,3)
        }
        patched = field.with_patches(patches)
        dec = decompose(patched, alpha=ALPHA, box=box)
        assert not dec.on_giant(corner)
        with pytest.raises(ChainError, match="surface"):
            build_chain(patched, dec, "induced", ALPHA)

    def test_alpha_mismatch_rejected(self):
        field, box = box_field(2, 3)
        dec = decompose(field, alpha=ALPHA, box=box)
        with pytest.raises(ChainError, match="disagrees"):
            build_chain(field, dec, "unit", 0.25)

    def test_unknown_kind_rejected(self):
        field, box = box_field(2, 3)
        with pytest.raises(ChainError, match="kind"):
            build_chain(field, box, "jump")

    def test_full_requires_box_support(self):
        field, box = box_field(2, 3)
        dec = decompose(field, alpha=ALPHA, box=box)
        with pytest.raises(ChainError):
            build_chain(field, dec, "full")
        with pytest.raises(ChainError):
            build_chain(field, box, "unit", ALPHA)


# ---------------------------------------------------------------------------
# discrete-time kernel


class TestHeatKernel:
    def test_zero_steps_point_mass(self):
        field, box = box_field(2, 3)
        full = build_chain(field, box, "full")
        kv = heat_kernel(full, (1, -1), 0)
        assert kv.probability((1, -1)) == 1.0
        assert kv.mass() == 1.0

    def test_two_step_return_quarter(self):
        field, box = box_field(2, 4)
        full = build_chain(field, box, "full")
        assert heat_kernel(full, (0, 0), 2).probability((0, 0)) == pytest.approx(
            0.25, abs=1e-16
        )

    def test_return_is_binomial_product(self):
        # the planar unit walk is two independent one-dimensional walks
        # along the diagonals, so P^{2m}(0,0) = (C(2m,m)/4^m)^2
        field, box = box_field(2, 8)
        full = build_chain(field, box, "full")
        for m in (1, 2, 3):
            expected = (math.comb(2 * m, m) / 4.0**m) ** 2
            got = heat_kernel(full, (0, 0), 2 * m).probability((0, 0))
            assert got == pytest.approx(expected, abs=1e-15)

    def test_matches_rational_pushforward(self):
        field, box = box_field(2, 3, MIXED, seed=4)
        full = build_chain(field, box, "full")
        dist = {(0, 0): Fraction(1)}
        for _ in range(3):
            nxt = {}
            for u, p in dist.items():
                for v, q in transition_row_exact(field, u).items():
                    nxt[v] = nxt.get(v, Fraction(0)) + p * q
            dist = nxt
        kv = heat_kernel(full, (0, 0), 3)
        for v, p in dist.items():
            assert kv.probability(v) == pytest.approx(float(p), abs=1e-14)

    def test_negative_steps_rejected(self):
        field, box = box_field(2, 3)
        full = build_chain(field, box, "full")
        with pytest.raises(ChainError):
            heat_kernel(full, (0, 0), -1)


# ---------------------------------------------------------------------------
# continuous-time kernel


@pytest.fixture(scope="module")
def induced():
    insts = usable_instances(2, 4, MIXED, range(40))
    field, dec = insts[0]
    return build_chain(field, dec, "induced", ALPHA)


@pytest.fixture(scope="module")
def instance():
    return usable_instances(2, 4, MIXED, range(40))[0]


class TestContinuousKernel:
    def test_time_zero_identity(self, induced):
        kv = ct_heat_kernel(induced, (0, 0), 0.0)
        assert kv.probability((0, 0)) == 1.0

    def test_mass_conserved(self, induced):
        kv = ct_heat_kernel(induced, (0, 0), 5.0)
        assert kv.mass() == pytest.approx(1.0, abs=1e-12)
        assert kv.distribution.min() >= 0.0

    def test_matches_exponential_oracle(self, induced):
        t = 2.5
        gen = induced.matrix() - np.eye(induced.n_states)
        oracle = expm(t * gen)
        i = induced.state_index((0, 0))
        kv = ct_heat_kernel(induced, (0, 0), t)
        assert np.abs(kv.distribution - oracle[i]).max() < 1e-12
        qmat = ct_kernel_matrix(induced, t)
        assert np.abs(qmat - oracle / induced.weights[None, :]).max() < 1e-12

    def test_kernel_matrix_symmetric(self, induced):
        qmat = ct_kernel_matrix(induced, 3.0)
        assert np.abs(qmat - qmat.T).max() < 1e-14

    def test_semigroup_property(self, induced):
        q1 = ct_kernel_matrix(induced, 1.5)
        q2 = ct_kernel_matrix(induced, 2.5)
        q3 = ct_kernel_matrix(induced, 4.0)
        composed = q1 @ (induced.weights[:, None] * q2)
        assert np.abs(composed - q3).max() < 1e-12

    def test_positive_on_component(self, induced):
        kv = ct_heat_kernel(induced, (0, 0), 0.25)
        assert kv.values.min() > 0.0

    def test_discrete_semigroup_on_random_vectors(self, induced):
        mat = induced.matrix()
        m5 = np.linalg.matrix_power(mat, 5)
        m3 = np.linalg.matrix_power(mat, 3)
        m8 = np.linalg.matrix_power(mat, 8)
        rng = np.random.default_rng(0)
        for _ in range(10):
            v = rng.standard_normal(induced.n_states)
            assert np.abs(m8 @ v - m5 @ (m3 @ v)).max() <= 1e-10 * np.abs(v).max()

    def test_sup_nonincreasing_in_time(self, induced):
        # the base-point sup of the weight-normalized kernel can only
        # fall with time; the variance-bound constant relies on this
        sups = [
            ct_heat_kernel(induced, (0, 0), t).values.max()
            for t in (0.5, 1.0, 2.0, 4.0, 8.0, 16.0)
        ]
        assert all(b <= a + 1e-15 for a, b in zip(sups, sups[1:]))

    def test_term_count_controls_tail(self):
        from scipy.special import gammainc

        for t in (0.5, 3.0, 40.0):
            n = poisson_term_count(t, 1e-14)
            assert gammainc(n + 1, t) < 1e-14

    def test_negative_time_rejected(self, induced):
        with pytest.raises(ChainError):
            ct_heat_kernel(induced, (0, 0), -0.5)


# ---------------------------------------------------------------------------
# annulus return bound


class TestAnnulusBound:
    def test_line_walk_single_step_is_tight(self):
        field, box = box_field(1, 2)
        rep = annulus_lower_bound(field, box, 1)
        assert rep.lhs == pytest.approx(0.5, abs=1e-15)
        assert rep.rhs == pytest.approx(0.5, abs=1e-15)
        assert rep.holds

    def test_return_probability_matches_rational_oracle(self):
        field, box = box_field(2, 4, MIXED, seed=7)
        n = 2
        dist = {(0, 0): Fraction(1)}
        for _ in range(2 * n):
            nxt = {}
            for u, p in dist.items():
                for v, q in transition_row_exact(field, u).items():
                    nxt[v] = nxt.get(v, Fraction(0)) + p * q
            dist = nxt
        rep = annulus_lower_bound(field, box, n)
        assert rep.lhs == pytest.approx(float(dist[(0, 0)]), abs=1e-14)

    def test_masses_partition_the_midtime_law(self):
        field, box = box_field(2, 6, MIXED, seed=3)
        rep = annulus_lower_bound(field, box, 3)
        assert sum(rep.masses) == pytest.approx(1.0, abs=1e-12)
        assert all(m >= 0.0 for m in rep.masses)

    def test_holds_on_random_fields(self):
        for seed in range(10):
            field, box = box_field(2, 6, MIXED, seed=seed)
            rep = annulus_lower_bound(field, box, 3)
            assert rep.gap >= -1e-10

    def test_small_box_rejected(self):
        field, box = box_field(2, 3)
        with pytest.raises(ChainError, match="too small"):
            annulus_lower_bound(field, box, 2)

    def test_periodic_box_rejected(self):
        field, box = box_field(2, 6, boundary="periodic")
        with pytest.raises(ChainError):
            annulus_lower_bound(field, box, 2)


# ---------------------------------------------------------------------------
# killed Green's functions


def three_state_path():
    states = ((-1,), (0,), (1,))
    rows = np.array([[0.0, 1.0, 0.0], [0.5, 0.0, 0.5], [0.0, 1.0, 0.0]])
    weights = np.array([1.0, 2.0, 1.0])
    return FiniteChain(
        kind="full",
        d=1,
        states=states,
        kernel=sparse.csr_matrix(rows),
        weights=weights,
    )


def four_state_star():
    # hub with three spokes of unit conductance
    states = ((0, 0), (1, 0), (-1, 0), (0, 1))
    rows = np.array(
        [
            [0.0, 1 / 3, 1 / 3, 1 / 3],
            [1.0, 0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
        ]
    )
    weights = np.array([3.0, 1.0, 1.0, 1.0])
    return FiniteChain(
        kind="full",
        d=2,
        states=states,
        kernel=sparse.csr_matrix(rows),
        weights=weights,
    )


class TestGreens:
    def test_path_killed_at_end_hand_values(self):
        g = greens(three_state_path(), [(1,)])
        assert np.allclose(g.visit_matrix, [[2.0, 2.0], [1.0, 2.0]], atol=1e-14)
        assert g.visits((-1,), (0,)) == pytest.approx(2.0, abs=1e-14)
        assert g.density((-1,), (0,)) == pytest.approx(1.0, abs=1e-14)
        assert g.density((0,), (-1,)) == pytest.approx(1.0, abs=1e-14)
        assert g.symmetry_error() < 1e-14

    def test_star_visit_counts_break_cauchy_schwarz(self):
        # expected visit counts are asymmetric under non-constant weights,
        # and their Cauchy-Schwarz comparison genuinely fails; the weight-
        # normalized density restores both
        g = greens(four_state_star(), [(0, 1)])
        expected = np.array([[3.0, 1.0, 1.0], [3.0, 2.0, 1.0], [3.0, 1.0, 2.0]])
        assert np.allclose(g.visit_matrix, expected, atol=1e-13)
        hub_visits = g.visits((1, 0), (0, 0))
        assert hub_visits > math.sqrt(
            g.visits((1, 0), (1, 0)) * g.visits((0, 0), (0, 0))
        )
        assert g.cauchy_schwarz_excess() <= 1e-14
        assert g.min_eigenvalue() >= -1e-12

    def test_density_form_well_behaved_on_random_instances(self):
        insts = usable_instances(2, 4, MIXED, range(40))[:5]
        rng = np.random.default_rng(5)
        for field, dec in insts:
            chain = build_chain(field, dec, "induced", ALPHA)
            killed = [
                chain.states[i]
                for i in rng.choice(chain.n_states, size=3, replace=False)
            ]
            g = greens(chain, killed)
            scale = np.abs(g.visit_matrix).max()
            assert g.symmetry_error() <= 1e-12 * scale
            assert g.min_eigenvalue() >= -1e-12 * scale
            assert g.cauchy_schwarz_excess() <= 1e-12 * scale

    def test_killing_more_states_reduces_visits(self):
        insts = usable_instances(2, 4, MIXED, range(40))[:1]
        field, dec = insts[0]
        chain = build_chain(field, dec, "induced", ALPHA)
        small = greens(chain, [chain.states[0]])
        big = greens(chain, [chain.states[0], chain.states[7]])
        common = [s for s in big.alive_states]
        for x in common[:10]:
            for y in common[:10]:
                assert big.visits(x, y) <= small.visits(x, y) + 1e-12

    def test_empty_killed_set_rejected(self):
        with pytest.raises(GreensError, match="empty"):
            greens(three_state_path(), [])

    def test_killing_everything_rejected(self):
        with pytest.raises(GreensError):
            greens(three_state_path(), [(-1,), (0,), (1,)])

    def test_function_supported_on_killed_rejected(self):
        g = greens(three_state_path(), [(1,)])
        bad = np.array([0.0, 1.0, 1.0])
        with pytest.raises(GreensError, match="vanish"):
            quad_form(g, bad)

    def test_quad_form_zero_function(self):
        g = greens(three_state_path(), [(1,)])
        assert quad_form(g, np.zeros(2)) == 0.0
        assert quad_form(g, {}, form="density") == 0.0

    def test_quad_form_against_direct_sum(self):
        g = greens(three_state_path(), [(1,)])
        f = {(-1,): 2.0, (0,): -1.0}
        direct = (
            4.0 * g.visits((-1,), (-1,))
            - 2.0 * g.visits((-1,), (0,))
            - 2.0 * g.visits((0,), (-1,))
            + 1.0 * g.visits((0,), (0,))
        )
        assert quad_form(g, f) == pytest.approx(direct, abs=1e-13)

    def test_unknown_form_rejected(self):
        g = greens(three_state_path(), [(1,)])
        with pytest.raises(GreensError, match="form"):
            quad_form(g, np.zeros(2), form="spectral")

    def test_iterative_solver_matches_dense(self, monkeypatch):
        # the package root re-exports the greens() function, shadowing the
        # submodule attribute, so fetch the module itself for monkeypatching
        greens_mod = importlib.import_module("rcmlab.greens")

        field, box = box_field(2, 4, MIXED, seed=13)
        full = build_chain(field, box, "full")
        killed = [(4, 4), (-4, -4), (0, 4)]
        dense = greens(full, killed)
        monkeypatch.setattr(greens_mod, "DENSE_SOLVE_LIMIT", 10)
        iterative = greens_mod.greens(full, killed)
        scale = np.abs(dense.visit_matrix).max()
        assert (
            np.abs(dense.visit_matrix - iterative.visit_matrix).max()
            <= 1e-9 * scale
        )

    def test_growing_the_box_grows_visits(self):
        # Dirichlet killing at the surface: a larger box can only add
        # return routes, so every common visit count increases
        ops = []
        for L in (3, 5):
            field, box = box_field(2, L, MIXED, seed=21)
            full = build_chain(field, box, "full")
            shell = [v for v in full.states if box.on_surface(v)]
            ops.append(greens(full, shell))
        small, big = ops
        for x in small.alive_states:
            for y in small.alive_states:
                assert big.visits(x, y) >= small.visits(x, y) - 1e-12


class TestGreensIdentity:
    def test_uniform_field_identity_is_exact(self):
        # with all conductances equal the delayed and unit walks coincide
        field, box = box_field(2, 3)
        dec = decompose(field, alpha=1.0, box=box)
        rep = greens_identity_check(field, dec, 1.0, [(3, 3), (0, 0)])
        assert rep.max_rel_error < 1e-13
        assert rep.generator_error < 1e-13

    def test_single_bond_hand_solve(self):
        # two states joined by a strong bond, killed at one of them: the
        # delayed walk leaves x at rate alpha/pi(x) per step, so it makes
        # pi(x)/alpha visits for the unit walk's single visit
        field, box = box_field(1, 1, MIXED, seed=0)
        dec = decompose(field, alpha=ALPHA, box=box)
        rep = greens_identity_check(field, dec, ALPHA, [(1,)])
        assert rep.ok
        lazy = build_chain(field, dec, "lazy", ALPHA)
        g_lazy = greens(lazy, [(1,)])
        x = (-1,)
        pi_per_alpha = field.vertex_weight((0,)) / ALPHA
        # visits multiply along: start column scaling only affects targets
        assert g_lazy.visits((0,), (0,)) == pytest.approx(
            pi_per_alpha, rel=1e-12
        )
        assert rep.generator_error < 1e-14

    def test_identity_on_random_instances(self):
        insts = usable_instances(2, 4, MIXED, range(60))[:10]
        rng = np.random.default_rng(11)
        assert len(insts) == 10
        for field, dec in insts:
            chain = build_chain(field, dec, "unit", ALPHA)
            killed = [
                chain.states[i]
                for i in rng.choice(chain.n_states, size=2, replace=False)
            ]
            rep = greens_identity_check(field, dec, ALPHA, killed)
            assert rep.ok
            assert rep.generator_error < 1e-12


class TestGreensComparison:
    def test_indicator_function_bounded(self, instance):
        field, dec = instance
        chain = build_chain(field, dec, "induced", ALPHA)
        f = {v: 1.0 for v in chain.states[:6]}
        rep = greens_comparison_check(field, dec, ALPHA, [chain.states[-1]], f)
        assert rep.holds
        assert rep.operator_order_holds
        assert rep.operator_gap >= -1e-10

    def test_random_nonnegative_functions(self, instance):
        field, dec = instance
        chain = build_chain(field, dec, "induced", ALPHA)
        rng = np.random.default_rng(2)
        killed = [chain.states[3]]
        n_alive = chain.n_states - 1
        for _ in range(25):
            f = rng.uniform(0.0, 1.0, size=n_alive)
            rep = greens_comparison_check(field, dec, ALPHA, killed, f)
            assert rep.holds

    def test_zero_function(self, instance):
        field, dec = instance
        chain = build_chain(field, dec, "induced", ALPHA)
        rep = greens_comparison_check(
            field, dec, ALPHA, [chain.states[0]], np.zeros(chain.n_states - 1)
        )
        assert rep.lhs == 0.0 and rep.rhs == 0.0

    def test_negative_function_rejected(self, instance):
        field, dec = instance
        chain = build_chain(field, dec, "induced", ALPHA)
        f = np.full(chain.n_states - 1, -1.0)
        with pytest.raises(GreensError, match="nonnegative"):
            greens_comparison_check(field, dec, ALPHA, [chain.states[0]], f)


class TestFkQuadForm:
    def test_no_traps_gives_zero(self):
        field, box = box_field(2, 12)
        dec = decompose(field, alpha=ALPHA, box=box)
        rep = fk_quadform(field, dec, n=16, k=4, killed_set=[(12, 12)])
        assert rep.value == 0.0 and rep.support == ()

    def test_planted_trap_support_and_value(self):
        field, box = box_field(2, 12)
        # plant one strong bond ((11,0),(11,1)) whose six surrounding
        # edges sit inside the scale-16 window [1/16, 2/16]; its endpoints
        # pinch off the giant, and the six vertices around them are the
        # flagged ones
        fence = 0.07
        patches = {
            ((10, 0), 0): fence,
            ((11, 0), 0): fence,
            ((11, -1), 1): fence,
            ((10, 1), 0): fence,
            ((11, 1), 0): fence,
            ((11, 1), 1): fence,
        }
        patched = field.with_patches(patches)
        assert brute_vertex_flag(patched, (12, 0), 16)
        assert not brute_vertex_flag(patched, (0, 0), 16)
        dec = decompose(patched, alpha=ALPHA, box=box)
        assert not dec.on_giant((11, 0)) and not dec.on_giant((11, 1))
        rep = fk_quadform(patched, dec, n=16, k=4, killed_set=[(-12, -12)])
        lo, hi = annulus_bounds(4, inner=True)
        assert all(lo <= sup_norm(v) <= hi for v in rep.support)
        assert sorted(rep.support) == [(11, -1), (11, 2), (12, 0), (12, 1)]
        # independent recomputation through the Green operator
        chain = build_chain(patched, dec, "induced", ALPHA)
        g = greens(chain, [(-12, -12)])
        f = {v: 1.0 for v in rep.support}
        assert rep.value == pytest.approx(quad_form(g, f), rel=1e-12)
        assert rep.near + rep.far == pytest.approx(rep.value, rel=1e-12)
        assert rep.value > 0.0

    def test_oracle_agreement_on_support(self):
        # the box must exceed the annulus by the oracle's probe reach
        sparse_law = law_from_dict({"atoms": [[1.0, 0.9], [0.07, 0.1]]})
        hits = 0
        for seed in (0, 1, 2):
            field, box = box_field(2, 16, sparse_law, seed=seed)
            dec = decompose(field, alpha=ALPHA, box=box)
            chain = build_chain(field, dec, "induced", ALPHA)
            rep = fk_quadform(field, dec, n=16, k=4, killed_set=[(0, 0)])
            lo, hi = annulus_bounds(4, inner=True)
            expected = [
                v
                for v in chain.states
                if lo <= sup_norm(v) <= hi
                and v != (0, 0)
                and brute_vertex_flag(field, v, 16)
            ]
            assert sorted(rep.support) == sorted(expected)
            hits += len(expected)
        assert hits >= 0  # agreement is the assertion; hits may be zero

    def test_small_scale_rejected(self):
        field, box = box_field(2, 12)
        dec = decompose(field, alpha=ALPHA, box=box)
        with pytest.raises(GreensError):
            fk_quadform(field, dec, n=2, k=4, killed_set=[(0, 0)])


class TestDecayProfile:
    def test_matches_direct_powers(self):
        field, box = box_field(2, 5, MIXED, seed=6)
        full = build_chain(field, box, "full")
        prof = diagonal_decay_profile(full, (0, 0), 8)
        mat = full.matrix()
        mu = np.zeros(full.n_states)
        mu[full.state_index((0, 0))] = 1.0
        for ell in range(1, 9):
            mu = mu @ mat
            assert prof.value(ell) == pytest.approx(
                ell * mu.max(), rel=1e-13
            )

    def test_uniform_walk_plateau_near_invariant_density(self):
        # on a lattice the scaled sup approaches a positive constant
        field, box = box_field(2, 10)
        full = build_chain(field, box, "full")
        prof = diagonal_decay_profile(full, (0, 0), 20)
        assert 0.3 < prof.value(20) < 1.5

    def test_out_of_range_probe_rejected(self):
        field, box = box_field(2, 3)
        full = build_chain(field, box, "full")
        prof = diagonal_decay_profile(full, (0, 0), 4)
        with pytest.raises(ChainError):
            prof.value(5)
