import numpy as np
import pytest

from rcmlab.field import ConductanceField, FieldError
from rcmlab.lattice import Box, LatticeSpec
from rcmlab.law import law_from_dict, uniform_law
from rcmlab.traps import (
    candidate_edges_near,
    designated_trap,
    directed_trap_indicator,
    is_trap_edge,
    surrounding_edges,
    trap_census,
    trap_edge_scan,
    trap_patches,
    trap_record,
)

from _oracles import brute_trap_check, brute_vertex_flag


def ones_field(d):
    return ConductanceField(LatticeSpec(d=d, mode="lazy"), uniform_law(), 0)


def planted(d, y, z, n, strong=1.0, weak=None):
    return ones_field(d).with_patches(trap_patches(y, z, n, strong=strong, weak=weak))


class TestSurroundingEdges:
    def test_count_is_4d_minus_2(self):
        for d in (1, 2, 3, 4):
            tail = (0,) * d
            assert len(surrounding_edges(tail, 0)) == 4 * d - 2

    def test_excludes_the_edge_itself(self):
        keys = surrounding_edges((0, 0), 0)
        assert ((0, 0), 0) not in keys

    def test_matches_brute_incident_sets(self):
        from _oracles import edges_incident

        y, z = (2, -1, 0), (3, -1, 0)
        got = set()
        for tail, axis in surrounding_edges(y, 0):
            head = tuple(c + 1 if i == axis else c for i, c in enumerate(tail))
            got.add(frozenset((tail, head)))
        want = (edges_incident(y) | edges_incident(z)) - {frozenset((y, z))}
        assert got == want


class TestIsTrapEdge:
    def test_homogeneous_has_no_traps(self):
        f = ones_field(2)
        assert not is_trap_edge(f, (0, 0), 0, 8)

    def test_planted_trap_detected(self):
        for n in (8, 16, 32):
            f = planted(2, (0, 0), (1, 0), n)
            assert is_trap_edge(f, (0, 0), 0, n)
            assert brute_trap_check(f, (0, 0), (1, 0), n)

    def test_fence_value_out_of_window_rejected(self):
        # one fence edge just above 2/n breaks the trap
        n = 8
        f = ones_field(2)
        patches = trap_patches((0, 0), (1, 0), n)
        patches[((1, 0), 1)] = 2.0 / n + 1e-9
        g = f.with_patches(patches)
        assert not is_trap_edge(g, (0, 0), 0, n)
        assert not brute_trap_check(g, (0, 0), (1, 0), n)

    def test_weak_strong_edge_rejected(self):
        n = 8
        f = ones_field(2)
        patches = trap_patches((0, 0), (1, 0), n)
        patches[((0, 0), 0)] = 0.49
        g = f.with_patches(patches)
        assert not is_trap_edge(g, (0, 0), 0, n)

    def test_window_endpoints_accepted(self):
        n = 16
        for w in (1.0 / n, 2.0 / n):
            f = planted(2, (0, 0), (1, 0), n, weak=w)
            assert is_trap_edge(f, (0, 0), 0, n)

    def test_scale_validation(self):
        f = ones_field(2)
        with pytest.raises(ValueError):
            is_trap_edge(f, (0, 0), 0, 3)

    def test_strict_boundary_error(self):
        law = uniform_law()
        box = LatticeSpec(d=2, mode="box", box=Box(d=2, L=2))
        f = ConductanceField(box, law, 0, storage="dense")
        with pytest.raises(FieldError):
            is_trap_edge(f, (2, 0), 0, 8, strict=True)  # edge leaves box
        with pytest.raises(FieldError):
            is_trap_edge(f, (1, 2), 0, 8, strict=True)  # fence leaves box
        assert is_trap_edge(f, (1, 2), 0, 8, strict=False) is False


class TestCensus:
    def test_homogeneous_census_empty(self):
        f = ones_field(2)
        region = [(i, j) for i in range(-2, 3) for j in range(-2, 3)]
        census = trap_census(f, region, 8)
        assert census.records == ()
        assert not any(census.indicator.values())

    def test_hand_built_flags_exactly_outer_neighbors(self):
        # trap on ((0,0),(1,0)) with fence 1.5/n: the six outer neighbours
        n = 8
        f = planted(2, (0, 0), (1, 0), n, weak=1.5 / n)
        region = [(i, j) for i in range(-3, 5) for j in range(-3, 4)]
        census = trap_census(f, region, n)
        expected = {(-1, 0), (0, 1), (0, -1), (2, 0), (1, 1), (1, -1)}
        assert set(census.flagged) == expected
        for rec in census.records:
            assert rec.tail == (0, 0) and rec.axis == 0
            assert rec.adjacent_vertex in expected
            assert rec.entry_endpoint() in {(0, 0), (1, 0)}

    def test_one_spoiled_fence_edge_empties_census(self):
        n = 8
        f = ones_field(2)
        patches = trap_patches((0, 0), (1, 0), n, weak=1.5 / n)
        patches[((1, 0), 1)] = 3.0 / n
        g = f.with_patches(patches)
        region = [(i, j) for i in range(-3, 5) for j in range(-3, 4)]
        census = trap_census(g, region, n)
        assert census.records == ()

    def test_endpoints_not_flagged(self):
        f = planted(2, (0, 0), (1, 0), 8)
        census = trap_census(f, [(0, 0), (1, 0)], 8)
        assert not any(census.indicator.values())

    def test_census_vertex_outside_dense_box_errors(self):
        law = uniform_law()
        spec = LatticeSpec(d=2, mode="box", box=Box(d=2, L=3))
        f = ConductanceField(spec, law, 0, storage="dense")
        with pytest.raises(FieldError):
            trap_census(f, [(4, 0)], 8)

    def test_tie_break_is_canonical_order(self):
        # two traps adjacent to the same vertex x = (0,0): designated trap
        # must be the lexicographically smallest canonical key
        n = 8
        f = ones_field(1)
        # d=1: traps are edges with both outer edges weak
        patches = {}
        patches.update(trap_patches((1,), (2,), n))
        patches.update(trap_patches((-2,), (-1,), n))
        g = f.with_patches(patches)
        rec = designated_trap(g, (0,), n)
        assert rec is not None
        assert rec.tail == (-2,)

    def test_randomized_suite_matches_brute_force(self):
        # 1000 random small fields, every vertex of a 3x3 core cross-checked
        law = law_from_dict(
            {"atoms": [[1.0, 0.35], [0.22, 0.45], [0.05, 0.2]]}
        )
        n = 8  # window [0.125, 0.25] captures the 0.22 atom
        spec = LatticeSpec(d=2, mode="lazy")
        core = [(i, j) for i in range(-1, 2) for j in range(-1, 2)]
        flagged = 0
        for seed in range(1000):
            f = ConductanceField(spec, law, seed)
            census = trap_census(f, core, n)
            for x in core:
                want = brute_vertex_flag(f, x, n)
                assert census.indicator[x] == want, (seed, x)
                flagged += int(want)
        assert flagged > 0, "suite never produced a trap; weak law too thin"


class TestEdgeScan:
    def test_finds_planted_edges(self):
        n = 16
        f = planted(3, (0, 0, 0), (0, 1, 0), n)
        tails = [(i, j, k) for i in range(-2, 3) for j in range(-2, 3) for k in range(-2, 3)]
        recs = trap_edge_scan(f, tails, n)
        assert len(recs) == 1
        assert recs[0].tail == (0, 0, 0) and recs[0].axis == 1
        assert recs[0].strong_value == 1.0
        assert len(recs[0].fence) == 4 * 3 - 2


class TestDirected:
    def test_homogeneous_false(self):
        assert not directed_trap_indicator(ones_field(2), (0, 0), 8)

    def test_oriented_trap_true(self):
        # trap edge (x - 2e1, x - e1) for x = (0, 0)
        f = planted(2, (-2, 0), (-1, 0), 8)
        assert directed_trap_indicator(f, (0, 0), 8)
        # membership in the undirected census too
        assert designated_trap(f, (0, 0), 8) is not None

    def test_wrong_side_false(self):
        # trap at (x + e1, x + 2e1) must not fire the directed indicator
        f = planted(2, (1, 0), (2, 0), 8)
        assert not directed_trap_indicator(f, (0, 0), 8)
        assert designated_trap(f, (0, 0), 8) is not None  # undirected sees it

    def test_directed_implies_undirected(self):
        law = law_from_dict({"atoms": [[1.0, 0.4], [0.2, 0.6]]})
        spec = LatticeSpec(d=2, mode="lazy")
        hits = 0
        for seed in range(400):
            f = ConductanceField(spec, law, seed)
            if directed_trap_indicator(f, (0, 0), 8):
                hits += 1
                assert designated_trap(f, (0, 0), 8) is not None
        assert hits > 0


class TestTrapPatches:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            trap_patches((0, 0), (1, 0), 8, strong=0.4)
        with pytest.raises(ValueError):
            trap_patches((0, 0), (1, 0), 8, weak=0.3)

    def test_full_patch_is_a_trap(self):
        f = planted(4, (0, 0, 0, 0), (0, 0, 0, 1), 64)
        assert is_trap_edge(f, (0, 0, 0, 0), 3, 64)

    def test_candidate_edges_count(self):
        # 2d(2d-1) candidates around any vertex
        for d in (1, 2, 3):
            x = (0,) * d
            cands = list(candidate_edges_near(x))
            assert len(cands) == len(set(cands)) == 2 * d * (2 * d - 1)
