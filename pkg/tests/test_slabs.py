import math

import numpy as np
import pytest

from rcmlab.cluster import decompose
from rcmlab.field import ConductanceField
from rcmlab.lattice import Box, LatticeSpec, annulus_members
from rcmlab.law import law_from_dict, uniform_law
from rcmlab.slabs import (
    SlabError,
    density_statistics,
    slab_cluster_count,
    slab_points,
)
from rcmlab.traps import trap_patches

from _oracles import flood_components


def boxed(d, L, law, seed=0):
    spec = LatticeSpec(d=d, mode="box", box=Box(d=d, L=L))
    return ConductanceField(spec, law, seed, storage="dense")


class TestSlabPoints:
    def test_marked_sublattice(self):
        pts = slab_points(d=2, M=4, k=5, box=Box(d=2, L=31))
        for x in pts:
            assert all(c % 3 == 0 for c in x)
            assert x[0] % 12 == 0
        # matches a direct filter of the inner annulus
        want = [
            x
            for x in annulus_members(2, 5, inner=True)
            if all(c % 3 == 0 for c in x) and x[0] % 12 == 0
        ]
        assert sorted(pts) == sorted(want)

    def test_box_too_small_errors(self):
        with pytest.raises(SlabError):
            slab_points(d=2, M=4, k=5, box=Box(d=2, L=16))

    def test_m_must_be_dyadic(self):
        with pytest.raises(SlabError):
            slab_points(d=2, M=3, k=5, box=Box(d=2, L=31))


class TestSlabClusterCount:
    def test_homogeneous_counts_all_points(self):
        f = boxed(2, 31, uniform_law())
        q = slab_cluster_count(f, alpha=0.5, M=4, k=5)
        assert q == len(slab_points(2, 4, 5, f.box))
        assert q > 0

    def test_all_weak_counts_none(self):
        weak = law_from_dict({"atoms": [[0.25, 1.0]]})
        f = boxed(2, 31, weak)
        assert slab_cluster_count(f, alpha=0.5, M=4, k=5) == 0

    def test_random_field_matches_brute_recount(self):
        law = law_from_dict({"atoms": [[1.0, 0.75], [0.25, 0.25]]})
        for seed in (1, 2, 3):
            f = boxed(2, 31, law, seed=seed)
            got = slab_cluster_count(f, alpha=0.5, M=4, k=5)
            # oracle: per slab, flood-fill the slab-restricted strong graph
            # and keep points on its largest component
            count = 0
            for x in slab_points(2, 4, 5, f.box):
                ell = x[0] // 12
                lo = 12 * ell
                slab_verts = [
                    v for v in f.box.vertices() if lo <= v[0] <= lo + 3
                ]

                def connected(u, v):
                    return f.edge_value_between(u, v) >= 0.5

                labels, comps = flood_components(slab_verts, connected)
                sizes = [len(c) for c in comps]
                # ties: smallest component id = first reached in vertex order
                best_size = max(sizes)
                best = min(i for i, s in enumerate(sizes) if s == best_size)
                if labels[x] == best:
                    count += 1
            assert got == count, seed

    def test_ratio_stabilizes_homogeneous(self):
        f = boxed(2, 31, uniform_law())
        q = slab_cluster_count(f, alpha=0.5, M=4, k=5)
        inner = list(annulus_members(2, 5, inner=True))
        marked = slab_points(2, 4, 5, f.box)
        assert q / len(inner) == len(marked) / len(inner)


class TestDensityStatistics:
    def test_no_traps_all_zero(self):
        f = boxed(2, 6, uniform_law())
        rep = density_statistics(f, n=8, window_sizes=[1, 2], pair_cutoff=1.0)
        assert rep.flagged_count == 0
        assert rep.pair_sum == 0.0
        for row in rep.windows:
            assert row.max_density == 0.0 and row.min_density == 0.0

    def test_planted_traps_density_rate(self):
        # a single planted trap in d=2 flags its six outer neighbours
        f = boxed(2, 6, uniform_law()).with_patches(
            trap_patches((0, 0), (1, 0), 8)
        )
        rep = density_statistics(f, n=8, window_sizes=[6], pair_cutoff=1.0)
        assert rep.flagged_count == 6
        (row,) = rep.windows
        # one window covering the whole box
        assert row.positions == 1
        assert row.max_density == row.min_density == 6 / 13 ** 2

    def test_pair_sum_two_traps_at_distance_r(self):
        # two flagged vertices exactly distance r apart, d=4 so the kernel
        # is 1/(1 + r^2)
        d, n = 4, 16
        f = ConductanceField(
            LatticeSpec(d=d, mode="box", box=Box(d=d, L=9)),
            uniform_law(),
            0,
            storage="dense",
        )
        y1 = (-4, 0, 0, 0)
        z1 = (-5, 0, 0, 0)
        y2 = (4, 0, 0, 0)
        z2 = (5, 0, 0, 0)
        patches = trap_patches(y1, z1, n)
        patches.update(trap_patches(y2, z2, n))
        g = f.with_patches(patches)
        rep = density_statistics(
            g,
            n=n,
            window_sizes=[1],
            pair_cutoff=6.0,
            region=[(-3, 0, 0, 0), (3, 0, 0, 0)],
        )
        assert rep.flagged_count == 2
        r = 6.0
        assert rep.pair_sum == pytest.approx(2.0 / (1.0 + r ** (d - 2)), abs=1e-15)

    def test_window_exceeding_box_errors(self):
        f = boxed(2, 3, uniform_law())
        with pytest.raises(SlabError):
            density_statistics(f, n=8, window_sizes=[4], pair_cutoff=1.0)

    def test_window_counts_match_direct_average(self):
        law = law_from_dict({"atoms": [[1.0, 0.35], [0.22, 0.45], [0.05, 0.2]]})
        f = boxed(2, 5, law, seed=11)
        rep = density_statistics(f, n=8, window_sizes=[2], pair_cutoff=2.0)
        (row,) = rep.windows
        flags = rep.indicator
        # direct sliding-window recount
        densities = []
        for cx in range(-3, 4):
            for cy in range(-3, 4):
                cells = [
                    (cx + i, cy + j)
                    for i in range(-2, 3)
                    for j in range(-2, 3)
                ]
                densities.append(sum(flags[c] for c in cells) / 25)
        assert row.positions == len(densities)
        assert row.max_density == pytest.approx(max(densities))
        assert row.min_density == pytest.approx(min(densities))
        assert row.mean_density == pytest.approx(float(np.mean(densities)))
